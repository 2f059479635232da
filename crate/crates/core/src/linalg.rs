//! Small dense linear-algebra helpers shared by the kernels, filters and EM code.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub(crate) const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Innovation covariances with a (estimated) condition number above this are
/// rejected as numerically singular.
pub const MAX_CONDITION: f64 = 1e12;

const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const PADE9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
// Largest 1-norm for which each Padé degree meets unit roundoff in double precision.
const THETA: [(usize, f64); 4] = [
    (3, 1.495585217958292e-2),
    (5, 2.53939833006323e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068),
];
const THETA13: f64 = 5.371920351148152;

/// Matrix exponential by scaling and squaring with diagonal Padé approximants
/// (degrees 3, 5, 7, 9, 13 chosen from the 1-norm).
pub fn expm(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !m.is_square() {
        return Err(Error::Shape(format!(
            "matrix exponential needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let n = m.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::degenerate("matrix exponential of non-finite matrix"));
    }
    let norm = one_norm(m);
    let ident = DMatrix::<f64>::identity(n, n);
    if norm == 0.0 {
        return Ok(ident);
    }

    for &(degree, theta) in &THETA {
        if norm <= theta {
            let (u, v) = pade_low(m, degree, &ident);
            return pade_solve(&u, &v);
        }
    }

    let s = (norm / THETA13).log2().ceil().max(0.0) as i32;
    let a = m / 2f64.powi(s);
    let b = &PADE13;
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let inner_u = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9])
        + &a6 * b[7]
        + &a4 * b[5]
        + &a2 * b[3]
        + &ident * b[1];
    let u = &a * inner_u;
    let v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8])
        + &a6 * b[6]
        + &a4 * b[4]
        + &a2 * b[2]
        + &ident * b[0];
    let mut r = pade_solve(&u, &v)?;
    for _ in 0..s {
        r = &r * &r;
    }
    Ok(r)
}

fn pade_low(a: &DMatrix<f64>, degree: usize, ident: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let b: &[f64] = match degree {
        3 => &PADE3,
        5 => &PADE5,
        7 => &PADE7,
        _ => &PADE9,
    };
    let a2 = a * a;
    let mut power = ident.clone();
    let mut u_inner = ident * b[1];
    let mut v = ident * b[0];
    for j in 1..=degree / 2 {
        power = &power * &a2;
        u_inner += &power * b[2 * j + 1];
        v += &power * b[2 * j];
    }
    (a * u_inner, v)
}

fn pade_solve(u: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let denom = v - u;
    let numer = v + u;
    denom
        .lu()
        .solve(&numer)
        .ok_or_else(|| Error::degenerate("Padé denominator in matrix exponential"))
}

pub(crate) fn one_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn block_diag(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(*b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Kronecker sum `A ⊕ B = A ⊗ I + I ⊗ B`.
pub fn kron_sum(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let ia = DMatrix::<f64>::identity(a.nrows(), a.nrows());
    let ib = DMatrix::<f64>::identity(b.nrows(), b.nrows());
    a.kronecker(&ib) + ia.kronecker(b)
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    symmetrize(m)
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Symmetric square root factor `L` with `L Lᵀ = M` for a PSD matrix; negative
/// eigenvalues from roundoff are clamped to zero.
pub fn psd_factor(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = symmetrize(m).symmetric_eigen();
    let mut vecs = eig.eigenvectors;
    for (j, lambda) in eig.eigenvalues.iter().enumerate() {
        let scale = lambda.max(0.0).sqrt();
        vecs.column_mut(j).scale_mut(scale);
    }
    vecs
}

/// Log-density of a zero-mean Gaussian evaluated at `v` with covariance `s`.
///
/// Fails when `s` is not positive definite or its estimated condition number
/// exceeds [`MAX_CONDITION`].
pub fn gaussian_log_density(v: &DVector<f64>, s: &DMatrix<f64>) -> Result<f64> {
    let n = v.len();
    if n == 0 {
        return Ok(0.0);
    }
    let chol = checked_cholesky(s)?;
    let l = chol.l_dirty();
    let mut logdet = 0.0;
    for i in 0..n {
        logdet += l[(i, i)].ln();
    }
    let white = chol
        .l()
        .solve_lower_triangular(v)
        .ok_or_else(|| Error::degenerate("innovation covariance"))?;
    Ok(-0.5 * (n as f64 * LN_2PI + 2.0 * logdet + white.norm_squared()))
}

pub(crate) fn checked_cholesky(
    s: &DMatrix<f64>,
) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let chol = s
        .clone()
        .cholesky()
        .ok_or_else(|| Error::degenerate("innovation covariance (not positive definite)"))?;
    let l = chol.l_dirty();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for i in 0..s.nrows() {
        let d = l[(i, i)];
        lo = lo.min(d);
        hi = hi.max(d);
    }
    if !(lo > 0.0) || (hi / lo).powi(2) > MAX_CONDITION {
        return Err(Error::degenerate(format!(
            "innovation covariance (condition estimate {:e})",
            (hi / lo).powi(2)
        )));
    }
    Ok(chol)
}

pub(crate) fn scalar_log_density(v: f64, var: f64) -> f64 {
    -0.5 * (LN_2PI + var.ln() + v * v / var)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn taylor_expm(m: &DMatrix<f64>) -> DMatrix<f64> {
        // Oracle: scale down, sum 30 Taylor terms, square back up.
        let s = 8;
        let a = m / 2f64.powi(s);
        let n = m.nrows();
        let mut term = DMatrix::<f64>::identity(n, n);
        let mut sum = term.clone();
        for k in 1..30 {
            term = &term * &a / k as f64;
            sum += &term;
        }
        for _ in 0..s {
            sum = &sum * &sum;
        }
        sum
    }

    #[test]
    fn expm_of_zero_is_identity() {
        let z = DMatrix::<f64>::zeros(3, 3);
        assert_eq!(expm(&z).unwrap(), DMatrix::identity(3, 3));
    }

    #[test]
    fn expm_of_diagonal() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![0.3, -2.0]));
        let e = expm(&m).unwrap();
        assert!((e[(0, 0)] - 0.3f64.exp()).abs() < 1e-15);
        assert!((e[(1, 1)] - (-2.0f64).exp()).abs() < 1e-15);
        assert_eq!(e[(0, 1)], 0.0);
    }

    #[test]
    fn expm_rotation_by_pi() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, -PI, PI, 0.0]);
        let e = expm(&m).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -1.0]);
        assert!((e - expected).amax() < 1e-10);
    }

    #[test]
    fn expm_rejects_non_square() {
        assert!(matches!(
            expm(&DMatrix::zeros(2, 3)),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn expm_matches_taylor_oracle_across_pade_degrees() {
        let base = DMatrix::from_row_slice(
            3,
            3,
            &[0.1, -0.4, 0.2, 0.3, -0.5, 0.05, -0.2, 0.1, -0.3],
        );
        for scale in [1e-3, 0.05, 0.3, 1.0, 3.0, 12.0] {
            let m = &base * scale;
            let got = expm(&m).unwrap();
            let want = taylor_expm(&m);
            let rel = (&got - &want).amax() / want.amax();
            assert!(rel < 1e-12, "scale {scale}: rel err {rel:e}");
        }
    }

    #[test]
    fn kron_sum_dimensions_and_values() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let b = DMatrix::from_row_slice(1, 1, &[10.0]);
        let k = kron_sum(&a, &b);
        assert_eq!(k, DMatrix::from_row_slice(2, 2, &[11.0, 2.0, 3.0, 14.0]));
    }

    #[test]
    fn gaussian_log_density_scalar() {
        let v = DVector::from_vec(vec![1.0]);
        let s = DMatrix::from_element(1, 1, 2.0);
        let got = gaussian_log_density(&v, &s).unwrap();
        let want = -0.5 * ((4.0 * PI).ln() + 0.5);
        assert!((got - want).abs() < 1e-14);
        assert!((got - scalar_log_density(1.0, 2.0)).abs() < 1e-14);
    }

    #[test]
    fn ill_conditioned_covariance_is_rejected() {
        let s = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1e-14]));
        let v = DVector::zeros(2);
        assert!(matches!(
            gaussian_log_density(&v, &s),
            Err(Error::Degenerate { .. })
        ));
    }
}
