use nalgebra::DMatrix;

use super::GaussianState;
use crate::error::{Error, Result};
use crate::kernels::DiscretizedTransition;
use crate::linalg::symmetrize;

/// Rauch–Tung–Striebel smoother.
///
/// `filtered[t]` is the filtering distribution at step `t` and
/// `transitions[t]` maps step `t-1` to `t` (`transitions[0]` is unused).
pub fn rts_smooth(
    filtered: &[GaussianState],
    transitions: &[DiscretizedTransition],
) -> Result<Vec<GaussianState>> {
    if filtered.len() != transitions.len() {
        return Err(Error::Shape(format!(
            "{} filtered states for {} transitions",
            filtered.len(),
            transitions.len()
        )));
    }
    let n = filtered.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut smoothed = filtered.to_vec();
    for t in (0..n - 1).rev() {
        let f = &filtered[t];
        let tr = &transitions[t + 1];
        let pred_mean = &tr.a * &f.mean;
        let pred_cov = symmetrize(&(&tr.a * &f.cov * tr.a.transpose() + &tr.q));
        let cross = &f.cov * tr.a.transpose();
        let gain = solve_right(&cross, &pred_cov).map_err(|e| e.at_time(t))?;
        let next = &smoothed[t + 1];
        let mean = &f.mean + &gain * (&next.mean - pred_mean);
        let cov = &f.cov + &gain * (&next.cov - pred_cov) * gain.transpose();
        smoothed[t] = GaussianState {
            mean,
            cov: symmetrize(&cov),
            last_accepted_time: f.last_accepted_time,
        };
    }
    Ok(smoothed)
}

/// `X = B S⁻¹` for symmetric PSD `S`, falling back to the pseudo-inverse when
/// `S` is singular (deterministic components such as a pure cosine).
fn solve_right(b: &DMatrix<f64>, s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(chol) = s.clone().cholesky() {
        let x = chol.solve(&b.transpose()).transpose();
        if x.iter().all(|v| v.is_finite()) {
            return Ok(x);
        }
    }
    let pinv = s
        .clone()
        .pseudo_inverse(1e-12 * s.amax().max(f64::MIN_POSITIVE))
        .map_err(|_| Error::degenerate("predicted covariance in smoother"))?;
    Ok(b * pinv)
}
