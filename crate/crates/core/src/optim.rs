//! Quasi-Newton minimization with finite-difference gradients.

/// Result of [`bfgs_minimize`]: the best point seen.
#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
}

const FD_STEP: f64 = 1e-5;
const ARMIJO: f64 = 1e-4;
const MAX_STEP: f64 = 2.0;

/// Minimize `f` with BFGS, central-difference gradients and a backtracking
/// line search, for at most `max_iters` outer iterations. Non-finite
/// objective values are treated as `+∞`, so the line search backs away from
/// them; the best finite iterate is always returned.
pub fn bfgs_minimize(f: impl Fn(&[f64]) -> f64, x0: &[f64], max_iters: usize) -> Minimum {
    let eval = |x: &[f64]| {
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut fx = eval(&x);
    let mut best = Minimum {
        x: x.clone(),
        value: fx,
        iterations: 0,
    };
    if !fx.is_finite() || n == 0 {
        return best;
    }
    let mut g = gradient(&eval, &x, fx);
    let mut h = identity(n);
    for iter in 1..=max_iters {
        best.iterations = iter;
        if g.iter().any(|v| !v.is_finite()) || norm_inf(&g) < 1e-8 {
            break;
        }
        let mut p = neg_mat_vec(&h, &g);
        let mut slope = dot(&g, &p);
        if !(slope < 0.0) {
            h = identity(n);
            p = g.iter().map(|v| -v).collect();
            slope = dot(&g, &p);
        }
        let scale = (MAX_STEP / norm_inf(&p)).min(1.0);
        let mut alpha = scale;
        let mut accepted = None;
        for _ in 0..40 {
            let trial: Vec<f64> = x.iter().zip(&p).map(|(xi, pi)| xi + alpha * pi).collect();
            let ft = eval(&trial);
            if ft <= fx + ARMIJO * alpha * slope {
                accepted = Some((trial, ft));
                break;
            }
            alpha *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else { break };
        let g_new = gradient(&eval, &x_new, f_new);
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 && y.iter().all(|v| v.is_finite()) {
            bfgs_update(&mut h, &s, &y, sy);
        }
        let rel = (fx - f_new).abs() / fx.abs().max(1.0);
        x = x_new;
        fx = f_new;
        g = g_new;
        if fx < best.value {
            best.x = x.clone();
            best.value = fx;
        }
        if rel < 1e-12 {
            break;
        }
    }
    best
}

fn gradient(f: &impl Fn(&[f64]) -> f64, x: &[f64], fx: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = FD_STEP * x[i].abs().max(1.0);
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            match (up.is_finite(), down.is_finite()) {
                (true, true) => (up - down) / (2.0 * h),
                (true, false) => (up - fx) / h,
                (false, true) => (fx - down) / h,
                (false, false) => f64::NAN,
            }
        })
        .collect()
}

fn bfgs_update(h: &mut [Vec<f64>], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..n).map(|i| dot(&h[i], y)).collect();
    let yhy = dot(y, &hy);
    for i in 0..n {
        for j in 0..n {
            h[i][j] += (1.0 + rho * yhy) * rho * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
        }
    }
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

fn neg_mat_vec(h: &[Vec<f64>], g: &[f64]) -> Vec<f64> {
    h.iter().map(|row| -dot(row, g)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}
