//! Bounded Levenberg–Marquardt on weighted residual vectors.
//!
//! Residual closures return residuals already divided by their standard
//! deviations, so the returned covariance is `(JᵀJ)⁻¹` at the optimum.

use nalgebra::{DMatrix, DVector};

#[derive(Clone, Copy, Debug)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Converged when every parameter moves by less than this, relative.
    pub xtol: f64,
    /// Converged when the cost drops by less than this, relative.
    pub ftol: f64,
    pub initial_damping: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            xtol: 1e-9,
            ftol: 1e-15,
            initial_damping: 1e-3,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LmResult {
    pub params: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Sum of squared residuals.
    pub cost: f64,
    pub covariance: Option<DMatrix<f64>>,
    pub iterations: usize,
    pub converged: bool,
}

fn cost_of(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

fn clamp_params(p: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((v, &lo), &hi) in p.iter_mut().zip(lower).zip(upper) {
        *v = v.clamp(lo, hi);
    }
}

/// Central-difference Jacobian; falls back to one-sided steps at bounds.
fn jacobian<F>(f: &F, p: &[f64], lower: &[f64], upper: &[f64], r0: &[f64]) -> Option<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Option<Vec<f64>>,
{
    let m = r0.len();
    let n = p.len();
    let mut j = DMatrix::zeros(m, n);
    for k in 0..n {
        let h = 1e-6 * p[k].abs().max(1e-3);
        let mut hi = p.to_vec();
        let mut lo = p.to_vec();
        hi[k] = (p[k] + h).min(upper[k]);
        lo[k] = (p[k] - h).max(lower[k]);
        let span = hi[k] - lo[k];
        if span <= 0.0 {
            continue;
        }
        let rh = if hi[k] == p[k] { r0.to_vec() } else { f(&hi)? };
        let rl = if lo[k] == p[k] { r0.to_vec() } else { f(&lo)? };
        for i in 0..m {
            j[(i, k)] = (rh[i] - rl[i]) / span;
        }
    }
    Some(j)
}

pub fn levenberg_marquardt<F>(f: F, initial: &[f64], lower: &[f64], upper: &[f64], opts: &LmOptions) -> Option<LmResult>
where
    F: Fn(&[f64]) -> Option<Vec<f64>>,
{
    let n = initial.len();
    assert_eq!(lower.len(), n);
    assert_eq!(upper.len(), n);
    let mut p = initial.to_vec();
    clamp_params(&mut p, lower, upper);
    let mut r = f(&p)?;
    let mut cost = cost_of(&r);
    let mut damping = opts.initial_damping;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        iterations += 1;
        let j = jacobian(&f, &p, lower, upper, &r)?;
        let jt = j.transpose();
        let jtj = &jt * &j;
        let g = &jt * DVector::from_column_slice(&r);

        let mut accepted = false;
        for _ in 0..40 {
            let mut a = jtj.clone();
            for k in 0..n {
                let d = jtj[(k, k)].max(1e-12);
                a[(k, k)] += damping * d;
            }
            let Some(step) = a.lu().solve(&(-&g)) else {
                damping *= 10.0;
                continue;
            };
            let mut trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            clamp_params(&mut trial, lower, upper);
            let Some(rt) = f(&trial) else {
                damping *= 10.0;
                continue;
            };
            let ct = cost_of(&rt);
            if ct <= cost {
                let small_step = p
                    .iter()
                    .zip(&trial)
                    .all(|(a, b)| (a - b).abs() <= opts.xtol * a.abs().max(1e-12));
                let small_drop = cost - ct <= opts.ftol * cost.max(1e-300);
                p = trial;
                r = rt;
                cost = ct;
                damping = (damping / 10.0).max(1e-15);
                accepted = true;
                if small_step || small_drop || cost == 0.0 {
                    converged = true;
                }
                break;
            }
            damping *= 10.0;
        }
        if !accepted {
            // No downhill step at any damping: a (possibly bounded) minimum.
            converged = true;
        }
        if converged {
            break;
        }
    }

    let covariance = jacobian(&f, &p, lower, upper, &r).and_then(|j| (j.transpose() * &j).try_inverse());
    Some(LmResult {
        params: p,
        residuals: r,
        cost,
        covariance,
        iterations,
        converged,
    })
}
