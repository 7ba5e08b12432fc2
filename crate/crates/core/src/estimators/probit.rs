use log::warn;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

use super::design::{DesignMatrix, TermKind};
use super::normal;
use super::{FitResult, ModelKind};

pub const MAX_ITERATIONS: usize = 100;
pub const GRADIENT_TOLERANCE: f64 = 1e-8;
/// A non-intercept coefficient times its regressor sd beyond this is read as divergence toward separation.
pub const SEPARATION_BOUND: f64 = 25.0;
/// An outcome class fitted this close to 0/1 on every row is treated as separated.
pub const SEPARATION_PROBABILITY: f64 = 1e-6;
const RIDGE: f64 = 1e-8;

fn signs(y: &[f64]) -> Vec<f64> {
    y.iter().map(|&v| if v > 0.5 { 1.0 } else { -1.0 }).collect()
}

/// Probit log-likelihood at `beta`.
pub fn log_likelihood(y: &[f64], x: &DMatrix<f64>, beta: &DVector<f64>) -> f64 {
    let xb = x * beta;
    signs(y)
        .iter()
        .zip(xb.iter())
        .map(|(q, z)| normal::ln_cdf(q * z))
        .sum()
}

/// Analytic gradient of [`log_likelihood`].
pub fn gradient(y: &[f64], x: &DMatrix<f64>, beta: &DVector<f64>) -> DVector<f64> {
    let xb = x * beta;
    let w: DVector<f64> = DVector::from_iterator(
        y.len(),
        signs(y).iter().zip(xb.iter()).map(|(q, z)| q * normal::inverse_mills(q * z)),
    );
    x.transpose() * w
}

/// Negative Hessian `X' diag(λ(qz)(λ(qz) + qz)) X`, positive definite for full-rank X.
fn neg_hessian(y: &[f64], x: &DMatrix<f64>, beta: &DVector<f64>) -> DMatrix<f64> {
    let xb = x * beta;
    let k = x.ncols();
    let mut h = DMatrix::zeros(k, k);
    for (i, q) in signs(y).iter().enumerate() {
        let s = q * xb[i];
        let l = normal::inverse_mills(s);
        let w = l * (l + s);
        let row = x.row(i);
        h.ger(w, &row.transpose(), &row.transpose(), 1.0);
    }
    h
}

fn invert_spd(h: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(ch) = h.clone().cholesky() {
        return Ok(ch.inverse());
    }
    warn!("near-singular probit Hessian; adding ridge {RIDGE}");
    let k = h.nrows();
    let ridged = h + DMatrix::identity(k, k) * RIDGE;
    ridged
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::numerical("probit Hessian is not positive definite"))
}

/// Binary probit fitted by Newton's method with step halving.
///
/// Stops when the gradient max-norm falls below 1e-8 or after 100
/// iterations. Standard errors come from the inverse of the negative
/// Hessian at the optimum.
pub fn probit(y: &[f64], x: &DesignMatrix) -> Result<FitResult> {
    let n = x.nrows();
    let k = x.ncols();
    if y.len() != n {
        return Err(Error::validation(format!("{} outcomes for {} design rows", y.len(), n)));
    }
    if y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::validation("probit outcome must be 0/1"));
    }
    let ones = y.iter().filter(|&&v| v == 1.0).count();
    if ones == 0 || ones == n {
        return Err(Error::validation("probit outcome has a single class"));
    }
    let xm = &x.data;
    let scale: Vec<f64> = (0..k)
        .map(|j| {
            if x.kinds[j] == TermKind::Intercept {
                return 0.0;
            }
            let c = xm.column(j);
            let m = c.mean();
            (c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64).sqrt()
        })
        .collect();
    let mut beta = DVector::zeros(k);
    let mut ll = log_likelihood(y, xm, &beta);
    let mut path = vec![ll];
    let mut iterations = 0;
    let mut grad = gradient(y, xm, &beta);
    let mut converged = false;

    while iterations < MAX_ITERATIONS {
        if grad.amax() < GRADIENT_TOLERANCE {
            converged = true;
            break;
        }
        iterations += 1;
        let h = neg_hessian(y, xm, &beta);
        let step = invert_spd(&h)? * &grad;
        // Predicted gain below the resolution of ll: comparisons are noise.
        let flat = grad.dot(&step) < 1e-12 * ll.abs().max(1.0);
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-12 {
            let cand = &beta + &step * t;
            let cand_ll = log_likelihood(y, xm, &cand);
            if cand_ll >= ll || flat {
                beta = cand;
                ll = ll.max(cand_ll);
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        path.push(ll);
        if let Some(j) = (0..k).find(|&j| (beta[j] * scale[j]).abs() > SEPARATION_BOUND) {
            return Err(Error::Separation(format!(
                "coefficient on `{}` diverged to {:.3e}",
                x.terms[j], beta[j]
            )));
        }
        grad = gradient(y, xm, &beta);
        if !accepted {
            // No ascent direction left at machine precision.
            converged = grad.amax() < 1e-6;
            break;
        }
    }
    if !converged && grad.amax() < GRADIENT_TOLERANCE {
        converged = true;
    }
    if !converged {
        warn!("probit stopped after {iterations} iterations with gradient {:.3e}", grad.amax());
    }

    let fitted = xm * &beta;
    let class_separated = |class: f64| {
        y.iter()
            .zip(fitted.iter())
            .filter(|(v, _)| **v == class)
            .all(|(_, z)| {
                let p = normal::cdf(*z);
                if class == 1.0 {
                    normal::sf(*z) < SEPARATION_PROBABILITY
                } else {
                    p < SEPARATION_PROBABILITY
                }
            })
    };
    if class_separated(1.0) || class_separated(0.0) {
        return Err(Error::Separation("fitted probabilities reach 0/1 for an entire outcome class".into()));
    }

    let cov = invert_spd(&neg_hessian(y, xm, &beta))?;
    let mut fit = FitResult::assemble(
        ModelKind::Probit,
        x.terms.clone(),
        beta.iter().copied().collect(),
        cov,
        n,
        ll,
        None,
        x.dropped.clone(),
    );
    fit.iterations = iterations;
    fit.gradient_norm = grad.amax();
    fit.converged = converged;
    fit.loglik_path = path;
    Ok(fit)
}
