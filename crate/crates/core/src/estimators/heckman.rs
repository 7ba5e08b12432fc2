use log::warn;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

use super::design::DesignMatrix;
use super::normal;
use super::ols::ols_parts;
use super::probit::probit;
use super::{terms, FitResult};

/// Selection equation over every row, outcome equation over the selected ones.
#[derive(Debug, Clone)]
pub struct SelectionModel {
    /// Design for the selection probit, all rows.
    pub selection: DesignMatrix,
    pub selected: Vec<bool>,
    /// Design for the outcome equation over the selected rows, in order.
    pub outcome: DesignMatrix,
    /// Outcome values of the selected rows.
    pub y: Vec<f64>,
    /// Terms that enter the selection equation only.
    pub exclusion: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct HeckmanResult {
    /// Probit of selection; `None` when nothing was censored.
    pub stage1: Option<FitResult>,
    /// Outcome regression on the selected rows, with the `lambda` term when censored.
    pub stage2: FitResult,
    pub beta_lambda: Option<f64>,
    pub sigma: f64,
    pub rho: Option<f64>,
    pub rho_clamped: bool,
    pub athrho: Option<f64>,
    pub lnsigma: f64,
    pub n_total: usize,
    pub n_selected: usize,
    pub corrected_se: bool,
}

impl HeckmanResult {
    pub fn coef_of(&self, term: &str) -> Option<f64> {
        self.stage2.coef_of(term)
    }

    pub fn se_of(&self, term: &str) -> Option<f64> {
        self.stage2.se_of(term)
    }
}

fn check_exclusion(m: &SelectionModel) -> Result<()> {
    if m.exclusion.is_empty() {
        return Err(Error::validation("selection model needs at least one exclusion variable"));
    }
    for term in &m.exclusion {
        if m.outcome.has_term(term) {
            return Err(Error::validation(format!(
                "exclusion variable `{term}` also appears in the outcome equation"
            )));
        }
        if !m.selection.has_term(term) {
            return Err(Error::validation(format!(
                "exclusion variable `{term}` is missing from the selection equation"
            )));
        }
    }
    Ok(())
}

/// Two-step selection estimator.
///
/// Stage 1 fits a probit of `selected` on the selection design. Stage 2 runs
/// OLS of `y` on the outcome design plus the inverse Mills ratio over the
/// selected rows. `σ̂² = e'e/n₁ + β_λ²·mean(δ)` with `δ = λ(λ + zγ̂)`, and
/// `ρ̂ = β_λ/σ̂` is clamped to `[-1, 1]`. When `ρ̂` has to be clamped, `σ̂` is
/// reset to `|β_λ|` so that `β_λ = ρ̂σ̂` still holds.
///
/// With `corrected_se` the stage-2 covariance accounts for the generated
/// regressor; otherwise conventional OLS standard errors are reported.
pub fn heckman_two_step(m: &SelectionModel, corrected_se: bool) -> Result<HeckmanResult> {
    let n = m.selection.nrows();
    if m.selected.len() != n {
        return Err(Error::validation("selection flags and selection design differ in length"));
    }
    check_exclusion(m)?;
    let rows: Vec<usize> = (0..n).filter(|&i| m.selected[i]).collect();
    let n1 = rows.len();
    if n1 == 0 {
        return Err(Error::validation("no selected rows for the outcome equation"));
    }
    if m.outcome.nrows() != n1 || m.y.len() != n1 {
        return Err(Error::validation("outcome equation must cover exactly the selected rows"));
    }
    let y1 = &m.y;
    let x1 = &m.outcome;

    if n1 == n {
        warn!("no censored rows; outcome equation reduces to OLS and rho is undefined");
        let parts = ols_parts(y1, x1)?;
        let sigma = (parts.residuals.norm_squared() / n1 as f64).sqrt();
        return Ok(HeckmanResult {
            stage1: None,
            stage2: parts.fit,
            beta_lambda: None,
            sigma,
            rho: None,
            rho_clamped: false,
            athrho: None,
            lnsigma: sigma.ln(),
            n_total: n,
            n_selected: n1,
            corrected_se: false,
        });
    }

    let s: Vec<f64> = m.selected.iter().map(|&b| f64::from(u8::from(b))).collect();
    let stage1 = probit(&s, &m.selection)?;
    let gamma = DVector::from_column_slice(&stage1.coef);
    let w1 = m.selection.data.select_rows(&rows);
    let zg = &w1 * &gamma;
    let lambda: Vec<f64> = zg.iter().map(|&z| normal::inverse_mills(z)).collect();
    let delta: Vec<f64> = lambda.iter().zip(zg.iter()).map(|(l, z)| l * (l + z)).collect();

    let x1l = x1.with_column(terms::MILLS, &lambda);
    let parts = ols_parts(y1, &x1l)?;
    let k = x1l.ncols();
    let beta_lambda = parts.fit.coef[k - 1];
    let mean_delta = delta.iter().sum::<f64>() / n1 as f64;
    let sigma2 = parts.residuals.norm_squared() / n1 as f64 + beta_lambda * beta_lambda * mean_delta;
    let mut sigma = sigma2.max(0.0).sqrt();
    let mut rho = beta_lambda / sigma;
    let mut rho_clamped = false;
    if !rho.is_finite() || rho.abs() > 1.0 {
        warn!("two-step rho estimate {rho:.4} outside [-1, 1]; clamped");
        rho = rho.clamp(-1.0, 1.0);
        if rho.is_nan() {
            rho = 0.0;
        }
        sigma = beta_lambda.abs();
        rho_clamped = true;
    }

    let mut stage2 = parts.fit;
    if corrected_se {
        let cov = corrected_covariance(&x1l.data, &w1, &delta, rho, sigma, &stage1.covariance);
        stage2 = FitResult::assemble(
            stage2.model,
            stage2.terms,
            stage2.coef,
            cov,
            stage2.n,
            stage2.log_likelihood,
            stage2.r_squared,
            stage2.dropped,
        );
    }
    Ok(HeckmanResult {
        stage1: Some(stage1),
        stage2,
        beta_lambda: Some(beta_lambda),
        sigma,
        rho: Some(rho),
        rho_clamped,
        athrho: Some(rho.clamp(-1.0 + 1e-15, 1.0 - 1e-15).atanh()),
        lnsigma: sigma.ln(),
        n_total: n,
        n_selected: n1,
        corrected_se,
    })
}

/// `σ²(X'X)⁻¹ [X'(I − ρ²Δ)X + ρ²(X'ΔW) V_γ (W'ΔX)] (X'X)⁻¹`
fn corrected_covariance(
    x: &DMatrix<f64>,
    w: &DMatrix<f64>,
    delta: &[f64],
    rho: f64,
    sigma: f64,
    v_gamma: &DMatrix<f64>,
) -> DMatrix<f64> {
    let xtx_inv = (x.transpose() * x)
        .try_inverse()
        .unwrap_or_else(|| DMatrix::from_element(x.ncols(), x.ncols(), f64::NAN));
    let r2 = rho * rho;
    let d = DVector::from_column_slice(delta);
    let mut x_d = x.clone();
    let mut x_rd = x.clone();
    for (i, di) in d.iter().enumerate() {
        x_d.row_mut(i).scale_mut(*di);
        x_rd.row_mut(i).scale_mut(1.0 - r2 * di);
    }
    let xdw = x_d.transpose() * w;
    let q = &xdw * v_gamma * xdw.transpose() * r2;
    let middle = x.transpose() * x_rd + q;
    &xtx_inv * middle * &xtx_inv * (sigma * sigma)
}
