use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

use super::design::DesignMatrix;
use super::{FitResult, ModelKind};

/// Least-squares fit plus the pieces the selection model needs.
pub(crate) struct OlsParts {
    pub fit: FitResult,
    pub residuals: DVector<f64>,
}

pub(crate) fn ols_parts(y: &[f64], x: &DesignMatrix) -> Result<OlsParts> {
    let n = x.nrows();
    let k = x.ncols();
    if y.len() != n {
        return Err(Error::validation(format!("{} outcomes for {} design rows", y.len(), n)));
    }
    if n < k {
        return Err(Error::RankDeficient(format!("{n} observations for {k} terms")));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::validation("non-finite outcome value"));
    }
    let yv = DVector::from_column_slice(y);
    let qr = x.data.clone().qr();
    let r = qr.r();
    let qty = qr.q().transpose() * &yv;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::RankDeficient(format!("triangular solve failed for [{}]", x.terms.join(", "))))?;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .ok_or_else(|| Error::numerical("R is singular"))?;
    let xtx_inv = &r_inv * r_inv.transpose();

    let residuals = &yv - &x.data * &beta;
    let ssr = residuals.norm_squared();
    let mean = yv.mean();
    let sst = yv.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
    let s2 = if n > k { ssr / (n - k) as f64 } else { f64::NAN };
    let nf = n as f64;
    let loglik = -0.5 * nf * ((2.0 * std::f64::consts::PI).ln() + (ssr / nf).ln() + 1.0);
    let r2 = if sst > 0.0 { 1.0 - ssr / sst } else { f64::NAN };

    let fit = FitResult::assemble(
        ModelKind::Ols,
        x.terms.clone(),
        beta.iter().copied().collect(),
        &xtx_inv * s2,
        n,
        loglik,
        Some(r2),
        x.dropped.clone(),
    );
    Ok(OlsParts { fit, residuals })
}

/// Ordinary least squares via a QR decomposition, with conventional
/// (homoskedastic) standard errors and the Gaussian log-likelihood.
pub fn ols(y: &[f64], x: &DesignMatrix) -> Result<FitResult> {
    ols_parts(y, x).map(|p| p.fit)
}
