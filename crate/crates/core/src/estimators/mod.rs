//! Regression machinery: OLS, probit, two-step Heckman and the
//! difference-in-differences specifications built on top of them.

pub mod design;
pub mod did;
pub mod heckman;
pub mod normal;
pub mod ols;
pub mod probit;
pub mod report;

pub use design::{DesignBuilder, DesignMatrix, DroppedTerm, TermKind};
pub use did::{
    did_dosage, did_heckman, did_ols, naive_difference, placebo, predict_conditional_stay, split_by_experience,
    DealYearTerm, DidOptions, DosageResults, ExperienceSplit, GroupPrediction, NaiveResults, PlaceboResult,
    PlaceboScheme,
};
pub use heckman::{heckman_two_step, HeckmanResult, SelectionModel};
pub use normal::inverse_mills;
pub use ols::ols;
pub use probit::probit;

use nalgebra::DMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Ols,
    Probit,
}

/// Coefficients, inference and fit statistics of one regression.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub model: ModelKind,
    pub terms: Vec<String>,
    pub coef: Vec<f64>,
    pub se: Vec<f64>,
    pub t: Vec<f64>,
    pub n: usize,
    pub log_likelihood: f64,
    pub r_squared: Option<f64>,
    pub aic: f64,
    /// Newton iterations (probit); 0 for closed-form fits.
    pub iterations: usize,
    pub gradient_norm: f64,
    pub converged: bool,
    /// Log-likelihood after each accepted Newton step, starting point included.
    pub loglik_path: Vec<f64>,
    pub covariance: DMatrix<f64>,
    pub dropped: Vec<DroppedTerm>,
}

impl FitResult {
    pub(crate) fn assemble(
        model: ModelKind,
        terms: Vec<String>,
        coef: Vec<f64>,
        covariance: DMatrix<f64>,
        n: usize,
        log_likelihood: f64,
        r_squared: Option<f64>,
        dropped: Vec<DroppedTerm>,
    ) -> Self {
        let se: Vec<f64> = (0..coef.len()).map(|i| covariance[(i, i)].max(0.0).sqrt()).collect();
        let t = coef.iter().zip(&se).map(|(c, s)| c / s).collect();
        let k = coef.len();
        FitResult {
            model,
            terms,
            coef,
            se,
            t,
            n,
            log_likelihood,
            r_squared,
            aic: 2.0 * k as f64 - 2.0 * log_likelihood,
            iterations: 0,
            gradient_norm: 0.0,
            converged: true,
            loglik_path: Vec::new(),
            covariance,
            dropped,
        }
    }

    /// Number of estimated parameters entering the AIC.
    pub fn k(&self) -> usize {
        self.coef.len()
    }

    pub fn index(&self, term: &str) -> Option<usize> {
        self.terms.iter().position(|t| t == term)
    }

    pub fn has_term(&self, term: &str) -> bool {
        self.index(term).is_some()
    }

    pub fn coef_of(&self, term: &str) -> Option<f64> {
        self.index(term).map(|i| self.coef[i])
    }

    pub fn se_of(&self, term: &str) -> Option<f64> {
        self.index(term).map(|i| self.se[i])
    }

    pub fn p_value(&self, i: usize) -> f64 {
        normal::two_sided_p(self.t[i])
    }

    pub fn p_of(&self, term: &str) -> Option<f64> {
        self.index(term).map(|i| self.p_value(i))
    }
}

/// Canonical term names shared by the specifications and the reports.
pub mod terms {
    pub const CONSTANT: &str = "Constant";
    pub const ACQUIRED: &str = "Acquired";
    pub const AFTER: &str = "After";
    pub const ACQUIRED_X_AFTER: &str = "Acquired x After";
    pub const EXCLUSIVITY: &str = "Exclusivity";
    pub const LPATENTS: &str = "lpatents";
    pub const AGE: &str = "Age";
    pub const YEAR: &str = "Year";
    pub const MILLS: &str = "lambda";
    pub const LOW: &str = "Low Sim.";
    pub const MEDIUM: &str = "Medium Sim.";
    pub const HIGH: &str = "High Sim.";
    pub const LOW_X_AFTER: &str = "Low Sim. x After";
    pub const MEDIUM_X_AFTER: &str = "Medium Sim. x After";
    pub const HIGH_X_AFTER: &str = "High Sim. x After";
    pub const DEAL_YEAR_BLOCK: &str = "DealYear";
    pub const COMPANY_BLOCK: &str = "Company";
}
