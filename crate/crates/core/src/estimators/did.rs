use std::collections::BTreeMap;

use log::warn;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::panel::{Dosage, PanelObservation, Period};

use super::design::{DesignBuilder, DesignMatrix, TermKind};
use super::heckman::{heckman_two_step, HeckmanResult, SelectionModel};
use super::normal;
use super::ols::ols;
use super::{terms, FitResult};

/// How the deal year enters a specification.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DealYearTerm {
    Omitted,
    /// Continuous `Year` regressor.
    Linear,
    /// One dummy per deal year.
    FixedEffects,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DidOptions {
    pub deal_year: DealYearTerm,
    /// Dummies for the deal cluster (treated firm and its matched controls).
    pub company_fe: bool,
    /// Selection-corrected stage-2 covariance for Heckman fits.
    pub corrected_se: bool,
}

impl Default for DidOptions {
    fn default() -> Self {
        DidOptions {
            deal_year: DealYearTerm::Linear,
            company_fe: false,
            corrected_se: false,
        }
    }
}

impl DidOptions {
    /// Deal-year and company dummies.
    pub fn fixed_effects() -> Self {
        DidOptions {
            deal_year: DealYearTerm::FixedEffects,
            company_fe: true,
            corrected_se: false,
        }
    }

    pub fn has_deal_year_effects(&self) -> bool {
        self.deal_year == DealYearTerm::FixedEffects
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Treatment {
    /// Acquired, After and their interaction.
    Acquired,
    /// Dosage indicators and their interactions with After.
    Dosage,
    /// After only (treated-only sample).
    AfterOnly,
}

fn bit(b: bool) -> f64 {
    f64::from(u8::from(b))
}

fn design(rows: &[&PanelObservation], treat: Treatment, with_age: bool, opts: &DidOptions) -> Result<DesignMatrix> {
    let col = |f: &dyn Fn(&PanelObservation) -> f64| rows.iter().map(|r| f(r)).collect::<Vec<f64>>();
    let after = |r: &PanelObservation| r.period == Period::After;
    let mut b = DesignBuilder::new((0..rows.len()).collect());
    match treat {
        Treatment::Acquired => {
            b = b
                .regressor(terms::ACQUIRED, col(&|r| bit(r.acquired)))
                .regressor(terms::AFTER, col(&|r| bit(after(r))))
                .regressor(terms::ACQUIRED_X_AFTER, col(&|r| bit(r.acquired && after(r))));
        }
        Treatment::Dosage => {
            let levels = [
                (Dosage::Low, terms::LOW, terms::LOW_X_AFTER),
                (Dosage::Medium, terms::MEDIUM, terms::MEDIUM_X_AFTER),
                (Dosage::High, terms::HIGH, terms::HIGH_X_AFTER),
            ];
            for (d, name, _) in levels {
                b = b.indicator(name, col(&|r| bit(r.dosage == d)));
            }
            b = b.regressor(terms::AFTER, col(&|r| bit(after(r))));
            for (d, _, name) in levels {
                b = b.indicator(name, col(&|r| bit(r.dosage == d && after(r))));
            }
        }
        Treatment::AfterOnly => {
            b = b.regressor(terms::AFTER, col(&|r| bit(after(r))));
        }
    }
    b = b
        .regressor(terms::EXCLUSIVITY, col(&|r| r.exclusivity))
        .regressor(terms::LPATENTS, col(&|r| r.lpatents));
    if with_age {
        b = b.regressor(terms::AGE, col(&|r| f64::from(r.age)));
    }
    if opts.deal_year == DealYearTerm::Linear {
        // Spanned by company dummies, so droppable when they are present.
        let kind = if opts.company_fe { TermKind::FixedEffect } else { TermKind::Regressor };
        b = b.column(terms::YEAR, kind, col(&|r| f64::from(r.deal_year)));
    }
    if opts.company_fe {
        let labels: Vec<String> = rows.iter().map(|r| r.deal_cluster_id.clone()).collect();
        b = b.dummies(terms::COMPANY_BLOCK, &labels, None);
    }
    if opts.deal_year == DealYearTerm::FixedEffects {
        let labels: Vec<String> = rows.iter().map(|r| r.deal_year.to_string()).collect();
        b = b.dummies(terms::DEAL_YEAR_BLOCK, &labels, None);
    }
    b.build()
}

fn stay_values(rows: &[&PanelObservation]) -> Vec<f64> {
    rows.iter().map(|r| bit(r.stay == Some(true))).collect()
}

fn ols_spec(rows: &[&PanelObservation], treat: Treatment, opts: &DidOptions) -> Result<FitResult> {
    let active: Vec<&PanelObservation> = rows.iter().copied().filter(|r| r.active).collect();
    if active.is_empty() {
        return Err(Error::validation("no active rows: every inventor is censored"));
    }
    let x = design(&active, treat, true, opts)?;
    ols(&stay_values(&active), &x)
}

fn heckman_spec(rows: &[&PanelObservation], treat: Treatment, opts: &DidOptions) -> Result<HeckmanResult> {
    let active: Vec<&PanelObservation> = rows.iter().copied().filter(|r| r.active).collect();
    if active.is_empty() {
        return Err(Error::validation("no active rows: every inventor is censored"));
    }
    let model = SelectionModel {
        selection: design(rows, treat, true, opts)?,
        selected: rows.iter().map(|r| r.active).collect(),
        outcome: design(&active, treat, false, opts)?,
        y: stay_values(&active),
        exclusion: vec![terms::AGE.to_string()],
    };
    heckman_two_step(&model, opts.corrected_se)
}

/// OLS of Stay on Acquired, After, their interaction, Exclusivity, lpatents
/// and Age over the active rows.
pub fn did_ols(panel: &[PanelObservation], opts: &DidOptions) -> Result<FitResult> {
    let rows: Vec<&PanelObservation> = panel.iter().collect();
    ols_spec(&rows, Treatment::Acquired, opts)
}

/// Two-step selection model: probit of Active on every row (Age included),
/// then Stay on the active rows without Age plus the inverse Mills ratio.
pub fn did_heckman(panel: &[PanelObservation], opts: &DidOptions) -> Result<HeckmanResult> {
    let rows: Vec<&PanelObservation> = panel.iter().collect();
    heckman_spec(&rows, Treatment::Acquired, opts)
}

#[derive(Debug, Clone)]
pub struct DosageResults {
    pub ols: FitResult,
    pub heckman: HeckmanResult,
    pub heckman_fe: HeckmanResult,
    /// Rows left out because the treated inventor had no similarity score.
    pub unscored_rows: usize,
}

fn scored_rows(panel: &[PanelObservation]) -> (Vec<&PanelObservation>, usize) {
    let rows: Vec<&PanelObservation> = panel.iter().filter(|r| r.dosage != Dosage::Unscored).collect();
    let dropped = panel.len() - rows.len();
    if dropped > 0 {
        warn!("{dropped} rows of unscored treated inventors left out of the dosage regressions");
    }
    (rows, dropped)
}

/// The main specifications with Acquired split into low / medium / high
/// similarity indicators (controls as reference).
pub fn did_dosage(panel: &[PanelObservation], opts: &DidOptions) -> Result<DosageResults> {
    let (rows, unscored_rows) = scored_rows(panel);
    let fe = DidOptions {
        corrected_se: opts.corrected_se,
        ..DidOptions::fixed_effects()
    };
    Ok(DosageResults {
        ols: ols_spec(&rows, Treatment::Dosage, opts)?,
        heckman: heckman_spec(&rows, Treatment::Dosage, opts)?,
        heckman_fe: heckman_spec(&rows, Treatment::Dosage, &fe)?,
        unscored_rows,
    })
}

/// Mean covariate values of one group, keyed by term name.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupProfile {
    pub label: String,
    pub outcome: BTreeMap<String, f64>,
    pub selection: BTreeMap<String, f64>,
    /// Observed Stay rate among the group's active after-period rows.
    pub empirical: Option<f64>,
    pub n_active: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupPrediction {
    pub label: String,
    pub prediction: f64,
    /// `xβ̂` part.
    pub linear: f64,
    /// `β_λ·λ(zγ̂)` part.
    pub correction: f64,
    pub clipped: bool,
    pub empirical: Option<f64>,
    pub n_active: usize,
}

fn column_means(x: &DesignMatrix, rows: &[usize]) -> BTreeMap<String, f64> {
    x.terms
        .iter()
        .enumerate()
        .map(|(j, t)| {
            let s: f64 = rows.iter().map(|&i| x.data[(i, j)]).sum();
            (t.clone(), s / rows.len() as f64)
        })
        .collect()
}

/// After-period covariate means for control, low, medium and high
/// inventors, laid out on the dosage-specification terms.
pub fn dosage_group_profiles(panel: &[PanelObservation], opts: &DidOptions) -> Result<Vec<GroupProfile>> {
    let (rows, _) = scored_rows(panel);
    let sel = design(&rows, Treatment::Dosage, true, opts)?;
    let out = design(&rows, Treatment::Dosage, false, opts)?;
    let mut profiles = Vec::new();
    for d in [Dosage::Control, Dosage::Low, Dosage::Medium, Dosage::High] {
        let idx: Vec<usize> = (0..rows.len())
            .filter(|&i| rows[i].dosage == d && rows[i].period == Period::After)
            .collect();
        if idx.is_empty() {
            continue;
        }
        let active: Vec<f64> = idx.iter().filter(|&&i| rows[i].active).map(|&i| bit(rows[i].stay == Some(true))).collect();
        profiles.push(GroupProfile {
            label: d.as_str().to_string(),
            outcome: column_means(&out, &idx),
            selection: column_means(&sel, &idx),
            empirical: (!active.is_empty()).then(|| active.iter().sum::<f64>() / active.len() as f64),
            n_active: active.len(),
        });
    }
    Ok(profiles)
}

fn dot(fit: &FitResult, values: &BTreeMap<String, f64>, skip: &str) -> f64 {
    fit.terms
        .iter()
        .zip(&fit.coef)
        .filter(|(t, _)| t.as_str() != skip)
        .map(|(t, c)| c * values.get(t).copied().unwrap_or(0.0))
        .sum()
}

/// `E[Stay | active, x] = xβ̂ + β_λ·λ(zγ̂)` at each group's mean covariates,
/// clipped to `[0, 1]`.
pub fn predict_conditional_stay(h: &HeckmanResult, groups: &[GroupProfile]) -> Vec<GroupPrediction> {
    groups
        .iter()
        .map(|g| {
            let linear = dot(&h.stage2, &g.outcome, terms::MILLS);
            let correction = match (&h.stage1, h.beta_lambda) {
                (Some(s1), Some(bl)) => bl * normal::inverse_mills(dot(s1, &g.selection, "")),
                _ => 0.0,
            };
            let raw = linear + correction;
            let clipped = !(0.0..=1.0).contains(&raw);
            if clipped {
                warn!("conditional stay prediction {raw:.4} for {} clipped to [0, 1]", g.label);
            }
            GroupPrediction {
                label: g.label.clone(),
                prediction: raw.clamp(0.0, 1.0),
                linear,
                correction,
                clipped,
                empirical: g.empirical,
                n_active: g.n_active,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlaceboScheme {
    /// Coin flip per pair decides which member is labelled acquired.
    All,
    /// Treated inventors only, a random half labelled acquired.
    WithinTreated,
    /// Control inventors only, a random half labelled acquired.
    WithinControl,
}

impl PlaceboScheme {
    pub const ALL: [PlaceboScheme; 3] = [PlaceboScheme::All, PlaceboScheme::WithinTreated, PlaceboScheme::WithinControl];

    pub fn as_str(self) -> &'static str {
        match self {
            PlaceboScheme::All => "all",
            PlaceboScheme::WithinTreated => "within_treated",
            PlaceboScheme::WithinControl => "within_control",
        }
    }
}

impl std::str::FromStr for PlaceboScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PlaceboScheme::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown placebo scheme `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlaceboResult {
    pub scheme: PlaceboScheme,
    pub seed: u64,
    /// Interaction estimate of each permutation, in permutation order.
    pub estimates: Vec<f64>,
    pub p_values: Vec<f64>,
    pub mean_estimate: f64,
    /// Share of permutations with p < 0.05.
    pub rejection_rate: f64,
}

fn relabel(base: &[PanelObservation], scheme: PlaceboScheme, rng: &mut ChaCha8Rng) -> Vec<PanelObservation> {
    match scheme {
        PlaceboScheme::All => {
            let mut flips: BTreeMap<&str, bool> = BTreeMap::new();
            for r in base {
                flips.entry(r.pair_id.as_str()).or_insert(false);
            }
            for v in flips.values_mut() {
                *v = rng.random::<bool>();
            }
            base.iter()
                .map(|r| {
                    let mut r = r.clone();
                    if flips[r.pair_id.as_str()] {
                        r.acquired = !r.acquired;
                    }
                    r
                })
                .collect()
        }
        PlaceboScheme::WithinTreated | PlaceboScheme::WithinControl => {
            let mut ids: Vec<(&str, &str)> = base.iter().map(|r| (r.pair_id.as_str(), r.inventor_id.as_str())).collect();
            ids.sort();
            ids.dedup();
            ids.shuffle(rng);
            let chosen: std::collections::BTreeSet<(&str, &str)> = ids[..ids.len() / 2].iter().copied().collect();
            base.iter()
                .map(|r| {
                    let mut r = r.clone();
                    r.acquired = chosen.contains(&(r.pair_id.as_str(), r.inventor_id.as_str()));
                    r
                })
                .collect()
        }
    }
}

/// Re-estimates [`did_ols`] under `n_perm` random reassignments of the
/// acquired label. Each permutation draws from its own stream of the seeded
/// generator, so results do not depend on thread scheduling.
pub fn placebo(panel: &[PanelObservation], scheme: PlaceboScheme, n_perm: usize, seed: u64, opts: &DidOptions) -> Result<PlaceboResult> {
    if n_perm == 0 {
        return Err(Error::Config("placebo needs at least one permutation".into()));
    }
    let base: Vec<PanelObservation> = match scheme {
        PlaceboScheme::All => panel.to_vec(),
        PlaceboScheme::WithinTreated => panel.iter().filter(|r| r.acquired).cloned().collect(),
        PlaceboScheme::WithinControl => panel.iter().filter(|r| !r.acquired).cloned().collect(),
    };
    let inventors: std::collections::BTreeSet<(&str, &str)> =
        base.iter().map(|r| (r.pair_id.as_str(), r.inventor_id.as_str())).collect();
    if inventors.len() < 2 {
        return Err(Error::validation(format!(
            "placebo scheme {} needs at least two inventors in its arm",
            scheme.as_str()
        )));
    }
    let draws: Vec<(f64, f64)> = (0..n_perm)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64 + 1);
            let relabelled = relabel(&base, scheme, &mut rng);
            let fit = did_ols(&relabelled, opts)?;
            let i = fit
                .index(terms::ACQUIRED_X_AFTER)
                .ok_or_else(|| Error::numerical("placebo fit lost the interaction term"))?;
            Ok((fit.coef[i], fit.p_value(i)))
        })
        .collect::<Result<_>>()?;
    let estimates: Vec<f64> = draws.iter().map(|d| d.0).collect();
    let p_values: Vec<f64> = draws.iter().map(|d| d.1).collect();
    Ok(PlaceboResult {
        scheme,
        seed,
        mean_estimate: estimates.iter().sum::<f64>() / n_perm as f64,
        rejection_rate: p_values.iter().filter(|&&p| p < 0.05).count() as f64 / n_perm as f64,
        estimates,
        p_values,
    })
}

#[derive(Debug, Clone)]
pub struct ExperienceSplit {
    pub cutoff: i32,
    /// Age above the cutoff.
    pub senior_ols: FitResult,
    pub senior_heckman: HeckmanResult,
    /// Age at or below the cutoff.
    pub junior_ols: FitResult,
    pub junior_heckman: HeckmanResult,
}

/// The OLS and Heckman specifications on inventors with age above `cutoff`
/// and at or below it.
pub fn split_by_experience(panel: &[PanelObservation], cutoff: i32, opts: &DidOptions) -> Result<ExperienceSplit> {
    let senior: Vec<&PanelObservation> = panel.iter().filter(|r| r.age > cutoff).collect();
    let junior: Vec<&PanelObservation> = panel.iter().filter(|r| r.age <= cutoff).collect();
    if senior.is_empty() {
        return Err(Error::validation(format!("senior stratum (age > {cutoff}) is empty")));
    }
    if junior.is_empty() {
        return Err(Error::validation(format!("junior stratum (age <= {cutoff}) is empty")));
    }
    Ok(ExperienceSplit {
        cutoff,
        senior_ols: ols_spec(&senior, Treatment::Acquired, opts)?,
        senior_heckman: heckman_spec(&senior, Treatment::Acquired, opts)?,
        junior_ols: ols_spec(&junior, Treatment::Acquired, opts)?,
        junior_heckman: heckman_spec(&junior, Treatment::Acquired, opts)?,
    })
}

#[derive(Debug, Clone)]
pub struct NaiveResults {
    pub ols: FitResult,
    pub heckman: HeckmanResult,
    pub input_rows: usize,
    pub treated_rows: usize,
}

/// Before/after comparison on treated inventors alone; `After` carries the effect.
pub fn naive_difference(panel: &[PanelObservation], opts: &DidOptions) -> Result<NaiveResults> {
    let rows: Vec<&PanelObservation> = panel.iter().filter(|r| r.acquired).collect();
    if rows.is_empty() {
        return Err(Error::validation("naive difference needs at least one treated inventor"));
    }
    Ok(NaiveResults {
        ols: ols_spec(&rows, Treatment::AfterOnly, opts)?,
        heckman: heckman_spec(&rows, Treatment::AfterOnly, opts)?,
        input_rows: panel.len(),
        treated_rows: rows.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Row factory; `stay` of `None` means inactive.
    #[allow(clippy::too_many_arguments)]
    fn obs(pair: usize, acquired: bool, period: Period, stay: Option<bool>, age: i32, excl: f64, pats: usize, cluster: &str) -> PanelObservation {
        PanelObservation {
            pair_id: format!("p{pair:05}"),
            inventor_id: format!("{}{pair}", if acquired { "t" } else { "c" }),
            firm_id: if acquired { "T".into() } else { "C".into() },
            deal_cluster_id: cluster.into(),
            deal_year: 1990 + (pair % 5) as i32,
            period,
            acquired,
            active: stay.is_some(),
            stay,
            exclusivity: excl,
            age,
            tenure: age,
            patents: pats,
            lpatents: (pats as f64).ln(),
            dosage: if acquired { Dosage::Low } else { Dosage::Control },
            similarity: None,
        }
    }

    /// Saturated 2x2 panel: stay rates treated 0.8 -> 0.5, control 0.8 -> 0.7 over 10 pairs.
    fn two_by_two() -> Vec<PanelObservation> {
        let mut rows = Vec::new();
        for i in 0..10 {
            let b = i < 8;
            let ta = i < 5;
            let ca = i < 7;
            rows.push(obs(i, true, Period::Before, Some(b), 5, 1.0, 1, "k"));
            rows.push(obs(i, false, Period::Before, Some(b), 5, 1.0, 1, "k"));
            rows.push(obs(i, true, Period::After, Some(ta), 5, 1.0, 1, "k"));
            rows.push(obs(i, false, Period::After, Some(ca), 5, 1.0, 1, "k"));
        }
        rows
    }

    fn saturated(panel: &[PanelObservation]) -> Result<FitResult> {
        let rows: Vec<&PanelObservation> = panel.iter().collect();
        let x = DesignBuilder::new((0..rows.len()).collect())
            .regressor(terms::ACQUIRED, rows.iter().map(|r| bit(r.acquired)).collect())
            .regressor(terms::AFTER, rows.iter().map(|r| bit(r.period == Period::After)).collect())
            .regressor(
                terms::ACQUIRED_X_AFTER,
                rows.iter().map(|r| bit(r.acquired && r.period == Period::After)).collect(),
            )
            .build()?;
        ols(&stay_values(&rows), &x)
    }

    #[test]
    fn saturated_did_equals_double_difference() {
        let fit = saturated(&two_by_two()).unwrap();
        assert!((fit.coef_of(terms::ACQUIRED_X_AFTER).unwrap() + 0.2).abs() < 1e-12);
    }

    #[test]
    fn all_censored_panel_is_an_error() {
        let mut p = two_by_two();
        for r in &mut p {
            r.active = false;
            r.stay = None;
        }
        assert!(did_ols(&p, &DidOptions::default()).is_err());
    }

    fn synthetic(n_pairs: usize, effect: f64, secular: f64, seed: u64) -> Vec<PanelObservation> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        for i in 0..n_pairs {
            let cluster = format!("k{}", i % 12);
            for acquired in [true, false] {
                let age = rng.random_range(5..16);
                let excl = [0.5, 0.75, 1.0][rng.random_range(0..3)];
                let pats = rng.random_range(1..6);
                for period in [Period::Before, Period::After] {
                    let p_act = normal::cdf(0.9 - 0.08 * f64::from(age - 9));
                    let mut p_stay = 0.8;
                    if period == Period::After {
                        p_stay += secular + if acquired { effect } else { 0.0 };
                    }
                    let stay = (rng.random::<f64>() < p_act).then(|| rng.random::<f64>() < p_stay);
                    rows.push(obs(i, acquired, period, stay, age, excl, pats, &cluster));
                }
            }
        }
        rows
    }

    #[test]
    fn recovers_injected_effect() {
        let p = synthetic(3000, -0.2, -0.1, 1);
        let fit = did_ols(&p, &DidOptions::default()).unwrap();
        let b = fit.coef_of(terms::ACQUIRED_X_AFTER).unwrap();
        assert!((b + 0.2).abs() < 3.0 * fit.se_of(terms::ACQUIRED_X_AFTER).unwrap());
        let h = did_heckman(&p, &DidOptions::default()).unwrap();
        assert_eq!(h.stage1.as_ref().unwrap().n, p.len());
        assert_eq!(h.stage2.n, p.iter().filter(|r| r.active).count());
        let hb = h.coef_of(terms::ACQUIRED_X_AFTER).unwrap();
        assert!((hb + 0.2).abs() < 3.0 * h.se_of(terms::ACQUIRED_X_AFTER).unwrap());
        assert!(!h.stage2.has_term(terms::AGE));
    }

    #[test]
    fn zero_effect_is_not_detected() {
        let p = synthetic(3000, 0.0, -0.1, 2);
        let fit = did_ols(&p, &DidOptions::default()).unwrap();
        assert!(fit.coef_of(terms::ACQUIRED_X_AFTER).unwrap().abs() < 3.0 * fit.se_of(terms::ACQUIRED_X_AFTER).unwrap());
    }

    #[test]
    fn reference_category_does_not_move_the_interaction() {
        let p = synthetic(600, -0.2, -0.1, 3);
        let rows: Vec<&PanelObservation> = p.iter().filter(|r| r.active).collect();
        let y = stay_values(&rows);
        let fit_with = |reference: &str| {
            let labels: Vec<String> = rows.iter().map(|r| r.deal_cluster_id.clone()).collect();
            let x = DesignBuilder::new((0..rows.len()).collect())
                .regressor(terms::ACQUIRED, rows.iter().map(|r| bit(r.acquired)).collect())
                .regressor(terms::AFTER, rows.iter().map(|r| bit(r.period == Period::After)).collect())
                .regressor(
                    terms::ACQUIRED_X_AFTER,
                    rows.iter().map(|r| bit(r.acquired && r.period == Period::After)).collect(),
                )
                .dummies(terms::COMPANY_BLOCK, &labels, Some(reference))
                .build()
                .unwrap();
            let fit = ols(&y, &x).unwrap();
            let fitted = &x.data * nalgebra::DVector::from_column_slice(&fit.coef);
            (fit, fitted)
        };
        let (a, fa) = fit_with("k0");
        let (b, fb) = fit_with("k7");
        assert!((a.coef_of(terms::ACQUIRED_X_AFTER).unwrap() - b.coef_of(terms::ACQUIRED_X_AFTER).unwrap()).abs() < 1e-10);
        assert!((a.r_squared.unwrap() - b.r_squared.unwrap()).abs() < 1e-10);
        assert!((fa - fb).amax() < 1e-10);
    }

    #[test]
    fn fixed_effects_prune_nested_deal_years() {
        let p = synthetic(600, -0.2, -0.1, 4);
        let fit = did_ols(&p, &DidOptions::fixed_effects()).unwrap();
        assert!(fit.terms.iter().any(|t| t.starts_with("Company=")));
        assert!(fit.coef_of(terms::ACQUIRED_X_AFTER).is_some());
        let h = did_heckman(&p, &DidOptions::fixed_effects()).unwrap();
        assert!(h.coef_of(terms::ACQUIRED_X_AFTER).is_some());
    }

    #[test]
    fn dosage_collapse_matches_did_ols() {
        // With every treated inventor in one dosage level the dosage model is did_ols renamed.
        let p = synthetic(800, -0.2, -0.1, 5);
        let d = did_dosage(&p, &DidOptions::default()).unwrap();
        let o = did_ols(&p, &DidOptions::default()).unwrap();
        assert!((d.ols.coef_of(terms::LOW_X_AFTER).unwrap() - o.coef_of(terms::ACQUIRED_X_AFTER).unwrap()).abs() < 1e-10);
        assert!(!d.ols.has_term(terms::MEDIUM_X_AFTER));
    }

    #[test]
    fn dosage_pattern_recovered() {
        let mut p = synthetic(3000, 0.0, -0.1, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(60);
        let mut level = BTreeMap::new();
        for r in p.iter_mut().filter(|r| r.acquired) {
            let d = *level.entry(r.pair_id.clone()).or_insert_with(|| [Dosage::Low, Dosage::Medium, Dosage::High][rng.random_range(0..3)]);
            r.dosage = d;
            if d == Dosage::High && r.period == Period::After && r.active {
                r.stay = Some(rng.random::<f64>() < 0.4);
            }
        }
        let d = did_dosage(&p, &DidOptions::default()).unwrap();
        let f = &d.ols;
        let z = |t: &str| f.coef_of(t).unwrap() / f.se_of(t).unwrap();
        assert!(z(terms::HIGH_X_AFTER) < -5.0);
        assert!(z(terms::LOW_X_AFTER).abs() < 3.0 && z(terms::MEDIUM_X_AFTER).abs() < 3.0);
    }

    #[test]
    fn predictions_follow_groups() {
        let mut p = synthetic(3000, -0.25, -0.05, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(70);
        let mut level = BTreeMap::new();
        for r in p.iter_mut().filter(|r| r.acquired) {
            r.dosage = *level.entry(r.pair_id.clone()).or_insert_with(|| [Dosage::Low, Dosage::Medium, Dosage::High][rng.random_range(0..3)]);
        }
        let d = did_dosage(&p, &DidOptions::default()).unwrap();
        let groups = dosage_group_profiles(&p, &DidOptions::default()).unwrap();
        let preds = predict_conditional_stay(&d.heckman, &groups);
        assert_eq!(preds.len(), 4);
        let control = &preds[0];
        assert_eq!(control.label, "control");
        for g in &preds[1..] {
            assert!(control.prediction > g.prediction);
        }
        for g in &preds {
            let e = g.empirical.unwrap();
            let se = (e * (1.0 - e) / g.n_active as f64).sqrt();
            assert!((g.prediction - e).abs() < 4.0 * se + 0.01, "{g:?}");
        }
    }

    #[test]
    fn zero_rho_prediction_is_linear() {
        let p = synthetic(500, -0.2, -0.1, 8);
        let mut h = did_heckman(&p, &DidOptions::default()).unwrap();
        h.beta_lambda = Some(0.0);
        let groups = dosage_group_profiles(&p, &DidOptions::default()).unwrap();
        for g in predict_conditional_stay(&h, &groups) {
            assert_eq!(g.correction, 0.0);
            assert!(g.clipped || g.prediction == g.linear);
        }
    }

    #[test]
    fn placebo_is_centred_and_deterministic() {
        let p = synthetic(1000, -0.2, -0.1, 9);
        for scheme in PlaceboScheme::ALL {
            let a = placebo(&p, scheme, 60, 17, &DidOptions::default()).unwrap();
            let b = placebo(&p, scheme, 60, 17, &DidOptions::default()).unwrap();
            assert_eq!(a, b);
            assert!(a.mean_estimate.abs() < 0.03, "{scheme:?} {}", a.mean_estimate);
        }
        let controls: Vec<PanelObservation> = p.iter().filter(|r| !r.acquired).cloned().collect();
        assert!(placebo(&controls, PlaceboScheme::WithinTreated, 5, 1, &DidOptions::default()).is_err());
    }

    #[test]
    fn naive_difference_absorbs_the_secular_trend() {
        let p = synthetic(3000, -0.2, -0.14, 10);
        let n = naive_difference(&p, &DidOptions::default()).unwrap();
        let did = did_ols(&p, &DidOptions::default()).unwrap();
        let gap = n.ols.coef_of(terms::AFTER).unwrap() - did.coef_of(terms::ACQUIRED_X_AFTER).unwrap();
        assert!((gap + 0.14).abs() < 0.05, "{gap}");
        assert_eq!(n.treated_rows, p.len() / 2);
        assert_eq!(n.input_rows, p.len());

        let flat = synthetic(3000, -0.2, 0.0, 11);
        let n = naive_difference(&flat, &DidOptions::default()).unwrap();
        let did = did_ols(&flat, &DidOptions::default()).unwrap();
        assert!((n.ols.coef_of(terms::AFTER).unwrap() - did.coef_of(terms::ACQUIRED_X_AFTER).unwrap()).abs() < 0.05);
    }

    #[test]
    fn experience_split_strata() {
        let mut p = synthetic(4000, 0.0, -0.1, 12);
        let mut rng = ChaCha8Rng::seed_from_u64(120);
        for r in p.iter_mut() {
            if r.acquired && r.age > 6 && r.period == Period::After && r.active {
                r.stay = Some(rng.random::<f64>() < 0.45);
            }
        }
        let s = split_by_experience(&p, 6, &DidOptions::default()).unwrap();
        let z = |f: &FitResult| f.coef_of(terms::ACQUIRED_X_AFTER).unwrap() / f.se_of(terms::ACQUIRED_X_AFTER).unwrap();
        assert!(z(&s.senior_ols) < -5.0);
        assert!(z(&s.junior_ols).abs() < 3.0);
        assert!(matches!(split_by_experience(&p, 2, &DidOptions::default()), Err(Error::Validation(m)) if m.contains("junior")));
    }
}
