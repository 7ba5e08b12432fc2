//! Firm and inventor matching on technological profile, age and size.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rayon::prelude::*;

use crate::cohort::{attribute_employees, patents_in, TreatmentCohort, YearRange};
use crate::corpus::{check_header, csv_err, open_reader, parse_err, Corpus};
use crate::error::{Error, Result};
use crate::estimators::{probit, DesignBuilder, FitResult};
use crate::panel::Covariates;

pub const DEFAULT_FIRM_THRESHOLD: f64 = 0.80;
pub const DEFAULT_INVENTOR_THRESHOLD: f64 = 0.90;
pub const OVERLAP_BINS: usize = 20;

pub const MATCH_COLUMNS: [&str; 7] = ["cohort_id", "treated_firm", "control_firm", "score", "tech", "age_dev", "size_dev"];
pub const PAIR_COLUMNS: [&str; 10] = [
    "pair_id",
    "cohort_id",
    "treated_inventor",
    "control_inventor",
    "treated_firm",
    "control_firm",
    "tech",
    "tenure_dev",
    "activity_dev",
    "score",
];

/// Whose patents make up a profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileOwner<'a> {
    /// Patents assigned to the firm.
    Firm(&'a str),
    /// Patents naming the inventor, whoever the assignee.
    Inventor(&'a str),
}

impl ProfileOwner<'_> {
    fn id(&self) -> &str {
        match self {
            ProfileOwner::Firm(id) | ProfileOwner::Inventor(id) => id,
        }
    }
}

/// Patent counts per IPC main group.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TechProfile {
    pub owner: String,
    pub phase: YearRange,
    pub counts: BTreeMap<String, u32>,
}

impl TechProfile {
    pub fn is_empty(&self) -> bool {
        self.counts.values().all(|&c| c == 0)
    }

    pub fn total(&self) -> u32 {
        self.counts.values().sum()
    }
}

/// Profile of `owner` over `phase`. A patent with several distinct main
/// groups adds one to each of them.
pub fn tech_profile(owner: ProfileOwner, corpus: &Corpus, phase: YearRange) -> Result<TechProfile> {
    let mut counts: BTreeMap<String, u32> = BTreeMap::new();
    let mut any = false;
    let mut add = |p: &crate::corpus::PatentRecord| {
        any = true;
        for g in p.distinct_groups() {
            *counts.entry(g.to_string()).or_default() += 1;
        }
    };
    match owner {
        ProfileOwner::Firm(id) => corpus
            .assignee_patents(id)
            .filter(|p| phase.contains(p.application_year))
            .for_each(&mut add),
        ProfileOwner::Inventor(id) => patents_in(corpus, id, phase).for_each(&mut add),
    }
    if !any {
        return Err(Error::validation(format!(
            "empty profile: {} has no patents in [{}, {})",
            owner.id(),
            phase.start,
            phase.end
        )));
    }
    Ok(TechProfile {
        owner: owner.id().to_string(),
        phase,
        counts,
    })
}

/// Cosine of the angle between two count vectors.
pub fn cosine_similarity(p: &TechProfile, q: &TechProfile) -> Result<f64> {
    cosine_counts(&p.counts, &q.counts)
}

pub(crate) fn cosine_counts(p: &BTreeMap<String, u32>, q: &BTreeMap<String, u32>) -> Result<f64> {
    let norm = |m: &BTreeMap<String, u32>| m.values().map(|&c| f64::from(c).powi(2)).sum::<f64>().sqrt();
    let (np, nq) = (norm(p), norm(q));
    if np == 0.0 || nq == 0.0 {
        return Err(Error::validation("cosine similarity of a zero profile"));
    }
    let (small, large) = if p.len() <= q.len() { (p, q) } else { (q, p) };
    let dot: f64 = small
        .iter()
        .filter_map(|(k, &a)| large.get(k).map(|&b| f64::from(a) * f64::from(b)))
        .fold(0.0, |acc, x| acc + x);
    Ok((dot / (np * nq)).clamp(0.0, 1.0))
}

/// `|x - y| / (x + y)`: 0 for equal values, 1 when one side is zero.
pub fn deviation(x: f64, y: f64) -> Result<f64> {
    if x < 0.0 || y < 0.0 || !(x + y > 0.0) {
        return Err(Error::validation(format!("deviation undefined for ({x}, {y})")));
    }
    Ok((x - y).abs() / (x + y))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityWeights {
    pub w_tau: f64,
    pub w_age: f64,
    pub w_patents: f64,
}

impl Default for SimilarityWeights {
    fn default() -> Self {
        SimilarityWeights {
            w_tau: 0.5,
            w_age: 0.25,
            w_patents: 0.25,
        }
    }
}

impl SimilarityWeights {
    pub fn validate(&self) -> Result<()> {
        let w = [self.w_tau, self.w_age, self.w_patents];
        if w.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::Config(format!("similarity weights must be non-negative: {w:?}")));
        }
        if (w.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!("similarity weights must sum to 1: {w:?}")));
        }
        Ok(())
    }
}

/// Weighted score `w_tau·tech + w_age·(1 − age_dev) + w_patents·(1 − patents_dev)`.
pub fn combined_similarity(tech: f64, age_dev: f64, patents_dev: f64, w: &SimilarityWeights) -> Result<f64> {
    w.validate()?;
    for (name, v) in [("tech", tech), ("age deviation", age_dev), ("patents deviation", patents_dev)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::validation(format!("{name} {v} outside [0, 1]")));
        }
    }
    Ok(w.w_tau * tech + w.w_age * (1.0 - age_dev) + w.w_patents * (1.0 - patents_dev))
}

fn check_threshold(name: &str, t: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Config(format!("{name} threshold {t} outside [0, 1]")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FirmScore {
    pub control_firm_id: String,
    pub score: f64,
    pub tech: f64,
    pub age_dev: f64,
    pub size_dev: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FirmMatch {
    pub cohort_id: String,
    pub treated_firm_id: String,
    /// Accepted controls, best first.
    pub controls: Vec<FirmScore>,
    pub threshold: f64,
}

impl FirmMatch {
    pub fn is_dropped(&self) -> bool {
        self.controls.is_empty()
    }
}

struct FirmFeatures {
    profile: TechProfile,
    age: f64,
    size: f64,
}

fn firm_features(corpus: &Corpus, firm: &str, cohort: &TreatmentCohort) -> Result<FirmFeatures> {
    let rec = cohort.window.recruitment();
    let profile = tech_profile(ProfileOwner::Firm(firm), corpus, rec)?;
    let first = corpus
        .first_year_of_assignee(firm)
        .ok_or_else(|| Error::validation(format!("firm {firm} absent from corpus")))?;
    let size = corpus
        .assignee_patents(firm)
        .filter(|p| rec.contains(p.application_year))
        .count();
    Ok(FirmFeatures {
        profile,
        age: f64::from(cohort.window.event_year - first),
        size: size as f64,
    })
}

fn score_firms(t: &FirmFeatures, c: &FirmFeatures, id: &str, w: &SimilarityWeights) -> Result<FirmScore> {
    let tech = cosine_similarity(&t.profile, &c.profile)?;
    let age_dev = deviation(t.age, c.age)?;
    let size_dev = deviation(t.size, c.size)?;
    Ok(FirmScore {
        control_firm_id: id.to_string(),
        score: combined_similarity(tech, age_dev, size_dev, w)?,
        tech,
        age_dev,
        size_dev,
    })
}

/// Every candidate firm scoring at least `threshold` against the treated firm.
///
/// Age is counted from the firm's first patent anywhere in the corpus; size
/// is the number of recruitment-phase patents.
pub fn match_firms(cohort: &TreatmentCohort, corpus: &Corpus, weights: &SimilarityWeights, threshold: f64) -> Result<FirmMatch> {
    check_threshold("firm", threshold)?;
    weights.validate()?;
    let treated = firm_features(corpus, &cohort.treated_firm_id, cohort)?;
    let scored: Vec<FirmScore> = cohort
        .control_firm_candidates
        .par_iter()
        .map(|id| {
            let f = firm_features(corpus, id, cohort)?;
            score_firms(&treated, &f, id, weights)
        })
        .collect::<Result<_>>()?;
    let mut controls: Vec<FirmScore> = scored.into_iter().filter(|s| s.score >= threshold).collect();
    controls.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.control_firm_id.cmp(&b.control_firm_id)));
    Ok(FirmMatch {
        cohort_id: cohort.cohort_id.clone(),
        treated_firm_id: cohort.treated_firm_id.clone(),
        controls,
        threshold,
    })
}

/// Matching inputs for one inventor at one firm.
#[derive(Debug, Clone)]
pub struct InventorFeatures {
    pub inventor_id: String,
    pub firm_id: String,
    pub profile: TechProfile,
    /// Years since the first patent with the firm.
    pub tenure: f64,
    /// Recruitment-phase patent count.
    pub activity: f64,
}

pub fn inventor_features(corpus: &Corpus, inventor_id: &str, firm_id: &str, cohort: &TreatmentCohort) -> Result<InventorFeatures> {
    let rec = cohort.window.recruitment();
    let profile = tech_profile(ProfileOwner::Inventor(inventor_id), corpus, rec)?;
    let first = corpus
        .first_year_with_assignee(inventor_id, firm_id)
        .ok_or_else(|| Error::validation(format!("inventor {inventor_id} never filed for {firm_id}")))?;
    Ok(InventorFeatures {
        inventor_id: inventor_id.to_string(),
        firm_id: firm_id.to_string(),
        activity: patents_in(corpus, inventor_id, rec).count() as f64,
        profile,
        tenure: f64::from(cohort.window.event_year - first),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct InventorPair {
    pub pair_id: String,
    pub cohort_id: String,
    pub treated_inventor_id: String,
    pub control_inventor_id: String,
    pub treated_firm_id: String,
    pub control_firm_id: String,
    pub tech: f64,
    pub tenure_dev: f64,
    pub activity_dev: f64,
    pub score: f64,
}

struct Edge {
    score: f64,
    tech: f64,
    tenure_dev: f64,
    activity_dev: f64,
    t: usize,
    c: usize,
}

/// One-to-one greedy pairing: all treated-control edges scoring at least
/// `threshold` are visited best first (ties by treated id, then control id)
/// and an edge is kept when neither inventor is taken yet.
pub fn match_inventors(
    cohort_id: &str,
    treated: &[InventorFeatures],
    controls: &[InventorFeatures],
    weights: &SimilarityWeights,
    threshold: f64,
) -> Result<Vec<InventorPair>> {
    check_threshold("inventor", threshold)?;
    weights.validate()?;
    let rows: Vec<Vec<Edge>> = treated
        .par_iter()
        .enumerate()
        .map(|(ti, t)| {
            let mut out = Vec::new();
            for (ci, c) in controls.iter().enumerate() {
                let tech = cosine_similarity(&t.profile, &c.profile)?;
                let tenure_dev = deviation(t.tenure, c.tenure)?;
                let activity_dev = deviation(t.activity, c.activity)?;
                let score = combined_similarity(tech, tenure_dev, activity_dev, weights)?;
                if score >= threshold {
                    out.push(Edge {
                        score,
                        tech,
                        tenure_dev,
                        activity_dev,
                        t: ti,
                        c: ci,
                    });
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut edges: Vec<Edge> = rows.into_iter().flatten().collect();
    edges.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| treated[a.t].inventor_id.cmp(&treated[b.t].inventor_id))
            .then_with(|| controls[a.c].inventor_id.cmp(&controls[b.c].inventor_id))
            .then_with(|| controls[a.c].firm_id.cmp(&controls[b.c].firm_id))
    });

    let mut used_t: BTreeSet<&str> = BTreeSet::new();
    let mut used_c: BTreeSet<&str> = BTreeSet::new();
    let mut chosen: Vec<&Edge> = Vec::new();
    for e in &edges {
        let (t, c) = (&treated[e.t], &controls[e.c]);
        if used_t.contains(t.inventor_id.as_str()) || used_c.contains(c.inventor_id.as_str()) {
            continue;
        }
        used_t.insert(&t.inventor_id);
        used_c.insert(&c.inventor_id);
        chosen.push(e);
    }
    chosen.sort_by(|a, b| treated[a.t].inventor_id.cmp(&treated[b.t].inventor_id));
    Ok(chosen
        .into_iter()
        .enumerate()
        .map(|(k, e)| {
            let (t, c) = (&treated[e.t], &controls[e.c]);
            InventorPair {
                pair_id: format!("{cohort_id}/{k:04}"),
                cohort_id: cohort_id.to_string(),
                treated_inventor_id: t.inventor_id.clone(),
                control_inventor_id: c.inventor_id.clone(),
                treated_firm_id: t.firm_id.clone(),
                control_firm_id: c.firm_id.clone(),
                tech: e.tech,
                tenure_dev: e.tenure_dev,
                activity_dev: e.activity_dev,
                score: e.score,
            }
        })
        .collect())
}

/// Treated employees and the employees of every accepted control firm,
/// minus inventors excluded from control pools.
pub fn cohort_inventor_features(
    cohort: &TreatmentCohort,
    firm_match: &FirmMatch,
    corpus: &Corpus,
    excluded: &BTreeSet<String>,
) -> Result<(Vec<InventorFeatures>, Vec<InventorFeatures>)> {
    let treated: Vec<InventorFeatures> = cohort
        .treated_employees
        .par_iter()
        .map(|inv| inventor_features(corpus, inv, &cohort.treated_firm_id, cohort))
        .collect::<Result<_>>()?;
    let mut controls = Vec::new();
    for fs in &firm_match.controls {
        for att in attribute_employees(corpus, &fs.control_firm_id, &cohort.window)? {
            if att.is_employee() && !excluded.contains(&att.inventor_id) {
                controls.push(inventor_features(corpus, &att.inventor_id, &fs.control_firm_id, cohort)?);
            }
        }
    }
    Ok((treated, controls))
}

/// Everything the matching stage produces for one run.
#[derive(Debug, Clone, Default)]
pub struct MatchOutcome {
    pub firm_matches: Vec<FirmMatch>,
    pub pairs: Vec<InventorPair>,
}

impl MatchOutcome {
    pub fn dropped_cohorts(&self) -> Vec<&str> {
        self.firm_matches
            .iter()
            .filter(|m| m.is_dropped())
            .map(|m| m.cohort_id.as_str())
            .collect()
    }
}

/// Firm matching and inventor pairing for every cohort, in cohort order.
pub fn match_all(
    cohorts: &[TreatmentCohort],
    corpus: &Corpus,
    excluded: &BTreeSet<String>,
    weights: &SimilarityWeights,
    firm_threshold: f64,
    inventor_threshold: f64,
) -> Result<MatchOutcome> {
    let per_cohort: Vec<(FirmMatch, Vec<InventorPair>)> = cohorts
        .par_iter()
        .map(|c| {
            let fm = match_firms(c, corpus, weights, firm_threshold)?;
            if fm.is_dropped() {
                return Ok((fm, Vec::new()));
            }
            let (t, k) = cohort_inventor_features(c, &fm, corpus, excluded)?;
            let pairs = match_inventors(&c.cohort_id, &t, &k, weights, inventor_threshold)?;
            Ok((fm, pairs))
        })
        .collect::<Result<_>>()?;
    let mut out = MatchOutcome::default();
    for (fm, pairs) in per_cohort {
        out.firm_matches.push(fm);
        out.pairs.extend(pairs);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmStats {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

fn arm_stats(xs: &[f64]) -> ArmStats {
    let n = xs.len();
    if n == 0 {
        return ArmStats {
            mean: f64::NAN,
            std: f64::NAN,
            n,
        };
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = if n > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    ArmStats { mean, std: var.sqrt(), n }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BalanceRow {
    pub variable: &'static str,
    pub treated: ArmStats,
    pub control: ArmStats,
}

/// Matching inputs of both members of a pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairCovariates {
    pub pair_id: String,
    pub treated: Covariates,
    pub control: Covariates,
}

/// Mean, standard deviation and count per arm for Age, Patents, Exclusivity and deal year.
pub fn balance_table(pairs: &[PairCovariates]) -> Result<Vec<BalanceRow>> {
    if pairs.is_empty() {
        return Err(Error::validation("balance table needs at least one pair"));
    }
    let fields: [(&'static str, fn(&Covariates) -> f64); 4] = [
        ("Age", |c| f64::from(c.age)),
        ("Patents", |c| c.patents as f64),
        ("Exclusivity", |c| c.exclusivity),
        ("Deal year", |c| f64::from(c.deal_year)),
    ];
    Ok(fields
        .iter()
        .map(|(name, f)| {
            let t: Vec<f64> = pairs.iter().map(|p| f(&p.treated)).collect();
            let c: Vec<f64> = pairs.iter().map(|p| f(&p.control)).collect();
            BalanceRow {
                variable: name,
                treated: arm_stats(&t),
                control: arm_stats(&c),
            }
        })
        .collect())
}

pub fn render_balance(rows: &[BalanceRow]) -> String {
    let mut s = String::new();
    s.push_str(&format!(
        "{:<12} {:>10} {:>10} {:>7}   {:>10} {:>10} {:>7}\n",
        "", "Treated", "", "", "Control", "", ""
    ));
    s.push_str(&format!(
        "{:<12} {:>10} {:>10} {:>7}   {:>10} {:>10} {:>7}\n",
        "", "Mean", "Std.Dev.", "Obs", "Mean", "Std.Dev.", "Obs"
    ));
    for r in rows {
        s.push_str(&format!(
            "{:<12} {:>10.2} {:>10.2} {:>7}   {:>10.2} {:>10.2} {:>7}\n",
            r.variable, r.treated.mean, r.treated.std, r.treated.n, r.control.mean, r.control.std, r.control.n
        ));
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropensityScore {
    pub pair_id: String,
    pub inventor_id: String,
    pub treated: bool,
    pub score: f64,
}

#[derive(Debug, Clone)]
pub struct PropensityOverlap {
    pub fit: FitResult,
    pub scores: Vec<PropensityScore>,
    /// `OVERLAP_BINS + 1` edges on `[0, 1]`.
    pub bin_edges: Vec<f64>,
    pub density_treated: Vec<f64>,
    pub density_control: Vec<f64>,
}

fn densities(xs: &[f64], bins: usize) -> Vec<f64> {
    let mut h = vec![0.0; bins];
    if xs.is_empty() {
        return h;
    }
    for &x in xs {
        let i = ((x * bins as f64).floor() as usize).min(bins - 1);
        h[i] += 1.0;
    }
    let width = 1.0 / bins as f64;
    h.iter().map(|c| c / (xs.len() as f64 * width)).collect()
}

/// Probit of the treated indicator on Age, Exclusivity and log patents, with
/// the fitted score of every paired inventor and per-arm histogram densities.
pub fn propensity_overlap(pairs: &[PairCovariates], treated_ids: &[(String, String)]) -> Result<PropensityOverlap> {
    if pairs.len() < 2 {
        return Err(Error::validation("propensity overlap needs at least two pairs"));
    }
    if treated_ids.len() != pairs.len() {
        return Err(Error::validation("one (treated, control) id pair per covariate pair expected"));
    }
    let mut y = Vec::new();
    let mut age = Vec::new();
    let mut excl = Vec::new();
    let mut lpat = Vec::new();
    for p in pairs {
        for (treated, c) in [(1.0, &p.treated), (0.0, &p.control)] {
            y.push(treated);
            age.push(f64::from(c.age));
            excl.push(c.exclusivity);
            lpat.push(c.lpatents);
        }
    }
    let x = DesignBuilder::new((0..y.len()).collect())
        .regressor("Age", age)
        .regressor("Exclusivity", excl)
        .regressor("lpatents", lpat)
        .build()?;
    let fit = probit(&y, &x)?;
    let beta = nalgebra::DVector::from_column_slice(&fit.coef);
    let fitted = &x.data * beta;
    let mut scores = Vec::with_capacity(y.len());
    for (i, p) in pairs.iter().enumerate() {
        let (t, c) = &treated_ids[i];
        scores.push(PropensityScore {
            pair_id: p.pair_id.clone(),
            inventor_id: t.clone(),
            treated: true,
            score: crate::estimators::normal::cdf(fitted[2 * i]),
        });
        scores.push(PropensityScore {
            pair_id: p.pair_id.clone(),
            inventor_id: c.clone(),
            treated: false,
            score: crate::estimators::normal::cdf(fitted[2 * i + 1]),
        });
    }
    let st: Vec<f64> = scores.iter().filter(|s| s.treated).map(|s| s.score).collect();
    let sc: Vec<f64> = scores.iter().filter(|s| !s.treated).map(|s| s.score).collect();
    Ok(PropensityOverlap {
        fit,
        bin_edges: (0..=OVERLAP_BINS).map(|i| i as f64 / OVERLAP_BINS as f64).collect(),
        density_treated: densities(&st, OVERLAP_BINS),
        density_control: densities(&sc, OVERLAP_BINS),
        scores,
    })
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| csv_err(path, e))
}

fn f6(x: f64) -> String {
    format!("{x:.6}")
}

pub fn write_matches(path: impl AsRef<Path>, matches: &[FirmMatch]) -> Result<()> {
    let path = path.as_ref();
    let mut w = writer(path)?;
    w.write_record(MATCH_COLUMNS).map_err(|e| csv_err(path, e))?;
    for m in matches {
        for c in &m.controls {
            w.write_record([
                m.cohort_id.as_str(),
                &m.treated_firm_id,
                &c.control_firm_id,
                &f6(c.score),
                &f6(c.tech),
                &f6(c.age_dev),
                &f6(c.size_dev),
            ])
            .map_err(|e| csv_err(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_pairs(path: impl AsRef<Path>, pairs: &[InventorPair]) -> Result<()> {
    let path = path.as_ref();
    let mut w = writer(path)?;
    w.write_record(PAIR_COLUMNS).map_err(|e| csv_err(path, e))?;
    for p in pairs {
        w.write_record([
            p.pair_id.as_str(),
            &p.cohort_id,
            &p.treated_inventor_id,
            &p.control_inventor_id,
            &p.treated_firm_id,
            &p.control_firm_id,
            &p.tech.to_string(),
            &p.tenure_dev.to_string(),
            &p.activity_dev.to_string(),
            &p.score.to_string(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_pairs(path: impl AsRef<Path>) -> Result<Vec<InventorPair>> {
    let path = path.as_ref();
    let mut rdr = open_reader(path)?;
    if !check_header(path, &mut rdr, &PAIR_COLUMNS)? {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| csv_err(path, e))?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let num = |i: usize| -> Result<f64> {
            row[i]
                .parse::<f64>()
                .map_err(|_| parse_err(path, line, PAIR_COLUMNS[i], format!("not a number: `{}`", &row[i])))
        };
        out.push(InventorPair {
            pair_id: row[0].to_string(),
            cohort_id: row[1].to_string(),
            treated_inventor_id: row[2].to_string(),
            control_inventor_id: row[3].to_string(),
            treated_firm_id: row[4].to_string(),
            control_firm_id: row[5].to_string(),
            tech: num(6)?,
            tenure_dev: num(7)?,
            activity_dev: num(8)?,
            score: num(9)?,
        });
    }
    Ok(out)
}

pub fn write_balance(path: impl AsRef<Path>, rows: &[BalanceRow]) -> Result<()> {
    let path = path.as_ref();
    let mut w = writer(path)?;
    w.write_record(["variable", "treated_mean", "treated_std", "treated_obs", "control_mean", "control_std", "control_obs"])
        .map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record([
            r.variable,
            &f6(r.treated.mean),
            &f6(r.treated.std),
            &r.treated.n.to_string(),
            &f6(r.control.mean),
            &f6(r.control.std),
            &r.control.n.to_string(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_overlap(scores_path: impl AsRef<Path>, density_path: impl AsRef<Path>, o: &PropensityOverlap) -> Result<()> {
    let path = scores_path.as_ref();
    let mut w = writer(path)?;
    w.write_record(["pair_id", "inventor_id", "treated", "score"]).map_err(|e| csv_err(path, e))?;
    for s in &o.scores {
        w.write_record([s.pair_id.as_str(), &s.inventor_id, if s.treated { "1" } else { "0" }, &f6(s.score)])
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;

    let path = density_path.as_ref();
    let mut w = writer(path)?;
    w.write_record(["bin_start", "bin_end", "density_treated", "density_control"])
        .map_err(|e| csv_err(path, e))?;
    for i in 0..OVERLAP_BINS {
        w.write_record([
            f6(o.bin_edges[i]),
            f6(o.bin_edges[i + 1]),
            f6(o.density_treated[i]),
            f6(o.density_control[i]),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::tests::patent;
    use crate::cohort::{StudyWindow, TreatmentCohort};
    use crate::corpus::{DealEvent, DealType};
    use proptest::prelude::*;

    fn profile(pairs: &[(&str, u32)]) -> TechProfile {
        TechProfile {
            owner: "x".into(),
            phase: YearRange { start: 0, end: 1 },
            counts: pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }

    fn dense(v: &[u32]) -> TechProfile {
        let named: Vec<(String, u32)> = v.iter().enumerate().map(|(i, c)| (format!("G{i}"), *c)).collect();
        TechProfile {
            owner: "x".into(),
            phase: YearRange { start: 0, end: 1 },
            counts: named.into_iter().collect(),
        }
    }

    #[test]
    fn cosine_hand_computed() {
        let s = cosine_similarity(&dense(&[1, 2, 0]), &dense(&[2, 1, 0])).unwrap();
        assert!((s - 0.8).abs() < 1e-12);
        let p = profile(&[("A01B001", 3)]);
        assert_eq!(cosine_similarity(&p, &p).unwrap(), 1.0);
        assert_eq!(cosine_similarity(&p, &profile(&[("C08G063", 2)])).unwrap(), 0.0);
        assert!(cosine_similarity(&p, &dense(&[0, 0])).is_err());
    }

    #[test]
    fn deviation_cases() {
        assert_eq!(deviation(6.0, 2.0).unwrap(), 0.5);
        assert_eq!(deviation(4.0, 4.0).unwrap(), 0.0);
        assert_eq!(deviation(10.0, 0.0).unwrap(), 1.0);
        assert!(deviation(0.0, 0.0).is_err());
    }

    #[test]
    fn combined_similarity_cases() {
        let w = SimilarityWeights::default();
        assert_eq!(combined_similarity(1.0, 0.0, 0.0, &w).unwrap(), 1.0);
        assert!((combined_similarity(0.8, 0.5, 0.0, &w).unwrap() - 0.775).abs() < 1e-12);
        assert_eq!(combined_similarity(0.0, 1.0, 1.0, &w).unwrap(), 0.0);
        let bad = SimilarityWeights {
            w_tau: 0.5,
            w_age: 0.3,
            w_patents: 0.3,
        };
        assert!(combined_similarity(1.0, 0.0, 0.0, &bad).is_err());
    }

    #[test]
    fn profile_counts_each_distinct_group_once_per_patent() {
        let corpus = Corpus::new(vec![
            patent("p1", 1990, "F", &["i1"], &["C08G063"]),
            patent("p2", 1990, "F", &["i1"], &["C08G063"]),
            patent("p3", 1991, "G", &["i1"], &["A61K038", "C07K014", "A61K038"]),
        ]);
        let r = YearRange { start: 1988, end: 1995 };
        let f = tech_profile(ProfileOwner::Firm("F"), &corpus, r).unwrap();
        assert_eq!(f.counts, [("C08G063".to_string(), 2)].into());
        let i = tech_profile(ProfileOwner::Inventor("i1"), &corpus, r).unwrap();
        // Oracle: recount from the raw records.
        let mut oracle: BTreeMap<String, u32> = BTreeMap::new();
        for p in corpus.patents().iter().filter(|p| p.has_inventor("i1")) {
            let mut seen = BTreeSet::new();
            for g in &p.ipc_main_groups {
                if seen.insert(g) {
                    *oracle.entry(g.clone()).or_default() += 1;
                }
            }
        }
        assert_eq!(i.counts, oracle);
        assert!(tech_profile(ProfileOwner::Firm("F"), &corpus, YearRange { start: 2000, end: 2001 }).is_err());
    }

    fn feat(id: &str, firm: &str, counts: &[(&str, u32)], tenure: f64, activity: f64) -> InventorFeatures {
        InventorFeatures {
            inventor_id: id.into(),
            firm_id: firm.into(),
            profile: profile(counts),
            tenure,
            activity,
        }
    }

    #[test]
    fn singleton_pair() {
        let t = [feat("t1", "T", &[("A", 2)], 5.0, 2.0)];
        let c = [feat("c1", "C", &[("A", 3)], 5.0, 2.0)];
        let pairs = match_inventors("k", &t, &c, &SimilarityWeights::default(), 0.9).unwrap();
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].pair_id, "k/0000");
    }

    #[test]
    fn competing_treated_inventors() {
        let w = SimilarityWeights::default();
        let t = [feat("t1", "T", &[("A", 2)], 5.0, 2.0), feat("t2", "T", &[("A", 2)], 6.0, 2.0)];
        let c = [feat("c1", "C", &[("A", 1)], 6.0, 2.0)];
        let pairs = match_inventors("k", &t, &c, &w, 0.9).unwrap();
        // Brute force over both assignments: the one with the larger edge score wins.
        let s = |x: &InventorFeatures| {
            combined_similarity(
                cosine_similarity(&x.profile, &c[0].profile).unwrap(),
                deviation(x.tenure, c[0].tenure).unwrap(),
                deviation(x.activity, c[0].activity).unwrap(),
                &w,
            )
            .unwrap()
        };
        let winner = if s(&t[0]) > s(&t[1]) { "t1" } else { "t2" };
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].treated_inventor_id, winner);
        assert_eq!(winner, "t2");
    }

    #[test]
    fn below_threshold_yields_no_pair() {
        let t = [feat("t1", "T", &[("A", 2)], 5.0, 2.0)];
        let c = [feat("c1", "C", &[("B", 3)], 5.0, 2.0)];
        assert!(match_inventors("k", &t, &c, &SimilarityWeights::default(), 0.9).unwrap().is_empty());
    }

    fn cohort_fixture() -> (Corpus, TreatmentCohort) {
        let mut patents = vec![
            patent("t1", 1989, "T", &["a"], &["C08G063"]),
            patent("t2", 1990, "T", &["a"], &["C08G063"]),
            patent("t0", 1985, "T", &["a"], &["C08G063"]),
        ];
        for (k, f) in ["C1", "C2", "C3", "C4"].iter().enumerate() {
            patents.push(patent(&format!("{f}a"), 1989, f, &[&format!("x{k}")], &["C08G063"]));
            patents.push(patent(&format!("{f}b"), 1985 - k as i32 * 4, f, &[&format!("x{k}")], &["C08G063"]));
            if k >= 2 {
                patents.push(patent(&format!("{f}c"), 1990, f, &[&format!("x{k}")], &["B01J000", "C08G063"]));
            }
        }
        let corpus = Corpus::new(patents);
        let cohort = TreatmentCohort {
            cohort_id: "T@1995".into(),
            deal: DealEvent {
                acquired_id: "T".into(),
                acquired_name: "T".into(),
                acquirer_id: "Q".into(),
                acquirer_name: "Q".into(),
                deal_year: 1995,
                deal_type: DealType::Acquisition,
            },
            window: StudyWindow::new(1995, 7, 4, 4).unwrap(),
            treated_firm_id: "T".into(),
            treated_employees: ["a".to_string()].into(),
            control_firm_candidates: ["C1", "C2", "C3", "C4"].iter().map(|s| s.to_string()).collect(),
        };
        (corpus, cohort)
    }

    #[test]
    fn firm_threshold_is_inclusive_and_monotone() {
        let (corpus, cohort) = cohort_fixture();
        let w = SimilarityWeights::default();
        let all = match_firms(&cohort, &corpus, &w, 0.0).unwrap();
        assert_eq!(all.controls.len(), 4);
        assert!(all.controls.windows(2).all(|p| p[0].score >= p[1].score));
        let s = all.controls[1].score;
        let at = match_firms(&cohort, &corpus, &w, s).unwrap();
        assert!(at.controls.iter().any(|c| c.score == s));
        let lo = match_firms(&cohort, &corpus, &w, 0.8).unwrap().controls.len();
        let hi = match_firms(&cohort, &corpus, &w, 0.9).unwrap().controls.len();
        assert!(hi <= lo);
        let none = match_firms(&cohort, &corpus, &w, 1.0).unwrap();
        assert!(none.controls.iter().all(|c| c.score >= 1.0));
        assert!(match_firms(&cohort, &corpus, &w, 1.5).is_err());
    }

    #[test]
    fn mirrored_pairs_balance() {
        let c = Covariates {
            exclusivity: 0.75,
            age: 7,
            tenure: 5,
            patents: 3,
            lpatents: 3f64.ln(),
            deal_year: 1995,
        };
        let pairs: Vec<PairCovariates> = (0..5)
            .map(|i| PairCovariates {
                pair_id: format!("p{i}"),
                treated: Covariates { age: 5 + i, ..c.clone() },
                control: Covariates { age: 5 + i, ..c.clone() },
            })
            .collect();
        let rows = balance_table(&pairs).unwrap();
        assert_eq!(rows.len(), 4);
        for r in &rows {
            assert_eq!(r.treated, r.control);
            assert_eq!(r.treated.n, 5);
        }
        assert!(render_balance(&rows).contains("Std.Dev."));
    }

    #[test]
    fn overlap_densities_integrate_to_one() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let draw = |rng: &mut rand_chacha::ChaCha8Rng| {
            let n = rng.random_range(1..8usize);
            Covariates {
                exclusivity: rng.random_range(0.4..=1.0),
                age: rng.random_range(4..16),
                tenure: 4,
                patents: n,
                lpatents: (n as f64).ln(),
                deal_year: 1995,
            }
        };
        let pairs: Vec<PairCovariates> = (0..2000)
            .map(|i| PairCovariates {
                pair_id: format!("p{i}"),
                treated: draw(&mut rng),
                control: draw(&mut rng),
            })
            .collect();
        let ids: Vec<(String, String)> = (0..2000).map(|i| (format!("t{i}"), format!("c{i}"))).collect();
        let o = propensity_overlap(&pairs, &ids).unwrap();
        let w = 1.0 / OVERLAP_BINS as f64;
        assert!((o.density_treated.iter().sum::<f64>() * w - 1.0).abs() < 1e-12);
        assert!((o.density_control.iter().sum::<f64>() * w - 1.0).abs() < 1e-12);
        let mean = |t: bool| {
            let v: Vec<f64> = o.scores.iter().filter(|s| s.treated == t).map(|s| s.score).collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        assert!((mean(true) - mean(false)).abs() < 0.01);
    }

    #[test]
    fn constant_covariates_fail() {
        let c = Covariates {
            exclusivity: 1.0,
            age: 7,
            tenure: 5,
            patents: 2,
            lpatents: 2f64.ln(),
            deal_year: 1995,
        };
        let pairs: Vec<PairCovariates> = (0..4)
            .map(|i| PairCovariates {
                pair_id: format!("p{i}"),
                treated: c.clone(),
                control: c.clone(),
            })
            .collect();
        let ids: Vec<(String, String)> = (0..4).map(|i| (format!("t{i}"), format!("c{i}"))).collect();
        assert!(propensity_overlap(&pairs, &ids).is_err());
    }

    #[test]
    fn pairs_file_round_trip() {
        let p = InventorPair {
            pair_id: "T@1995/0000".into(),
            cohort_id: "T@1995".into(),
            treated_inventor_id: "a".into(),
            control_inventor_id: "b".into(),
            treated_firm_id: "T".into(),
            control_firm_id: "C".into(),
            tech: 0.1 + 0.2,
            tenure_dev: 1.0 / 3.0,
            activity_dev: 0.0,
            score: 0.9123456789,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pairs.csv");
        write_pairs(&path, std::slice::from_ref(&p)).unwrap();
        assert_eq!(read_pairs(&path).unwrap(), vec![p]);
    }

    proptest! {
        #[test]
        fn cosine_bounded_symmetric_scale_invariant(
            a in proptest::collection::vec(0u32..20, 4),
            b in proptest::collection::vec(0u32..20, 4),
            k in 1u32..6,
        ) {
            prop_assume!(a.iter().any(|&x| x > 0) && b.iter().any(|&x| x > 0));
            let s = cosine_similarity(&dense(&a), &dense(&b)).unwrap();
            prop_assert!((0.0..=1.0).contains(&s));
            prop_assert!((s - cosine_similarity(&dense(&b), &dense(&a)).unwrap()).abs() < 1e-12);
            let scaled: Vec<u32> = a.iter().map(|x| x * k).collect();
            prop_assert!((s - cosine_similarity(&dense(&scaled), &dense(&b)).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn deviation_symmetric_scale_invariant(x in 0.0f64..100.0, y in 0.01f64..100.0, c in 0.01f64..50.0) {
            let d = deviation(x, y).unwrap();
            prop_assert!((d - deviation(y, x).unwrap()).abs() < 1e-12);
            prop_assert!((d - deviation(c * x, c * y).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn combined_similarity_monotone(
            t in 0.0f64..1.0, a in 0.0f64..1.0, p in 0.0f64..1.0, e in 0.0f64..0.5,
        ) {
            let w = SimilarityWeights::default();
            let s = combined_similarity(t, a, p, &w).unwrap();
            prop_assert!(combined_similarity((t + e).min(1.0), a, p, &w).unwrap() >= s);
            prop_assert!(combined_similarity(t, (a + e).min(1.0), p, &w).unwrap() <= s);
            prop_assert!(combined_similarity(t, a, (p + e).min(1.0), &w).unwrap() <= s);
        }

        #[test]
        fn greedy_pairing_is_one_to_one(
            specs in proptest::collection::vec((0u32..3, 1u32..4, 1u32..8, 1u32..6), 2..14),
            split in 1usize..13,
        ) {
            let split = split.min(specs.len() - 1);
            let mk = |i: usize, s: &(u32, u32, u32, u32), firm: &str| {
                feat(&format!("{firm}{i}"), firm, &[("A", s.0 + 1), ("B", s.1)], f64::from(s.2), f64::from(s.3))
            };
            let t: Vec<_> = specs[..split].iter().enumerate().map(|(i, s)| mk(i, s, "T")).collect();
            let c: Vec<_> = specs[split..].iter().enumerate().map(|(i, s)| mk(i, s, "C")).collect();
            let w = SimilarityWeights::default();
            let pairs = match_inventors("k", &t, &c, &w, 0.7).unwrap();
            let tset: BTreeSet<_> = pairs.iter().map(|p| &p.treated_inventor_id).collect();
            let cset: BTreeSet<_> = pairs.iter().map(|p| &p.control_inventor_id).collect();
            prop_assert_eq!(tset.len(), pairs.len());
            prop_assert_eq!(cset.len(), pairs.len());
            prop_assert!(pairs.iter().all(|p| p.score >= 0.7));
            let strict = match_inventors("k", &t, &c, &w, 0.85).unwrap();
            prop_assert!(strict.len() <= pairs.len());
            prop_assert_eq!(match_inventors("k", &t, &c, &w, 0.7).unwrap(), pairs);
        }
    }
}
