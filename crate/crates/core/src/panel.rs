//! Two-period inventor panel: Active, Stay, covariates and treatment dosage.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use log::warn;
use rayon::prelude::*;

use crate::cohort::{patents_in, CohortBuild, StudyWindow, TreatmentCohort, YearRange};
use crate::corpus::{check_header, csv_err, open_reader, parse_err, resolve_aliases, AliasReview, AliasSet, Corpus};
use crate::error::{Error, Result};
use crate::matching::{cosine_similarity, tech_profile, InventorPair, PairCovariates, ProfileOwner, TechProfile};

pub const PANEL_COLUMNS: [&str; 16] = [
    "pair_id",
    "inventor_id",
    "firm_id",
    "deal_cluster_id",
    "deal_year",
    "period",
    "acquired",
    "active",
    "stay",
    "exclusivity",
    "age",
    "tenure",
    "patents",
    "lpatents",
    "dosage",
    "similarity",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Period {
    Before = 0,
    After = 1,
}

/// Treatment level by technological similarity to the acquirer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Dosage {
    Control,
    Low,
    Medium,
    High,
    /// Treated inventor without a similarity score (acquirer has no profile).
    Unscored,
}

impl Dosage {
    pub fn as_str(self) -> &'static str {
        match self {
            Dosage::Control => "control",
            Dosage::Low => "low_sim",
            Dosage::Medium => "medium_sim",
            Dosage::High => "high_sim",
            Dosage::Unscored => "unscored",
        }
    }
}

impl fmt::Display for Dosage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Dosage {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "control" => Dosage::Control,
            "low_sim" => Dosage::Low,
            "medium_sim" => Dosage::Medium,
            "high_sim" => Dosage::High,
            "unscored" => Dosage::Unscored,
            other => return Err(format!("unknown dosage `{other}`")),
        })
    }
}

/// One inventor in one period.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelObservation {
    pub pair_id: String,
    pub inventor_id: String,
    /// The inventor's own employer (treated or control firm).
    pub firm_id: String,
    /// The treated firm's deal, shared by both members of a pair.
    pub deal_cluster_id: String,
    pub deal_year: i32,
    pub period: Period,
    pub acquired: bool,
    pub active: bool,
    /// `None` exactly when `active` is false.
    pub stay: Option<bool>,
    pub exclusivity: f64,
    pub age: i32,
    pub tenure: i32,
    pub patents: usize,
    pub lpatents: f64,
    pub dosage: Dosage,
    pub similarity: Option<f64>,
}

/// Inventor characteristics fixed at the deal.
#[derive(Debug, Clone, PartialEq)]
pub struct Covariates {
    /// Focal share of recruitment-phase patents.
    pub exclusivity: f64,
    /// Years since the first patent anywhere.
    pub age: i32,
    /// Years since the first patent with the focal firm.
    pub tenure: i32,
    /// Recruitment-phase patent count.
    pub patents: usize,
    pub lpatents: f64,
    pub deal_year: i32,
}

pub fn outcome_active(inventor_id: &str, corpus: &Corpus, phase: YearRange) -> bool {
    patents_in(corpus, inventor_id, phase).next().is_some()
}

/// `None` when inactive; otherwise whether any filing in `phase` went to
/// `focal` or, when given, to a member of `aliases`.
pub fn outcome_stay(inventor_id: &str, corpus: &Corpus, phase: YearRange, focal: &str, aliases: Option<&AliasSet>) -> Option<bool> {
    let mut active = false;
    for p in patents_in(corpus, inventor_id, phase) {
        active = true;
        if p.assignee_id == focal || aliases.is_some_and(|a| a.contains(&p.assignee_id)) {
            return Some(true);
        }
    }
    active.then_some(false)
}

pub fn covariates(inventor_id: &str, corpus: &Corpus, focal: &str, window: &StudyWindow) -> Result<Covariates> {
    let rec: Vec<_> = patents_in(corpus, inventor_id, window.recruitment()).collect();
    if rec.is_empty() {
        return Err(Error::validation(format!(
            "inventor {inventor_id} has no recruitment-phase patents"
        )));
    }
    let focal_count = rec.iter().filter(|p| p.assignee_id == focal).count();
    let first = corpus
        .first_year_of_inventor(inventor_id)
        .ok_or_else(|| Error::validation(format!("inventor {inventor_id} absent from corpus")))?;
    let first_focal = corpus
        .first_year_with_assignee(inventor_id, focal)
        .ok_or_else(|| Error::validation(format!("inventor {inventor_id} never filed for {focal}")))?;
    let t = window.event_year;
    Ok(Covariates {
        exclusivity: focal_count as f64 / rec.len() as f64,
        age: t - first,
        tenure: t - first_focal,
        patents: rec.len(),
        lpatents: (rec.len() as f64).ln(),
        deal_year: t,
    })
}

/// Cosine between the inventor's before-phase profile (recruitment phase
/// when the inventor filed nothing before the deal) and the acquirer profile.
pub fn dosage_similarity(inventor_id: &str, acquirer: &TechProfile, corpus: &Corpus, window: &StudyWindow) -> Option<f64> {
    let own = tech_profile(ProfileOwner::Inventor(inventor_id), corpus, window.before())
        .or_else(|_| tech_profile(ProfileOwner::Inventor(inventor_id), corpus, window.recruitment()))
        .ok()?;
    cosine_similarity(&own, acquirer).ok()
}

/// Tercile cut points `(c1, c2)`: the ⌈n/3⌉-th and ⌈2n/3⌉-th smallest values.
pub fn tercile_cuts(values: &[f64]) -> Option<(f64, f64)> {
    let n = values.len();
    if n < 3 {
        return None;
    }
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    Some((s[n.div_ceil(3) - 1], s[(2 * n).div_ceil(3) - 1]))
}

/// Similarities closer than this count as tied. Cosines of proportional
/// profiles differ in the last bits depending on the counts.
pub const SIMILARITY_TIE_TOLERANCE: f64 = 1e-9;

/// Low / medium / high by pooled terciles; a value equal to a cut point goes
/// to the lower bucket. Missing scores stay [`Dosage::Unscored`].
pub fn assign_dosage(similarities: &[Option<f64>]) -> (Vec<Dosage>, Option<(f64, f64)>) {
    let scored: Vec<f64> = similarities.iter().flatten().copied().collect();
    let Some((c1, c2)) = tercile_cuts(&scored) else {
        if !scored.is_empty() {
            warn!("fewer than three scored treated inventors; dosage left unscored");
        }
        return (vec![Dosage::Unscored; similarities.len()], None);
    };
    let labels = similarities
        .iter()
        .map(|s| match s {
            None => Dosage::Unscored,
            Some(v) if *v <= c1 + SIMILARITY_TIE_TOLERANCE => Dosage::Low,
            Some(v) if *v <= c2 + SIMILARITY_TIE_TOLERANCE => Dosage::Medium,
            Some(_) => Dosage::High,
        })
        .collect();
    (labels, Some((c1, c2)))
}

#[derive(Debug, Clone, Default)]
pub struct Panel {
    /// Sorted by pair, period, treated member first.
    pub rows: Vec<PanelObservation>,
    pub cut_points: Option<(f64, f64)>,
}

impl Panel {
    pub fn pairs(&self) -> usize {
        self.rows.len() / 4
    }
}

/// Alias set for every cohort, with review decisions applied.
pub fn resolve_cohort_aliases(
    cohorts: &[TreatmentCohort],
    corpus: &Corpus,
    threshold: f64,
    reviews: &[AliasReview],
) -> Result<BTreeMap<String, AliasSet>> {
    let assignees: Vec<(&str, &str)> = corpus.assignees().collect();
    let mut out = BTreeMap::new();
    for c in cohorts {
        let mut set = resolve_aliases(&c.deal, assignees.iter().copied(), threshold)?;
        set.apply_review(reviews);
        out.insert(c.cohort_id.clone(), set);
    }
    Ok(out)
}

fn cohort_of<'a>(build: &'a CohortBuild, pair: &InventorPair) -> Result<&'a TreatmentCohort> {
    build
        .cohort(&pair.cohort_id)
        .ok_or_else(|| Error::validation(format!("pair {} references unknown cohort {}", pair.pair_id, pair.cohort_id)))
}

fn check_pair(build: &CohortBuild, cohort: &TreatmentCohort, pair: &InventorPair) -> Result<()> {
    if !cohort.treated_employees.contains(&pair.treated_inventor_id) {
        return Err(Error::validation(format!(
            "pair {} references dropped treated inventor {}",
            pair.pair_id, pair.treated_inventor_id
        )));
    }
    if build.excluded_inventors.contains(&pair.control_inventor_id) {
        return Err(Error::validation(format!(
            "pair {} references excluded control inventor {}",
            pair.pair_id, pair.control_inventor_id
        )));
    }
    Ok(())
}

/// Covariates of both members of every pair.
pub fn pair_covariates(pairs: &[InventorPair], build: &CohortBuild, corpus: &Corpus) -> Result<Vec<PairCovariates>> {
    pairs
        .par_iter()
        .map(|p| {
            let c = cohort_of(build, p)?;
            check_pair(build, c, p)?;
            Ok(PairCovariates {
                pair_id: p.pair_id.clone(),
                treated: covariates(&p.treated_inventor_id, corpus, &p.treated_firm_id, &c.window)?,
                control: covariates(&p.control_inventor_id, corpus, &p.control_firm_id, &c.window)?,
            })
        })
        .collect()
}

struct Member<'a> {
    inventor: &'a str,
    firm: &'a str,
    acquired: bool,
}

fn member_rows(
    pair: &InventorPair,
    cohort: &TreatmentCohort,
    m: &Member,
    corpus: &Corpus,
    aliases: Option<&AliasSet>,
    similarity: Option<f64>,
) -> Result<[PanelObservation; 2]> {
    let w = &cohort.window;
    let cov = covariates(m.inventor, corpus, m.firm, w)?;
    let row = |period: Period| {
        let (range, alias) = match period {
            Period::Before => (w.before(), None),
            Period::After => (w.after(), if m.acquired { aliases } else { None }),
        };
        let stay = outcome_stay(m.inventor, corpus, range, m.firm, alias);
        PanelObservation {
            pair_id: pair.pair_id.clone(),
            inventor_id: m.inventor.to_string(),
            firm_id: m.firm.to_string(),
            deal_cluster_id: cohort.cohort_id.clone(),
            deal_year: w.event_year,
            period,
            acquired: m.acquired,
            active: stay.is_some(),
            stay,
            exclusivity: cov.exclusivity,
            age: cov.age,
            tenure: cov.tenure,
            patents: cov.patents,
            lpatents: cov.lpatents,
            dosage: if m.acquired { Dosage::Unscored } else { Dosage::Control },
            similarity: if m.acquired { similarity } else { None },
        }
    };
    Ok([row(Period::Before), row(Period::After)])
}

/// Four rows per pair: both members before and after the deal.
///
/// Treated inventors' after-period Stay counts filings for the acquired
/// firm, the acquirer and confirmed aliases; controls count their own
/// employer only. Dosage terciles are pooled over every treated inventor.
pub fn build_panel(
    pairs: &[InventorPair],
    build: &CohortBuild,
    corpus: &Corpus,
    aliases: &BTreeMap<String, AliasSet>,
) -> Result<Panel> {
    let acquirer_profiles: BTreeMap<&str, Option<TechProfile>> = build
        .cohorts
        .iter()
        .map(|c| {
            let p = tech_profile(ProfileOwner::Firm(&c.deal.acquirer_id), corpus, c.window.recruitment());
            if p.is_err() {
                warn!("acquirer {} has no recruitment-phase profile; its inventors stay unscored", c.deal.acquirer_id);
            }
            (c.cohort_id.as_str(), p.ok())
        })
        .collect();

    let chunks: Vec<[PanelObservation; 4]> = pairs
        .par_iter()
        .map(|p| {
            let c = cohort_of(build, p)?;
            check_pair(build, c, p)?;
            let alias = aliases.get(&c.cohort_id);
            let sim = acquirer_profiles
                .get(c.cohort_id.as_str())
                .and_then(|a| a.as_ref())
                .and_then(|a| dosage_similarity(&p.treated_inventor_id, a, corpus, &c.window));
            let t = Member {
                inventor: &p.treated_inventor_id,
                firm: &p.treated_firm_id,
                acquired: true,
            };
            let k = Member {
                inventor: &p.control_inventor_id,
                firm: &p.control_firm_id,
                acquired: false,
            };
            let [tb, ta] = member_rows(p, c, &t, corpus, alias, sim)?;
            let [cb, ca] = member_rows(p, c, &k, corpus, None, None)?;
            Ok([tb, cb, ta, ca])
        })
        .collect::<Result<_>>()?;
    let mut rows: Vec<PanelObservation> = chunks.into_iter().flatten().collect();

    let treated_idx: Vec<usize> = (0..rows.len())
        .filter(|&i| rows[i].acquired && rows[i].period == Period::Before)
        .collect();
    let sims: Vec<Option<f64>> = treated_idx.iter().map(|&i| rows[i].similarity).collect();
    let (labels, cut_points) = assign_dosage(&sims);
    let by_pair: BTreeMap<String, Dosage> = treated_idx
        .iter()
        .zip(&labels)
        .map(|(&i, &d)| (rows[i].pair_id.clone(), d))
        .collect();
    for r in rows.iter_mut().filter(|r| r.acquired) {
        r.dosage = by_pair[&r.pair_id];
    }
    sort_rows(&mut rows);
    Ok(Panel { rows, cut_points })
}

fn sort_rows(rows: &mut [PanelObservation]) {
    rows.sort_by(|a, b| {
        (&a.pair_id, a.period, !a.acquired, &a.inventor_id).cmp(&(&b.pair_id, b.period, !b.acquired, &b.inventor_id))
    });
}

fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

pub fn write_panel(path: impl AsRef<Path>, rows: &[PanelObservation]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(PANEL_COLUMNS).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record([
            r.pair_id.as_str(),
            &r.inventor_id,
            &r.firm_id,
            &r.deal_cluster_id,
            &r.deal_year.to_string(),
            &(r.period as u8).to_string(),
            flag(r.acquired),
            flag(r.active),
            r.stay.map(flag).unwrap_or(""),
            &r.exclusivity.to_string(),
            &r.age.to_string(),
            &r.tenure.to_string(),
            &r.patents.to_string(),
            &r.lpatents.to_string(),
            r.dosage.as_str(),
            &r.similarity.map(|s| s.to_string()).unwrap_or_default(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_panel(path: impl AsRef<Path>) -> Result<Vec<PanelObservation>> {
    let path = path.as_ref();
    let mut rdr = open_reader(path)?;
    if !check_header(path, &mut rdr, &PANEL_COLUMNS)? {
        return Ok(Vec::new());
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let bad = |i: usize| parse_err(path, line, PANEL_COLUMNS[i], format!("cannot parse `{}`", &rec[i]));
        let int = |i: usize| rec[i].parse::<i64>().map_err(|_| bad(i));
        let float = |i: usize| rec[i].parse::<f64>().map_err(|_| bad(i));
        let bit = |i: usize| match &rec[i] {
            "0" => Ok(false),
            "1" => Ok(true),
            _ => Err(bad(i)),
        };
        let period = match &rec[5] {
            "0" => Period::Before,
            "1" => Period::After,
            _ => return Err(bad(5)),
        };
        let active = bit(7)?;
        let stay = if rec[8].is_empty() { None } else { Some(bit(8)?) };
        if active != stay.is_some() {
            return Err(parse_err(path, line, "stay", "stay must be empty exactly when active is 0"));
        }
        rows.push(PanelObservation {
            pair_id: rec[0].to_string(),
            inventor_id: rec[1].to_string(),
            firm_id: rec[2].to_string(),
            deal_cluster_id: rec[3].to_string(),
            deal_year: int(4)? as i32,
            period,
            acquired: bit(6)?,
            active,
            stay,
            exclusivity: float(9)?,
            age: int(10)? as i32,
            tenure: int(11)? as i32,
            patents: int(12)? as usize,
            lpatents: float(13)?,
            dosage: rec[14].parse().map_err(|_| bad(14))?,
            similarity: if rec[15].is_empty() { None } else { Some(float(15)?) },
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::tests::patent;
    use crate::cohort::{build_cohorts, WindowParams};
    use crate::corpus::{DealEvent, DealType, YearSpan};
    use proptest::prelude::*;

    fn r(start: i32, end: i32) -> YearRange {
        YearRange { start, end }
    }

    #[test]
    fn active_boundaries() {
        let c = Corpus::new(vec![patent("p", 1995, "F", &["i"], &["A01B001"])]);
        assert!(!outcome_active("j", &c, r(1995, 1999)));
        assert!(outcome_active("i", &c, r(1995, 1999)));
        assert!(!outcome_active("i", &c, r(1991, 1995)));
    }

    fn alias(focal: &str, acquirer: &str) -> AliasSet {
        AliasSet {
            focal_firm_id: focal.into(),
            acquirer_id: acquirer.into(),
            confirmed_aliases: [focal.to_string(), acquirer.to_string()].into(),
            review_queue: Vec::new(),
            rejected: Default::default(),
            threshold: 0.7,
        }
    }

    #[test]
    fn stay_rules() {
        let c = Corpus::new(vec![
            patent("p1", 1996, "ACQ", &["i"], &["A01B001"]),
            patent("p2", 1997, "OTHER", &["i"], &["A01B001"]),
            patent("p3", 1996, "OTHER", &["j"], &["A01B001"]),
        ]);
        let a = alias("T", "ACQ");
        let after = r(1995, 1999);
        assert_eq!(outcome_stay("i", &c, after, "T", Some(&a)), Some(true));
        assert_eq!(outcome_stay("j", &c, after, "T", Some(&a)), Some(false));
        assert_eq!(outcome_stay("k", &c, after, "T", Some(&a)), None);
        // Without the alias set only the focal firm counts.
        assert_eq!(outcome_stay("i", &c, after, "T", None), Some(false));
    }

    #[test]
    fn covariate_examples() {
        let c = Corpus::new(vec![
            patent("p0", 1985, "X", &["i"], &["A01B001"]),
            patent("p1", 1988, "T", &["i"], &["A01B001"]),
            patent("p2", 1989, "T", &["i"], &["A01B001"]),
            patent("p3", 1990, "T", &["i"], &["A01B001"]),
            patent("p4", 1990, "Y", &["i"], &["A01B001"]),
            patent("q1", 1990, "T", &["j"], &["A01B001"]),
        ]);
        let w = StudyWindow::new(1995, 7, 4, 4).unwrap();
        let cv = covariates("i", &c, "T", &w).unwrap();
        assert_eq!(cv.exclusivity, 0.75);
        assert_eq!(cv.age, 10);
        assert_eq!(cv.tenure, 7);
        let cj = covariates("j", &c, "T", &w).unwrap();
        assert_eq!(cj.age, 5);
        assert_eq!(cj.lpatents, 0.0);
    }

    #[test]
    fn terciles_even_split_and_ties() {
        let v: Vec<Option<f64>> = (1..=9).map(|i| Some(f64::from(i) / 10.0)).collect();
        let (labels, cuts) = assign_dosage(&v);
        assert_eq!(cuts, Some((0.3, 0.6)));
        for d in [Dosage::Low, Dosage::Medium, Dosage::High] {
            assert_eq!(labels.iter().filter(|&&l| l == d).count(), 3);
        }
        // A value equal to a cut point sits in the lower bucket.
        let idx = v.iter().position(|s| *s == Some(0.3)).unwrap();
        assert_eq!(labels[idx], Dosage::Low);
        let (few, none) = assign_dosage(&[Some(0.1), Some(0.2), None]);
        assert!(none.is_none() && few.iter().all(|&d| d == Dosage::Unscored));
    }

    #[test]
    fn rounding_noise_does_not_split_ties() {
        let half = [0.5 - f64::EPSILON, 0.5, 0.5 + f64::EPSILON];
        let v: Vec<Option<f64>> = [0.0, 0.0, 0.0]
            .into_iter()
            .chain(half)
            .chain([0.8, 0.8, 0.8])
            .map(Some)
            .collect();
        let (labels, _) = assign_dosage(&v);
        assert!(labels[3..6].iter().all(|&d| d == Dosage::Medium), "{labels:?}");
    }

    /// Two firms in one IPC class, one deal; returns the pieces needed to build a panel.
    fn mini() -> (Corpus, CohortBuild, Vec<InventorPair>) {
        let mut p = Vec::new();
        for (k, firm) in ["T", "C"].iter().enumerate() {
            for i in 0..10 {
                let inv = format!("{firm}{i}");
                p.push(patent(&format!("{inv}r"), 1989, firm, &[&inv], &["C08G063"]));
                p.push(patent(&format!("{inv}b"), 1992, firm, &[&inv], &["C08G063"]));
                if i % 3 != 0 {
                    let dest = if i % 2 == 0 && k == 0 { "ACQ" } else if i % 2 == 0 { firm } else { "Z" };
                    p.push(patent(&format!("{inv}a"), 1996, dest, &[&inv], &["C08G063"]));
                }
            }
        }
        p.push(patent("acq", 1989, "ACQ", &["q"], &["C08G063", "B01J000"]));
        let corpus = Corpus::new(p);
        let deals = vec![
            DealEvent {
                acquired_id: "T".into(),
                acquired_name: "Tee".into(),
                acquirer_id: "ACQ".into(),
                acquirer_name: "Acquirer".into(),
                deal_year: 1995,
                deal_type: DealType::Acquisition,
            },
            DealEvent {
                acquired_id: "Z".into(),
                acquired_name: "Zed".into(),
                acquirer_id: "Y".into(),
                acquirer_name: "Why".into(),
                deal_year: 2001,
                deal_type: DealType::OtherMa,
            },
        ];
        let build = build_cohorts(&deals, &corpus, WindowParams::default(), YearSpan::new(1990, 1998).unwrap()).unwrap();
        let pairs = (0..10)
            .map(|i| InventorPair {
                pair_id: format!("T@1995/{i:04}"),
                cohort_id: "T@1995".into(),
                treated_inventor_id: format!("T{i}"),
                control_inventor_id: format!("C{i}"),
                treated_firm_id: "T".into(),
                control_firm_id: "C".into(),
                tech: 1.0,
                tenure_dev: 0.0,
                activity_dev: 0.0,
                score: 1.0,
            })
            .collect();
        (corpus, build, pairs)
    }

    #[test]
    fn ten_pairs_give_forty_rows() {
        let (corpus, build, pairs) = mini();
        let aliases = resolve_cohort_aliases(&build.cohorts, &corpus, 0.7, &[]).unwrap();
        let panel = build_panel(&pairs, &build, &corpus, &aliases).unwrap();
        assert_eq!(panel.rows.len(), 40);
        assert_eq!(panel.rows.iter().filter(|r| r.acquired).count(), 20);
        for r in &panel.rows {
            assert_eq!(r.active, r.stay.is_some());
            assert_eq!(r.acquired, r.dosage != Dosage::Control);
            let cov = covariates(&r.inventor_id, &corpus, &r.firm_id, &StudyWindow::new(1995, 7, 4, 4).unwrap()).unwrap();
            assert_eq!((cov.exclusivity, cov.age, cov.tenure, cov.lpatents), (r.exclusivity, r.age, r.tenure, r.lpatents));
        }
        // T2 files for the acquirer after the deal and counts as staying; C2 stays with its own firm.
        let t2 = panel.rows.iter().find(|r| r.inventor_id == "T2" && r.period == Period::After).unwrap();
        assert_eq!(t2.stay, Some(true));
        let t1 = panel.rows.iter().find(|r| r.inventor_id == "T1" && r.period == Period::After).unwrap();
        assert_eq!(t1.stay, Some(false));
        let t3 = panel.rows.iter().find(|r| r.inventor_id == "T3" && r.period == Period::After).unwrap();
        assert_eq!(t3.stay, None);
        // Pair order: period, then treated first.
        assert!(panel.rows[0].acquired && !panel.rows[1].acquired && panel.rows[2].period == Period::After);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("panel.csv");
        write_panel(&path, &panel.rows).unwrap();
        assert_eq!(read_panel(&path).unwrap(), panel.rows);
    }

    #[test]
    fn pair_with_dropped_inventor_is_an_error() {
        let (corpus, build, mut pairs) = mini();
        pairs[0].treated_inventor_id = "ghost".into();
        let err = build_panel(&pairs, &build, &corpus, &BTreeMap::new()).unwrap_err();
        assert!(err.to_string().contains("ghost"));
    }

    proptest! {
        #[test]
        fn tercile_partition(values in proptest::collection::btree_set(0u32..100_000, 3..60)) {
            let v: Vec<Option<f64>> = values.iter().map(|&x| Some(f64::from(x) / 1e5)).collect();
            let (labels, _) = assign_dosage(&v);
            let count = |d| labels.iter().filter(|&&l| l == d).count();
            let sizes = [count(Dosage::Low), count(Dosage::Medium), count(Dosage::High)];
            prop_assert_eq!(sizes.iter().sum::<usize>(), v.len());
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 2);
        }
    }
}
