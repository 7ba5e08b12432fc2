//! Study windows around each deal, inventor-to-firm attribution and the
//! treated / control pools.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use log::warn;
use rayon::prelude::*;

use crate::corpus::{csv_err, Corpus, DealEvent, PatentRecord, YearSpan};
use crate::error::{Error, Result};

/// Half-open range of calendar years `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct YearRange {
    pub start: i32,
    pub end: i32,
}

impl YearRange {
    pub fn contains(&self, year: i32) -> bool {
        year >= self.start && year < self.end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Phase {
    Recruitment,
    Before,
    After,
    Outside,
}

/// Lengths of the recruitment lookback `r`, before period `b` and after period `a`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowParams {
    pub r: i32,
    pub b: i32,
    pub a: i32,
}

impl Default for WindowParams {
    fn default() -> Self {
        WindowParams { r: 7, b: 4, a: 4 }
    }
}

impl WindowParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.r > self.b && self.b > 0 && self.a > 0) {
            return Err(Error::Config(format!(
                "window lengths must satisfy r > b > 0 and a > 0 (got r={}, b={}, a={})",
                self.r, self.b, self.a
            )));
        }
        Ok(())
    }

    pub fn at(&self, event_year: i32) -> Result<StudyWindow> {
        StudyWindow::new(event_year, self.r, self.b, self.a)
    }
}

/// Phase geometry around an event year `t`:
/// recruitment `[t-r, t-b)`, before `[t-b, t)`, after `[t, t+a)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StudyWindow {
    pub event_year: i32,
    pub r: i32,
    pub b: i32,
    pub a: i32,
}

impl StudyWindow {
    pub fn new(event_year: i32, r: i32, b: i32, a: i32) -> Result<Self> {
        WindowParams { r, b, a }.validate()?;
        Ok(StudyWindow { event_year, r, b, a })
    }

    pub fn params(&self) -> WindowParams {
        WindowParams {
            r: self.r,
            b: self.b,
            a: self.a,
        }
    }

    pub fn recruitment(&self) -> YearRange {
        YearRange {
            start: self.event_year - self.r,
            end: self.event_year - self.b,
        }
    }

    pub fn before(&self) -> YearRange {
        YearRange {
            start: self.event_year - self.b,
            end: self.event_year,
        }
    }

    pub fn after(&self) -> YearRange {
        YearRange {
            start: self.event_year,
            end: self.event_year + self.a,
        }
    }

    /// Everything from the start of recruitment to the end of the after period.
    pub fn span(&self) -> YearRange {
        YearRange {
            start: self.event_year - self.r,
            end: self.event_year + self.a,
        }
    }

    pub fn range(&self, phase: Phase) -> Option<YearRange> {
        match phase {
            Phase::Recruitment => Some(self.recruitment()),
            Phase::Before => Some(self.before()),
            Phase::After => Some(self.after()),
            Phase::Outside => None,
        }
    }

    pub fn classify(&self, year: i32) -> Phase {
        if self.recruitment().contains(year) {
            Phase::Recruitment
        } else if self.before().contains(year) {
            Phase::Before
        } else if self.after().contains(year) {
            Phase::After
        } else {
            Phase::Outside
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmploymentStatus {
    Employee,
    FreelancerDropped,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmploymentAttribution {
    pub inventor_id: String,
    pub firm_id: String,
    /// Recruitment-phase patents filed for the firm.
    pub focal_count: usize,
    /// All recruitment-phase patents of the inventor.
    pub total_count: usize,
    pub focal_share: f64,
    pub status: EmploymentStatus,
}

impl EmploymentAttribution {
    pub fn is_employee(&self) -> bool {
        self.status == EmploymentStatus::Employee
    }
}

/// More than one third of the inventor's recruitment patents, in integers.
fn passes_share_rule(focal: usize, total: usize) -> bool {
    3 * focal > total
}

pub fn patents_in<'a>(
    corpus: &'a Corpus,
    inventor_id: &str,
    range: YearRange,
) -> impl Iterator<Item = &'a PatentRecord> + 'a {
    corpus
        .inventor_patents(inventor_id)
        .filter(move |p| range.contains(p.application_year))
}

/// Attributes every inventor with a recruitment-phase patent for `firm_id`.
///
/// Inventors filing more than a third of their recruitment-phase patents
/// for the firm are employees; the rest are dropped as freelancers.
/// Output is sorted by inventor id.
pub fn attribute_employees(corpus: &Corpus, firm_id: &str, window: &StudyWindow) -> Result<Vec<EmploymentAttribution>> {
    if !corpus.has_assignee(firm_id) {
        return Err(Error::validation(format!("firm `{firm_id}` has no patents in the corpus")));
    }
    let rec = window.recruitment();
    let inventors: BTreeSet<&str> = corpus
        .assignee_patents(firm_id)
        .filter(|p| rec.contains(p.application_year))
        .flat_map(|p| p.inventors.iter().map(|i| i.inventor_id.as_str()))
        .collect();
    Ok(inventors
        .into_iter()
        .map(|inv| {
            let (focal, total) = patents_in(corpus, inv, rec).fold((0, 0), |(f, t), p| {
                (f + usize::from(p.assignee_id == firm_id), t + 1)
            });
            EmploymentAttribution {
                inventor_id: inv.to_string(),
                firm_id: firm_id.to_string(),
                focal_count: focal,
                total_count: total,
                focal_share: focal as f64 / total as f64,
                status: if passes_share_rule(focal, total) {
                    EmploymentStatus::Employee
                } else {
                    EmploymentStatus::FreelancerDropped
                },
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreatmentCohort {
    pub cohort_id: String,
    pub deal: DealEvent,
    pub window: StudyWindow,
    pub treated_firm_id: String,
    pub treated_employees: BTreeSet<String>,
    pub control_firm_candidates: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CohortAudit {
    pub deal_id: String,
    pub eligible: bool,
    pub reason: String,
    pub employees: usize,
    pub candidates: usize,
}

#[derive(Debug, Clone, Default)]
pub struct CohortBuild {
    pub cohorts: Vec<TreatmentCohort>,
    pub audit: Vec<CohortAudit>,
    /// Inventors never admitted to a control pool: freelancers of treated
    /// firms, treated employees and inventors claimed by two treated firms.
    pub excluded_inventors: BTreeSet<String>,
    pub freelancers: BTreeSet<String>,
}

impl CohortBuild {
    pub fn cohort(&self, cohort_id: &str) -> Option<&TreatmentCohort> {
        self.cohorts.iter().find(|c| c.cohort_id == cohort_id)
    }
}

/// Every firm that takes part in any deal, on either side.
pub fn deal_involved_firms(deals: &[DealEvent]) -> BTreeSet<String> {
    deals
        .iter()
        .flat_map(|d| [d.acquired_id.clone(), d.acquirer_id.clone()])
        .collect()
}

struct Draft {
    cohort: Option<TreatmentCohort>,
    audit: CohortAudit,
    freelancers: Vec<String>,
    qualifying: BTreeSet<String>,
}

fn draft_cohort(deal: &DealEvent, corpus: &Corpus, params: WindowParams, involved: &BTreeSet<String>) -> Result<Draft> {
    let window = params.at(deal.deal_year)?;
    let firm = deal.acquired_id.as_str();
    let rec = window.recruitment();
    let reject = |reason: &str, employees: usize, freelancers: Vec<String>| Draft {
        cohort: None,
        audit: CohortAudit {
            deal_id: deal.deal_id(),
            eligible: false,
            reason: reason.to_string(),
            employees,
            candidates: 0,
        },
        freelancers,
        qualifying: BTreeSet::new(),
    };

    if !corpus.has_assignee(firm) {
        return Ok(reject("no patents in window (firm absent from corpus)", 0, Vec::new()));
    }
    let groups: BTreeSet<&str> = corpus
        .assignee_patents(firm)
        .filter(|p| rec.contains(p.application_year))
        .flat_map(|p| p.ipc_main_groups.iter().map(String::as_str))
        .collect();
    if corpus.assignee_patents(firm).all(|p| !rec.contains(p.application_year)) {
        return Ok(reject("no patents in window", 0, Vec::new()));
    }

    let atts = attribute_employees(corpus, firm, &window)?;
    let freelancers: Vec<String> = atts
        .iter()
        .filter(|a| !a.is_employee())
        .map(|a| a.inventor_id.clone())
        .collect();
    let employees: BTreeSet<String> = atts
        .iter()
        .filter(|a| a.is_employee())
        .map(|a| a.inventor_id.clone())
        .collect();
    if employees.is_empty() {
        return Ok(reject("no employee attributed in recruitment phase", 0, freelancers));
    }
    let after = window.after();
    let qualifying: BTreeSet<String> = employees
        .iter()
        .filter(|inv| patents_in(corpus, inv, after).next().is_some())
        .cloned()
        .collect();
    if qualifying.is_empty() {
        return Ok(reject("no qualifying inventor active after the deal", employees.len(), freelancers));
    }

    let candidates: BTreeSet<String> = corpus
        .patents()
        .iter()
        .filter(|p| {
            rec.contains(p.application_year)
                && p.assignee_id != firm
                && !involved.contains(&p.assignee_id)
                && p.ipc_main_groups.iter().any(|g| groups.contains(g.as_str()))
        })
        .map(|p| p.assignee_id.clone())
        .collect();

    Ok(Draft {
        audit: CohortAudit {
            deal_id: deal.deal_id(),
            eligible: true,
            reason: "eligible".into(),
            employees: employees.len(),
            candidates: candidates.len(),
        },
        cohort: Some(TreatmentCohort {
            cohort_id: deal.deal_id(),
            deal: deal.clone(),
            window,
            treated_firm_id: firm.to_string(),
            treated_employees: employees,
            control_firm_candidates: candidates,
        }),
        freelancers,
        qualifying,
    })
}

fn overlaps(a: YearRange, b: YearRange) -> bool {
    a.start < b.end && b.start < a.end
}

/// One cohort per eligible acquisition whose deal year falls in `span`.
///
/// Control candidates are firms with a recruitment-phase patent sharing an
/// IPC main group with the treated firm, minus every firm named in any deal.
pub fn build_cohorts(deals: &[DealEvent], corpus: &Corpus, params: WindowParams, span: YearSpan) -> Result<CohortBuild> {
    params.validate()?;
    let involved = deal_involved_firms(deals);
    let acquisitions: Vec<&DealEvent> = deals
        .iter()
        .filter(|d| d.is_acquisition() && span.contains(d.deal_year))
        .collect();
    let mut drafts: Vec<Draft> = acquisitions
        .par_iter()
        .map(|d| draft_cohort(d, corpus, params, &involved))
        .collect::<Result<_>>()?;

    // Inventors employed by two treated firms in overlapping windows.
    let mut claims: BTreeMap<&str, Vec<(usize, YearRange)>> = BTreeMap::new();
    for (i, d) in drafts.iter().enumerate() {
        if let Some(c) = &d.cohort {
            for inv in &c.treated_employees {
                claims.entry(inv.as_str()).or_default().push((i, c.window.span()));
            }
        }
    }
    let collided: BTreeSet<String> = claims
        .iter()
        .filter(|(_, v)| {
            v.iter()
                .enumerate()
                .any(|(k, (_, ra))| v[k + 1..].iter().any(|(_, rb)| overlaps(*ra, *rb)))
        })
        .map(|(inv, _)| inv.to_string())
        .collect();
    for inv in &collided {
        warn!("inventor {inv} is employed by two treated firms in overlapping windows; dropped");
    }

    let mut build = CohortBuild::default();
    for d in drafts.iter_mut() {
        build.freelancers.extend(d.freelancers.iter().cloned());
        if let Some(c) = d.cohort.as_mut() {
            if !collided.is_empty() {
                c.treated_employees.retain(|inv| !collided.contains(inv));
                d.qualifying.retain(|inv| !collided.contains(inv));
                d.audit.employees = c.treated_employees.len();
                if d.qualifying.is_empty() {
                    d.audit.eligible = false;
                    d.audit.reason = "no qualifying inventor after dropping shared inventors".into();
                }
            }
        }
    }
    build.excluded_inventors = build.freelancers.clone();
    build.excluded_inventors.extend(collided);
    for d in drafts {
        if let (true, Some(c)) = (d.audit.eligible, d.cohort) {
            build.excluded_inventors.extend(c.treated_employees.iter().cloned());
            build.cohorts.push(c);
        }
        build.audit.push(d.audit);
    }
    Ok(build)
}

pub fn write_cohort_audit(path: impl AsRef<Path>, audit: &[CohortAudit]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(["deal_id", "eligible", "reason", "employees", "candidates"])
        .map_err(|e| csv_err(path, e))?;
    for a in audit {
        w.write_record([
            a.deal_id.as_str(),
            if a.eligible { "yes" } else { "no" },
            &a.reason,
            &a.employees.to_string(),
            &a.candidates.to_string(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::corpus::{DealType, InventorEntry};

    pub(crate) fn patent(id: &str, year: i32, firm: &str, inventors: &[&str], ipc: &[&str]) -> PatentRecord {
        PatentRecord {
            patent_id: id.into(),
            application_year: year,
            assignee_id: firm.into(),
            assignee_name: format!("{firm} Inc"),
            inventors: inventors
                .iter()
                .map(|i| InventorEntry {
                    inventor_id: i.to_string(),
                    location: None,
                })
                .collect(),
            ipc_main_groups: ipc.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn deal(acquired: &str, acquirer: &str, year: i32, kind: DealType) -> DealEvent {
        DealEvent {
            acquired_id: acquired.into(),
            acquired_name: acquired.into(),
            acquirer_id: acquirer.into(),
            acquirer_name: acquirer.into(),
            deal_year: year,
            deal_type: kind,
        }
    }

    #[test]
    fn default_window_intervals() {
        let w = WindowParams::default().at(1995).unwrap();
        assert_eq!(w.recruitment(), YearRange { start: 1988, end: 1991 });
        assert_eq!(w.before(), YearRange { start: 1991, end: 1995 });
        assert_eq!(w.after(), YearRange { start: 1995, end: 1999 });
        assert_eq!(w.classify(1995), Phase::After);
        assert_eq!(w.classify(1990), Phase::Recruitment);
        assert_eq!(w.classify(1994), Phase::Before);
        assert_eq!(w.classify(1999), Phase::Outside);
        assert_eq!(w.classify(1987), Phase::Outside);
    }

    #[test]
    fn window_ordering_enforced() {
        assert!(StudyWindow::new(1995, 4, 4, 4).is_err());
        assert!(StudyWindow::new(1995, 7, 0, 4).is_err());
        assert!(StudyWindow::new(1995, 7, 4, 0).is_err());
    }

    #[test]
    fn classification_is_total_and_disjoint() {
        for (r, b, a) in [(7, 4, 4), (6, 3, 6), (2, 1, 1)] {
            let w = StudyWindow::new(2000, r, b, a).unwrap();
            for y in 1980..2020 {
                let hits = [w.recruitment(), w.before(), w.after()]
                    .iter()
                    .filter(|rg| rg.contains(y))
                    .count();
                assert!(hits <= 1);
                assert_eq!(hits == 0, w.classify(y) == Phase::Outside);
            }
        }
    }

    fn share_corpus() -> Corpus {
        Corpus::new(vec![
            // I1: 4 recruitment patents, one for F -> freelancer.
            patent("P01", 1989, "F", &["I1"], &["C08G063"]),
            patent("P02", 1989, "X", &["I1"], &["C08G063"]),
            patent("P03", 1990, "Y", &["I1"], &["C08G063"]),
            patent("P04", 1990, "Z", &["I1"], &["C08G063"]),
            // I2: exclusive.
            patent("P05", 1989, "F", &["I2"], &["C08G063"]),
            patent("P06", 1990, "F", &["I2"], &["C08G063"]),
            // I3: 2 of 4.
            patent("P07", 1988, "F", &["I3"], &["C08G063"]),
            patent("P08", 1988, "F", &["I3"], &["C08G063"]),
            patent("P09", 1989, "X", &["I3"], &["C08G063"]),
            patent("P10", 1990, "X", &["I3"], &["C08G063"]),
            // I4: exactly one third.
            patent("P11", 1988, "F", &["I4"], &["C08G063"]),
            patent("P12", 1988, "X", &["I4"], &["C08G063"]),
            patent("P13", 1989, "Y", &["I4"], &["C08G063"]),
            // Outside recruitment: does not count toward shares.
            patent("P14", 1993, "X", &["I2"], &["C08G063"]),
        ])
    }

    #[test]
    fn share_rule() {
        let c = share_corpus();
        let w = WindowParams::default().at(1995).unwrap();
        let atts = attribute_employees(&c, "F", &w).unwrap();
        let by: BTreeMap<_, _> = atts.iter().map(|a| (a.inventor_id.as_str(), a)).collect();
        assert_eq!(by["I1"].focal_share, 0.25);
        assert_eq!(by["I1"].status, EmploymentStatus::FreelancerDropped);
        assert_eq!(by["I2"].focal_share, 1.0);
        assert!(by["I2"].is_employee());
        assert_eq!(by["I3"].focal_share, 0.5);
        assert!(by["I3"].is_employee());
        assert_eq!(by["I4"].status, EmploymentStatus::FreelancerDropped, "ties at 1/3 are dropped");
        assert!(attribute_employees(&c, "NOPE", &w).is_err());
    }

    fn cohort_corpus() -> Corpus {
        let mut ps = vec![
            patent("T1", 1989, "TGT", &["E1"], &["C08G063"]),
            patent("T2", 1996, "TGT", &["E1"], &["C08G063"]),
            patent("T3", 1989, "TGT", &["E2"], &["A61K038"]),
            patent("Z1", 1989, "ZERO", &["Q1"], &["C08G063"]),
        ];
        ps.retain(|p| p.assignee_id != "ZERO");
        for k in 0..5 {
            ps.push(patent(&format!("C{k}"), 1990, &format!("CLEAN{k}"), &[&format!("CI{k}")], &["C08G063"]));
        }
        ps.push(patent("M1", 1990, "MERGED", &["MI"], &["C08G063"]));
        ps.push(patent("U1", 1990, "UNRELATED", &["UI"], &["H04L029"]));
        ps.push(patent("L1", 1985, "LATE", &["LI"], &["C08G063"]));
        Corpus::new(ps)
    }

    #[test]
    fn cohorts_exclude_deal_firms_and_count_candidates() {
        let corpus = cohort_corpus();
        let deals = vec![
            deal("TGT", "ACQ", 1995, DealType::Acquisition),
            deal("ZERO", "ACQ", 1995, DealType::Acquisition),
            deal("MERGED", "OTHER", 2001, DealType::OtherMa),
        ];
        let span = YearSpan::new(1990, 1998).unwrap();
        let build = build_cohorts(&deals, &corpus, WindowParams::default(), span).unwrap();
        assert_eq!(build.cohorts.len(), 1);
        let c = &build.cohorts[0];
        let expected: BTreeSet<String> = (0..5).map(|k| format!("CLEAN{k}")).collect();
        assert_eq!(c.control_firm_candidates, expected);
        assert!(!c.control_firm_candidates.contains("MERGED"));
        assert!(!c.control_firm_candidates.contains("TGT"));
        let zero = build.audit.iter().find(|a| a.deal_id == "ZERO@1995").unwrap();
        assert!(!zero.eligible);
        assert!(zero.reason.starts_with("no patents in window"), "{}", zero.reason);
    }

    #[test]
    fn ineligible_without_active_inventor_after() {
        let corpus = Corpus::new(vec![
            patent("T1", 1989, "TGT", &["E1"], &["C08G063"]),
            patent("T2", 1992, "TGT", &["E1"], &["C08G063"]),
        ]);
        let deals = vec![deal("TGT", "ACQ", 1995, DealType::Acquisition)];
        let build = build_cohorts(&deals, &corpus, WindowParams::default(), YearSpan::new(1990, 1998).unwrap()).unwrap();
        assert!(build.cohorts.is_empty());
        assert_eq!(build.audit[0].reason, "no qualifying inventor active after the deal");
    }

    #[test]
    fn empty_deals_give_empty_build() {
        let build = build_cohorts(&[], &cohort_corpus(), WindowParams::default(), YearSpan::new(1990, 1998).unwrap()).unwrap();
        assert!(build.cohorts.is_empty() && build.audit.is_empty());
    }

    #[test]
    fn shared_inventor_dropped_from_both_cohorts() {
        let corpus = Corpus::new(vec![
            patent("A1", 1989, "TA", &["S", "A"], &["C08G063"]),
            patent("A2", 1996, "TA", &["A"], &["C08G063"]),
            patent("B1", 1989, "TB", &["S", "B"], &["C08G063"]),
            patent("B2", 1997, "TB", &["B"], &["C08G063"]),
            patent("S2", 1996, "TB", &["S"], &["C08G063"]),
        ]);
        let deals = vec![
            deal("TA", "ACQ", 1995, DealType::Acquisition),
            deal("TB", "ACQ2", 1995, DealType::Acquisition),
        ];
        let build = build_cohorts(&deals, &corpus, WindowParams::default(), YearSpan::new(1990, 1998).unwrap()).unwrap();
        assert_eq!(build.cohorts.len(), 2);
        for c in &build.cohorts {
            assert!(!c.treated_employees.contains("S"));
        }
        assert!(build.excluded_inventors.contains("S"));
    }
}
