//! Patent and deal ingestion, assignee-name normalization and alias resolution.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use log::warn;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geo::GeoPoint;

/// Column layout of the patents file (one row per patent/inventor couple).
pub const PATENT_COLUMNS: [&str; 8] = [
    "patent_id",
    "application_year",
    "assignee_id",
    "assignee_name",
    "inventor_id",
    "ipc_main_groups",
    "latitude",
    "longitude",
];

pub const DEAL_COLUMNS: [&str; 6] = [
    "acquired_id",
    "acquired_name",
    "acquirer_id",
    "acquirer_name",
    "deal_year",
    "deal_type",
];

pub const REVIEW_COLUMNS: [&str; 3] = ["focal_firm_id", "candidate_assignee_id", "decision"];

/// Trailing tokens dropped by [`normalize_name`].
pub const LEGAL_SUFFIXES: [&str; 9] = ["inc", "corp", "ltd", "co", "llc", "plc", "ag", "gmbh", "sa"];

/// Default similarity above which an assignee is queued as a possible alias.
pub const DEFAULT_ALIAS_THRESHOLD: f64 = 0.7;

/// Inclusive range of calendar years.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct YearSpan {
    pub start: i32,
    pub end: i32,
}

impl YearSpan {
    pub fn new(start: i32, end: i32) -> Result<Self> {
        if start > end {
            return Err(Error::validation(format!("empty year span {start}..={end}")));
        }
        Ok(YearSpan { start, end })
    }

    pub fn contains(&self, year: i32) -> bool {
        (self.start..=self.end).contains(&year)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InventorEntry {
    pub inventor_id: String,
    pub location: Option<GeoPoint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatentRecord {
    pub patent_id: String,
    pub application_year: i32,
    pub assignee_id: String,
    pub assignee_name: String,
    pub inventors: Vec<InventorEntry>,
    /// IPC main groups as filed; may repeat.
    pub ipc_main_groups: Vec<String>,
}

impl PatentRecord {
    pub fn has_inventor(&self, inventor_id: &str) -> bool {
        self.inventors.iter().any(|i| i.inventor_id == inventor_id)
    }

    pub fn location_of(&self, inventor_id: &str) -> Option<GeoPoint> {
        self.inventors
            .iter()
            .find(|i| i.inventor_id == inventor_id)
            .and_then(|i| i.location)
    }

    /// Distinct main groups, sorted.
    pub fn distinct_groups(&self) -> BTreeSet<&str> {
        self.ipc_main_groups.iter().map(String::as_str).collect()
    }
}

/// Checks the `C08G063` shape: section letter A-H, two-digit class,
/// subclass letter and a three-digit zero-padded main group.
pub fn is_valid_ipc(code: &str) -> bool {
    let b = code.as_bytes();
    b.len() == 7
        && (b'A'..=b'H').contains(&b[0])
        && b[1].is_ascii_digit()
        && b[2].is_ascii_digit()
        && b[3].is_ascii_uppercase()
        && b[4..].iter().all(u8::is_ascii_digit)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum DealType {
    Acquisition,
    OtherMa,
}

impl DealType {
    pub fn as_str(self) -> &'static str {
        match self {
            DealType::Acquisition => "acquisition",
            DealType::OtherMa => "other_ma",
        }
    }
}

impl std::str::FromStr for DealType {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "acquisition" => Ok(DealType::Acquisition),
            "other_ma" => Ok(DealType::OtherMa),
            other => Err(format!("unknown deal type `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DealEvent {
    pub acquired_id: String,
    pub acquired_name: String,
    pub acquirer_id: String,
    pub acquirer_name: String,
    pub deal_year: i32,
    pub deal_type: DealType,
}

impl DealEvent {
    /// Stable identifier of the deal, also used as the cohort / cluster id.
    pub fn deal_id(&self) -> String {
        format!("{}@{}", self.acquired_id, self.deal_year)
    }

    pub fn is_acquisition(&self) -> bool {
        self.deal_type == DealType::Acquisition
    }
}

/// Row accounting from [`load_patents`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub rows: usize,
    pub records: usize,
    pub rejected_out_of_span: usize,
    pub collapsed_duplicates: usize,
}

impl fmt::Display for LoadReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "rows={} records={} rejected_out_of_span={} collapsed_duplicates={}",
            self.rows, self.records, self.rejected_out_of_span, self.collapsed_duplicates
        )
    }
}

/// Validated patent collection with lookup indexes.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    patents: Vec<PatentRecord>,
    by_inventor: HashMap<String, Vec<usize>>,
    by_assignee: HashMap<String, Vec<usize>>,
    assignee_names: BTreeMap<String, String>,
}

impl Corpus {
    /// Builds the indexes. Records are re-sorted by patent id.
    pub fn new(mut patents: Vec<PatentRecord>) -> Self {
        patents.sort_by(|a, b| a.patent_id.cmp(&b.patent_id));
        let mut by_inventor: HashMap<String, Vec<usize>> = HashMap::new();
        let mut by_assignee: HashMap<String, Vec<usize>> = HashMap::new();
        let mut assignee_names = BTreeMap::new();
        for (idx, p) in patents.iter().enumerate() {
            by_assignee.entry(p.assignee_id.clone()).or_default().push(idx);
            assignee_names
                .entry(p.assignee_id.clone())
                .or_insert_with(|| p.assignee_name.clone());
            for inv in &p.inventors {
                by_inventor.entry(inv.inventor_id.clone()).or_default().push(idx);
            }
        }
        Corpus {
            patents,
            by_inventor,
            by_assignee,
            assignee_names,
        }
    }

    pub fn patents(&self) -> &[PatentRecord] {
        &self.patents
    }

    pub fn len(&self) -> usize {
        self.patents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patents.is_empty()
    }

    pub fn inventor_patents<'a>(&'a self, inventor_id: &str) -> impl Iterator<Item = &'a PatentRecord> + 'a {
        self.by_inventor
            .get(inventor_id)
            .into_iter()
            .flatten()
            .map(move |&i| &self.patents[i])
    }

    pub fn assignee_patents<'a>(&'a self, assignee_id: &str) -> impl Iterator<Item = &'a PatentRecord> + 'a {
        self.by_assignee
            .get(assignee_id)
            .into_iter()
            .flatten()
            .map(move |&i| &self.patents[i])
    }

    pub fn has_assignee(&self, assignee_id: &str) -> bool {
        self.by_assignee.contains_key(assignee_id)
    }

    /// All (assignee_id, name) pairs, ordered by id.
    pub fn assignees(&self) -> impl Iterator<Item = (&str, &str)> {
        self.assignee_names.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn assignee_name(&self, assignee_id: &str) -> Option<&str> {
        self.assignee_names.get(assignee_id).map(String::as_str)
    }

    pub fn first_year_of_assignee(&self, assignee_id: &str) -> Option<i32> {
        self.assignee_patents(assignee_id).map(|p| p.application_year).min()
    }

    pub fn first_year_of_inventor(&self, inventor_id: &str) -> Option<i32> {
        self.inventor_patents(inventor_id).map(|p| p.application_year).min()
    }

    pub fn first_year_with_assignee(&self, inventor_id: &str, assignee_id: &str) -> Option<i32> {
        self.inventor_patents(inventor_id)
            .filter(|p| p.assignee_id == assignee_id)
            .map(|p| p.application_year)
            .min()
    }
}

pub(crate) fn parse_err(path: &Path, line: u64, field: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        field: field.to_string(),
        message: message.into(),
    }
}

pub(crate) fn open_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(file))
}

pub(crate) fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => parse_err(path, line, "<row>", format!("{other:?}")),
    }
}

pub(crate) fn check_header(path: &Path, rdr: &mut csv::Reader<std::fs::File>, expected: &[&str]) -> Result<bool> {
    let headers = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Ok(false);
    }
    let got: Vec<&str> = headers.iter().map(str::trim).collect();
    if got != expected {
        return Err(parse_err(
            path,
            1,
            "<header>",
            format!("expected columns {expected:?}, found {got:?}"),
        ));
    }
    Ok(true)
}

fn parse_coordinate(path: &Path, line: u64, field: &str, raw: &str) -> Result<Option<f64>> {
    let raw = raw.trim();
    if raw.is_empty() {
        return Ok(None);
    }
    raw.parse::<f64>()
        .map(Some)
        .map_err(|_| parse_err(path, line, field, format!("not a number: `{raw}`")))
}

/// Reads and validates a patents file, keeping records whose application
/// year falls inside `span`.
pub fn load_patents(path: impl AsRef<Path>, span: YearSpan) -> Result<(Corpus, LoadReport)> {
    let path = path.as_ref();
    let mut rdr = open_reader(path)?;
    let mut report = LoadReport::default();
    if !check_header(path, &mut rdr, &PATENT_COLUMNS)? {
        return Ok((Corpus::default(), report));
    }

    let mut records: BTreeMap<String, PatentRecord> = BTreeMap::new();
    let mut rejected: BTreeSet<String> = BTreeSet::new();
    for row in rdr.records() {
        let row = row.map_err(|e| csv_err(path, e))?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        report.rows += 1;
        let field = |i: usize| row.get(i).unwrap_or("").trim();

        let patent_id = field(0);
        if patent_id.is_empty() {
            return Err(parse_err(path, line, "patent_id", "empty"));
        }
        let year: i32 = field(1)
            .parse()
            .map_err(|_| parse_err(path, line, "application_year", format!("not an integer: `{}`", field(1))))?;
        let assignee_id = field(2);
        if assignee_id.is_empty() {
            return Err(parse_err(path, line, "assignee_id", "empty"));
        }
        let inventor_id = field(4);
        if inventor_id.is_empty() {
            return Err(parse_err(path, line, "inventor_id", "empty"));
        }
        let ipc: Vec<String> = field(5)
            .split(';')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .collect();
        if let Some(bad) = ipc.iter().find(|c| !is_valid_ipc(c)) {
            return Err(parse_err(path, line, "ipc_main_groups", format!("malformed IPC main group `{bad}`")));
        }
        let lat = parse_coordinate(path, line, "latitude", field(6))?;
        let lon = parse_coordinate(path, line, "longitude", field(7))?;
        let location = match (lat, lon) {
            (None, None) => None,
            (Some(lat), Some(lon)) => Some(GeoPoint::new(lat, lon).map_err(|e| {
                let f = if !(-90.0..=90.0).contains(&lat) { "latitude" } else { "longitude" };
                parse_err(path, line, f, e.to_string())
            })?),
            _ => {
                return Err(parse_err(path, line, "latitude", "latitude and longitude must both be present or both empty"))
            }
        };

        if !span.contains(year) {
            report.rejected_out_of_span += 1;
            rejected.insert(patent_id.to_string());
            continue;
        }

        let entry = InventorEntry {
            inventor_id: inventor_id.to_string(),
            location,
        };
        match records.get_mut(patent_id) {
            Some(rec) => {
                if rec.application_year != year || rec.assignee_id != assignee_id || rec.ipc_main_groups != ipc {
                    return Err(parse_err(
                        path,
                        line,
                        "patent_id",
                        format!("duplicate patent_id `{patent_id}` with conflicting patent-level fields"),
                    ));
                }
                if rec.has_inventor(inventor_id) {
                    warn!("{}:{line}: duplicate row for patent {patent_id} / inventor {inventor_id} collapsed", path.display());
                    report.collapsed_duplicates += 1;
                } else {
                    rec.inventors.push(entry);
                }
            }
            None => {
                records.insert(
                    patent_id.to_string(),
                    PatentRecord {
                        patent_id: patent_id.to_string(),
                        application_year: year,
                        assignee_id: assignee_id.to_string(),
                        assignee_name: field(3).to_string(),
                        inventors: vec![entry],
                        ipc_main_groups: ipc,
                    },
                );
            }
        }
    }
    if report.rejected_out_of_span > 0 {
        warn!(
            "{}: {} rows ({} patents) outside {}..={} rejected",
            path.display(),
            report.rejected_out_of_span,
            rejected.len(),
            span.start,
            span.end
        );
    }
    report.records = records.len();
    Ok((Corpus::new(records.into_values().collect()), report))
}

fn fmt_coord(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes records in the patents-file layout; inverse of [`load_patents`].
pub fn write_patents(path: impl AsRef<Path>, patents: &[PatentRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(PATENT_COLUMNS).map_err(|e| csv_err(path, e))?;
    let mut sorted: Vec<&PatentRecord> = patents.iter().collect();
    sorted.sort_by(|a, b| a.patent_id.cmp(&b.patent_id));
    for p in sorted {
        let year = p.application_year.to_string();
        let ipc = p.ipc_main_groups.join(";");
        for inv in &p.inventors {
            let lat = fmt_coord(inv.location.map(|g| g.latitude));
            let lon = fmt_coord(inv.location.map(|g| g.longitude));
            w.write_record([
                p.patent_id.as_str(),
                &year,
                &p.assignee_id,
                &p.assignee_name,
                &inv.inventor_id,
                &ipc,
                &lat,
                &lon,
            ])
            .map_err(|e| csv_err(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a deals file. Records come back sorted by `(deal_year, acquired_id)`.
pub fn load_deals(path: impl AsRef<Path>) -> Result<Vec<DealEvent>> {
    let path = path.as_ref();
    let mut rdr = open_reader(path)?;
    if !check_header(path, &mut rdr, &DEAL_COLUMNS)? {
        return Ok(Vec::new());
    }
    let mut deals = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| csv_err(path, e))?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| row.get(i).unwrap_or("").trim();
        let deal_year: i32 = field(4)
            .parse()
            .map_err(|_| parse_err(path, line, "deal_year", format!("not an integer: `{}`", field(4))))?;
        let deal_type: DealType = field(5).parse().map_err(|m: String| parse_err(path, line, "deal_type", m))?;
        let deal = DealEvent {
            acquired_id: field(0).to_string(),
            acquired_name: field(1).to_string(),
            acquirer_id: field(2).to_string(),
            acquirer_name: field(3).to_string(),
            deal_year,
            deal_type,
        };
        if deal.acquired_id.is_empty() || deal.acquirer_id.is_empty() {
            return Err(parse_err(path, line, "acquired_id", "firm identifiers must be non-empty"));
        }
        if deal.acquired_id == deal.acquirer_id {
            return Err(parse_err(
                path,
                line,
                "acquirer_id",
                format!("firm `{}` cannot acquire itself", deal.acquired_id),
            ));
        }
        deals.push(deal);
    }
    sort_deals(&mut deals);
    Ok(deals)
}

pub fn sort_deals(deals: &mut [DealEvent]) {
    deals.sort_by(|a, b| {
        (a.deal_year, &a.acquired_id, &a.acquirer_id, a.deal_type).cmp(&(b.deal_year, &b.acquired_id, &b.acquirer_id, b.deal_type))
    });
}

pub fn write_deals(path: impl AsRef<Path>, deals: &[DealEvent]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(DEAL_COLUMNS).map_err(|e| csv_err(path, e))?;
    for d in deals {
        w.write_record([
            d.acquired_id.as_str(),
            &d.acquired_name,
            &d.acquirer_id,
            &d.acquirer_name,
            &d.deal_year.to_string(),
            d.deal_type.as_str(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Canonical form of an assignee name: lower case, punctuation removed,
/// whitespace collapsed and trailing legal-form tokens dropped (the first
/// token is always kept).
pub fn normalize_name(raw: &str) -> String {
    let cleaned: String = raw
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .flat_map(char::to_lowercase)
        .collect();
    let mut tokens: Vec<&str> = cleaned.split_whitespace().collect();
    while tokens.len() > 1 && LEGAL_SUFFIXES.contains(tokens.last().unwrap()) {
        tokens.pop();
    }
    tokens.join(" ")
}

/// Edit distance counting single-character insertions, deletions and substitutions.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `1 - levenshtein(a, b) / max(|a|, |b|)`, with two empty strings scoring 1.
pub fn string_similarity(a: &str, b: &str) -> f64 {
    let len = a.chars().count().max(b.chars().count());
    if len == 0 {
        return 1.0;
    }
    1.0 - levenshtein(a, b) as f64 / len as f64
}

/// Similarity of two raw names after [`normalize_name`].
pub fn name_similarity(a: &str, b: &str) -> f64 {
    string_similarity(&normalize_name(a), &normalize_name(b))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AliasCandidate {
    pub assignee_id: String,
    pub assignee_name: String,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReviewDecision {
    Confirm,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AliasReview {
    pub focal_firm_id: String,
    pub candidate_assignee_id: String,
    pub decision: ReviewDecision,
}

/// Assignees counted as "the same employer" after a deal.
#[derive(Debug, Clone, PartialEq)]
pub struct AliasSet {
    /// The acquired firm.
    pub focal_firm_id: String,
    pub acquirer_id: String,
    pub confirmed_aliases: BTreeSet<String>,
    pub review_queue: Vec<AliasCandidate>,
    pub rejected: BTreeSet<String>,
    pub threshold: f64,
}

impl AliasSet {
    pub fn contains(&self, assignee_id: &str) -> bool {
        self.confirmed_aliases.contains(assignee_id)
    }

    /// Applies reviewer decisions addressed to this focal firm.
    pub fn apply_review(&mut self, reviews: &[AliasReview]) {
        for r in reviews.iter().filter(|r| r.focal_firm_id == self.focal_firm_id) {
            let queued = self
                .review_queue
                .iter()
                .position(|c| c.assignee_id == r.candidate_assignee_id);
            if queued.is_none() && !self.confirmed_aliases.contains(&r.candidate_assignee_id) {
                warn!(
                    "review for {} / {} does not match a queued candidate",
                    r.focal_firm_id, r.candidate_assignee_id
                );
            }
            if let Some(i) = queued {
                self.review_queue.remove(i);
            }
            match r.decision {
                ReviewDecision::Confirm => {
                    self.confirmed_aliases.insert(r.candidate_assignee_id.clone());
                }
                ReviewDecision::Reject => {
                    if r.candidate_assignee_id != self.focal_firm_id && r.candidate_assignee_id != self.acquirer_id {
                        self.confirmed_aliases.remove(&r.candidate_assignee_id);
                    }
                    self.rejected.insert(r.candidate_assignee_id.clone());
                }
            }
        }
    }
}

/// Screens every assignee against the acquired and acquirer names.
///
/// Exact matches after normalization are confirmed outright; anything else
/// scoring at least `threshold` against either name waits in the review
/// queue for a decision from the review file.
pub fn resolve_aliases<'a, I>(deal: &DealEvent, assignees: I, threshold: f64) -> Result<AliasSet>
where
    I: IntoIterator<Item = (&'a str, &'a str)>,
{
    if !(0.0..=1.0).contains(&threshold) || threshold.is_nan() {
        return Err(Error::Config(format!("alias threshold {threshold} outside [0, 1]")));
    }
    let acquired = normalize_name(&deal.acquired_name);
    let acquirer = normalize_name(&deal.acquirer_name);
    let pool: Vec<(&str, &str)> = assignees
        .into_iter()
        .filter(|(id, _)| *id != deal.acquired_id && *id != deal.acquirer_id)
        .collect();

    let scored: Vec<(bool, AliasCandidate)> = pool
        .par_iter()
        .filter_map(|&(id, name)| {
            let norm = normalize_name(name);
            let exact = !norm.is_empty() && (norm == acquired || norm == acquirer);
            let score = string_similarity(&norm, &acquired).max(string_similarity(&norm, &acquirer));
            (exact || score >= threshold).then(|| {
                (
                    exact,
                    AliasCandidate {
                        assignee_id: id.to_string(),
                        assignee_name: name.to_string(),
                        score,
                    },
                )
            })
        })
        .collect();

    let mut confirmed: BTreeSet<String> = [deal.acquired_id.clone(), deal.acquirer_id.clone()].into();
    let mut queue = Vec::new();
    for (exact, cand) in scored {
        if exact {
            confirmed.insert(cand.assignee_id);
        } else {
            queue.push(cand);
        }
    }
    queue.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.assignee_id.cmp(&b.assignee_id)));
    Ok(AliasSet {
        focal_firm_id: deal.acquired_id.clone(),
        acquirer_id: deal.acquirer_id.clone(),
        confirmed_aliases: confirmed,
        review_queue: queue,
        rejected: BTreeSet::new(),
        threshold,
    })
}

pub fn load_alias_review(path: impl AsRef<Path>) -> Result<Vec<AliasReview>> {
    let path = path.as_ref();
    let mut rdr = open_reader(path)?;
    if !check_header(path, &mut rdr, &REVIEW_COLUMNS)? {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| csv_err(path, e))?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let decision = match row.get(2).unwrap_or("").trim() {
            "confirm" => ReviewDecision::Confirm,
            "reject" => ReviewDecision::Reject,
            other => return Err(parse_err(path, line, "decision", format!("expected confirm|reject, got `{other}`"))),
        };
        out.push(AliasReview {
            focal_firm_id: row.get(0).unwrap_or("").trim().to_string(),
            candidate_assignee_id: row.get(1).unwrap_or("").trim().to_string(),
            decision,
        });
    }
    Ok(out)
}

/// Writes pending candidates so a reviewer can turn them into a review file.
pub fn write_alias_queue(path: impl AsRef<Path>, sets: &[AliasSet]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(["focal_firm_id", "candidate_assignee_id", "candidate_name", "score"])
        .map_err(|e| csv_err(path, e))?;
    for s in sets {
        for c in &s.review_queue {
            w.write_record([
                s.focal_firm_id.as_str(),
                &c.assignee_id,
                &c.assignee_name,
                &format!("{:.6}", c.score),
            ])
            .map_err(|e| csv_err(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}
