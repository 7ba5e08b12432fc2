//! Stage orchestration behind the command-line subcommands.
//!
//! Stages hand artifacts to each other through files under the output
//! directory:
//!
//! ```text
//! <out>/ingest/    patents.csv deals.csv audit.txt
//! <out>/match/     cohort_audit.csv alias_queue.csv firm_matches.csv pairs.csv
//!                  balance.txt balance.csv propensity_scores.csv propensity_density.csv summary.txt
//! <out>/panel/     panel.csv summary.txt
//! <out>/estimate/  table3.* table4.* splits.* naive.* placebo_*.csv placebo_summary.txt
//!                  predictions.csv relocation_summary.txt windows/
//! <out>/geo/       relocation.csv histogram.csv summary.txt
//! <out>/synth/     patents.csv deals.csv truth.txt recovery.txt
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::info;

use crate::cohort::{build_cohorts, write_cohort_audit, CohortBuild, WindowParams};
use crate::corpus::{
    load_alias_review, load_deals, load_patents, write_alias_queue, write_deals, write_patents, AliasReview, AliasSet,
    Corpus, DealEvent, YearSpan, DEFAULT_ALIAS_THRESHOLD,
};
use crate::error::{Error, Result, StageExt};
use crate::estimators::report::{render_table, write_records, ReportColumn};
use crate::estimators::{
    did_dosage, did_heckman, did_ols, naive_difference, placebo, predict_conditional_stay, split_by_experience,
    terms, DealYearTerm, DidOptions, GroupPrediction, PlaceboResult, PlaceboScheme,
};
use crate::estimators::did::dosage_group_profiles;
use crate::geo::{relocation_table, RelocationTable};
use crate::matching::{
    balance_table, match_all, propensity_overlap, read_pairs, render_balance, write_balance, write_matches,
    write_overlap, write_pairs, MatchOutcome, SimilarityWeights, DEFAULT_FIRM_THRESHOLD, DEFAULT_INVENTOR_THRESHOLD,
};
use crate::panel::{build_panel, pair_covariates, read_panel, resolve_cohort_aliases, write_panel, Panel, PanelObservation};
use crate::synth::{self, RecoveryReport, SynthConfig};

pub const EFFECTIVE_CONFIG_FILE: &str = "effective_config.txt";

/// Placebo schemes to run: one, or all three.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlaceboSelection {
    One(PlaceboScheme),
    Every,
}

impl PlaceboSelection {
    pub fn schemes(self) -> Vec<PlaceboScheme> {
        match self {
            PlaceboSelection::One(s) => vec![s],
            PlaceboSelection::Every => PlaceboScheme::ALL.to_vec(),
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            PlaceboSelection::One(s) => s.as_str(),
            PlaceboSelection::Every => "every",
        }
    }
}

/// Every option of a run. Built from defaults, then a config file, then flags.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Defaults to `<out>/synth/patents.csv`.
    pub patents: Option<PathBuf>,
    /// Defaults to `<out>/synth/deals.csv`.
    pub deals: Option<PathBuf>,
    pub alias_review: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub window: WindowParams,
    /// Deal years that form cohorts.
    pub span: YearSpan,
    /// Filing years accepted at ingestion.
    pub corpus_span: YearSpan,
    pub weights: SimilarityWeights,
    pub firm_threshold: f64,
    pub inventor_threshold: f64,
    pub alias_threshold: f64,
    pub deal_year: DealYearTerm,
    pub company_fe: bool,
    pub corrected_se: bool,
    pub dosage: bool,
    pub split_cutoff: i32,
    pub placebo_n: usize,
    pub placebo_scheme: PlaceboSelection,
    /// After-window lengths for the robustness harness; empty skips it.
    pub windows: Vec<i32>,
    pub seed: u64,
    pub synth: SynthConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            patents: None,
            deals: None,
            alias_review: None,
            output_dir: PathBuf::from("out"),
            window: WindowParams::default(),
            span: YearSpan { start: 1985, end: 2015 },
            corpus_span: YearSpan { start: 1960, end: 2030 },
            weights: SimilarityWeights::default(),
            firm_threshold: DEFAULT_FIRM_THRESHOLD,
            inventor_threshold: DEFAULT_INVENTOR_THRESHOLD,
            alias_threshold: DEFAULT_ALIAS_THRESHOLD,
            deal_year: DealYearTerm::Linear,
            company_fe: false,
            corrected_se: false,
            dosage: true,
            split_cutoff: 6,
            placebo_n: 100,
            placebo_scheme: PlaceboSelection::Every,
            windows: Vec::new(),
            seed: SynthConfig::default().seed,
            synth: SynthConfig::default(),
        }
    }
}

fn value<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::Config(format!("invalid value `{v}` for {key}")))
}

fn flag(key: &str, v: &str) -> Result<bool> {
    match v.trim() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::Config(format!("invalid boolean `{v}` for {key}"))),
    }
}

fn opt_path(v: &str) -> Option<PathBuf> {
    let v = v.trim();
    (!v.is_empty() && v != "none").then(|| PathBuf::from(v))
}

/// Parses a comma-separated list of after-window lengths.
pub fn parse_windows(v: &str) -> Result<Vec<i32>> {
    if v.trim().is_empty() || v.trim() == "none" {
        return Ok(Vec::new());
    }
    v.split(',').map(|x| value("estimate.windows", x)).collect()
}

impl RunConfig {
    /// Sets one `key = value` option.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let key = key.trim();
        match key {
            "patents" => self.patents = opt_path(v),
            "deals" => self.deals = opt_path(v),
            "alias_review" => self.alias_review = opt_path(v),
            "output_dir" => self.output_dir = PathBuf::from(v.trim()),
            "window.r" => self.window.r = value(key, v)?,
            "window.b" => self.window.b = value(key, v)?,
            "window.a" => self.window.a = value(key, v)?,
            "span.start" => self.span.start = value(key, v)?,
            "span.end" => self.span.end = value(key, v)?,
            "corpus.start" => self.corpus_span.start = value(key, v)?,
            "corpus.end" => self.corpus_span.end = value(key, v)?,
            "weights.tau" => self.weights.w_tau = value(key, v)?,
            "weights.age" => self.weights.w_age = value(key, v)?,
            "weights.patents" => self.weights.w_patents = value(key, v)?,
            "threshold.firm" => self.firm_threshold = value(key, v)?,
            "threshold.inventor" => self.inventor_threshold = value(key, v)?,
            "threshold.alias" => self.alias_threshold = value(key, v)?,
            "estimate.deal_year" => {
                self.deal_year = match v.trim() {
                    "omitted" => DealYearTerm::Omitted,
                    "linear" => DealYearTerm::Linear,
                    "fixed" => DealYearTerm::FixedEffects,
                    other => {
                        return Err(Error::Config(format!(
                            "estimate.deal_year must be omitted|linear|fixed, got `{other}`"
                        )))
                    }
                }
            }
            "estimate.company_fe" => self.company_fe = flag(key, v)?,
            "estimate.corrected_se" => self.corrected_se = flag(key, v)?,
            "estimate.dosage" => self.dosage = flag(key, v)?,
            "estimate.split_cutoff" => self.split_cutoff = value(key, v)?,
            "estimate.placebo_n" => self.placebo_n = value(key, v)?,
            "estimate.placebo_scheme" => {
                self.placebo_scheme = match v.trim() {
                    "every" => PlaceboSelection::Every,
                    s => PlaceboSelection::One(s.parse()?),
                }
            }
            "estimate.windows" => self.windows = parse_windows(v)?,
            "seed" => {
                self.seed = value(key, v)?;
                self.synth.seed = self.seed;
            }
            _ => match key.strip_prefix("synth.") {
                Some("seed") => return Err(Error::Config("the generator seed is the top-level `seed`".into())),
                Some(k) => self.synth.set(k, v)?,
                None => return Err(Error::Config(format!("unknown option `{key}`"))),
            },
        }
        Ok(())
    }

    /// Applies a `key = value` text; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: origin.to_string(),
                line: i as u64 + 1,
                field: "line".into(),
                message: "expected `key = value`".into(),
            })?;
            self.set(k, v).map_err(|e| match e {
                Error::Config(m) => Error::Parse {
                    path: origin.to_string(),
                    line: i as u64 + 1,
                    field: k.trim().to_string(),
                    message: m,
                },
                e => e,
            })?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_text(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<()> {
        self.window.validate()?;
        self.weights.validate()?;
        for (name, t) in [
            ("threshold.firm", self.firm_threshold),
            ("threshold.inventor", self.inventor_threshold),
            ("threshold.alias", self.alias_threshold),
        ] {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::Config(format!("{name} {t} outside [0, 1]")));
            }
        }
        YearSpan::new(self.span.start, self.span.end)?;
        YearSpan::new(self.corpus_span.start, self.corpus_span.end)?;
        if let Some(a) = self.windows.iter().find(|a| **a <= 0) {
            return Err(Error::Config(format!("after-window length {a} must be positive")));
        }
        Ok(())
    }

    pub fn did_options(&self) -> DidOptions {
        DidOptions {
            deal_year: self.deal_year,
            company_fe: self.company_fe,
            corrected_se: self.corrected_se,
        }
    }

    pub fn synth_dir(&self) -> PathBuf {
        self.output_dir.join("synth")
    }

    pub fn patents_path(&self) -> PathBuf {
        self.patents.clone().unwrap_or_else(|| self.synth_dir().join(synth::PATENTS_FILE))
    }

    pub fn deals_path(&self) -> PathBuf {
        self.deals.clone().unwrap_or_else(|| self.synth_dir().join(synth::DEALS_FILE))
    }

    fn stage_dir(&self, stage: &str) -> Result<PathBuf> {
        let dir = self.output_dir.join(stage);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(dir)
    }

    /// Paths are shown relative to the output directory when inside it.
    fn show_path(&self, p: &Path) -> String {
        match p.strip_prefix(&self.output_dir) {
            Ok(rel) => format!("<out>/{}", rel.display()),
            Err(_) => p.display().to_string(),
        }
    }

    /// Every effective option; the output directory itself is left out so
    /// identical runs into different directories echo identical text.
    pub fn entries(&self) -> Vec<(String, String)> {
        let mut e: Vec<(String, String)> = Vec::new();
        let mut push = |k: &str, v: String| e.push((k.to_string(), v));
        push("patents", self.show_path(&self.patents_path()));
        push("deals", self.show_path(&self.deals_path()));
        push(
            "alias_review",
            self.alias_review.as_deref().map_or("none".into(), |p| self.show_path(p)),
        );
        push("window.r", self.window.r.to_string());
        push("window.b", self.window.b.to_string());
        push("window.a", self.window.a.to_string());
        push("span.start", self.span.start.to_string());
        push("span.end", self.span.end.to_string());
        push("corpus.start", self.corpus_span.start.to_string());
        push("corpus.end", self.corpus_span.end.to_string());
        push("weights.tau", self.weights.w_tau.to_string());
        push("weights.age", self.weights.w_age.to_string());
        push("weights.patents", self.weights.w_patents.to_string());
        push("threshold.firm", self.firm_threshold.to_string());
        push("threshold.inventor", self.inventor_threshold.to_string());
        push("threshold.alias", self.alias_threshold.to_string());
        push(
            "estimate.deal_year",
            match self.deal_year {
                DealYearTerm::Omitted => "omitted",
                DealYearTerm::Linear => "linear",
                DealYearTerm::FixedEffects => "fixed",
            }
            .into(),
        );
        push("estimate.company_fe", self.company_fe.to_string());
        push("estimate.corrected_se", self.corrected_se.to_string());
        push("estimate.dosage", self.dosage.to_string());
        push("estimate.split_cutoff", self.split_cutoff.to_string());
        push("estimate.placebo_n", self.placebo_n.to_string());
        push("estimate.placebo_scheme", self.placebo_scheme.as_str().into());
        push(
            "estimate.windows",
            if self.windows.is_empty() {
                "none".into()
            } else {
                self.windows.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(",")
            },
        );
        push("seed", self.seed.to_string());
        for (k, v) in self.synth.entries().into_iter().filter(|(k, _)| k != "seed") {
            e.push((format!("synth.{k}"), v));
        }
        e
    }

    pub fn write_effective(&self) -> Result<()> {
        std::fs::create_dir_all(&self.output_dir).map_err(|e| Error::io(&self.output_dir, e))?;
        let path = self.output_dir.join(EFFECTIVE_CONFIG_FILE);
        std::fs::write(&path, kv_text(&self.entries())).map_err(|e| Error::io(&path, e))
    }
}

fn kv_text(entries: &[(String, String)]) -> String {
    let mut s = String::new();
    for (k, v) in entries {
        let _ = writeln!(s, "{k} = {v}");
    }
    s
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// In-memory results of cohort building, matching and panel construction.
#[derive(Debug, Clone)]
pub struct Staged {
    pub build: CohortBuild,
    pub matching: MatchOutcome,
    pub aliases: BTreeMap<String, AliasSet>,
    pub panel: Panel,
}

/// Cohorts, matching and panel for one window configuration.
pub fn run_stages(corpus: &Corpus, deals: &[DealEvent], reviews: &[AliasReview], cfg: &RunConfig) -> Result<Staged> {
    let build = build_cohorts(deals, corpus, cfg.window, cfg.span).stage("cohort")?;
    if build.cohorts.is_empty() {
        return Err(no_cohorts(&build));
    }
    let matching = match_all(
        &build.cohorts,
        corpus,
        &build.excluded_inventors,
        &cfg.weights,
        cfg.firm_threshold,
        cfg.inventor_threshold,
    )
    .stage("match")?;
    if matching.pairs.is_empty() {
        return Err(Error::validation("matching formed no inventor pairs").in_stage("match"));
    }
    let aliases = resolve_cohort_aliases(&build.cohorts, corpus, cfg.alias_threshold, reviews).stage("panel")?;
    let panel = build_panel(&matching.pairs, &build, corpus, &aliases).stage("panel")?;
    Ok(Staged {
        build,
        matching,
        aliases,
        panel,
    })
}

fn no_cohorts(build: &CohortBuild) -> Error {
    let mut reasons: BTreeMap<&str, usize> = BTreeMap::new();
    for a in &build.audit {
        *reasons.entry(a.reason.as_str()).or_default() += 1;
    }
    let detail = if reasons.is_empty() {
        "no acquisition inside the deal-year span".to_string()
    } else {
        reasons.iter().map(|(r, n)| format!("{n} x {r}")).collect::<Vec<_>>().join("; ")
    };
    Error::validation(format!("zero cohorts formed ({detail})")).in_stage("cohort")
}

/// Main-table columns: OLS, Heckman and Heckman with fixed effects.
pub fn main_columns(panel: &[PanelObservation], cfg: &RunConfig) -> Result<Vec<ReportColumn>> {
    let opts = cfg.did_options();
    let fe = DidOptions {
        corrected_se: cfg.corrected_se,
        ..DidOptions::fixed_effects()
    };
    Ok(vec![
        ReportColumn::ols("OLS", did_ols(panel, &opts)?, opts.has_deal_year_effects(), opts.company_fe),
        ReportColumn::heckman("Heckman (2S)", did_heckman(panel, &opts)?, opts.has_deal_year_effects(), opts.company_fe),
        ReportColumn::heckman("Heckman (2S), FE", did_heckman(panel, &fe)?, true, true),
    ])
}

/// Everything `estimate` computes from a panel.
#[derive(Debug, Clone)]
pub struct Estimates {
    pub main: Vec<ReportColumn>,
    pub dosage: Option<Vec<ReportColumn>>,
    pub predictions: Vec<GroupPrediction>,
    pub splits: Vec<ReportColumn>,
    pub naive: Vec<ReportColumn>,
    pub naive_rows: (usize, usize),
    pub placebo: Vec<PlaceboResult>,
}

pub fn estimate_panel(panel: &[PanelObservation], cfg: &RunConfig) -> Result<Estimates> {
    let opts = cfg.did_options();
    let (dy, co) = (opts.has_deal_year_effects(), opts.company_fe);
    let main = main_columns(panel, cfg).stage("estimate: main")?;
    let (dosage, predictions) = if cfg.dosage {
        let d = did_dosage(panel, &opts).stage("estimate: dosage")?;
        let groups = dosage_group_profiles(panel, &opts).stage("estimate: dosage")?;
        let preds = predict_conditional_stay(&d.heckman, &groups);
        (
            Some(vec![
                ReportColumn::ols("OLS", d.ols, dy, co),
                ReportColumn::heckman("Heckman (2S)", d.heckman, dy, co),
                ReportColumn::heckman("Heckman (2S), FE", d.heckman_fe, true, true),
            ]),
            preds,
        )
    } else {
        (None, Vec::new())
    };
    let s = split_by_experience(panel, cfg.split_cutoff, &opts).stage("estimate: split")?;
    let c = s.cutoff;
    let splits = vec![
        ReportColumn::ols(&format!("OLS, age > {c}"), s.senior_ols, dy, co),
        ReportColumn::heckman(&format!("Heckman, age > {c}"), s.senior_heckman, dy, co),
        ReportColumn::ols(&format!("OLS, age <= {c}"), s.junior_ols, dy, co),
        ReportColumn::heckman(&format!("Heckman, age <= {c}"), s.junior_heckman, dy, co),
    ];
    let n = naive_difference(panel, &opts).stage("estimate: naive")?;
    let naive_rows = (n.input_rows, n.treated_rows);
    let naive = vec![
        ReportColumn::ols("OLS, treated only", n.ols, dy, co),
        ReportColumn::heckman("Heckman, treated only", n.heckman, dy, co),
    ];
    let mut placebos = Vec::new();
    if cfg.placebo_n > 0 {
        for scheme in cfg.placebo_scheme.schemes() {
            placebos.push(placebo(panel, scheme, cfg.placebo_n, cfg.seed, &opts).stage("estimate: placebo")?);
        }
    }
    Ok(Estimates {
        main,
        dosage,
        predictions,
        splits,
        naive,
        naive_rows,
        placebo: placebos,
    })
}

/// Interaction estimates of one after-window length.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowRow {
    pub a: i32,
    pub pairs: usize,
    pub ols: f64,
    pub ols_se: f64,
    pub heckman: f64,
    pub heckman_se: f64,
}

#[derive(Debug, Clone)]
pub struct WindowHarness {
    pub rows: Vec<WindowRow>,
    /// Rendered main table per window length.
    pub tables: Vec<(i32, String)>,
}

impl WindowHarness {
    /// Every two windows differ by at most three times the larger standard error,
    /// for both estimators.
    pub fn agree(&self) -> bool {
        let close = |x: f64, sx: f64, y: f64, sy: f64| (x - y).abs() <= 3.0 * sx.max(sy);
        self.rows.iter().enumerate().all(|(i, a)| {
            self.rows[i + 1..]
                .iter()
                .all(|b| close(a.ols, a.ols_se, b.ols, b.ols_se) && close(a.heckman, a.heckman_se, b.heckman, b.heckman_se))
        })
    }

    pub fn render_summary(&self) -> String {
        let mut s = String::from("a,pairs,ols,ols_se,heckman,heckman_se\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{:.6},{:.6},{:.6},{:.6}", r.a, r.pairs, r.ols, r.ols_se, r.heckman, r.heckman_se);
        }
        s
    }
}

/// Reruns cohorts, matching, panel and the main table for every after-window length.
pub fn window_robustness(corpus: &Corpus, deals: &[DealEvent], reviews: &[AliasReview], cfg: &RunConfig, windows: &[i32]) -> Result<WindowHarness> {
    let mut rows = Vec::new();
    let mut tables = Vec::new();
    for &a in windows {
        let mut c = cfg.clone();
        c.window.a = a;
        let staged = run_stages(corpus, deals, reviews, &c)?;
        let cols = main_columns(&staged.panel.rows, &c).stage("estimate: windows")?;
        let pick = |col: &ReportColumn| {
            let f = col.main();
            (
                f.coef_of(terms::ACQUIRED_X_AFTER).unwrap_or(f64::NAN),
                f.se_of(terms::ACQUIRED_X_AFTER).unwrap_or(f64::NAN),
            )
        };
        let (ols, ols_se) = pick(&cols[0]);
        let (heckman, heckman_se) = pick(&cols[1]);
        rows.push(WindowRow {
            a,
            pairs: staged.panel.pairs(),
            ols,
            ols_se,
            heckman,
            heckman_se,
        });
        tables.push((a, render_table(&format!("Stay after the deal, after window a = {a}"), "Stay", &cols)));
    }
    Ok(WindowHarness { rows, tables })
}

// ---- subcommands ----

#[derive(Debug, Clone, PartialEq)]
pub struct IngestSummary {
    pub patent_rows: usize,
    pub patents: usize,
    pub rejected_out_of_span: usize,
    pub collapsed_duplicates: usize,
    pub deals: usize,
    pub acquisitions: usize,
}

fn load_ingested(cfg: &RunConfig) -> Result<(Corpus, Vec<DealEvent>, Vec<AliasReview>)> {
    let dir = cfg.output_dir.join("ingest");
    let (corpus, _) = load_patents(dir.join("patents.csv"), cfg.corpus_span).stage("load ingest artifacts")?;
    let deals = load_deals(dir.join("deals.csv")).stage("load ingest artifacts")?;
    let reviews = match &cfg.alias_review {
        Some(p) => load_alias_review(p).stage("alias review")?,
        None => Vec::new(),
    };
    Ok((corpus, deals, reviews))
}

/// Validates the input files and stores normalised copies plus an audit.
pub fn cmd_ingest(cfg: &RunConfig) -> Result<IngestSummary> {
    cfg.validate()?;
    cfg.write_effective()?;
    let (corpus, report) = load_patents(cfg.patents_path(), cfg.corpus_span).stage("ingest")?;
    let deals = load_deals(cfg.deals_path()).stage("ingest")?;
    if let Some(p) = &cfg.alias_review {
        load_alias_review(p).stage("ingest")?;
    }
    let dir = cfg.stage_dir("ingest")?;
    write_patents(dir.join("patents.csv"), corpus.patents())?;
    write_deals(dir.join("deals.csv"), &deals)?;
    let summary = IngestSummary {
        patent_rows: report.rows,
        patents: report.records,
        rejected_out_of_span: report.rejected_out_of_span,
        collapsed_duplicates: report.collapsed_duplicates,
        deals: deals.len(),
        acquisitions: deals.iter().filter(|d| d.is_acquisition()).count(),
    };
    let audit = [
        ("patent_rows", summary.patent_rows),
        ("patents", summary.patents),
        ("rejected_out_of_span", summary.rejected_out_of_span),
        ("collapsed_duplicates", summary.collapsed_duplicates),
        ("deals", summary.deals),
        ("acquisitions", summary.acquisitions),
    ]
    .map(|(k, v)| (k.to_string(), v.to_string()));
    write_text(&dir.join("audit.txt"), &kv_text(&audit))?;
    info!("ingested {} patents and {} deals", summary.patents, summary.deals);
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchSummary {
    pub cohorts: usize,
    pub dropped_cohorts: Vec<String>,
    pub pairs: usize,
}

/// Cohorts, firm matches, inventor pairs, balance and propensity overlap.
pub fn cmd_match(cfg: &RunConfig) -> Result<MatchSummary> {
    cfg.validate()?;
    cfg.write_effective()?;
    let (corpus, deals, reviews) = load_ingested(cfg)?;
    let dir = cfg.stage_dir("match")?;
    let build = build_cohorts(&deals, &corpus, cfg.window, cfg.span).stage("cohort")?;
    write_cohort_audit(dir.join("cohort_audit.csv"), &build.audit)?;
    if build.cohorts.is_empty() {
        return Err(no_cohorts(&build));
    }
    let m = match_all(
        &build.cohorts,
        &corpus,
        &build.excluded_inventors,
        &cfg.weights,
        cfg.firm_threshold,
        cfg.inventor_threshold,
    )
    .stage("match")?;
    let aliases = resolve_cohort_aliases(&build.cohorts, &corpus, cfg.alias_threshold, &reviews).stage("match")?;
    write_alias_queue(dir.join("alias_queue.csv"), &aliases.values().cloned().collect::<Vec<_>>())?;
    write_matches(dir.join("firm_matches.csv"), &m.firm_matches)?;
    write_pairs(dir.join("pairs.csv"), &m.pairs)?;
    let dropped: Vec<String> = m.dropped_cohorts().into_iter().map(String::from).collect();
    let mut summary = vec![
        ("cohorts".to_string(), build.cohorts.len().to_string()),
        ("pairs".to_string(), m.pairs.len().to_string()),
        ("freelancers_dropped".to_string(), build.freelancers.len().to_string()),
        ("dropped_cohorts".to_string(), dropped.len().to_string()),
    ];
    for d in &dropped {
        summary.push((format!("dropped.{d}"), format!("no control firm at or above threshold {}", cfg.firm_threshold)));
    }
    write_text(&dir.join("summary.txt"), &kv_text(&summary))?;
    if m.pairs.is_empty() {
        return Err(Error::validation("matching formed no inventor pairs").in_stage("match"));
    }
    let covs = pair_covariates(&m.pairs, &build, &corpus).stage("match: balance")?;
    let rows = balance_table(&covs).stage("match: balance")?;
    write_text(&dir.join("balance.txt"), &render_balance(&rows))?;
    write_balance(dir.join("balance.csv"), &rows)?;
    if covs.len() >= 2 {
        let ids: Vec<(String, String)> = m
            .pairs
            .iter()
            .map(|p| (p.treated_inventor_id.clone(), p.control_inventor_id.clone()))
            .collect();
        let o = propensity_overlap(&covs, &ids).stage("match: propensity")?;
        write_overlap(dir.join("propensity_scores.csv"), dir.join("propensity_density.csv"), &o)?;
    }
    info!("{} cohorts, {} pairs", build.cohorts.len(), m.pairs.len());
    Ok(MatchSummary {
        cohorts: build.cohorts.len(),
        dropped_cohorts: dropped,
        pairs: m.pairs.len(),
    })
}

/// Two-period panel of the matched pairs.
pub fn cmd_panel(cfg: &RunConfig) -> Result<Panel> {
    cfg.validate()?;
    cfg.write_effective()?;
    let (corpus, deals, reviews) = load_ingested(cfg)?;
    let pairs = read_pairs(cfg.output_dir.join("match").join("pairs.csv")).stage("load match artifacts")?;
    let build = build_cohorts(&deals, &corpus, cfg.window, cfg.span).stage("cohort")?;
    let aliases = resolve_cohort_aliases(&build.cohorts, &corpus, cfg.alias_threshold, &reviews).stage("panel")?;
    let panel = build_panel(&pairs, &build, &corpus, &aliases).stage("panel")?;
    let dir = cfg.stage_dir("panel")?;
    write_panel(dir.join("panel.csv"), &panel.rows)?;
    let count = |f: &dyn Fn(&PanelObservation) -> bool| panel.rows.iter().filter(|r| f(r)).count().to_string();
    let mut summary = vec![
        ("pairs".to_string(), panel.pairs().to_string()),
        ("rows".to_string(), panel.rows.len().to_string()),
        ("active_rows".to_string(), count(&|r| r.active)),
        ("stay_rows".to_string(), count(&|r| r.stay == Some(true))),
    ];
    summary.push((
        "tercile_cuts".to_string(),
        panel.cut_points.map_or("none".into(), |(a, b)| format!("{a:.6},{b:.6}")),
    ));
    write_text(&dir.join("summary.txt"), &kv_text(&summary))?;
    Ok(panel)
}

fn write_table(dir: &Path, stem: &str, title: &str, cols: &[ReportColumn]) -> Result<()> {
    write_text(&dir.join(format!("{stem}.txt")), &render_table(title, "Stay", cols))?;
    write_records(&dir.join(format!("{stem}.csv")), cols)
}

fn write_relocation(path_csv: &Path, path_hist: &Path, path_summary: &Path, t: &RelocationTable) -> Result<()> {
    let mut s = String::from("inventor_id,acquired,stay,before_lat,before_lon,after_lat,after_lon,distance_km,before_dispersion_km,after_dispersion_km\n");
    for r in &t.records {
        let _ = writeln!(
            s,
            "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.4},{:.4},{:.4}",
            r.inventor_id,
            u8::from(r.acquired),
            u8::from(r.stay),
            r.before_location.latitude,
            r.before_location.longitude,
            r.after_location.latitude,
            r.after_location.longitude,
            r.distance_km,
            r.before_dispersion_km,
            r.after_dispersion_km
        );
    }
    write_text(path_csv, &s)?;
    let mut h = String::from("acquired,stay,upper_km,count\n");
    for ((acq, stay), bins) in &t.histogram {
        for (edge, n) in t.bin_edges_km.iter().zip(bins) {
            let _ = writeln!(h, "{},{},{},{}", u8::from(*acq), u8::from(*stay), edge, n);
        }
    }
    write_text(path_hist, &h)?;
    write_text(path_summary, &relocation_summary(t))
}

fn relocation_summary(t: &RelocationTable) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "records = {}", t.records.len());
    let _ = writeln!(s, "filings_seen = {}", t.coverage.filings_seen);
    let _ = writeln!(s, "filings_without_location = {}", t.coverage.filings_without_location);
    for g in &t.groups {
        let arm = if g.acquired { "treated" } else { "control" };
        let st = if g.stay { "stay" } else { "leave" };
        let _ = writeln!(s, "{arm}.{st}.count = {}", g.count);
        let _ = writeln!(s, "{arm}.{st}.mean_km = {:.4}", g.mean_km);
        let _ = writeln!(s, "{arm}.{st}.std_km = {:.4}", g.std_km);
        let _ = writeln!(s, "{arm}.{st}.share_within_10km = {:.4}", g.share_within_10km);
    }
    s
}

fn write_estimates(dir: &Path, e: &Estimates) -> Result<()> {
    write_table(dir, "table3", "Probability of staying with the focal firm after the deal", &e.main)?;
    if let Some(d) = &e.dosage {
        write_table(dir, "table4", "Stay by technological similarity to the acquirer", d)?;
        let mut s = String::from("group,prediction,linear,correction,empirical,n_active,clipped\n");
        for p in &e.predictions {
            let _ = writeln!(
                s,
                "{},{:.6},{:.6},{:.6},{},{},{}",
                p.label,
                p.prediction,
                p.linear,
                p.correction,
                p.empirical.map_or(String::new(), |x| format!("{x:.6}")),
                p.n_active,
                u8::from(p.clipped)
            );
        }
        write_text(&dir.join("predictions.csv"), &s)?;
    }
    write_table(dir, "splits", "Stay by experience", &e.splits)?;
    let (input, treated) = e.naive_rows;
    let mut naive = render_table("Treated-only before/after comparison", "Stay", &e.naive);
    let _ = writeln!(naive, "input rows {input}, treated rows used {treated}");
    write_text(&dir.join("naive.txt"), &naive)?;
    write_records(&dir.join("naive.csv"), &e.naive)?;
    if !e.placebo.is_empty() {
        let mut summary = String::new();
        for p in &e.placebo {
            let mut s = String::from("permutation,estimate,p\n");
            for (k, (b, pv)) in p.estimates.iter().zip(&p.p_values).enumerate() {
                let _ = writeln!(s, "{k},{b:.8},{pv:.6e}");
            }
            write_text(&dir.join(format!("placebo_{}.csv", p.scheme.as_str())), &s)?;
            let name = p.scheme.as_str();
            let _ = writeln!(summary, "{name}.permutations = {}", p.estimates.len());
            let _ = writeln!(summary, "{name}.seed = {}", p.seed);
            let _ = writeln!(summary, "{name}.mean_estimate = {:.6}", p.mean_estimate);
            let _ = writeln!(summary, "{name}.rejection_rate_5pct = {:.4}", p.rejection_rate);
        }
        write_text(&dir.join("placebo_summary.txt"), &summary)?;
    }
    Ok(())
}

/// Every regression table, the placebo distributions, predictions, the
/// relocation summary and, when configured, the window harness.
pub fn cmd_estimate(cfg: &RunConfig) -> Result<Estimates> {
    cfg.validate()?;
    cfg.write_effective()?;
    let panel = read_panel(cfg.output_dir.join("panel").join("panel.csv")).stage("load panel artifacts")?;
    let est = estimate_panel(&panel, cfg)?;
    let dir = cfg.stage_dir("estimate")?;
    write_estimates(&dir, &est)?;
    let (corpus, deals, reviews) = load_ingested(cfg)?;
    let t = relocation_table(&panel, &corpus, (cfg.window.r, cfg.window.b, cfg.window.a)).stage("estimate: relocation")?;
    write_text(&dir.join("relocation_summary.txt"), &relocation_summary(&t))?;
    if !cfg.windows.is_empty() {
        let h = window_robustness(&corpus, &deals, &reviews, cfg, &cfg.windows)?;
        let wdir = dir.join("windows");
        std::fs::create_dir_all(&wdir).map_err(|e| Error::io(&wdir, e))?;
        for (a, text) in &h.tables {
            write_text(&wdir.join(format!("table3_a{a}.txt")), text)?;
        }
        let mut s = h.render_summary();
        let _ = writeln!(s, "# agree_within_3se = {}", h.agree());
        write_text(&wdir.join("summary.csv"), &s)?;
    }
    Ok(est)
}

/// Relocation distances of panel inventors between before and after filings.
pub fn cmd_geo(cfg: &RunConfig) -> Result<RelocationTable> {
    cfg.validate()?;
    cfg.write_effective()?;
    let (corpus, _, _) = load_ingested(cfg)?;
    let panel = read_panel(cfg.output_dir.join("panel").join("panel.csv")).stage("load panel artifacts")?;
    let t = relocation_table(&panel, &corpus, (cfg.window.r, cfg.window.b, cfg.window.a)).stage("geo")?;
    let dir = cfg.stage_dir("geo")?;
    write_relocation(&dir.join("relocation.csv"), &dir.join("histogram.csv"), &dir.join("summary.txt"), &t)?;
    Ok(t)
}

/// Generates a synthetic corpus under `<out>/synth` and checks that the
/// pipeline recovers the injected effects.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<RecoveryReport> {
    cfg.validate()?;
    cfg.write_effective()?;
    let mut sc = cfg.synth.clone();
    sc.seed = cfg.seed;
    let dir = cfg.synth_dir();
    synth::generate(&sc, &dir).stage("simulate")?;
    let report = synth::recovery_run(&sc, cfg).stage("simulate: recovery")?;
    write_text(&dir.join("recovery.txt"), &report.render())?;
    Ok(report)
}

/// Simulates first when no input files are configured, then runs every stage.
pub fn cmd_all(cfg: &RunConfig) -> Result<Option<RecoveryReport>> {
    let report = if cfg.patents.is_none() && cfg.deals.is_none() {
        Some(cmd_simulate(cfg)?)
    } else {
        None
    };
    cmd_ingest(cfg)?;
    cmd_match(cfg)?;
    cmd_panel(cfg)?;
    cmd_estimate(cfg)?;
    cmd_geo(cfg)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_file_then_flags() {
        let mut c = RunConfig::default();
        c.apply_text("window.a = 5\nthreshold.firm = 0.9  # stricter\nsynth.n_treated_firms = 3\n", "cfg").unwrap();
        assert_eq!(c.window.a, 5);
        assert_eq!(c.firm_threshold, 0.9);
        assert_eq!(c.synth.n_treated_firms, 3);
        c.set("window.a", "6").unwrap();
        assert_eq!(c.window.a, 6);
        c.set("seed", "11").unwrap();
        assert_eq!(c.synth.seed, 11);
    }

    #[test]
    fn config_errors_carry_line_numbers() {
        let mut c = RunConfig::default();
        let e = c.apply_text("window.a = 4\nbogus = 1\n", "run.cfg").unwrap_err();
        assert!(matches!(&e, Error::Parse { line: 2, .. }), "{e}");
        assert_eq!(e.exit_code(), 1);
        let e = c.apply_text("no equals sign\n", "run.cfg").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn invariants_are_enforced() {
        let mut c = RunConfig::default();
        c.set("weights.tau", "0.6").unwrap();
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = RunConfig::default();
        c.set("window.b", "7").unwrap();
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.set("threshold.inventor", "1.2").unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn effective_config_round_trips() {
        let mut c = RunConfig::default();
        c.set("estimate.windows", "3,4,5,6").unwrap();
        c.set("estimate.placebo_scheme", "within_control").unwrap();
        c.set("synth.dosage_effect_profile", "-0.21,-0.15,-0.24").unwrap();
        let text = kv_text(&c.entries());
        assert!(!text.contains("output_dir"));
        let mut back = RunConfig::default();
        for line in text.lines() {
            let (k, v) = line.split_once('=').unwrap();
            if k.trim() != "patents" && k.trim() != "deals" {
                back.set(k, v).unwrap();
            }
        }
        assert_eq!(back, c);
    }

    #[test]
    fn missing_input_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = RunConfig::default();
        c.output_dir = dir.path().to_path_buf();
        c.patents = Some(dir.path().join("absent.csv"));
        c.deals = Some(dir.path().join("absent_deals.csv"));
        let e = cmd_ingest(&c).unwrap_err();
        assert_eq!(e.exit_code(), 3);
        assert!(e.to_string().contains("absent.csv"));
    }
}
