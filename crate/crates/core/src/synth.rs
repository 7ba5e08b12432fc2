//! Synthetic patent corpora with known treatment effects.
//!
//! Every cohort gets its own block of IPC main groups so cohorts never
//! compete for controls. Control firms are near copies of their treated firm:
//! each treated inventor has a twin at every control firm with the same
//! technology tags and career start and a recruitment count perturbed by at
//! most one, which lets the matching stage pair almost everyone.
//!
//! Outcomes are drawn on the probability scale. Activity follows a probit
//! index in inventor age (the exclusion restriction of the selection model);
//! Stay is a Bernoulli draw per active period. Stayers file only for the
//! focal side (the firm, and for acquired inventors after the deal also the
//! acquirer and its alias) and leavers only for sink firms, so Stay does not
//! depend on how long the after window is.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Gamma};
use rayon::prelude::*;

use crate::corpus::{write_deals, write_patents, DealEvent, DealType, InventorEntry, PatentRecord};
use crate::error::{Error, Result};
use crate::estimators::normal;
use crate::geo::{GeoPoint, EARTH_RADIUS_KM};
use crate::panel::Dosage;

pub const PATENTS_FILE: &str = "patents.csv";
pub const DEALS_FILE: &str = "deals.csv";
pub const TRUTH_FILE: &str = "truth.txt";

/// Cell probabilities must stay inside this band.
pub const CELL_BOUNDS: (f64, f64) = (0.01, 0.99);

/// Latest year, counted from the deal, of the first after-period filing of
/// an active inventor.
const FIRST_AFTER_FILING: i32 = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_treated_firms: usize,
    pub controls_per_firm: usize,
    /// Inclusive range of employees per treated firm.
    pub inventors_per_firm: (usize, usize),
    /// Inventors per firm who file mostly elsewhere.
    pub freelancers_per_firm: usize,
    /// Technology codes per cohort.
    pub ipc_vocabulary_size: usize,
    /// Dirichlet concentration of firm technology mixtures; small values give sparse mixtures.
    pub profile_concentration: f64,
    /// Shares of low and medium similarity inventors among the treated; high takes the rest.
    pub dosage_shares: (f64, f64),
    /// Probability of filing in the before period at the pivot age.
    pub base_activity_rate: f64,
    /// Probit-index slope of activity per year of age.
    pub age_activity_slope: f64,
    /// Multiplier on activity in the after period.
    pub activity_decay: f64,
    pub base_stay_prob: f64,
    pub treatment_effect_stay: f64,
    pub treatment_effect_active: f64,
    /// Stay effects for (low, medium, high) similarity; replaces the common effect when set.
    pub dosage_effect_profile: Option<(f64, f64, f64)>,
    /// After-period stay shift shared by both arms.
    pub secular_trend: f64,
    /// Probability that a leaver relocates.
    pub relocation_rate: f64,
    /// Mean of the exponential move distance.
    pub move_distance_km: f64,
    pub acquisition_years: (i32, i32),
    /// Inclusive range of years between first filing and the deal.
    pub age_range: (i32, i32),
    /// Years after the deal over which filings are spread.
    pub after_horizon: i32,
    pub sinks_per_cohort: usize,
    /// Probability that an inventor with three or more recruitment filings files one of them elsewhere.
    pub exclusivity_leak: f64,
    /// Recruitment start and before start, in years before the deal.
    pub r: i32,
    pub b: i32,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 20240517,
            n_treated_firms: 40,
            controls_per_firm: 2,
            inventors_per_firm: (20, 30),
            freelancers_per_firm: 1,
            ipc_vocabulary_size: 6,
            profile_concentration: 1.0,
            dosage_shares: (0.40, 0.33),
            base_activity_rate: 0.75,
            age_activity_slope: -0.08,
            activity_decay: 0.9,
            base_stay_prob: 0.8,
            treatment_effect_stay: -0.2,
            treatment_effect_active: 0.0,
            dosage_effect_profile: None,
            secular_trend: -0.14,
            relocation_rate: 0.3,
            move_distance_km: 200.0,
            acquisition_years: (1995, 2005),
            age_range: (5, 16),
            after_horizon: 6,
            sinks_per_cohort: 3,
            exclusivity_leak: 0.3,
            r: 7,
            b: 4,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("invalid value `{value}` for synth.{key}")))
}

fn fmt_profile(p: Option<(f64, f64, f64)>) -> String {
    match p {
        None => "none".into(),
        Some((l, m, h)) => format!("{l},{m},{h}"),
    }
}

impl SynthConfig {
    /// Sets one option by its key (without the `synth.` prefix).
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "seed" => self.seed = parse(key, value)?,
            "n_treated_firms" => self.n_treated_firms = parse(key, value)?,
            "controls_per_firm" => self.controls_per_firm = parse(key, value)?,
            "inventors_min" => self.inventors_per_firm.0 = parse(key, value)?,
            "inventors_max" => self.inventors_per_firm.1 = parse(key, value)?,
            "freelancers_per_firm" => self.freelancers_per_firm = parse(key, value)?,
            "ipc_vocabulary_size" => self.ipc_vocabulary_size = parse(key, value)?,
            "profile_concentration" => self.profile_concentration = parse(key, value)?,
            "low_share" => self.dosage_shares.0 = parse(key, value)?,
            "medium_share" => self.dosage_shares.1 = parse(key, value)?,
            "base_activity_rate" => self.base_activity_rate = parse(key, value)?,
            "age_activity_slope" => self.age_activity_slope = parse(key, value)?,
            "activity_decay" => self.activity_decay = parse(key, value)?,
            "base_stay_prob" => self.base_stay_prob = parse(key, value)?,
            "treatment_effect_stay" => self.treatment_effect_stay = parse(key, value)?,
            "treatment_effect_active" => self.treatment_effect_active = parse(key, value)?,
            "dosage_effect_profile" => {
                self.dosage_effect_profile = if value.trim() == "none" {
                    None
                } else {
                    let v: Vec<f64> = value.split(',').map(|x| parse(key, x)).collect::<Result<_>>()?;
                    let [l, m, h] = v[..] else {
                        return Err(Error::Config(format!(
                            "synth.dosage_effect_profile needs three values (low,medium,high), got `{value}`"
                        )));
                    };
                    Some((l, m, h))
                }
            }
            "secular_trend" => self.secular_trend = parse(key, value)?,
            "relocation_rate" => self.relocation_rate = parse(key, value)?,
            "move_distance_km" => self.move_distance_km = parse(key, value)?,
            "acquisition_year_start" => self.acquisition_years.0 = parse(key, value)?,
            "acquisition_year_end" => self.acquisition_years.1 = parse(key, value)?,
            "age_min" => self.age_range.0 = parse(key, value)?,
            "age_max" => self.age_range.1 = parse(key, value)?,
            "after_horizon" => self.after_horizon = parse(key, value)?,
            "sinks_per_cohort" => self.sinks_per_cohort = parse(key, value)?,
            "exclusivity_leak" => self.exclusivity_leak = parse(key, value)?,
            "r" => self.r = parse(key, value)?,
            "b" => self.b = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown option synth.{key}"))),
        }
        Ok(())
    }

    /// Every option as `(key, value)`, in the order accepted by [`SynthConfig::set`].
    pub fn entries(&self) -> Vec<(String, String)> {
        let e = |k: &str, v: String| (k.to_string(), v);
        vec![
            e("seed", self.seed.to_string()),
            e("n_treated_firms", self.n_treated_firms.to_string()),
            e("controls_per_firm", self.controls_per_firm.to_string()),
            e("inventors_min", self.inventors_per_firm.0.to_string()),
            e("inventors_max", self.inventors_per_firm.1.to_string()),
            e("freelancers_per_firm", self.freelancers_per_firm.to_string()),
            e("ipc_vocabulary_size", self.ipc_vocabulary_size.to_string()),
            e("profile_concentration", self.profile_concentration.to_string()),
            e("low_share", self.dosage_shares.0.to_string()),
            e("medium_share", self.dosage_shares.1.to_string()),
            e("base_activity_rate", self.base_activity_rate.to_string()),
            e("age_activity_slope", self.age_activity_slope.to_string()),
            e("activity_decay", self.activity_decay.to_string()),
            e("base_stay_prob", self.base_stay_prob.to_string()),
            e("treatment_effect_stay", self.treatment_effect_stay.to_string()),
            e("treatment_effect_active", self.treatment_effect_active.to_string()),
            e("dosage_effect_profile", fmt_profile(self.dosage_effect_profile)),
            e("secular_trend", self.secular_trend.to_string()),
            e("relocation_rate", self.relocation_rate.to_string()),
            e("move_distance_km", self.move_distance_km.to_string()),
            e("acquisition_year_start", self.acquisition_years.0.to_string()),
            e("acquisition_year_end", self.acquisition_years.1.to_string()),
            e("age_min", self.age_range.0.to_string()),
            e("age_max", self.age_range.1.to_string()),
            e("after_horizon", self.after_horizon.to_string()),
            e("sinks_per_cohort", self.sinks_per_cohort.to_string()),
            e("exclusivity_leak", self.exclusivity_leak.to_string()),
            e("r", self.r.to_string()),
            e("b", self.b.to_string()),
        ]
    }

    /// Age at which the activity index equals `Φ⁻¹(base_activity_rate)`.
    pub fn pivot_age(&self) -> f64 {
        f64::from(self.age_range.0 + self.age_range.1) / 2.0
    }

    pub fn active_before(&self, age: i32) -> f64 {
        normal::cdf(normal::quantile(self.base_activity_rate) + self.age_activity_slope * (f64::from(age) - self.pivot_age()))
    }

    pub fn active_after(&self, age: i32, acquired: bool) -> f64 {
        self.active_before(age) * self.activity_decay + if acquired { self.treatment_effect_active } else { 0.0 }
    }

    /// Stay probability of an active inventor. `dosage` is ignored for controls.
    pub fn stay_prob(&self, acquired: bool, after: bool, dosage: Dosage) -> f64 {
        if !after {
            return self.base_stay_prob;
        }
        let effect = match (acquired, self.dosage_effect_profile) {
            (false, _) => 0.0,
            (true, None) => self.treatment_effect_stay,
            (true, Some((l, m, h))) => match dosage {
                Dosage::Low => l,
                Dosage::Medium => m,
                Dosage::High => h,
                Dosage::Control | Dosage::Unscored => self.treatment_effect_stay,
            },
        };
        self.base_stay_prob + self.secular_trend + effect
    }

    fn treated_levels(&self) -> Vec<Dosage> {
        match self.dosage_effect_profile {
            None => vec![Dosage::Unscored],
            Some(_) => vec![Dosage::Low, Dosage::Medium, Dosage::High],
        }
    }

    /// Every cell probability the generator draws from, labelled.
    pub fn cells(&self) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        for age in self.age_range.0..=self.age_range.1 {
            out.push((format!("active.before.age{age}"), self.active_before(age)));
            out.push((format!("active.after.control.age{age}"), self.active_after(age, false)));
            out.push((format!("active.after.treated.age{age}"), self.active_after(age, true)));
        }
        out.push(("stay.before".into(), self.stay_prob(false, false, Dosage::Control)));
        out.push(("stay.after.control".into(), self.stay_prob(false, true, Dosage::Control)));
        for d in self.treated_levels() {
            let label = if d == Dosage::Unscored { "treated".to_string() } else { format!("treated.{}", d.as_str()) };
            out.push((format!("stay.after.{label}"), self.stay_prob(true, true, d)));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_treated_firms == 0 || self.controls_per_firm == 0 {
            return bad("synth needs at least one treated firm and one control per firm".into());
        }
        let (lo, hi) = self.inventors_per_firm;
        if lo == 0 || lo > hi {
            return bad(format!("inventors per firm range {lo}..={hi} is empty"));
        }
        if self.ipc_vocabulary_size == 0 || self.ipc_vocabulary_size > 900 {
            return bad("ipc_vocabulary_size must be in 1..=900".into());
        }
        if self.n_treated_firms > 700 {
            return bad("at most 700 treated firms (one IPC block each)".into());
        }
        if !(self.profile_concentration > 0.0) {
            return bad("profile_concentration must be positive".into());
        }
        let (l, m) = self.dosage_shares;
        if !(l > 0.0 && m > 0.0 && l + m < 1.0) {
            return bad(format!("dosage shares ({l}, {m}) must be positive and sum below 1"));
        }
        if !(self.b > 0 && self.r > self.b) {
            return bad(format!("synth windows need r > b > 0 (got r={}, b={})", self.r, self.b));
        }
        if self.age_range.0 <= self.b || self.age_range.0 > self.age_range.1 {
            return bad(format!("age range {:?} must start after b = {}", self.age_range, self.b));
        }
        if self.after_horizon < FIRST_AFTER_FILING {
            return bad(format!("after_horizon must be at least {FIRST_AFTER_FILING}"));
        }
        if self.acquisition_years.0 > self.acquisition_years.1 {
            return bad("acquisition year range is empty".into());
        }
        if !(0.0..=1.0).contains(&self.relocation_rate) || !(0.0..=1.0).contains(&self.exclusivity_leak) {
            return bad("relocation_rate and exclusivity_leak must be probabilities".into());
        }
        if !(self.move_distance_km > 0.0) {
            return bad("move_distance_km must be positive".into());
        }
        if self.sinks_per_cohort == 0 {
            return bad("sinks_per_cohort must be at least 1".into());
        }
        if !(0.0 < self.base_activity_rate && self.base_activity_rate < 1.0) {
            return bad("base_activity_rate must lie strictly between 0 and 1".into());
        }
        for (name, p) in self.cells() {
            if !(CELL_BOUNDS.0..=CELL_BOUNDS.1).contains(&p) {
                return bad(format!(
                    "cell probability {name} = {p:.4} outside [{}, {}]",
                    CELL_BOUNDS.0, CELL_BOUNDS.1
                ));
            }
        }
        Ok(())
    }
}

/// Generated corpus plus the injected truth.
#[derive(Debug, Clone)]
pub struct SynthData {
    pub patents: Vec<PatentRecord>,
    pub deals: Vec<DealEvent>,
    pub truth: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthFiles {
    pub patents: PathBuf,
    pub deals: PathBuf,
    pub truth: PathBuf,
}

const SYLLABLES: [&str; 24] = [
    "ka", "lo", "vi", "ter", "mon", "dra", "sel", "quo", "ban", "fir", "gal", "hem", "jor", "nex", "pol", "rin", "sut",
    "tav", "ul", "wen", "yor", "zem", "cor", "dix",
];
const TRADES: [&str; 8] = ["Systems", "Labs", "Dynamics", "Materials", "Devices", "Works", "Instruments", "Chemicals"];

fn firm_name(rng: &mut ChaCha8Rng, taken: &mut BTreeSet<String>) -> String {
    loop {
        let n = rng.random_range(2..=3);
        let mut stem: String = (0..n).map(|_| *SYLLABLES.choose(rng).unwrap()).collect();
        stem[..1].make_ascii_uppercase();
        let name = format!("{stem} {}", TRADES.choose(rng).unwrap());
        if taken.insert(crate::corpus::normalize_name(&name)) {
            return name;
        }
    }
}

struct Names {
    treated: String,
    acquirer: String,
    controls: Vec<String>,
    sinks: Vec<String>,
}

fn ipc(cohort: usize, subclass: char, group: usize) -> String {
    let section = (b'A' + (cohort % 8) as u8) as char;
    let class = cohort / 8 + 1;
    format!("{section}{class:02}{subclass}{group:03}")
}

fn destination(p: GeoPoint, distance_km: f64, bearing: f64) -> GeoPoint {
    let d = distance_km / EARTH_RADIUS_KM;
    let (lat, lon) = (p.latitude.to_radians(), p.longitude.to_radians());
    let lat2 = (lat.sin() * d.cos() + lat.cos() * d.sin() * bearing.cos()).asin();
    let lon2 = lon + (bearing.sin() * d.sin() * lat.cos()).atan2(d.cos() - lat.sin() * lat2.sin());
    let lon_deg = (lon2.to_degrees() + 540.0).rem_euclid(360.0) - 180.0;
    GeoPoint {
        latitude: lat2.to_degrees().clamp(-90.0, 90.0),
        longitude: lon_deg,
    }
}

/// Filing plan of one inventor; assignees are resolved at emission time.
#[derive(Debug, Clone)]
struct Career {
    tags: Vec<String>,
    start: i32,
    recruitment: usize,
    leak: bool,
}

struct CohortGen<'a> {
    cfg: &'a SynthConfig,
    idx: usize,
    t: i32,
    rng: ChaCha8Rng,
    patents: Vec<PatentRecord>,
    next_inventor: usize,
    names: &'a Names,
    sinks: Vec<String>,
}

impl CohortGen<'_> {
    fn file(&mut self, year: i32, firm: &str, name: &str, inventor: &str, at: GeoPoint, tags: &[String]) {
        let jitter = destination(at, self.rng.random_range(0.0..1.0), self.rng.random_range(0.0..std::f64::consts::TAU));
        self.patents.push(PatentRecord {
            patent_id: format!("P{:04}{:05}", self.idx + 1, self.patents.len() + 1),
            application_year: year,
            assignee_id: firm.to_string(),
            assignee_name: name.to_string(),
            inventors: vec![InventorEntry {
                inventor_id: inventor.to_string(),
                location: Some(jitter),
            }],
            ipc_main_groups: tags.to_vec(),
        });
    }

    fn inventor_id(&mut self) -> String {
        self.next_inventor += 1;
        format!("I{:04}{:04}", self.idx + 1, self.next_inventor)
    }

    fn sink(&mut self) -> (String, String) {
        let k = self.rng.random_range(0..self.sinks.len());
        (self.sinks[k].clone(), self.names.sinks[k].clone())
    }

    fn years(&mut self, lo: i32, hi: i32, n: usize) -> Vec<i32> {
        (0..n).map(|_| self.rng.random_range(lo..hi)).collect()
    }

    /// Pre-history and recruitment filings of an employee.
    fn recruit(&mut self, inv: &str, firm: (&str, &str), home: GeoPoint, c: &Career) {
        let (t, r, b) = (self.t, self.cfg.r, self.cfg.b);
        let rec_start = c.start.max(t - r);
        if c.start < t - r {
            self.file(c.start, firm.0, firm.1, inv, home, &c.tags);
        }
        let mut years = vec![rec_start];
        years.extend(self.years(rec_start, t - b, c.recruitment - 1));
        for (k, y) in years.into_iter().enumerate() {
            if c.leak && k == 1 {
                let (s, sn) = self.sink();
                self.file(y, &s, &sn, inv, home, &c.tags);
            } else {
                self.file(y, firm.0, firm.1, inv, home, &c.tags);
            }
        }
    }

    /// Before and after filings of an employee.
    fn outcomes(&mut self, inv: &str, firm: (&str, &str), home: GeoPoint, c: &Career, acquired: bool, dosage: Dosage) {
        let cfg = self.cfg;
        let (t, b) = (self.t, cfg.b);
        let age = t - c.start;
        if self.rng.random::<f64>() < cfg.active_before(age) {
            let stay = self.rng.random::<f64>() < cfg.stay_prob(acquired, false, dosage);
            let (s, sn) = self.sink();
            let n = self.rng.random_range(1..=2);
            for y in self.years(t - b, t, n) {
                if stay {
                    self.file(y, firm.0, firm.1, inv, home, &c.tags);
                } else {
                    self.file(y, &s, &sn, inv, home, &c.tags);
                }
            }
        }
        if self.rng.random::<f64>() < cfg.active_after(age, acquired) {
            let stay = self.rng.random::<f64>() < cfg.stay_prob(acquired, true, dosage);
            let mut years = self.years(t, t + FIRST_AFTER_FILING, 1);
            let extra = self.rng.random_range(0..=2);
            years.extend(self.years(t, t + cfg.after_horizon, extra));
            let (s, sn) = self.sink();
            let moved = !stay && self.rng.random::<f64>() < cfg.relocation_rate;
            let at = if moved {
                let d = Exp::new(1.0 / cfg.move_distance_km).expect("positive rate").sample(&mut self.rng);
                destination(home, d, self.rng.random_range(0.0..std::f64::consts::TAU))
            } else {
                home
            };
            let alias_id = format!("L{:04}", self.idx + 1);
            let acquirer_id = format!("A{:04}", self.idx + 1);
            let alias_name = format!("{} Inc", self.names.acquirer);
            for y in years {
                if !stay {
                    self.file(y, &s, &sn, inv, at, &c.tags);
                } else if acquired {
                    let acq = self.names.acquirer.clone();
                    match self.rng.random_range(0..3) {
                        0 => self.file(y, firm.0, firm.1, inv, at, &c.tags),
                        1 => self.file(y, &acquirer_id, &acq, inv, at, &c.tags),
                        _ => self.file(y, &alias_id, &alias_name, inv, at, &c.tags),
                    }
                } else {
                    self.file(y, firm.0, firm.1, inv, at, &c.tags);
                }
            }
        }
    }

    fn freelancers(&mut self, firm: (&str, &str), home: GeoPoint, tags: &[String]) {
        let (t, r, b) = (self.t, self.cfg.r, self.cfg.b);
        for _ in 0..self.cfg.freelancers_per_firm {
            let inv = self.inventor_id();
            let y = self.rng.random_range(t - r..t - b);
            self.file(y, firm.0, firm.1, &inv, home, tags);
            let (s, sn) = self.sink();
            for y in self.years(t - r, t - b, 3) {
                self.file(y, &s, &sn, &inv, home, tags);
            }
        }
    }
}

fn cohort_patents(cfg: &SynthConfig, idx: usize, t: i32, names: &Names) -> Vec<PatentRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(idx as u64 + 1);
    let vocab: Vec<String> = (0..cfg.ipc_vocabulary_size).map(|j| ipc(idx, 'B', j + 1)).collect();
    let (a1, a2) = (ipc(idx, 'Q', 1), ipc(idx, 'Q', 2));
    // Dirichlet mixture as normalised Gamma draws.
    let gamma = Gamma::new(cfg.profile_concentration, 1.0).expect("validated concentration");
    let raw: Vec<f64> = (0..vocab.len()).map(|_| gamma.sample(&mut rng).max(f64::MIN_POSITIVE)).collect();
    let total: f64 = raw.iter().sum();
    let mixture: Vec<f64> = raw.iter().map(|g| g / total).collect();
    let hq = GeoPoint {
        latitude: rng.random_range(35.0..55.0),
        longitude: rng.random_range(-10.0..30.0),
    };
    let sinks: Vec<String> = (0..cfg.sinks_per_cohort).map(|k| format!("S{:04}-{}", idx + 1, k + 1)).collect();
    let mut g = CohortGen {
        cfg,
        idx,
        t,
        rng,
        patents: Vec::new(),
        next_inventor: 0,
        names,
        sinks,
    };

    // Acquirer staff define the acquirer profile {A1, A2}.
    let acquirer_id = format!("A{:04}", idx + 1);
    for _ in 0..4 {
        let inv = g.inventor_id();
        for y in g.years(t - cfg.r, t - cfg.b, 2) {
            let acq = names.acquirer.clone();
            g.file(y, &acquirer_id, &acq, &inv, hq, &[a1.clone(), a2.clone()]);
        }
    }

    let n = g.rng.random_range(cfg.inventors_per_firm.0..=cfg.inventors_per_firm.1);
    let (low, medium) = cfg.dosage_shares;
    let careers: Vec<(Career, Dosage)> = (0..n)
        .map(|_| {
            let u: f64 = g.rng.random();
            let mut pick = g.rng.random::<f64>();
            let mut focal = vocab.len() - 1;
            for (j, w) in mixture.iter().enumerate() {
                if pick < *w {
                    focal = j;
                    break;
                }
                pick -= w;
            }
            let f = vocab[focal].clone();
            let (tags, dosage) = if u < low {
                (vec![f], Dosage::Low)
            } else if u < low + medium {
                (vec![f, a1.clone()], Dosage::Medium)
            } else {
                (vec![f, a1.clone(), a2.clone()], Dosage::High)
            };
            let age = g.rng.random_range(cfg.age_range.0..=cfg.age_range.1);
            let recruitment = g.rng.random_range(1..=4);
            let leak = recruitment >= 3 && g.rng.random::<f64>() < cfg.exclusivity_leak;
            (
                Career {
                    tags,
                    start: t - age,
                    recruitment,
                    leak,
                },
                dosage,
            )
        })
        .collect();

    let treated_id = format!("T{:04}", idx + 1);
    let firms: Vec<(String, String, bool)> = std::iter::once((treated_id, names.treated.clone(), true))
        .chain(
            names
                .controls
                .iter()
                .enumerate()
                .map(|(k, nm)| (format!("C{:04}{}", idx + 1, (b'a' + k as u8) as char), nm.clone(), false)),
        )
        .collect();
    for (firm_id, firm_name, acquired) in &firms {
        let site = destination(hq, g.rng.random_range(0.0..30.0), g.rng.random_range(0.0..std::f64::consts::TAU));
        let firm = (firm_id.as_str(), firm_name.as_str());
        for (c, dosage) in &careers {
            let mut c = c.clone();
            if !acquired {
                let shift: i64 = g.rng.random_range(-1..=1);
                c.recruitment = (c.recruitment as i64 + shift).clamp(1, 4) as usize;
                c.leak = c.recruitment >= 3 && g.rng.random::<f64>() < cfg.exclusivity_leak;
            }
            let inv = g.inventor_id();
            let home = destination(site, g.rng.random_range(0.0..5.0), g.rng.random_range(0.0..std::f64::consts::TAU));
            g.recruit(&inv, firm, home, &c);
            g.outcomes(&inv, firm, home, &c, *acquired, *dosage);
        }
        let tags = vec![vocab[0].clone()];
        g.freelancers(firm, site, &tags);
    }
    g.patents
}

/// Generates the corpus, deal list and truth table in memory.
pub fn simulate(cfg: &SynthConfig) -> Result<SynthData> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut taken = BTreeSet::new();
    let names: Vec<Names> = (0..cfg.n_treated_firms)
        .map(|_| Names {
            treated: firm_name(&mut rng, &mut taken),
            acquirer: firm_name(&mut rng, &mut taken),
            controls: (0..cfg.controls_per_firm).map(|_| firm_name(&mut rng, &mut taken)).collect(),
            sinks: (0..cfg.sinks_per_cohort).map(|_| firm_name(&mut rng, &mut taken)).collect(),
        })
        .collect();
    let years: Vec<i32> = (0..cfg.n_treated_firms)
        .map(|_| rng.random_range(cfg.acquisition_years.0..=cfg.acquisition_years.1))
        .collect();

    let patents: Vec<PatentRecord> = (0..cfg.n_treated_firms)
        .into_par_iter()
        .map(|i| cohort_patents(cfg, i, years[i], &names[i]))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();

    let mut deals = Vec::new();
    for (i, nm) in names.iter().enumerate() {
        deals.push(DealEvent {
            acquired_id: format!("T{:04}", i + 1),
            acquired_name: nm.treated.clone(),
            acquirer_id: format!("A{:04}", i + 1),
            acquirer_name: nm.acquirer.clone(),
            deal_year: years[i],
            deal_type: DealType::Acquisition,
        });
        for (k, sn) in nm.sinks.iter().enumerate() {
            deals.push(DealEvent {
                acquired_id: format!("S{:04}-{}", i + 1, k + 1),
                acquired_name: sn.clone(),
                acquirer_id: format!("H{:04}", i + 1),
                acquirer_name: format!("Holding {}", i + 1),
                deal_year: years[i] - cfg.r - 2,
                deal_type: DealType::OtherMa,
            });
        }
    }
    crate::corpus::sort_deals(&mut deals);

    let mut truth: Vec<(String, String)> = cfg.entries().into_iter().map(|(k, v)| (format!("config.{k}"), v)).collect();
    truth.push(("model.active_index".into(), "Phi(Phi^-1(base_activity_rate) + age_activity_slope * (age - pivot_age))".into()));
    truth.push(("model.pivot_age".into(), cfg.pivot_age().to_string()));
    truth.push(("model.first_after_filing_within_years".into(), FIRST_AFTER_FILING.to_string()));
    for (k, p) in cfg.cells() {
        truth.push((format!("cell.{k}"), format!("{p:.10}")));
    }
    truth.push(("count.cohorts".into(), cfg.n_treated_firms.to_string()));
    truth.push(("count.patents".into(), patents.len().to_string()));
    truth.push(("count.deals".into(), deals.len().to_string()));
    Ok(SynthData { patents, deals, truth })
}

pub fn write_truth(path: impl AsRef<Path>, truth: &[(String, String)]) -> Result<()> {
    let path = path.as_ref();
    let mut s = String::new();
    for (k, v) in truth {
        let _ = writeln!(s, "{k} = {v}");
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Reads a `key = value` truth file.
pub fn read_truth(path: impl AsRef<Path>) -> Result<BTreeMap<String, String>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| Error::Parse {
                    path: path.display().to_string(),
                    line: i as u64 + 1,
                    field: "line".into(),
                    message: "expected `key = value`".into(),
                })
        })
        .collect()
}

/// Writes `patents.csv`, `deals.csv` and `truth.txt` into `dir`.
pub fn generate(cfg: &SynthConfig, dir: impl AsRef<Path>) -> Result<SynthFiles> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let data = simulate(cfg)?;
    let files = SynthFiles {
        patents: dir.join(PATENTS_FILE),
        deals: dir.join(DEALS_FILE),
        truth: dir.join(TRUTH_FILE),
    };
    write_patents(&files.patents, &data.patents)?;
    write_deals(&files.deals, &data.deals)?;
    write_truth(&files.truth, &data.truth)?;
    Ok(files)
}

/// One recovered coefficient against its injected value.
#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryRow {
    pub estimator: String,
    pub term: String,
    pub estimate: f64,
    pub se: f64,
    pub truth: f64,
    pub pass: bool,
}

impl RecoveryRow {
    fn new(estimator: &str, term: &str, estimate: f64, se: f64, truth: f64) -> Self {
        RecoveryRow {
            estimator: estimator.to_string(),
            term: term.to_string(),
            estimate,
            se,
            truth,
            pass: (estimate - truth).abs() <= RECOVERY_SE_MULTIPLE * se,
        }
    }

    pub fn lower(&self) -> f64 {
        self.estimate - RECOVERY_SE_MULTIPLE * self.se
    }

    pub fn upper(&self) -> f64 {
        self.estimate + RECOVERY_SE_MULTIPLE * self.se
    }
}

/// An estimate recovers its truth when within this many standard errors.
pub const RECOVERY_SE_MULTIPLE: f64 = 3.0;

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryReport {
    pub pairs: usize,
    pub rows: Vec<RecoveryRow>,
    /// Whether Heckman dosage estimates are ordered like the injected profile.
    pub dosage_order: Option<bool>,
    /// Mean placebo interaction and its standard error over permutations.
    pub placebo: Option<(f64, f64)>,
}

impl RecoveryReport {
    pub fn placebo_pass(&self) -> bool {
        self.placebo.is_none_or(|(m, se)| m.abs() <= RECOVERY_SE_MULTIPLE * se)
    }

    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.pass) && self.dosage_order != Some(false) && self.placebo_pass()
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "pairs = {}", self.pairs);
        let _ = writeln!(s, "estimator,term,estimate,se,lower,upper,truth,pass");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{}",
                r.estimator,
                r.term,
                r.estimate,
                r.se,
                r.lower(),
                r.upper(),
                r.truth,
                r.pass
            );
        }
        if let Some(o) = self.dosage_order {
            let _ = writeln!(s, "dosage_order_matches = {o}");
        }
        if let Some((m, se)) = self.placebo {
            let _ = writeln!(s, "placebo_mean = {m:.6}");
            let _ = writeln!(s, "placebo_mean_se = {se:.6}");
            let _ = writeln!(s, "placebo_mean_near_zero = {}", self.placebo_pass());
        }
        let _ = writeln!(s, "recovered = {}", self.passed());
        s
    }
}

fn rank(v: [f64; 3]) -> [usize; 3] {
    let mut idx = [0, 1, 2];
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    idx
}

/// Run settings adjusted to a generator config: its windows and a deal-year
/// span covering every generated acquisition.
pub fn run_config_for(cfg: &SynthConfig, run: &crate::pipeline::RunConfig) -> crate::pipeline::RunConfig {
    let mut run = run.clone();
    run.window.r = cfg.r;
    run.window.b = cfg.b;
    run.span = crate::corpus::YearSpan {
        start: run.span.start.min(cfg.acquisition_years.0),
        end: run.span.end.max(cfg.acquisition_years.1),
    };
    run
}

/// Simulates `cfg` in memory and runs cohorts, matching and panel on it.
pub fn simulated_stages(cfg: &SynthConfig, run: &crate::pipeline::RunConfig) -> Result<crate::pipeline::Staged> {
    let data = simulate(cfg)?;
    let corpus = crate::corpus::Corpus::new(data.patents);
    crate::pipeline::run_stages(&corpus, &data.deals, &[], &run_config_for(cfg, run))
}

/// Simulates `cfg`, runs the pipeline stages on the result and compares the
/// estimated interaction effects with the injected ones.
pub fn recovery_run(cfg: &SynthConfig, run: &crate::pipeline::RunConfig) -> Result<RecoveryReport> {
    let staged = simulated_stages(cfg, run)?;
    recovery_report(cfg, run, &staged)
}

/// Recovery checks on an already simulated panel.
pub fn recovery_report(cfg: &SynthConfig, run: &crate::pipeline::RunConfig, staged: &crate::pipeline::Staged) -> Result<RecoveryReport> {
    use crate::estimators::{did_dosage, did_heckman, did_ols, naive_difference, placebo, terms, PlaceboScheme};
    use crate::panel::Period;

    let run = run_config_for(cfg, run);
    let panel = &staged.panel.rows;
    let opts = run.did_options();

    let levels = [Dosage::Low, Dosage::Medium, Dosage::High];
    let pooled_truth = match cfg.dosage_effect_profile {
        None => cfg.treatment_effect_stay,
        Some(_) => {
            let weight = |d: Dosage| {
                panel
                    .iter()
                    .filter(|r| r.acquired && r.active && r.period == Period::After && r.dosage == d)
                    .count() as f64
            };
            let w: Vec<f64> = levels.iter().map(|&d| weight(d)).collect();
            let total: f64 = w.iter().sum();
            if total == 0.0 {
                return Err(Error::validation("no active treated after-period rows to weight the pooled effect"));
            }
            levels
                .iter()
                .zip(&w)
                .map(|(&d, wi)| wi * (cfg.stay_prob(true, true, d) - cfg.stay_prob(false, true, d)))
                .sum::<f64>()
                / total
        }
    };

    let mut rows = Vec::new();
    let ols = did_ols(panel, &opts)?;
    let heck = did_heckman(panel, &opts)?;
    let t = terms::ACQUIRED_X_AFTER;
    let get = |c: Option<f64>, s: Option<f64>| (c.unwrap_or(f64::NAN), s.unwrap_or(f64::NAN));
    let (b, s) = get(ols.coef_of(t), ols.se_of(t));
    rows.push(RecoveryRow::new("ols", t, b, s, pooled_truth));
    let (b, s) = get(heck.coef_of(t), heck.se_of(t));
    rows.push(RecoveryRow::new("heckman", t, b, s, pooled_truth));

    let naive = naive_difference(panel, &opts)?;
    let (b, s) = get(naive.heckman.coef_of(terms::AFTER), naive.heckman.se_of(terms::AFTER));
    rows.push(RecoveryRow::new("naive_heckman", terms::AFTER, b, s, cfg.secular_trend + pooled_truth));

    let mut dosage_order = None;
    if let Some((l, m, h)) = cfg.dosage_effect_profile {
        let d = did_dosage(panel, &opts)?;
        let mut est = [0.0; 3];
        for (i, (term, truth)) in [(terms::LOW_X_AFTER, l), (terms::MEDIUM_X_AFTER, m), (terms::HIGH_X_AFTER, h)]
            .into_iter()
            .enumerate()
        {
            let (b, s) = get(d.heckman.coef_of(term), d.heckman.se_of(term));
            est[i] = b;
            rows.push(RecoveryRow::new("heckman_dosage", term, b, s, truth));
        }
        dosage_order = Some(rank(est) == rank([l, m, h]));
    }

    let placebo_summary = if run.placebo_n >= 2 {
        let p = placebo(panel, PlaceboScheme::All, run.placebo_n, run.seed, &opts)?;
        let n = p.estimates.len() as f64;
        let var = p.estimates.iter().map(|e| (e - p.mean_estimate).powi(2)).sum::<f64>() / (n - 1.0);
        Some((p.mean_estimate, (var / n).sqrt()))
    } else {
        None
    };

    Ok(RecoveryReport {
        pairs: staged.panel.pairs(),
        rows,
        dosage_order,
        placebo: placebo_summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            n_treated_firms: 4,
            inventors_per_firm: (8, 10),
            ..SynthConfig::default()
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        generate(&small(), a.path()).unwrap();
        generate(&small(), b.path()).unwrap();
        for f in [PATENTS_FILE, DEALS_FILE, TRUTH_FILE] {
            assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
        }
        let other = SynthConfig { seed: 7, ..small() };
        let c = tempfile::tempdir().unwrap();
        generate(&other, c.path()).unwrap();
        assert_ne!(std::fs::read(a.path().join(PATENTS_FILE)).unwrap(), std::fs::read(c.path().join(PATENTS_FILE)).unwrap());
    }

    #[test]
    fn cell_means_follow_arithmetic() {
        let cfg = SynthConfig {
            base_stay_prob: 0.8,
            secular_trend: -0.1,
            treatment_effect_stay: -0.2,
            ..SynthConfig::default()
        };
        assert!((cfg.stay_prob(false, false, Dosage::Control) - 0.8).abs() < 1e-12);
        assert!((cfg.stay_prob(false, true, Dosage::Control) - 0.7).abs() < 1e-12);
        assert!((cfg.stay_prob(true, false, Dosage::Unscored) - 0.8).abs() < 1e-12);
        assert!((cfg.stay_prob(true, true, Dosage::Unscored) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn degenerate_cells_are_rejected() {
        let cfg = SynthConfig {
            base_stay_prob: 0.95,
            secular_trend: 0.1,
            ..SynthConfig::default()
        };
        assert!(matches!(simulate(&cfg), Err(Error::Config(m)) if m.contains("stay.after.control")));
        let cfg = SynthConfig {
            treatment_effect_active: 0.5,
            ..SynthConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(m)) if m.contains("active.after.treated")));
    }

    #[test]
    fn generated_corpus_passes_validation() {
        let dir = tempfile::tempdir().unwrap();
        let files = generate(&small(), dir.path()).unwrap();
        let span = crate::corpus::YearSpan::new(1900, 2100).unwrap();
        let (corpus, report) = crate::corpus::load_patents(&files.patents, span).unwrap();
        assert_eq!(report.rejected_out_of_span, 0);
        assert!(!corpus.is_empty());
        let deals = crate::corpus::load_deals(&files.deals).unwrap();
        assert_eq!(deals.iter().filter(|d| d.is_acquisition()).count(), 4);
        let truth = read_truth(&files.truth).unwrap();
        assert_eq!(truth["config.seed"], small().seed.to_string());
        assert!(truth.contains_key("cell.stay.after.treated"));
    }

    #[test]
    fn truth_recomputes_cells() {
        let cfg = SynthConfig {
            dosage_effect_profile: Some((-0.21, -0.15, -0.24)),
            ..SynthConfig::default()
        };
        let data = simulate(&SynthConfig { n_treated_firms: 1, ..cfg.clone() }).unwrap();
        let truth: BTreeMap<_, _> = data.truth.into_iter().collect();
        let mut back = SynthConfig::default();
        for (k, v) in truth.iter().filter_map(|(k, v)| k.strip_prefix("config.").map(|k| (k, v))) {
            back.set(k, v).unwrap();
        }
        back.n_treated_firms = cfg.n_treated_firms;
        assert_eq!(back, cfg);
        for (k, p) in back.cells() {
            let stored: f64 = truth[&format!("cell.{k}")].parse().unwrap();
            assert!((stored - p).abs() < 1e-9);
        }
    }

    #[test]
    fn null_effect_gives_no_raw_gap() {
        let cfg = SynthConfig {
            treatment_effect_stay: 0.0,
            n_treated_firms: 30,
            ..SynthConfig::default()
        };
        let data = simulate(&cfg).unwrap();
        let deal_year: BTreeMap<&str, i32> = data
            .deals
            .iter()
            .filter(|d| d.is_acquisition())
            .map(|d| (&d.acquired_id[1..], d.deal_year))
            .collect();
        // Arm from the first firm an inventor filed for; stay if any after-deal filing avoids the sinks.
        let mut arm: BTreeMap<&str, bool> = BTreeMap::new();
        let mut stay: BTreeMap<&str, bool> = BTreeMap::new();
        for p in &data.patents {
            let inv = p.inventors[0].inventor_id.as_str();
            match p.assignee_id.as_bytes()[0] {
                b'T' => {
                    arm.entry(inv).or_insert(true);
                }
                b'C' => {
                    arm.entry(inv).or_insert(false);
                }
                _ => {}
            }
            if p.application_year >= deal_year[&inv[1..5]] {
                *stay.entry(inv).or_insert(false) |= !p.assignee_id.starts_with('S');
            }
        }
        let mut counts: BTreeMap<bool, (f64, f64)> = BTreeMap::new();
        for (inv, s) in &stay {
            if let Some(&treated) = arm.get(inv) {
                let e = counts.entry(treated).or_default();
                e.0 += f64::from(u8::from(*s));
                e.1 += 1.0;
            }
        }
        let (st, nt) = counts[&true];
        let (sc, nc) = counts[&false];
        let (pt, pc) = (st / nt, sc / nc);
        assert!((pc - 0.66).abs() < 0.03);
        let se = (pt * (1.0 - pt) / nt + pc * (1.0 - pc) / nc).sqrt();
        assert!((pt - pc).abs() < 3.0 * se, "{pt} vs {pc} (se {se})");
    }

    #[test]
    fn destination_distance_round_trip() {
        let p = GeoPoint { latitude: 48.0, longitude: 11.0 };
        for d in [1.0, 50.0, 400.0] {
            let q = destination(p, d, 1.0);
            assert!((crate::geo::haversine(p, q) - d).abs() < 1e-6);
        }
    }
}
