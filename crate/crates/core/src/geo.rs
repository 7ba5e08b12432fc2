//! Relocation diagnostics: representative filing locations per phase,
//! great-circle relocation distance and cluster dispersion.

use std::collections::BTreeMap;
use std::fmt;

use log::warn;

use crate::cohort::{Phase, StudyWindow};
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::panel::{PanelObservation, Period};

/// IUGG mean Earth radius.
pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// Relocations at or below this distance count as "staying put".
pub const NEARBY_KM: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoPoint {
    pub latitude: f64,
    pub longitude: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("coordinate ({0}, {1}) outside latitude [-90, 90] / longitude (-180, 180]")]
pub struct CoordinateError(pub f64, pub f64);

impl GeoPoint {
    pub fn new(latitude: f64, longitude: f64) -> std::result::Result<Self, CoordinateError> {
        if !(-90.0..=90.0).contains(&latitude) || !(longitude > -180.0 && longitude <= 180.0) {
            return Err(CoordinateError(latitude, longitude));
        }
        Ok(GeoPoint { latitude, longitude })
    }
}

impl fmt::Display for GeoPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:.5}, {:.5})", self.latitude, self.longitude)
    }
}

/// Great-circle distance in kilometres.
pub fn haversine(p: GeoPoint, q: GeoPoint) -> f64 {
    let (phi1, phi2) = (p.latitude.to_radians(), q.latitude.to_radians());
    let dphi = phi2 - phi1;
    let dlambda = (q.longitude - p.longitude).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

/// Planar mean of latitudes and longitudes.
///
/// Inaccurate for clusters straddling the antimeridian; such inputs are
/// flagged with a warning.
pub fn barycenter(points: &[GeoPoint]) -> Result<GeoPoint> {
    if points.is_empty() {
        return Err(Error::validation("barycenter of an empty point set"));
    }
    let n = points.len() as f64;
    let (lo, hi) = points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.longitude), hi.max(p.longitude)));
    if hi - lo > 180.0 {
        warn!("point set spans {:.1} degrees of longitude; planar barycenter is unreliable", hi - lo);
    }
    Ok(GeoPoint {
        latitude: points.iter().map(|p| p.latitude).sum::<f64>() / n,
        longitude: points.iter().map(|p| p.longitude).sum::<f64>() / n,
    })
}

/// A located filing: the point plus the keys used to break distance ties.
#[derive(Debug, Clone, PartialEq)]
pub struct LocatedFiling {
    pub point: GeoPoint,
    pub year: i32,
    pub patent_id: String,
}

/// The observed filing closest to the barycenter; ties go to the earliest
/// year, then the smallest patent id.
pub fn representative_location(filings: &[LocatedFiling]) -> Result<&LocatedFiling> {
    let points: Vec<GeoPoint> = filings.iter().map(|f| f.point).collect();
    let center = barycenter(&points)?;
    let best = filings
        .iter()
        .map(|f| (haversine(f.point, center), f))
        .min_by(|(da, a), (db, b)| {
            da.total_cmp(db)
                .then(a.year.cmp(&b.year))
                .then_with(|| a.patent_id.cmp(&b.patent_id))
        })
        .map(|(_, f)| f)
        .expect("non-empty");
    Ok(best)
}

/// Root-mean-square haversine distance of the points to their barycenter.
pub fn standard_distance(points: &[GeoPoint]) -> Result<f64> {
    let center = barycenter(points)?;
    let ms = points.iter().map(|&p| haversine(p, center).powi(2)).sum::<f64>() / points.len() as f64;
    Ok(ms.sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelocationRecord {
    pub inventor_id: String,
    pub acquired: bool,
    pub stay: bool,
    pub before_location: GeoPoint,
    pub after_location: GeoPoint,
    pub distance_km: f64,
    pub before_dispersion_km: f64,
    pub after_dispersion_km: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupSummary {
    pub acquired: bool,
    pub stay: bool,
    pub count: usize,
    pub mean_km: f64,
    pub std_km: f64,
    pub share_within_10km: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Coverage {
    pub filings_seen: usize,
    pub filings_without_location: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelocationTable {
    pub records: Vec<RelocationRecord>,
    pub groups: Vec<GroupSummary>,
    pub coverage: Coverage,
    /// Upper edges (km) of the histogram bins; the last bin is open-ended.
    pub bin_edges_km: Vec<f64>,
    /// Counts per group `(acquired, stay)` and bin.
    pub histogram: BTreeMap<(bool, bool), Vec<usize>>,
}

fn located_in(
    corpus: &Corpus,
    inventor_id: &str,
    window: &StudyWindow,
    phase: Phase,
    coverage: &mut Coverage,
) -> Vec<LocatedFiling> {
    let mut out = Vec::new();
    for p in corpus.inventor_patents(inventor_id) {
        if window.classify(p.application_year) != phase {
            continue;
        }
        coverage.filings_seen += 1;
        match p.location_of(inventor_id) {
            Some(point) => out.push(LocatedFiling {
                point,
                year: p.application_year,
                patent_id: p.patent_id.clone(),
            }),
            None => coverage.filings_without_location += 1,
        }
    }
    out
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Relocation record for every panel inventor with at least one located
/// filing in both phases, plus summaries by (acquired, stay-after) group.
///
/// `window_lengths` gives `(r, b, a)`; each inventor's window is centred on
/// the deal year carried by their panel rows.
pub fn relocation_table(panel: &[PanelObservation], corpus: &Corpus, window_lengths: (i32, i32, i32)) -> Result<RelocationTable> {
    let (r, b, a) = window_lengths;
    let mut coverage = Coverage::default();
    let mut records = Vec::new();
    let mut after_rows: Vec<&PanelObservation> = panel
        .iter()
        .filter(|o| o.period == Period::After && o.active)
        .collect();
    after_rows.sort_by(|x, y| x.inventor_id.cmp(&y.inventor_id));
    after_rows.dedup_by(|x, y| x.inventor_id == y.inventor_id);
    for obs in after_rows {
        let window = StudyWindow::new(obs.deal_year, r, b, a)?;
        let before = located_in(corpus, &obs.inventor_id, &window, Phase::Before, &mut coverage);
        let after = located_in(corpus, &obs.inventor_id, &window, Phase::After, &mut coverage);
        if before.is_empty() || after.is_empty() {
            continue;
        }
        let before_pts: Vec<GeoPoint> = before.iter().map(|f| f.point).collect();
        let after_pts: Vec<GeoPoint> = after.iter().map(|f| f.point).collect();
        let bl = representative_location(&before)?.point;
        let al = representative_location(&after)?.point;
        records.push(RelocationRecord {
            inventor_id: obs.inventor_id.clone(),
            acquired: obs.acquired,
            stay: obs.stay == Some(true),
            before_location: bl,
            after_location: al,
            distance_km: haversine(bl, al),
            before_dispersion_km: standard_distance(&before_pts)?,
            after_dispersion_km: standard_distance(&after_pts)?,
        });
    }

    let bin_edges_km = vec![1.0, 10.0, 50.0, 100.0, 250.0, 500.0, 1000.0, 2500.0, f64::INFINITY];
    let mut groups = Vec::new();
    let mut histogram = BTreeMap::new();
    for acquired in [false, true] {
        for stay in [false, true] {
            let d: Vec<f64> = records
                .iter()
                .filter(|rec| rec.acquired == acquired && rec.stay == stay)
                .map(|rec| rec.distance_km)
                .collect();
            let (mean_km, std_km) = mean_std(&d);
            let near = d.iter().filter(|&&x| x <= NEARBY_KM).count();
            let mut bins = vec![0usize; bin_edges_km.len()];
            for x in &d {
                let i = bin_edges_km.iter().position(|&e| *x <= e).unwrap_or(bin_edges_km.len() - 1);
                bins[i] += 1;
            }
            histogram.insert((acquired, stay), bins);
            groups.push(GroupSummary {
                acquired,
                stay,
                count: d.len(),
                mean_km,
                std_km,
                share_within_10km: if d.is_empty() { f64::NAN } else { near as f64 / d.len() as f64 },
            });
        }
    }
    Ok(RelocationTable {
        records,
        groups,
        coverage,
        bin_edges_km,
        histogram,
    })
}
