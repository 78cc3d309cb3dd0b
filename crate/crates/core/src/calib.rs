//! Status-to-speed calibration.
//!
//! Field speed samples tagged with the status shown on the map are fitted
//! with one normal distribution per status. Adjacent fits cross at the
//! status boundaries, and each fit's mean becomes the representative speed
//! used to quantify that status.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::status::TrafficStatus;

#[derive(Debug, Error)]
pub enum CalibError {
    #[error("status {status} has {n} samples, need at least 2")]
    TooFewSamples { status: TrafficStatus, n: usize },
    #[error("status {0} has zero speed variance")]
    ZeroVariance(TrafficStatus),
    #[error("calibration sample has invalid speed {0}")]
    InvalidSpeed(f64),
    #[error("calibration samples may not carry status `unknown`")]
    UnknownInSamples,
    #[error("no calibration samples")]
    Empty,
    #[error("boundary needs mean1 < mean2, got {0} and {1}")]
    UnorderedPair(f64, f64),
    #[error("densities of N({m1}, {s1}) and N({m2}, {s2}) do not cross between the means")]
    NoIntersection { m1: f64, s1: f64, m2: f64, s2: f64 },
    #[error("table needs exactly the four statuses once each")]
    IncompleteTable,
    #[error("means must increase severe < congested < slow < smooth")]
    MeansOutOfOrder,
    #[error("v_max {v_max} must exceed the smooth mean {mean}")]
    VMaxTooLow { v_max: f64, mean: f64 },
    #[error("{status} representative {rep} outside its range [{lo}, {hi}]")]
    RepresentativeOutsideRange {
        status: TrafficStatus,
        rep: f64,
        lo: f64,
        hi: f64,
    },
    #[error("table ranges must be contiguous from 0, got a gap at {0}")]
    NonContiguous(f64),
    #[error("cannot quantify status `unknown`")]
    UnknownStatus,
    #[error("bad status in file: {0}")]
    BadStatus(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// One field speed sample paired with the status shown at the same time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationSample {
    pub speed_kmh: f64,
    pub status: TrafficStatus,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StatusGaussian {
    pub status: TrafficStatus,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl StatusGaussian {
    pub fn density(&self, x: f64) -> f64 {
        let z = (x - self.mean) / self.std;
        (-0.5 * z * z).exp() / (self.std * (2.0 * std::f64::consts::PI).sqrt())
    }
}

/// Per-status sample mean and sample standard deviation (n - 1 denominator),
/// in fastest-first status order.
pub fn fit_status_gaussians(
    samples: &[CalibrationSample],
) -> Result<Vec<StatusGaussian>, CalibError> {
    if samples.is_empty() {
        return Err(CalibError::Empty);
    }
    let mut groups: BTreeMap<TrafficStatus, Vec<f64>> = BTreeMap::new();
    for s in samples {
        if !s.speed_kmh.is_finite() || s.speed_kmh < 0.0 {
            return Err(CalibError::InvalidSpeed(s.speed_kmh));
        }
        if !s.status.is_known() {
            return Err(CalibError::UnknownInSamples);
        }
        groups.entry(s.status).or_default().push(s.speed_kmh);
    }
    groups
        .into_iter()
        .map(|(status, speeds)| {
            let n = speeds.len();
            if n < 2 {
                return Err(CalibError::TooFewSamples { status, n });
            }
            let mean = speeds.iter().sum::<f64>() / n as f64;
            let ss: f64 = speeds.iter().map(|v| (v - mean).powi(2)).sum();
            let std = (ss / (n - 1) as f64).sqrt();
            if !(std > 1e-12 * mean.abs().max(1.0)) {
                return Err(CalibError::ZeroVariance(status));
            }
            Ok(StatusGaussian {
                status,
                mean,
                std,
                n,
            })
        })
        .collect()
}

/// Speed where the densities of two adjacent fits are equal, taken between
/// the two means.
pub fn gaussian_boundary(g1: &StatusGaussian, g2: &StatusGaussian) -> Result<f64, CalibError> {
    let (m1, s1, m2, s2) = (g1.mean, g1.std, g2.mean, g2.std);
    if !(m1 < m2) {
        return Err(CalibError::UnorderedPair(m1, m2));
    }
    let no_cross = || CalibError::NoIntersection { m1, s1, m2, s2 };
    if (s1 - s2).abs() <= 1e-12 * s1.max(s2) {
        return Ok(0.5 * (m1 + m2));
    }

    // s2²(x-m1)² - s1²(x-m2)² + 2 s1² s2² ln(s1/s2) = 0
    let (v1, v2) = (s1 * s1, s2 * s2);
    let a = v2 - v1;
    let b = -2.0 * (m1 * v2 - m2 * v1);
    let c = m1 * m1 * v2 - m2 * m2 * v1 - 2.0 * v1 * v2 * (s2 / s1).ln();
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return Err(no_cross());
    }
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    let mut roots = vec![q / a];
    if q != 0.0 {
        roots.push(c / q);
    }
    let inside: Vec<f64> = roots.into_iter().filter(|r| *r > m1 && *r < m2).collect();
    match inside.as_slice() {
        [r] => Ok(*r),
        [r1, r2] => {
            // Keep the crossing where the slower fit hands over to the faster one.
            let hand_over = |x: f64| g1.density(x - 1e-9) >= g2.density(x - 1e-9);
            Ok(if hand_over(*r1) { *r1 } else { *r2 })
        }
        _ => Err(no_cross()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TableEntry {
    pub status: TrafficStatus,
    pub lo_kmh: f64,
    pub hi_kmh: f64,
    pub rep_kmh: f64,
}

/// Speed range and representative speed for each of the four statuses.
///
/// Entries are kept slowest first; ranges are `[lo, hi)` except the
/// smooth range, which is closed at `v_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizationTable {
    entries: [TableEntry; 4],
}

const SLOWEST_FIRST: [TrafficStatus; 4] = [
    TrafficStatus::Severe,
    TrafficStatus::Congested,
    TrafficStatus::Slow,
    TrafficStatus::Smooth,
];

impl QuantizationTable {
    /// Validates ordering, contiguity from 0 and representative placement.
    pub fn new(mut entries: Vec<TableEntry>) -> Result<Self, CalibError> {
        if entries.len() != 4 {
            return Err(CalibError::IncompleteTable);
        }
        entries.sort_by_key(|e| SLOWEST_FIRST.iter().position(|s| *s == e.status));
        for (e, want) in entries.iter().zip(SLOWEST_FIRST) {
            if e.status != want {
                return Err(CalibError::IncompleteTable);
            }
        }
        let mut edge = 0.0;
        for (i, e) in entries.iter().enumerate() {
            if (e.lo_kmh - edge).abs() > 1e-9 || !(e.hi_kmh > e.lo_kmh) {
                return Err(CalibError::NonContiguous(edge));
            }
            let inside = if i == 3 {
                e.rep_kmh >= e.lo_kmh && e.rep_kmh <= e.hi_kmh
            } else {
                e.rep_kmh >= e.lo_kmh && e.rep_kmh < e.hi_kmh
            };
            if !inside {
                return Err(CalibError::RepresentativeOutsideRange {
                    status: e.status,
                    rep: e.rep_kmh,
                    lo: e.lo_kmh,
                    hi: e.hi_kmh,
                });
            }
            edge = e.hi_kmh;
        }
        Ok(QuantizationTable {
            entries: [entries[0], entries[1], entries[2], entries[3]],
        })
    }

    pub fn entries(&self) -> &[TableEntry; 4] {
        &self.entries
    }

    pub fn entry(&self, status: TrafficStatus) -> Option<&TableEntry> {
        self.entries.iter().find(|e| e.status == status)
    }

    /// The three inner boundaries, slowest first.
    pub fn boundaries(&self) -> [f64; 3] {
        [
            self.entries[0].hi_kmh,
            self.entries[1].hi_kmh,
            self.entries[2].hi_kmh,
        ]
    }

    pub fn v_max(&self) -> f64 {
        self.entries[3].hi_kmh
    }

    /// Status whose range holds `speed_kmh`, if any.
    pub fn status_for_speed(&self, speed_kmh: f64) -> Option<TrafficStatus> {
        let last = self.entries.len() - 1;
        self.entries
            .iter()
            .enumerate()
            .find(|(i, e)| {
                speed_kmh >= e.lo_kmh
                    && (speed_kmh < e.hi_kmh || (*i == last && speed_kmh <= e.hi_kmh))
            })
            .map(|(_, e)| e.status)
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self, CalibError> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let entries = rdr.deserialize().collect::<Result<Vec<TableEntry>, _>>()?;
        Self::new(entries)
    }

    /// Writes `status,lo_kmh,hi_kmh,rep_kmh` at full precision, fastest first.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), CalibError> {
        let mut wtr = csv::Writer::from_writer(writer);
        for e in self.entries.iter().rev() {
            wtr.serialize(e)?;
        }
        wtr.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Cap for the smooth range: design speed + 10 km/h, or the fastest
/// observed speed when that is higher.
pub fn default_v_max(design_speed_kmh: f64, samples: &[CalibrationSample]) -> f64 {
    let fastest = samples
        .iter()
        .map(|s| s.speed_kmh)
        .fold(f64::NEG_INFINITY, f64::max);
    (design_speed_kmh + 10.0).max(fastest)
}

/// Builds the table from four fits: boundaries at adjacent crossings,
/// representatives at the means.
pub fn build_table(
    gaussians: &[StatusGaussian],
    v_max: f64,
) -> Result<QuantizationTable, CalibError> {
    let mut ordered = Vec::with_capacity(4);
    for status in SLOWEST_FIRST {
        let mut it = gaussians.iter().filter(|g| g.status == status);
        match (it.next(), it.next()) {
            (Some(g), None) => ordered.push(*g),
            _ => return Err(CalibError::IncompleteTable),
        }
    }
    if gaussians.len() != 4 {
        return Err(CalibError::IncompleteTable);
    }
    if !ordered.windows(2).all(|w| w[0].mean < w[1].mean) {
        return Err(CalibError::MeansOutOfOrder);
    }
    let smooth_mean = ordered[3].mean;
    if !(v_max > smooth_mean) {
        return Err(CalibError::VMaxTooLow {
            v_max,
            mean: smooth_mean,
        });
    }
    let mut edges = vec![0.0];
    for w in ordered.windows(2) {
        edges.push(gaussian_boundary(&w[0], &w[1])?);
    }
    edges.push(v_max);
    let entries = ordered
        .iter()
        .enumerate()
        .map(|(i, g)| TableEntry {
            status: g.status,
            lo_kmh: edges[i],
            hi_kmh: edges[i + 1],
            rep_kmh: g.mean,
        })
        .collect();
    QuantizationTable::new(entries)
}

/// Representative speed of `status`.
pub fn quantify(status: TrafficStatus, table: &QuantizationTable) -> Result<f64, CalibError> {
    table
        .entry(status)
        .map(|e| e.rep_kmh)
        .ok_or(CalibError::UnknownStatus)
}

#[derive(Debug, Deserialize)]
struct SampleRow {
    speed_kmh: f64,
    status: String,
}

/// Reads calibration samples from CSV `speed_kmh,status`.
pub fn read_samples_csv<R: Read>(reader: R) -> Result<Vec<CalibrationSample>, CalibError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    rdr.deserialize()
        .map(|row| {
            let row: SampleRow = row?;
            let status = row.status.parse().map_err(CalibError::BadStatus)?;
            Ok(CalibrationSample {
                speed_kmh: row.speed_kmh,
                status,
            })
        })
        .collect()
}
