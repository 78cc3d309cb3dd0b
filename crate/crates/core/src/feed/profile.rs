//! Averaging collected observations into a typical day.

use std::collections::{BTreeMap, BTreeSet};

use crate::calib::{quantify, QuantizationTable};

use super::store::Observation;
use super::FeedError;

pub const SECONDS_PER_DAY: i64 = 86_400;

/// Mean speed per time-of-day bin; `None` marks a bin with no data.
#[derive(Debug, Clone, PartialEq)]
pub struct DailyProfile {
    pub bin_s: u32,
    pub speeds: Vec<Option<f64>>,
    /// Number of distinct days that contributed at least one observation.
    pub days: usize,
}

impl DailyProfile {
    pub fn missing(&self) -> Vec<usize> {
        self.speeds
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.is_none().then_some(i))
            .collect()
    }

    /// Fills missing bins by linear interpolation between the nearest
    /// known neighbours, wrapping around midnight.
    pub fn filled(&self) -> Result<Vec<f64>, FeedError> {
        fill_missing(&self.speeds)
    }
}

/// Cyclic linear interpolation over `None` entries.
pub fn fill_missing(values: &[Option<f64>]) -> Result<Vec<f64>, FeedError> {
    let n = values.len();
    let known: Vec<usize> = (0..n).filter(|&i| values[i].is_some()).collect();
    if known.is_empty() {
        return Err(FeedError::AllBinsMissing);
    }
    let mut out = vec![0.0; n];
    for (k, &i) in known.iter().enumerate() {
        let j = known[(k + 1) % known.len()];
        let (a, b) = (values[i].unwrap(), values[j].unwrap());
        let gap = if j > i { j - i } else { j + n - i };
        for step in 0..gap {
            let w = step as f64 / gap as f64;
            out[(i + step) % n] = a + (b - a) * w;
        }
    }
    Ok(out)
}

/// Builds the typical-day speed profile.
///
/// Each observation is mapped to its status's representative speed; the
/// speeds are averaged per (day, bin), then the day means are averaged per
/// bin. `Unknown` observations are skipped. Local time is UTC shifted by
/// `utc_offset_s`. The result does not depend on input order.
pub fn aggregate_daily_profile(
    obs: &[Observation],
    bin_s: u32,
    table: &QuantizationTable,
    utc_offset_s: i32,
) -> Result<DailyProfile, FeedError> {
    if bin_s == 0 || SECONDS_PER_DAY % i64::from(bin_s) != 0 {
        return Err(FeedError::BadBin(bin_s));
    }
    let bins = (SECONDS_PER_DAY / i64::from(bin_s)) as usize;
    let mut cells: BTreeMap<(usize, i64), Vec<f64>> = BTreeMap::new();
    let mut days = BTreeSet::new();
    for o in obs.iter().filter(|o| o.status.is_known()) {
        let local = o.timestamp + i64::from(utc_offset_s);
        let day = local.div_euclid(SECONDS_PER_DAY);
        let bin = (local.rem_euclid(SECONDS_PER_DAY) / i64::from(bin_s)) as usize;
        cells
            .entry((bin, day))
            .or_default()
            .push(quantify(o.status, table)?);
        days.insert(day);
    }
    let mut per_bin: Vec<Vec<f64>> = vec![Vec::new(); bins];
    for ((bin, _), mut v) in cells {
        v.sort_by(f64::total_cmp);
        per_bin[bin].push(v.iter().sum::<f64>() / v.len() as f64);
    }
    let speeds: Vec<Option<f64>> = per_bin
        .into_iter()
        .map(|mut v| {
            (!v.is_empty()).then(|| {
                v.sort_by(f64::total_cmp);
                v.iter().sum::<f64>() / v.len() as f64
            })
        })
        .collect();
    if speeds.iter().all(Option::is_none) {
        return Err(FeedError::AllBinsMissing);
    }
    Ok(DailyProfile {
        bin_s,
        speeds,
        days: days.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calib::TableEntry;
    use crate::status::TrafficStatus;

    fn table() -> QuantizationTable {
        use TrafficStatus::*;
        QuantizationTable::new(vec![
            TableEntry {
                status: Smooth,
                lo_kmh: 52.0,
                hi_kmh: 80.0,
                rep_kmh: 62.0,
            },
            TableEntry {
                status: Slow,
                lo_kmh: 30.0,
                hi_kmh: 52.0,
                rep_kmh: 44.0,
            },
            TableEntry {
                status: Congested,
                lo_kmh: 11.0,
                hi_kmh: 30.0,
                rep_kmh: 18.0,
            },
            TableEntry {
                status: Severe,
                lo_kmh: 0.0,
                hi_kmh: 11.0,
                rep_kmh: 7.0,
            },
        ])
        .unwrap()
    }

    fn o(ts: i64, status: TrafficStatus) -> Observation {
        Observation {
            point_id: "p".into(),
            timestamp: ts,
            status,
            rgb: status.is_known().then_some([1, 2, 3]),
            note: String::new(),
        }
    }

    #[test]
    fn identical_days_give_flat_profile() {
        let obs: Vec<_> = (0..7 * 24)
            .map(|h| o(h * 3600, TrafficStatus::Smooth))
            .collect();
        let p = aggregate_daily_profile(&obs, 3600, &table(), 0).unwrap();
        assert_eq!(p.days, 7);
        assert!(p.speeds.iter().all(|s| *s == Some(62.0)));
    }

    #[test]
    fn alternating_days_average() {
        let obs: Vec<_> = (0..4)
            .map(|d| {
                let s = if d % 2 == 0 {
                    TrafficStatus::Smooth
                } else {
                    TrafficStatus::Congested
                };
                o(d * SECONDS_PER_DAY + 600, s)
            })
            .collect();
        let p = aggregate_daily_profile(&obs, 3600, &table(), 0).unwrap();
        assert_eq!(p.speeds[0], Some(40.0));
        assert_eq!(p.missing().len(), 23);
    }

    #[test]
    fn day_means_weight_days_equally() {
        // Day 0 has three smooth samples, day 1 a single severe one.
        let obs = vec![
            o(60, TrafficStatus::Smooth),
            o(120, TrafficStatus::Smooth),
            o(180, TrafficStatus::Smooth),
            o(SECONDS_PER_DAY + 60, TrafficStatus::Severe),
            o(SECONDS_PER_DAY + 90, TrafficStatus::Unknown),
        ];
        let p = aggregate_daily_profile(&obs, 900, &table(), 0).unwrap();
        assert_eq!(p.speeds[0], Some((62.0 + 7.0) / 2.0));
    }

    #[test]
    fn utc_offset_shifts_bins() {
        let obs = vec![o(0, TrafficStatus::Slow)];
        let p = aggregate_daily_profile(&obs, 3600, &table(), 8 * 3600).unwrap();
        assert_eq!(p.speeds[8], Some(44.0));
        let p = aggregate_daily_profile(&obs, 3600, &table(), -3600).unwrap();
        assert_eq!(p.speeds[23], Some(44.0));
    }

    #[test]
    fn errors() {
        let obs = vec![o(0, TrafficStatus::Unknown)];
        assert!(matches!(
            aggregate_daily_profile(&obs, 3600, &table(), 0),
            Err(FeedError::AllBinsMissing)
        ));
        assert!(matches!(
            aggregate_daily_profile(&obs, 7, &table(), 0),
            Err(FeedError::BadBin(7))
        ));
    }

    #[test]
    fn fill_wraps_midnight() {
        let v = [None, Some(10.0), None, Some(30.0)];
        assert_eq!(fill_missing(&v).unwrap(), vec![20.0, 10.0, 20.0, 30.0]);
        assert_eq!(fill_missing(&[None, Some(5.0)]).unwrap(), vec![5.0, 5.0]);
        assert!(fill_missing(&[None, None]).is_err());
    }
}
