//! Start-time sweep over a periodic daily demand profile.

use std::io::Write;

use rayon::prelude::*;
use thiserror::Error;

use crate::delay::{run_scenario, DelayError, DelayResult, WorkZoneScenario};

pub const MINUTES_PER_DAY: u32 = 24 * 60;

#[derive(Debug, Error, PartialEq)]
pub enum SweepError {
    #[error("no candidate start times")]
    NoCandidates,
    #[error("candidate {0} min is outside the day")]
    CandidateOutOfDay(u32),
    #[error("candidate {minute} min is not on the {step_min} min step grid")]
    OffGrid { minute: u32, step_min: f64 },
    #[error("work duration {0} h exceeds 24 h")]
    DurationTooLong(f64),
    #[error("demand profile has {got} steps, a day at this step length needs {want}")]
    ProfileLength { got: usize, want: usize },
    #[error("every candidate failed; first error: {0}")]
    AllFailed(String),
    #[error(transparent)]
    Scenario(#[from] DelayError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TieTolerance {
    /// Fraction of the minimum added delay.
    Relative(f64),
    /// Vehicle-hours.
    Absolute(f64),
}

impl Default for TieTolerance {
    fn default() -> Self {
        TieTolerance::Relative(0.01)
    }
}

impl TieTolerance {
    fn resolve(self, min: f64) -> f64 {
        match self {
            TieTolerance::Relative(r) => r * min.abs(),
            TieTolerance::Absolute(a) => a,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    /// Candidate start times, minutes after midnight.
    pub candidates: Vec<u32>,
    pub duration_h: f64,
    /// One day of arrivals at the scenario step length, treated as periodic.
    pub demand: Vec<f64>,
    pub tie: TieTolerance,
    /// Longest horizon tried while waiting for a queue to clear, days.
    pub max_horizon_days: usize,
}

impl SweepSpec {
    pub fn new(demand: Vec<f64>, duration_h: f64, grid_min: u32) -> Self {
        SweepSpec {
            candidates: uniform_grid(grid_min),
            duration_h,
            demand,
            tie: TieTolerance::default(),
            max_horizon_days: 3,
        }
    }
}

/// Start times every `grid_min` minutes from midnight.
pub fn uniform_grid(grid_min: u32) -> Vec<u32> {
    (0..MINUTES_PER_DAY)
        .step_by(grid_min.max(1) as usize)
        .collect()
}

pub fn format_hhmm(minute: u32) -> String {
    format!("{:02}:{:02}", minute / 60, minute % 60)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub start_min: u32,
    /// Added delay in vehicle-hours, or why the run failed.
    pub added: Result<f64, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub curve: Vec<CurvePoint>,
    /// Every candidate attaining the minimum exactly.
    pub best: Vec<u32>,
    pub min_added: f64,
    /// Indices into `curve` forming the contiguous (wrapping) run of
    /// candidates within tolerance of the minimum around the first argmin.
    pub window: Vec<usize>,
}

impl SweepResult {
    pub fn is_optimal(&self, idx: usize) -> bool {
        self.window.contains(&idx)
    }

    /// First and last start time of the optimal window.
    pub fn window_bounds(&self) -> (u32, u32) {
        let first = self.window[0];
        let last = *self.window.last().expect("window is never empty");
        (self.curve[first].start_min, self.curve[last].start_min)
    }
}

fn steps_per_day(step_h: f64) -> Result<usize, SweepError> {
    let n = 24.0 / step_h;
    let r = n.round();
    if (n - r).abs() > 1e-6 || r < 1.0 {
        return Err(DelayError::InvalidScenario(format!(
            "step length {step_h} h does not divide the day"
        ))
        .into());
    }
    Ok(r as usize)
}

fn start_step(minute: u32, step_h: f64) -> Result<usize, SweepError> {
    let pos = f64::from(minute) / 60.0 / step_h;
    let r = pos.round();
    if (pos - r).abs() > 1e-6 {
        return Err(SweepError::OffGrid {
            minute,
            step_min: step_h * 60.0,
        });
    }
    Ok(r as usize)
}

/// Runs one candidate: the horizon starts at the work-zone start and grows a
/// day at a time until the queue clears or `max_days` is reached.
pub fn evaluate_start(
    template: &WorkZoneScenario,
    profile: &[f64],
    duration_h: f64,
    start_min: u32,
    max_days: usize,
) -> Result<DelayResult, SweepError> {
    let per_day = steps_per_day(template.step_h)?;
    if profile.len() != per_day {
        return Err(SweepError::ProfileLength {
            got: profile.len(),
            want: per_day,
        });
    }
    if start_min >= MINUTES_PER_DAY {
        return Err(SweepError::CandidateOutOfDay(start_min));
    }
    let start = start_step(start_min, template.step_h)?;
    let mut last_err = None;
    for days in 1..=max_days.max(1) {
        let horizon = days * per_day;
        let scenario = WorkZoneScenario {
            duration_h,
            demand: (0..horizon)
                .map(|i| profile[(start + i) % per_day])
                .collect(),
            ..template.clone()
        };
        let flags = scenario.flags_from(0)?;
        match run_scenario(&scenario, &flags) {
            Ok(r) => return Ok(r),
            Err(e @ DelayError::ResidualQueue { .. }) => last_err = Some(e),
            Err(e) => return Err(e.into()),
        }
    }
    Err(last_err.expect("at least one horizon was tried").into())
}

/// Evaluates every candidate (in parallel) and locates the minimum.
pub fn sweep(spec: &SweepSpec, template: &WorkZoneScenario) -> Result<SweepResult, SweepError> {
    if spec.candidates.is_empty() {
        return Err(SweepError::NoCandidates);
    }
    if spec.duration_h > 24.0 {
        return Err(SweepError::DurationTooLong(spec.duration_h));
    }
    let per_day = steps_per_day(template.step_h)?;
    if spec.demand.len() != per_day {
        return Err(SweepError::ProfileLength {
            got: spec.demand.len(),
            want: per_day,
        });
    }
    let mut candidates = spec.candidates.clone();
    candidates.sort_unstable();
    candidates.dedup();
    for &m in &candidates {
        if m >= MINUTES_PER_DAY {
            return Err(SweepError::CandidateOutOfDay(m));
        }
        start_step(m, template.step_h)?;
    }

    let curve: Vec<CurvePoint> = candidates
        .par_iter()
        .map(|&m| CurvePoint {
            start_min: m,
            added: evaluate_start(
                template,
                &spec.demand,
                spec.duration_h,
                m,
                spec.max_horizon_days,
            )
            .map(|r| r.added)
            .map_err(|e| e.to_string()),
        })
        .collect();

    let min_added = curve
        .iter()
        .filter_map(|c| c.added.as_ref().ok().copied())
        .fold(f64::INFINITY, f64::min);
    if !min_added.is_finite() {
        let first = curve
            .iter()
            .find_map(|c| c.added.as_ref().err().cloned())
            .unwrap_or_default();
        return Err(SweepError::AllFailed(first));
    }
    let best: Vec<u32> = curve
        .iter()
        .filter(|c| c.added.as_ref().is_ok_and(|v| *v == min_added))
        .map(|c| c.start_min)
        .collect();

    let limit = min_added + spec.tie.resolve(min_added);
    let within = |i: usize| curve[i].added.as_ref().is_ok_and(|v| *v <= limit);
    let n = curve.len();
    let anchor = curve
        .iter()
        .position(|c| c.start_min == best[0])
        .expect("best comes from the curve");
    let window = if (0..n).all(within) {
        (0..n).collect()
    } else {
        let mut lo = anchor;
        while within((lo + n - 1) % n) {
            lo = (lo + n - 1) % n;
        }
        let mut idx = vec![lo];
        let mut i = lo;
        while within((i + 1) % n) && (i + 1) % n != lo {
            i = (i + 1) % n;
            idx.push(i);
        }
        idx
    };

    Ok(SweepResult {
        curve,
        best,
        min_added,
        window,
    })
}

/// Writes `start_hhmm,added_delay_veh_h,is_optimal,note`; failed candidates
/// leave the delay empty and carry the error in `note`.
pub fn emit_curve<W: Write>(writer: W, result: &SweepResult) -> std::io::Result<usize> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["start_hhmm", "added_delay_veh_h", "is_optimal", "note"])?;
    for (i, c) in result.curve.iter().enumerate() {
        let (delay, note) = match &c.added {
            Ok(v) => (v.to_string(), String::new()),
            Err(e) => (String::new(), e.clone()),
        };
        wtr.write_record([
            format_hhmm(c.start_min),
            delay,
            result.is_optimal(i).to_string(),
            note,
        ])?;
    }
    wtr.flush()?;
    Ok(result.curve.len())
}
