//! Deterministic queuing delay at a work zone, one time step at a time.
//!
//! Each step of length `t_d` carries a uniform arrival rate `Q_i`. Vehicles
//! lose time decelerating into the zone (`d1`), crawling through it (`d2`)
//! and accelerating out (`d3`); random arrivals below capacity add `d4`.
//! Whenever arrivals outrun capacity, or a queue is already standing, the
//! deterministic queue area `D4` is accumulated instead of being modelled
//! per vehicle.
//!
//! Speeds, accelerations and lengths are converted to SI before the
//! kinematic terms are evaluated; everything is reported in hours.

use std::io::{Read, Write};

use serde::Serialize;
use thiserror::Error;

/// Fraction of capacity at which the stochastic term is frozen.
pub const D4_CAP_RATIO: f64 = 0.98;

#[derive(Debug, Error, PartialEq)]
pub enum DelayError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("work-zone speed must be positive")]
    ZeroWorkZoneSpeed,
    #[error("arrival rate {q} >= capacity {c}: the stochastic term only applies below capacity")]
    OverCapacity { q: f64, c: f64 },
    #[error("work-zone flags: {0}")]
    Flags(String),
    #[error("{run} run ends with {vehicles:.3} vehicles still queued; extend the horizon")]
    ResidualQueue { run: &'static str, vehicles: f64 },
    #[error("demand file: {0}")]
    DemandFile(String),
}

/// Per-vehicle deceleration, traverse and acceleration delays, hours.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct ComponentDelays {
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
}

impl ComponentDelays {
    pub fn sum(&self) -> f64 {
        self.d1 + self.d2 + self.d3
    }
}

/// Speeds in km/h, accelerations in m/s², length in km.
pub fn component_delays(
    v1_kmh: f64,
    v2_kmh: f64,
    a1_mps2: f64,
    a2_mps2: f64,
    length_km: f64,
) -> Result<ComponentDelays, DelayError> {
    if !(v2_kmh > 0.0) {
        return Err(DelayError::ZeroWorkZoneSpeed);
    }
    if !(v2_kmh <= v1_kmh) {
        return Err(DelayError::InvalidScenario(format!(
            "work-zone speed {v2_kmh} exceeds normal speed {v1_kmh}"
        )));
    }
    if !(a1_mps2 > 0.0 && a2_mps2 > 0.0) {
        return Err(DelayError::InvalidScenario(
            "accelerations must be positive".into(),
        ));
    }
    if !(length_km > 0.0) {
        return Err(DelayError::InvalidScenario(
            "work-zone length must be positive".into(),
        ));
    }
    let v1 = v1_kmh / 3.6;
    let v2 = v2_kmh / 3.6;
    let dv2 = (v1 - v2).powi(2);
    let l = length_km * 1000.0;
    Ok(ComponentDelays {
        d1: dv2 / (2.0 * a1_mps2 * v1) / 3600.0,
        d2: (1.0 / v2 - 1.0 / v1) * l / 3600.0,
        d3: dv2 / (2.0 * a2_mps2 * v1) / 3600.0,
    })
}

/// Random-arrival queuing delay per vehicle, hours, for `0 <= q < c`.
pub fn stochastic_queue_delay(q: f64, c: f64) -> Result<f64, DelayError> {
    if !(c > 0.0) || !(q >= 0.0) {
        return Err(DelayError::InvalidScenario(format!(
            "need q >= 0 and c > 0, got q = {q}, c = {c}"
        )));
    }
    if q >= c {
        return Err(DelayError::OverCapacity { q, c });
    }
    Ok(q / (c * (c - q)))
}

/// [`stochastic_queue_delay`] evaluated at `min(q, 0.98 c)`.
pub fn capped_stochastic_delay(q: f64, c: f64) -> f64 {
    let q = q.min(D4_CAP_RATIO * c);
    q / (c * (c - q))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepDelay {
    pub index: usize,
    /// Arrival rate, pcu/h.
    pub q: f64,
    pub capacity: f64,
    pub active: bool,
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
    pub d4: f64,
    /// Deterministic queue area over the step, vehicle-hours.
    pub big_d4: f64,
    pub queue_in: f64,
    pub queue_out: f64,
    /// Step total, vehicle-hours.
    pub dl: f64,
}

impl StepDelay {
    /// Vehicles that passed the bottleneck during the step.
    pub fn served(&self, step_h: f64) -> f64 {
        self.queue_in + self.q * step_h - self.queue_out
    }
}

/// Delay of one step given the queue standing at its start.
///
/// With no queue and `q <= c` only the per-vehicle terms apply. Otherwise
/// the queue evolves linearly, `D4` is the area under it, and a queue that
/// empties mid-step contributes a triangle rather than a trapezoid.
pub fn step_delay(
    index: usize,
    queue_in: f64,
    q: f64,
    capacity: f64,
    comps: ComponentDelays,
    step_h: f64,
) -> StepDelay {
    let d4 = capped_stochastic_delay(q, capacity);
    let per_vehicle = (comps.sum() + d4) * q * step_h;
    let (big_d4, queue_out) = if queue_in == 0.0 && q <= capacity {
        (0.0, 0.0)
    } else {
        let end = queue_in + (q - capacity) * step_h;
        if end >= 0.0 {
            (
                queue_in * step_h + 0.5 * (q - capacity) * step_h * step_h,
                end,
            )
        } else {
            let empty_after = queue_in / (capacity - q);
            (0.5 * queue_in * empty_after, 0.0)
        }
    };
    StepDelay {
        index,
        q,
        capacity,
        active: false,
        d1: comps.d1,
        d2: comps.d2,
        d3: comps.d3,
        d4,
        big_d4,
        queue_in,
        queue_out,
        dl: per_vehicle + big_d4,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkZoneScenario {
    pub v1_kmh: f64,
    pub v2_kmh: f64,
    pub a1_mps2: f64,
    pub a2_mps2: f64,
    pub length_km: f64,
    pub duration_h: f64,
    /// Total capacity through the work zone, pcu/h.
    pub workzone_capacity: f64,
    /// Total capacity of the unobstructed cross-section, pcu/h.
    pub normal_capacity: f64,
    pub step_h: f64,
    /// Total arrivals per step, pcu/h.
    pub demand: Vec<f64>,
}

impl WorkZoneScenario {
    pub fn validate(&self) -> Result<(), DelayError> {
        component_delays(
            self.v1_kmh,
            self.v2_kmh,
            self.a1_mps2,
            self.a2_mps2,
            self.length_km,
        )?;
        let bad = |m: &str| Err(DelayError::InvalidScenario(m.to_string()));
        if !(self.duration_h > 0.0) {
            return bad("duration must be positive");
        }
        if !(self.step_h > 0.0) {
            return bad("step length must be positive");
        }
        if !(self.workzone_capacity > 0.0) {
            return bad("work-zone capacity must be positive");
        }
        if !(self.normal_capacity >= self.workzone_capacity) {
            return bad("normal capacity must be at least the work-zone capacity");
        }
        if self.demand.iter().any(|q| !(*q >= 0.0) || !q.is_finite()) {
            return bad("demand values must be finite and >= 0");
        }
        self.duration_steps()?;
        Ok(())
    }

    /// Number of steps the work zone stays in place.
    pub fn duration_steps(&self) -> Result<usize, DelayError> {
        let n = self.duration_h / self.step_h;
        let r = n.round();
        if (n - r).abs() > 1e-6 || r < 1.0 {
            return Err(DelayError::InvalidScenario(format!(
                "duration {} h is not a whole number of {} h steps",
                self.duration_h, self.step_h
            )));
        }
        Ok(r as usize)
    }

    /// Flags with the work zone active from `start` for the full duration.
    pub fn flags_from(&self, start: usize) -> Result<Vec<bool>, DelayError> {
        let n = self.duration_steps()?;
        if start + n > self.demand.len() {
            return Err(DelayError::Flags(format!(
                "work zone {start}..{} runs past the {}-step horizon",
                start + n,
                self.demand.len()
            )));
        }
        Ok((0..self.demand.len())
            .map(|i| i >= start && i < start + n)
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelayResult {
    pub steps: Vec<StepDelay>,
    pub total: f64,
    pub baseline_total: f64,
    pub added: f64,
}

impl DelayResult {
    /// Sum of the deterministic queue areas, vehicle-hours.
    pub fn queue_delay(&self) -> f64 {
        self.steps.iter().map(|s| s.big_d4).sum()
    }
}

/// Folds [`step_delay`] over the horizon. Returns the steps; does not check
/// the final queue.
pub fn simulate(scenario: &WorkZoneScenario, flags: &[bool]) -> Result<Vec<StepDelay>, DelayError> {
    if flags.len() != scenario.demand.len() {
        return Err(DelayError::Flags(format!(
            "{} flags for {} demand steps",
            flags.len(),
            scenario.demand.len()
        )));
    }
    let active = component_delays(
        scenario.v1_kmh,
        scenario.v2_kmh,
        scenario.a1_mps2,
        scenario.a2_mps2,
        scenario.length_km,
    )?;
    let mut queue = 0.0;
    let mut steps = Vec::with_capacity(flags.len());
    for (i, (&q, &on)) in scenario.demand.iter().zip(flags).enumerate() {
        let (capacity, comps) = if on {
            (scenario.workzone_capacity, active)
        } else {
            (scenario.normal_capacity, ComponentDelays::default())
        };
        let mut s = step_delay(i, queue, q, capacity, comps, scenario.step_h);
        s.active = on;
        queue = s.queue_out;
        steps.push(s);
    }
    Ok(steps)
}

fn check_flags(scenario: &WorkZoneScenario, flags: &[bool]) -> Result<(), DelayError> {
    let want = scenario.duration_steps()?;
    let on: Vec<usize> = flags
        .iter()
        .enumerate()
        .filter(|(_, f)| **f)
        .map(|(i, _)| i)
        .collect();
    if on.len() != want {
        return Err(DelayError::Flags(format!(
            "{} active steps, duration needs {want}",
            on.len()
        )));
    }
    if on.windows(2).any(|w| w[1] != w[0] + 1) {
        return Err(DelayError::Flags("active steps are not contiguous".into()));
    }
    Ok(())
}

const RESIDUAL_EPS: f64 = 1e-6;

/// Total delay with the work zone placed by `flags`, the same-demand
/// baseline without it, and their difference.
pub fn run_scenario(
    scenario: &WorkZoneScenario,
    flags: &[bool],
) -> Result<DelayResult, DelayError> {
    scenario.validate()?;
    check_flags(scenario, flags)?;
    let steps = simulate(scenario, flags)?;
    let baseline = simulate(scenario, &vec![false; flags.len()])?;
    for (run, s) in [("work-zone", &steps), ("baseline", &baseline)] {
        let left = s.last().map_or(0.0, |l| l.queue_out);
        if left > RESIDUAL_EPS {
            return Err(DelayError::ResidualQueue {
                run,
                vehicles: left,
            });
        }
    }
    let total: f64 = steps.iter().map(|s| s.dl).sum();
    let baseline_total: f64 = baseline.iter().map(|s| s.dl).sum();
    Ok(DelayResult {
        steps,
        total,
        baseline_total,
        added: total - baseline_total,
    })
}

/// Reads demand CSV `step_index,Q_pcu_per_h`; indices must run 0, 1, 2, ...
pub fn read_demand_csv<R: Read>(reader: R) -> Result<Vec<f64>, DelayError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| DelayError::DemandFile(e.to_string()))?
        .clone();
    if headers.len() < 2 || &headers[0] != "step_index" || &headers[1] != "Q_pcu_per_h" {
        return Err(DelayError::DemandFile(
            "expected header `step_index,Q_pcu_per_h`".into(),
        ));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| DelayError::DemandFile(e.to_string()))?;
        let idx: usize = rec[0]
            .parse()
            .map_err(|_| DelayError::DemandFile(format!("bad step index `{}`", &rec[0])))?;
        if idx != i {
            return Err(DelayError::DemandFile(format!(
                "step index {idx} at row {i}"
            )));
        }
        let q: f64 = rec[1]
            .parse()
            .map_err(|_| DelayError::DemandFile(format!("bad demand `{}`", &rec[1])))?;
        out.push(q);
    }
    if out.is_empty() {
        return Err(DelayError::DemandFile("no demand rows".into()));
    }
    Ok(out)
}

pub fn write_demand_csv<W: Write>(writer: W, demand: &[f64]) -> std::io::Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["step_index", "Q_pcu_per_h"])?;
    for (i, q) in demand.iter().enumerate() {
        wtr.write_record([i.to_string(), q.to_string()])?;
    }
    wtr.flush()
}

/// Writes the per-step CSV `i,Q,d1,d2,d3,d4,D4,queue,DL`.
pub fn write_steps_csv<W: Write>(writer: W, steps: &[StepDelay]) -> std::io::Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["i", "Q", "d1", "d2", "d3", "d4", "D4", "queue", "DL"])?;
    for s in steps {
        wtr.write_record([
            s.index.to_string(),
            s.q.to_string(),
            s.d1.to_string(),
            s.d2.to_string(),
            s.d3.to_string(),
            s.d4.to_string(),
            s.big_d4.to_string(),
            s.queue_out.to_string(),
            s.dl.to_string(),
        ])?;
    }
    wtr.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenario(demand: Vec<f64>) -> WorkZoneScenario {
        WorkZoneScenario {
            v1_kmh: 60.0,
            v2_kmh: 40.0,
            a1_mps2: 1.5,
            a2_mps2: 1.5,
            length_km: 1.0,
            duration_h: 1.0 / 60.0,
            workzone_capacity: 1200.0,
            normal_capacity: 3600.0,
            step_h: 1.0 / 60.0,
            demand,
        }
    }

    #[test]
    fn equal_speeds_have_no_component_delay() {
        let c = component_delays(60.0, 60.0, 1.0, 1.0, 2.0).unwrap();
        assert_eq!(c, ComponentDelays::default());
    }

    #[test]
    fn traverse_delay_60_to_40() {
        let c = component_delays(60.0, 40.0, 1.5, 1.5, 1.0).unwrap();
        assert!((c.d2 - 1.0 / 120.0).abs() < 1e-12);
        assert!((c.d2 * 3600.0 - 30.0).abs() < 1e-9);
    }

    #[test]
    fn deceleration_matches_kinematics() {
        // Time lost = braking time minus the time to cruise the braking distance.
        let (v1, v2, a) = (60.0 / 3.6, 40.0 / 3.6, 1.5);
        let t_brake = (v1 - v2) / a;
        let dist = (v1 * v1 - v2 * v2) / (2.0 * a);
        let lost_s = t_brake - dist / v1;
        let c = component_delays(60.0, 40.0, 1.5, 3.0, 1.0).unwrap();
        assert!((c.d1 * 3600.0 - lost_s).abs() < 1e-9);
        assert!((c.d3 * 3600.0 - lost_s / 2.0).abs() < 1e-9);
    }

    #[test]
    fn component_errors() {
        assert_eq!(
            component_delays(60.0, 0.0, 1.0, 1.0, 1.0),
            Err(DelayError::ZeroWorkZoneSpeed)
        );
        assert!(component_delays(40.0, 60.0, 1.0, 1.0, 1.0).is_err());
        assert!(component_delays(60.0, 40.0, 0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn stochastic_term() {
        assert_eq!(stochastic_queue_delay(0.0, 1200.0).unwrap(), 0.0);
        let d = stochastic_queue_delay(600.0, 1200.0).unwrap();
        assert!((d - 1.0 / 1200.0).abs() < 1e-15);
        assert!((d * 3600.0 - 3.0).abs() < 1e-12);
        assert!(matches!(
            stochastic_queue_delay(1200.0, 1200.0),
            Err(DelayError::OverCapacity { .. })
        ));
        let cap = capped_stochastic_delay(1199.9, 1200.0);
        assert_eq!(cap, capped_stochastic_delay(5000.0, 1200.0));
        assert!((cap - 0.98 / (1200.0 * 0.02)).abs() < 1e-12);
    }

    #[test]
    fn growing_queue_trapezoid() {
        let s = step_delay(
            0,
            50.0,
            1500.0,
            1200.0,
            ComponentDelays::default(),
            1.0 / 60.0,
        );
        assert!((s.big_d4 - (50.0 / 60.0 + 0.5 * 300.0 / 3600.0)).abs() < 1e-12);
        assert!((s.big_d4 - 0.875).abs() < 1e-12);
        assert!((s.queue_out - 55.0).abs() < 1e-9);
    }

    #[test]
    fn empty_step_is_free() {
        let s = step_delay(0, 0.0, 0.0, 1200.0, ComponentDelays::default(), 1.0 / 60.0);
        assert_eq!(s.dl, 0.0);
    }

    #[test]
    fn steady_queue() {
        let td = 1.0 / 60.0;
        let s = step_delay(0, 10.0, 1200.0, 1200.0, ComponentDelays::default(), td);
        assert_eq!(s.queue_out, 10.0);
        assert!((s.big_d4 - 10.0 * td).abs() < 1e-15);
    }

    #[test]
    fn queue_empties_mid_step() {
        // 10 vehicles discharging at a net 1200 veh/h clear after 30 s.
        let s = step_delay(0, 10.0, 0.0, 1200.0, ComponentDelays::default(), 1.0 / 60.0);
        assert_eq!(s.queue_out, 0.0);
        assert!((s.big_d4 - 0.5 * 10.0 * (10.0 / 1200.0)).abs() < 1e-15);
    }

    #[test]
    fn low_demand_no_speed_change_adds_nothing() {
        let mut sc = scenario(vec![300.0; 10]);
        sc.v2_kmh = sc.v1_kmh;
        sc.duration_h = 4.0 / 60.0;
        let flags = sc.flags_from(3).unwrap();
        let r = run_scenario(&sc, &flags).unwrap();
        // Below both capacities, only the stochastic term differs.
        let per_step = (capped_stochastic_delay(300.0, 1200.0)
            - capped_stochastic_delay(300.0, 3600.0))
            * 300.0
            * sc.step_h;
        assert!((r.added - 4.0 * per_step).abs() < 1e-12, "{}", r.added);
        assert_eq!(r.queue_delay(), 0.0);
        let mut sc2 = sc.clone();
        sc2.workzone_capacity = sc2.normal_capacity;
        let r2 = run_scenario(&sc2, &sc2.flags_from(3).unwrap()).unwrap();
        assert_eq!(r2.added, 0.0);
    }

    #[test]
    fn residual_queue_is_reported() {
        let sc = scenario(vec![3000.0, 3000.0]);
        let flags = sc.flags_from(1).unwrap();
        assert!(matches!(
            run_scenario(&sc, &flags),
            Err(DelayError::ResidualQueue {
                run: "work-zone",
                ..
            })
        ));
    }

    #[test]
    fn flags_are_checked() {
        let sc = scenario(vec![100.0; 5]);
        assert!(matches!(
            run_scenario(&sc, &[true, false, true, false, false]),
            Err(DelayError::Flags(_))
        ));
        assert!(matches!(
            run_scenario(&sc, &[false; 4]),
            Err(DelayError::Flags(_))
        ));
        let mut two = sc.clone();
        two.duration_h = 2.0 / 60.0;
        assert!(matches!(
            run_scenario(&two, &[true, false, true, false, false]),
            Err(DelayError::Flags(_))
        ));
        assert!(sc.flags_from(5).is_err());
    }

    #[test]
    fn demand_csv_round_trip() {
        let mut buf = Vec::new();
        write_demand_csv(&mut buf, &[1.0, 2.5]).unwrap();
        assert_eq!(read_demand_csv(buf.as_slice()).unwrap(), vec![1.0, 2.5]);
        assert!(read_demand_csv("step_index,Q_pcu_per_h\n1,3\n".as_bytes()).is_err());
        assert!(read_demand_csv("a,b\n0,3\n".as_bytes()).is_err());
    }
}
