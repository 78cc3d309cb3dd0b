//! Speed-volume relations and capacity estimates.
//!
//! The classic parabola only covers demand up to capacity. The practical
//! S-curve keeps falling past `V/C = 1`, which is what lets a congested
//! speed be turned back into the demand that caused it.

use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FlowError {
    #[error("invalid model parameter {name} = {value}")]
    InvalidParam { name: &'static str, value: f64 },
    #[error("speed {u} outside [0, {u0}] for the classic model")]
    SpeedOutOfRange { u: f64, u0: f64 },
    #[error("volume/capacity ratio must be >= 0, got {0}")]
    NegativeRatio(f64),
    #[error("speed {u} km/h has no volume: must lie in (0, {free_flow}) km/h")]
    NoSolution { u: f64, free_flow: f64 },
    #[error("bracket not established: speed at x_max = {x_max} is {speed_at_max}, still >= {u}")]
    Bracket {
        u: f64,
        x_max: f64,
        speed_at_max: f64,
    },
    #[error("free-flow speed must be positive, got {0}")]
    NonPositiveFreeFlow(f64),
    #[error("capacity factor {name} = {value} outside (0, 1.2]")]
    Factor { name: &'static str, value: f64 },
    #[error("lane count must be >= 1")]
    Lanes,
    #[error("no model parameter row for design speed {0}")]
    MissingPreset(f64),
    #[error("model parameter file: {0}")]
    File(String),
}

fn positive(name: &'static str, value: f64) -> Result<(), FlowError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(FlowError::InvalidParam { name, value })
    }
}

/// Greenshields-type parabola `V = K_j (U - U^2 / U_0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassicModelParams {
    /// Jam density, pcu/km.
    pub jam_density: f64,
    /// Zero-flow speed, km/h.
    pub zero_flow_speed: f64,
}

pub fn classic_volume(u: f64, p: &ClassicModelParams) -> Result<f64, FlowError> {
    positive("jam_density", p.jam_density)?;
    positive("zero_flow_speed", p.zero_flow_speed)?;
    if !(0.0..=p.zero_flow_speed).contains(&u) {
        return Err(FlowError::SpeedOutOfRange {
            u,
            u0: p.zero_flow_speed,
        });
    }
    Ok(p.jam_density * (u - u * u / p.zero_flow_speed))
}

/// Parameters of `U = a1 Us / (1 + x^beta)`, `beta = a2 + a3 x^3`, `x = V/C`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowModelParams {
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    /// Design or measured free-flow speed, km/h.
    pub us_kmh: f64,
    /// Single-lane capacity, pcu/h.
    pub capacity_pcu_h: f64,
}

impl FlowModelParams {
    pub fn validate(&self) -> Result<(), FlowError> {
        positive("alpha1", self.alpha1)?;
        positive("alpha2", self.alpha2)?;
        positive("alpha3", self.alpha3)?;
        positive("us_kmh", self.us_kmh)?;
        positive("capacity_pcu_h", self.capacity_pcu_h)
    }

    /// Zero-flow asymptote `a1 * Us`.
    pub fn free_flow_speed(&self) -> f64 {
        self.alpha1 * self.us_kmh
    }
}

/// Speed at volume/capacity ratio `x`; `x = 0` takes the limit `a1 Us`.
pub fn practical_speed(x: f64, p: &FlowModelParams) -> Result<f64, FlowError> {
    if !(x >= 0.0) {
        return Err(FlowError::NegativeRatio(x));
    }
    Ok(speed_at(x, p))
}

fn speed_at(x: f64, p: &FlowModelParams) -> f64 {
    if x <= 0.0 {
        return p.free_flow_speed();
    }
    let beta = p.alpha2 + p.alpha3 * x * x * x;
    p.free_flow_speed() / (1.0 + (beta * x.ln()).exp())
}

pub const DEFAULT_X_MAX: f64 = 2.0;

/// Per-lane volume whose practical-model speed equals `u`.
///
/// Bisects `x` on `[0, x_max]` until the bracket stops shrinking, well
/// below the 1e-6 ratio resolution the round trip needs.
pub fn invert_practical(u: f64, p: &FlowModelParams, x_max: f64) -> Result<f64, FlowError> {
    p.validate()?;
    positive("x_max", x_max)?;
    let free_flow = p.free_flow_speed();
    if !(u > 0.0 && u < free_flow) {
        return Err(FlowError::NoSolution { u, free_flow });
    }
    let speed_at_max = speed_at(x_max, p);
    if speed_at_max >= u {
        return Err(FlowError::Bracket {
            u,
            x_max,
            speed_at_max,
        });
    }

    // speed_at is decreasing in x: residual goes from positive to negative.
    let (mut lo, mut hi) = (0.0_f64, x_max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let r = speed_at(mid, p) - u;
        if r == 0.0 {
            return Ok(mid * p.capacity_pcu_h);
        }
        if r > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi) * p.capacity_pcu_h)
}

/// One row of a model parameter file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParamRow {
    pub design_speed_kmh: f64,
    pub capacity_pcu_h: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    pub us_kmh: f64,
}

impl ModelParamRow {
    pub fn params(&self) -> FlowModelParams {
        FlowModelParams {
            alpha1: self.alpha1,
            alpha2: self.alpha2,
            alpha3: self.alpha3,
            us_kmh: self.us_kmh,
            capacity_pcu_h: self.capacity_pcu_h,
        }
    }
}

/// Reads `design_speed_kmh,capacity_pcu_h,alpha1,alpha2,alpha3,us_kmh` rows.
pub fn read_model_params_csv<R: Read>(reader: R) -> Result<Vec<ModelParamRow>, FlowError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let rows = rdr
        .deserialize()
        .collect::<Result<Vec<ModelParamRow>, _>>()
        .map_err(|e| FlowError::File(e.to_string()))?;
    if rows.is_empty() {
        return Err(FlowError::File("no parameter rows".to_string()));
    }
    for r in &rows {
        r.params().validate()?;
    }
    Ok(rows)
}

/// Expressway presets by design speed (120/100/80/60 km/h).
pub fn expressway_presets() -> Vec<ModelParamRow> {
    [
        (120.0, 2200.0, 0.93, 1.88, 4.85),
        (100.0, 2200.0, 0.95, 1.88, 4.86),
        (80.0, 2000.0, 1.00, 1.88, 4.90),
        (60.0, 1800.0, 1.20, 1.88, 4.88),
    ]
    .into_iter()
    .map(|(v, c, a1, a2, a3)| ModelParamRow {
        design_speed_kmh: v,
        capacity_pcu_h: c,
        alpha1: a1,
        alpha2: a2,
        alpha3: a3,
        us_kmh: v,
    })
    .collect()
}

pub fn expressway_preset(design_speed_kmh: f64) -> Result<FlowModelParams, FlowError> {
    expressway_presets()
        .into_iter()
        .find(|r| r.design_speed_kmh == design_speed_kmh)
        .map(|r| r.params())
        .ok_or(FlowError::MissingPreset(design_speed_kmh))
}

/// Inputs to the basic-segment free-flow speed and capacity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaseCapacityInputs {
    pub v_bff_kmh: f64,
    #[serde(default)]
    pub delta_v_w_kmh: f64,
    #[serde(default)]
    pub delta_v_n_kmh: f64,
    pub c_b_pcu_h: f64,
    pub f_hv: f64,
    pub f_p: f64,
    pub lanes: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Capacity {
    pub per_lane_pcu_h: f64,
    pub total_pcu_h: f64,
}

pub fn free_flow_speed(i: &BaseCapacityInputs) -> Result<f64, FlowError> {
    let v = i.v_bff_kmh + i.delta_v_w_kmh + i.delta_v_n_kmh;
    if v > 0.0 {
        Ok(v)
    } else {
        Err(FlowError::NonPositiveFreeFlow(v))
    }
}

fn factor(name: &'static str, value: f64) -> Result<f64, FlowError> {
    if value > 0.0 && value <= 1.2 {
        Ok(value)
    } else {
        Err(FlowError::Factor { name, value })
    }
}

pub fn base_capacity(i: &BaseCapacityInputs) -> Result<Capacity, FlowError> {
    positive("c_b_pcu_h", i.c_b_pcu_h)?;
    if i.lanes == 0 {
        return Err(FlowError::Lanes);
    }
    let per_lane = i.c_b_pcu_h * factor("f_hv", i.f_hv)? * factor("f_p", i.f_p)?;
    Ok(Capacity {
        per_lane_pcu_h: per_lane,
        total_pcu_h: per_lane * f64::from(i.lanes),
    })
}

/// Work-zone capacity inputs; every adjustment factor multiplies the base.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkZoneCapacityInputs {
    pub c_bs_pcu_h: f64,
    pub f_n: f64,
    pub f_lw: f64,
    pub f_lc: f64,
    pub f_hv: f64,
    pub f_se: f64,
    pub f_wi: f64,
    pub f_ls: f64,
    pub open_lanes: u32,
}

pub fn workzone_capacity(i: &WorkZoneCapacityInputs) -> Result<Capacity, FlowError> {
    positive("c_bs_pcu_h", i.c_bs_pcu_h)?;
    if i.open_lanes == 0 {
        return Err(FlowError::Lanes);
    }
    let per_lane = i.c_bs_pcu_h
        * factor("f_n", i.f_n)?
        * factor("f_lw", i.f_lw)?
        * factor("f_lc", i.f_lc)?
        * factor("f_hv", i.f_hv)?
        * factor("f_se", i.f_se)?
        * factor("f_wi", i.f_wi)?
        * factor("f_ls", i.f_ls)?;
    Ok(Capacity {
        per_lane_pcu_h: per_lane,
        total_pcu_h: per_lane * f64::from(i.open_lanes),
    })
}
