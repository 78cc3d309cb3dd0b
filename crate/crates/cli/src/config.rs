//! TOML files read by the subcommands.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use wzopt::delay::WorkZoneScenario;
use wzopt::feed::ClassifierRules;
use wzopt::flow::{base_capacity, workzone_capacity, BaseCapacityInputs, WorkZoneCapacityInputs};

use crate::Failure;

fn read_toml<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::Config)?;
    toml::from_str(&text)
        .with_context(|| format!("parsing {}", path.display()))
        .map_err(Failure::Config)
}

/// Paths in a config file are taken relative to the file itself.
fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.parent().unwrap_or(Path::new(".")).join(p)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollectConfig {
    pub url_template: Option<String>,
    pub zoom: u8,
    #[serde(default = "default_period")]
    pub period_s: u32,
    #[serde(default = "default_radius")]
    pub radius_px: u32,
    #[serde(default)]
    pub rules: ClassifierRules,
    pub points: PathBuf,
    pub store_dir: PathBuf,
    #[serde(default = "default_deployment")]
    pub deployment: String,
    #[serde(default = "default_profile")]
    pub profile: String,
    pub replay_dir: Option<PathBuf>,
    #[serde(default = "default_min_gap")]
    pub min_gap_ms: u64,
    #[serde(default = "default_timeout")]
    pub timeout_s: u64,
}

fn default_period() -> u32 {
    wzopt::feed::DEFAULT_PERIOD_S
}
fn default_radius() -> u32 {
    wzopt::feed::DEFAULT_RADIUS_PX
}
fn default_deployment() -> String {
    "wzopt".into()
}
fn default_profile() -> String {
    "slippy".into()
}
fn default_min_gap() -> u64 {
    50
}
fn default_timeout() -> u64 {
    10
}

impl CollectConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let mut cfg: CollectConfig = read_toml(path)?;
        cfg.points = resolve(path, &cfg.points);
        cfg.store_dir = resolve(path, &cfg.store_dir);
        cfg.replay_dir = cfg.replay_dir.map(|d| resolve(path, &d));
        Ok(cfg)
    }
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum WorkZoneCapacitySpec {
    Total { total_pcu_h: f64 },
    Factors(WorkZoneCapacityInputs),
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum NormalCapacitySpec {
    Total { total_pcu_h: f64 },
    Base(BaseCapacityInputs),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub v1_kmh: f64,
    pub v2_kmh: f64,
    pub a1_mps2: f64,
    pub a2_mps2: f64,
    pub length_km: f64,
    pub duration_h: f64,
    pub step_h: f64,
    /// Work start as `HH:MM`, used by `delay`.
    #[serde(default)]
    pub start: Option<String>,
    pub demand_csv: PathBuf,
    #[serde(default = "default_horizon_days")]
    pub max_horizon_days: usize,
    pub workzone_capacity: WorkZoneCapacitySpec,
    pub normal_capacity: NormalCapacitySpec,
}

fn default_horizon_days() -> usize {
    3
}

pub struct Scenario {
    pub template: WorkZoneScenario,
    pub start: Option<u32>,
    pub max_horizon_days: usize,
}

pub fn parse_hhmm(s: &str) -> Result<u32> {
    let (h, m) = s
        .split_once(':')
        .with_context(|| format!("expected HH:MM, got `{s}`"))?;
    let (h, m): (u32, u32) = (h.trim().parse()?, m.trim().parse()?);
    if h >= 24 || m >= 60 {
        bail!("time `{s}` outside 00:00..23:59");
    }
    Ok(h * 60 + m)
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let file: ScenarioFile = read_toml(path)?;
        let demand_path = resolve(path, &file.demand_csv);
        let demand = std::fs::File::open(&demand_path)
            .with_context(|| format!("opening {}", demand_path.display()))
            .map_err(Failure::Input)?;
        let demand = wzopt::delay::read_demand_csv(demand)
            .with_context(|| format!("reading {}", demand_path.display()))
            .map_err(Failure::Input)?;
        let workzone = match file.workzone_capacity {
            WorkZoneCapacitySpec::Total { total_pcu_h } => total_pcu_h,
            WorkZoneCapacitySpec::Factors(f) => {
                workzone_capacity(&f)
                    .context("work-zone capacity")
                    .map_err(Failure::Input)?
                    .total_pcu_h
            }
        };
        let normal = match file.normal_capacity {
            NormalCapacitySpec::Total { total_pcu_h } => total_pcu_h,
            NormalCapacitySpec::Base(b) => {
                base_capacity(&b)
                    .context("normal capacity")
                    .map_err(Failure::Input)?
                    .total_pcu_h
            }
        };
        let start = file
            .start
            .as_deref()
            .map(parse_hhmm)
            .transpose()
            .map_err(Failure::Config)?;
        let template = WorkZoneScenario {
            v1_kmh: file.v1_kmh,
            v2_kmh: file.v2_kmh,
            a1_mps2: file.a1_mps2,
            a2_mps2: file.a2_mps2,
            length_km: file.length_km,
            duration_h: file.duration_h,
            workzone_capacity: workzone,
            normal_capacity: normal,
            step_h: file.step_h,
            demand,
        };
        template
            .validate()
            .context("scenario")
            .map_err(Failure::Input)?;
        Ok(Scenario {
            template,
            start,
            max_horizon_days: file.max_horizon_days,
        })
    }
}
