use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Four-level road condition shown on traffic map tiles, plus `Unknown`
/// for samples where no colored road stroke was found.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrafficStatus {
    Smooth,
    Slow,
    Congested,
    Severe,
    Unknown,
}

impl TrafficStatus {
    /// The four classifiable levels, fastest first.
    pub const LEVELS: [TrafficStatus; 4] = [
        TrafficStatus::Smooth,
        TrafficStatus::Slow,
        TrafficStatus::Congested,
        TrafficStatus::Severe,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TrafficStatus::Smooth => "smooth",
            TrafficStatus::Slow => "slow",
            TrafficStatus::Congested => "congested",
            TrafficStatus::Severe => "severe",
            TrafficStatus::Unknown => "unknown",
        }
    }

    pub fn is_known(self) -> bool {
        self != TrafficStatus::Unknown
    }
}

impl fmt::Display for TrafficStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TrafficStatus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "smooth" => Ok(TrafficStatus::Smooth),
            "slow" => Ok(TrafficStatus::Slow),
            "congested" => Ok(TrafficStatus::Congested),
            "severe" => Ok(TrafficStatus::Severe),
            "unknown" => Ok(TrafficStatus::Unknown),
            other => Err(format!("unknown traffic status `{other}`")),
        }
    }
}
