//! Traffic tile acquisition: request URLs, transports, pixel
//! classification, scheduled collection and daily aggregation.

pub mod classify;
pub mod collector;
pub mod profile;
pub mod request;
pub mod store;
pub mod transport;

use thiserror::Error;

use crate::calib::CalibError;

pub use classify::{
    classify_pixel, classify_rgb, decode_tile, sample_point, spiral, ClassifierRules,
};
pub use collector::{
    run_collector, Clock, CollectorOptions, CollectorStats, FetchJob, ManualClock, SystemClock,
    DEFAULT_PERIOD_S, DEFAULT_RADIUS_PX,
};
pub use profile::{aggregate_daily_profile, fill_missing, DailyProfile};
pub use request::{build_request, UrlTemplate};
pub use store::{read_store, Observation, ObservationStore};
pub use transport::{HttpTransport, RateLimiter, ReplayTransport, Transport, TransportError};

#[derive(Debug, Error)]
pub enum FeedError {
    #[error("bad URL template: {0}")]
    Template(String),
    #[error("cannot decode tile: {0}")]
    Decode(String),
    #[error("pixel ({x}, {y}) outside {w}x{h} tile")]
    OffsetOutsideImage { x: u32, y: u32, w: u32, h: u32 },
    #[error("replay fixture: {0}")]
    Replay(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("observation store: {0}")]
    Store(String),
    #[error("observation for {point_id} at {timestamp} precedes {last}")]
    OutOfOrder {
        point_id: String,
        timestamp: i64,
        last: i64,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("bin of {0} s does not divide a day")]
    BadBin(u32),
    #[error("no bin has any observation")]
    AllBinsMissing,
    #[error(transparent)]
    Calib(#[from] CalibError),
}
