//! Work-zone start-time optimization from crowd-sourced traffic map tiles.
//!
//! The pipeline: discretize roads into monitored points ([`geo`]), collect
//! tile colors on a schedule ([`feed`]), map statuses to speeds
//! ([`calib`]), invert speeds into volumes ([`flow`]), simulate work-zone
//! delay ([`delay`]) and sweep candidate start times ([`sweep`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calib;
pub mod delay;
pub mod feed;
pub mod flow;
pub mod geo;
pub mod status;
pub mod sweep;

pub use status::TrafficStatus;
