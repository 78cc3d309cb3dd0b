//! Scheduled sampling of monitored points.

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, AtomicI64, Ordering};
use std::thread;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use image::RgbaImage;
use rayon::prelude::*;

use crate::geo::TileAddress;
use crate::status::TrafficStatus;

use super::classify::{decode_tile, sample_point, ClassifierRules};
use super::request::UrlTemplate;
use super::store::{Observation, ObservationStore};
use super::transport::Transport;
use super::FeedError;

pub const DEFAULT_PERIOD_S: u32 = 60;
pub const DEFAULT_RADIUS_PX: u32 = 4;

/// Source of wall time. Injected so that tests run without waiting.
pub trait Clock: Send + Sync {
    fn now_ms(&self) -> i64;
    /// Blocks until `t_ms`. Returns `false` if `stop` was raised first.
    fn sleep_until_ms(&self, t_ms: i64, stop: &AtomicBool) -> bool;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> i64 {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as i64)
            .unwrap_or(0)
    }

    fn sleep_until_ms(&self, t_ms: i64, stop: &AtomicBool) -> bool {
        loop {
            if stop.load(Ordering::Relaxed) {
                return false;
            }
            let left = t_ms - self.now_ms();
            if left <= 0 {
                return true;
            }
            thread::sleep(Duration::from_millis(left.min(100) as u64));
        }
    }
}

/// A clock that jumps straight to whatever time is requested.
#[derive(Debug, Default)]
pub struct ManualClock(AtomicI64);

impl ManualClock {
    pub fn new(start_ms: i64) -> Self {
        ManualClock(AtomicI64::new(start_ms))
    }

    pub fn set_ms(&self, t_ms: i64) {
        self.0.store(t_ms, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now_ms(&self) -> i64 {
        self.0.load(Ordering::SeqCst)
    }

    fn sleep_until_ms(&self, t_ms: i64, stop: &AtomicBool) -> bool {
        if stop.load(Ordering::Relaxed) {
            return false;
        }
        self.0.fetch_max(t_ms, Ordering::SeqCst);
        true
    }
}

#[derive(Debug, Clone)]
pub struct FetchJob {
    pub point_id: String,
    pub tile: TileAddress,
    pub template: UrlTemplate,
    pub period_s: u32,
}

impl FetchJob {
    pub fn new(
        point_id: impl Into<String>,
        tile: TileAddress,
        template: UrlTemplate,
        period_s: u32,
    ) -> Result<Self, FeedError> {
        if period_s == 0 {
            return Err(FeedError::Config("period must be positive".into()));
        }
        Ok(FetchJob {
            point_id: point_id.into(),
            tile,
            template,
            period_s,
        })
    }

    pub fn url(&self, now_ms: i64) -> String {
        self.template.render(&self.tile, now_ms)
    }
}

#[derive(Debug, Clone)]
pub struct CollectorOptions {
    pub radius_px: u32,
    pub rules: ClassifierRules,
    /// Last instant (inclusive) at which a firing may happen. `None` runs
    /// until the stop flag is raised.
    pub until_ms: Option<i64>,
}

impl Default for CollectorOptions {
    fn default() -> Self {
        CollectorOptions {
            radius_px: DEFAULT_RADIUS_PX,
            rules: ClassifierRules::default(),
            until_ms: None,
        }
    }
}

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct CollectorStats {
    pub ticks: u64,
    pub observations: u64,
    pub unknown: u64,
    pub failures: u64,
}

/// Runs the jobs on their schedules until `until_ms` or `stop`.
///
/// Job `j` fires at `start + k * period_j` for `k >= 1`, where `start` is
/// the clock reading on entry. Tiles due at the same instant are fetched
/// concurrently; observations are then appended in job order. Fetch or
/// decode failures are recorded as `Unknown` with a note. Only store
/// errors end the run early.
pub fn run_collector(
    jobs: &[FetchJob],
    transport: &dyn Transport,
    store: &mut ObservationStore,
    clock: &dyn Clock,
    opts: &CollectorOptions,
    stop: &AtomicBool,
) -> Result<CollectorStats, FeedError> {
    let mut stats = CollectorStats::default();
    if jobs.is_empty() {
        return Ok(stats);
    }
    if let Some(j) = jobs.iter().find(|j| j.period_s == 0) {
        return Err(FeedError::Config(format!(
            "job {} has a zero period",
            j.point_id
        )));
    }
    let start = clock.now_ms();
    let mut next: Vec<i64> = jobs
        .iter()
        .map(|j| start + i64::from(j.period_s) * 1000)
        .collect();

    loop {
        let t = *next.iter().min().expect("non-empty");
        if opts.until_ms.is_some_and(|u| t > u) {
            break;
        }
        if !clock.sleep_until_ms(t, stop) {
            break;
        }
        let due: Vec<usize> = (0..jobs.len()).filter(|&i| next[i] == t).collect();
        let urls: Vec<String> = due.iter().map(|&i| jobs[i].url(t)).collect();
        let mut unique = urls.clone();
        unique.sort();
        unique.dedup();
        let fetched: HashMap<String, Result<RgbaImage, String>> = unique
            .into_par_iter()
            .map(|u| {
                let img = transport
                    .fetch(&u)
                    .map_err(|e| e.to_string())
                    .and_then(|b| decode_tile(&b).map_err(|e| e.to_string()));
                (u, img)
            })
            .collect();

        stats.ticks += 1;
        for (&i, url) in due.iter().zip(&urls) {
            let job = &jobs[i];
            let sampled = match &fetched[url] {
                Ok(img) => sample_point(
                    img,
                    job.tile.offset_x,
                    job.tile.offset_y,
                    opts.radius_px,
                    &opts.rules,
                )
                .map_err(|e| e.to_string()),
                Err(e) => Err(e.clone()),
            };
            let (status, rgb, note) = match sampled {
                Ok((s, rgb)) => (s, rgb, String::new()),
                Err(e) => {
                    stats.failures += 1;
                    (TrafficStatus::Unknown, None, e)
                }
            };
            if !status.is_known() {
                stats.unknown += 1;
            }
            store.append(&Observation {
                point_id: job.point_id.clone(),
                timestamp: t.div_euclid(1000),
                status,
                rgb,
                note,
            })?;
            stats.observations += 1;
            next[i] += i64::from(job.period_s) * 1000;
        }
        store.flush()?;
    }
    store.flush()?;
    Ok(stats)
}
