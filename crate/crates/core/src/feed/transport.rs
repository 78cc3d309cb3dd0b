//! Where tile bytes come from: recorded fixtures or plain HTTP.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use regex::Regex;
use thiserror::Error;

use super::FeedError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransportError {
    #[error("no recorded tile for {0}")]
    NotRecorded(String),
    #[error("HTTP status {0}")]
    Status(u16),
    #[error("request failed: {0}")]
    Request(String),
}

/// Answers a built request URL with the raw tile bytes.
pub trait Transport: Send + Sync {
    fn fetch(&self, url: &str) -> Result<Vec<u8>, TransportError>;
}

/// Replays tiles recorded on disk.
///
/// The directory holds the images plus `manifest.csv` with columns
/// `request,file`. A `{time}` inside a request matches any run of digits,
/// so one recording serves every firing time.
#[derive(Debug)]
pub struct ReplayTransport {
    entries: Vec<(Regex, Vec<u8>)>,
}

impl ReplayTransport {
    pub const MANIFEST: &'static str = "manifest.csv";

    pub fn open(dir: &Path) -> Result<Self, FeedError> {
        let manifest = dir.join(Self::MANIFEST);
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(&manifest)
            .map_err(|e| FeedError::Replay(format!("{}: {e}", manifest.display())))?;
        let mut entries = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| FeedError::Replay(e.to_string()))?;
            if rec.len() < 2 {
                return Err(FeedError::Replay("manifest rows need request,file".into()));
            }
            let pattern = format!("^{}$", regex::escape(&rec[0]).replace(r"\{time\}", r"\d+"));
            let re = Regex::new(&pattern).map_err(|e| FeedError::Replay(e.to_string()))?;
            let path = dir.join(&rec[1]);
            let bytes = std::fs::read(&path)
                .map_err(|e| FeedError::Replay(format!("{}: {e}", path.display())))?;
            entries.push((re, bytes));
        }
        Ok(ReplayTransport { entries })
    }
}

impl Transport for ReplayTransport {
    fn fetch(&self, url: &str) -> Result<Vec<u8>, TransportError> {
        self.entries
            .iter()
            .find(|(re, _)| re.is_match(url))
            .map(|(_, b)| b.clone())
            .ok_or_else(|| TransportError::NotRecorded(url.to_string()))
    }
}

/// Enforces a minimum gap between consecutive requests to the same host.
#[derive(Debug)]
pub struct RateLimiter {
    min_gap: Duration,
    next_slot: Mutex<HashMap<String, Instant>>,
}

impl RateLimiter {
    pub fn new(min_gap: Duration) -> Self {
        RateLimiter {
            min_gap,
            next_slot: Mutex::new(HashMap::new()),
        }
    }

    /// Reserves the next free slot for `host` and returns how long the
    /// caller must wait before using it.
    pub fn reserve(&self, host: &str, now: Instant) -> Duration {
        let mut slots = self.next_slot.lock().expect("rate limiter poisoned");
        let slot = slots.get(host).copied().map_or(now, |s| s.max(now));
        slots.insert(host.to_string(), slot + self.min_gap);
        slot - now
    }

    pub fn wait(&self, host: &str) {
        let d = self.reserve(host, Instant::now());
        if !d.is_zero() {
            thread::sleep(d);
        }
    }
}

/// Plain HTTP GET, rate limited per host.
pub struct HttpTransport {
    client: reqwest::blocking::Client,
    limiter: RateLimiter,
}

impl HttpTransport {
    pub const DEFAULT_MIN_GAP: Duration = Duration::from_millis(50);

    pub fn new(min_gap: Duration, timeout: Duration) -> Result<Self, FeedError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| FeedError::Config(e.to_string()))?;
        Ok(HttpTransport {
            client,
            limiter: RateLimiter::new(min_gap),
        })
    }
}

impl Transport for HttpTransport {
    fn fetch(&self, url: &str) -> Result<Vec<u8>, TransportError> {
        let parsed = url::Url::parse(url).map_err(|e| TransportError::Request(e.to_string()))?;
        let host = format!(
            "{}:{}",
            parsed.host_str().unwrap_or_default(),
            parsed.port_or_known_default().unwrap_or(0)
        );
        self.limiter.wait(&host);
        let resp = self
            .client
            .get(url)
            .send()
            .map_err(|e| TransportError::Request(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(TransportError::Status(status.as_u16()));
        }
        resp.bytes()
            .map(|b| b.to_vec())
            .map_err(|e| TransportError::Request(e.to_string()))
    }
}
