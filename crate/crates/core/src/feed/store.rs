//! Append-only observation files, one per UTC day per deployment.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use chrono::DateTime;
use serde::{Deserialize, Serialize};

use crate::status::TrafficStatus;

use super::FeedError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Observation {
    pub point_id: String,
    /// Seconds since the Unix epoch, UTC.
    pub timestamp: i64,
    pub status: TrafficStatus,
    pub rgb: Option<[u8; 3]>,
    pub note: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    point_id: String,
    timestamp_utc: i64,
    status: TrafficStatus,
    r: Option<u8>,
    g: Option<u8>,
    b: Option<u8>,
    note: String,
}

impl From<&Observation> for Row {
    fn from(o: &Observation) -> Self {
        let [r, g, b] = o.rgb.map_or([None; 3], |c| c.map(Some));
        Row {
            point_id: o.point_id.clone(),
            timestamp_utc: o.timestamp,
            status: o.status,
            r,
            g,
            b,
            note: o.note.clone(),
        }
    }
}

impl TryFrom<Row> for Observation {
    type Error = FeedError;

    fn try_from(row: Row) -> Result<Self, FeedError> {
        let rgb = match (row.r, row.g, row.b) {
            (Some(r), Some(g), Some(b)) => Some([r, g, b]),
            (None, None, None) => None,
            _ => return Err(FeedError::Store("partial rgb triple".into())),
        };
        if rgb.is_none() && row.status.is_known() {
            return Err(FeedError::Store(format!(
                "{} at {} has status {} but no rgb",
                row.point_id, row.timestamp_utc, row.status
            )));
        }
        Ok(Observation {
            point_id: row.point_id,
            timestamp: row.timestamp_utc,
            status: row.status,
            rgb,
            note: row.note,
        })
    }
}

pub const HEADER: [&str; 7] = ["point_id", "timestamp_utc", "status", "r", "g", "b", "note"];

/// Single-writer store. Files are named `<deployment>-<YYYY-MM-DD>.csv`
/// after the UTC date of each observation.
pub struct ObservationStore {
    dir: PathBuf,
    deployment: String,
    day: Option<(String, csv::Writer<BufWriter<File>>)>,
    last_ts: HashMap<(String, String), i64>,
}

impl ObservationStore {
    pub fn open(dir: impl Into<PathBuf>, deployment: impl Into<String>) -> Result<Self, FeedError> {
        let dir = dir.into();
        fs::create_dir_all(&dir)
            .map_err(|e| FeedError::Store(format!("{}: {e}", dir.display())))?;
        Ok(ObservationStore {
            dir,
            deployment: deployment.into(),
            day: None,
            last_ts: HashMap::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn file_name(&self, date: &str) -> String {
        format!("{}-{}.csv", self.deployment, date)
    }

    fn writer_for(&mut self, date: &str) -> Result<&mut csv::Writer<BufWriter<File>>, FeedError> {
        if self.day.as_ref().is_none_or(|(d, _)| d != date) {
            self.flush()?;
            let path = self.dir.join(self.file_name(date));
            let file = OpenOptions::new()
                .create(true)
                .append(true)
                .open(&path)
                .map_err(|e| FeedError::Store(format!("{}: {e}", path.display())))?;
            let fresh = file.metadata().map(|m| m.len() == 0).unwrap_or(true);
            if !fresh {
                self.load_last_timestamps(&path, date)?;
            }
            let mut wtr = csv::WriterBuilder::new()
                .has_headers(false)
                .from_writer(BufWriter::new(file));
            if fresh {
                wtr.write_record(HEADER)?;
            }
            self.day = Some((date.to_string(), wtr));
        }
        Ok(&mut self.day.as_mut().expect("just opened").1)
    }

    fn load_last_timestamps(&mut self, path: &Path, date: &str) -> Result<(), FeedError> {
        for o in read_file(path)? {
            let key = (date.to_string(), o.point_id);
            let e = self.last_ts.entry(key).or_insert(i64::MIN);
            *e = (*e).max(o.timestamp);
        }
        Ok(())
    }

    /// Appends one observation. Timestamps must not go backwards for a
    /// point within one day file.
    pub fn append(&mut self, obs: &Observation) -> Result<(), FeedError> {
        let date = DateTime::from_timestamp(obs.timestamp, 0)
            .ok_or_else(|| FeedError::Store(format!("timestamp {} out of range", obs.timestamp)))?
            .format("%Y-%m-%d")
            .to_string();
        self.writer_for(&date)?;
        let key = (date.clone(), obs.point_id.clone());
        if let Some(&last) = self.last_ts.get(&key) {
            if obs.timestamp < last {
                return Err(FeedError::OutOfOrder {
                    point_id: obs.point_id.clone(),
                    timestamp: obs.timestamp,
                    last,
                });
            }
        }
        let wtr = self.writer_for(&date)?;
        wtr.serialize(Row::from(obs))?;
        self.last_ts.insert(key, obs.timestamp);
        Ok(())
    }

    pub fn flush(&mut self) -> Result<(), FeedError> {
        if let Some((_, w)) = self.day.as_mut() {
            w.flush().map_err(|e| FeedError::Store(e.to_string()))?;
        }
        Ok(())
    }
}

impl Drop for ObservationStore {
    fn drop(&mut self) {
        let _ = self.flush();
    }
}

pub fn read_file(path: &Path) -> Result<Vec<Observation>, FeedError> {
    let mut rdr = csv::Reader::from_path(path)
        .map_err(|e| FeedError::Store(format!("{}: {e}", path.display())))?;
    rdr.deserialize::<Row>()
        .map(|r| Observation::try_from(r?))
        .collect()
}

/// Reads every `*.csv` file in `dir`, in file-name order.
pub fn read_store(dir: &Path) -> Result<Vec<Observation>, FeedError> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| FeedError::Store(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    let mut out = Vec::new();
    for f in files {
        out.extend(read_file(&f)?);
    }
    Ok(out)
}
