use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// One metering sample. `ac_kw` is the mean AC power over the interval that
/// ends at this row's timestamp.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeteringRow {
    pub indoor_f: f64,
    pub outdoor_f: f64,
    pub ac_kw: f64,
}

/// Uniformly spaced indoor/outdoor temperature and AC power samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeteringHistory {
    /// Timestamp of the first row, in seconds.
    pub start: i64,
    /// Spacing between rows, in seconds.
    pub step_seconds: i64,
    pub rows: Vec<MeteringRow>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    timestamp: i64,
    indoor_f: f64,
    outdoor_f: f64,
    ac_kw: f64,
}

impl MeteringHistory {
    pub fn new(start: i64, step_seconds: i64, rows: Vec<MeteringRow>) -> Result<Self> {
        if step_seconds <= 0 {
            return Err(Error::History("step must be positive".into()));
        }
        if rows.len() < 2 {
            return Err(Error::History(format!(
                "need at least 2 rows, got {}",
                rows.len()
            )));
        }
        for (i, r) in rows.iter().enumerate() {
            if !(r.indoor_f.is_finite() && r.outdoor_f.is_finite() && r.ac_kw.is_finite()) {
                return Err(Error::History(format!("non-finite value in row {i}")));
            }
        }
        Ok(Self {
            start,
            step_seconds,
            rows,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn step_hours(&self) -> f64 {
        self.step_seconds as f64 / 3600.0
    }

    /// Keeps only the most recent `n` rows.
    pub fn tail(&self, n: usize) -> Self {
        let skip = self.rows.len().saturating_sub(n);
        Self {
            start: self.start + skip as i64 * self.step_seconds,
            step_seconds: self.step_seconds,
            rows: self.rows[skip..].to_vec(),
        }
    }

    /// One-step transitions `((s_prev, s_out_prev, u), s_next)`.
    pub fn transitions(&self) -> impl Iterator<Item = ([f64; 3], f64)> + '_ {
        self.rows
            .windows(2)
            .map(|w| ([w[0].indoor_f, w[0].outdoor_f, w[1].ac_kw], w[1].indoor_f))
    }

    /// CSV with header `timestamp,indoor_f,outdoor_f,ac_kw`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        for (i, r) in self.rows.iter().enumerate() {
            wtr.serialize(CsvRow {
                timestamp: self.start + i as i64 * self.step_seconds,
                indoor_f: r.indoor_f,
                outdoor_f: r.outdoor_f,
                ac_kw: r.ac_kw,
            })?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Parses the CSV form, rejecting gaps or irregular spacing.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let headers = rdr.headers()?.clone();
        let expected = ["timestamp", "indoor_f", "outdoor_f", "ac_kw"];
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(Error::History(format!("unexpected header {headers:?}")));
        }
        let rows: Vec<CsvRow> = rdr.deserialize().collect::<std::result::Result<_, _>>()?;
        if rows.len() < 2 {
            return Err(Error::History(format!(
                "need at least 2 rows, got {}",
                rows.len()
            )));
        }
        let step = rows[1].timestamp - rows[0].timestamp;
        for (i, pair) in rows.windows(2).enumerate() {
            let gap = pair[1].timestamp - pair[0].timestamp;
            if gap != step {
                return Err(Error::History(format!(
                    "irregular spacing after row {i}: {gap}s instead of {step}s"
                )));
            }
        }
        let start = rows[0].timestamp;
        let rows = rows
            .into_iter()
            .map(|r| MeteringRow {
                indoor_f: r.indoor_f,
                outdoor_f: r.outdoor_f,
                ac_kw: r.ac_kw,
            })
            .collect();
        Self::new(start, step, rows)
    }

    /// Hex SHA-256 over the canonical CSV encoding.
    pub fn digest(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory csv");
        hex::encode(Sha256::digest(&buf))
    }
}
