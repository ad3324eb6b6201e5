//! Hourly wind records, per-image mean wind and windrose statistics.

use std::io::Read;
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SECTORS: usize = 16;
pub const SECTOR_WIDTH: f64 = 360.0 / SECTORS as f64;
pub const DEFAULT_CALM_THRESHOLD: f64 = 0.2;
pub const DEFAULT_SPEED_EDGES: [f64; 5] = [0.0, 2.0, 4.0, 6.0, 8.0];

#[derive(Clone, Debug, PartialEq)]
pub struct WindRecord {
    pub timestamp: DateTime<Utc>,
    /// Eastward component, m/s.
    pub u: f64,
    /// Northward component, m/s.
    pub v: f64,
}

#[derive(Deserialize)]
struct RawRecord {
    timestamp: String,
    u: f64,
    v: f64,
}

/// Accepts RFC 3339, a naive `YYYY-MM-DDTHH:MM[:SS]` (read as UTC) or a bare
/// date.
pub fn parse_timestamp(s: &str) -> Result<DateTime<Utc>> {
    let s = s.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Ok(t.with_timezone(&Utc));
    }
    for fmt in [
        "%Y-%m-%dT%H:%M:%S",
        "%Y-%m-%d %H:%M:%S",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M",
    ] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Ok(t.and_utc());
        }
    }
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Ok(d.and_hms_opt(0, 0, 0).expect("midnight").and_utc());
    }
    Err(Error::Time(format!("unrecognized timestamp '{s}'")))
}

/// Reads `timestamp,u,v` CSV.
pub fn read_wind_csv_from(reader: impl Read) -> Result<Vec<WindRecord>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<RawRecord>().enumerate() {
        let line = i + 2;
        let raw = row.map_err(|e| Error::parse(line, None, e.to_string()))?;
        if !(raw.u.is_finite() && raw.v.is_finite()) {
            return Err(Error::parse(line, None, "wind components must be finite"));
        }
        let timestamp = parse_timestamp(&raw.timestamp)
            .map_err(|e| Error::parse(line, Some(1), e.to_string()))?;
        out.push(WindRecord {
            timestamp,
            u: raw.u,
            v: raw.v,
        });
    }
    Ok(out)
}

pub fn read_wind_csv(path: impl AsRef<Path>) -> Result<Vec<WindRecord>> {
    read_wind_csv_from(std::fs::File::open(path)?)
}

/// Half-open interval `[start, end)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TimeWindow {
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
}

impl TimeWindow {
    pub fn contains(&self, t: DateTime<Utc>) -> bool {
        self.start <= t && t < self.end
    }

    /// The UTC day starting at `date`.
    pub fn day(date: NaiveDate) -> Self {
        let start = date.and_hms_opt(0, 0, 0).expect("midnight").and_utc();
        TimeWindow {
            start,
            end: start + chrono::Duration::days(1),
        }
    }
}

/// Mean `(u, v)` over records inside `window`.
pub fn mean_wind(records: &[WindRecord], window: TimeWindow) -> Result<[f64; 2]> {
    let (mut su, mut sv, mut count) = (0.0, 0.0, 0usize);
    for r in records.iter().filter(|r| window.contains(r.timestamp)) {
        su += r.u;
        sv += r.v;
        count += 1;
    }
    if count == 0 {
        return Err(Error::Precondition(format!(
            "no wind records between {} and {}",
            window.start, window.end
        )));
    }
    Ok([su / count as f64, sv / count as f64])
}

/// Meteorological direction the wind blows from, degrees clockwise from
/// north in `[0, 360)`.
pub fn direction_from(u: f64, v: f64) -> f64 {
    (270.0 - v.atan2(u).to_degrees()).rem_euclid(360.0)
}

/// Sector 0 is centered on north, sector 4 on east.
pub fn sector_of(direction_deg: f64) -> usize {
    (((direction_deg + SECTOR_WIDTH / 2.0) / SECTOR_WIDTH).floor() as usize) % SECTORS
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindroseConfig {
    /// Lower edges of the speed bins; the last bin is open-ended.
    pub speed_edges: Vec<f64>,
    pub calm_threshold: f64,
}

impl Default for WindroseConfig {
    fn default() -> Self {
        WindroseConfig {
            speed_edges: DEFAULT_SPEED_EDGES.to_vec(),
            calm_threshold: DEFAULT_CALM_THRESHOLD,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WindroseHistogram {
    pub speed_edges: Vec<f64>,
    /// Fraction of non-calm records per sector.
    pub frequencies: [f64; SECTORS],
    /// `counts[sector][speed_bin]`.
    pub counts: Vec<Vec<u64>>,
    pub calm: u64,
    pub total: u64,
}

impl WindroseHistogram {
    pub fn sector_center(sector: usize) -> f64 {
        sector as f64 * SECTOR_WIDTH
    }

    pub fn speed_bin_label(&self, b: usize) -> String {
        match self.speed_edges.get(b + 1) {
            Some(hi) => format!("speed_{}_{}", self.speed_edges[b], hi),
            None => format!("speed_{}_inf", self.speed_edges[b]),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("sector,direction_deg,frequency,count");
        for b in 0..self.speed_edges.len() {
            out.push(',');
            out.push_str(&self.speed_bin_label(b));
        }
        out.push('\n');
        for s in 0..SECTORS {
            let count: u64 = self.counts[s].iter().sum();
            out.push_str(&format!(
                "{s},{},{:?},{count}",
                WindroseHistogram::sector_center(s),
                self.frequencies[s]
            ));
            for c in &self.counts[s] {
                out.push_str(&format!(",{c}"));
            }
            out.push('\n');
        }
        out
    }
}

pub fn windrose(records: &[WindRecord]) -> WindroseHistogram {
    windrose_with(records, &WindroseConfig::default())
}

pub fn windrose_with(records: &[WindRecord], cfg: &WindroseConfig) -> WindroseHistogram {
    let bins = cfg.speed_edges.len().max(1);
    let mut counts = vec![vec![0u64; bins]; SECTORS];
    let mut calm = 0;
    for r in records {
        let speed = r.u.hypot(r.v);
        if speed < cfg.calm_threshold {
            calm += 1;
            continue;
        }
        let sector = sector_of(direction_from(r.u, r.v));
        let bin = cfg
            .speed_edges
            .iter()
            .rposition(|&e| speed >= e)
            .unwrap_or(0);
        counts[sector][bin] += 1;
    }
    let moving: u64 = counts.iter().flatten().sum();
    let mut frequencies = [0.0; SECTORS];
    if moving > 0 {
        for (f, c) in frequencies.iter_mut().zip(&counts) {
            *f = c.iter().sum::<u64>() as f64 / moving as f64;
        }
    }
    WindroseHistogram {
        speed_edges: cfg.speed_edges.clone(),
        frequencies,
        counts,
        calm,
        total: records.len() as u64,
    }
}
