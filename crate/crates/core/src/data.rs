//! Power time-series ingestion, normalization, clipping and period splits.
//!
//! Observations are dimensionless fractions of nominal power on a fixed
//! 10-minute-style grid. Missing timestamps are represented by absence (a
//! gap), never by imputation.

use std::collections::BTreeMap;
use std::io::Read;
use std::ops::Range;
use std::path::Path;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack for values pushed marginally outside [0, 1] by floating-point scaling.
const BOUND_SNAP_TOLERANCE: f64 = 1e-6;

/// A single timestamped observation in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerRecord {
    pub timestamp: DateTime<Utc>,
    pub value: f64,
}

impl PowerRecord {
    pub fn new(timestamp: DateTime<Utc>, value: f64) -> Result<Self> {
        let value = snap_to_unit(value)?;
        Ok(PowerRecord { timestamp, value })
    }
}

/// Snap values within `BOUND_SNAP_TOLERANCE` of the bounds; reject anything further out.
fn snap_to_unit(value: f64) -> Result<f64> {
    if !value.is_finite() {
        return Err(Error::Data(format!("non-finite power value {value}")));
    }
    if value < 0.0 {
        if value >= -BOUND_SNAP_TOLERANCE {
            return Ok(0.0);
        }
        return Err(Error::Data(format!("power value {value} below zero")));
    }
    if value > 1.0 {
        if value <= 1.0 + BOUND_SNAP_TOLERANCE {
            return Ok(1.0);
        }
        return Err(Error::Data(format!("power value {value} above nominal")));
    }
    Ok(value)
}

/// An ordered series of observations on a fixed-resolution grid.
///
/// Timestamps are strictly increasing; a missing grid step is a gap, detected
/// by comparing consecutive timestamps against the resolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSeries {
    records: Vec<PowerRecord>,
    resolution: Duration,
}

impl PowerSeries {
    pub fn new(records: Vec<PowerRecord>, resolution: Duration) -> Result<Self> {
        if resolution <= Duration::zero() {
            return Err(Error::Config("resolution must be positive".into()));
        }
        for pair in records.windows(2) {
            if pair[1].timestamp <= pair[0].timestamp {
                return Err(Error::Data(format!(
                    "timestamps not strictly increasing at {}",
                    pair[1].timestamp
                )));
            }
        }
        Ok(PowerSeries { records, resolution })
    }

    /// Series with synthetic contiguous timestamps, for simulated data.
    pub fn from_values(
        values: Vec<f64>,
        start: DateTime<Utc>,
        resolution: Duration,
    ) -> Result<Self> {
        let records = values
            .into_iter()
            .enumerate()
            .map(|(i, v)| PowerRecord::new(start + resolution * i as i32, v))
            .collect::<Result<Vec<_>>>()?;
        PowerSeries::new(records, resolution)
    }

    pub fn records(&self) -> &[PowerRecord] {
        &self.records
    }

    pub fn resolution(&self) -> Duration {
        self.resolution
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn values(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.value).collect()
    }

    /// Index ranges of maximal runs of consecutive grid timestamps.
    pub fn segments(&self) -> Vec<Range<usize>> {
        let mut out = Vec::new();
        let mut start = 0;
        for i in 1..self.records.len() {
            if self.records[i].timestamp - self.records[i - 1].timestamp != self.resolution {
                out.push(start..i);
                start = i;
            }
        }
        if !self.records.is_empty() {
            out.push(start..self.records.len());
        }
        out
    }

    /// True when records i-1 and i sit on adjacent grid steps.
    pub fn contiguous_with_previous(&self, i: usize) -> bool {
        i > 0 && self.records[i].timestamp - self.records[i - 1].timestamp == self.resolution
    }

    /// Sub-series over a timestamp window (half-open on the left).
    pub fn slice_time(&self, after: Option<DateTime<Utc>>, upto: DateTime<Utc>) -> PowerSeries {
        let records = self
            .records
            .iter()
            .filter(|r| after.is_none_or(|a| r.timestamp > a) && r.timestamp <= upto)
            .copied()
            .collect();
        PowerSeries { records, resolution: self.resolution }
    }

    /// Write as two-column CSV (`timestamp,value`), RFC 3339 timestamps.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["timestamp", "value"]).map_err(csv_io)?;
        for r in &self.records {
            w.write_record([r.timestamp.to_rfc3339(), r.value.to_string()])
                .map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Read the two-column CSV written by [`PowerSeries::write_csv`].
    pub fn read_csv(path: &Path, resolution: Duration) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().from_path(path)?;
        let mut records = Vec::new();
        for (i, row) in reader.records().enumerate() {
            let line = i + 2; // header is line 1
            let row = row.map_err(|e| Error::Parse { line, message: e.to_string() })?;
            let ts = parse_timestamp(row.get(0).unwrap_or(""), line)?;
            let value: f64 = row
                .get(1)
                .unwrap_or("")
                .trim()
                .parse()
                .map_err(|_| Error::Parse {
                    line,
                    message: format!("cannot parse power value {:?}", row.get(1).unwrap_or("")),
                })?;
            records.push(PowerRecord::new(ts, value)?);
        }
        PowerSeries::new(records, resolution)
    }
}

fn csv_io(e: csv::Error) -> Error {
    Error::Data(format!("csv write failed: {e}"))
}

fn parse_timestamp(raw: &str, line: usize) -> Result<DateTime<Utc>> {
    DateTime::parse_from_rfc3339(raw.trim())
        .map(|t| t.with_timezone(&Utc))
        .map_err(|_| Error::Parse { line, message: format!("cannot parse timestamp {raw:?}") })
}

/// Clipping threshold pulling observations into [delta, 1 - delta].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoarseningConfig {
    delta: f64,
}

impl CoarseningConfig {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < 0.5) {
            return Err(Error::Config(format!("delta must lie in (0, 0.5), got {delta}")));
        }
        Ok(CoarseningConfig { delta })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }
}

/// Boundary timestamps of the train / cross-validation / test partition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub train_end: DateTime<Utc>,
    pub cv_end: DateTime<Utc>,
    pub test_end: DateTime<Utc>,
}

impl SplitConfig {
    pub fn new(
        train_end: DateTime<Utc>,
        cv_end: DateTime<Utc>,
        test_end: DateTime<Utc>,
    ) -> Result<Self> {
        if !(train_end < cv_end && cv_end < test_end) {
            return Err(Error::Config(
                "split boundaries must satisfy train_end < cv_end < test_end".into(),
            ));
        }
        Ok(SplitConfig { train_end, cv_end, test_end })
    }
}

/// Load a wide-format wind farm CSV and scale each turbine by nominal power.
///
/// Layout: first column an RFC 3339 timestamp, one column per turbine id,
/// empty cells meaning the turbine was unavailable. `nominal_powers` maps the
/// turbine ids of the header to capacities in the same unit as the raw cells.
pub fn load_farm_csv<R: Read>(
    input: R,
    nominal_powers: &BTreeMap<String, f64>,
    resolution: Duration,
) -> Result<BTreeMap<String, PowerSeries>> {
    let mut reader = csv::ReaderBuilder::new().flexible(false).from_reader(input);
    let headers = reader
        .headers()
        .map_err(|e| Error::Parse { line: 1, message: e.to_string() })?
        .clone();
    if headers.len() < 2 {
        return Err(Error::Config("farm csv needs a timestamp column and at least one turbine".into()));
    }
    let turbine_ids: Vec<String> = headers.iter().skip(1).map(|s| s.trim().to_string()).collect();
    let mut capacities = Vec::with_capacity(turbine_ids.len());
    for id in &turbine_ids {
        match nominal_powers.get(id) {
            Some(&cap) if cap > 0.0 => capacities.push(cap),
            Some(&cap) => {
                return Err(Error::Config(format!("turbine {id} has non-positive nominal power {cap}")))
            }
            None => return Err(Error::Config(format!("unknown turbine id {id}: no nominal power entry"))),
        }
    }

    let mut columns: Vec<Vec<PowerRecord>> = vec![Vec::new(); turbine_ids.len()];
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| Error::Parse { line, message: e.to_string() })?;
        if row.len() != headers.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", headers.len(), row.len()),
            });
        }
        let ts = parse_timestamp(row.get(0).unwrap(), line)?;
        for (k, cell) in row.iter().skip(1).enumerate() {
            let cell = cell.trim();
            if cell.is_empty() {
                continue; // gap
            }
            let raw: f64 = cell.parse().map_err(|_| Error::Parse {
                line,
                message: format!("cannot parse power cell {cell:?} for turbine {}", turbine_ids[k]),
            })?;
            columns[k].push(PowerRecord::new(ts, raw / capacities[k]).map_err(|e| match e {
                Error::Data(msg) => Error::Data(format!("line {line}, turbine {}: {msg}", turbine_ids[k])),
                other => other,
            })?);
        }
    }

    let mut out = BTreeMap::new();
    for (id, records) in turbine_ids.into_iter().zip(columns) {
        out.insert(id, PowerSeries::new(records, resolution)?);
    }
    Ok(out)
}

/// [`load_farm_csv`] from a file path.
pub fn load_farm_csv_path(
    path: &Path,
    nominal_powers: &BTreeMap<String, f64>,
    resolution: Duration,
) -> Result<BTreeMap<String, PowerSeries>> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
    load_farm_csv(file, nominal_powers, resolution)
}

/// Read a two-column capacity table (`turbine_id,nominal`).
pub fn load_capacities(path: &Path) -> Result<BTreeMap<String, f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .from_path(path)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
    let mut out = BTreeMap::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| Error::Parse { line, message: e.to_string() })?;
        let id = row.get(0).unwrap_or("").trim().to_string();
        let cap: f64 = row.get(1).unwrap_or("").trim().parse().map_err(|_| Error::Parse {
            line,
            message: format!("cannot parse nominal power {:?}", row.get(1).unwrap_or("")),
        })?;
        out.insert(id, cap);
    }
    Ok(out)
}

/// Farm-average series: per-timestamp mean of the turbines reporting there.
///
/// A timestamp with no reporting turbine is dropped (it becomes a gap).
pub fn aggregate_turbines<'a, I>(series: I) -> Result<PowerSeries>
where
    I: IntoIterator<Item = &'a PowerSeries>,
{
    let mut iter = series.into_iter().peekable();
    let resolution = match iter.peek() {
        Some(s) => s.resolution(),
        None => return Err(Error::Config("cannot aggregate an empty turbine collection".into())),
    };
    let mut sums: BTreeMap<DateTime<Utc>, (f64, usize)> = BTreeMap::new();
    for s in iter {
        if s.resolution() != resolution {
            return Err(Error::Config("turbine series disagree on resolution".into()));
        }
        for r in s.records() {
            let entry = sums.entry(r.timestamp).or_insert((0.0, 0));
            entry.0 += r.value;
            entry.1 += 1;
        }
    }
    let records = sums
        .into_iter()
        .map(|(ts, (sum, n))| PowerRecord::new(ts, sum / n as f64))
        .collect::<Result<Vec<_>>>()?;
    PowerSeries::new(records, resolution)
}

/// Clip every value into [delta, 1 - delta], keeping the output inside (0, 1).
pub fn coarsen(series: &PowerSeries, config: CoarseningConfig) -> PowerSeries {
    let delta = config.delta();
    let records = series
        .records()
        .iter()
        .map(|r| PowerRecord { timestamp: r.timestamp, value: r.value.clamp(delta, 1.0 - delta) })
        .collect();
    PowerSeries { records, resolution: series.resolution() }
}

/// Partition a series into train / cross-validation / test sub-series.
///
/// Windows are left-open, right-closed on the boundary timestamps; records
/// after `test_end` are dropped.
pub fn split(series: &PowerSeries, config: &SplitConfig) -> Result<(PowerSeries, PowerSeries, PowerSeries)> {
    let train = series.slice_time(None, config.train_end);
    let cv = series.slice_time(Some(config.train_end), config.cv_end);
    let test = series.slice_time(Some(config.cv_end), config.test_end);
    for (name, part) in [("train", &train), ("cv", &cv), ("test", &test)] {
        if part.is_empty() {
            return Err(Error::Config(format!("{name} partition is empty")));
        }
    }
    Ok((train, cv, test))
}
