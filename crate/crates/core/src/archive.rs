//! Forecast archives: per-timestamp observations, point forecasts and
//! predictive laws for one model over one period, with file round-tripping.
//!
//! On disk an archive is a pair of CSVs: the main file carries timestamp,
//! observation, point forecast and the standard quantile levels; a companion
//! matrix file tabulates each record's CDF on the shared scoring grid.

use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::predictive::{CdfTable, Predictive};

/// Number of points of the uniform scoring grid over [0, 1].
pub const SCORING_GRID_POINTS: usize = 1001;

/// Nominal quantile levels stored in archives and used for reliability
/// diagrams; they bracket the 95% and 75% central intervals.
pub const QUANTILE_LEVELS: [f64; 13] =
    [0.025, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.975];

/// The uniform scoring grid over [0, 1].
pub fn scoring_grid() -> Vec<f64> {
    (0..SCORING_GRID_POINTS)
        .map(|i| i as f64 / (SCORING_GRID_POINTS - 1) as f64)
        .collect()
}

/// One forecast target: what happened and what the model said beforehand.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArchiveRecord {
    pub timestamp: DateTime<Utc>,
    pub observation: f64,
    pub point: f64,
    pub predictive: Predictive,
    /// Quantiles as stored in an archive file, aligned with
    /// [`QUANTILE_LEVELS`]; `None` for in-memory archives.
    pub quantiles: Option<Vec<f64>>,
}

impl ArchiveRecord {
    pub fn new(
        timestamp: DateTime<Utc>,
        observation: f64,
        point: f64,
        predictive: Predictive,
    ) -> Self {
        ArchiveRecord { timestamp, observation, point, predictive, quantiles: None }
    }

    /// Quantile at one of the standard levels, preferring stored values.
    pub fn quantile(&self, tau: f64) -> Result<f64> {
        if let Some(stored) = &self.quantiles {
            if let Some(idx) = QUANTILE_LEVELS.iter().position(|&l| (l - tau).abs() < 1e-12) {
                return Ok(stored[idx]);
            }
        }
        self.predictive.quantile(tau)
    }
}

/// All forecasts of one model over one evaluation period.
#[derive(Debug, Clone)]
pub struct ForecastArchive {
    pub model_id: String,
    pub records: Vec<ArchiveRecord>,
}

impl ForecastArchive {
    pub fn new(model_id: impl Into<String>, records: Vec<ArchiveRecord>) -> Result<Self> {
        let model_id = model_id.into();
        for r in &records {
            if !(0.0..=1.0).contains(&r.observation) {
                return Err(Error::Data(format!(
                    "observation {} at {} outside [0, 1]",
                    r.observation, r.timestamp
                )));
            }
        }
        Ok(ForecastArchive { model_id, records })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    fn main_path(dir: &Path, model_id: &str) -> PathBuf {
        dir.join(format!("{model_id}_archive.csv"))
    }

    fn cdf_path(dir: &Path, model_id: &str) -> PathBuf {
        dir.join(format!("{model_id}_cdf.csv"))
    }

    /// Write the archive pair into `dir`.
    pub fn write_files(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut main = csv::Writer::from_path(Self::main_path(dir, &self.model_id))?;
        let mut header = vec!["timestamp".to_string(), "observation".into(), "point".into()];
        header.extend(QUANTILE_LEVELS.iter().map(|l| format!("q_{l}")));
        main.write_record(&header)?;
        for r in &self.records {
            let mut row = vec![r.timestamp.to_rfc3339(), r.observation.to_string(), r.point.to_string()];
            for (idx, &tau) in QUANTILE_LEVELS.iter().enumerate() {
                let q = match &r.quantiles {
                    Some(stored) => stored[idx],
                    None => r.quantile(tau)?,
                };
                row.push(q.to_string());
            }
            main.write_record(&row)?;
        }
        main.flush()?;

        let grid = scoring_grid();
        let mut cdf = csv::Writer::from_path(Self::cdf_path(dir, &self.model_id))?;
        let mut header = vec!["timestamp".to_string()];
        header.extend(grid.iter().map(|y| format!("{y}")));
        cdf.write_record(&header)?;
        for r in &self.records {
            let mut row = Vec::with_capacity(grid.len() + 1);
            row.push(r.timestamp.to_rfc3339());
            for &y in &grid {
                row.push(r.predictive.cdf(y)?.to_string());
            }
            cdf.write_record(&row)?;
        }
        cdf.flush()?;
        Ok(())
    }

    /// Load the archive pair written by [`ForecastArchive::write_files`];
    /// predictives come back as tabulated CDFs on the scoring grid.
    pub fn read_files(dir: &Path, model_id: &str) -> Result<Self> {
        let main_path = Self::main_path(dir, model_id);
        if !main_path.exists() {
            return Err(Error::Evaluation(format!("missing archive file {}", main_path.display())));
        }
        let mut main = csv::Reader::from_path(&main_path)?;
        let mut records = Vec::new();
        for (i, row) in main.records().enumerate() {
            let line = i + 2;
            let row = row?;
            let parse = |field: usize, name: &str| -> Result<f64> {
                row.get(field)
                    .unwrap_or("")
                    .parse()
                    .map_err(|_| Error::Parse { line, message: format!("bad {name} field") })
            };
            let timestamp = DateTime::parse_from_rfc3339(row.get(0).unwrap_or(""))
                .map_err(|_| Error::Parse { line, message: "bad timestamp".into() })?
                .with_timezone(&Utc);
            let observation = parse(1, "observation")?;
            let point = parse(2, "point")?;
            let mut quantiles = Vec::with_capacity(QUANTILE_LEVELS.len());
            for k in 0..QUANTILE_LEVELS.len() {
                quantiles.push(parse(3 + k, "quantile")?);
            }
            records.push(ArchiveRecord {
                timestamp,
                observation,
                point,
                predictive: Predictive::CdfGrid(CdfTable { values: Vec::new() }),
                quantiles: Some(quantiles),
            });
        }

        let cdf_path = Self::cdf_path(dir, model_id);
        if !cdf_path.exists() {
            return Err(Error::Evaluation(format!("missing cdf file {}", cdf_path.display())));
        }
        let mut cdf = csv::Reader::from_path(&cdf_path)?;
        for (i, row) in cdf.records().enumerate() {
            let line = i + 2;
            let row = row?;
            if i >= records.len() {
                return Err(Error::Parse { line, message: "more cdf rows than archive rows".into() });
            }
            let mut values = Vec::with_capacity(SCORING_GRID_POINTS);
            for field in row.iter().skip(1) {
                values.push(field.parse().map_err(|_| Error::Parse {
                    line,
                    message: "bad cdf value".into(),
                })?);
            }
            if values.len() != SCORING_GRID_POINTS {
                return Err(Error::Parse {
                    line,
                    message: format!("expected {SCORING_GRID_POINTS} cdf values, got {}", values.len()),
                });
            }
            records[i].predictive = Predictive::CdfGrid(CdfTable { values });
        }
        ForecastArchive::new(model_id.to_string(), records)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gln::GlnPredictive;
    use crate::sim::sim_epoch;
    use chrono::Duration;

    #[test]
    fn archive_file_round_trip_preserves_scores() {
        let dir = tempfile::tempdir().unwrap();
        let records: Vec<ArchiveRecord> = (0..5)
            .map(|i| {
                let pred = GlnPredictive::new(-0.2 + 0.1 * i as f64, 0.3, 1.4).unwrap();
                ArchiveRecord::new(
                    sim_epoch() + Duration::minutes(10 * i),
                    0.3 + 0.05 * i as f64,
                    pred.median(),
                    Predictive::Gln(pred),
                )
            })
            .collect();
        let archive = ForecastArchive::new("glnar-batch", records).unwrap();
        archive.write_files(dir.path()).unwrap();
        let loaded = ForecastArchive::read_files(dir.path(), "glnar-batch").unwrap();
        assert_eq!(loaded.len(), archive.len());
        for (a, b) in archive.records.iter().zip(&loaded.records) {
            assert_eq!(a.timestamp, b.timestamp);
            assert_eq!(a.observation, b.observation);
            assert_eq!(a.point, b.point);
            // tabulated CDF agrees with the original on the grid
            for &y in &[0.0, 0.25, 0.5, 0.75, 1.0] {
                assert!((a.predictive.cdf(y).unwrap() - b.predictive.cdf(y).unwrap()).abs() < 1e-12);
            }
            // stored quantiles match the generating predictive
            for (&tau, &q) in QUANTILE_LEVELS.iter().zip(b.quantiles.as_ref().unwrap()) {
                assert!((a.predictive.quantile(tau).unwrap() - q).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn missing_archive_is_an_evaluation_error() {
        let dir = tempfile::tempdir().unwrap();
        let err = ForecastArchive::read_files(dir.path(), "nope").unwrap_err();
        match err {
            Error::Evaluation(msg) => assert!(msg.contains("nope_archive.csv")),
            other => panic!("expected evaluation error, got {other:?}"),
        }
    }

    #[test]
    fn out_of_range_observation_rejected() {
        let rec = ArchiveRecord::new(
            sim_epoch(),
            1.5,
            0.5,
            Predictive::Gaussian { mean: 0.5, sigma2: 0.01 },
        );
        assert!(ForecastArchive::new("m", vec![rec]).is_err());
    }
}
