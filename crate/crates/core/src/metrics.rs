//! Deterministic and probabilistic forecast verification.
//!
//! The probabilistic scores all live on a shared 1001-point uniform grid over
//! [0, 1]: the Brier score is the mean squared CDF error at a threshold, and
//! the CRPS integrates that curve. Per-record CRPS integration splits the
//! cell containing the observation exactly, so deterministic forecasts score
//! their absolute error without discretization bias; step CDFs (ensembles)
//! are integrated exactly across their jumps.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::archive::{scoring_grid, ArchiveRecord, ForecastArchive, QUANTILE_LEVELS};
use crate::error::{Error, Result};
use crate::predictive::{EmpiricalPredictive, Predictive};

/// Tolerated CDF wiggle before a record is declared non-monotone.
const MONOTONE_SLACK: f64 = 1e-9;

/// Root mean square point-forecast error, in percent of nominal power.
pub fn rmse(archive: &ForecastArchive) -> Result<f64> {
    if archive.is_empty() {
        return Err(Error::Evaluation(format!("archive {} is empty", archive.model_id)));
    }
    let mse = archive
        .records
        .iter()
        .map(|r| (r.point - r.observation) * (r.point - r.observation))
        .sum::<f64>()
        / archive.len() as f64;
    Ok(100.0 * mse.sqrt())
}

/// CRPS of one predictive against one observation, in raw units.
///
/// Continuous CDFs go through the shared grid with an exact split at the
/// observation; finite ensembles are integrated exactly over their
/// breakpoints.
pub fn record_crps(predictive: &Predictive, observation: f64) -> Result<f64> {
    if let Some(jumps) = predictive.jump_points() {
        return Ok(ensemble_crps(predictive, jumps, observation));
    }
    let grid = scoring_grid();
    let mut total = 0.0;
    let mut prev_y = grid[0];
    let mut prev_f = predictive.cdf(prev_y)?;
    let mut prev_sq = {
        let ind = if prev_y >= observation { 1.0 } else { 0.0 };
        (prev_f - ind) * (prev_f - ind)
    };
    for &y in &grid[1..] {
        let f = predictive.cdf(y)?;
        if f < prev_f - MONOTONE_SLACK {
            return Err(Error::Evaluation(format!(
                "non-monotone predictive CDF near y = {y}: {prev_f} -> {f}"
            )));
        }
        if prev_y < observation && observation <= y {
            // split the cell at the observation: indicator 0 to its left,
            // 1 to its right
            let f_obs = predictive.cdf(observation)?;
            total += 0.5 * (observation - prev_y) * (prev_sq + f_obs * f_obs);
            let right = (f_obs - 1.0) * (f_obs - 1.0);
            let sq = (f - 1.0) * (f - 1.0);
            total += 0.5 * (y - observation) * (right + sq);
            prev_sq = sq;
        } else {
            let ind = if y >= observation { 1.0 } else { 0.0 };
            let sq = (f - ind) * (f - ind);
            total += 0.5 * (y - prev_y) * (prev_sq + sq);
            prev_sq = sq;
        }
        prev_y = y;
        prev_f = f;
    }
    Ok(total)
}

/// Exact integral of (F - 1(y >= obs))^2 for a step CDF.
fn ensemble_crps(predictive: &Predictive, jumps: &[f64], observation: f64) -> f64 {
    let mut cuts = Vec::with_capacity(jumps.len() + 3);
    cuts.push(0.0);
    cuts.extend(jumps.iter().copied().filter(|j| (0.0..=1.0).contains(j)));
    cuts.push(observation);
    cuts.push(1.0);
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cuts.dedup();
    let mut total = 0.0;
    for pair in cuts.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if b <= a {
            continue;
        }
        // F is constant on [a, b) by right-continuity
        let f = predictive.cdf(a).expect("breakpoints lie in [0, 1]");
        let ind = if a >= observation { 1.0 } else { 0.0 };
        total += (b - a) * (f - ind) * (f - ind);
    }
    total
}

/// Mean CRPS over the archive, in percent.
pub fn crps(archive: &ForecastArchive) -> Result<f64> {
    if archive.is_empty() {
        return Err(Error::Evaluation(format!("archive {} is empty", archive.model_id)));
    }
    let mut total = 0.0;
    for r in &archive.records {
        total += record_crps(&r.predictive, r.observation).map_err(|e| match e {
            Error::Evaluation(msg) => {
                Error::Evaluation(format!("record {} of {}: {msg}", r.timestamp, archive.model_id))
            }
            other => other,
        })?;
    }
    Ok(100.0 * total / archive.len() as f64)
}

/// Brier score curve: mean squared CDF error at each threshold.
pub fn brier_curve(archive: &ForecastArchive, thresholds: &[f64]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(thresholds.len());
    for &y in thresholds {
        let mut total = 0.0;
        for r in &archive.records {
            let f = r.predictive.cdf(y)?;
            let ind = if r.observation <= y { 1.0 } else { 0.0 };
            total += (f - ind) * (f - ind);
        }
        out.push(total / archive.len().max(1) as f64);
    }
    Ok(out)
}

/// Trapezoidal integral of a curve sampled at `thresholds`.
pub fn integrate_curve(thresholds: &[f64], values: &[f64]) -> f64 {
    thresholds
        .windows(2)
        .zip(values.windows(2))
        .map(|(y, v)| 0.5 * (v[0] + v[1]) * (y[1] - y[0]))
        .sum()
}

/// Reliability diagram: empirical frequency of the observation falling below
/// the predicted quantile, per nominal level.
pub fn reliability(archive: &ForecastArchive, levels: &[f64]) -> Result<Vec<(f64, f64)>> {
    if archive.is_empty() {
        return Err(Error::Evaluation(format!("archive {} is empty", archive.model_id)));
    }
    let mut out = Vec::with_capacity(levels.len());
    for &tau in levels {
        let mut hits = 0usize;
        for r in &archive.records {
            if r.observation <= r.quantile(tau)? {
                hits += 1;
            }
        }
        out.push((tau, hits as f64 / archive.len() as f64));
    }
    Ok(out)
}

/// Marginal calibration: mean predictive CDF minus the empirical CDF of the
/// observations, per grid value.
pub fn marginal_calibration(archive: &ForecastArchive, grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    let n = archive.len().max(1) as f64;
    let mut out = Vec::with_capacity(grid.len());
    for &y in grid {
        let mut mean_f = 0.0;
        let mut empirical = 0.0;
        for r in &archive.records {
            mean_f += r.predictive.cdf(y)?;
            if r.observation <= y {
                empirical += 1.0;
            }
        }
        out.push((y, (mean_f - empirical) / n));
    }
    Ok(out)
}

/// A sampled curve point, serialized into reports and plot files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub x: f64,
    pub y: f64,
}

/// Improvement of one model over one baseline, in percent of the baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Improvement {
    pub rmse_pct: f64,
    pub crps_pct: f64,
}

/// Verification summary of one model over one period.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub model_id: String,
    pub records: usize,
    pub rmse_pct: f64,
    pub crps_pct: f64,
    /// Brier score on the shared scoring grid.
    pub brier_curve: Vec<CurvePoint>,
    /// Nominal level vs empirical frequency.
    pub reliability: Vec<CurvePoint>,
    /// Mean predictive CDF minus empirical CDF.
    pub marginal_calibration: Vec<CurvePoint>,
    /// Baseline model id -> percentage improvements of this model.
    pub improvements: BTreeMap<String, Improvement>,
}

/// Default grid of the marginal calibration table.
pub fn calibration_grid() -> Vec<f64> {
    (0..=100).map(|i| i as f64 / 100.0).collect()
}

/// Full evaluation of one archive with the default grids and levels.
pub fn evaluate(archive: &ForecastArchive) -> Result<EvaluationReport> {
    let grid = scoring_grid();
    let brier = brier_curve(archive, &grid)?;
    let rel = reliability(archive, &QUANTILE_LEVELS)?;
    let marginal = marginal_calibration(archive, &calibration_grid())?;
    Ok(EvaluationReport {
        model_id: archive.model_id.clone(),
        records: archive.len(),
        rmse_pct: rmse(archive)?,
        crps_pct: crps(archive)?,
        brier_curve: grid.iter().zip(brier).map(|(&x, y)| CurvePoint { x, y }).collect(),
        reliability: rel.into_iter().map(|(x, y)| CurvePoint { x, y }).collect(),
        marginal_calibration: marginal.into_iter().map(|(x, y)| CurvePoint { x, y }).collect(),
        improvements: BTreeMap::new(),
    })
}

/// Percentage improvements of every report over each named baseline:
/// 100 (baseline - model) / baseline per metric.
pub fn improvement_table(
    reports: &[EvaluationReport],
    baselines: &[String],
) -> Result<BTreeMap<String, BTreeMap<String, Improvement>>> {
    let mut by_id: BTreeMap<&str, &EvaluationReport> = BTreeMap::new();
    for r in reports {
        by_id.insert(&r.model_id, r);
    }
    let mut out = BTreeMap::new();
    for base_id in baselines {
        let base = by_id
            .get(base_id.as_str())
            .ok_or_else(|| Error::Evaluation(format!("baseline report {base_id} missing")))?;
        for r in reports {
            if r.model_id == *base_id {
                continue;
            }
            let entry: &mut BTreeMap<String, Improvement> =
                out.entry(r.model_id.clone()).or_default();
            entry.insert(
                base_id.clone(),
                Improvement {
                    rmse_pct: 100.0 * (base.rmse_pct - r.rmse_pct) / base.rmse_pct,
                    crps_pct: 100.0 * (base.crps_pct - r.crps_pct) / base.crps_pct,
                },
            );
        }
    }
    Ok(out)
}

/// Point mass at the forecast; the degenerate predictive of deterministic
/// models inside probabilistic scoring.
pub fn point_mass(value: f64) -> Predictive {
    Predictive::Empirical(EmpiricalPredictive::point_mass(value))
}

fn _assert_record_is_small(_: &ArchiveRecord) {}
