//! One-step forecast runs: drive each model over an evaluation window and
//! collect a [`ForecastArchive`].
//!
//! Every run follows the same shape: fit (or warm up) on the records up to
//! `fit_end`, then walk the records inside the evaluation window producing a
//! forecast for each target before its observation is revealed. Online
//! models keep updating through the window; batch models optionally refit on
//! the expanded history at a configurable cadence. Targets whose lags cross
//! a grid gap are skipped rather than imputed.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::archive::{ArchiveRecord, ForecastArchive};
use crate::batch::{fit_batch, BatchFit, FitOptions};
use crate::benchmarks::{
    nar_fit, nar_predict, NarMode, NarState, OnlineClimatology, PersistenceDressing,
    RecursiveNar, DEFAULT_CLIMATOLOGY_LEVELS, DEFAULT_ERROR_WINDOW,
};
use crate::data::{coarsen, CoarseningConfig, PowerSeries};
use crate::error::{Error, Result};
use crate::gln::{transform_raw, GlnPredictive, PointRule};
use crate::predictive::{EmpiricalPredictive, Predictive};
use crate::recursive::{step as recursive_step, RecursiveConfig, RecursiveState};

/// The seven forecasters of the benchmark suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Persistence,
    ProbPersistence,
    Climatology,
    NarBatch,
    NarRecursive,
    GlnarBatch,
    GlnarRecursive,
}

impl ModelKind {
    pub const ALL: [ModelKind; 7] = [
        ModelKind::Persistence,
        ModelKind::ProbPersistence,
        ModelKind::Climatology,
        ModelKind::NarBatch,
        ModelKind::NarRecursive,
        ModelKind::GlnarBatch,
        ModelKind::GlnarRecursive,
    ];

    pub fn id(self) -> &'static str {
        match self {
            ModelKind::Persistence => "persistence",
            ModelKind::ProbPersistence => "prob-persistence",
            ModelKind::Climatology => "climatology",
            ModelKind::NarBatch => "nar-batch",
            ModelKind::NarRecursive => "nar-recursive",
            ModelKind::GlnarBatch => "glnar-batch",
            ModelKind::GlnarRecursive => "glnar-recursive",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.id() == s)
            .ok_or_else(|| Error::Config(format!("unknown model {s:?}")))
    }

    /// Orders lags into the conditional mean.
    pub fn uses_p(self) -> bool {
        matches!(
            self,
            ModelKind::NarBatch
                | ModelKind::NarRecursive
                | ModelKind::GlnarBatch
                | ModelKind::GlnarRecursive
        )
    }

    /// Clips observations before fitting.
    pub fn uses_delta(self) -> bool {
        matches!(self, ModelKind::GlnarBatch | ModelKind::GlnarRecursive)
    }

    /// Forgets past observations exponentially.
    pub fn uses_alpha(self) -> bool {
        matches!(self, ModelKind::NarRecursive | ModelKind::GlnarRecursive)
    }

    /// Refits on the expanded history rather than updating online.
    pub fn is_batch(self) -> bool {
        matches!(self, ModelKind::NarBatch | ModelKind::GlnarBatch)
    }
}

/// Hyperparameters and run controls shared by the forecasters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ModelParams {
    pub p: usize,
    pub delta: f64,
    pub alpha: f64,
    pub point_rule: PointRule,
    /// Persistence-error window of the probabilistic persistence.
    pub error_window: usize,
    /// Climatology quantile grid size.
    pub climatology_levels: usize,
    /// Batch models refit on the expanded history every this many targets;
    /// zero keeps the initial fit for the whole window.
    pub refit_every: usize,
    pub fit_options: FitOptions,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            p: 2,
            delta: 0.005,
            alpha: 0.999,
            point_rule: PointRule::Median,
            error_window: DEFAULT_ERROR_WINDOW,
            climatology_levels: DEFAULT_CLIMATOLOGY_LEVELS,
            refit_every: 0,
            fit_options: FitOptions::default(),
        }
    }
}

/// Evaluation window: targets with fit_end < timestamp <= eval_end.
#[derive(Debug, Clone, Copy)]
pub struct EvalWindow {
    pub fit_end: DateTime<Utc>,
    pub eval_end: DateTime<Utc>,
}

/// Run one model over the window and archive its one-step forecasts.
pub fn forecast_archive(
    kind: ModelKind,
    series: &PowerSeries,
    window: EvalWindow,
    params: &ModelParams,
) -> Result<ForecastArchive> {
    if window.fit_end >= window.eval_end {
        return Err(Error::Config("evaluation window must follow the fit period".into()));
    }
    let records = match kind {
        ModelKind::Persistence => persistence_run(series, window)?,
        ModelKind::ProbPersistence => prob_persistence_run(series, window, params)?,
        ModelKind::Climatology => climatology_run(series, window, params)?,
        ModelKind::NarBatch => nar_batch_run(series, window, params)?,
        ModelKind::NarRecursive => nar_recursive_run(series, window, params)?,
        ModelKind::GlnarBatch => glnar_batch_run(series, window, params)?,
        ModelKind::GlnarRecursive => glnar_recursive_run(series, window, params)?,
    };
    if records.is_empty() {
        return Err(Error::Estimation(format!(
            "{} produced no forecasts inside the evaluation window",
            kind.id()
        )));
    }
    ForecastArchive::new(kind.id(), records)
}

fn in_window(ts: DateTime<Utc>, window: EvalWindow) -> bool {
    ts > window.fit_end && ts <= window.eval_end
}

/// Length of the consecutive-grid run ending at each index.
fn run_lengths(series: &PowerSeries) -> Vec<usize> {
    let mut runs = vec![0usize; series.len()];
    for i in 0..series.len() {
        runs[i] = if i > 0 && series.contiguous_with_previous(i) { runs[i - 1] + 1 } else { 1 };
    }
    runs
}

fn persistence_run(series: &PowerSeries, window: EvalWindow) -> Result<Vec<ArchiveRecord>> {
    let records = series.records();
    let mut out = Vec::new();
    for i in 1..records.len() {
        if !in_window(records[i].timestamp, window) || !series.contiguous_with_previous(i) {
            continue;
        }
        let point = records[i - 1].value;
        out.push(ArchiveRecord::new(
            records[i].timestamp,
            records[i].value,
            point,
            Predictive::Empirical(EmpiricalPredictive::point_mass(point)),
        ));
    }
    Ok(out)
}

fn prob_persistence_run(
    series: &PowerSeries,
    window: EvalWindow,
    params: &ModelParams,
) -> Result<Vec<ArchiveRecord>> {
    let records = series.records();
    let mut dressing = PersistenceDressing::new(params.error_window)?;
    let mut out = Vec::new();
    for i in 1..records.len() {
        if !series.contiguous_with_previous(i) {
            continue;
        }
        let origin = records[i - 1].value;
        if in_window(records[i].timestamp, window) {
            out.push(ArchiveRecord::new(
                records[i].timestamp,
                records[i].value,
                origin,
                Predictive::Empirical(dressing.predictive(origin)),
            ));
        }
        // errors accumulate continuously from the start of the history
        dressing.observe_error(records[i].value - origin);
    }
    Ok(out)
}

fn climatology_run(
    series: &PowerSeries,
    window: EvalWindow,
    params: &ModelParams,
) -> Result<Vec<ArchiveRecord>> {
    let records = series.records();
    let train: Vec<f64> = records
        .iter()
        .filter(|r| r.timestamp <= window.fit_end)
        .map(|r| r.value)
        .collect();
    let mut clim = OnlineClimatology::new(&train, params.climatology_levels)?;
    let mut out = Vec::new();
    for r in records.iter().filter(|r| r.timestamp > window.fit_end) {
        if in_window(r.timestamp, window) {
            let predictive = Predictive::Empirical(clim.predictive());
            let point = predictive.quantile(0.5)?;
            out.push(ArchiveRecord::new(r.timestamp, r.value, point, predictive));
        }
        clim.observe(r.value);
    }
    Ok(out)
}

fn nar_batch_run(
    series: &PowerSeries,
    window: EvalWindow,
    params: &ModelParams,
) -> Result<Vec<ArchiveRecord>> {
    let records = series.records();
    let runs = run_lengths(series);
    let mut state: Option<NarState> = None;
    let mut out = Vec::new();
    let mut targets_seen = 0usize;
    for i in 1..records.len() {
        if !in_window(records[i].timestamp, window) || runs[i] < params.p + 1 {
            continue;
        }
        let refit_due = state.is_none()
            || (params.refit_every > 0 && targets_seen % params.refit_every == 0);
        if refit_due {
            let history = if params.refit_every > 0 {
                series.slice_time(None, records[i - 1].timestamp)
            } else {
                series.slice_time(None, window.fit_end)
            };
            state = Some(nar_fit(&history, params.p, NarMode::Batch)?.state);
        }
        targets_seen += 1;
        let lags: Vec<f64> = (1..=params.p).map(|k| records[i - k].value).collect();
        let (point, predictive) = nar_predict(state.as_ref().unwrap(), &lags)?;
        out.push(ArchiveRecord::new(records[i].timestamp, records[i].value, point, predictive));
    }
    Ok(out)
}

fn nar_recursive_run(
    series: &PowerSeries,
    window: EvalWindow,
    params: &ModelParams,
) -> Result<Vec<ArchiveRecord>> {
    let records = series.records();
    let mut model = RecursiveNar::new(params.p, params.alpha)?;
    let mut out = Vec::new();
    for (i, r) in records.iter().enumerate() {
        if i > 0 && !series.contiguous_with_previous(i) {
            model.reset_lags();
        }
        if in_window(r.timestamp, window) && model.lags_full() && series.contiguous_with_previous(i)
        {
            let (point, predictive) = nar_predict(&model.state(), &model.lag_values())?;
            out.push(ArchiveRecord::new(r.timestamp, r.value, point, predictive));
        }
        model.step(r.value);
    }
    Ok(out)
}

fn glnar_batch_run(
    series: &PowerSeries,
    window: EvalWindow,
    params: &ModelParams,
) -> Result<Vec<ArchiveRecord>> {
    let clipped = coarsen(series, CoarseningConfig::new(params.delta)?);
    let records = series.records();
    let clipped_records = clipped.records();
    let runs = run_lengths(series);
    let mut fit: Option<BatchFit> = None;
    let mut out = Vec::new();
    let mut targets_seen = 0usize;
    for i in 1..records.len() {
        if !in_window(records[i].timestamp, window) || runs[i] < params.p + 1 {
            continue;
        }
        let refit_due =
            fit.is_none() || (params.refit_every > 0 && targets_seen % params.refit_every == 0);
        if refit_due {
            let history = if params.refit_every > 0 {
                clipped.slice_time(None, records[i - 1].timestamp)
            } else {
                clipped.slice_time(None, window.fit_end)
            };
            fit = Some(fit_batch(&history, params.p, &params.fit_options)?);
        }
        targets_seen += 1;
        let theta = &fit.as_ref().unwrap().theta;
        let mu: f64 = theta
            .phi()
            .iter()
            .enumerate()
            .map(|(k, c)| c * transform_raw(clipped_records[i - 1 - k].value, theta.nu()))
            .sum();
        let pred = GlnPredictive::new(mu, theta.sigma2(), theta.nu())?;
        let point = pred.point(params.point_rule, params.delta);
        out.push(ArchiveRecord::new(
            records[i].timestamp,
            records[i].value,
            point,
            Predictive::Gln(pred),
        ));
    }
    Ok(out)
}

fn glnar_recursive_run(
    series: &PowerSeries,
    window: EvalWindow,
    params: &ModelParams,
) -> Result<Vec<ArchiveRecord>> {
    let clipped = coarsen(series, CoarseningConfig::new(params.delta)?);
    let records = series.records();
    let clipped_records = clipped.records();
    let config = RecursiveConfig::new(params.p, params.alpha, params.delta)?;
    let mut state = RecursiveState::new(&config);
    let mut out = Vec::new();
    for i in 0..records.len() {
        if i > 0 && !series.contiguous_with_previous(i) {
            state.reset_lags();
        }
        if in_window(records[i].timestamp, window)
            && state.lags_full()
            && series.contiguous_with_previous(i)
        {
            let pred = state.predictive()?;
            let point = pred.point(params.point_rule, params.delta);
            out.push(ArchiveRecord::new(
                records[i].timestamp,
                records[i].value,
                point,
                Predictive::Gln(pred),
            ));
        }
        recursive_step(&mut state, clipped_records[i].value)?;
    }
    Ok(out)
}
