//! Online maximum-likelihood tracking of the GLNAR parameters.
//!
//! Each new observation contributes its log-density gradient h_t, evaluated
//! at the previous estimate. The information matrix absorbs the outer product
//! with exponential forgetting and the parameters take one Newton-style step:
//!
//!   R_t     = alpha R_{t-1} + (1 - alpha) h_t h_t^T
//!   Theta_t = Theta_{t-1} + (1 - alpha) R_t^{-1} h_t
//!
//! Parameter updates are frozen during a warm-up. When they start, the state
//! is warm-started from a batch fit on the warm-up window and R is rebuilt by
//! replaying the warm-up scores at that fit: far from the optimum the outer
//! products grow with the squared score while the step only grows linearly,
//! so a recursion started at an arbitrary point can stall almost permanently
//! in a bad region. From the warm start on, the updates are exactly the
//! two-step scheme above.
//!
//! Lag values are kept as raw observations and re-transformed at the current
//! shape on every step, so the score stays exact for the parameters in force.

use std::collections::VecDeque;

use chrono::{DateTime, Utc};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::data::PowerSeries;
use crate::error::{Error, Result};
use crate::forget::ForgettingFilter;
use crate::gln::{pow_ratio, transform_raw, u_raw, GlnPredictive, ThetaState, NU_MAX, NU_MIN};

/// Variance floor applied after each update.
const SIGMA2_FLOOR: f64 = 1e-8;

/// Controls of the online estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecursiveConfig {
    pub p: usize,
    /// Forgetting factor in (0, 1); effective sample size is 1 / (1 - alpha).
    pub alpha: f64,
    /// Parameter updates start strictly after this many observations.
    pub warmup: usize,
    /// Clipping threshold of the stream this estimator consumes.
    pub delta: f64,
}

impl RecursiveConfig {
    /// Defaults the warm-up to 100 + p observations.
    pub fn new(p: usize, alpha: f64, delta: f64) -> Result<Self> {
        if p == 0 {
            return Err(Error::Config("lag order p must be at least 1".into()));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Config(format!("forgetting factor must lie in (0, 1), got {alpha}")));
        }
        if !(delta > 0.0 && delta < 0.5) {
            return Err(Error::Config(format!("delta must lie in (0, 0.5), got {delta}")));
        }
        Ok(RecursiveConfig { p, alpha, warmup: 100 + p, delta })
    }

    pub fn with_warmup(mut self, warmup: usize) -> Result<Self> {
        if warmup < self.p + 1 {
            return Err(Error::Config(format!("warmup must be at least p + 1 = {}", self.p + 1)));
        }
        self.warmup = warmup;
        Ok(self)
    }

    /// Effective number of observations 1 / (1 - alpha).
    pub fn effective_sample_size(&self) -> f64 {
        1.0 / (1.0 - self.alpha)
    }
}

/// What a single online step did.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    /// Score absorbed into the information matrix.
    pub absorbed: bool,
    /// Parameters moved.
    pub updated: bool,
    /// Observation dropped because its score was non-finite.
    pub skipped: bool,
}

/// Full state of the online estimator; serializable for checkpoint/resume.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecursiveState {
    p: usize,
    alpha: f64,
    warmup: usize,
    /// (phi_1..phi_p, sigma2, nu).
    theta: DVector<f64>,
    filter: ForgettingFilter,
    /// Raw lag observations, most recent first.
    lags: VecDeque<f64>,
    /// Observations consumed.
    t: usize,
    /// Observations dropped on non-finite scores.
    skipped: usize,
    /// Warm-up observations, split into contiguous segments.
    warmup_history: Vec<Vec<f64>>,
    warm_started: bool,
}

impl RecursiveState {
    pub fn new(config: &RecursiveConfig) -> Self {
        let dim = config.p + 2;
        let mut theta = DVector::zeros(dim);
        theta[config.p] = 1.0; // sigma2
        theta[config.p + 1] = 1.0; // nu
        RecursiveState {
            p: config.p,
            alpha: config.alpha,
            warmup: config.warmup,
            theta,
            filter: ForgettingFilter::new(dim, config.alpha),
            lags: VecDeque::with_capacity(config.p),
            t: 0,
            skipped: 0,
            warmup_history: vec![Vec::new()],
            warm_started: false,
        }
    }

    /// Rebuild a state around explicit parameters and lag values (most
    /// recent first), e.g. to resume from an external checkpoint. Restored
    /// states never warm-start again.
    pub fn with_parameters(
        config: &RecursiveConfig,
        theta: &ThetaState,
        lags: &[f64],
    ) -> Result<Self> {
        if theta.order() != config.p {
            return Err(Error::State(format!(
                "parameter order {} does not match config p = {}",
                theta.order(),
                config.p
            )));
        }
        if lags.len() > config.p {
            return Err(Error::State(format!("more than {} lag values supplied", config.p)));
        }
        let mut state = RecursiveState::new(config);
        for (k, &c) in theta.phi().iter().enumerate() {
            state.theta[k] = c;
        }
        state.theta[config.p] = theta.sigma2();
        state.theta[config.p + 1] = theta.nu();
        for &x in lags.iter().rev() {
            state.push_lag(x);
        }
        state.warm_started = true;
        state.warmup_history.clear();
        Ok(state)
    }

    pub fn order(&self) -> usize {
        self.p
    }

    pub fn theta(&self) -> ThetaState {
        ThetaState::new(
            self.theta.as_slice()[..self.p].to_vec(),
            self.theta[self.p],
            self.theta[self.p + 1],
        )
        .expect("state parameters stay inside their domains")
    }

    pub fn information(&self) -> &nalgebra::DMatrix<f64> {
        self.filter.information()
    }

    /// Observations consumed so far.
    pub fn observations(&self) -> usize {
        self.t
    }

    pub fn skipped(&self) -> usize {
        self.skipped
    }

    pub fn lags_full(&self) -> bool {
        self.lags.len() == self.p
    }

    /// Drop buffered lags across a grid gap.
    pub fn reset_lags(&mut self) {
        self.lags.clear();
        if !self.warm_started && !self.warmup_history.last().is_none_or(|s| s.is_empty()) {
            self.warmup_history.push(Vec::new());
        }
    }

    fn push_lag(&mut self, x: f64) {
        if self.lags.len() == self.p {
            self.lags.pop_back();
        }
        self.lags.push_front(x);
    }

    /// Replace the literal zero start with a batch fit on the warm-up window
    /// and rebuild the information matrix from the warm-up scores at the fit.
    /// Falls back to the unmodified state when the window cannot be fitted.
    fn warm_start(&mut self) {
        use crate::batch::{fit_batch, FitOptions};
        use crate::sim::{sim_epoch, sim_resolution};

        let segments = std::mem::take(&mut self.warmup_history);
        self.warm_started = true;
        let mut values = Vec::new();
        let mut offsets = Vec::new();
        let mut offset = 0i32;
        for seg in &segments {
            for &x in seg {
                values.push(x);
                offsets.push(offset);
                offset += 1;
            }
            offset += 1; // synthetic gap between segments
        }
        let records: Vec<crate::data::PowerRecord> = values
            .iter()
            .zip(&offsets)
            .filter_map(|(&x, &o)| {
                crate::data::PowerRecord::new(sim_epoch() + sim_resolution() * o, x).ok()
            })
            .collect();
        let Ok(series) = PowerSeries::new(records, sim_resolution()) else { return };
        let Ok(fit) = fit_batch(&series, self.p, &FitOptions::default()) else { return };

        for (k, &c) in fit.theta.phi().iter().enumerate() {
            self.theta[k] = c;
        }
        self.theta[self.p] = fit.theta.sigma2().max(SIGMA2_FLOOR);
        self.theta[self.p + 1] = fit.theta.nu();

        // replay the warm-up scores at the fitted parameters
        let mut filter = ForgettingFilter::new(self.p + 2, self.alpha);
        for seg in &segments {
            let mut lags: VecDeque<f64> = VecDeque::with_capacity(self.p);
            for &x in seg {
                if lags.len() == self.p {
                    if let Ok(h) = score_of(self.p, &self.theta, &lags, x) {
                        if h.iter().all(|v| v.is_finite()) {
                            filter.absorb(&h);
                        }
                    }
                    lags.pop_back();
                }
                lags.push_front(x);
            }
        }
        self.filter = filter;
    }

    fn sigma2(&self) -> f64 {
        self.theta[self.p]
    }

    fn nu(&self) -> f64 {
        self.theta[self.p + 1]
    }

    /// One-step-ahead predictive law from the current parameters and lags.
    pub fn predictive(&self) -> Result<GlnPredictive> {
        if !self.lags_full() {
            return Err(Error::State(format!(
                "lag buffer holds {} of {} values",
                self.lags.len(),
                self.p
            )));
        }
        let nu = self.nu();
        let mu: f64 = self
            .lags
            .iter()
            .enumerate()
            .map(|(k, &x)| self.theta[k] * transform_raw(x, nu))
            .sum();
        GlnPredictive::new(mu, self.sigma2(), nu)
    }
}

/// Gradient of the observation log-density at parameters
/// (theta[0..p], sigma2, nu) given lag observations, most recent first.
fn score_of(p: usize, theta: &DVector<f64>, lags: &VecDeque<f64>, x: f64) -> Result<DVector<f64>> {
    if !(x > 0.0 && x < 1.0) {
        return Err(Error::Domain(format!("observation {x} outside (0, 1); clip the stream first")));
    }
    let sigma2 = theta[p];
    let nu = theta[p + 1];

    let y = transform_raw(x, nu);
    let u = u_raw(x, nu);
    let mut mu = 0.0;
    let mut du = 0.0; // d mu / d nu
    let mut y_lags = vec![0.0; p];
    for (k, &xl) in lags.iter().enumerate() {
        let yl = transform_raw(xl, nu);
        y_lags[k] = yl;
        mu += theta[k] * yl;
        du += theta[k] * u_raw(xl, nu);
    }
    let eps = y - mu;

    let mut h = DVector::zeros(p + 2);
    for k in 0..p {
        h[k] = eps * y_lags[k] / sigma2;
    }
    h[p] = -0.5 / sigma2 + 0.5 * eps * eps / (sigma2 * sigma2);
    h[p + 1] = 1.0 / nu + x.ln() * pow_ratio(x, nu) - eps * (u - du) / sigma2;
    Ok(h)
}

/// Gradient of the observation log-density at the current parameters,
/// ordered (d/dphi_1..p, d/dsigma2, d/dnu).
pub fn score_vector(state: &RecursiveState, x: f64) -> Result<DVector<f64>> {
    if !state.lags_full() {
        return Err(Error::State(format!(
            "lag buffer holds {} of {} values",
            state.lags.len(),
            state.p
        )));
    }
    score_of(state.p, &state.theta, &state.lags, x)
}

/// Consume one observation: absorb its score and, after warm-up, move the
/// parameters. Non-finite scores are skipped and counted; the lag buffer
/// advances either way.
pub fn step(state: &mut RecursiveState, x: f64) -> Result<StepOutcome> {
    let mut outcome = StepOutcome { absorbed: false, updated: false, skipped: false };
    state.t += 1;
    if state.t <= state.warmup && !state.warm_started {
        if let Some(seg) = state.warmup_history.last_mut() {
            seg.push(x);
        }
    } else if !state.warm_started {
        state.warm_start();
    }
    if state.lags_full() {
        let h = score_vector(state, x)?;
        if h.iter().all(|v| v.is_finite()) {
            state.filter.absorb(&h);
            outcome.absorbed = true;
            if state.t > state.warmup {
                if let Some(direction) = state.filter.solve(&h) {
                    let gain = 1.0 - state.alpha;
                    let step = direction * gain;
                    debug_assert!(step_within_bound(state, &h, &step));
                    // an unconstrained step can overshoot sigma2 straight to
                    // the absolute floor, where 1/sigma^4 scores swamp R and
                    // freeze the filter; cap the decay at halving per step
                    let sigma2_floor = (0.5 * state.theta[state.p]).max(SIGMA2_FLOOR);
                    state.theta += &step;
                    state.theta[state.p] = state.theta[state.p].max(sigma2_floor);
                    state.theta[state.p + 1] = state.theta[state.p + 1].clamp(NU_MIN, NU_MAX);
                    outcome.updated = true;
                }
            }
        } else {
            state.skipped += 1;
            outcome.skipped = true;
        }
    }
    state.push_lag(x);
    Ok(outcome)
}

/// ||step|| <= (1 - alpha) ||R^-1|| ||h||, checked in debug builds.
fn step_within_bound(state: &RecursiveState, h: &DVector<f64>, step: &DVector<f64>) -> bool {
    match state.filter.information().clone().try_inverse() {
        Some(inv) => step.norm() <= (1.0 - state.alpha) * inv.norm() * h.norm() * (1.0 + 1e-8),
        None => true, // jittered solve path; bound not meaningful
    }
}

/// Parameter trajectory and one-step predictives over a full series.
#[derive(Debug, Clone)]
pub struct RecursiveRun {
    /// Estimate after absorbing the observation at each timestamp.
    pub trajectory: Vec<(DateTime<Utc>, ThetaState)>,
    /// Predictive law for the following grid step, keyed by target time.
    pub predictives: Vec<(DateTime<Utc>, GlnPredictive)>,
    pub skipped: usize,
    pub final_state: RecursiveState,
}

/// Run the online estimator over a clipped series, resetting the lag buffer
/// across grid gaps.
pub fn run_series(series: &PowerSeries, config: &RecursiveConfig) -> Result<RecursiveRun> {
    if series.len() <= config.warmup {
        return Err(Error::Estimation(format!(
            "series of length {} does not outlast the warm-up of {}",
            series.len(),
            config.warmup
        )));
    }
    let mut state = RecursiveState::new(config);
    let mut trajectory = Vec::with_capacity(series.len());
    let mut predictives = Vec::with_capacity(series.len());
    let records = series.records();
    for (i, r) in records.iter().enumerate() {
        if i > 0 && !series.contiguous_with_previous(i) {
            state.reset_lags();
        }
        step(&mut state, r.value)?;
        trajectory.push((r.timestamp, state.theta()));
        if state.lags_full() {
            let pred = state.predictive()?;
            predictives.push((r.timestamp + series.resolution(), pred));
        }
    }
    Ok(RecursiveRun { trajectory, predictives, skipped: state.skipped, final_state: state })
}
