//! Reference forecasters: persistence, probabilistic persistence,
//! climatology, and the batch / recursive Gaussian NAR models.
//!
//! The Gaussian models work directly on the raw bounded variable. Their point
//! forecasts are truncated into [0, 1] a posteriori; their predictive CDF is
//! the plain Gaussian, evaluated as-is over the bounded scoring range.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::batch::least_squares;
use crate::data::PowerSeries;
use crate::error::{Error, Result};
use crate::forget::ForgettingFilter;
use crate::predictive::{EmpiricalPredictive, Predictive};

/// Number of recent persistence errors dressing the probabilistic persistence.
pub const DEFAULT_ERROR_WINDOW: usize = 20;

/// Number of climatology grid levels: 0, 0.01, ..., 0.99, 1.
pub const DEFAULT_CLIMATOLOGY_LEVELS: usize = 101;

/// The persistence forecast: the last observation.
pub fn persistence_point(last: f64) -> f64 {
    last
}

/// Point persistence dressed with its own recent errors.
///
/// Keeps the last `m` one-step persistence errors; the predictive at origin
/// x_t is the equally weighted ensemble of clip(x_t + e_i). While fewer than
/// `m` errors have been seen the predictive degenerates to a point mass.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PersistenceDressing {
    window: usize,
    errors: VecDeque<f64>,
}

impl PersistenceDressing {
    pub fn new(window: usize) -> Result<Self> {
        if window == 0 {
            return Err(Error::Config("error window must be positive".into()));
        }
        Ok(PersistenceDressing { window, errors: VecDeque::with_capacity(window) })
    }

    /// Record the persistence error of a newly observed step.
    pub fn observe_error(&mut self, error: f64) {
        if self.errors.len() == self.window {
            self.errors.pop_front();
        }
        self.errors.push_back(error);
    }

    pub fn warmed_up(&self) -> bool {
        self.errors.len() >= self.window
    }

    pub fn predictive(&self, last: f64) -> EmpiricalPredictive {
        if !self.warmed_up() {
            return EmpiricalPredictive::point_mass(last);
        }
        let members: Vec<f64> = self.errors.iter().map(|e| (last + e).clamp(0.0, 1.0)).collect();
        EmpiricalPredictive::ensemble(members, None).expect("non-empty ensemble")
    }
}

/// Empirical quantile with linear interpolation between order statistics.
fn empirical_quantile(sorted: &[f64], tau: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = tau * (n - 1) as f64;
    let k = (pos.floor() as usize).min(n - 2);
    let frac = pos - k as f64;
    sorted[k] + frac * (sorted[k + 1] - sorted[k])
}

/// All-history climatology, refreshed as observations arrive.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OnlineClimatology {
    sorted: Vec<f64>,
    levels: Vec<f64>,
}

impl OnlineClimatology {
    pub fn new(train: &[f64], level_count: usize) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::Config("climatology needs a non-empty training history".into()));
        }
        if level_count < 2 {
            return Err(Error::Config("climatology grid needs at least two levels".into()));
        }
        let mut sorted = train.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let levels =
            (0..level_count).map(|i| i as f64 / (level_count - 1) as f64).collect();
        Ok(OnlineClimatology { sorted, levels })
    }

    /// Fold in a newly recorded observation.
    pub fn observe(&mut self, x: f64) {
        let at = self.sorted.partition_point(|&v| v <= x);
        self.sorted.insert(at, x);
    }

    pub fn history_len(&self) -> usize {
        self.sorted.len()
    }

    pub fn predictive(&self) -> EmpiricalPredictive {
        let values: Vec<f64> =
            self.levels.iter().map(|&tau| empirical_quantile(&self.sorted, tau)).collect();
        EmpiricalPredictive::quantile_table(self.levels.clone(), values)
            .expect("levels strictly increasing, empirical quantiles monotone")
    }
}

/// Fitted Gaussian NAR parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NarState {
    pub phi: Vec<f64>,
    pub sigma2: f64,
}

/// Batch or forgetting-factor estimation of the Gaussian NAR model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NarMode {
    Batch,
    Recursive { alpha: f64 },
}

/// Fit result; recursive mode also reports the parameter trajectory.
#[derive(Debug, Clone)]
pub struct NarFit {
    pub state: NarState,
    pub trajectory: Option<Vec<(chrono::DateTime<chrono::Utc>, NarState)>>,
}

/// Least-squares fit of the raw-scale AR model with residual variance.
pub fn nar_fit(series: &PowerSeries, p: usize, mode: NarMode) -> Result<NarFit> {
    match mode {
        NarMode::Batch => {
            let (targets, lags) = raw_design(series, p)?;
            let (coef, sigma2) = least_squares(&targets, &lags)?;
            Ok(NarFit {
                state: NarState { phi: coef.iter().copied().collect(), sigma2 },
                trajectory: None,
            })
        }
        NarMode::Recursive { alpha } => {
            let mut model = RecursiveNar::new(p, alpha)?;
            let mut trajectory = Vec::with_capacity(series.len());
            for (i, r) in series.records().iter().enumerate() {
                if i > 0 && !series.contiguous_with_previous(i) {
                    model.reset_lags();
                }
                model.step(r.value);
                trajectory.push((r.timestamp, model.state()));
            }
            Ok(NarFit { state: model.state(), trajectory: Some(trajectory) })
        }
    }
}

fn raw_design(series: &PowerSeries, p: usize) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if p == 0 {
        return Err(Error::Config("lag order p must be at least 1".into()));
    }
    let records = series.records();
    let mut rows = Vec::new();
    for seg in series.segments() {
        if seg.len() < p + 1 {
            continue;
        }
        for t in seg.start + p..seg.end {
            rows.push(t);
        }
    }
    if rows.is_empty() {
        return Err(Error::Estimation(format!(
            "insufficient data: no run of {} consecutive observations",
            p + 1
        )));
    }
    let targets = DVector::from_iterator(rows.len(), rows.iter().map(|&t| records[t].value));
    let lags = DMatrix::from_fn(rows.len(), p, |r, k| records[rows[r] - k - 1].value);
    Ok((targets, lags))
}

/// Online Gaussian NAR: forgetting-factor least squares for the lag
/// coefficients in the same (R, h) template as the GLNAR estimator (shape
/// removed, identity transform), plus an exponentially weighted residual
/// variance.
///
/// Keeping sigma2 out of the Newton vector preserves the information
/// equality R ~ Hessian that the outer-product recursion relies on; folding
/// it in destabilizes the transient whenever the initial variance is far
/// from the data scale.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecursiveNar {
    p: usize,
    alpha: f64,
    warmup: usize,
    phi: DVector<f64>,
    /// Weighted sum of squared residuals and its total weight; the variance
    /// estimate is their ratio, which carries no initialization bias.
    sigma2_sum: f64,
    sigma2_weight: f64,
    filter: ForgettingFilter,
    lags: VecDeque<f64>,
    t: usize,
}

impl RecursiveNar {
    pub fn new(p: usize, alpha: f64) -> Result<Self> {
        if p == 0 {
            return Err(Error::Config("lag order p must be at least 1".into()));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Config(format!("forgetting factor must lie in (0, 1), got {alpha}")));
        }
        Ok(RecursiveNar {
            p,
            alpha,
            warmup: 100 + p,
            phi: DVector::zeros(p),
            sigma2_sum: 0.0,
            sigma2_weight: 0.0,
            filter: ForgettingFilter::new(p, alpha),
            lags: VecDeque::with_capacity(p),
            t: 0,
        })
    }

    fn sigma2(&self) -> f64 {
        if self.sigma2_weight > 0.0 {
            self.sigma2_sum / self.sigma2_weight
        } else {
            1.0
        }
    }

    pub fn state(&self) -> NarState {
        NarState { phi: self.phi.as_slice().to_vec(), sigma2: self.sigma2() }
    }

    pub fn lags_full(&self) -> bool {
        self.lags.len() == self.p
    }

    pub fn reset_lags(&mut self) {
        self.lags.clear();
    }

    /// Lag values, most recent first.
    pub fn lag_values(&self) -> Vec<f64> {
        self.lags.iter().copied().collect()
    }

    pub fn step(&mut self, x: f64) {
        self.t += 1;
        if self.lags_full() {
            let sigma2 = self.sigma2();
            let mut eps = x;
            for (k, &xl) in self.lags.iter().enumerate() {
                eps -= self.phi[k] * xl;
            }
            let h =
                DVector::from_iterator(self.p, self.lags.iter().map(|&xl| eps * xl / sigma2));
            if h.iter().all(|v| v.is_finite()) {
                self.filter.absorb(&h);
                if self.t > self.warmup {
                    if let Some(direction) = self.filter.solve(&h) {
                        self.phi += direction * (1.0 - self.alpha);
                    }
                }
                // residual variance at the pre-update coefficients
                self.sigma2_sum = self.alpha * self.sigma2_sum + (1.0 - self.alpha) * eps * eps;
                self.sigma2_weight = self.alpha * self.sigma2_weight + (1.0 - self.alpha);
            }
        }
        if self.lags.len() == self.p {
            self.lags.pop_back();
        }
        self.lags.push_front(x);
    }
}

/// One-step Gaussian NAR forecast from the fitted state and recent lags
/// (most recent first): clipped point forecast plus the predictive law.
pub fn nar_predict(state: &NarState, lags: &[f64]) -> Result<(f64, Predictive)> {
    if lags.len() < state.phi.len() {
        return Err(Error::State(format!(
            "need {} lags, got {}",
            state.phi.len(),
            lags.len()
        )));
    }
    let raw: f64 = state.phi.iter().zip(lags).map(|(c, x)| c * x).sum();
    let point = raw.clamp(0.0, 1.0);
    let predictive = if state.sigma2 > 0.0 {
        Predictive::Gaussian { mean: point, sigma2: state.sigma2 }
    } else {
        Predictive::Empirical(EmpiricalPredictive::point_mass(point))
    };
    Ok((point, predictive))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gln::ThetaState;
    use crate::sim::{simulate, sim_epoch, sim_resolution, SimSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn series(values: &[f64]) -> PowerSeries {
        PowerSeries::from_values(values.to_vec(), sim_epoch(), sim_resolution()).unwrap()
    }

    #[test]
    fn persistence_is_identity() {
        assert_eq!(persistence_point(0.42), 0.42);
    }

    #[test]
    fn dressing_with_zero_errors_is_point_mass() {
        let mut d = PersistenceDressing::new(3).unwrap();
        for _ in 0..3 {
            d.observe_error(0.0);
        }
        let p = Predictive::Empirical(d.predictive(0.42));
        assert_eq!(p.cdf(0.42).unwrap(), 1.0);
        assert_eq!(p.cdf(0.41).unwrap(), 0.0);
    }

    #[test]
    fn dressing_clips_members_at_the_bounds() {
        let mut d = PersistenceDressing::new(4).unwrap();
        for e in [-0.05, 0.01, 0.03, 0.06] {
            d.observe_error(e);
        }
        match d.predictive(0.98) {
            EmpiricalPredictive::Ensemble { support, .. } => {
                let clipped = support.iter().filter(|&&s| s == 1.0).count();
                assert_eq!(clipped, 2, "members pushed above one must be clipped");
            }
            other => panic!("expected ensemble, got {other:?}"),
        }
    }

    #[test]
    fn dressing_before_warmup_is_degenerate() {
        let mut d = PersistenceDressing::new(20).unwrap();
        d.observe_error(0.01);
        assert!(!d.warmed_up());
        assert_eq!(d.predictive(0.3), EmpiricalPredictive::point_mass(0.3));
    }

    #[test]
    fn ensemble_mean_is_origin_plus_mean_error_without_clipping() {
        let mut d = PersistenceDressing::new(5).unwrap();
        let errors = [-0.02, 0.01, 0.005, -0.01, 0.03];
        for e in errors {
            d.observe_error(e);
        }
        let mean_error: f64 = errors.iter().sum::<f64>() / errors.len() as f64;
        let pred = Predictive::Empirical(d.predictive(0.5));
        let mean = pred.point(crate::gln::PointRule::Mean);
        assert!((mean - (0.5 + mean_error)).abs() < 1e-12);
    }

    #[test]
    fn climatology_on_uniform_data_is_the_identity_line() {
        let mut rng = ChaCha12Rng::seed_from_u64(77);
        let data: Vec<f64> = (0..10_000).map(|_| rng.gen_range(0.0..1.0)).collect();
        let clim = OnlineClimatology::new(&data, DEFAULT_CLIMATOLOGY_LEVELS).unwrap();
        match clim.predictive() {
            EmpiricalPredictive::QuantileTable { levels, values } => {
                let sup = levels
                    .iter()
                    .zip(&values)
                    .map(|(l, v)| (l - v).abs())
                    .fold(0.0f64, f64::max);
                assert!(sup < 0.02, "sup deviation from identity {sup}");
            }
            other => panic!("expected table, got {other:?}"),
        }
    }

    #[test]
    fn climatology_single_observation_is_flat() {
        let clim = OnlineClimatology::new(&[0.37], 11).unwrap();
        match clim.predictive() {
            EmpiricalPredictive::QuantileTable { values, .. } => {
                assert!(values.iter().all(|&v| v == 0.37));
            }
            other => panic!("expected table, got {other:?}"),
        }
    }

    #[test]
    fn online_climatology_equals_batch_requantiling() {
        let train = [0.2, 0.5, 0.9, 0.1];
        let newcomers = [0.4, 0.7, 0.3];
        let mut online = OnlineClimatology::new(&train, 21).unwrap();
        for x in newcomers {
            online.observe(x);
        }
        let mut all: Vec<f64> = train.iter().chain(&newcomers).copied().collect();
        all.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let batch = OnlineClimatology::new(&all, 21).unwrap();
        assert_eq!(online.predictive(), batch.predictive());
    }

    #[test]
    fn nar_batch_recovers_noise_free_ar1() {
        let mut xs = vec![0.9];
        for _ in 0..50 {
            xs.push(0.9 * xs.last().unwrap());
        }
        let fit = nar_fit(&series(&xs), 1, NarMode::Batch).unwrap();
        assert!((fit.state.phi[0] - 0.9).abs() < 1e-12);
        assert!(fit.state.sigma2 < 1e-20);
    }

    #[test]
    fn nar_recursive_settles_near_batch_on_stationary_stream() {
        let truth = ThetaState::new(vec![1.36, -0.37], 0.11, 1.4).unwrap();
        let s = simulate(&SimSpec::new(truth, 40_000, 71)).unwrap();
        let batch = nar_fit(&s, 2, NarMode::Batch).unwrap();
        let rec = nar_fit(&s, 2, NarMode::Recursive { alpha: 0.999 }).unwrap();
        let traj = rec.trajectory.unwrap();
        let tail = &traj[traj.len() - 10_000..];
        let avg_phi1 = tail.iter().map(|(_, st)| st.phi[0]).sum::<f64>() / tail.len() as f64;
        let avg_phi2 = tail.iter().map(|(_, st)| st.phi[1]).sum::<f64>() / tail.len() as f64;
        assert!((avg_phi1 - batch.state.phi[0]).abs() < 0.02, "{avg_phi1} vs {}", batch.state.phi[0]);
        assert!((avg_phi2 - batch.state.phi[1]).abs() < 0.02, "{avg_phi2} vs {}", batch.state.phi[1]);
    }

    #[test]
    fn nar_predict_truncates_out_of_range_points() {
        let state = NarState { phi: vec![1.1], sigma2: 0.01 };
        let (point, pred) = nar_predict(&state, &[0.95]).unwrap();
        assert_eq!(point, 1.0);
        match pred {
            Predictive::Gaussian { mean, .. } => assert_eq!(mean, 1.0),
            other => panic!("expected gaussian, got {other:?}"),
        }
    }

    #[test]
    fn nar_predict_degenerates_at_zero_variance() {
        let state = NarState { phi: vec![0.5], sigma2: 0.0 };
        let (point, pred) = nar_predict(&state, &[0.6]).unwrap();
        assert_eq!(point, 0.3);
        assert!(matches!(pred, Predictive::Empirical(_)));
    }

    #[test]
    fn nar_fit_needs_enough_contiguous_data() {
        let err = nar_fit(&series(&[0.1, 0.2]), 2, NarMode::Batch).unwrap_err();
        assert!(matches!(err, Error::Estimation(_)));
    }
}
