//! One-step predictive laws on [0, 1] behind a common CDF/quantile surface.
//!
//! Forecast verification only needs three things from a model's predictive
//! distribution: CDF values on a grid, quantiles at nominal levels and a
//! point summary. This module unifies the GLN law, the (deliberately
//! unrenormalized) Gaussian of the benchmark AR models, empirical objects
//! built from samples or quantile tables, and tabulated CDFs loaded back
//! from archive files.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gln::{std_normal_cdf, std_normal_quantile, GlnPredictive, PointRule};

/// Empirical predictive, either a weighted ensemble of support points or a
/// quantile table on a fixed probability grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EmpiricalPredictive {
    Ensemble {
        /// Support points in ascending order.
        support: Vec<f64>,
        /// Matching weights, summing to one.
        weights: Vec<f64>,
    },
    QuantileTable {
        /// Strictly increasing probability levels, typically 0, 0.01, .., 1.
        levels: Vec<f64>,
        /// Non-decreasing quantile values.
        values: Vec<f64>,
    },
}

impl EmpiricalPredictive {
    pub fn ensemble(mut support: Vec<f64>, weights: Option<Vec<f64>>) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::Domain("ensemble needs at least one member".into()));
        }
        let n = support.len();
        let weights = match weights {
            Some(w) => w,
            None => vec![1.0 / n as f64; n],
        };
        if weights.len() != n {
            return Err(Error::Domain("ensemble weights do not match support".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 || weights.iter().any(|&w| w < 0.0) {
            return Err(Error::Domain("ensemble weights must be nonnegative and sum to one".into()));
        }
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| support[a].partial_cmp(&support[b]).unwrap());
        let sorted_w: Vec<f64> = idx.iter().map(|&i| weights[i]).collect();
        support.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(EmpiricalPredictive::Ensemble { support, weights: sorted_w })
    }

    pub fn point_mass(value: f64) -> Self {
        EmpiricalPredictive::Ensemble { support: vec![value], weights: vec![1.0] }
    }

    pub fn quantile_table(levels: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if levels.len() != values.len() || levels.len() < 2 {
            return Err(Error::Domain("quantile table needs matching levels and values".into()));
        }
        for pair in levels.windows(2) {
            if pair[1] <= pair[0] {
                return Err(Error::Domain("quantile levels must be strictly increasing".into()));
            }
        }
        for pair in values.windows(2) {
            if pair[1] < pair[0] {
                return Err(Error::Domain("quantile values must be non-decreasing".into()));
            }
        }
        Ok(EmpiricalPredictive::QuantileTable { levels, values })
    }

    fn cdf(&self, y: f64) -> f64 {
        match self {
            EmpiricalPredictive::Ensemble { support, weights } => {
                let k = support.partition_point(|&s| s <= y);
                if k == support.len() {
                    1.0
                } else {
                    weights[..k].iter().sum()
                }
            }
            EmpiricalPredictive::QuantileTable { levels, values } => {
                if y < values[0] {
                    return 0.0;
                }
                // rightmost index keeps the CDF upper-semicontinuous over
                // flat stretches of the table
                let k = values.partition_point(|&v| v <= y);
                if k == values.len() {
                    return *levels.last().unwrap();
                }
                let (v0, v1) = (values[k - 1], values[k]);
                let (l0, l1) = (levels[k - 1], levels[k]);
                if v1 <= v0 {
                    l1
                } else {
                    l0 + (l1 - l0) * (y - v0) / (v1 - v0)
                }
            }
        }
    }

    fn quantile(&self, tau: f64) -> f64 {
        match self {
            EmpiricalPredictive::Ensemble { support, weights } => {
                let mut acc = 0.0;
                for (s, w) in support.iter().zip(weights) {
                    acc += w;
                    if acc >= tau - 1e-12 {
                        return *s;
                    }
                }
                *support.last().unwrap()
            }
            EmpiricalPredictive::QuantileTable { levels, values } => {
                if tau <= levels[0] {
                    return values[0];
                }
                if tau >= *levels.last().unwrap() {
                    return *values.last().unwrap();
                }
                let k = levels.partition_point(|&l| l < tau);
                let (l0, l1) = (levels[k - 1], levels[k]);
                let (v0, v1) = (values[k - 1], values[k]);
                v0 + (v1 - v0) * (tau - l0) / (l1 - l0)
            }
        }
    }

    fn mean(&self) -> f64 {
        match self {
            EmpiricalPredictive::Ensemble { support, weights } => {
                support.iter().zip(weights).map(|(s, w)| s * w).sum()
            }
            EmpiricalPredictive::QuantileTable { levels, values } => {
                // E[X] = int_0^1 q(tau) dtau over the table
                levels
                    .windows(2)
                    .zip(values.windows(2))
                    .map(|(l, v)| 0.5 * (v[0] + v[1]) * (l[1] - l[0]))
                    .sum()
            }
        }
    }
}

/// CDF values tabulated on a uniform grid over [0, 1]; the representation of
/// predictives loaded back from archive files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfTable {
    pub values: Vec<f64>,
}

impl CdfTable {
    fn cdf(&self, y: f64) -> f64 {
        let n = self.values.len();
        let pos = y.clamp(0.0, 1.0) * (n - 1) as f64;
        let k = (pos.floor() as usize).min(n - 2);
        let frac = pos - k as f64;
        self.values[k] + frac * (self.values[k + 1] - self.values[k])
    }

    fn quantile(&self, tau: f64) -> f64 {
        let n = self.values.len();
        let k = self.values.partition_point(|&v| v < tau);
        if k == 0 {
            return 0.0;
        }
        if k == n {
            return 1.0;
        }
        let (v0, v1) = (self.values[k - 1], self.values[k]);
        let y0 = (k - 1) as f64 / (n - 1) as f64;
        let y1 = k as f64 / (n - 1) as f64;
        if v1 <= v0 {
            y1
        } else {
            y0 + (y1 - y0) * (tau - v0) / (v1 - v0)
        }
    }
}

/// A predictive law for a single forecast target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Predictive {
    Gln(GlnPredictive),
    /// Gaussian on the raw scale, evaluated as-is on [0, 1]: point forecasts
    /// are clipped but the CDF is deliberately not renormalized, so F(1) may
    /// fall short of one when the mean sits near the bound.
    Gaussian { mean: f64, sigma2: f64 },
    Empirical(EmpiricalPredictive),
    CdfGrid(CdfTable),
}

impl Predictive {
    /// CDF at y in [0, 1].
    pub fn cdf(&self, y: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&y) {
            return Err(Error::Domain(format!("cdf argument {y} outside [0, 1]")));
        }
        Ok(match self {
            Predictive::Gln(p) => p.cdf(y)?,
            Predictive::Gaussian { mean, sigma2 } => std_normal_cdf((y - mean) / sigma2.sqrt()),
            Predictive::Empirical(e) => e.cdf(y),
            Predictive::CdfGrid(t) => t.cdf(y),
        })
    }

    /// Quantile at tau in (0, 1), reported inside [0, 1].
    pub fn quantile(&self, tau: f64) -> Result<f64> {
        if !(tau > 0.0 && tau < 1.0) {
            return Err(Error::Domain(format!("quantile level {tau} outside (0, 1)")));
        }
        Ok(match self {
            Predictive::Gln(p) => p.quantile(tau)?,
            Predictive::Gaussian { mean, sigma2 } => {
                (mean + sigma2.sqrt() * std_normal_quantile(tau)).clamp(0.0, 1.0)
            }
            Predictive::Empirical(e) => e.quantile(tau),
            Predictive::CdfGrid(t) => t.quantile(tau),
        })
    }

    /// Point summary without any clip-aware rounding.
    pub fn point(&self, rule: PointRule) -> f64 {
        match (self, rule) {
            (Predictive::Gln(p), PointRule::Median) => p.median(),
            (Predictive::Gln(p), PointRule::Mean) => p.mean(),
            (Predictive::Gaussian { mean, .. }, _) => mean.clamp(0.0, 1.0),
            (Predictive::Empirical(e), PointRule::Median) => e.quantile(0.5),
            (Predictive::Empirical(e), PointRule::Mean) => e.mean(),
            (Predictive::CdfGrid(t), PointRule::Median) => t.quantile(0.5),
            (Predictive::CdfGrid(t), PointRule::Mean) => {
                // E[X] = int_0^1 (1 - F(y)) dy on the grid
                let n = t.values.len();
                let h = 1.0 / (n - 1) as f64;
                t.values
                    .windows(2)
                    .map(|w| 0.5 * ((1.0 - w[0]) + (1.0 - w[1])) * h)
                    .sum()
            }
        }
    }

    /// Discontinuity locations of a step CDF, for exact integration.
    pub fn jump_points(&self) -> Option<&[f64]> {
        match self {
            Predictive::Empirical(EmpiricalPredictive::Ensemble { support, .. }) => Some(support),
            _ => None,
        }
    }
}
