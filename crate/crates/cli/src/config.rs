//! Run-configuration document, accepted as JSON or TOML.
//!
//! Every command takes one config file; unknown keys are rejected and the
//! `schema` id is pinned so stale configs fail loudly. Each run writes the
//! resolved config (including CLI overrides) next to its outputs.

use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use glnar_core::batch::FitOptions;
use glnar_core::cv::{Grid, Metric};
use glnar_core::data::SplitConfig;
use glnar_core::error::{Error, Result};
use glnar_core::gln::{PointRule, ThetaState};
use glnar_core::models::ModelParams;
use glnar_core::sim::{SimSpec, DEFAULT_BURN_IN};
use serde::{Deserialize, Serialize};

/// Schema id every config must carry.
pub const SCHEMA_ID: &str = "glnar-run-config/v1";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_resolution_minutes")]
    pub resolution_minutes: i64,
    #[serde(default)]
    pub data: Option<DataSection>,
    #[serde(default)]
    pub split: Option<SplitSection>,
    #[serde(default)]
    pub model: Option<ModelSection>,
    #[serde(default)]
    pub sim: Option<SimSection>,
    #[serde(default)]
    pub grid: Option<GridSection>,
}

fn default_resolution_minutes() -> i64 {
    10
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// Wide-format farm export: timestamp column plus one column per turbine.
    #[serde(default)]
    pub farm_csv: Option<PathBuf>,
    /// Two-column capacity table (turbine_id, nominal).
    #[serde(default)]
    pub capacities_csv: Option<PathBuf>,
    /// Two-column aggregate series (timestamp, value).
    #[serde(default)]
    pub series_csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSection {
    pub train_end: DateTime<Utc>,
    pub cv_end: DateTime<Utc>,
    pub test_end: DateTime<Utc>,
}

impl SplitSection {
    pub fn to_split_config(self) -> Result<SplitConfig> {
        SplitConfig::new(self.train_end, self.cv_end, self.test_end)
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default = "default_p")]
    pub p: usize,
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Forgetting factor; defaults per mode (0.9994 point, 0.9986 prob).
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub point_rule: PointRule,
    #[serde(default = "default_error_window")]
    pub error_window: usize,
    #[serde(default = "default_climatology_levels")]
    pub climatology_levels: usize,
}

fn default_p() -> usize {
    2
}
fn default_delta() -> f64 {
    0.005
}
fn default_error_window() -> usize {
    glnar_core::benchmarks::DEFAULT_ERROR_WINDOW
}
fn default_climatology_levels() -> usize {
    glnar_core::benchmarks::DEFAULT_CLIMATOLOGY_LEVELS
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            p: default_p(),
            delta: default_delta(),
            alpha: None,
            point_rule: PointRule::Median,
            error_window: default_error_window(),
            climatology_levels: default_climatology_levels(),
        }
    }
}

/// Forecast mode; decides the selection metric and the default alpha.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Point,
    Prob,
}

impl Mode {
    pub fn metric(self) -> Metric {
        match self {
            Mode::Point => Metric::Rmse,
            Mode::Prob => Metric::Crps,
        }
    }

    pub fn default_alpha(self) -> f64 {
        match self {
            Mode::Point => 0.9994,
            Mode::Prob => 0.9986,
        }
    }
}

impl ModelSection {
    pub fn to_params(self, mode: Mode) -> ModelParams {
        ModelParams {
            p: self.p,
            delta: self.delta,
            alpha: self.alpha.unwrap_or(mode.default_alpha()),
            point_rule: self.point_rule,
            error_window: self.error_window,
            climatology_levels: self.climatology_levels,
            refit_every: 0,
            fit_options: FitOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub phi: Vec<f64>,
    pub sigma2: f64,
    pub nu: f64,
    pub n: usize,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default)]
    pub switches: Vec<SwitchSection>,
}

fn default_burn_in() -> usize {
    DEFAULT_BURN_IN
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwitchSection {
    pub at: usize,
    pub phi: Vec<f64>,
    pub sigma2: f64,
    pub nu: f64,
}

impl SimSection {
    pub fn to_spec(&self, seed: u64) -> Result<SimSpec> {
        let theta = ThetaState::new(self.phi.clone(), self.sigma2, self.nu)?;
        let mut spec = SimSpec::new(theta, self.n, seed).with_burn_in(self.burn_in);
        for sw in &self.switches {
            spec = spec.with_switch(sw.at, ThetaState::new(sw.phi.clone(), sw.sigma2, sw.nu)?);
        }
        Ok(spec)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default)]
    pub p: Option<Vec<usize>>,
    #[serde(default)]
    pub delta: Option<Vec<f64>>,
    #[serde(default)]
    pub alpha: Option<Vec<f64>>,
}

impl GridSection {
    pub fn to_grid(&self, metric: Metric) -> Grid {
        let defaults = Grid::defaults(metric);
        Grid {
            p: self.p.clone().unwrap_or(defaults.p),
            delta: self.delta.clone().unwrap_or(defaults.delta),
            alpha: self.alpha.clone().unwrap_or(defaults.alpha),
            metric,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let config: RunConfig = match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => toml::from_str(&raw)
                .map_err(|e| Error::Config(format!("invalid TOML config: {e}")))?,
            _ => serde_json::from_str(&raw)
                .map_err(|e| Error::Config(format!("invalid JSON config: {e}")))?,
        };
        if config.schema != SCHEMA_ID {
            return Err(Error::Config(format!(
                "config schema {:?} does not match expected {SCHEMA_ID:?}",
                config.schema
            )));
        }
        Ok(config)
    }

    pub fn resolution(&self) -> chrono::Duration {
        chrono::Duration::minutes(self.resolution_minutes)
    }

    pub fn require_sim(&self) -> Result<&SimSection> {
        self.sim.as_ref().ok_or_else(|| Error::Config("config lacks a [sim] section".into()))
    }

    pub fn require_split(&self) -> Result<SplitSection> {
        self.split.ok_or_else(|| Error::Config("config lacks a [split] section".into()))
    }

    pub fn model_section(&self) -> ModelSection {
        self.model.unwrap_or_default()
    }

    pub fn require_series_path(&self) -> Result<&Path> {
        self.data
            .as_ref()
            .and_then(|d| d.series_csv.as_deref())
            .ok_or_else(|| Error::Config("config lacks data.series_csv".into()))
    }
}
