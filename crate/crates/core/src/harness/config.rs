//! Run configuration: a sectioned TOML file (`[run]`, `[fit]`, `[mpc]`,
//! `[sensor]`) with command-line overrides applied on top.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{GmIpcError, Result};
use crate::fitter::FitConfig;
use crate::planner::MpcConfig;
use crate::simworld::{ScenarioKind, SensorConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    Gmm,
    Ellip1,
    Ellip2,
    GmmNoNll,
    GmmNoEmpty,
}

impl Model {
    pub const ALL: [Model; 5] = [Model::Gmm, Model::Ellip1, Model::Ellip2, Model::GmmNoNll, Model::GmmNoEmpty];

    pub fn name(self) -> &'static str {
        match self {
            Model::Gmm => "gmm",
            Model::Ellip1 => "ellip1",
            Model::Ellip2 => "ellip2",
            Model::GmmNoNll => "gmm_no_nll",
            Model::GmmNoEmpty => "gmm_no_empty",
        }
    }

    fn is_mixture(self) -> bool {
        matches!(self, Model::Gmm | Model::GmmNoNll | Model::GmmNoEmpty)
    }
}

impl std::str::FromStr for Model {
    type Err = GmIpcError;
    fn from_str(s: &str) -> Result<Self> {
        Model::ALL
            .into_iter()
            .find(|m| m.name() == s || m.name().replace('_', "-") == s)
            .ok_or_else(|| GmIpcError::Config(format!("unknown model `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub scenario: ScenarioKind,
    pub model: Model,
    pub n_trials: usize,
    pub step_cap: usize,
    pub seed: u64,
    /// Zero means one worker per available core.
    pub workers: usize,
    pub goal_radius: f64,
    /// Component budget of mixture models when a scenario has several
    /// obstacles; single-obstacle scenarios use `fit.k_max`.
    pub multi_object_k_max: usize,
    /// Warm-start only if the previous contract still covers this fraction
    /// of the newly perceived points.
    pub warm_start_min_cover: f64,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            scenario: ScenarioKind::Sofa,
            model: Model::Gmm,
            n_trials: 20,
            step_cap: 500,
            seed: 0,
            workers: 0,
            goal_radius: 0.3,
            multi_object_k_max: 7,
            warm_start_min_cover: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    pub fit: FitConfig,
    pub mpc: MpcConfig,
    pub sensor: SensorConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| GmIpcError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| GmIpcError::Serde(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.effective_fit().validate()?;
        self.mpc.validate()?;
        self.sensor.validate()?;
        let r = &self.run;
        if r.step_cap < 1 {
            return Err(GmIpcError::Config("step_cap must be at least 1".into()));
        }
        if !(r.goal_radius > 0.0) {
            return Err(GmIpcError::Config("goal_radius must be positive".into()));
        }
        if !(0.0..=1.0).contains(&r.warm_start_min_cover) {
            return Err(GmIpcError::Config("warm_start_min_cover must be in [0, 1]".into()));
        }
        Ok(())
    }

    /// Fit settings after applying the model variant.
    pub fn effective_fit(&self) -> FitConfig {
        let mut f = self.fit.clone();
        if self.run.model.is_mixture() && self.run.scenario.is_multi_object() {
            f.k_max = self.run.multi_object_k_max;
        }
        match self.run.model {
            Model::Gmm => {}
            Model::Ellip1 => f.k_max = 1,
            Model::Ellip2 => f.k_max = 2,
            Model::GmmNoNll => f.alpha = 0.0,
            Model::GmmNoEmpty => f.beta = 0.0,
        }
        f
    }

    pub fn with_model(&self, model: Model) -> Self {
        let mut c = self.clone();
        c.run.model = model;
        c
    }

    pub fn with_scenario(&self, scenario: ScenarioKind) -> Self {
        let mut c = self.clone();
        c.run.scenario = scenario;
        c
    }

    pub fn worker_count(&self) -> usize {
        match self.run.workers {
            0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
            n => n,
        }
    }
}
