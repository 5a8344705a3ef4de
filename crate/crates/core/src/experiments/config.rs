//! TOML experiment configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::EngineKind;
use crate::model::ModelParams;
use crate::theory;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Theorem1,
    Theorem2,
    Theorem3,
    Spacings,
    Martingale,
    Engines,
}

impl Target {
    pub const ALL: [Target; 6] =
        [Target::Theorem1, Target::Theorem2, Target::Theorem3, Target::Spacings, Target::Martingale, Target::Engines];

    pub fn name(self) -> &'static str {
        match self {
            Target::Theorem1 => "theorem1",
            Target::Theorem2 => "theorem2",
            Target::Theorem3 => "theorem3",
            Target::Spacings => "spacings",
            Target::Martingale => "martingale",
            Target::Engines => "engines",
        }
    }
}

impl std::str::FromStr for Target {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Target::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| format!("unknown target {s:?}, expected one of theorem1, theorem2, theorem3, spacings, martingale, engines"))
    }
}

impl std::fmt::Display for Target {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(rename = "N")]
    pub n: u64,
    pub mu: f64,
    pub s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default = "one")]
    pub replicates: u64,
    /// Horizon in units of `a_N`.
    #[serde(default = "three")]
    pub t_mult: f64,
    /// Number of evenly spaced snapshots on `[0, t_end]`.
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    #[serde(default)]
    pub engine: EngineKind,
    #[serde(default)]
    pub seed: u64,
    /// Absolute horizon; overrides `t_mult` and is required when `mu = 0`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    /// Keep the full event sequence of every replicate.
    #[serde(default)]
    pub event_log: bool,
    /// Worker threads; 0 uses all available cores.
    #[serde(default)]
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    #[serde(default)]
    pub targets: Vec<Target>,
    /// Scaled probe times for the theorem1/theorem2 statistics.
    #[serde(default = "default_probes")]
    pub probes: Vec<f64>,
    /// Additional population sizes for the monotone-trend checks.
    #[serde(default, rename = "N_values", skip_serializing_if = "Vec::is_empty")]
    pub n_values: Vec<u64>,
    /// Step of the renewal solver.
    #[serde(default = "default_h")]
    pub h: f64,
    /// Scaled time of the Gaussian-profile fit.
    #[serde(default = "default_profile_time")]
    pub profile_time: f64,
    /// Largest `|l|` used in the profile fit; absent uses every type with
    /// at least `min_count` individuals.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ell_max: Option<u32>,
    #[serde(default = "default_min_count")]
    pub min_count: u64,
    #[serde(default = "default_martingale_types")]
    pub martingale_types: Vec<u32>,
    #[serde(default = "default_martingale_times")]
    pub martingale_times: Vec<f64>,
    /// Significance level of the engine homogeneity test.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Pass threshold for the share of spacings inside the bounds.
    #[serde(default = "default_spacing_fraction")]
    pub spacing_fraction: f64,
    /// Pass threshold for the share of replicates with negative curvature.
    #[serde(default = "default_curvature_sign_fraction")]
    pub curvature_sign_fraction: f64,
    /// Allowed ratio between the median fitted and predicted curvature.
    #[serde(default = "three")]
    pub curvature_factor: f64,
}

impl Default for VerifySection {
    fn default() -> Self {
        toml::from_str("").expect("all verify fields have defaults")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSection,
    pub run: RunSection,
    #[serde(default)]
    pub verify: VerifySection,
}

fn one() -> u64 {
    1
}
fn three() -> f64 {
    3.0
}
fn default_resolution() -> usize {
    301
}
fn default_probes() -> Vec<f64> {
    vec![0.5, 1.2, 1.6, 2.0, 2.5, 3.0]
}
fn default_h() -> f64 {
    1e-3
}
fn default_profile_time() -> f64 {
    2.5
}
fn default_min_count() -> u64 {
    10
}
fn default_martingale_types() -> Vec<u32> {
    vec![0, 1, 2]
}
fn default_martingale_times() -> Vec<f64> {
    vec![1.0, 5.0, 10.0]
}
fn default_alpha() -> f64 {
    1e-3
}
fn default_spacing_fraction() -> f64 {
    0.7
}
fn default_curvature_sign_fraction() -> f64 {
    0.95
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::from_toml(&text)
    }

    /// A config with default run and verify sections.
    pub fn new(n: u64, mu: f64, s: f64) -> Self {
        Self {
            model: ModelSection { n, mu, s },
            run: toml::from_str("").expect("all run fields have defaults"),
            verify: VerifySection::default(),
        }
    }

    pub fn params(&self) -> Result<ModelParams, ConfigError> {
        ModelParams::new(self.model.n, self.model.mu, self.model.s).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// Absolute horizon: `t_end` if given, else `t_mult * a_N`.
    pub fn t_end(&self) -> Result<f64, ConfigError> {
        if let Some(t) = self.run.t_end {
            return Ok(t);
        }
        let sc = theory::scales(&self.params()?)
            .map_err(|_| ConfigError::Invalid("t_mult needs 0 < mu < s; give run.t_end instead".into()))?;
        Ok(self.run.t_mult * sc.a_n)
    }

    /// Same config with another population size.
    pub fn with_n(&self, n: u64) -> Self {
        let mut c = self.clone();
        c.model.n = n;
        c
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        self.params()?;
        if self.run.replicates < 1 {
            return invalid("replicates must be at least 1");
        }
        if !(self.run.t_mult > 0.0 && self.run.t_mult.is_finite()) {
            return invalid("t_mult must be positive");
        }
        if self.run.resolution < 2 {
            return invalid("resolution must be at least 2");
        }
        if let Some(t) = self.run.t_end {
            if !(t > 0.0 && t.is_finite()) {
                return invalid("t_end must be positive");
            }
        }
        self.t_end()?;
        let v = &self.verify;
        if v.probes.iter().any(|&t| !(t >= 0.0) || (t - 1.0).abs() < 0.1) {
            return invalid("probes must be nonnegative and at least 0.1 away from 1");
        }
        if !(v.h > 0.0 && v.h <= 0.1) {
            return invalid("h must lie in (0, 0.1]");
        }
        if !(v.profile_time > 1.0) || v.profile_time == 2.0 {
            return invalid("profile_time must lie in (1, 2) or (2, inf)");
        }
        if v.n_values.iter().any(|&n| n < 2) {
            return invalid("N_values entries must be at least 2");
        }
        if v.martingale_times.iter().any(|&t| !(t >= 0.0)) {
            return invalid("martingale_times must be nonnegative");
        }
        if !(v.alpha > 0.0 && v.alpha < 1.0) {
            return invalid("alpha must lie in (0, 1)");
        }
        if !(0.0..=1.0).contains(&v.spacing_fraction) || !(0.0..=1.0).contains(&v.curvature_sign_fraction) {
            return invalid("spacing_fraction and curvature_sign_fraction must lie in [0, 1]");
        }
        if !(v.curvature_factor >= 1.0) {
            return invalid("curvature_factor must be at least 1");
        }
        Ok(())
    }
}
