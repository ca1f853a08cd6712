//! Experiment configuration. A JSON file names the experiment and overrides
//! any subset of that experiment's defaults.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentId {
    Table2Pattern,
    Tables345,
    Fig1Sweep,
    SparseRecovery,
}

impl ExperimentId {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentId::Table2Pattern => "table2_pattern",
            ExperimentId::Tables345 => "tables345",
            ExperimentId::Fig1Sweep => "fig1_sweep",
            ExperimentId::SparseRecovery => "sparse_recovery",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaChoice {
    UpperEndpoint,
    DualLevel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub id: ExperimentId,
    pub sample_sizes: Vec<usize>,
    pub replications: usize,
    pub seed: u64,
    /// Skew-normal shape of the regression noise.
    pub shape: f64,
    /// Multiplies the regression noise; 0 gives exact data.
    pub noise_scale: f64,
    /// Quantile level for the KB fits; defaults to `F_ε(0)` of the noise.
    pub kb_alpha: Option<f64>,
    pub x_grid: Vec<f64>,
    pub alpha_choice: AlphaChoice,
    pub target_mean: Option<f64>,
    pub long_only: bool,
    pub d: usize,
    pub k_star: usize,
    pub rho: f64,
    pub time_limit_s: f64,
    pub gap_tol: f64,
    /// Adds reporting-only rows at `d = 300`, `k* = 5`.
    pub medium_scale: bool,
    /// Compare against exhaustive search when it has at most this many supports.
    pub oracle_limit: u64,
    /// Relative tolerance of the experiment's asserted verdicts.
    pub tolerance: f64,
}

impl ExperimentConfig {
    pub fn defaults(id: ExperimentId) -> Self {
        let base = ExperimentConfig {
            id,
            sample_sizes: vec![100],
            replications: 1,
            seed: 42,
            shape: 10.0,
            noise_scale: 1.0,
            kb_alpha: None,
            x_grid: vec![0.0],
            alpha_choice: AlphaChoice::UpperEndpoint,
            target_mean: None,
            long_only: false,
            d: 1,
            k_star: 1,
            rho: 0.0,
            time_limit_s: 600.0,
            gap_tol: 1e-9,
            medium_scale: false,
            oracle_limit: 100_000,
            tolerance: 1e-6,
        };
        match id {
            ExperimentId::Table2Pattern => ExperimentConfig {
                sample_sizes: vec![1264],
                x_grid: vec![0.005],
                alpha_choice: AlphaChoice::DualLevel,
                d: 4,
                rho: 0.8,
                ..base
            },
            ExperimentId::Tables345 => ExperimentConfig {
                sample_sizes: vec![100, 1000, 10000],
                replications: 20,
                ..base
            },
            ExperimentId::Fig1Sweep => ExperimentConfig {
                sample_sizes: vec![10_000],
                x_grid: quadlab_core::portfolio::default_x_grid(),
                tolerance: 1e-5,
                ..base
            },
            ExperimentId::SparseRecovery => ExperimentConfig {
                sample_sizes: vec![100],
                replications: 10,
                d: 30,
                k_star: 3,
                rho: 0.9,
                ..base
            },
        }
    }

    /// Overlays the keys of `json` on the defaults of the experiment it names.
    pub fn from_json(json: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(json).context("config is not valid JSON")?;
        let Some(obj) = value.as_object() else {
            bail!("config must be a JSON object");
        };
        let id: ExperimentId = serde_json::from_value(obj.get("id").cloned().context("config has no `id`")?)
            .context("unknown experiment id")?;
        Self::overlay(Self::defaults(id), obj)
    }

    pub fn overlay(base: Self, obj: &serde_json::Map<String, serde_json::Value>) -> Result<Self> {
        let mut merged = serde_json::to_value(&base)?;
        let target = merged.as_object_mut().expect("config serializes to an object");
        for (k, v) in obj {
            target.insert(k.clone(), v.clone());
        }
        let cfg: ExperimentConfig = serde_json::from_value(merged).context("invalid config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            bail!("replications must be at least 1");
        }
        if self.sample_sizes.is_empty() || self.sample_sizes.contains(&0) {
            bail!("sample_sizes must be a nonempty list of positive sizes");
        }
        if self.x_grid.is_empty() {
            bail!("x_grid must be nonempty");
        }
        if self.x_grid.iter().any(|x| !x.is_finite()) {
            bail!("x_grid values must be finite");
        }
        if !(self.noise_scale >= 0.0) || !self.shape.is_finite() {
            bail!("noise_scale must be nonnegative and shape finite");
        }
        if let Some(a) = self.kb_alpha {
            if !(a > 0.0 && a < 1.0) {
                bail!("kb_alpha must lie in (0, 1), got {a}");
            }
        }
        if self.k_star == 0 || self.k_star > self.d {
            bail!("k_star must lie in 1..=d");
        }
        if !(self.tolerance > 0.0) {
            bail!("tolerance must be positive");
        }
        Ok(())
    }
}
