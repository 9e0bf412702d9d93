use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use geoplan_core::crossview::{AlignConfig, SyntheticViewConfig};
use geoplan_core::metrics::{DEFAULT_HIT_THRESHOLD, DEFAULT_VCS_WAYPOINTS};
use geoplan_core::pipeline::{PlanTrainConfig, DEFAULT_DENSIFY, SUCCESS_RADIUS};
use geoplan_core::planner::{DEFAULT_ALPHA, DEFAULT_BETA, DEFAULT_INTERVAL};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct CanvasSettings {
    pub patch_size: usize,
    pub dim: usize,
    /// Maximal pruned spur length in skeleton cells.
    pub max_spur: usize,
    pub samples_per_template: usize,
}

impl Default for CanvasSettings {
    fn default() -> Self {
        Self { patch_size: 4, dim: 32, max_spur: geoplan_core::canvas::DEFAULT_SPUR_LENGTH, samples_per_template: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct AlignSettings {
    pub views: SyntheticViewConfig,
    pub model: AlignConfig,
    /// Share of pairs held out for recall.
    pub holdout: f64,
}

impl Default for AlignSettings {
    fn default() -> Self {
        Self { views: SyntheticViewConfig::default(), model: AlignConfig::default(), holdout: 0.2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct PlannerSettings {
    pub alpha: f64,
    pub beta: f64,
    pub interval: f64,
}

impl Default for PlannerSettings {
    fn default() -> Self {
        Self { alpha: DEFAULT_ALPHA, beta: DEFAULT_BETA, interval: DEFAULT_INTERVAL }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct MetricSettings {
    pub hit_threshold: f64,
    pub densify: f64,
    pub success_radius: f64,
    pub vcs_waypoints: usize,
}

impl Default for MetricSettings {
    fn default() -> Self {
        Self {
            hit_threshold: DEFAULT_HIT_THRESHOLD,
            densify: DEFAULT_DENSIFY,
            success_radius: SUCCESS_RADIUS,
            vcs_waypoints: DEFAULT_VCS_WAYPOINTS,
        }
    }
}

/// One experiment: every section has defaults, the seed does not.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: Option<u64>,
    pub canvas: CanvasSettings,
    pub align: AlignSettings,
    pub plan: PlanTrainConfig,
    pub planner: PlannerSettings,
    pub metrics: MetricSettings,
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn seed(&self) -> Result<u64> {
        match self.seed {
            Some(s) => Ok(s),
            None => bail!("a seed is required: pass --seed or set \"seed\" in the config"),
        }
    }

    /// Resolves `name` against the configured output directory.
    pub fn output(&self, name: &Path) -> PathBuf {
        match &self.output_dir {
            Some(dir) if name.is_relative() => dir.join(name),
            _ => name.to_path_buf(),
        }
    }
}

/// Overwrites `slot` when a flag was given.
pub fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}
