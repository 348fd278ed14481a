//! The serializable run configuration. Every command resolves its flags and
//! optional config file into a [`RunConfig`], validates it before doing any
//! work, and writes it next to its outputs so the run can be replayed.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};
use spanfuse_core::calibrate::{default_c_grid, LogRegConfig};
use spanfuse_core::fuse::FusionConfig;
use spanfuse_core::ingest::{SplitMode, DEFAULT_TOP_K};
use spanfuse_core::metrics::MetricConfig;
use spanfuse_core::search::{SearchSpec, Strategy, DEFAULT_BUDGET};
use spanfuse_core::synth::SynthSpec;

use crate::UsageError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalOn {
    Train,
    #[default]
    Test,
    All,
}

impl std::str::FromStr for EvalOn {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(EvalOn::Train),
            "test" => Ok(EvalOn::Test),
            "all" => Ok(EvalOn::All),
            other => Err(format!("unknown split `{other}` (train, test, all)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationSettings {
    pub c_grid: Vec<f64>,
    pub folds: usize,
}

impl Default for CalibrationSettings {
    fn default() -> Self {
        CalibrationSettings {
            c_grid: default_c_grid(),
            folds: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSettings {
    pub strategy: Strategy,
    pub k: usize,
    pub k_s: usize,
    pub selection_fusion: Option<FusionConfig>,
    pub pool_top_n: Option<usize>,
    pub budget: u128,
    pub force: bool,
}

impl Default for SearchSettings {
    fn default() -> Self {
        SearchSettings {
            strategy: Strategy::Greedy,
            k: 4,
            k_s: 0,
            selection_fusion: None,
            pool_top_n: None,
            budget: DEFAULT_BUDGET,
            force: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Gold files in split order.
    pub gold: Vec<PathBuf>,
    /// One prediction file per system.
    pub predictions: Vec<PathBuf>,
    /// Directory of fitted calibrators; fitted on the fly when absent and needed.
    pub calibrators: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub split: SplitMode,
    pub metric: MetricConfig,
    pub top_k: usize,
    pub seed: u64,
    pub fusion: FusionConfig,
    pub calibration: CalibrationSettings,
    pub search: SearchSettings,
    /// Split reported by `fuse` and `eval`.
    pub eval_on: EvalOn,
    /// Fused predictions scored by `eval`.
    pub eval_predictions: Option<PathBuf>,
    pub synth: Option<SynthSpec>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            gold: Vec::new(),
            predictions: Vec::new(),
            calibrators: None,
            out_dir: None,
            split: SplitMode::default(),
            metric: MetricConfig::default(),
            top_k: DEFAULT_TOP_K,
            seed: 0,
            fusion: FusionConfig::default(),
            calibration: CalibrationSettings::default(),
            search: SearchSettings::default(),
            eval_on: EvalOn::default(),
            eval_predictions: None,
            synth: None,
        }
    }
}

impl RunConfig {
    /// Reads a JSON or (by `.toml` extension) TOML config file.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let parsed = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| anyhow::anyhow!(UsageError(format!("{}: {e}", path.display()))))?
        } else {
            serde_json::from_str(&text).map_err(|e| anyhow::anyhow!(UsageError(format!("{}: {e}", path.display()))))?
        };
        Ok(parsed)
    }

    pub fn save(&self, dir: &Path) -> anyhow::Result<PathBuf> {
        let path = dir.join("run_config.json");
        write_json(&path, self)?;
        Ok(path)
    }

    pub fn logreg(&self) -> LogRegConfig {
        LogRegConfig {
            c_grid: self.calibration.c_grid.clone(),
            folds: self.calibration.folds,
            seed: self.seed,
        }
    }

    pub fn search_spec(&self) -> SearchSpec {
        SearchSpec {
            strategy: self.search.strategy,
            k: self.search.k,
            k_s: self.search.k_s,
            fusion: self.fusion,
            selection_fusion: self.search.selection_fusion,
            pool_top_n: self.search.pool_top_n,
            budget: self.search.budget,
            force: self.search.force,
        }
    }

    pub fn out_dir(&self) -> anyhow::Result<&Path> {
        self.out_dir
            .as_deref()
            .ok_or_else(|| UsageError("--out-dir is required".into()).into())
    }

    /// Checks everything a data command needs before any compute.
    pub fn validate_data(&self) -> anyhow::Result<()> {
        if self.gold.is_empty() {
            return Err(UsageError("no gold files given (--gold)".into()).into());
        }
        if self.predictions.is_empty() {
            return Err(UsageError("no prediction files given (--pred)".into()).into());
        }
        if self.top_k == 0 {
            return Err(UsageError("--top-k must be at least 1".into()).into());
        }
        if let SplitMode::Fraction { ratio } = self.split {
            if !(0.0..=1.0).contains(&ratio) {
                return Err(UsageError(format!("split fraction {ratio} is outside [0, 1]")).into());
            }
        }
        self.metric.validate()?;
        self.fusion.validate()?;
        Ok(())
    }
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
