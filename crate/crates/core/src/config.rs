//! Run configuration, read from a single TOML file.
//!
//! ```toml
//! seed = 42
//! log_target = true
//!
//! [paths]
//! panel = "panel.csv"
//! model = "model.json"
//! out_dir = "out"
//!
//! [split]
//! train_end_month = 144
//! forecast_start_month = 145
//! horizon = 12
//!
//! [features]
//! half_life = 12.0
//! # omit `groups` to use the panel's column groups with default counts
//! [[features.groups]]
//! name = "vdem"
//! columns = ["vdem_1", "vdem_2", "vdem_3"]
//! n_components = 2
//!
//! [classifier]          # transition forests
//! n_trees = 500
//! max_features = "sqrt" # or { count = 4 } / { fraction = 0.5 } / "third" / "all"
//! min_leaf_size = 5
//! bootstrap = true
//!
//! [regressor]           # outcome quantile forests
//! n_trees = 500
//! max_features = "third"
//! min_leaf_size = 10
//! bootstrap = true
//!
//! [simulation]
//! n_draws = 1000
//!
//! [metrics]
//! alpha = 0.1
//! [metrics.binning]
//! lower_edges = [0, 1, 3, 6, 11, 26, 51, 101, 251, 501, 1001]
//! floor = 0.001
//!
//! [backtest]
//! origins = [120, 132, 144]   # training cutoffs
//!
//! [synth]                     # see SynthConfig
//! n_units = 50
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::features::{FeatureGroupSpec, DEFAULT_HALF_LIFE};
use crate::forest::ForestHyperparams;
use crate::markov::TrainSettings;
use crate::metrics::MetricConfig;
use crate::panel::{SplitSpec, SynthConfig};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub panel: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub half_life: f64,
    pub groups: Vec<FeatureGroupSpec>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            half_life: DEFAULT_HALF_LIFE,
            groups: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BacktestConfig {
    /// Training cutoffs; each forecasts the following `split.horizon` months.
    pub origins: Vec<i64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSection {
    pub n_draws: usize,
}

impl Default for SimulationSection {
    fn default() -> Self {
        Self {
            n_draws: crate::simulate::DEFAULT_DRAWS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub log_target: bool,
    pub paths: PathsConfig,
    pub split: Option<SplitSpec>,
    pub features: FeatureConfig,
    pub classifier: ForestHyperparams,
    pub regressor: ForestHyperparams,
    pub simulation: SimulationSection,
    pub metrics: MetricConfig,
    pub backtest: BacktestConfig,
    pub synth: SynthConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            log_target: true,
            paths: PathsConfig::default(),
            split: None,
            features: FeatureConfig::default(),
            classifier: ForestHyperparams::classifier_default(),
            regressor: ForestHyperparams::regression_default(),
            simulation: SimulationSection::default(),
            metrics: MetricConfig::default(),
            backtest: BacktestConfig::default(),
            synth: SynthConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.simulation.n_draws == 0 {
            return Err(Error::invalid("simulation.n_draws", "must be at least 1"));
        }
        if !(self.features.half_life > 0.0) {
            return Err(Error::invalid("features.half_life", "must be positive"));
        }
        let a = self.metrics.alpha;
        if !(a > 0.0 && a < 1.0) {
            return Err(Error::invalid("metrics.alpha", "must lie in (0, 1)"));
        }
        self.metrics.binning.validate()?;
        for (name, h) in [("classifier", &self.classifier), ("regressor", &self.regressor)] {
            if h.n_trees == 0 {
                return Err(Error::invalid(format!("{name}.n_trees"), "must be at least 1"));
            }
            if h.min_leaf_size == 0 {
                return Err(Error::invalid(format!("{name}.min_leaf_size"), "must be at least 1"));
            }
        }
        if let Some(split) = &self.split {
            split.validate()?;
        }
        self.synth.validate().map_err(|e| match e {
            Error::InvalidParameter { field, reason } => Error::InvalidParameter {
                field: format!("synth.{field}"),
                reason,
            },
            other => other,
        })
    }

    pub fn split(&self) -> Result<SplitSpec> {
        self.split
            .ok_or_else(|| Error::Config("missing [split] section".into()))
    }

    /// Hex SHA-256 of the canonical JSON form of this configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("run config serializes");
        Sha256::digest(&json)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn train_settings(&self, groups: Vec<FeatureGroupSpec>, seed: u64) -> TrainSettings {
        TrainSettings {
            groups,
            half_life: self.features.half_life,
            classifier: self.classifier,
            regressor: self.regressor,
            log_target: self.log_target,
            seed,
        }
    }
}

/// Command, config hash, seed and code version written next to every output artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactMeta {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub code_version: String,
}

impl ArtifactMeta {
    pub fn new(command: &str, cfg: &RunConfig) -> Self {
        Self {
            command: command.to_string(),
            config_hash: cfg.hash(),
            seed: cfg.seed,
            code_version: crate::CODE_VERSION.to_string(),
        }
    }

    /// Writes `<artifact>.meta.json`.
    pub fn write_sidecar(&self, artifact: impl AsRef<Path>) -> Result<PathBuf> {
        let mut p = artifact.as_ref().as_os_str().to_owned();
        p.push(".meta.json");
        let p = PathBuf::from(p);
        let json = serde_json::to_string_pretty(self)?;
        fs::write(&p, json + "\n").map_err(|e| Error::io(&p, e))?;
        Ok(p)
    }
}
