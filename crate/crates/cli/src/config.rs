//! Run configuration, its digest and the provenance header stamped on
//! every artifact.

use std::path::{Path, PathBuf};

use causalkg::eval::EvalConfig;
use causalkg::kg::{SplitRatios, Variant};
use causalkg::models::ModelConfig;
use causalkg::train::TrainConfig;
use causalkg::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const TOOL: &str = "causalkg";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Default artifact locations; command-line flags take precedence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub corpus: Option<PathBuf>,
    pub networks: Option<PathBuf>,
    pub kg: Option<PathBuf>,
    pub splits: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub reports: Option<PathBuf>,
}

/// Everything a pipeline run depends on. Every field has a default, so
/// `{}` is a valid configuration.
///
/// `seed` drives the split, initialization and training; it replaces
/// whatever `train.seed` says.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub variant: Variant,
    pub mediated: bool,
    pub ratios: SplitRatios,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            variant: Variant::C,
            mediated: false,
            ratios: SplitRatios::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            paths: Paths::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.ratios.validate()?;
        self.model.validate()?;
        self.train_config().validate()
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train
        }
    }

    /// Hex SHA-256 of the canonical JSON encoding. Paths are left out so
    /// that the same settings in another directory share a digest.
    pub fn digest(&self) -> String {
        let canonical = RunConfig {
            paths: Paths::default(),
            train: self.train_config(),
            ..self.clone()
        };
        let bytes = serde_json::to_vec(&canonical).expect("config serializes");
        format!("{:x}", Sha256::digest(&bytes))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

/// Parses and validates a configuration document. Schema errors name the
/// offending key as a dotted path.
pub fn parse_config(bytes: &[u8]) -> Result<RunConfig> {
    let de = &mut serde_json::Deserializer::from_slice(bytes);
    let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        let location = if path == "." { format!("line {}", inner.line()) } else { path };
        Error::Validation(format!("config {location}: {inner}"))
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_config(&bytes)
}

/// Provenance record opening every artifact.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Header {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config_digest: String,
}

impl Header {
    pub fn new(command: &str, cfg: &RunConfig) -> Self {
        Header {
            tool: TOOL,
            version: VERSION,
            command: command.to_string(),
            config_digest: cfg.digest(),
        }
    }

    /// Single-line form for the text graph format.
    pub fn line(&self) -> String {
        format!(
            "{} {} {} config-sha256 {}",
            self.tool, self.version, self.command, self.config_digest
        )
    }

    pub fn json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("header serializes")
    }
}
