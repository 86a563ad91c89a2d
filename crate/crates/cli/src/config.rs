//! Experiment configuration file.
//!
//! One TOML file describes the raw data, the variable specifications and the
//! settings of every command. Relative paths are resolved against the
//! directory containing the file. Command-line flags override file values;
//! the hash of the effective configuration is stamped on every output.

use std::path::{Path, PathBuf};

use infochoice::data::VariableSpec;
use infochoice::generator::{DEFAULT_BURN_IN, DEFAULT_THIN};
use infochoice::trainer::TrainConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// Raw CSV with one trip per row.
    pub raw: PathBuf,
    /// Column holding record ids; row numbers are used when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id_column: Option<String>,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    /// Seed of the train/validation split.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_train_fraction() -> f64 {
    0.7
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateSection {
    pub count: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub chains: usize,
    pub seed: u64,
    /// Histogram bins for continuous and cyclical fit reports.
    pub bins: usize,
}

impl Default for GenerateSection {
    fn default() -> Self {
        Self { count: 1000, burn_in: DEFAULT_BURN_IN, thin: DEFAULT_THIN, chains: 8, seed: 0, bins: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportSection {
    pub activation_threshold: f64,
    /// Latent sizes of the coefficient sensitivity table.
    pub sensitivity_sizes: Vec<usize>,
}

impl Default for ReportSection {
    fn default() -> Self {
        Self { activation_threshold: 0.5, sensitivity_sizes: vec![0, 5, 20, 35, 50] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImputeSection {
    /// Partial records to complete (raw CSV; target columns may be empty).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    pub targets: Vec<String>,
    pub steps: usize,
    /// Imputed versions written per input record.
    pub draws: usize,
    pub seed: u64,
}

impl Default for ImputeSection {
    fn default() -> Self {
        Self { input: None, targets: Vec::new(), steps: 100, draws: 1, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataSection,
    pub variables: Vec<VariableSpec>,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub generate: GenerateSection,
    #[serde(default)]
    pub report: ReportSection,
    #[serde(default)]
    pub impute: ImputeSection,
}

/// A parsed configuration and the directory its relative paths refer to.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub base_dir: PathBuf,
}

impl LoadedConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let config: ExperimentConfig = toml::from_str(&text)
            .map_err(|e| CliError::Config { path: path.display().to_string(), message: e.to_string() })?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { config, base_dir })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn raw_path(&self) -> PathBuf {
        self.resolve(&self.config.data.raw)
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.config.data.output_dir)
    }

    /// SHA-256 of the effective configuration in canonical TOML form.
    pub fn hash(&self) -> String {
        let text = toml::to_string(&self.config).expect("configuration serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}
