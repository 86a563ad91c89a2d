mod encode;
mod generate;
mod impute;
mod report;
mod train;

use std::path::{Path, PathBuf};

use infochoice::data::Dataset;
use infochoice::energy::ModelParams;

pub use encode::encode;
pub use generate::{generate, GenerateArgs};
pub use impute::{impute, ImputeArgs};
pub use report::{report, sensitivity, ReportOptions};
pub use train::train;

use crate::config::LoadedConfig;
use crate::error::{CliError, CliResult};
use crate::output::{Provenance, Sink};

pub const TRAIN_FILE: &str = "train.json";
pub const VALID_FILE: &str = "valid.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const STATE_FILE: &str = "trainer_state.json";

/// Configuration plus per-invocation switches shared by every command.
pub struct Context {
    pub cfg: LoadedConfig,
    pub timing: bool,
}

impl Context {
    pub fn out(&self) -> PathBuf {
        self.cfg.output_dir()
    }

    pub fn sink(&self, schema_hash: &str, seed: u64) -> CliResult<Sink> {
        Sink::new(self.out(), Provenance::new(&self.cfg.hash(), schema_hash, seed))
    }

    fn load_dataset(&self, path: &Path) -> CliResult<Dataset> {
        if !path.exists() {
            return Err(CliError::io(
                path,
                std::io::Error::new(std::io::ErrorKind::NotFound, "encoded dataset not found (run `encode` first)"),
            ));
        }
        Ok(Dataset::load(path)?)
    }

    pub fn datasets(&self) -> CliResult<(Dataset, Dataset)> {
        let out = self.out();
        Ok((self.load_dataset(&out.join(TRAIN_FILE))?, self.load_dataset(&out.join(VALID_FILE))?))
    }

    pub fn dataset(&self, path: Option<&Path>) -> CliResult<Dataset> {
        match path {
            Some(p) => self.load_dataset(p),
            None => self.load_dataset(&self.out().join(VALID_FILE)),
        }
    }

    /// Loads a checkpoint and refuses it when it was fitted against another
    /// schema than `data`'s.
    pub fn checkpoint(&self, path: Option<&Path>, data: &Dataset) -> CliResult<ModelParams> {
        let path = path.map(Path::to_path_buf).unwrap_or_else(|| self.out().join(CHECKPOINT_FILE));
        if !path.exists() {
            return Err(CliError::io(
                &path,
                std::io::Error::new(std::io::ErrorKind::NotFound, "checkpoint not found (run `train` first)"),
            ));
        }
        let (params, hash) = ModelParams::load(&path)?;
        let data_hash = data.schema().hash();
        if hash != data_hash {
            return Err(infochoice::Error::Format(format!(
                "schema hash mismatch: checkpoint {} was fitted against schema {hash}, dataset uses schema {data_hash}",
                path.display()
            ))
            .into());
        }
        Ok(params)
    }
}
