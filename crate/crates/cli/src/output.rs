use std::path::{Path, PathBuf};

use infochoice::trainer::TrainConfig;

use crate::error::{CliError, CliResult};

/// Provenance comment lines prepended to every written table.
#[derive(Debug, Clone)]
pub struct Provenance {
    pub config_hash: String,
    pub schema_hash: String,
    pub seed: u64,
    /// `key=value` settings that shaped the file.
    pub settings: Vec<(String, String)>,
}

impl Provenance {
    pub fn new(config_hash: &str, schema_hash: &str, seed: u64) -> Self {
        Self { config_hash: config_hash.into(), schema_hash: schema_hash.into(), seed, settings: Vec::new() }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.settings.push((key.into(), value.to_string()));
        self
    }

    pub fn with_training(self, t: &TrainConfig) -> Self {
        self.with("latent_count", t.latent_count)
            .with("batch_size", t.batch_size)
            .with("gibbs_steps", t.gibbs_steps)
            .with("learning_rate", t.learning_rate)
            .with("max_epochs", t.max_epochs)
            .with("train_seed", t.seed)
            .with("early_stop_patience", t.early_stop_patience)
            .with("mle_inner_steps", t.mle_inner_steps)
    }

    pub fn header(&self) -> String {
        let mut s = format!(
            "# infochoice {}\n# config_sha256: {}\n# schema_sha256: {}\n# seed: {}\n",
            env!("CARGO_PKG_VERSION"),
            self.config_hash,
            self.schema_hash,
            self.seed
        );
        if !self.settings.is_empty() {
            let kv: Vec<String> = self.settings.iter().map(|(k, v)| format!("{k}={v}")).collect();
            s.push_str(&format!("# settings: {}\n", kv.join(" ")));
        }
        s
    }
}

/// Output directory plus the provenance shared by the files of one command.
pub struct Sink {
    pub dir: PathBuf,
    pub provenance: Provenance,
}

impl Sink {
    pub fn new(dir: PathBuf, provenance: Provenance) -> CliResult<Self> {
        std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        Ok(Self { dir, provenance })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Writes a table produced by `fill` below the provenance header.
    pub fn table<F>(&self, name: &str, fill: F) -> CliResult<PathBuf>
    where
        F: FnOnce(&mut Vec<u8>) -> infochoice::Result<()>,
    {
        let mut buf = self.provenance.header().into_bytes();
        fill(&mut buf)?;
        let path = self.path(name);
        write_bytes(&path, &buf)?;
        Ok(path)
    }

    /// Writes a plain-text file below the provenance header.
    pub fn text(&self, name: &str, body: &str) -> CliResult<PathBuf> {
        let path = self.path(name);
        write_bytes(&path, format!("{}{body}", self.provenance.header()).as_bytes())?;
        Ok(path)
    }
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> CliResult<()> {
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

/// Parses a comma-separated list of latent sizes.
pub fn parse_sizes(text: &str) -> Result<Vec<usize>, String> {
    text.split(',')
        .map(|s| {
            let s = s.trim();
            let s = s.strip_prefix("S=").unwrap_or(s);
            s.parse::<usize>().map_err(|_| format!("`{s}` is not a latent size"))
        })
        .collect()
}
