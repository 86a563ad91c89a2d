use std::path::Path;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const PARAMS_FORMAT: &str = "infochoice-params";
pub const PARAMS_VERSION: u32 = 1;

/// Coefficients of the joint energy over explanatory values `x` (M),
/// latent bits `s` (H) and the chosen alternative `y` (J).
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// Choice coefficients, M x J.
    pub beta: Array2<f64>,
    /// Explanatory constants, M.
    pub d: Array1<f64>,
    /// Alternative-specific constants, J.
    pub c: Array1<f64>,
    /// Latent constants, H.
    pub alpha: Array1<f64>,
    /// Explanatory-latent couplings, M x H.
    pub w: Array2<f64>,
    /// Latent-choice couplings, H x J.
    pub w_prime: Array2<f64>,
}

/// Parameter blocks, used for gradient bookkeeping and error reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamBlock {
    Beta,
    D,
    C,
    Alpha,
    W,
    WPrime,
}

impl ParamBlock {
    pub const ALL: [ParamBlock; 6] =
        [ParamBlock::Beta, ParamBlock::D, ParamBlock::C, ParamBlock::Alpha, ParamBlock::W, ParamBlock::WPrime];

    pub fn name(self) -> &'static str {
        match self {
            ParamBlock::Beta => "beta",
            ParamBlock::D => "d",
            ParamBlock::C => "c",
            ParamBlock::Alpha => "alpha",
            ParamBlock::W => "W",
            ParamBlock::WPrime => "W'",
        }
    }
}

impl ModelParams {
    pub fn zeros(m: usize, j: usize, h: usize) -> Self {
        Self {
            beta: Array2::zeros((m, j)),
            d: Array1::zeros(m),
            c: Array1::zeros(j),
            alpha: Array1::zeros(h),
            w: Array2::zeros((m, h)),
            w_prime: Array2::zeros((h, j)),
        }
    }

    /// Zero constants and choice coefficients; couplings drawn from
    /// `Normal(0, scale^2)`.
    pub fn init_random<R: Rng + ?Sized>(m: usize, j: usize, h: usize, scale: f64, rng: &mut R) -> Self {
        let mut p = Self::zeros(m, j, h);
        let normal = Normal::new(0.0, scale).expect("finite scale");
        p.w.iter_mut().for_each(|v| *v = normal.sample(rng));
        p.w_prime.iter_mut().for_each(|v| *v = normal.sample(rng));
        p
    }

    pub fn from_parts(
        beta: Array2<f64>,
        d: Array1<f64>,
        c: Array1<f64>,
        alpha: Array1<f64>,
        w: Array2<f64>,
        w_prime: Array2<f64>,
    ) -> Result<Self> {
        let p = Self { beta, d, c, alpha, w, w_prime };
        p.validate()?;
        Ok(p)
    }

    /// Encoded explanatory width M.
    pub fn n_explanatory(&self) -> usize {
        self.d.len()
    }

    /// Alternative count J.
    pub fn n_alternatives(&self) -> usize {
        self.c.len()
    }

    /// Latent count H.
    pub fn n_latent(&self) -> usize {
        self.alpha.len()
    }

    pub fn validate(&self) -> Result<()> {
        let (m, j, h) = (self.n_explanatory(), self.n_alternatives(), self.n_latent());
        let shapes = [
            ("beta", self.beta.dim(), (m, j)),
            ("W", self.w.dim(), (m, h)),
            ("W'", self.w_prime.dim(), (h, j)),
        ];
        for (name, got, want) in shapes {
            if got != want {
                return Err(Error::Dimension(format!("{name} is {got:?}, expected {want:?}")));
            }
        }
        if let Some(block) = self.first_non_finite() {
            return Err(Error::Format(format!("parameter block `{}` contains non-finite values", block.name())));
        }
        Ok(())
    }

    pub fn block_values(&self, block: ParamBlock) -> &[f64] {
        match block {
            ParamBlock::Beta => self.beta.as_slice(),
            ParamBlock::D => self.d.as_slice(),
            ParamBlock::C => self.c.as_slice(),
            ParamBlock::Alpha => self.alpha.as_slice(),
            ParamBlock::W => self.w.as_slice(),
            ParamBlock::WPrime => self.w_prime.as_slice(),
        }
        .expect("parameter arrays are contiguous")
    }

    pub fn first_non_finite(&self) -> Option<ParamBlock> {
        ParamBlock::ALL.into_iter().find(|&b| self.block_values(b).iter().any(|v| !v.is_finite()))
    }

    /// SHA-256 over dimensions and the bit patterns of every block.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for dim in [self.n_explanatory(), self.n_alternatives(), self.n_latent()] {
            h.update((dim as u64).to_le_bytes());
        }
        for block in ParamBlock::ALL {
            for v in self.block_values(block) {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    /// Checksum of the generative blocks {d, alpha, W, W'} only.
    pub fn generative_checksum(&self) -> String {
        let mut h = Sha256::new();
        for block in [ParamBlock::D, ParamBlock::Alpha, ParamBlock::W, ParamBlock::WPrime] {
            for v in self.block_values(block) {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    /// Choice coefficients relative to the first alternative (column 0 is
    /// subtracted from every column).
    pub fn relative_beta(&self) -> Array2<f64> {
        let base = self.beta.column(0).to_owned();
        let mut rel = self.beta.clone();
        for mut col in rel.columns_mut() {
            col -= &base;
        }
        rel
    }

    pub fn to_file(&self, schema_hash: &str) -> ParamsFile {
        ParamsFile {
            format: PARAMS_FORMAT.into(),
            version: PARAMS_VERSION,
            schema_hash: schema_hash.to_string(),
            dims: Dims { m: self.n_explanatory(), j: self.n_alternatives(), h: self.n_latent() },
            beta: self.beta.iter().copied().collect(),
            d: self.d.to_vec(),
            c: self.c.to_vec(),
            alpha: self.alpha.to_vec(),
            w: self.w.iter().copied().collect(),
            w_prime: self.w_prime.iter().copied().collect(),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>, schema_hash: &str) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(&self.to_file(schema_hash))?;
        bytes.push(b'\n');
        std::fs::write(path.as_ref(), bytes).map_err(|e| Error::io(path, e))
    }

    /// Loads parameters and the schema hash they were fitted against.
    pub fn load(path: impl AsRef<Path>) -> Result<(Self, String)> {
        let bytes = std::fs::read(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        let file: ParamsFile = serde_json::from_slice(&bytes)?;
        file.into_params()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub m: usize,
    pub j: usize,
    pub h: usize,
}

/// Serialized parameter container. Matrices are row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsFile {
    pub format: String,
    pub version: u32,
    pub schema_hash: String,
    pub dims: Dims,
    pub beta: Vec<f64>,
    pub d: Vec<f64>,
    pub c: Vec<f64>,
    pub alpha: Vec<f64>,
    pub w: Vec<f64>,
    pub w_prime: Vec<f64>,
}

impl ParamsFile {
    pub fn into_params(self) -> Result<(ModelParams, String)> {
        if self.format != PARAMS_FORMAT {
            return Err(Error::Format(format!("expected format `{PARAMS_FORMAT}`, found `{}`", self.format)));
        }
        if self.version != PARAMS_VERSION {
            return Err(Error::Format(format!("unsupported parameter version {}", self.version)));
        }
        let Dims { m, j, h } = self.dims;
        let mat = |name: &str, rows: usize, cols: usize, v: Vec<f64>| {
            Array2::from_shape_vec((rows, cols), v)
                .map_err(|_| Error::Dimension(format!("{name} length does not match {rows}x{cols}")))
        };
        let vec = |name: &str, len: usize, v: Vec<f64>| {
            if v.len() == len {
                Ok(Array1::from(v))
            } else {
                Err(Error::Dimension(format!("{name} has length {}, expected {len}", v.len())))
            }
        };
        let params = ModelParams::from_parts(
            mat("beta", m, j, self.beta)?,
            vec("d", m, self.d)?,
            vec("c", j, self.c)?,
            vec("alpha", h, self.alpha)?,
            mat("W", m, h, self.w)?,
            mat("W'", h, j, self.w_prime)?,
        )?;
        Ok((params, self.schema_hash))
    }
}
