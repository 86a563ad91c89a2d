//! Joint energy of the tri-partite model and the closed forms derived from
//! it: factorized latent posterior, entropy correction and free energy.
//!
//! The energy of a configuration is
//!
//! ```text
//! E(x, s, y) = -x'beta y - x'W s - s'W' y - d'x - c'y - alpha's
//! ```
//!
//! with `y` the one-hot alternative and `s` binary latents. Alternatives are
//! passed as indices; dimension mismatches are contract violations and panic.

mod conditional;
mod params;

pub use conditional::{
    block_log_partition, conditional_observed_params, sample_block, BlockParams, ObservedConditional,
};
pub(crate) use conditional::check_schema;
pub use params::{Dims, ModelParams, ParamBlock, ParamsFile, PARAMS_FORMAT, PARAMS_VERSION};

use ndarray::ArrayView1;

use crate::error::{Error, Result};
use crate::math::{sigmoid, softplus};

/// Binary latent configuration.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LatentState(Vec<bool>);

impl LatentState {
    pub fn new(bits: Vec<bool>) -> Self {
        Self(bits)
    }

    pub fn zeros(h: usize) -> Self {
        Self(vec![false; h])
    }

    /// Configuration `index` of `2^h`, bit `k` of the index is latent `k`.
    pub fn from_index(index: u64, h: usize) -> Self {
        Self((0..h).map(|k| (index >> k) & 1 == 1).collect())
    }

    /// Strictly 0/1 values; anything else is rejected.
    pub fn from_values(values: &[f64]) -> Result<Self> {
        values
            .iter()
            .map(|&v| match v {
                0.0 => Ok(false),
                1.0 => Ok(true),
                other => Err(Error::InvalidArgument(format!("latent value {other} is not binary"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(Self)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }
}

fn check_x(x: &ArrayView1<f64>, params: &ModelParams) {
    assert_eq!(x.len(), params.n_explanatory(), "x has length {}, model expects M = {}", x.len(), params.n_explanatory());
}

fn check_alt(j: usize, params: &ModelParams) {
    assert!(j < params.n_alternatives(), "alternative {j} out of range 0..{}", params.n_alternatives());
}

/// `(x'W)_h + alpha_h` for every latent.
pub fn latent_input(x: ArrayView1<f64>, params: &ModelParams) -> Vec<f64> {
    check_x(&x, params);
    let mut out = params.alpha.to_vec();
    for (xm, wrow) in x.iter().zip(params.w.rows()) {
        if *xm != 0.0 {
            for (o, w) in out.iter_mut().zip(wrow.iter()) {
                *o += xm * w;
            }
        }
    }
    out
}

/// `(beta_j + d)'x + c_j`, the observed utility of every alternative.
pub fn observed_utility(x: ArrayView1<f64>, params: &ModelParams) -> Vec<f64> {
    check_x(&x, params);
    let dx: f64 = x.dot(&params.d);
    let mut nu = params.c.to_vec();
    for (xm, brow) in x.iter().zip(params.beta.rows()) {
        if *xm != 0.0 {
            for (n, b) in nu.iter_mut().zip(brow.iter()) {
                *n += xm * b;
            }
        }
    }
    nu.iter_mut().for_each(|n| *n += dx);
    nu
}

pub fn joint_energy(x: ArrayView1<f64>, s: &LatentState, y: usize, params: &ModelParams) -> f64 {
    check_x(&x, params);
    check_alt(y, params);
    assert_eq!(s.len(), params.n_latent(), "latent state length mismatch");
    let beta_y = params.beta.column(y);
    let mut e = -x.dot(&beta_y) - x.dot(&params.d) - params.c[y];
    for (h, &on) in s.bits().iter().enumerate() {
        if on {
            e -= x.dot(&params.w.column(h)) + params.w_prime[[h, y]] + params.alpha[h];
        }
    }
    e
}

/// `p(s_h = 1 | x, y)` for every latent.
pub fn latent_posterior(x: ArrayView1<f64>, y: usize, params: &ModelParams) -> Vec<f64> {
    check_alt(y, params);
    let mut a = latent_input(x, params);
    for (h, v) in a.iter_mut().enumerate() {
        *v = sigmoid(*v + params.w_prime[[h, y]]);
    }
    a
}

/// Entropy correction `H_j = sum_h softplus((x'W)_h + W'_hj + alpha_h)`.
pub fn entropy_term(x: ArrayView1<f64>, j: usize, params: &ModelParams) -> Result<f64> {
    if j >= params.n_alternatives() {
        return Err(Error::InvalidArgument(format!(
            "alternative index {j} out of range 0..{}",
            params.n_alternatives()
        )));
    }
    let a = latent_input(x, params);
    Ok(entropy_from_input(&a, j, params))
}

pub(crate) fn entropy_from_input(latent_input: &[f64], j: usize, params: &ModelParams) -> f64 {
    latent_input.iter().enumerate().map(|(h, a)| softplus(a + params.w_prime[[h, j]])).sum()
}

/// Free energy `-log sum_s exp(-E(x, s, y))` in closed form.
pub fn free_energy(x: ArrayView1<f64>, y: usize, params: &ModelParams) -> f64 {
    check_alt(y, params);
    let nu = observed_utility(x, params);
    let a = latent_input(x, params);
    -nu[y] - entropy_from_input(&a, y, params)
}
