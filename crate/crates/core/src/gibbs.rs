//! Blocked Gibbs sampling over the latent layer and the observed layer.
//!
//! One sweep draws `s ~ p(s | x, y)` (one uniform per latent), then the free
//! parts of `(x, y)` from `p(x, y | s)`: the choice first, then each free
//! explanatory block in schema order.

use ndarray::{Array1, ArrayView1};
use rand::Rng;

use crate::data::EncodingSchema;
use crate::energy::{check_schema, latent_posterior, LatentState, ModelParams, ObservedConditional};
use crate::error::{Error, Result};

/// Which parts of the observed layer a sweep may overwrite.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clamp {
    pub free_blocks: Vec<bool>,
    pub free_choice: bool,
}

impl Clamp {
    /// Everything free.
    pub fn none(schema: &EncodingSchema) -> Self {
        Self { free_blocks: vec![true; schema.blocks().len()], free_choice: true }
    }
}

/// Mutable chain state.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub x: Vec<f64>,
    pub y: usize,
    pub s: Vec<bool>,
}

impl ChainState {
    pub fn new(x: Vec<f64>, y: usize, h: usize) -> Self {
        Self { x, y, s: vec![false; h] }
    }

    pub fn latent(&self) -> LatentState {
        LatentState::new(self.s.clone())
    }
}

/// Draws the latent layer given the current observed layer.
pub fn sample_latents<R: Rng + ?Sized>(state: &mut ChainState, params: &ModelParams, rng: &mut R) {
    let q = latent_posterior(ArrayView1::from(&state.x), state.y, params);
    for (s, p) in state.s.iter_mut().zip(q) {
        *s = rng.random::<f64>() < p;
    }
}

/// One full sweep: latents, then the free observed blocks.
pub fn sweep<R: Rng + ?Sized>(
    state: &mut ChainState,
    params: &ModelParams,
    schema: &EncodingSchema,
    clamp: &Clamp,
    rng: &mut R,
) {
    sample_latents(state, params, rng);
    let cond = ObservedConditional::from_bits(&state.s, params);
    cond.sample_into(schema, params, &mut state.x, &mut state.y, &clamp.free_blocks, clamp.free_choice, rng);
}

/// Runs `n` unclamped sweeps from `(x0, y0)` and returns the final observed
/// sample and the latent draw that produced it.
pub fn blocked_gibbs_chain<R: Rng + ?Sized>(
    x0: ArrayView1<f64>,
    y0: usize,
    params: &ModelParams,
    schema: &EncodingSchema,
    n: usize,
    rng: &mut R,
) -> Result<(Array1<f64>, usize, LatentState)> {
    check_schema(params, schema)?;
    if x0.len() != params.n_explanatory() || y0 >= params.n_alternatives() {
        return Err(Error::Dimension("initial sample does not match the model".into()));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("a Gibbs chain needs at least one step".into()));
    }
    let clamp = Clamp::none(schema);
    let mut state = ChainState::new(x0.to_vec(), y0, params.n_latent());
    for _ in 0..n {
        sweep(&mut state, params, schema, &clamp, rng);
    }
    let s = state.latent();
    Ok((Array1::from(state.x), state.y, s))
}
