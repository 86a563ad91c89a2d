use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{Block, BlockKind, EncodingSchema};
use crate::error::{Error, Result};
use crate::math::{log_bessel_i0, logsumexp, sample_bernoulli, sample_categorical_logits, sample_von_mises, sigmoid};

use super::{LatentState, ModelParams};

/// Sampling parameters of one explanatory block given the latents (and
/// optionally the choice).
#[derive(Debug, Clone, PartialEq)]
pub enum BlockParams {
    /// Softmax logits over the levels.
    Categorical { logits: Vec<f64> },
    /// Mean of a unit-variance Gaussian in encoded space.
    Gaussian { mean: f64 },
    /// Success probability.
    Bernoulli { p: f64 },
    /// Linear activation on the (sin, cos) pair; the angle is von Mises with
    /// concentration `|activation|`.
    Circular { activation: [f64; 2] },
}

/// Conditional of the observed layer `(x, y)` given a latent configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedConditional {
    /// `d + W s`, one entry per encoded column.
    pub activation: Vec<f64>,
    /// `c + W'^T s`, the latent part of each alternative's logit.
    pub latent_choice: Vec<f64>,
}

pub fn conditional_observed_params(
    s: &LatentState,
    params: &ModelParams,
    schema: &EncodingSchema,
) -> Result<ObservedConditional> {
    check_schema(params, schema)?;
    if s.len() != params.n_latent() {
        return Err(Error::Dimension(format!("latent state has {} entries, model has H = {}", s.len(), params.n_latent())));
    }
    Ok(ObservedConditional::from_bits(s.bits(), params))
}

pub(crate) fn check_schema(params: &ModelParams, schema: &EncodingSchema) -> Result<()> {
    if schema.encoded_width() != params.n_explanatory() || schema.n_alternatives() != params.n_alternatives() {
        return Err(Error::Dimension(format!(
            "schema describes M = {}, J = {} but parameters have M = {}, J = {}",
            schema.encoded_width(),
            schema.n_alternatives(),
            params.n_explanatory(),
            params.n_alternatives()
        )));
    }
    Ok(())
}

impl ObservedConditional {
    pub(crate) fn from_bits(bits: &[bool], params: &ModelParams) -> Self {
        let mut activation = params.d.to_vec();
        let mut latent_choice = params.c.to_vec();
        for (h, _) in bits.iter().enumerate().filter(|(_, &b)| b) {
            for (a, w) in activation.iter_mut().zip(params.w.column(h)) {
                *a += w;
            }
            for (l, w) in latent_choice.iter_mut().zip(params.w_prime.row(h)) {
                *l += w;
            }
        }
        Self { activation, latent_choice }
    }

    /// Activation of `block`, shifted by `beta[block, choice]` when a choice
    /// is given.
    pub fn block_activation(&self, block: &Block, params: &ModelParams, choice: Option<usize>) -> Vec<f64> {
        let mut a = self.activation[block.range()].to_vec();
        if let Some(j) = choice {
            for (v, m) in a.iter_mut().zip(block.range()) {
                *v += params.beta[[m, j]];
            }
        }
        a
    }

    /// Per-block sampling parameters in schema order.
    pub fn block_params(&self, schema: &EncodingSchema, params: &ModelParams, choice: Option<usize>) -> Vec<BlockParams> {
        schema
            .blocks()
            .iter()
            .map(|b| {
                let a = self.block_activation(b, params, choice);
                match b.kind {
                    BlockKind::Categorical => BlockParams::Categorical { logits: a },
                    BlockKind::Continuous => BlockParams::Gaussian { mean: a[0] },
                    BlockKind::Binary => BlockParams::Bernoulli { p: sigmoid(a[0]) },
                    BlockKind::Cyclical => BlockParams::Circular { activation: [a[0], a[1]] },
                }
            })
            .collect()
    }

    /// Log-weights of `p(y = j | s, x_clamped)`, marginalizing the free
    /// blocks. Clamped blocks contribute `x_b' beta_bj` using the values in `x`.
    pub fn choice_logits(&self, schema: &EncodingSchema, params: &ModelParams, x: &[f64], free: &[bool]) -> Vec<f64> {
        let mut logits = self.latent_choice.clone();
        for (j, l) in logits.iter_mut().enumerate() {
            for (b, &is_free) in schema.blocks().iter().zip(free) {
                if is_free {
                    *l += block_log_partition(b.kind, &self.block_activation(b, params, Some(j)));
                } else {
                    *l += b.range().map(|m| x[m] * params.beta[[m, j]]).sum::<f64>();
                }
            }
        }
        logits
    }

    /// Draws the free parts of `(x, y)` in place. When the choice is free it
    /// is drawn first (one uniform), then every free block in schema order
    /// given that choice.
    #[allow(clippy::too_many_arguments)]
    pub fn sample_into<R: Rng + ?Sized>(
        &self,
        schema: &EncodingSchema,
        params: &ModelParams,
        x: &mut [f64],
        y: &mut usize,
        free_blocks: &[bool],
        free_choice: bool,
        rng: &mut R,
    ) {
        if free_choice {
            let logits = self.choice_logits(schema, params, x, free_blocks);
            *y = sample_categorical_logits(&logits, rng);
        }
        for (b, &is_free) in schema.blocks().iter().zip(free_blocks) {
            if is_free {
                let a = self.block_activation(b, params, Some(*y));
                sample_block(b.kind, &a, rng, &mut x[b.range()]);
            }
        }
    }
}

/// Log normalizer of one block's conditional with activation `a`, relative to
/// the block's base measure (counting measure, unit Gaussian density, or the
/// uniform angle).
pub fn block_log_partition(kind: BlockKind, a: &[f64]) -> f64 {
    match kind {
        BlockKind::Categorical => logsumexp(a),
        BlockKind::Binary => crate::math::softplus(a[0]),
        BlockKind::Continuous => 0.5 * a[0] * a[0],
        BlockKind::Cyclical => log_bessel_i0(a[0].hypot(a[1])),
    }
}

/// Draws one block into `out` given its activation.
pub fn sample_block<R: Rng + ?Sized>(kind: BlockKind, a: &[f64], rng: &mut R, out: &mut [f64]) {
    match kind {
        BlockKind::Categorical => {
            let k = sample_categorical_logits(a, rng);
            out.fill(0.0);
            out[k] = 1.0;
        }
        BlockKind::Binary => out[0] = if sample_bernoulli(sigmoid(a[0]), rng) { 1.0 } else { 0.0 },
        BlockKind::Continuous => {
            let z: f64 = StandardNormal.sample(rng);
            out[0] = a[0] + z;
        }
        BlockKind::Cyclical => {
            let kappa = a[0].hypot(a[1]);
            let theta = sample_von_mises(a[0].atan2(a[1]), kappa, rng);
            let (sin, cos) = theta.sin_cos();
            let norm = sin.hypot(cos);
            out[0] = sin / norm;
            out[1] = cos / norm;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::VariableSpec;
    use crate::rng::stream_rng;
    use ndarray::array;
    use std::collections::BTreeMap;

    fn schema() -> EncodingSchema {
        let mut stats = BTreeMap::new();
        stats.insert("dist".to_string(), crate::data::LogStats { mean: 0.0, std: 1.0 });
        EncodingSchema::new(
            vec![
                VariableSpec::categorical("act", &["a", "b", "c"]),
                VariableSpec::continuous("dist"),
                VariableSpec::binary("peak"),
                VariableSpec::cyclical("hour", 24.0),
                VariableSpec::choice("mode", &["x", "y"]),
            ],
            stats,
        )
        .unwrap()
    }

    #[test]
    fn zero_state_gives_uniform_logits_and_zero_means() {
        let sc = schema();
        let p = ModelParams::zeros(sc.encoded_width(), 2, 3);
        let cond = conditional_observed_params(&LatentState::zeros(3), &p, &sc).unwrap();
        let bp = cond.block_params(&sc, &p, None);
        assert_eq!(bp[0], BlockParams::Categorical { logits: vec![0.0; 3] });
        assert_eq!(bp[1], BlockParams::Gaussian { mean: 0.0 });
        assert_eq!(bp[2], BlockParams::Bernoulli { p: 0.5 });
        assert_eq!(bp[3], BlockParams::Circular { activation: [0.0, 0.0] });
    }

    #[test]
    fn single_latent_adds_its_column() {
        let sc = schema();
        let mut rng = stream_rng(3, &[]);
        let p = ModelParams::init_random(sc.encoded_width(), 2, 3, 1.0, &mut rng);
        let mut p = p;
        p.d.iter_mut().enumerate().for_each(|(i, v)| *v = 0.1 * i as f64);
        let cond = conditional_observed_params(&LatentState::new(vec![false, true, false]), &p, &sc).unwrap();
        for m in 0..sc.encoded_width() {
            assert_eq!(cond.activation[m], p.d[m] + p.w[[m, 1]]);
        }
    }

    #[test]
    fn width_mismatch_is_an_error() {
        let sc = schema();
        let p = ModelParams::zeros(3, 2, 1);
        assert!(conditional_observed_params(&LatentState::zeros(1), &p, &sc).is_err());
    }

    #[test]
    fn samples_keep_encoding_invariants() {
        let sc = schema();
        let mut rng = stream_rng(4, &[]);
        let p = ModelParams::init_random(sc.encoded_width(), 2, 2, 2.0, &mut rng);
        let cond = conditional_observed_params(&LatentState::new(vec![true, false]), &p, &sc).unwrap();
        let mut x = vec![0.0; sc.encoded_width()];
        let mut y = 0;
        for _ in 0..1000 {
            cond.sample_into(&sc, &p, &mut x, &mut y, &[true; 4], true, &mut rng);
            assert_eq!(x[0..3].iter().sum::<f64>(), 1.0);
            assert!(x[0..3].iter().all(|&v| v == 0.0 || v == 1.0));
            assert!(x[4] == 0.0 || x[4] == 1.0);
            assert!((x[5].powi(2) + x[6].powi(2) - 1.0).abs() < 1e-12);
            assert!(y < 2);
        }
    }

    #[test]
    fn log_partitions_match_numeric_integration() {
        // Gaussian: log of integral exp(a x) N(x; 0, 1) dx = a^2 / 2.
        let a = 0.7;
        let n = 200_000;
        let (lo, hi) = (-12.0, 12.0);
        let dx = (hi - lo) / n as f64;
        let integral: f64 = (0..n)
            .map(|i| {
                let x = lo + (i as f64 + 0.5) * dx;
                (a * x - 0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt() * dx
            })
            .sum();
        assert!((integral.ln() - block_log_partition(BlockKind::Continuous, &[a])).abs() < 1e-9);

        // Circle: log of mean over the angle of exp(a . (sin, cos)).
        let act = [0.4, -1.3];
        let mean: f64 = (0..n)
            .map(|i| {
                let t = 2.0 * std::f64::consts::PI * (i as f64 + 0.5) / n as f64;
                (act[0] * t.sin() + act[1] * t.cos()).exp()
            })
            .sum::<f64>()
            / n as f64;
        assert!((mean.ln() - block_log_partition(BlockKind::Cyclical, &act)).abs() < 1e-9);
    }

    #[test]
    fn choice_logits_with_clamped_block_use_observed_values() {
        let sc = schema();
        let mut p = ModelParams::zeros(sc.encoded_width(), 2, 0);
        p.beta = array![[1.0, -1.0], [0.0, 0.0], [0.0, 0.0], [0.0, 2.0], [0.5, 0.0], [0.0, 0.0], [0.0, 0.0]];
        let cond = ObservedConditional::from_bits(&[], &p);
        let x = [1.0, 0.0, 0.0, 0.3, 1.0, 0.0, 1.0];
        let clamped = cond.choice_logits(&sc, &p, &x, &[false; 4]);
        assert!((clamped[0] - 1.5).abs() < 1e-15);
        assert!((clamped[1] - (-1.0 + 0.6)).abs() < 1e-15);
    }
}
