//! Entropy-corrected discrete choice estimation with a tri-partite
//! generative model: observed explanatory variables, a chosen alternative,
//! and binary latent variables.
//!
//! The crate covers encoding raw records ([`data`]), the joint energy and its
//! closed forms ([`energy`]), blocked Gibbs sampling ([`gibbs`]), hybrid
//! contrastive-divergence / maximum-likelihood training ([`trainer`]), the
//! entropy-corrected logit ([`choice`]), synthetic generation and imputation
//! ([`generator`]) and information-heterogeneity diagnostics
//! ([`diagnostics`]).

pub mod choice;
pub mod data;
pub mod diagnostics;
pub mod energy;
pub mod error;
pub mod generator;
pub mod gibbs;
pub mod math;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
