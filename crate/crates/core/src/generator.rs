//! Synthetic data and conditional imputation by (clamped) blocked Gibbs
//! sampling, and histogram-based fit reports.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

use ndarray::Array2;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::data::{BlockKind, Dataset, EncodingSchema, VariableKind};
use crate::energy::{check_schema, ModelParams};
use crate::error::{Error, Result};
use crate::gibbs::{sweep, ChainState, Clamp};
use crate::rng::{stream_rng, tags};

pub const DEFAULT_BURN_IN: usize = 1000;
pub const DEFAULT_THIN: usize = 10;

/// A valid encoded row used when no data record seeds a chain: zeros, first
/// level of every categorical block, angle zero for cyclical pairs.
pub fn placeholder_row(schema: &EncodingSchema) -> Vec<f64> {
    let mut x = vec![0.0; schema.encoded_width()];
    for b in schema.blocks() {
        match b.kind {
            BlockKind::Categorical => x[b.offset] = 1.0,
            BlockKind::Cyclical => x[b.offset + 1] = 1.0,
            _ => {}
        }
    }
    x
}

fn check_chain_args(count: usize, thin: usize) -> Result<()> {
    if count == 0 {
        return Err(Error::InvalidArgument("count must be at least 1".into()));
    }
    if thin == 0 {
        return Err(Error::InvalidArgument("thin must be at least 1".into()));
    }
    Ok(())
}

fn synthetic_dataset(schema: &Arc<EncodingSchema>, rows: Vec<(Vec<f64>, usize)>) -> Result<Dataset> {
    let m = schema.encoded_width();
    let mut x = Array2::zeros((rows.len(), m));
    let mut choices = Vec::with_capacity(rows.len());
    for (i, (row, y)) in rows.into_iter().enumerate() {
        x.row_mut(i).assign(&ndarray::ArrayView1::from(&row));
        choices.push(y);
    }
    let ids = (1..=choices.len()).map(|i| format!("syn-{i}")).collect();
    Dataset::new(x, choices, Arc::clone(schema), ids)
}

fn run_chain<R: Rng + ?Sized>(
    params: &ModelParams,
    schema: &EncodingSchema,
    start: (Vec<f64>, usize),
    count: usize,
    burn_in: usize,
    thin: usize,
    rng: &mut R,
) -> Vec<(Vec<f64>, usize)> {
    let clamp = Clamp::none(schema);
    let mut state = ChainState::new(start.0, start.1, params.n_latent());
    for _ in 0..burn_in {
        sweep(&mut state, params, schema, &clamp, rng);
    }
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        for _ in 0..thin {
            sweep(&mut state, params, schema, &clamp, rng);
        }
        debug_assert!(one_hot_blocks_valid(schema, &state.x));
        out.push((state.x.clone(), state.y));
    }
    out
}

fn one_hot_blocks_valid(schema: &EncodingSchema, x: &[f64]) -> bool {
    schema.blocks().iter().filter(|b| b.kind == BlockKind::Categorical).all(|b| {
        let cols = &x[b.range()];
        cols.iter().filter(|&&v| v == 1.0).count() == 1 && cols.iter().all(|&v| v == 0.0 || v == 1.0)
    })
}

/// Draws `count` samples from a single chain started at the placeholder row,
/// keeping every `thin`-th sweep after `burn_in` sweeps.
pub fn generate<R: Rng + ?Sized>(
    params: &ModelParams,
    schema: &Arc<EncodingSchema>,
    count: usize,
    burn_in: usize,
    thin: usize,
    rng: &mut R,
) -> Result<Dataset> {
    check_schema(params, schema)?;
    check_chain_args(count, thin)?;
    let rows = run_chain(params, schema, (placeholder_row(schema), 0), count, burn_in, thin, rng);
    synthetic_dataset(schema, rows)
}

/// Options for [`generate_chains`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenerateOptions {
    pub count: usize,
    pub burn_in: usize,
    pub thin: usize,
    /// Independent chains; sample `i` comes from chain `i % chains`.
    pub chains: usize,
    pub seed: u64,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        Self { count: 1000, burn_in: DEFAULT_BURN_IN, thin: DEFAULT_THIN, chains: 8, seed: 0 }
    }
}

/// Parallel generation with one generator per chain keyed by the chain
/// index. Each chain starts from a record of `init` picked by its own
/// generator, or from the placeholder row when `init` is `None`.
pub fn generate_chains(
    params: &ModelParams,
    schema: &Arc<EncodingSchema>,
    opts: &GenerateOptions,
    init: Option<&Dataset>,
) -> Result<Dataset> {
    check_schema(params, schema)?;
    check_chain_args(opts.count, opts.thin)?;
    if opts.chains == 0 {
        return Err(Error::InvalidArgument("chains must be at least 1".into()));
    }
    if let Some(d) = init {
        if d.schema().hash() != schema.hash() {
            return Err(Error::InvalidArgument("seeding dataset uses a different schema".into()));
        }
        if d.is_empty() {
            return Err(Error::InvalidArgument("seeding dataset is empty".into()));
        }
    }
    let chains = opts.chains.min(opts.count);
    let per_chain: Vec<Vec<(Vec<f64>, usize)>> = (0..chains)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream_rng(opts.seed, &[tags::GENERATE, k as u64]);
            let start = match init {
                Some(d) => {
                    let r = rng.random_range(0..d.len());
                    (d.row(r).to_vec(), d.choices()[r])
                }
                None => (placeholder_row(schema), 0),
            };
            let n = (opts.count - k).div_ceil(chains);
            run_chain(params, schema, start, n, opts.burn_in, opts.thin, &mut rng)
        })
        .collect();
    let rows = (0..opts.count).map(|i| per_chain[i % chains][i / chains].clone()).collect();
    synthetic_dataset(schema, rows)
}

/// Target variables resolved against a schema.
#[derive(Debug, Clone, PartialEq)]
pub struct ImputeTargets {
    clamp: Clamp,
}

impl ImputeTargets {
    pub fn new(schema: &EncodingSchema, targets: &[&str]) -> Result<Self> {
        if targets.is_empty() {
            return Err(Error::InvalidArgument("imputation needs at least one target variable".into()));
        }
        for t in targets {
            if schema.spec(t).is_none() {
                return Err(Error::InvalidArgument(format!("unknown variable `{t}`")));
            }
        }
        let free_blocks: Vec<bool> = schema.blocks().iter().map(|b| targets.contains(&b.name.as_str())).collect();
        let free_choice = targets.contains(&schema.choice_name());
        if free_choice && free_blocks.iter().all(|&f| f) {
            return Err(Error::InvalidArgument("every variable is a target; use generation instead".into()));
        }
        Ok(Self { clamp: Clamp { free_blocks, free_choice } })
    }

    pub fn clamp(&self) -> &Clamp {
        &self.clamp
    }

    /// Encoded columns that must stay untouched.
    pub fn clamped_columns(&self, schema: &EncodingSchema) -> Vec<usize> {
        schema
            .blocks()
            .iter()
            .zip(&self.clamp.free_blocks)
            .filter(|(_, &f)| !f)
            .flat_map(|(b, _)| b.range())
            .collect()
    }
}

/// Encodes a partial raw record. Target variables may be absent; every other
/// variable must be present and encodable. Returns the encoded row and the
/// choice (`None` when the choice is a target).
pub fn encode_partial(
    schema: &EncodingSchema,
    record: &BTreeMap<String, String>,
    targets: &[&str],
    row_id: &str,
) -> Result<(Vec<f64>, Option<usize>)> {
    let mut x = vec![0.0; schema.encoded_width()];
    let choice = schema.encode_with(|name| record.get(name).map(String::as_str), row_id, targets, &mut x)?;
    Ok((x, choice))
}

/// Runs `steps` clamped sweeps from `(x, y)` and returns the final state.
/// Clamped coordinates are never written. When the choice is a target,
/// `y` only seeds the chain.
pub fn impute<R: Rng + ?Sized>(
    x: &[f64],
    y: usize,
    targets: &ImputeTargets,
    params: &ModelParams,
    schema: &EncodingSchema,
    steps: usize,
    rng: &mut R,
) -> Result<(Vec<f64>, usize)> {
    Ok(impute_draws(x, y, targets, params, schema, steps, 1, rng)?.pop().expect("one draw"))
}

/// Like [`impute`] but returns `draws` successive states after the first
/// `steps` sweeps (one sweep apart).
#[allow(clippy::too_many_arguments)]
pub fn impute_draws<R: Rng + ?Sized>(
    x: &[f64],
    y: usize,
    targets: &ImputeTargets,
    params: &ModelParams,
    schema: &EncodingSchema,
    steps: usize,
    draws: usize,
    rng: &mut R,
) -> Result<Vec<(Vec<f64>, usize)>> {
    check_schema(params, schema)?;
    if x.len() != schema.encoded_width() || y >= schema.n_alternatives() {
        return Err(Error::Dimension("record does not match the schema".into()));
    }
    if steps == 0 || draws == 0 {
        return Err(Error::InvalidArgument("steps and draws must be at least 1".into()));
    }
    let mut state = ChainState::new(x.to_vec(), y, params.n_latent());
    for _ in 0..steps - 1 {
        sweep(&mut state, params, schema, &targets.clamp, rng);
    }
    let mut out = Vec::with_capacity(draws);
    for _ in 0..draws {
        sweep(&mut state, params, schema, &targets.clamp, rng);
        out.push((state.x.clone(), state.y));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramBin {
    pub label: String,
    pub real_freq: f64,
    pub synth_freq: f64,
}

/// Binned comparison of one variable between real and synthetic data.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistributionReport {
    pub variable: String,
    /// Squared Pearson correlation of the binned relative frequencies.
    pub r2: f64,
    /// `1 - (1 - r2)(n - 1)/(n - 2)` over `n` bins; undefined below 3 bins.
    pub adjusted_r2: Option<f64>,
    pub bins: Vec<HistogramBin>,
}

impl DistributionReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["bin", "real_freq", "synth_freq"])?;
        for b in &self.bins {
            w.write_record([b.label.clone(), b.real_freq.to_string(), b.synth_freq.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// `(r2, adjusted r2)` between two frequency vectors. A constant vector has
/// no linear association and yields 0.
pub fn adjusted_r2(a: &[f64], b: &[f64]) -> (f64, Option<f64>) {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    let r2 = if saa > 0.0 && sbb > 0.0 { (sab * sab / (saa * sbb)).min(1.0) } else { 0.0 };
    let adj = (a.len() >= 3).then(|| 1.0 - (1.0 - r2) * (n - 1.0) / (n - 2.0));
    (r2, adj)
}

fn normalize(counts: &[f64]) -> Vec<f64> {
    let total: f64 = counts.iter().sum();
    counts.iter().map(|c| c / total).collect()
}

/// Compares binned frequencies of `variable`. Categorical, binary and choice
/// variables use one bin per value; continuous variables use `bins`
/// equal-width bins over the pooled range of their encoded values (edges are
/// reported in raw units); cyclical variables use `bins` equal arcs of the
/// period.
pub fn distribution_report(real: &Dataset, synthetic: &Dataset, variable: &str, bins: usize) -> Result<DistributionReport> {
    if real.is_empty() || synthetic.is_empty() {
        return Err(Error::InvalidArgument("distribution report needs non-empty datasets".into()));
    }
    if real.schema().hash() != synthetic.schema().hash() {
        return Err(Error::InvalidArgument("datasets use different schemas".into()));
    }
    let schema = real.schema();
    let spec = schema.spec(variable).ok_or_else(|| Error::InvalidArgument(format!("unknown variable `{variable}`")))?;
    let (labels, rc, sc): (Vec<String>, Vec<f64>, Vec<f64>) = if variable == schema.choice_name() {
        let count = |d: &Dataset| {
            let mut c = vec![0.0; schema.n_alternatives()];
            d.choices().iter().for_each(|&y| c[y] += 1.0);
            c
        };
        (schema.alternatives().to_vec(), count(real), count(synthetic))
    } else {
        let block = schema.block(variable).expect("explanatory variable has a block");
        match (&spec.kind, block.kind) {
            (VariableKind::Categorical { levels }, _) => {
                let count = |d: &Dataset| {
                    let mut c = vec![0.0; levels.len()];
                    for row in d.x().outer_iter() {
                        for (k, v) in row.slice(ndarray::s![block.range()]).iter().enumerate() {
                            c[k] += v;
                        }
                    }
                    c
                };
                (levels.clone(), count(real), count(synthetic))
            }
            (VariableKind::Binary, _) => {
                let count = |d: &Dataset| {
                    let ones: f64 = d.x().column(block.offset).iter().map(|&v| f64::from(u8::from(v >= 0.5))).sum();
                    vec![d.len() as f64 - ones, ones]
                };
                (vec!["0".into(), "1".into()], count(real), count(synthetic))
            }
            (VariableKind::ContinuousPositive, _) => {
                if bins == 0 {
                    return Err(Error::InvalidArgument("bins must be at least 1".into()));
                }
                let col = |d: &Dataset| d.x().column(block.offset).to_vec();
                let (r, s) = (col(real), col(synthetic));
                let lo = r.iter().chain(&s).copied().fold(f64::INFINITY, f64::min);
                let hi = r.iter().chain(&s).copied().fold(f64::NEG_INFINITY, f64::max);
                let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
                let count = |v: &[f64]| {
                    let mut c = vec![0.0; bins];
                    for x in v {
                        c[(((x - lo) / width) as usize).min(bins - 1)] += 1.0;
                    }
                    c
                };
                let stats = schema.continuous_stats()[variable];
                let raw = |z: f64| (z * stats.std + stats.mean).exp();
                let labels = (0..bins)
                    .map(|k| format!("[{:.6}, {:.6})", raw(lo + k as f64 * width), raw(lo + (k + 1) as f64 * width)))
                    .collect();
                (labels, count(&r), count(&s))
            }
            (VariableKind::Cyclical { period }, _) => {
                if bins == 0 {
                    return Err(Error::InvalidArgument("bins must be at least 1".into()));
                }
                let count = |d: &Dataset| {
                    let mut c = vec![0.0; bins];
                    for row in d.x().outer_iter() {
                        let angle = row[block.offset].atan2(row[block.offset + 1]).rem_euclid(2.0 * PI);
                        c[((angle / (2.0 * PI) * bins as f64) as usize).min(bins - 1)] += 1.0;
                    }
                    c
                };
                let labels = (0..bins)
                    .map(|k| format!("[{}, {})", k as f64 * period / bins as f64, (k + 1) as f64 * period / bins as f64))
                    .collect();
                (labels, count(real), count(synthetic))
            }
        }
    };
    let (rf, sf) = (normalize(&rc), normalize(&sc));
    let (r2, adjusted) = adjusted_r2(&rf, &sf);
    let bins = labels
        .into_iter()
        .zip(rf.iter().zip(&sf))
        .map(|(label, (&real_freq, &synth_freq))| HistogramBin { label, real_freq, synth_freq })
        .collect();
    Ok(DistributionReport { variable: variable.to_string(), r2, adjusted_r2: adjusted, bins })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::VariableSpec;

    fn schema() -> Arc<EncodingSchema> {
        Arc::new(
            EncodingSchema::new(
                vec![
                    VariableSpec::categorical("act", &["a", "b", "c", "d", "e"]),
                    VariableSpec::binary("peak"),
                    VariableSpec::cyclical("hour", 24.0),
                    VariableSpec::choice("mode", &["x", "y", "z"]),
                ],
                BTreeMap::new(),
            )
            .unwrap(),
        )
    }

    #[test]
    fn generated_rows_are_valid_and_deterministic() {
        let sc = schema();
        let mut r = stream_rng(1, &[]);
        let p = ModelParams::init_random(sc.encoded_width(), 3, 4, 1.0, &mut r);
        let a = generate(&p, &sc, 200, 10, 2, &mut stream_rng(5, &[])).unwrap();
        let b = generate(&p, &sc, 200, 10, 2, &mut stream_rng(5, &[])).unwrap();
        assert_eq!(a.checksum(), b.checksum());
        assert_eq!(a.len(), 200);
        let opts = GenerateOptions { count: 101, burn_in: 5, thin: 1, chains: 4, seed: 3 };
        let c = generate_chains(&p, &sc, &opts, Some(&a)).unwrap();
        let d = generate_chains(&p, &sc, &opts, Some(&a)).unwrap();
        assert_eq!(c.checksum(), d.checksum());
        assert_eq!(c.len(), 101);
    }

    #[test]
    fn bad_generation_arguments() {
        let sc = schema();
        let p = ModelParams::zeros(sc.encoded_width(), 3, 1);
        let mut rng = stream_rng(0, &[]);
        assert!(generate(&p, &sc, 0, 0, 1, &mut rng).is_err());
        assert!(generate(&p, &sc, 1, 0, 0, &mut rng).is_err());
    }

    #[test]
    fn target_validation() {
        let sc = schema();
        assert!(ImputeTargets::new(&sc, &[]).is_err());
        assert!(ImputeTargets::new(&sc, &["nope"]).is_err());
        assert!(ImputeTargets::new(&sc, &["act", "peak", "hour", "mode"]).is_err());
        let t = ImputeTargets::new(&sc, &["act"]).unwrap();
        assert_eq!(t.clamped_columns(&sc), vec![5, 6, 7]);
    }

    #[test]
    fn zero_params_impute_uniform_category() {
        let sc = schema();
        let p = ModelParams::zeros(sc.encoded_width(), 3, 2);
        let t = ImputeTargets::new(&sc, &["act"]).unwrap();
        let x = vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0];
        let mut rng = stream_rng(8, &[]);
        let mut counts = [0usize; 5];
        let n = 20_000;
        for _ in 0..n {
            let (z, y) = impute(&x, 1, &t, &p, &sc, 2, &mut rng).unwrap();
            assert_eq!(y, 1);
            assert_eq!(&z[5..], &x[5..]);
            counts[z[..5].iter().position(|&v| v == 1.0).unwrap()] += 1;
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 0.2).abs() < 0.015);
        }
    }

    #[test]
    fn identical_data_fit_perfectly() {
        let sc = schema();
        let mut r = stream_rng(2, &[]);
        let p = ModelParams::init_random(sc.encoded_width(), 3, 2, 1.0, &mut r);
        let d = generate(&p, &sc, 300, 5, 1, &mut r).unwrap();
        for v in ["act", "hour", "mode"] {
            let rep = distribution_report(&d, &d, v, 6).unwrap();
            assert!((rep.adjusted_r2.unwrap() - 1.0).abs() < 1e-12, "{v}");
        }
        assert!(distribution_report(&d, &d, "peak", 6).unwrap().adjusted_r2.is_none());
    }

    #[test]
    fn uniform_versus_point_mass_scores_low() {
        let (r2, adj) = adjusted_r2(&[1.0, 0.0, 0.0, 0.0, 0.0], &[0.2; 5]);
        assert_eq!(r2, 0.0);
        assert!(adj.unwrap() <= 0.0);
    }

    #[test]
    fn adjusted_r2_hand_value() {
        // r = 0.6 on 4 bins: adjusted = 1 - 0.64 * 3 / 2.
        let a = [1.0, 2.0, 3.0, 4.0];
        let (r2, adj) = adjusted_r2(&a, &a);
        assert!((r2 - 1.0).abs() < 1e-15 && (adj.unwrap() - 1.0).abs() < 1e-15);
        let b = [2.0, 1.0, 4.0, 3.0];
        let (r2, adj) = adjusted_r2(&a, &b);
        assert!((r2 - 0.36).abs() < 1e-12);
        assert!((adj.unwrap() - (1.0 - 0.64 * 1.5)).abs() < 1e-12);
    }
}
