//! Information-heterogeneity diagnostics: maxent of choice coefficients,
//! coefficient sensitivity to the latent count, latent activation statistics
//! and empirical divergence / mutual-information checks.

use std::collections::HashMap;
use std::io::Write;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::Serialize;

use crate::data::{Dataset, EncodingSchema};
use crate::energy::{latent_posterior, ModelParams};
use crate::error::{Error, Result};
use crate::math::{logsumexp, mean_and_sample_std};
use crate::rng::{stream_rng, tags};
use crate::trainer::{train, TrainConfig, TrainHistory};

pub const DEFAULT_ACTIVATION_THRESHOLD: f64 = 0.5;
pub const DEFAULT_PERMUTATIONS: usize = 1000;
pub const INDEPENDENCE_LEVEL: f64 = 0.01;
pub const MIN_MI_SAMPLES: usize = 100;

fn check_simplex(p: &[f64]) -> Result<()> {
    let sum: f64 = p.iter().sum();
    if p.iter().any(|v| v.is_nan() || *v < 0.0) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("class shares must form a simplex (sum is {sum})")));
    }
    Ok(())
}

/// Cross-entropy of `softmax(beta_row)` under `class_shares`.
pub fn maxent(beta_row: &[f64], class_shares: &[f64]) -> Result<f64> {
    if beta_row.len() != class_shares.len() {
        return Err(Error::Dimension(format!(
            "beta row has {} entries, class shares {}",
            beta_row.len(),
            class_shares.len()
        )));
    }
    check_simplex(class_shares)?;
    let lse = logsumexp(beta_row);
    Ok(beta_row.iter().zip(class_shares).filter(|(_, &p)| p > 0.0).map(|(b, p)| -p * (b - lse)).sum())
}

/// Maxent of every row of `beta` (one per encoded column).
pub fn maxent_rows(params: &ModelParams, class_shares: &[f64]) -> Result<Vec<f64>> {
    params.beta.outer_iter().map(|row| maxent(&row.to_vec(), class_shares)).collect()
}

/// Maxent per encoded column across latent sizes, laid out like a table with
/// one row per column label and one column per size.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaxentReport {
    pub sizes: Vec<usize>,
    pub labels: Vec<String>,
    /// `values[row][size]`.
    pub values: Vec<Vec<f64>>,
    pub class_shares: Vec<f64>,
    /// Per size, over rows.
    pub mean: Vec<f64>,
    /// Per size, sample standard deviation over rows.
    pub std: Vec<f64>,
}

impl MaxentReport {
    pub fn new(labels: Vec<String>, sizes: Vec<usize>, per_size: &[Vec<f64>], class_shares: Vec<f64>) -> Self {
        let values: Vec<Vec<f64>> = (0..labels.len()).map(|r| per_size.iter().map(|col| col[r]).collect()).collect();
        let (mean, std) = per_size.iter().map(|col| mean_and_sample_std(col)).unzip();
        Self { sizes, labels, values, class_shares, mean, std }
    }

    pub fn from_params(schema: &EncodingSchema, params: &ModelParams, class_shares: &[f64]) -> Result<Self> {
        let col = maxent_rows(params, class_shares)?;
        Ok(Self::new(schema.column_labels(), vec![params.n_latent()], &[col], class_shares.to_vec()))
    }

    pub fn row(&self, label: &str) -> Option<&[f64]> {
        self.labels.iter().position(|l| l == label).map(|i| self.values[i].as_slice())
    }

    /// Rows of variables, one column per size, then `mean` and `std` footers.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["parameter".to_string()];
        header.extend(self.sizes.iter().map(|s| format!("S={s}")));
        w.write_record(&header)?;
        for (label, vals) in self.labels.iter().zip(&self.values) {
            let mut rec = vec![label.clone()];
            rec.extend(vals.iter().map(|v| format!("{v:.6}")));
            w.write_record(&rec)?;
        }
        for (name, vals) in [("mean", &self.mean), ("std", &self.std)] {
            let mut rec = vec![name.to_string()];
            rec.extend(vals.iter().map(|v| format!("{v:.6}")));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// One trained model per latent size.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityRun {
    pub latent_count: usize,
    pub params: ModelParams,
    pub history: TrainHistory,
    pub valid_nll: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityTable {
    pub runs: Vec<SensitivityRun>,
    pub maxent: MaxentReport,
}

impl SensitivityTable {
    /// Coefficients relative to the first alternative, per size.
    pub fn relative_betas(&self) -> Vec<Array2<f64>> {
        self.runs.iter().map(|r| r.params.relative_beta()).collect()
    }

    /// Long-format `parameter, alternative, S, beta` rows (relative to the
    /// first alternative).
    pub fn write_beta_csv<W: Write>(&self, out: W, schema: &EncodingSchema) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["parameter", "alternative", "S", "beta"])?;
        let labels = schema.column_labels();
        for (m, label) in labels.iter().enumerate() {
            for (j, alt) in schema.alternatives().iter().enumerate() {
                for run in &self.runs {
                    let rel = run.params.beta[[m, j]] - run.params.beta[[m, 0]];
                    w.write_record([label.clone(), alt.clone(), run.latent_count.to_string(), format!("{rel:.6}")])?;
                }
            }
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Trains one model per latent size with the same data, seed and schedule,
/// and tabulates maxent of the fitted coefficients under the training class
/// shares.
pub fn beta_sensitivity(
    train_data: &Dataset,
    valid: &Dataset,
    latent_sizes: &[usize],
    base_config: &TrainConfig,
) -> Result<SensitivityTable> {
    if latent_sizes.is_empty() {
        return Err(Error::InvalidArgument("latent size list is empty".into()));
    }
    let runs: Vec<SensitivityRun> = latent_sizes
        .par_iter()
        .map(|&h| {
            let cfg = TrainConfig { latent_count: h, ..base_config.clone() };
            let (params, history) = train(train_data, valid, &cfg)?;
            let valid_nll = crate::choice::mean_nll(&params, valid);
            Ok(SensitivityRun { latent_count: h, params, history, valid_nll })
        })
        .collect::<Result<_>>()?;
    let shares = train_data.class_shares();
    let per_size: Vec<Vec<f64>> = runs.iter().map(|r| maxent_rows(&r.params, &shares)).collect::<Result<_>>()?;
    let maxent = MaxentReport::new(train_data.schema().column_labels(), latent_sizes.to_vec(), &per_size, shares);
    Ok(SensitivityTable { runs, maxent })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActivationStat {
    pub alternative: String,
    pub w_prime_mean: f64,
    /// Population standard deviation over latents.
    pub w_prime_std: f64,
    /// Share of (record, latent) pairs with posterior above the threshold,
    /// over records that chose this alternative; `None` without records.
    pub activation_rate: Option<f64>,
    pub records: usize,
}

/// Per-alternative statistics of `W'` columns and latent activation rates.
/// A latent counts as active when its posterior strictly exceeds
/// `threshold`.
pub fn activation_stats(params: &ModelParams, dataset: &Dataset, threshold: f64) -> Result<Vec<ActivationStat>> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidArgument(format!("threshold {threshold} must lie in (0, 1)")));
    }
    let j = params.n_alternatives();
    let h = params.n_latent();
    let counts: Vec<(usize, usize)> = (0..dataset.len())
        .into_par_iter()
        .map(|i| {
            let y = dataset.choices()[i];
            let active = latent_posterior(dataset.row(i), y, params).iter().filter(|&&p| p > threshold).count();
            (y, active)
        })
        .collect();
    let mut active = vec![0usize; j];
    let mut records = vec![0usize; j];
    for (y, a) in counts {
        active[y] += a;
        records[y] += 1;
    }
    Ok((0..j)
        .map(|k| {
            let col = params.w_prime.column(k);
            let (mean, std) = if h == 0 {
                (f64::NAN, f64::NAN)
            } else {
                let mean = col.sum() / h as f64;
                (mean, (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / h as f64).sqrt())
            };
            let rate = (records[k] > 0 && h > 0).then(|| active[k] as f64 / (records[k] * h) as f64);
            ActivationStat {
                alternative: dataset.schema().alternatives()[k].clone(),
                w_prime_mean: mean,
                w_prime_std: std,
                activation_rate: rate,
                records: records[k],
            }
        })
        .collect())
}

pub fn write_activation_csv<W: Write>(out: W, stats: &[ActivationStat]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["alternative", "w_prime_mean", "w_prime_std", "activation_rate", "records"])?;
    for s in stats {
        w.write_record([
            s.alternative.clone(),
            s.w_prime_mean.to_string(),
            s.w_prime_std.to_string(),
            s.activation_rate.map(|r| r.to_string()).unwrap_or_default(),
            s.records.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// `KL(p || q)` between two histograms (counts or frequencies). When `q` is
/// zero somewhere `p` is not, both histograms receive half a pseudo-count per
/// bin before normalizing; otherwise the divergence is computed exactly.
pub fn empirical_kl(p_counts: &[f64], q_counts: &[f64]) -> Result<f64> {
    if p_counts.len() != q_counts.len() || p_counts.is_empty() {
        return Err(Error::Dimension(format!(
            "histogram supports differ ({} vs {} bins)",
            p_counts.len(),
            q_counts.len()
        )));
    }
    if p_counts.iter().chain(q_counts).any(|c| !(*c >= 0.0 && c.is_finite())) {
        return Err(Error::InvalidArgument("histogram counts must be finite and non-negative".into()));
    }
    let needs_smoothing = p_counts.iter().zip(q_counts).any(|(&p, &q)| p > 0.0 && q == 0.0);
    let shift = if needs_smoothing { 0.5 } else { 0.0 };
    let norm = |c: &[f64]| {
        let t: f64 = c.iter().map(|v| v + shift).sum();
        c.iter().map(|v| (v + shift) / t).collect::<Vec<f64>>()
    };
    let (p, q) = (norm(p_counts), norm(q_counts));
    if p.iter().chain(&q).any(|v| v.is_nan()) {
        return Err(Error::InvalidArgument("histogram has no mass".into()));
    }
    let kl: f64 = p.iter().zip(&q).filter(|(&a, _)| a > 0.0).map(|(a, b)| a * (a / b).ln()).sum();
    Ok(kl.max(0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MutualInformation {
    /// Plug-in estimate clipped at 0.
    pub mi: f64,
    pub raw_mi: f64,
    pub samples: usize,
    /// Permutation p-value; `None` below the minimum sample size.
    pub p_value: Option<f64>,
    /// `Some(true)` when independence is not rejected at the 1% level.
    pub independent: Option<bool>,
    pub warning: Option<String>,
}

fn plug_in_mi(x: &[usize], s: &[usize]) -> f64 {
    let n = x.len() as f64;
    let mut joint: HashMap<(usize, usize), f64> = HashMap::new();
    let mut px: HashMap<usize, f64> = HashMap::new();
    let mut ps: HashMap<usize, f64> = HashMap::new();
    for (&a, &b) in x.iter().zip(s) {
        *joint.entry((a, b)).or_default() += 1.0;
        *px.entry(a).or_default() += 1.0;
        *ps.entry(b).or_default() += 1.0;
    }
    let mut keys: Vec<_> = joint.keys().copied().collect();
    keys.sort_unstable();
    keys.iter().map(|k| {
        let c = joint[k];
        c / n * (c * n / (px[&k.0] * ps[&k.1])).ln()
    })
    .sum()
}

/// Plug-in mutual information between paired discrete samples with a
/// permutation test of independence.
pub fn mutual_information(x: &[usize], s: &[usize], permutations: usize, seed: u64) -> Result<MutualInformation> {
    if x.len() != s.len() || x.is_empty() {
        return Err(Error::Dimension("mutual information needs equally long, non-empty samples".into()));
    }
    let raw = plug_in_mi(x, s);
    let mi = raw.max(0.0);
    if x.len() < MIN_MI_SAMPLES {
        return Ok(MutualInformation {
            mi,
            raw_mi: raw,
            samples: x.len(),
            p_value: None,
            independent: None,
            warning: Some(format!("only {} samples; no independence decision below {MIN_MI_SAMPLES}", x.len())),
        });
    }
    let mut rng = stream_rng(seed, &[tags::PERMUTE]);
    let mut shuffled = s.to_vec();
    let mut exceed = 0usize;
    for _ in 0..permutations {
        shuffled.shuffle(&mut rng);
        if plug_in_mi(x, &shuffled) >= raw - 1e-12 {
            exceed += 1;
        }
    }
    let p = (1 + exceed) as f64 / (1 + permutations) as f64;
    Ok(MutualInformation {
        mi,
        raw_mi: raw,
        samples: x.len(),
        p_value: Some(p),
        independent: Some(p >= INDEPENDENCE_LEVEL),
        warning: None,
    })
}
