//! Hybrid training: contrastive divergence on the generative blocks
//! `{d, alpha, W, W'}` interleaved with conditional-logit maximum likelihood
//! on `(beta, c)`.
//!
//! Gradients returned here are gradients of the quantity being minimized:
//! for CD that is the negative log-likelihood of `(x, y)` (equivalently the
//! KL divergence from the data distribution), estimated as
//! `E_data[dF/dtheta] - E_chain[dF/dtheta]`; parameters move by
//! `theta -= lr * g`. The conditional-logit gradient is the gradient of the
//! mean log-likelihood and is followed upward.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use ndarray::{Array1, Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::choice::mean_nll;
use crate::data::Dataset;
use crate::energy::{check_schema, entropy_from_input, latent_input, latent_posterior, ModelParams, ParamBlock, ParamsFile};
use crate::error::{Error, Result};
use crate::gibbs::{sweep, ChainState, Clamp};
use crate::math::logsumexp;
use crate::rng::{stream_rng, tags};

/// Standard deviation of the initial couplings `W` and `W'`.
pub const INIT_SCALE: f64 = 0.01;

pub const STATE_FORMAT: &str = "infochoice-trainer-state";
pub const STATE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Number of binary latents H; 0 gives a plain multinomial logit.
    pub latent_count: usize,
    /// Records per update (k).
    pub batch_size: usize,
    /// Gibbs sweeps per CD chain (n).
    pub gibbs_steps: usize,
    /// SGD step size, shared by the CD and likelihood updates.
    pub learning_rate: f64,
    /// Full passes over the training data.
    pub max_epochs: usize,
    pub seed: u64,
    /// Epochs without validation improvement before stopping.
    pub early_stop_patience: usize,
    /// Likelihood ascent steps after every CD update.
    pub mle_inner_steps: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            latent_count: 10,
            batch_size: 16,
            gibbs_steps: 10,
            learning_rate: 0.01,
            max_epochs: 100,
            seed: 0,
            early_stop_patience: 20,
            mle_inner_steps: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(format!("{what} must be positive")));
        if self.batch_size == 0 {
            return bad("batch_size");
        }
        if self.gibbs_steps == 0 {
            return bad("gibbs_steps");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate");
        }
        if self.early_stop_patience == 0 {
            return bad("early_stop_patience");
        }
        if self.mle_inner_steps == 0 {
            return bad("mle_inner_steps");
        }
        Ok(())
    }
}

/// Gradient of the generative blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct CdGradient {
    pub d: Array1<f64>,
    pub alpha: Array1<f64>,
    pub w: Array2<f64>,
    pub w_prime: Array2<f64>,
}

impl CdGradient {
    pub fn zeros(m: usize, j: usize, h: usize) -> Self {
        Self { d: Array1::zeros(m), alpha: Array1::zeros(h), w: Array2::zeros((m, h)), w_prime: Array2::zeros((h, j)) }
    }

    fn add(&mut self, other: &Self) {
        self.d += &other.d;
        self.alpha += &other.alpha;
        self.w += &other.w;
        self.w_prime += &other.w_prime;
    }

    fn scale(&mut self, k: f64) {
        self.d *= k;
        self.alpha *= k;
        self.w *= k;
        self.w_prime *= k;
    }

    /// Adds `sign * dF/dtheta` at `(x, y)` with mean-field latent statistics.
    fn add_free_energy_grad(&mut self, x: &[f64], y: usize, params: &ModelParams, sign: f64) {
        let mu = latent_posterior(ArrayView1::from(x), y, params);
        for (g, xm) in self.d.iter_mut().zip(x) {
            *g -= sign * xm;
        }
        for (h, m) in mu.iter().enumerate() {
            self.alpha[h] -= sign * m;
            self.w_prime[[h, y]] -= sign * m;
        }
        for (mi, xm) in x.iter().enumerate() {
            if *xm != 0.0 {
                for (g, m) in self.w.row_mut(mi).iter_mut().zip(&mu) {
                    *g -= sign * xm * m;
                }
            }
        }
    }

    pub fn norm(&self, block: ParamBlock) -> f64 {
        let sq = |v: f64, a: f64| a + v * v;
        match block {
            ParamBlock::D => self.d.iter().fold(0.0, |a, &v| sq(v, a)),
            ParamBlock::Alpha => self.alpha.iter().fold(0.0, |a, &v| sq(v, a)),
            ParamBlock::W => self.w.iter().fold(0.0, |a, &v| sq(v, a)),
            ParamBlock::WPrime => self.w_prime.iter().fold(0.0, |a, &v| sq(v, a)),
            ParamBlock::Beta | ParamBlock::C => 0.0,
        }
        .sqrt()
    }
}

fn record_cd_gradient<R: Rng + ?Sized>(
    x: ArrayView1<f64>,
    y: usize,
    params: &ModelParams,
    schema: &crate::data::EncodingSchema,
    n: usize,
    rng: &mut R,
) -> CdGradient {
    let (m, j, h) = (params.n_explanatory(), params.n_alternatives(), params.n_latent());
    let mut g = CdGradient::zeros(m, j, h);
    let x0 = x.to_vec();
    g.add_free_energy_grad(&x0, y, params, 1.0);
    let mut state = ChainState::new(x0, y, h);
    let clamp = Clamp::none(schema);
    for _ in 0..n {
        sweep(&mut state, params, schema, &clamp, rng);
    }
    g.add_free_energy_grad(&state.x, state.y, params, -1.0);
    g
}

/// CD-n gradient over a batch, drawing every chain from one generator in
/// record order.
pub fn cd_gradient<R: Rng + ?Sized>(batch: &Dataset, params: &ModelParams, n: usize, rng: &mut R) -> Result<CdGradient> {
    check_schema(params, batch.schema())?;
    if batch.is_empty() || n == 0 {
        return Err(Error::InvalidArgument("CD needs a non-empty batch and at least one Gibbs step".into()));
    }
    let (m, j, h) = (params.n_explanatory(), params.n_alternatives(), params.n_latent());
    let mut total = CdGradient::zeros(m, j, h);
    for i in 0..batch.len() {
        total.add(&record_cd_gradient(batch.row(i), batch.choices()[i], params, batch.schema(), n, rng));
    }
    total.scale(1.0 / batch.len() as f64);
    Ok(total)
}

/// CD-n gradient over `rows` of `data` with one generator per record keyed by
/// `(seed, epoch, row)`, so the result does not depend on thread scheduling.
pub fn cd_gradient_keyed(
    data: &Dataset,
    rows: &[usize],
    params: &ModelParams,
    n: usize,
    seed: u64,
    epoch: u64,
) -> CdGradient {
    let parts: Vec<CdGradient> = rows
        .par_iter()
        .map(|&r| {
            let mut rng = stream_rng(seed, &[tags::CD, epoch, r as u64]);
            record_cd_gradient(data.row(r), data.choices()[r], params, data.schema(), n, &mut rng)
        })
        .collect();
    let (m, j, h) = (params.n_explanatory(), params.n_alternatives(), params.n_latent());
    let mut total = CdGradient::zeros(m, j, h);
    for p in &parts {
        total.add(p);
    }
    total.scale(1.0 / rows.len().max(1) as f64);
    total
}

/// Gradient of the mean conditional log-likelihood with respect to `(beta, c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitGradient {
    pub beta: Array2<f64>,
    pub c: Array1<f64>,
    pub log_likelihood: f64,
}

fn entropy_table(data: &Dataset, rows: &[usize], params: &ModelParams) -> Vec<Vec<f64>> {
    let j = params.n_alternatives();
    if params.n_latent() == 0 {
        return vec![vec![0.0; j]; rows.len()];
    }
    rows.par_iter()
        .map(|&r| {
            let a = latent_input(data.row(r), params);
            (0..j).map(|k| entropy_from_input(&a, k, params)).collect()
        })
        .collect()
}

fn logit_gradient_with(
    data: &Dataset,
    rows: &[usize],
    beta: &Array2<f64>,
    c: &Array1<f64>,
    entropy: &[Vec<f64>],
) -> LogitGradient {
    let (m, j) = beta.dim();
    let mut gb = Array2::zeros((m, j));
    let mut gc = Array1::zeros(j);
    let mut ll = 0.0;
    let mut v = vec![0.0; j];
    for (row_i, &r) in rows.iter().enumerate() {
        let x = data.row(r);
        for k in 0..j {
            v[k] = x.dot(&beta.column(k)) + c[k] + entropy[row_i][k];
        }
        let lse = logsumexp(&v);
        let y = data.choices()[r];
        ll += v[y] - lse;
        for k in 0..j {
            let resid = f64::from(u8::from(k == y)) - (v[k] - lse).exp();
            gc[k] += resid;
            for (mi, xm) in x.iter().enumerate() {
                gb[[mi, k]] += xm * resid;
            }
        }
    }
    let n = rows.len().max(1) as f64;
    LogitGradient { beta: gb / n, c: gc / n, log_likelihood: ll / n }
}

/// Gradient of the mean log-likelihood of the observed choices in `rows`.
pub fn conditional_logit_gradient(data: &Dataset, rows: &[usize], params: &ModelParams) -> LogitGradient {
    let entropy = entropy_table(data, rows, params);
    logit_gradient_with(data, rows, &params.beta, &params.c, &entropy)
}

/// `inner_steps` ascent steps on the conditional log-likelihood over `rows`.
/// Only `(beta, c)` are returned; the generative blocks are read, never
/// written.
pub fn mle_logit_step(
    data: &Dataset,
    rows: &[usize],
    params: &ModelParams,
    inner_steps: usize,
    learning_rate: f64,
) -> (Array2<f64>, Array1<f64>) {
    let entropy = entropy_table(data, rows, params);
    let mut beta = params.beta.clone();
    let mut c = params.c.clone();
    for _ in 0..inner_steps {
        let g = logit_gradient_with(data, rows, &beta, &c, &entropy);
        beta.scaled_add(learning_rate, &g.beta);
        c.scaled_add(learning_rate, &g.c);
    }
    (beta, c)
}

/// Mean negative log-likelihood of the observed choices.
pub fn validation_nll(params: &ModelParams, dataset: &Dataset) -> f64 {
    mean_nll(params, dataset)
}

/// Per-block gradient norms, averaged over the updates of an epoch.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct GradNorms {
    pub beta: f64,
    pub c: f64,
    pub d: f64,
    pub alpha: f64,
    pub w: f64,
    pub w_prime: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based epoch number.
    pub epoch: usize,
    pub train_nll: f64,
    pub valid_nll: f64,
    pub grad_norms: GradNorms,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    /// Checksum of the selected parameters.
    pub best_params_ref: Option<String>,
    pub stopped_early: bool,
}

impl TrainHistory {
    pub fn best(&self) -> Option<&EpochRecord> {
        self.best_epoch.and_then(|e| self.epochs.iter().find(|r| r.epoch == e))
    }

    /// Writes the history as CSV. Wall time is only included on request
    /// because it differs between otherwise identical runs.
    pub fn write_csv<W: Write>(&self, out: W, include_seconds: bool) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec![
            "epoch", "train_nll", "valid_nll", "grad_beta", "grad_c", "grad_d", "grad_alpha", "grad_w", "grad_w_prime",
        ];
        if include_seconds {
            header.push("seconds");
        }
        w.write_record(&header)?;
        for r in &self.epochs {
            let g = r.grad_norms;
            let mut rec = vec![r.epoch.to_string()];
            rec.extend([r.train_nll, r.valid_nll, g.beta, g.c, g.d, g.alpha, g.w, g.w_prime].iter().map(f64::to_string));
            if include_seconds {
                rec.push(format!("{:.3}", r.seconds));
            }
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Everything needed to continue training exactly where it stopped.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainerState {
    pub config: TrainConfig,
    pub schema_hash: String,
    pub params: ModelParams,
    pub best_params: ModelParams,
    pub best_valid: Option<f64>,
    pub epochs_done: usize,
    pub since_best: usize,
    pub history: TrainHistory,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TrainerStateFile {
    format: String,
    version: u32,
    config: TrainConfig,
    schema_hash: String,
    params: ParamsFile,
    best_params: ParamsFile,
    best_valid: Option<f64>,
    epochs_done: usize,
    since_best: usize,
    history: TrainHistory,
}

impl TrainerState {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = TrainerStateFile {
            format: STATE_FORMAT.into(),
            version: STATE_VERSION,
            config: self.config.clone(),
            schema_hash: self.schema_hash.clone(),
            params: self.params.to_file(&self.schema_hash),
            best_params: self.best_params.to_file(&self.schema_hash),
            best_valid: self.best_valid,
            epochs_done: self.epochs_done,
            since_best: self.since_best,
            history: self.history.clone(),
        };
        let bytes = serde_json::to_vec(&file)?;
        std::fs::write(path.as_ref(), bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = std::fs::read(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        let file: TrainerStateFile = serde_json::from_slice(&bytes)?;
        if file.format != STATE_FORMAT || file.version != STATE_VERSION {
            return Err(Error::Format(format!("not a version {STATE_VERSION} trainer state")));
        }
        let (params, _) = file.params.into_params()?;
        let (best_params, _) = file.best_params.into_params()?;
        Ok(Self {
            config: file.config,
            schema_hash: file.schema_hash,
            params,
            best_params,
            best_valid: file.best_valid,
            epochs_done: file.epochs_done,
            since_best: file.since_best,
            history: file.history,
        })
    }
}

/// Epoch-at-a-time training driver.
pub struct Trainer<'a> {
    train: &'a Dataset,
    valid: &'a Dataset,
    state: TrainerState,
}

impl<'a> Trainer<'a> {
    pub fn new(train: &'a Dataset, valid: &'a Dataset, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        check_datasets(train, valid)?;
        let schema = train.schema();
        let mut rng = stream_rng(config.seed, &[tags::INIT]);
        let params = ModelParams::init_random(
            schema.encoded_width(),
            schema.n_alternatives(),
            config.latent_count,
            INIT_SCALE,
            &mut rng,
        );
        Ok(Self {
            train,
            valid,
            state: TrainerState {
                schema_hash: schema.hash(),
                best_params: params.clone(),
                params,
                config,
                best_valid: None,
                epochs_done: 0,
                since_best: 0,
                history: TrainHistory::default(),
            },
        })
    }

    /// Continues from a saved state. Only `max_epochs` may differ from the
    /// configuration the state was created with.
    pub fn resume(train: &'a Dataset, valid: &'a Dataset, mut state: TrainerState, config: &TrainConfig) -> Result<Self> {
        check_datasets(train, valid)?;
        if state.schema_hash != train.schema().hash() {
            return Err(Error::InvalidArgument(format!(
                "trainer state was built for schema {}, data uses {}",
                state.schema_hash,
                train.schema().hash()
            )));
        }
        let mut expected = state.config.clone();
        expected.max_epochs = config.max_epochs;
        if &expected != config {
            return Err(Error::InvalidArgument(
                "resume requires the same training configuration (only max_epochs may change)".into(),
            ));
        }
        state.config.max_epochs = config.max_epochs;
        Ok(Self { train, valid, state })
    }

    pub fn state(&self) -> &TrainerState {
        &self.state
    }

    pub fn is_finished(&self) -> bool {
        self.state.history.stopped_early || self.state.epochs_done >= self.state.config.max_epochs
    }

    /// Runs one full pass over the training data.
    pub fn run_epoch(&mut self) -> Result<&EpochRecord> {
        let start = Instant::now();
        let cfg = self.state.config.clone();
        let epoch = self.state.epochs_done + 1;
        let n = self.train.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut stream_rng(cfg.seed, &[tags::SHUFFLE, epoch as u64]));
        let mut norms = GradNorms::default();
        let mut updates = 0usize;
        let params = &mut self.state.params;
        for rows in order.chunks(cfg.batch_size) {
            let g = cd_gradient_keyed(self.train, rows, params, cfg.gibbs_steps, cfg.seed, epoch as u64);
            params.d.scaled_add(-cfg.learning_rate, &g.d);
            params.alpha.scaled_add(-cfg.learning_rate, &g.alpha);
            params.w.scaled_add(-cfg.learning_rate, &g.w);
            params.w_prime.scaled_add(-cfg.learning_rate, &g.w_prime);
            let lg = conditional_logit_gradient(self.train, rows, params);
            let (beta, c) = mle_logit_step(self.train, rows, params, cfg.mle_inner_steps, cfg.learning_rate);
            params.beta = beta;
            params.c = c;
            if let Some(block) = params.first_non_finite() {
                return Err(Error::NonFinite { block: block.name().into(), epoch });
            }
            norms.d += g.norm(ParamBlock::D);
            norms.alpha += g.norm(ParamBlock::Alpha);
            norms.w += g.norm(ParamBlock::W);
            norms.w_prime += g.norm(ParamBlock::WPrime);
            norms.beta += lg.beta.iter().map(|v| v * v).sum::<f64>().sqrt();
            norms.c += lg.c.iter().map(|v| v * v).sum::<f64>().sqrt();
            updates += 1;
        }
        let k = updates.max(1) as f64;
        for v in [&mut norms.beta, &mut norms.c, &mut norms.d, &mut norms.alpha, &mut norms.w, &mut norms.w_prime] {
            *v /= k;
        }
        let train_nll = validation_nll(&self.state.params, self.train);
        let valid_nll = validation_nll(&self.state.params, self.valid);
        if !train_nll.is_finite() || !valid_nll.is_finite() {
            return Err(Error::NonFinite { block: "choice log-likelihood".into(), epoch });
        }
        let st = &mut self.state;
        st.epochs_done = epoch;
        if st.best_valid.is_none_or(|b| valid_nll < b) {
            st.best_valid = Some(valid_nll);
            st.best_params = st.params.clone();
            st.history.best_epoch = Some(epoch);
            st.history.best_params_ref = Some(st.best_params.checksum());
            st.since_best = 0;
        } else {
            st.since_best += 1;
            if st.since_best >= cfg.early_stop_patience {
                st.history.stopped_early = true;
            }
        }
        st.history.epochs.push(EpochRecord {
            epoch,
            train_nll,
            valid_nll,
            grad_norms: norms,
            seconds: start.elapsed().as_secs_f64(),
        });
        Ok(st.history.epochs.last().expect("just pushed"))
    }

    /// Best parameters so far (the initial parameters before any epoch).
    pub fn best_params(&self) -> &ModelParams {
        &self.state.best_params
    }

    pub fn current_params(&self) -> &ModelParams {
        &self.state.params
    }

    pub fn finish(self) -> (ModelParams, TrainHistory) {
        (self.state.best_params, self.state.history)
    }
}

fn check_datasets(train: &Dataset, valid: &Dataset) -> Result<()> {
    if train.schema().hash() != valid.schema().hash() {
        return Err(Error::InvalidArgument("training and validation data use different schemas".into()));
    }
    if train.is_empty() {
        return Err(Error::InvalidArgument("training data is empty".into()));
    }
    Ok(())
}

/// Trains to completion and returns the parameters of the best validation
/// epoch together with the history.
pub fn train(train: &Dataset, valid: &Dataset, config: &TrainConfig) -> Result<(ModelParams, TrainHistory)> {
    let mut t = Trainer::new(train, valid, config.clone())?;
    while !t.is_finished() {
        t.run_epoch()?;
    }
    Ok(t.finish())
}
