//! Simulated populations and brute-force oracles shared by the integration
//! tests.

#![allow(dead_code)]

use std::f64::consts::TAU;
use std::sync::Arc;

use infochoice::data::{encode, fit_schema, stratified_split_indices, Dataset, EncodingSchema, RawTable, VariableKind, VariableSpec};
use infochoice::energy::{free_energy, joint_energy, LatentState, ModelParams};
use infochoice::math::{logsumexp, sample_von_mises, softmax};
use infochoice::rng::{stream_rng, StreamRng};
use ndarray::{Array1, ArrayView1};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn pick<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, q) in p.iter().enumerate() {
        acc += q;
        if u < acc {
            return k;
        }
    }
    p.len() - 1
}

pub fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

fn clock<R: Rng + ?Sized>(peak: f64, period: f64, kappa: f64, rng: &mut R) -> f64 {
    let theta = sample_von_mises(TAU * peak / period, kappa, rng);
    (theta / TAU * period).rem_euclid(period)
}

/// A simulated population before encoding.
pub struct Population {
    pub raw: RawTable,
    pub specs: Vec<VariableSpec>,
    /// Hidden segment of every record.
    pub segment: Vec<bool>,
    /// Generator choice probabilities of every record.
    pub truth: Vec<Vec<f64>>,
    pub modes: Vec<String>,
}

impl Population {
    fn new(
        headers: &[&str],
        rows: Vec<Vec<String>>,
        specs: Vec<VariableSpec>,
        segment: Vec<bool>,
        truth: Vec<Vec<f64>>,
    ) -> Self {
        let raw = RawTable::new(headers.iter().map(|h| h.to_string()).collect(), rows, None).unwrap();
        let modes = match &specs.last().unwrap().kind {
            VariableKind::Categorical { levels } => levels.clone(),
            _ => unreachable!("the choice comes last"),
        };
        Self { raw, specs, segment, truth, modes }
    }

    /// Stratified split, schema fitted on the training rows, both partitions
    /// encoded with it.
    pub fn split(&self, train_fraction: f64, seed: u64) -> (Arc<EncodingSchema>, Dataset, Dataset) {
        let col = self.raw.column(&self.specs.last().unwrap().name).unwrap();
        let levels = &self.modes;
        let labels: Vec<usize> =
            (0..self.raw.len()).map(|i| levels.iter().position(|l| l == self.raw.get(i, col)).unwrap()).collect();
        let (ti, vi) = stratified_split_indices(&labels, levels.len(), train_fraction, seed).unwrap();
        let schema = Arc::new(fit_schema(&self.raw.subset(&ti), &self.specs).unwrap());
        let train = encode(&self.raw.subset(&ti), &schema).unwrap();
        let valid = encode(&self.raw.subset(&vi), &schema).unwrap();
        (schema, train, valid)
    }
}

const ACTIVITIES: [&str; 4] = ["work", "shop", "school", "leisure"];
const SEGMENT_ACTIVITY: [[f64; 4]; 2] = [[0.05, 0.1, 0.25, 0.6], [0.6, 0.25, 0.1, 0.05]];

/// Two-segment mixture of logits over trip distance, activity and departure
/// hour. The segments disagree on how distance trades off transit against
/// bike and also differ in their activity and hour profiles.
pub fn two_segment_population(n: usize, seed: u64) -> Population {
    let mut rng = stream_rng(seed, &[1001]);
    let taste = 1.5;
    let modes = ["car", "transit", "bike"];
    let mut rows = Vec::with_capacity(n);
    let mut truth = Vec::with_capacity(n);
    let mut segment = Vec::with_capacity(n);
    for _ in 0..n {
        let z = rng.random::<f64>() < 0.5;
        let s = if z { 1.0 } else { -1.0 };
        let a = pick(&SEGMENT_ACTIVITY[usize::from(z)], &mut rng);
        let dz = normal(&mut rng);
        let dist = (1.0 + 0.8 * dz).exp();
        let hour = clock(if z { 8.0 } else { 17.0 }, 24.0, 2.0, &mut rng);
        let util = [0.0, 0.3 + s * taste * dz, -0.2 - s * taste * dz + 0.5 * f64::from(u8::from(a == 3))];
        let probs = softmax(&util);
        let y = pick(&probs, &mut rng);
        truth.push(probs);
        rows.push(vec![dist.to_string(), ACTIVITIES[a].to_string(), hour.to_string(), modes[y].to_string()]);
        segment.push(z);
    }
    Population::new(
        &["dist", "activity", "hour", "mode"],
        rows,
        vec![
            VariableSpec::continuous("dist"),
            VariableSpec::categorical("activity", &[]),
            VariableSpec::cyclical("hour", 24.0),
            VariableSpec::choice("mode", &modes),
        ],
        segment,
        truth,
    )
}

/// A wider travel-diary population (15 encoded columns, 4 modes) with the
/// same two-segment structure plus segment-independent covariates and a rare
/// category level.
pub fn travel_diary_population(n: usize, seed: u64) -> Population {
    let mut rng = stream_rng(seed, &[1002]);
    let companions = ["alone", "family", "friends"];
    let modes = ["car", "transit", "bike", "walk"];
    let taste = 1.5;
    let mut rows = Vec::with_capacity(n);
    let mut truth = Vec::with_capacity(n);
    let mut segment = Vec::with_capacity(n);
    for _ in 0..n {
        let z = rng.random::<f64>() < 0.5;
        let s = if z { 1.0 } else { -1.0 };
        let a = pick(&SEGMENT_ACTIVITY[usize::from(z)], &mut rng);
        let c = pick(&[0.7, 0.25, 0.05], &mut rng);
        let dz = normal(&mut rng);
        let ldur = 2.5 + 0.5 * dz + 0.4 * normal(&mut rng);
        let sz = normal(&mut rng);
        let linc = 3.5 + 0.2 * s + 0.5 * normal(&mut rng);
        let iz = (linc - 3.5) / 0.54;
        let hour = clock(if z { 8.0 } else { 17.0 }, 24.0, 2.0, &mut rng);
        let day = clock(if z { 2.0 } else { 5.5 }, 7.0, 1.0, &mut rng);
        let util = [
            0.0,
            -0.2 + s * taste * dz - 0.3 * iz + 0.4 * f64::from(u8::from(c == 2)),
            -1.0 - s * taste * dz + 0.5 * sz,
            -0.6 - 1.2 * dz + 0.5 * f64::from(u8::from(a == 3)) - 0.3 * sz,
        ];
        let probs = softmax(&util);
        let y = pick(&probs, &mut rng);
        truth.push(probs);
        rows.push(vec![
            (1.0 + 0.8 * dz).exp().to_string(),
            ldur.exp().to_string(),
            (2.0 + 0.5 * sz).exp().to_string(),
            linc.exp().to_string(),
            ACTIVITIES[a].to_string(),
            companions[c].to_string(),
            hour.to_string(),
            day.to_string(),
            modes[y].to_string(),
        ]);
        segment.push(z);
    }
    Population::new(
        &["dist", "duration", "speed", "income", "activity", "companions", "hour", "weekday", "mode"],
        rows,
        vec![
            VariableSpec::continuous("dist"),
            VariableSpec::continuous("duration"),
            VariableSpec::continuous("speed"),
            VariableSpec::continuous("income"),
            VariableSpec::categorical("activity", &[]),
            VariableSpec::categorical("companions", &[]),
            VariableSpec::cyclical("hour", 24.0),
            VariableSpec::cyclical("weekday", 7.0),
            VariableSpec::choice("mode", &modes),
        ],
        segment,
        truth,
    )
}

/// The choice depends on the hidden segment and on `cost`; `income` is
/// correlated with the segment but never enters the utilities; `noise` is
/// unrelated to everything.
pub fn inattended_population(n: usize, seed: u64) -> Population {
    let mut rng = stream_rng(seed, &[1003]);
    let modes = ["car", "transit", "bike"];
    let mut rows = Vec::with_capacity(n);
    let mut truth = Vec::with_capacity(n);
    let mut segment = Vec::with_capacity(n);
    for _ in 0..n {
        let z = rng.random::<f64>() < 0.5;
        let s = if z { 1.0 } else { -1.0 };
        let a = pick(&SEGMENT_ACTIVITY[usize::from(z)], &mut rng);
        let hour = clock(if z { 8.0 } else { 17.0 }, 24.0, 2.0, &mut rng);
        let income = s + normal(&mut rng);
        let cost = normal(&mut rng);
        let noise = normal(&mut rng);
        let util = [0.0, 0.5 - 0.8 * cost - 2.0 * s, -1.0 + 0.8 * cost + 2.0 * s];
        let probs = softmax(&util);
        let y = pick(&probs, &mut rng);
        truth.push(probs);
        rows.push(vec![
            income.exp().to_string(),
            cost.exp().to_string(),
            noise.exp().to_string(),
            ACTIVITIES[a].to_string(),
            hour.to_string(),
            modes[y].to_string(),
        ]);
        segment.push(z);
    }
    Population::new(
        &["income", "cost", "noise", "activity", "hour", "mode"],
        rows,
        vec![
            VariableSpec::continuous("income"),
            VariableSpec::continuous("cost"),
            VariableSpec::continuous("noise"),
            VariableSpec::categorical("activity", &[]),
            VariableSpec::cyclical("hour", 24.0),
            VariableSpec::choice("mode", &modes),
        ],
        segment,
        truth,
    )
}

/// Records from a plain multinomial logit over three continuous covariates
/// and one binary covariate.
pub fn mnl_population(n: usize, seed: u64) -> Population {
    let mut rng = stream_rng(seed, &[1004]);
    let modes = ["car", "transit", "bike"];
    let mut rows = Vec::with_capacity(n);
    let mut truth = Vec::with_capacity(n);
    for _ in 0..n {
        let (a, b, c) = (normal(&mut rng), normal(&mut rng), normal(&mut rng));
        let flag = rng.random::<f64>() < 0.3;
        let f = f64::from(u8::from(flag));
        let util = [0.0, 0.4 + 0.9 * a - 0.5 * b + 0.7 * f, -0.3 - 0.6 * a + 0.3 * c - 0.4 * f];
        let probs = softmax(&util);
        let y = pick(&probs, &mut rng);
        truth.push(probs);
        rows.push(vec![
            a.exp().to_string(),
            b.exp().to_string(),
            c.exp().to_string(),
            if flag { "1" } else { "0" }.to_string(),
            modes[y].to_string(),
        ]);
    }
    Population::new(
        &["a", "b", "c", "flag", "mode"],
        rows,
        vec![
            VariableSpec::continuous("a"),
            VariableSpec::continuous("b"),
            VariableSpec::continuous("c"),
            VariableSpec::binary("flag"),
            VariableSpec::choice("mode", &modes),
        ],
        vec![false; n],
        truth,
    )
}

pub fn random_params(m: usize, j: usize, h: usize, scale: f64, rng: &mut StreamRng) -> ModelParams {
    ModelParams::init_random(m, j, h, scale, rng)
}

pub fn random_vector(m: usize, rng: &mut StreamRng) -> Array1<f64> {
    Array1::from_iter((0..m).map(|_| normal(rng)))
}

/// `-log sum_s exp(-E(x, s, y))` over all latent configurations.
pub fn brute_free_energy(x: ArrayView1<f64>, y: usize, params: &ModelParams) -> f64 {
    let h = params.n_latent();
    let neg: Vec<f64> =
        (0..1u64 << h).map(|k| -joint_energy(x, &LatentState::from_index(k, h), y, params)).collect();
    -logsumexp(&neg)
}

/// Posterior marginals `p(s_h = 1 | x, y)` by enumeration.
pub fn brute_posterior(x: ArrayView1<f64>, y: usize, params: &ModelParams) -> Vec<f64> {
    let h = params.n_latent();
    let states: Vec<LatentState> = (0..1u64 << h).map(|k| LatentState::from_index(k, h)).collect();
    let neg: Vec<f64> = states.iter().map(|s| -joint_energy(x, s, y, params)).collect();
    let z = logsumexp(&neg);
    (0..h)
        .map(|i| states.iter().zip(&neg).filter(|(s, _)| s.bits()[i]).map(|(_, e)| (e - z).exp()).sum())
        .collect()
}

/// `p(y | x)` by enumeration over latent states and alternatives.
pub fn brute_choice(x: ArrayView1<f64>, params: &ModelParams) -> Vec<f64> {
    let h = params.n_latent();
    let mut neg = Vec::new();
    for y in 0..params.n_alternatives() {
        for k in 0..1u64 << h {
            neg.push(-joint_energy(x, &LatentState::from_index(k, h), y, params));
        }
    }
    let z = logsumexp(&neg);
    let per = 1usize << h;
    (0..params.n_alternatives()).map(|y| neg[y * per..(y + 1) * per].iter().map(|e| (e - z).exp()).sum()).collect()
}

/// Every `(x, y)` in a domain of binary explanatory columns with its model
/// probability.
pub fn binary_joint(params: &ModelParams) -> Vec<(Vec<f64>, usize, f64)> {
    let m = params.n_explanatory();
    let mut cells = Vec::new();
    for bits in 0..1u32 << m {
        let x: Vec<f64> = (0..m).map(|i| f64::from((bits >> i) & 1)).collect();
        for y in 0..params.n_alternatives() {
            cells.push((x.clone(), y, -free_energy(ArrayView1::from(&x), y, params)));
        }
    }
    let z = logsumexp(&cells.iter().map(|c| c.2).collect::<Vec<_>>());
    cells.into_iter().map(|(x, y, n)| (x, y, (n - z).exp())).collect()
}
