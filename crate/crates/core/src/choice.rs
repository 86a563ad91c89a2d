//! Entropy-corrected conditional logit.
//!
//! `V_j = nu_j + H_j` with observed utility `nu_j = (beta_j + d)'x + c_j` and
//! entropy correction `H_j = sum_h softplus((x'W)_h + W'_hj + alpha_h)`;
//! `P(y = j | x) = softmax(V)_j`.

use std::io::Write;

use ndarray::{Array2, ArrayView1};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::data::Dataset;
use crate::energy::{entropy_from_input, latent_input, observed_utility, ModelParams};
use crate::error::Result;
use crate::math::logsumexp;
use crate::rng::{stream_rng, tags};

/// Per-alternative decomposition of the choice utility for one record.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UtilityBreakdown {
    pub nu: Vec<f64>,
    pub entropy: Vec<f64>,
    pub v: Vec<f64>,
    pub probs: Vec<f64>,
}

pub fn choice_probabilities(x: ArrayView1<f64>, params: &ModelParams) -> UtilityBreakdown {
    let nu = observed_utility(x, params);
    let a = latent_input(x, params);
    let entropy: Vec<f64> = (0..params.n_alternatives()).map(|j| entropy_from_input(&a, j, params)).collect();
    let v: Vec<f64> = nu.iter().zip(&entropy).map(|(n, h)| n + h).collect();
    let lse = logsumexp(&v);
    let probs = v.iter().map(|u| (u - lse).exp()).collect();
    UtilityBreakdown { nu, entropy, v, probs }
}

/// `log P(y = j | x)` for every alternative.
pub fn log_choice_probabilities(x: ArrayView1<f64>, params: &ModelParams) -> Vec<f64> {
    let b = choice_probabilities(x, params);
    let lse = logsumexp(&b.v);
    b.v.iter().map(|u| u - lse).collect()
}

/// Per-record probabilities and their column means.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub probs: Array2<f64>,
    pub mode_share: Vec<f64>,
}

pub fn predict(dataset: &Dataset, params: &ModelParams) -> Prediction {
    let j = params.n_alternatives();
    let rows: Vec<Vec<f64>> =
        (0..dataset.len()).into_par_iter().map(|i| choice_probabilities(dataset.row(i), params).probs).collect();
    let mut probs = Array2::zeros((rows.len(), j));
    let mut mode_share = vec![0.0; j];
    for (i, r) in rows.iter().enumerate() {
        for (k, p) in r.iter().enumerate() {
            probs[[i, k]] = *p;
            mode_share[k] += p;
        }
    }
    let n = rows.len().max(1) as f64;
    mode_share.iter_mut().for_each(|s| *s /= n);
    Prediction { probs, mode_share }
}

/// Mean negative log-likelihood of the observed choices.
pub fn mean_nll(params: &ModelParams, dataset: &Dataset) -> f64 {
    if dataset.is_empty() {
        return 0.0;
    }
    let terms: Vec<f64> = (0..dataset.len())
        .into_par_iter()
        .map(|i| -log_choice_probabilities(dataset.row(i), params)[dataset.choices()[i]])
        .collect();
    terms.iter().sum::<f64>() / dataset.len() as f64
}

/// Outcome of [`alternative_invariance_check`]: largest probability change
/// under each shift.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvarianceReport {
    pub probes: usize,
    pub constant_shift_max_diff: f64,
    pub beta_shift_max_diff: f64,
    pub single_constant_shift_min_diff: f64,
    pub passed: bool,
}

/// Verifies the logit identification property on random probes: shifting all
/// `c_j` by a constant, or every column of `beta` by a common vector, leaves
/// the probabilities unchanged within 1e-12, while shifting a single `c_j`
/// does not.
pub fn alternative_invariance_check(params: &ModelParams, probes: usize, seed: u64) -> InvarianceReport {
    let mut rng = stream_rng(seed, &[tags::PROBE]);
    let m = params.n_explanatory();
    let mut c_shift = params.clone();
    c_shift.c.iter_mut().for_each(|c| *c += 7.0);
    let mut beta_shift = params.clone();
    let common: Vec<f64> = (0..m).map(|_| 4.0 * rng.random::<f64>() - 2.0).collect();
    for (mi, mut row) in beta_shift.beta.rows_mut().into_iter().enumerate() {
        row.iter_mut().for_each(|b| *b += common[mi]);
    }
    let mut single = params.clone();
    if params.n_alternatives() > 1 {
        single.c[1] += 1.0;
    }
    let (mut c_diff, mut b_diff, mut s_diff) = (0.0f64, 0.0f64, f64::INFINITY);
    for _ in 0..probes {
        let x: Vec<f64> = (0..m).map(|_| 4.0 * rng.random::<f64>() - 2.0).collect();
        let x = ArrayView1::from(&x);
        let base = choice_probabilities(x, params).probs;
        let max_diff = |other: &ModelParams| {
            choice_probabilities(x, other).probs.iter().zip(&base).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        };
        c_diff = c_diff.max(max_diff(&c_shift));
        b_diff = b_diff.max(max_diff(&beta_shift));
        s_diff = s_diff.min(max_diff(&single));
    }
    let passed = c_diff <= 1e-12 && b_diff <= 1e-12 && (params.n_alternatives() < 2 || s_diff > 0.0);
    InvarianceReport {
        probes,
        constant_shift_max_diff: c_diff,
        beta_shift_max_diff: b_diff,
        single_constant_shift_min_diff: s_diff,
        passed,
    }
}

/// Writes `id, p_<alt>...` rows.
pub fn write_probabilities_csv<W: Write>(out: W, dataset: &Dataset, prediction: &Prediction) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["id".to_string()];
    header.extend(dataset.schema().alternatives().iter().map(|a| format!("p_{a}")));
    w.write_record(&header)?;
    for (i, row) in prediction.probs.outer_iter().enumerate() {
        let mut rec = vec![dataset.ids()[i].clone()];
        rec.extend(row.iter().map(|p| p.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| crate::error::Error::io("<csv>", e))?;
    Ok(())
}

/// Writes one row per (record, alternative) with the utility decomposition.
pub fn write_breakdown_csv<W: Write>(out: W, dataset: &Dataset, params: &ModelParams) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["id", "alternative", "nu", "entropy", "v", "prob"])?;
    let alts = dataset.schema().alternatives();
    for i in 0..dataset.len() {
        let b = choice_probabilities(dataset.row(i), params);
        for (j, alt) in alts.iter().enumerate() {
            w.write_record([
                dataset.ids()[i].clone(),
                alt.clone(),
                b.nu[j].to_string(),
                b.entropy[j].to_string(),
                b.v[j].to_string(),
                b.probs[j].to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| crate::error::Error::io("<csv>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::{joint_energy, LatentState};
    use ndarray::{array, Array1};
    use proptest::prelude::*;
    use rand::Rng;

    fn random_params(seed: u64, m: usize, j: usize, h: usize) -> ModelParams {
        let mut rng = stream_rng(seed, &[]);
        let mut p = ModelParams::init_random(m, j, h, 1.0, &mut rng);
        p.beta.iter_mut().for_each(|v| *v = 2.0 * rng.random::<f64>() - 1.0);
        p.c.iter_mut().for_each(|v| *v = 2.0 * rng.random::<f64>() - 1.0);
        p.d.iter_mut().for_each(|v| *v = 2.0 * rng.random::<f64>() - 1.0);
        p.alpha.iter_mut().for_each(|v| *v = 2.0 * rng.random::<f64>() - 1.0);
        p
    }

    #[test]
    fn uniform_at_zero_params() {
        let b = choice_probabilities(array![1.0, -3.0].view(), &ModelParams::zeros(2, 5, 3));
        for p in &b.probs {
            assert!((p - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn no_latents_is_plain_mnl() {
        let mut p = random_params(1, 3, 4, 0);
        let x = array![0.3, -1.2, 0.8];
        let b = choice_probabilities(x.view(), &p);
        let u: Vec<f64> = (0..4).map(|j| x.dot(&p.beta.column(j)) + p.c[j]).collect();
        let lse = logsumexp(&u);
        for j in 0..4 {
            assert!((b.probs[j] - (u[j] - lse).exp()).abs() < 1e-14);
        }
        p.d.fill(0.0);
        let b0 = choice_probabilities(x.view(), &p);
        for j in 0..4 {
            assert!((b.probs[j] - b0.probs[j]).abs() < 1e-14);
        }
    }

    #[test]
    fn breakdown_is_consistent() {
        let p = random_params(2, 4, 3, 6);
        let b = choice_probabilities(array![1.0, 0.0, -0.5, 2.0].view(), &p);
        assert!((b.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for j in 0..3 {
            assert_eq!(b.v[j], b.nu[j] + b.entropy[j]);
            assert!(b.entropy[j] >= 0.0);
        }
    }

    #[test]
    fn single_record_mode_share() {
        let sc = std::sync::Arc::new(
            crate::data::EncodingSchema::new(
                vec![crate::data::VariableSpec::binary("b"), crate::data::VariableSpec::choice("y", &["u", "v", "w"])],
                Default::default(),
            )
            .unwrap(),
        );
        let ds = Dataset::new(array![[1.0]], vec![2], sc, vec!["r".into()]).unwrap();
        let p = random_params(3, 1, 3, 2);
        let pred = predict(&ds, &p);
        assert_eq!(pred.mode_share, choice_probabilities(ds.row(0), &p).probs);
    }

    #[test]
    fn nll_vanishes_when_predictions_are_certain() {
        let sc = std::sync::Arc::new(
            crate::data::EncodingSchema::new(
                vec![crate::data::VariableSpec::binary("b"), crate::data::VariableSpec::choice("y", &["u", "v"])],
                Default::default(),
            )
            .unwrap(),
        );
        let ds = Dataset::new(array![[1.0], [0.0], [1.0]], vec![1, 0, 1], sc, vec!["a".into(), "b".into(), "c".into()])
            .unwrap();
        let mut last = f64::INFINITY;
        for scale in [1.0, 5.0, 20.0, 40.0] {
            let mut p = ModelParams::zeros(1, 2, 2);
            p.beta[[0, 1]] = 2.0 * scale;
            p.c[1] = -scale;
            let nll = mean_nll(&p, &ds);
            assert!(nll < last);
            last = nll;
        }
        assert!(last < 1e-15);
    }

    #[test]
    fn invariance_report_passes() {
        let r = alternative_invariance_check(&random_params(4, 3, 4, 5), 50, 9);
        assert!(r.passed, "{r:?}");
        assert!(r.single_constant_shift_min_diff > 1e-6);
    }

    #[test]
    fn entropy_monotone_in_alpha() {
        let p = random_params(5, 3, 3, 4);
        let x = array![0.1, 0.9, -0.4];
        let base = choice_probabilities(x.view(), &p);
        for h in 0..4 {
            let mut q = p.clone();
            q.alpha[h] += 1e-4;
            let b = choice_probabilities(x.view(), &q);
            for j in 0..3 {
                assert!(b.entropy[j] >= base.entropy[j]);
            }
        }
    }

    proptest! {
        #[test]
        fn matches_latent_enumeration(seed in any::<u64>(), h in 0usize..9, j in 2usize..5) {
            let p = random_params(seed, 3, j, h);
            let x = Array1::from(vec![0.5, -1.0, 1.5]);
            let b = choice_probabilities(x.view(), &p);
            let mut per_alt = Vec::new();
            for y in 0..j {
                let neg: Vec<f64> = (0..1u64 << h).map(|i| -joint_energy(x.view(), &LatentState::from_index(i, h), y, &p)).collect();
                per_alt.push(logsumexp(&neg));
            }
            let z = logsumexp(&per_alt);
            for y in 0..j {
                prop_assert!(((per_alt[y] - z).exp() - b.probs[y]).abs() < 1e-10);
            }
        }

        #[test]
        fn w_prime_increase_raises_own_probability(seed in any::<u64>()) {
            let p = random_params(seed, 3, 3, 4);
            let x = array![0.2, -0.6, 1.0];
            let base = choice_probabilities(x.view(), &p).probs;
            for h in 0..4 {
                for j in 0..3 {
                    let mut q = p.clone();
                    q.w_prime[[h, j]] += 1e-3;
                    prop_assert!(choice_probabilities(x.view(), &q).probs[j] >= base[j]);
                }
            }
        }

        #[test]
        fn scaling_utilities_keeps_ordering(seed in any::<u64>(), k in 0.1f64..5.0) {
            let p = random_params(seed, 3, 4, 0);
            let mut q = p.clone();
            q.beta.mapv_inplace(|v| v * k);
            q.c.mapv_inplace(|v| v * k);
            q.d.mapv_inplace(|v| v * k);
            let x = array![0.4, 1.1, -0.3];
            let argmax = |v: &[f64]| v.iter().enumerate().fold((0, f64::MIN), |a, (i, &u)| if u > a.1 { (i, u) } else { a }).0;
            prop_assert_eq!(argmax(&choice_probabilities(x.view(), &p).probs), argmax(&choice_probabilities(x.view(), &q).probs));
        }
    }
}
