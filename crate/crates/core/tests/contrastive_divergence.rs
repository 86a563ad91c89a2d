mod common;

use std::collections::BTreeMap;
use std::sync::Arc;

use common::{binary_joint, pick};
use infochoice::data::{Dataset, EncodingSchema, VariableSpec};
use infochoice::energy::ModelParams;
use infochoice::math::{logsumexp, sigmoid, softplus};
use infochoice::rng::stream_rng;
use infochoice::trainer::cd_gradient;
use ndarray::{array, Array2};
use rand::Rng;

fn schema(m: usize, j: usize) -> Arc<EncodingSchema> {
    let mut specs: Vec<VariableSpec> = (0..m).map(|i| VariableSpec::binary(&format!("b{i}"))).collect();
    let levels: Vec<String> = (0..j).map(|k| format!("alt{k}")).collect();
    let refs: Vec<&str> = levels.iter().map(String::as_str).collect();
    specs.push(VariableSpec::choice("y", &refs));
    Arc::new(EncodingSchema::new(specs, BTreeMap::new()).unwrap())
}

fn toy_params() -> ModelParams {
    ModelParams::from_parts(
        array![[0.5, -0.4], [-0.2, 0.3]],
        array![0.3, -0.6],
        array![0.2, -0.1],
        array![-0.2, 0.4],
        array![[0.8, -0.5], [-0.7, 0.6]],
        array![[0.9, -0.3], [-0.4, 0.5]],
    )
    .unwrap()
}

#[test]
fn gradient_vanishes_on_model_samples() {
    let params = toy_params();
    let sc = schema(2, 2);
    let joint = binary_joint(&params);
    let probs: Vec<f64> = joint.iter().map(|c| c.2).collect();
    let repeats = 100;
    let batch = 200;
    let mut grads: Vec<Vec<f64>> = Vec::new();
    for r in 0..repeats {
        let mut rng = stream_rng(31, &[r]);
        let mut x = Array2::zeros((batch, 2));
        let mut ys = Vec::new();
        for i in 0..batch {
            let (xv, y, _) = &joint[pick(&probs, &mut rng)];
            x[[i, 0]] = xv[0];
            x[[i, 1]] = xv[1];
            ys.push(*y);
        }
        let data = Dataset::new(x, ys, sc.clone(), (0..batch).map(|i| i.to_string()).collect()).unwrap();
        let g = cd_gradient(&data, &params, 1, &mut rng).unwrap();
        grads.push(g.d.iter().chain(&g.alpha).chain(&g.w).chain(&g.w_prime).copied().collect());
    }
    let k = grads[0].len();
    for e in 0..k {
        let vals: Vec<f64> = grads.iter().map(|g| g[e]).collect();
        let mean = vals.iter().sum::<f64>() / repeats as f64;
        let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (repeats - 1) as f64).sqrt();
        let se = sd / (repeats as f64).sqrt();
        assert!(mean.abs() < 3.0 * se, "entry {e}: mean {mean}, standard error {se}");
    }
}

#[test]
fn cd1_replays_by_hand() {
    let p = toy_params();
    let sc = schema(2, 2);
    let x = [1.0, 0.0];
    let y = 1;
    let data = Dataset::new(array![[1.0, 0.0]], vec![y], sc, vec!["r".into()]).unwrap();
    let g = cd_gradient(&data, &p, 1, &mut stream_rng(32, &[])).unwrap();

    let mut rng = stream_rng(32, &[]);
    let post = |x: &[f64], y: usize| -> Vec<f64> {
        (0..2).map(|h| sigmoid(x[0] * p.w[[0, h]] + x[1] * p.w[[1, h]] + p.w_prime[[h, y]] + p.alpha[h])).collect()
    };
    let mu0 = post(&x, y);
    let s: Vec<f64> = mu0.iter().map(|q| f64::from(u8::from(rng.random::<f64>() < *q))).collect();
    let act: Vec<f64> = (0..2).map(|m| p.d[m] + p.w[[m, 0]] * s[0] + p.w[[m, 1]] * s[1]).collect();
    let logits: Vec<f64> = (0..2)
        .map(|j| {
            p.c[j] + p.w_prime[[0, j]] * s[0] + p.w_prime[[1, j]] * s[1] + (0..2).map(|m| softplus(act[m] + p.beta[[m, j]])).sum::<f64>()
        })
        .collect();
    let u: f64 = rng.random();
    let y1 = if u < (logits[0] - logsumexp(&logits)).exp() { 0 } else { 1 };
    let x1: Vec<f64> =
        (0..2).map(|m| f64::from(u8::from(rng.random::<f64>() < sigmoid(act[m] + p.beta[[m, y1]])))).collect();
    let mu1 = post(&x1, y1);

    for m in 0..2 {
        assert!((g.d[m] - (x1[m] - x[m])).abs() < 1e-15);
        for h in 0..2 {
            assert!((g.w[[m, h]] - (x1[m] * mu1[h] - x[m] * mu0[h])).abs() < 1e-15);
        }
    }
    for h in 0..2 {
        assert!((g.alpha[h] - (mu1[h] - mu0[h])).abs() < 1e-15);
        for j in 0..2 {
            let want = f64::from(u8::from(j == y1)) * mu1[h] - f64::from(u8::from(j == y)) * mu0[h];
            assert!((g.w_prime[[h, j]] - want).abs() < 1e-15);
        }
    }
}
