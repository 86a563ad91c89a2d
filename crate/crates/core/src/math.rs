//! Numerically stable scalar helpers shared by the energy, choice and
//! diagnostics code.

use rand::Rng;
use std::f64::consts::PI;

/// Stable `log(1 + exp(z))`, written as `max(z, 0) + log1p(exp(-|z|))`.
#[inline]
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Stable logistic function.
#[inline]
pub fn sigmoid(z: f64) -> f64 {
    let e = (-z.abs()).exp();
    if z >= 0.0 {
        1.0 / (1.0 + e)
    } else {
        e / (1.0 + e)
    }
}

/// `log(sum(exp(v)))`. Returns `-inf` for an empty slice.
pub fn logsumexp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Softmax routed through [`logsumexp`].
pub fn softmax(values: &[f64]) -> Vec<f64> {
    let lse = logsumexp(values);
    values.iter().map(|v| (v - lse).exp()).collect()
}

/// Logarithm of the modified Bessel function of the first kind, order zero.
///
/// Power series below 20, asymptotic expansion above. Both branches are
/// accurate to a few ulps over the range the samplers use.
pub fn log_bessel_i0(x: f64) -> f64 {
    let x = x.abs();
    if x <= 20.0 {
        let q = 0.25 * x * x;
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k = 1.0;
        while term > 1e-17 * sum {
            term *= q / (k * k);
            sum += term;
            k += 1.0;
        }
        sum.ln()
    } else {
        // I0(x) ~ e^x / sqrt(2 pi x) * sum_k ((2k-1)!!)^2 / (k! (8x)^k)
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..40 {
            let kf = k as f64;
            let next = term * (2.0 * kf - 1.0).powi(2) / (kf * 8.0 * x);
            if next.abs() < 1e-17 || next.abs() > term.abs() {
                break;
            }
            term = next;
            sum += term;
        }
        x - 0.5 * (2.0 * PI * x).ln() + sum.ln()
    }
}

/// Draws an index from unnormalized log-weights by inverse CDF with a single
/// uniform draw.
pub fn sample_categorical_logits<R: Rng + ?Sized>(logits: &[f64], rng: &mut R) -> usize {
    let lse = logsumexp(logits);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, l) in logits.iter().enumerate() {
        acc += (l - lse).exp();
        if u < acc {
            return k;
        }
    }
    logits.len() - 1
}

/// Bernoulli draw: one uniform, success when it falls below `p`.
#[inline]
pub fn sample_bernoulli<R: Rng + ?Sized>(p: f64, rng: &mut R) -> bool {
    rng.random::<f64>() < p
}

/// Von Mises draw on the circle (Best & Fisher rejection sampler).
pub fn sample_von_mises<R: Rng + ?Sized>(mean: f64, kappa: f64, rng: &mut R) -> f64 {
    if kappa < 1e-8 {
        return PI * (2.0 * rng.random::<f64>() - 1.0);
    }
    let tau = 1.0 + (1.0 + 4.0 * kappa * kappa).sqrt();
    let rho = (tau - (2.0 * tau).sqrt()) / (2.0 * kappa);
    let r = (1.0 + rho * rho) / (2.0 * rho);
    let f = loop {
        let u1: f64 = rng.random();
        let u2: f64 = rng.random();
        let z = (PI * u1).cos();
        let f = (1.0 + r * z) / (r + z);
        let c = kappa * (r - f);
        if c * (2.0 - c) - u2 > 0.0 || (c / u2).ln() + 1.0 - c >= 0.0 {
            break f;
        }
    };
    let u3: f64 = rng.random();
    let theta = mean + if u3 > 0.5 { f.clamp(-1.0, 1.0).acos() } else { -f.clamp(-1.0, 1.0).acos() };
    wrap_angle(theta)
}

/// Maps an angle into `[-pi, pi)`.
pub fn wrap_angle(theta: f64) -> f64 {
    (theta + PI).rem_euclid(2.0 * PI) - PI
}

/// Sample mean and (n - 1) standard deviation.
pub fn mean_and_sample_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn softplus_matches_naive_in_safe_range() {
        for z in [-30.0, -2.5, -0.1, 0.0, 0.3, 4.0, 30.0] {
            let naive = (1.0f64 + f64::exp(z)).ln();
            assert!((softplus(z) - naive).abs() < 1e-14, "z = {z}");
        }
    }

    #[test]
    fn softplus_saturates_without_overflow() {
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0).abs() < 1e-300);
        assert!(softplus(-1000.0) >= 0.0);
    }

    #[test]
    fn sigmoid_limits() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(1.0 - sigmoid(50.0) < 1e-15);
        assert!(sigmoid(-800.0) >= 0.0);
        assert!(sigmoid(800.0).is_finite());
    }

    #[test]
    fn logsumexp_handles_large_offsets() {
        let v = [1000.0, 1000.0];
        assert!((logsumexp(&v) - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(logsumexp(&[]), f64::NEG_INFINITY);
        let p = softmax(&[-800.0, 0.0, 800.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn bessel_i0_reference_values() {
        // I0 reference values from standard tables.
        let cases = [
            (0.0, 1.0),
            (1.0, 1.266_065_877_752_008_2),
            (5.0, 27.239_871_823_604_442),
            (20.0, 43_558_282.559_553_534),
            (25.0, 5_774_560_606.466_311),
        ];
        for (x, want) in cases {
            let got = log_bessel_i0(x).exp();
            assert!(((got - want) / want).abs() < 1e-12, "x = {x}: {got} vs {want}");
        }
    }

    #[test]
    fn von_mises_mean_resultant_length() {
        // E[cos(theta - mu)] = I1(k) / I0(k); for k = 2 this is 0.697774657964008.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 200_000;
        let mu = 1.0;
        let mean_cos: f64 = (0..n)
            .map(|_| (sample_von_mises(mu, 2.0, &mut rng) - mu).cos())
            .sum::<f64>()
            / n as f64;
        assert!((mean_cos - 0.697_774_657_964_008).abs() < 0.005, "{mean_cos}");
    }

    #[test]
    fn sample_std_uses_n_minus_one() {
        let (m, s) = mean_and_sample_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }
}
