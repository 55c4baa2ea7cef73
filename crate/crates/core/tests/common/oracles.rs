//! Independent posterior oracles for the scalar denoisers.

use outage_core::swamp::GaussMixture;
use rand::Rng;

/// Posterior mean and variance of a Bernoulli indicator by enumerating
/// both outcomes with explicit Gaussian likelihoods.
pub fn enumerate_s(sigma2: f64, r: f64, p: f64) -> (f64, f64) {
    let lik = |x: f64| (-(r - x).powi(2) / (2.0 * sigma2)).exp() / (2.0 * std::f64::consts::PI * sigma2).sqrt();
    let w1 = p * lik(1.0);
    let w0 = (1.0 - p) * lik(0.0);
    let mean = w1 / (w0 + w1);
    (mean, mean - mean * mean)
}

fn gauss(x: f64, m: f64, v: f64) -> f64 {
    (-(x - m).powi(2) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt()
}

/// Composite Simpson rule on `n` (even) intervals.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut sum = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(a + i as f64 * h);
    }
    sum * h / 3.0
}

/// Posterior moments of `e` by integrating prior × likelihood over a grid;
/// the spike contributes mass at zero only.
pub fn quadrature_e(sigma2: f64, r: f64, gm: &GaussMixture) -> (f64, f64) {
    let sd = sigma2.sqrt();
    let mut z = gm.spike * gauss(r, 0.0, sigma2);
    let (mut m1, mut m2) = (0.0, 0.0);
    for k in 0..gm.weights.len() {
        let (mu, v) = (gm.means[k], gm.variances[k]);
        let sk = v.sqrt();
        let lo = (mu - 14.0 * sk).min(r - 14.0 * sd);
        let hi = (mu + 14.0 * sk).max(r + 14.0 * sd);
        let f = |x: f64| gm.weights[k] * gauss(x, mu, v) * gauss(r, x, sigma2);
        z += simpson(&f, lo, hi, 40_000);
        m1 += simpson(|x| x * f(x), lo, hi, 40_000);
        m2 += simpson(|x| x * x * f(x), lo, hi, 40_000);
    }
    let mean = m1 / z;
    (mean, m2 / z - mean * mean)
}

pub fn random_mixture<R: Rng>(rng: &mut R) -> GaussMixture {
    let k = rng.random_range(1..=3);
    let mut raw: Vec<f64> = (0..=k).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.iter_mut().for_each(|w| *w /= total);
    GaussMixture {
        spike: raw[0],
        weights: raw[1..].to_vec(),
        means: (0..k).map(|_| rng.random_range(-2.0..2.0)).collect(),
        variances: (0..k).map(|_| rng.random_range(0.05..4.0)).collect(),
    }
}
