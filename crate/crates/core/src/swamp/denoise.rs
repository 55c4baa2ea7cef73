//! Scalar posterior denoisers.
//!
//! Both take a Gaussian pseudo-observation `r` of the unknown with variance
//! `sigma2` and return the posterior mean and variance under the prior.

use std::f64::consts::PI;

use super::prior::{clamp_prob, GaussMixture, VAR_FLOOR};

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Posterior of a `{0, 1}` indicator with `P(1) = p_o`.
pub fn denoise_s(sigma2: f64, r: f64, p_o: f64) -> (f64, f64) {
    let pi = sigmoid(posterior_log_odds(sigma2, r, p_o));
    (pi, pi * (1.0 - pi))
}

/// `ln(P(1 | r) / P(0 | r))`, the quantity [`denoise_s`] squashes.
pub fn posterior_log_odds(sigma2: f64, r: f64, p_o: f64) -> f64 {
    let p = clamp_prob(p_o);
    (p / (1.0 - p)).ln() + (2.0 * r - 1.0) / (2.0 * sigma2.max(VAR_FLOOR))
}

pub(crate) fn log_normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * ((x - mean).powi(2) / var + (2.0 * PI * var).ln())
}

/// Normalizes log-weights in place into probabilities.
pub(crate) fn normalize_log_weights(logw: &mut [f64]) {
    let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        logw.iter_mut().for_each(|w| *w = 0.0);
        return;
    }
    let mut total = 0.0;
    for w in logw.iter_mut() {
        *w = (*w - max).exp();
        total += *w;
    }
    logw.iter_mut().for_each(|w| *w /= total);
}

/// Posterior under the spike-plus-Gaussian-mixture prior.
pub fn denoise_e(sigma2: f64, r: f64, gm: &GaussMixture) -> (f64, f64) {
    let sigma2 = sigma2.max(VAR_FLOOR);
    let k = gm.components();
    let mut w = Vec::with_capacity(k + 1);
    w.push(gm.spike.ln() + log_normal_pdf(r, 0.0, sigma2));
    for c in 0..k {
        w.push(gm.weights[c].ln() + log_normal_pdf(r, gm.means[c], gm.variances[c] + sigma2));
    }
    normalize_log_weights(&mut w);

    let mut moments = Vec::with_capacity(k);
    let mut mean = 0.0;
    for c in 0..k {
        let prec = 1.0 / sigma2 + 1.0 / gm.variances[c];
        let gamma = (r / sigma2 + gm.means[c] / gm.variances[c]) / prec;
        moments.push((gamma, 1.0 / prec));
        mean += w[c + 1] * gamma;
    }
    let mut var = w[0] * mean * mean;
    for (c, (gamma, zeta)) in moments.into_iter().enumerate() {
        var += w[c + 1] * (zeta + (gamma - mean).powi(2));
    }
    (mean, var.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn s_symmetric_point() {
        for s2 in [1e-3, 0.1, 5.0] {
            let (m, v) = denoise_s(s2, 0.5, 0.5);
            assert!((m - 0.5).abs() < 1e-15 && (v - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn s_degenerate_prior() {
        let (m, v) = denoise_s(0.1, 0.0, 1.0);
        assert!(m > 1.0 - 1e-9 && v < 1e-9);
    }

    #[test]
    fn e_pure_spike_is_zero() {
        assert_eq!(denoise_e(0.3, 4.0, &GaussMixture::spike_only()), (0.0, 0.0));
    }

    #[test]
    fn e_single_gaussian_is_conjugate() {
        let gm = GaussMixture {
            spike: 0.0,
            weights: vec![1.0],
            means: vec![0.0],
            variances: vec![1.0],
        };
        let (m, v) = denoise_e(1.0, 2.0, &gm);
        assert!((m - 1.0).abs() < 1e-15 && (v - 0.5).abs() < 1e-15);
    }
}
