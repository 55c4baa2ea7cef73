use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probabilities are kept inside `[PROB_FLOOR, 1 - PROB_FLOOR]`.
pub const PROB_FLOOR: f64 = 1e-12;
pub const VAR_FLOOR: f64 = 1e-12;
pub const NOISE_FLOOR: f64 = 1e-10;

pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
}

/// Spike-at-zero plus `K` Gaussian components.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussMixture {
    pub spike: f64,
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
}

impl GaussMixture {
    pub fn spike_only() -> Self {
        Self {
            spike: 1.0,
            weights: Vec::new(),
            means: Vec::new(),
            variances: Vec::new(),
        }
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.weights.len();
        if self.means.len() != k || self.variances.len() != k {
            return Err(Error::Dimension("mixture component vectors differ in length".into()));
        }
        let all = std::iter::once(self.spike).chain(self.weights.iter().copied());
        let mut total = 0.0;
        for w in all {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::Value(format!("mixture weight {w}")));
            }
            total += w;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Value(format!("mixture weights sum to {total}")));
        }
        if let Some(v) = self.variances.iter().find(|v| !(v.is_finite() && **v >= VAR_FLOOR)) {
            return Err(Error::Value(format!("mixture variance {v}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorParams {
    /// Per-line outage probability.
    pub p_o: f64,
    /// Prior on the per-bus contamination.
    pub gm: GaussMixture,
    pub noise_var: f64,
}

impl PriorParams {
    /// Scale-adaptive starting point for learning: a few expected outages,
    /// a 90% spike, and components spread over two decades of `var(y)`.
    pub fn initial(lines: usize, y: &[f64], components: usize) -> Self {
        let vy = variance(y);
        let expected = 5f64.min(lines as f64 / 10.0);
        let scales = component_scales(components);
        let weight = if components == 0 { 0.0 } else { 0.1 / components as f64 };
        Self {
            p_o: clamp_prob(expected / lines.max(1) as f64),
            gm: GaussMixture {
                spike: if components == 0 { 1.0 } else { 0.9 },
                weights: vec![weight; components],
                means: vec![0.0; components],
                variances: scales.iter().map(|c| (c * vy).max(VAR_FLOOR)).collect(),
            },
            noise_var: (0.1 * vy).max(NOISE_FLOOR),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p_o > 0.0 && self.p_o < 1.0) {
            return Err(Error::Value(format!("outage probability {}", self.p_o)));
        }
        if !(self.noise_var.is_finite() && self.noise_var > 0.0) {
            return Err(Error::Value(format!("noise variance {}", self.noise_var)));
        }
        self.gm.validate()
    }
}

/// Multipliers of `var(y)` for the initial component variances: `0.1, 1, 10`
/// for three components, log-spaced over the same range otherwise.
fn component_scales(k: usize) -> Vec<f64> {
    match k {
        0 => Vec::new(),
        1 => vec![1.0],
        _ => (0..k)
            .map(|i| 10f64.powf(-1.0 + 2.0 * i as f64 / (k - 1) as f64))
            .collect(),
    }
}

pub(crate) fn variance(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
}
