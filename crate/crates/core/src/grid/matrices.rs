use serde::{Deserialize, Serialize};

use super::Network;
use crate::error::{Error, Result};
use crate::sparse::CscMatrix;

/// Bus-line incidence matrix: column `l` is `+1` at the line's from-bus and
/// `-1` at its to-bus.
#[derive(Clone, Debug, PartialEq)]
pub struct IncidenceMatrix(CscMatrix);

impl IncidenceMatrix {
    pub fn matrix(&self) -> &CscMatrix {
        &self.0
    }

    /// Endpoints `(from, to)` of line `l`.
    pub fn endpoints(&self, l: usize) -> (usize, usize) {
        let mut from = 0;
        let mut to = 0;
        for (r, v) in self.0.col(l) {
            if v > 0.0 {
                from = r;
            } else {
                to = r;
            }
        }
        (from, to)
    }

    pub fn n_buses(&self) -> usize {
        self.0.nrows()
    }

    pub fn n_lines(&self) -> usize {
        self.0.ncols()
    }
}

/// Weighted graph Laplacian `M·D_x·Mᵀ`.
#[derive(Clone, Debug, PartialEq)]
pub struct SusceptanceMatrix(CscMatrix);

impl SusceptanceMatrix {
    pub fn matrix(&self) -> &CscMatrix {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        self.0.mul_vec(x)
    }
}

/// `A_θ = M·D_x·diag(Mᵀθ)`, the sensitivity of `y` to each line's outage
/// indicator at the angle vector `θ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementMatrix {
    a: CscMatrix,
    theta: Vec<f64>,
}

impl MeasurementMatrix {
    pub fn matrix(&self) -> &CscMatrix {
        &self.a
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn mul_vec(&self, s: &[f64]) -> Vec<f64> {
        self.a.mul_vec(s)
    }
}

impl AsRef<CscMatrix> for SusceptanceMatrix {
    fn as_ref(&self) -> &CscMatrix {
        &self.0
    }
}

impl AsRef<CscMatrix> for MeasurementMatrix {
    fn as_ref(&self) -> &CscMatrix {
        &self.a
    }
}

pub fn incidence_matrix(net: &Network) -> IncidenceMatrix {
    let triplets: Vec<_> = net
        .lines()
        .iter()
        .enumerate()
        .flat_map(|(l, line)| [(line.from, l, 1.0), (line.to, l, -1.0)])
        .collect();
    IncidenceMatrix(CscMatrix::from_triplets(net.n_buses(), net.n_lines(), &triplets))
}

pub fn susceptance(net: &Network) -> SusceptanceMatrix {
    masked_susceptance(net, &vec![1.0; net.n_lines()])
}

/// `M·D_x·diag(w)·Mᵀ` = `Σ_l w_l/x_l · m_l m_lᵀ`. With `w = s_o` this is the
/// outage perturbation `ΔB`; with `w = 1 - s_o` the post-outage matrix.
pub fn masked_susceptance(net: &Network, weights: &[f64]) -> SusceptanceMatrix {
    assert_eq!(weights.len(), net.n_lines(), "one weight per line");
    let mut triplets = Vec::with_capacity(4 * net.n_lines() + net.n_buses());
    // keep the diagonal structurally present even for isolated buses
    triplets.extend((0..net.n_buses()).map(|n| (n, n, 0.0)));
    for (line, &w) in net.lines().iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        let b = w / line.reactance;
        triplets.push((line.from, line.from, b));
        triplets.push((line.to, line.to, b));
        triplets.push((line.from, line.to, -b));
        triplets.push((line.to, line.from, -b));
    }
    SusceptanceMatrix(CscMatrix::from_triplets(net.n_buses(), net.n_buses(), &triplets))
}

pub fn build_a(net: &Network, theta: &[f64]) -> Result<MeasurementMatrix> {
    if theta.len() != net.n_buses() {
        return Err(Error::Dimension(format!(
            "angle vector has {} entries for {} buses",
            theta.len(),
            net.n_buses()
        )));
    }
    let mut triplets = Vec::with_capacity(2 * net.n_lines());
    for (l, line) in net.lines().iter().enumerate() {
        let flow = (theta[line.from] - theta[line.to]) / line.reactance;
        if flow != 0.0 {
            triplets.push((line.from, l, flow));
            triplets.push((line.to, l, -flow));
        }
    }
    Ok(MeasurementMatrix {
        a: CscMatrix::from_triplets(net.n_buses(), net.n_lines(), &triplets),
        theta: theta.to_vec(),
    })
}
