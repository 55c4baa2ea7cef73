//! Reference solvers and scoring.
//!
//! Exhaustive search enumerates every `k`-subset of lines and keeps the one
//! with the smallest residual `‖y - A·s‖²`. LASSO relaxes the indicator to a
//! real vector and runs cyclic coordinate descent on
//! `‖y - A·s - e‖² + λ_s‖W·s‖₁ + λ_e‖e‖₁`, where `W` is the identity or the
//! diagonal of column norms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::CscMatrix;

/// Largest outage count exhaustive search accepts unless told otherwise.
pub const DEFAULT_ES_CAP: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricPair {
    pub kappa_i: f64,
    pub kappa_f: f64,
}

/// Identification and false-alarm rate of `estimate` against `truth`.
///
/// An empty truth counts as fully identified; an empty estimate raises no
/// false alarm. Duplicate indices are ignored.
pub fn metrics(truth: &[usize], estimate: &[usize]) -> MetricPair {
    let mut truth = truth.to_vec();
    truth.sort_unstable();
    truth.dedup();
    let mut estimate = estimate.to_vec();
    estimate.sort_unstable();
    estimate.dedup();
    let hits = estimate.iter().filter(|l| truth.binary_search(l).is_ok()).count() as f64;
    MetricPair {
        kappa_i: if truth.is_empty() { 1.0 } else { hits / truth.len() as f64 },
        kappa_f: if estimate.is_empty() { 0.0 } else { 1.0 - hits / estimate.len() as f64 },
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EsOutcome {
    pub lines: Vec<usize>,
    pub residual: f64,
}

/// The `k`-subset minimizing `‖y - A·s‖²`. Equal residuals go to the
/// lexicographically smallest subset. `k > cap` is refused.
pub fn exhaustive_search_p1<M: AsRef<CscMatrix>>(a: &M, y: &[f64], k: usize, cap: usize) -> Result<EsOutcome> {
    let a = a.as_ref();
    if y.len() != a.nrows() {
        return Err(Error::Dimension(format!("{} measurements for {} rows", y.len(), a.nrows())));
    }
    if k > cap {
        return Err(Error::Refused(format!("exhaustive search over {k} outages exceeds the cap of {cap}")));
    }
    if k > a.ncols() {
        return Err(Error::Value(format!("cannot choose {k} of {} lines", a.ncols())));
    }
    let mut search = Search {
        a,
        k,
        chosen: Vec::with_capacity(k),
        best: None,
    };
    search.descend(0, y.to_vec());
    let (lines, residual) = search.best.expect("at least one subset exists");
    Ok(EsOutcome { lines, residual })
}

struct Search<'a> {
    a: &'a CscMatrix,
    k: usize,
    chosen: Vec<usize>,
    best: Option<(Vec<usize>, f64)>,
}

impl Search<'_> {
    fn descend(&mut self, start: usize, residual: Vec<f64>) {
        if self.chosen.len() == self.k {
            let value: f64 = residual.iter().map(|r| r * r).sum();
            if self.best.as_ref().is_none_or(|(_, b)| value < *b) {
                self.best = Some((self.chosen.clone(), value));
            }
            return;
        }
        let remaining = self.k - self.chosen.len();
        for l in start..=self.a.ncols() - remaining {
            let mut next = residual.clone();
            for (row, v) in self.a.col(l) {
                next[row] -= v;
            }
            self.chosen.push(l);
            self.descend(l + 1, next);
            self.chosen.pop();
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LassoConfig {
    pub lambda_s: f64,
    /// `f64::INFINITY` pins `e` at zero.
    pub lambda_e: f64,
    pub max_iter: usize,
    pub tol: f64,
    /// Scale each `|s_l|` penalty by the column norm `‖a_l‖`, which is the
    /// same as solving with unit-norm columns.
    pub weighted: bool,
}

impl Default for LassoConfig {
    fn default() -> Self {
        Self {
            lambda_s: 1e-2,
            lambda_e: f64::INFINITY,
            max_iter: 1000,
            tol: 1e-9,
            weighted: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LassoResult {
    pub s: Vec<f64>,
    pub e: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub objective: f64,
}

pub fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

pub fn lasso_objective<M: AsRef<CscMatrix>>(a: &M, y: &[f64], s: &[f64], e: &[f64], cfg: &LassoConfig) -> f64 {
    let a = a.as_ref();
    let r = lasso_residual(a, y, s, e);
    let mut obj: f64 = r.iter().map(|v| v * v).sum();
    let w = penalty_weights(a, cfg.weighted);
    obj += cfg.lambda_s * s.iter().zip(&w).map(|(v, w)| w * v.abs()).sum::<f64>();
    if cfg.lambda_e.is_finite() {
        obj += cfg.lambda_e * e.iter().map(|v| v.abs()).sum::<f64>();
    }
    obj
}

/// Per-line penalty weights: column norms when `weighted`, else ones.
pub fn penalty_weights(a: &CscMatrix, weighted: bool) -> Vec<f64> {
    (0..a.ncols())
        .map(|c| {
            if weighted {
                a.col(c).map(|(_, v)| v * v).sum::<f64>().sqrt()
            } else {
                1.0
            }
        })
        .collect()
}

fn lasso_residual(a: &CscMatrix, y: &[f64], s: &[f64], e: &[f64]) -> Vec<f64> {
    let as_ = a.mul_vec(s);
    y.iter().zip(&as_).zip(e).map(|((y, p), e)| y - p - e).collect()
}

/// Cyclic coordinate descent: one sweep visits every `s_l`, then every
/// `e_n`. Stops once no coordinate moves by `tol` or more. On hitting
/// `max_iter` the last iterate is returned with `converged = false`; the
/// objective never increases, so it is also the best one.
pub fn lasso_solve<M: AsRef<CscMatrix>>(a: &M, y: &[f64], cfg: &LassoConfig) -> Result<LassoResult> {
    let a = a.as_ref();
    if y.len() != a.nrows() {
        return Err(Error::Dimension(format!("{} measurements for {} rows", y.len(), a.nrows())));
    }
    if !(cfg.lambda_s > 0.0 && cfg.lambda_e > 0.0) {
        return Err(Error::Value(format!(
            "penalties must be positive, got {} and {}",
            cfg.lambda_s, cfg.lambda_e
        )));
    }
    let (n, l) = (a.nrows(), a.ncols());
    let col_norm2: Vec<f64> = (0..l).map(|c| a.col(c).map(|(_, v)| v * v).sum()).collect();
    let weights = penalty_weights(a, cfg.weighted);
    let mut s = vec![0.0; l];
    let mut e = vec![0.0; n];
    let mut r = y.to_vec();
    let learn_e = cfg.lambda_e.is_finite();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iter {
        iterations += 1;
        let mut change: f64 = 0.0;
        for c in 0..l {
            if col_norm2[c] == 0.0 {
                continue;
            }
            let old = s[c];
            let rho: f64 = a.col(c).map(|(row, v)| v * (r[row] + v * old)).sum();
            let new = soft_threshold(rho, cfg.lambda_s * weights[c] / 2.0) / col_norm2[c];
            if new != old {
                for (row, v) in a.col(c) {
                    r[row] -= v * (new - old);
                }
                s[c] = new;
                change = change.max((new - old).abs());
            }
        }
        if learn_e {
            for i in 0..n {
                let old = e[i];
                let new = soft_threshold(r[i] + old, cfg.lambda_e / 2.0);
                if new != old {
                    r[i] -= new - old;
                    e[i] = new;
                    change = change.max((new - old).abs());
                }
            }
        }
        if change < cfg.tol {
            converged = true;
            break;
        }
    }
    let objective = lasso_objective(&a, y, &s, &e, cfg);
    Ok(LassoResult {
        s,
        e,
        iterations,
        converged,
        objective,
    })
}

/// `points` penalties spaced geometrically over `[1e-4, 1]·‖Aᵀy‖∞`,
/// largest first.
pub fn lambda_grid<M: AsRef<CscMatrix>>(a: &M, y: &[f64], points: usize) -> Vec<f64> {
    let top = a.as_ref().tr_mul_vec(y).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if points == 0 || top == 0.0 {
        return Vec::new();
    }
    if points == 1 {
        return vec![top];
    }
    (0..points)
        .map(|i| top * 10f64.powf(-4.0 * i as f64 / (points - 1) as f64))
        .collect()
}
