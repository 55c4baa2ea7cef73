use nalgebra::{DMatrix, DVector, LU};

use super::SusceptanceMatrix;
use crate::error::{Error, Result};
use crate::union_find::DisjointSet;

/// Factorized reduced susceptance system for repeated angle solves.
///
/// The slack row and column are removed; the slack angle is pinned to zero.
pub struct DcFlowSolver {
    lu: LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    slack: usize,
    n: usize,
}

impl DcFlowSolver {
    pub fn new(b: &SusceptanceMatrix, slack: usize) -> Result<Self> {
        let m = b.matrix();
        let n = m.nrows();
        if slack >= n {
            return Err(Error::Value(format!("slack index {slack} out of range")));
        }
        let mut ds = DisjointSet::new(n);
        for c in 0..n {
            for (r, v) in m.col(c) {
                if r != c && v != 0.0 {
                    ds.union(r, c);
                }
            }
        }
        if ds.components() != 1 {
            return Err(Error::Topology(format!(
                "susceptance graph has {} islands",
                ds.components()
            )));
        }

        let reduced = |i: usize| if i < slack { i } else { i - 1 };
        let mut dense = DMatrix::zeros(n - 1, n - 1);
        for c in (0..n).filter(|&c| c != slack) {
            for (r, v) in m.col(c).filter(|&(r, _)| r != slack) {
                dense[(reduced(r), reduced(c))] = v;
            }
        }
        let lu = dense.lu();
        if n > 1 && !lu.is_invertible() {
            return Err(Error::Topology("reduced susceptance system is singular".into()));
        }
        Ok(Self { lu, slack, n })
    }

    /// Angles with `θ_slack = 0` and `Bθ = p` on every other row.
    pub fn solve(&self, p: &[f64]) -> Result<Vec<f64>> {
        if p.len() != self.n {
            return Err(Error::Dimension(format!(
                "{} injections for {} buses",
                p.len(),
                self.n
            )));
        }
        let rhs: Vec<f64> = p
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != self.slack)
            .map(|(_, &v)| v)
            .collect();
        let mut theta = Vec::with_capacity(self.n);
        if self.n > 1 {
            let x = self
                .lu
                .solve(&DVector::from_vec(rhs))
                .ok_or_else(|| Error::Topology("reduced susceptance system is singular".into()))?;
            theta.extend_from_slice(x.as_slice());
        }
        theta.insert(self.slack, 0.0);
        Ok(theta)
    }
}

pub fn dc_flow_solve(b: &SusceptanceMatrix, p: &[f64], slack: usize) -> Result<Vec<f64>> {
    DcFlowSolver::new(b, slack)?.solve(p)
}
