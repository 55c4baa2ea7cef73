//! Grid topology and the DC power-flow objects built from it.
//!
//! A [`Network`] is immutable once built. Buses carry external IDs from the
//! case file and dense internal indices `0..N`; lines are stored with
//! internal endpoints in case-file order, after parallel branches have been
//! merged.

mod dcflow;
mod matrices;
mod parse;

pub use dcflow::{dc_flow_solve, DcFlowSolver};
pub use matrices::{
    build_a, incidence_matrix, masked_susceptance, susceptance, IncidenceMatrix,
    MeasurementMatrix, SusceptanceMatrix,
};
pub use parse::{parse_case, parse_case_with, to_native_json, CaseFormat, ParseOptions};

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::union_find::DisjointSet;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub from: usize,
    pub to: usize,
    /// Per-unit series reactance.
    pub reactance: f64,
}

impl Line {
    pub fn susceptance(&self) -> f64 {
        1.0 / self.reactance
    }

    pub fn other_end(&self, bus: usize) -> usize {
        if bus == self.from {
            self.to
        } else {
            self.from
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    bus_ids: Vec<u64>,
    index_of: HashMap<u64, usize>,
    lines: Vec<Line>,
    injections: Vec<f64>,
    slack: usize,
    incident: Vec<Vec<usize>>,
}

impl Network {
    /// Validates and assembles a network from internal-index lines.
    ///
    /// Requires distinct bus IDs, in-range distinct endpoints, nonzero finite
    /// reactances, at most one line per bus pair and a connected graph.
    /// Positive reactances are additionally required unless
    /// `allow_negative_reactance` is set.
    pub fn new(
        bus_ids: Vec<u64>,
        lines: Vec<Line>,
        injections: Vec<f64>,
        slack: usize,
        allow_negative_reactance: bool,
    ) -> Result<Self> {
        let n = bus_ids.len();
        if n == 0 {
            return Err(Error::Value("network has no buses".into()));
        }
        if injections.len() != n {
            return Err(Error::Dimension(format!(
                "{} injections for {n} buses",
                injections.len()
            )));
        }
        if slack >= n {
            return Err(Error::Value(format!("slack index {slack} out of range")));
        }
        let mut index_of = HashMap::with_capacity(n);
        for (i, &id) in bus_ids.iter().enumerate() {
            if index_of.insert(id, i).is_some() {
                return Err(Error::Value(format!("duplicate bus id {id}")));
            }
        }

        let mut incident = vec![Vec::new(); n];
        let mut pairs = HashMap::with_capacity(lines.len());
        for (l, line) in lines.iter().enumerate() {
            if line.from >= n || line.to >= n {
                return Err(Error::Value(format!("line {l} references a missing bus")));
            }
            if line.from == line.to {
                return Err(Error::Value(format!("line {l} is a self-loop")));
            }
            let x = line.reactance;
            if !x.is_finite() || x == 0.0 || (x < 0.0 && !allow_negative_reactance) {
                return Err(Error::Value(format!(
                    "line {l} ({} - {}) has nonpositive reactance {x}",
                    bus_ids[line.from], bus_ids[line.to]
                )));
            }
            let key = (line.from.min(line.to), line.from.max(line.to));
            if pairs.insert(key, l).is_some() {
                return Err(Error::Value(format!("line {l} duplicates a bus pair")));
            }
            incident[line.from].push(l);
            incident[line.to].push(l);
        }

        let net = Self {
            bus_ids,
            index_of,
            lines,
            injections,
            slack,
            incident,
        };
        if !net.is_connected_without(&[]) {
            return Err(Error::Topology("bus graph is not connected".into()));
        }
        Ok(net)
    }

    pub fn n_buses(&self) -> usize {
        self.bus_ids.len()
    }

    pub fn n_lines(&self) -> usize {
        self.lines.len()
    }

    pub fn lines(&self) -> &[Line] {
        &self.lines
    }

    pub fn line(&self, l: usize) -> &Line {
        &self.lines[l]
    }

    /// Per-unit net injections (generation minus load) as read from the case.
    pub fn injections(&self) -> &[f64] {
        &self.injections
    }

    /// Injections with any imbalance moved onto the slack bus, so they sum to zero.
    pub fn balanced_injections(&self) -> Vec<f64> {
        let mut p = self.injections.clone();
        let total: f64 = p.iter().sum();
        p[self.slack] -= total;
        p
    }

    pub fn slack(&self) -> usize {
        self.slack
    }

    pub fn bus_ids(&self) -> &[u64] {
        &self.bus_ids
    }

    pub fn bus_id(&self, index: usize) -> u64 {
        self.bus_ids[index]
    }

    pub fn bus_index(&self, id: u64) -> Option<usize> {
        self.index_of.get(&id).copied()
    }

    /// Lines touching `bus`.
    pub fn incident_lines(&self, bus: usize) -> &[usize] {
        &self.incident[bus]
    }

    /// Whether the graph stays connected after removing the given lines.
    pub fn is_connected_without(&self, removed: &[usize]) -> bool {
        let mut ds = DisjointSet::new(self.n_buses());
        for (l, line) in self.lines.iter().enumerate() {
            if !removed.contains(&l) {
                ds.union(line.from, line.to);
            }
        }
        ds.components() == 1
    }
}
