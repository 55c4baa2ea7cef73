//! End-to-end outage identification with bad data.
//!
//! The solver returns a joint indicator covering both outaged lines and the
//! lines around buses with corrupted angles. The separation phase flags
//! buses touching more than one selected line; the recovery phase then
//! searches over which lines at the flagged buses are really bad-data lines,
//! re-estimating the flagged angles by least squares for each candidate.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{build_a, IncidenceMatrix, Network, SusceptanceMatrix};
use crate::swamp::{swamp_solve, GaussMixture, NoiseAnneal, PriorParams, SparseEstimate, SwampConfig};
use crate::union_find::DisjointSet;

/// How the real-valued solver output becomes a line set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// Lines with `ŝ_l ≥ τ`.
    Threshold(f64),
    /// The `k` most likely lines, ties to the lowest index.
    TopK(usize),
}

/// Per-iteration shrink factor of the annealed noise variance in known-SSI
/// mode.
pub const KNOWN_SSI_ANNEAL_DECAY: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IdentifyConfig {
    pub swamp: SwampConfig,
    pub selection: Selection,
    /// Largest number of lines searched jointly in the recovery phase.
    pub search_cap: usize,
    /// Recovery objectives within `tie_relative` of the cluster's data scale or within
    /// `tie_noise·σ̂²·rows` of the best count as ties.
    pub tie_relative: f64,
    pub tie_noise: f64,
    /// An empty selection with `‖y‖ > undetected_factor·σ̂·√N` is flagged.
    pub undetected_factor: f64,
}

impl Default for IdentifyConfig {
    fn default() -> Self {
        Self {
            swamp: SwampConfig::default(),
            selection: Selection::Threshold(0.5),
            search_cap: 20,
            tie_relative: 1e-12,
            tie_noise: 0.0,
            undetected_factor: 10.0,
        }
    }
}

impl IdentifyConfig {
    /// Known outage count and noise level: priors fixed, no learning, top-k
    /// selection. Noise variances below `1e-8` are raised to it.
    ///
    /// With a near-zero noise variance the sweeps lock onto the first lines
    /// they saturate, so the variance is annealed down from the mean square
    /// of the `2·outages` measurements an outage set touches.
    pub fn known_ssi(lines: usize, outages: usize, noise_var: f64, bad_data: bool, y: &[f64]) -> Self {
        let start = y.iter().map(|v| v * v).sum::<f64>() / (2 * outages).max(1) as f64;
        let gm = if bad_data {
            PriorParams::initial(lines, y, 3).gm
        } else {
            GaussMixture::spike_only()
        };
        let priors = PriorParams {
            p_o: (outages as f64 / lines as f64).clamp(1e-12, 1.0 - 1e-12),
            gm,
            noise_var: noise_var.max(1e-8),
        };
        Self {
            swamp: SwampConfig {
                em: false,
                learn_noise: false,
                fixed_priors: Some(priors),
                noise_anneal: Some(NoiseAnneal {
                    start,
                    decay: KNOWN_SSI_ANNEAL_DECAY,
                }),
                ..SwampConfig::default()
            },
            selection: Selection::TopK(outages),
            ..Self::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparationSets {
    pub e_b_hat: Vec<usize>,
    pub l_b_hat: Vec<usize>,
    pub n_b_hat: Vec<usize>,
    pub s_b_hat: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryOutcome {
    pub theta_hat: Vec<f64>,
    /// Refined bad-data indicator; support within the separation line set.
    pub s_b: Vec<bool>,
    pub residual: f64,
    pub rank_deficient: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentificationResult {
    /// Joint selection before separation.
    pub selected: Vec<usize>,
    pub s_o_hat: Vec<bool>,
    pub outages: Vec<usize>,
    pub separation: SeparationSets,
    /// Flagged buses that carry a bad-data line and whose angle the recovery
    /// moved.
    pub faulty_buses: Vec<usize>,
    pub theta_recovered: Vec<f64>,
    pub r_phase_residual: f64,
    pub rank_deficient: bool,
    pub undetected_event: bool,
    pub estimate: SparseEstimate,
}

/// Compact, ID-based view of a result for reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentificationSummary {
    pub outage_lines: Vec<usize>,
    pub outage_endpoints: Vec<(u64, u64)>,
    pub faulty_buses: Vec<u64>,
    pub angle_corrections: Vec<(u64, f64)>,
    pub r_phase_residual: f64,
    pub rank_deficient: bool,
    pub undetected_event: bool,
    pub iterations: usize,
    pub converged: bool,
    pub learned_p_o: f64,
    pub learned_noise_var: f64,
}

impl IdentificationResult {
    pub fn summary(&self, net: &Network, theta_tilde: &[f64]) -> IdentificationSummary {
        IdentificationSummary {
            outage_lines: self.outages.clone(),
            outage_endpoints: self
                .outages
                .iter()
                .map(|&l| (net.bus_id(net.line(l).from), net.bus_id(net.line(l).to)))
                .collect(),
            faulty_buses: self.faulty_buses.iter().map(|&n| net.bus_id(n)).collect(),
            angle_corrections: self
                .faulty_buses
                .iter()
                .map(|&n| (net.bus_id(n), self.theta_recovered[n] - theta_tilde[n]))
                .collect(),
            r_phase_residual: self.r_phase_residual,
            rank_deficient: self.rank_deficient,
            undetected_event: self.undetected_event,
            iterations: self.estimate.iterations,
            converged: self.estimate.converged,
            learned_p_o: self.estimate.priors.p_o,
            learned_noise_var: self.estimate.priors.noise_var,
        }
    }
}

/// `y = B·(θ̃' - θ)`.
pub fn build_y(b: &SusceptanceMatrix, theta: &[f64], theta_tilde: &[f64]) -> Result<Vec<f64>> {
    let n = b.dim();
    if theta.len() != n || theta_tilde.len() != n {
        return Err(Error::Dimension(format!(
            "angle vectors of length {} and {} for {n} buses",
            theta.len(),
            theta_tilde.len()
        )));
    }
    let delta: Vec<f64> = theta_tilde.iter().zip(theta).map(|(a, b)| a - b).collect();
    Ok(b.mul_vec(&delta))
}

pub fn hard_decision(s_hat: &[f64], tau: f64) -> Vec<bool> {
    s_hat.iter().map(|&s| s >= tau).collect()
}

/// The `k` lines with the largest log-odds; ties go to the lower index.
pub fn top_k(log_odds: &[f64], k: usize) -> Vec<bool> {
    let mut idx: Vec<usize> = (0..log_odds.len()).collect();
    idx.sort_by(|&i, &j| log_odds[j].total_cmp(&log_odds[i]).then(i.cmp(&j)));
    let mut out = vec![false; log_odds.len()];
    for &i in idx.iter().take(k) {
        out[i] = true;
    }
    out
}

pub fn support(bits: &[bool]) -> Vec<usize> {
    bits.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect()
}

pub fn s_phase(s_binary: &[bool], m: &IncidenceMatrix) -> SeparationSets {
    let (n, l) = (m.n_buses(), m.n_lines());
    let mut count = vec![0usize; n];
    for line in support(s_binary) {
        for (bus, v) in m.matrix().col(line) {
            if v != 0.0 {
                count[bus] += 1;
            }
        }
    }
    let flagged: Vec<bool> = count.iter().map(|&c| c > 1).collect();
    let mut s_b_hat = vec![false; l];
    let mut touched = vec![false; n];
    for (line, bit) in s_b_hat.iter_mut().enumerate() {
        let (a, b) = m.endpoints(line);
        if flagged[a] || flagged[b] {
            *bit = true;
            touched[a] = true;
            touched[b] = true;
        }
    }
    SeparationSets {
        e_b_hat: support(&flagged),
        l_b_hat: support(&s_b_hat),
        n_b_hat: support(&touched),
        s_b_hat,
    }
}

/// Searches the bad-data configuration of the separation lines and
/// re-estimates the flagged angles.
///
/// `noise_var` scales the tie tolerance.
pub fn r_phase(
    net: &Network,
    theta_tilde: &[f64],
    y: &[f64],
    s_binary: &[bool],
    sets: &SeparationSets,
    config: &IdentifyConfig,
    noise_var: f64,
) -> Result<RecoveryOutcome> {
    let mut theta_hat = theta_tilde.to_vec();
    let mut s_b = vec![false; net.n_lines()];
    if sets.e_b_hat.is_empty() {
        return Ok(RecoveryOutcome {
            theta_hat,
            s_b,
            residual: 0.0,
            rank_deficient: false,
        });
    }
    let a = build_a(net, theta_tilde)?;
    let s_real: Vec<f64> = s_binary.iter().map(|&b| f64::from(u8::from(b))).collect();
    let y_b: Vec<f64> = a.mul_vec(&s_real).iter().zip(y).map(|(p, q)| p - q).collect();

    let mut picks = Vec::new();
    for cluster in clusters(net, &sets.e_b_hat) {
        let problem = ClusterProblem::new(net, theta_tilde, &y_b, &cluster);
        if problem.lines.len() > config.search_cap {
            return Err(Error::SearchExplosion {
                lines: problem.lines.len(),
                cap: config.search_cap,
            });
        }
        let tol = (config.tie_relative * problem.scale())
            .max(config.tie_noise * noise_var * problem.rows.len() as f64);
        let (any, non_empty) = problem.search(s_binary, tol);
        picks.push((problem, any, non_empty));
    }
    // the all-zero configuration over every cluster is not a candidate
    if picks.iter().all(|(_, any, _)| !any.config.contains(&true)) {
        let cost = |(_, any, ne): &(ClusterProblem, Candidate, Candidate)| ne.objective - any.objective;
        let cheapest = (0..picks.len())
            .min_by(|&i, &j| cost(&picks[i]).total_cmp(&cost(&picks[j])))
            .expect("at least one cluster");
        let (_, any, non_empty) = &mut picks[cheapest];
        std::mem::swap(any, non_empty);
    }

    let mut residual = 0.0;
    let mut rank_deficient = false;
    for (problem, best, _) in &picks {
        for (i, &l) in problem.lines.iter().enumerate() {
            s_b[l] = best.config[i];
        }
        for (i, &n) in problem.free.iter().enumerate() {
            theta_hat[n] = theta_tilde[n] + best.delta[i];
        }
        residual += best.objective;
        rank_deficient |= best.rank_deficient;
    }
    Ok(RecoveryOutcome {
        theta_hat,
        s_b,
        residual,
        rank_deficient,
    })
}

/// Groups flagged buses whose recovery rows overlap; the recovery objective
/// separates across groups.
fn clusters(net: &Network, flagged: &[usize]) -> Vec<Vec<usize>> {
    let mut owner = std::collections::HashMap::new();
    let mut ds = DisjointSet::new(flagged.len());
    for (i, &n) in flagged.iter().enumerate() {
        let closed = std::iter::once(n)
            .chain(net.incident_lines(n).iter().map(|&l| net.line(l).other_end(n)));
        for bus in closed {
            if let Some(&j) = owner.get(&bus) {
                ds.union(i, j);
            } else {
                owner.insert(bus, i);
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for (i, &n) in flagged.iter().enumerate() {
        groups.entry(ds.find(i)).or_default().push(n);
    }
    let mut out: Vec<Vec<usize>> = groups.into_values().collect();
    out.sort();
    out
}

struct ClusterProblem {
    lines: Vec<usize>,
    free: Vec<usize>,
    rows: Vec<usize>,
    /// Per line: endpoint rows, susceptance, flow at `θ̃'`, and the free
    /// column of each endpoint if it has one.
    terms: Vec<LineTerm>,
    y_b: Vec<f64>,
}

struct LineTerm {
    rows: (usize, usize),
    cols: (Option<usize>, Option<usize>),
    b: f64,
    flow: f64,
}

#[derive(Clone)]
struct Candidate {
    config: Vec<bool>,
    objective: f64,
    delta: Vec<f64>,
    rank_deficient: bool,
}

impl ClusterProblem {
    fn new(net: &Network, theta_tilde: &[f64], y_b: &[f64], free: &[usize]) -> Self {
        let mut lines: Vec<usize> = free
            .iter()
            .flat_map(|&n| net.incident_lines(n).iter().copied())
            .collect();
        lines.sort_unstable();
        lines.dedup();
        let mut rows: Vec<usize> = lines
            .iter()
            .flat_map(|&l| [net.line(l).from, net.line(l).to])
            .collect();
        rows.sort_unstable();
        rows.dedup();
        let row_of = |bus: usize| rows.binary_search(&bus).expect("endpoint is a row");
        let col_of = |bus: usize| free.binary_search(&bus).ok();
        let terms = lines
            .iter()
            .map(|&l| {
                let line = net.line(l);
                LineTerm {
                    rows: (row_of(line.from), row_of(line.to)),
                    cols: (col_of(line.from), col_of(line.to)),
                    b: line.susceptance(),
                    flow: line.susceptance() * (theta_tilde[line.from] - theta_tilde[line.to]),
                }
            })
            .collect();
        let y_b = rows.iter().map(|&r| y_b[r]).collect();
        Self {
            lines,
            free: free.to_vec(),
            rows,
            terms,
            y_b,
        }
    }

    /// `‖y_b‖²` over the rows plus the squared flows of the candidate lines.
    fn scale(&self) -> f64 {
        self.y_b.iter().map(|v| v * v).sum::<f64>() + self.terms.iter().map(|t| t.flow * t.flow).sum::<f64>()
    }

    /// Gray-code walk over every configuration that keeps each flagged bus
    /// connected. Returns the best overall and the best with at least one
    /// line set.
    fn search(&self, s_binary: &[bool], tol: f64) -> (Candidate, Candidate) {
        let m = self.lines.len();
        let mut config = vec![false; m];
        let empty = (!self.islands(&config, s_binary)).then(|| self.evaluate(&config));
        let mut best: Option<Candidate> = None;
        for step in 1..(1u64 << m) {
            let bit = step.trailing_zeros() as usize;
            config[bit] = !config[bit];
            if self.islands(&config, s_binary) {
                continue;
            }
            let cand = self.evaluate(&config);
            let better = match &best {
                None => true,
                Some(b) => self.prefer(&cand, b, s_binary, tol),
            };
            if better {
                best = Some(cand);
            }
        }
        let non_empty = best.expect("the all-set configuration connects every bus");
        match empty {
            Some(e) if self.prefer(&e, &non_empty, s_binary, tol) => (e, non_empty),
            _ => (non_empty.clone(), non_empty),
        }
    }

    /// Whether some flagged bus would have every incident line out: all of
    /// them selected and none explained as bad data.
    fn islands(&self, config: &[bool], s_binary: &[bool]) -> bool {
        (0..self.free.len()).any(|c| {
            self.terms
                .iter()
                .zip(&self.lines)
                .zip(config)
                .filter(|((t, _), _)| t.cols.0 == Some(c) || t.cols.1 == Some(c))
                .all(|((_, &l), &on)| s_binary[l] && !on)
        })
    }

    /// Whether `a` beats the incumbent `b`: a clearly lower objective, or a
    /// tie that keeps more selected lines as outages, then fewer lines
    /// overall, then the lexicographically smaller configuration.
    fn prefer(&self, a: &Candidate, b: &Candidate, s_binary: &[bool], tol: f64) -> bool {
        if a.objective < b.objective - tol {
            return true;
        }
        if a.objective > b.objective + tol {
            return false;
        }
        let flagged_selected = |c: &Candidate| {
            self.lines
                .iter()
                .zip(&c.config)
                .filter(|(&l, &on)| on && s_binary[l])
                .count()
        };
        let active = |c: &Candidate| c.config.iter().filter(|&&on| on).count();
        flagged_selected(a)
            .cmp(&flagged_selected(b))
            .then(active(a).cmp(&active(b)))
            .then(a.config.cmp(&b.config))
            .is_lt()
    }

    fn evaluate(&self, config: &[bool]) -> Candidate {
        let (nr, nf) = (self.rows.len(), self.free.len());
        let mut rhs = DVector::from_column_slice(&self.y_b);
        let mut h = DMatrix::zeros(nr, nf);
        for (term, _) in self.terms.iter().zip(config).filter(|(_, &on)| on) {
            let (ra, rb) = term.rows;
            rhs[ra] -= term.flow;
            rhs[rb] += term.flow;
            if let Some(c) = term.cols.0 {
                h[(ra, c)] += term.b;
                h[(rb, c)] -= term.b;
            }
            if let Some(c) = term.cols.1 {
                h[(ra, c)] -= term.b;
                h[(rb, c)] += term.b;
            }
        }
        let svd = h.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let eps = smax * (nr.max(nf) as f64) * f64::EPSILON;
        let rank = svd.singular_values.iter().filter(|&&s| s > eps).count();
        // a flagged bus with no active line keeps its measured angle
        let touched = (0..nf).filter(|&c| h.column(c).iter().any(|&v| v != 0.0)).count();
        let delta = if smax > 0.0 {
            svd.solve(&rhs, eps).expect("u and v were computed")
        } else {
            DVector::zeros(nf)
        };
        let objective = (&rhs - &h * &delta).norm_squared();
        Candidate {
            config: config.to_vec(),
            objective,
            delta: delta.iter().copied().collect(),
            rank_deficient: rank < touched,
        }
    }
}

/// Runs the full pipeline on pre-event angles `θ` and possibly corrupted
/// post-event angles `θ̃'`.
pub fn identify(
    net: &Network,
    b: &SusceptanceMatrix,
    m: &IncidenceMatrix,
    theta: &[f64],
    theta_tilde: &[f64],
    config: &IdentifyConfig,
) -> Result<IdentificationResult> {
    let y = build_y(b, theta, theta_tilde)?;
    let a = build_a(net, theta_tilde)?;
    let estimate = swamp_solve(&a, &y, &config.swamp)?;
    separate(net, m, theta_tilde, &y, estimate, config)
}

/// Hard selection of lines from a solver estimate.
pub fn select(estimate: &SparseEstimate, selection: Selection) -> Vec<bool> {
    match selection {
        Selection::Threshold(tau) => hard_decision(&estimate.s_hat, tau),
        Selection::TopK(k) => top_k(&estimate.s_logit, k),
    }
}

/// Angle changes below this fraction of the largest angle are roundoff.
const MOVED_RELATIVE: f64 = 1e-9;

/// Selection, separation and recovery on an existing estimate.
pub fn separate(
    net: &Network,
    m: &IncidenceMatrix,
    theta_tilde: &[f64],
    y: &[f64],
    estimate: SparseEstimate,
    config: &IdentifyConfig,
) -> Result<IdentificationResult> {
    let selected_bits = select(&estimate, config.selection);
    let separation = s_phase(&selected_bits, m);
    let noise_var = estimate.priors.noise_var;
    let recovery = r_phase(net, theta_tilde, y, &selected_bits, &separation, config, noise_var)?;

    let s_o_hat: Vec<bool> = selected_bits
        .iter()
        .zip(&recovery.s_b)
        .map(|(&s, &b)| s && !b)
        .collect();
    let moved = MOVED_RELATIVE * theta_tilde.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let faulty_buses = separation
        .e_b_hat
        .iter()
        .copied()
        .filter(|&n| net.incident_lines(n).iter().any(|&l| recovery.s_b[l]))
        .filter(|&n| (recovery.theta_hat[n] - theta_tilde[n]).abs() > moved)
        .collect();
    let y_norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    let undetected_event = !selected_bits.iter().any(|&b| b)
        && y_norm > config.undetected_factor * noise_var.sqrt() * (y.len() as f64).sqrt();
    Ok(IdentificationResult {
        selected: support(&selected_bits),
        outages: support(&s_o_hat),
        s_o_hat,
        separation,
        faulty_buses,
        theta_recovered: recovery.theta_hat,
        r_phase_residual: recovery.residual,
        rank_deficient: recovery.rank_deficient,
        undetected_event,
        estimate,
    })
}
