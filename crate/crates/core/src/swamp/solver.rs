use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::denoise::{denoise_e, denoise_s, posterior_log_odds};
use super::em::{em_update_noise, em_update_priors, SolverState};
use super::prior::PriorParams;
use crate::error::{Error, Result};
use crate::rng;
use crate::sparse::CscMatrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SwampConfig {
    /// Number of Gaussian components in the contamination prior.
    pub components: usize,
    pub tolerance: f64,
    pub max_iter: usize,
    /// Learn the outage probability and the contamination mixture by EM.
    pub em: bool,
    /// Learn the noise variance by EM.
    pub learn_noise: bool,
    /// Starting priors; learned from `y` when absent.
    pub fixed_priors: Option<PriorParams>,
    /// Seed of the sweep-order permutations.
    pub seed: u64,
    pub trace: bool,
    /// Geometric continuation of the noise variance; noise learning starts
    /// once it ends.
    pub noise_anneal: Option<NoiseAnneal>,
}

/// The noise variance starts at `start` and shrinks by `decay` per
/// iteration until it reaches the prior's value; the solver cannot report
/// convergence before then.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseAnneal {
    pub start: f64,
    pub decay: f64,
}

impl Default for SwampConfig {
    fn default() -> Self {
        Self {
            components: 3,
            tolerance: 1e-6,
            max_iter: 200,
            em: true,
            learn_noise: true,
            fixed_priors: None,
            seed: 0,
            trace: false,
            noise_anneal: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub change: f64,
    pub p_o: f64,
    pub noise_var: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseEstimate {
    pub s_hat: Vec<f64>,
    pub s_var: Vec<f64>,
    /// Posterior log-odds of each line being out; ranks lines even where `s_hat` rounds to 1.
    pub s_logit: Vec<f64>,
    pub e_hat: Vec<f64>,
    pub e_var: Vec<f64>,
    pub priors: PriorParams,
    pub iterations: usize,
    pub converged: bool,
    /// `Σ_l (ŝ_l^t - ŝ_l^{t-1})²` of the last iteration.
    pub change: f64,
    /// Multiplications and divisions performed, all iterations together.
    pub mul_count: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<TraceRow>,
}

impl SparseEstimate {
    fn snapshot(st: &SolverState, priors: &PriorParams, change: f64, mul_count: u64) -> Self {
        Self {
            s_hat: st.s_hat.clone(),
            s_var: st.s_var.clone(),
            s_logit: st.s_logit.clone(),
            e_hat: st.e_hat.clone(),
            e_var: st.e_var.clone(),
            priors: priors.clone(),
            iterations: st.iteration,
            converged: false,
            change,
            mul_count,
            trace: Vec::new(),
        }
    }
}

pub fn write_trace_csv<W: Write>(out: W, rows: &[TraceRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

// Per-call multiplication costs of the scalar kernels.
const DENOISE_S_MULS: u64 = 6;
const DENOISE_E_MULS_BASE: u64 = 6;
const DENOISE_E_MULS_PER_COMPONENT: u64 = 14;
const EM_MULS_PER_BUS_COMPONENT: u64 = 16;

/// Estimates `(s, e)` in `y = A s + e + η` by swept message passing.
pub fn swamp_solve<M: AsRef<CscMatrix>>(a: &M, y: &[f64], config: &SwampConfig) -> Result<SparseEstimate> {
    let mut run = SwampRun::new(a.as_ref(), y, config)?;
    while run.state().iteration < config.max_iter {
        if run.iterate()? {
            break;
        }
    }
    Ok(run.finish())
}

/// A solve in progress, advanced one iteration or one variable at a time.
pub struct SwampRun<'a> {
    a: &'a CscMatrix,
    y: &'a [f64],
    config: &'a SwampConfig,
    priors: PriorParams,
    target_noise: f64,
    annealing: bool,
    st: SolverState,
    rng: rng::TrialRng,
    order: Vec<usize>,
    previous: Vec<f64>,
    muls: u64,
    trace: Vec<TraceRow>,
    last_good: SparseEstimate,
    change: f64,
    converged: bool,
}

impl<'a> SwampRun<'a> {
    pub fn new(a: &'a CscMatrix, y: &'a [f64], config: &'a SwampConfig) -> Result<Self> {
        let (n, l) = (a.nrows(), a.ncols());
        if y.len() != n {
            return Err(Error::Dimension(format!("y has {} entries, A has {n} rows", y.len())));
        }
        if config.max_iter == 0 {
            return Err(Error::Value("max_iter must be positive".into()));
        }
        if let Some(bad) = y.iter().find(|v| !v.is_finite()) {
            return Err(Error::Value(format!("non-finite measurement {bad}")));
        }
        let priors = match &config.fixed_priors {
            Some(p) => {
                p.validate()?;
                p.clone()
            }
            None => PriorParams::initial(l, y, config.components),
        };
        let target_noise = priors.noise_var;
        let mut priors = priors;
        if let Some(an) = config.noise_anneal {
            if !(an.start.is_finite() && an.decay > 0.0 && an.decay < 1.0) {
                return Err(Error::Value(format!("noise annealing {an:?}")));
            }
            priors.noise_var = priors.noise_var.max(an.start);
        }
        let annealing = priors.noise_var > target_noise;
        let st = SolverState::initial(y, l);
        let last_good = SparseEstimate::snapshot(&st, &priors, f64::INFINITY, 0);
        Ok(Self {
            a,
            y,
            config,
            priors,
            target_noise,
            annealing,
            st,
            rng: rng::seeded(config.seed),
            order: (0..l + n).collect(),
            previous: Vec::new(),
            muls: 0,
            trace: Vec::new(),
            last_good,
            change: f64::INFINITY,
            converged: false,
        })
    }

    pub fn state(&self) -> &SolverState {
        &self.st
    }

    pub fn priors(&self) -> &PriorParams {
        &self.priors
    }

    /// Runs one full iteration and reports whether the stopping tolerance was met.
    pub fn iterate(&mut self) -> Result<bool> {
        let order = self.begin_iteration();
        for var in order {
            self.update_variable(var)?;
        }
        self.end_iteration()
    }

    /// Output-side refresh of `g`, `V` and `ω`, then draws the sweep order
    /// over all `L + N` variables (lines first in index space, then buses).
    pub fn begin_iteration(&mut self) -> Vec<usize> {
        let (a, y, st) = (self.a, self.y, &mut self.st);
        let (n, l) = (a.nrows(), a.ncols());
        st.iteration += 1;
        let sigma2 = self.priors.noise_var;
        for i in 0..n {
            st.g[i] = (y[i] - st.omega[i]) / (sigma2 + st.v[i]);
            st.v[i] = st.e_var[i];
            st.omega[i] = st.e_hat[i];
        }
        for j in 0..l {
            for (i, aij) in a.col(j) {
                st.v[i] += aij * aij * st.s_var[j];
                st.omega[i] += aij * st.s_hat[j];
            }
        }
        for i in 0..n {
            st.omega[i] -= st.g[i] * st.v[i];
        }
        self.muls += 3 * a.nnz() as u64 + 2 * n as u64;
        self.previous.clone_from(&st.s_hat);
        self.order.shuffle(&mut self.rng);
        self.order.clone()
    }

    /// Updates one variable: a line for `var < L`, bus `var - L` otherwise.
    pub fn update_variable(&mut self, var: usize) -> Result<()> {
        let l = self.a.ncols();
        let sigma2 = self.priors.noise_var;
        let ok = if var < l {
            update_line(self.a, self.y, sigma2, self.priors.p_o, var, &mut self.st);
            self.muls += 7 * self.a.col(var).len() as u64 + 2 + DENOISE_S_MULS;
            self.st.s_hat[var].is_finite() && self.st.s_var[var].is_finite()
        } else {
            let b = var - l;
            update_error(self.y, sigma2, &self.priors, b, &mut self.st);
            let k = self.priors.gm.components() as u64;
            self.muls += 2 + DENOISE_E_MULS_BASE + DENOISE_E_MULS_PER_COMPONENT * k;
            self.st.e_hat[b].is_finite() && self.st.e_var[b].is_finite()
        };
        if ok {
            Ok(())
        } else {
            Err(self.diverged())
        }
    }

    /// Prior learning and the convergence test that close an iteration.
    pub fn end_iteration(&mut self) -> Result<bool> {
        let (n, l) = (self.a.nrows() as u64, self.a.ncols() as u64);
        if self.config.em {
            self.priors = em_update_priors(&self.st, &self.priors);
            let k = self.priors.gm.components() as u64;
            self.muls += l + EM_MULS_PER_BUS_COMPONENT * k * n;
        }
        if self.config.learn_noise && !self.annealing {
            self.priors.noise_var = em_update_noise(&self.st, self.y, self.priors.noise_var);
            self.muls += 6 * n;
        }
        let st = &self.st;
        self.change = st.s_hat.iter().zip(&self.previous).map(|(a, b)| (a - b).powi(2)).sum();
        self.muls += l;
        let finite = self.change.is_finite()
            && st.v.iter().chain(&st.omega).all(|x| x.is_finite())
            && self.priors.noise_var.is_finite();
        if !finite {
            return Err(self.diverged());
        }
        if self.config.trace {
            self.trace.push(TraceRow {
                iteration: st.iteration,
                change: self.change,
                p_o: self.priors.p_o,
                noise_var: self.priors.noise_var,
            });
        }
        self.last_good = SparseEstimate::snapshot(st, &self.priors, self.change, self.muls);
        self.converged = !self.annealing && self.change <= self.config.tolerance;
        if self.annealing {
            let decay = self.config.noise_anneal.map_or(0.0, |a| a.decay);
            self.priors.noise_var = (self.priors.noise_var * decay).max(self.target_noise);
            self.annealing = self.priors.noise_var > self.target_noise;
        }
        Ok(self.converged)
    }

    pub fn finish(self) -> SparseEstimate {
        let mut est = SparseEstimate::snapshot(&self.st, &self.priors, self.change, self.muls);
        est.converged = self.converged;
        est.trace = self.trace;
        est
    }

    fn diverged(&self) -> Error {
        Error::Diverged {
            iteration: self.st.iteration,
            last_finite: Box::new(self.last_good.clone()),
        }
    }
}

fn update_line(a: &CscMatrix, y: &[f64], sigma2: f64, p_o: f64, l: usize, st: &mut SolverState) {
    let mut precision = 0.0;
    let mut pull = 0.0;
    for (i, ail) in a.col(l) {
        let denom = sigma2 + st.v[i];
        precision += ail * ail / denom;
        pull += ail * (y[i] - st.omega[i]) / denom;
    }
    let (s_new, v_new) = if precision > 0.0 {
        let sig2 = 1.0 / precision;
        let r = st.s_hat[l] + sig2 * pull;
        st.sigma2_s[l] = sig2;
        st.r_s[l] = r;
        st.s_logit[l] = posterior_log_odds(sig2, r, p_o);
        denoise_s(sig2, r, p_o)
    } else {
        // no measurement sees this line: the posterior is the prior
        st.sigma2_s[l] = f64::INFINITY;
        st.r_s[l] = 0.0;
        st.s_logit[l] = (p_o / (1.0 - p_o)).ln();
        (p_o, p_o * (1.0 - p_o))
    };
    let ds = s_new - st.s_hat[l];
    let dv = v_new - st.s_var[l];
    for (i, ail) in a.col(l) {
        let v_old = st.v[i];
        st.v[i] += ail * ail * dv;
        st.omega[i] += ail * ds - st.g[i] * (st.v[i] - v_old);
    }
    st.s_hat[l] = s_new;
    st.s_var[l] = v_new;
}

fn update_error(y: &[f64], sigma2: f64, priors: &PriorParams, b: usize, st: &mut SolverState) {
    let sig2 = sigma2 + st.v[b];
    let r = st.e_hat[b] + (y[b] - st.omega[b]);
    st.sigma2_e[b] = sig2;
    st.r_e[b] = r;
    let (e_new, v_new) = denoise_e(sig2, r, &priors.gm);
    let v_old = st.v[b];
    st.v[b] += v_new - st.e_var[b];
    st.omega[b] += (e_new - st.e_hat[b]) - st.g[b] * (st.v[b] - v_old);
    st.e_hat[b] = e_new;
    st.e_var[b] = v_new;
}
