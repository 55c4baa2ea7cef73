//! Ground-truth outage and bad-data scenarios.
//!
//! An event removes a set of lines, perturbs the injections with small
//! zero-sum Gaussian noise and re-solves the DC flow on the post-outage
//! topology. Bad data then replaces the post-event angle at a few buses with
//! a value offset by a uniform draw on `[-θ̄, θ̄]`, where `θ̄` is the mean
//! absolute pre-event angle.

use std::io::{BufRead, Write};

use rand::seq::{index, IndexedRandom};
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{masked_susceptance, susceptance, DcFlowSolver, Network};
use crate::rng;

/// Where faulty buses sit relative to the outage.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Placement {
    /// At least one faulty bus is an endpoint of an outaged line.
    #[default]
    Involved,
    /// No faulty bus is an outage endpoint or adjacent to one.
    Separated,
}

impl std::str::FromStr for Placement {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "involved" => Ok(Placement::Involved),
            "separated" => Ok(Placement::Separated),
            other => Err(format!("unknown placement '{other}'")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub outage_set: Vec<usize>,
    pub faulty_buses: Vec<usize>,
    pub theta_pre: Vec<f64>,
    pub theta_post: Vec<f64>,
    pub theta_corrupt: Vec<f64>,
    /// Absolute per-unit standard deviation of the injection noise.
    pub noise_std: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EventAngles {
    pub theta: Vec<f64>,
    pub theta_post: Vec<f64>,
    pub eta: Vec<f64>,
    pub noise_std: f64,
}

/// Draws `k` distinct lines whose joint removal keeps the grid connected.
///
/// Rejection sampling over uniform `k`-subsets, giving up after
/// `min(10·C(L,k), 10⁶)` draws.
pub fn sample_outage<R: Rng + ?Sized>(net: &Network, k: usize, rng: &mut R) -> Result<Vec<usize>> {
    let l = net.n_lines();
    if k > l {
        return Err(Error::Value(format!("cannot take {k} outages from {l} lines")));
    }
    if k == 0 {
        return Ok(Vec::new());
    }
    let attempts = (10.0 * binomial(l, k)).min(1e6).max(1.0) as usize;
    for _ in 0..attempts {
        let mut set = index::sample(rng, l, k).into_vec();
        set.sort_unstable();
        if net.is_connected_without(&set) {
            return Ok(set);
        }
    }
    Err(Error::Sampling(format!(
        "no {k}-line outage keeping the grid connected found in {attempts} draws"
    )))
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Pre-event state of a network, reusable across many simulated events.
pub struct Simulator<'a> {
    net: &'a Network,
    injections: Vec<f64>,
    theta: Vec<f64>,
    mean_abs_injection: f64,
}

impl<'a> Simulator<'a> {
    pub fn new(net: &'a Network) -> Result<Self> {
        let injections = net.balanced_injections();
        let theta = DcFlowSolver::new(&susceptance(net), net.slack())?.solve(&injections)?;
        let mean_abs_injection =
            injections.iter().map(|p| p.abs()).sum::<f64>() / net.n_buses() as f64;
        Ok(Self {
            net,
            injections,
            theta,
            mean_abs_injection,
        })
    }

    pub fn network(&self) -> &Network {
        self.net
    }

    /// Pre-event angles.
    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    /// Balanced pre-event injections.
    pub fn injections(&self) -> &[f64] {
        &self.injections
    }

    pub fn noise_std(&self, noise_std_frac: f64) -> f64 {
        noise_std_frac * self.mean_abs_injection
    }

    pub fn simulate<R: Rng + ?Sized>(
        &self,
        outages: &[usize],
        noise_std_frac: f64,
        rng: &mut R,
    ) -> Result<EventAngles> {
        if !(noise_std_frac >= 0.0 && noise_std_frac.is_finite()) {
            return Err(Error::Value(format!("noise fraction {noise_std_frac}")));
        }
        let n = self.net.n_buses();
        let mut remaining = vec![1.0; self.net.n_lines()];
        for &l in outages {
            if l >= remaining.len() {
                return Err(Error::Value(format!("outage line {l} out of range")));
            }
            remaining[l] = 0.0;
        }

        let noise_std = self.noise_std(noise_std_frac);
        let mut eta = vec![0.0; n];
        if noise_std > 0.0 {
            let normal = Normal::new(0.0, noise_std).expect("finite positive std");
            eta.iter_mut().for_each(|e| *e = normal.sample(rng));
            let mean = eta.iter().sum::<f64>() / n as f64;
            eta.iter_mut().for_each(|e| *e -= mean);
        }

        let post_b = masked_susceptance(self.net, &remaining);
        let p_post: Vec<f64> = self.injections.iter().zip(&eta).map(|(p, e)| p + e).collect();
        let theta_post = DcFlowSolver::new(&post_b, self.net.slack())?.solve(&p_post)?;
        Ok(EventAngles {
            theta: self.theta.clone(),
            theta_post,
            eta,
            noise_std,
        })
    }

    /// Mean absolute pre-event angle, the half-width of the bad-data range.
    pub fn bad_data_scale(&self) -> f64 {
        mean_abs(&self.theta)
    }
}

/// Pre-event angles `θ`, post-event angles `θ'` and the injection noise `η`.
pub fn simulate_event<R: Rng + ?Sized>(
    net: &Network,
    outages: &[usize],
    noise_std_frac: f64,
    rng: &mut R,
) -> Result<EventAngles> {
    Simulator::new(net)?.simulate(outages, noise_std_frac, rng)
}

fn mean_abs(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum::<f64>() / v.len().max(1) as f64
}

/// Corrupts `theta_post` at the faulty buses by `U(-θ̄, θ̄)` offsets, with
/// `θ̄` taken from the pre-event angles.
pub fn inject_bad_data<R: Rng + ?Sized>(
    theta_pre: &[f64],
    theta_post: &[f64],
    faulty: &[usize],
    rng: &mut R,
) -> Vec<f64> {
    let bound = mean_abs(theta_pre);
    let mut out = theta_post.to_vec();
    if bound == 0.0 {
        return out;
    }
    let uniform = Uniform::new_inclusive(-bound, bound).expect("finite bound");
    for &n in faulty {
        out[n] += uniform.sample(rng);
    }
    out
}

/// Buses at the endpoints of the given lines, sorted.
pub fn line_buses(net: &Network, lines: &[usize]) -> Vec<usize> {
    let mut buses: Vec<usize> = lines
        .iter()
        .flat_map(|&l| [net.line(l).from, net.line(l).to])
        .collect();
    buses.sort_unstable();
    buses.dedup();
    buses
}

/// Draws `count` distinct faulty buses according to `placement`.
pub fn sample_faulty_buses<R: Rng + ?Sized>(
    net: &Network,
    outages: &[usize],
    count: usize,
    placement: Placement,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if count == 0 {
        return Ok(Vec::new());
    }
    let outage_buses = line_buses(net, outages);
    let mut chosen = Vec::with_capacity(count);
    let candidates: Vec<usize> = match placement {
        Placement::Involved => {
            let first = *outage_buses.choose(rng).ok_or_else(|| {
                Error::Sampling("involved placement needs at least one outage".into())
            })?;
            chosen.push(first);
            (0..net.n_buses()).filter(|&n| n != first).collect()
        }
        Placement::Separated => (0..net.n_buses())
            .filter(|&n| {
                outage_buses.binary_search(&n).is_err()
                    && net
                        .incident_lines(n)
                        .iter()
                        .all(|&l| outage_buses.binary_search(&net.line(l).other_end(n)).is_err())
            })
            .collect(),
    };
    let rest = count - chosen.len();
    if candidates.len() < rest {
        return Err(Error::Sampling(format!(
            "only {} candidate buses for {rest} faulty buses",
            candidates.len()
        )));
    }
    chosen.extend(index::sample(rng, candidates.len(), rest).into_iter().map(|i| candidates[i]));
    chosen.sort_unstable();
    Ok(chosen)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScenarioSpec {
    pub outages: usize,
    pub bad_buses: usize,
    pub placement: Placement,
    pub noise_std_frac: f64,
}

/// One complete scenario from a single seed.
pub fn generate_scenario(sim: &Simulator, spec: &ScenarioSpec, seed: u64) -> Result<Scenario> {
    let mut rng = rng::seeded(seed);
    let outage_set = sample_outage(sim.network(), spec.outages, &mut rng)?;
    scenario_for_outage(sim, spec, outage_set, seed, &mut rng)
}

/// Completes a scenario for a fixed outage set: noise, flows and bad data.
pub fn scenario_for_outage<R: Rng + ?Sized>(
    sim: &Simulator,
    spec: &ScenarioSpec,
    outage_set: Vec<usize>,
    seed: u64,
    rng: &mut R,
) -> Result<Scenario> {
    let event = sim.simulate(&outage_set, spec.noise_std_frac, rng)?;
    let faulty_buses =
        sample_faulty_buses(sim.network(), &outage_set, spec.bad_buses, spec.placement, rng)?;
    let theta_corrupt = inject_bad_data(&event.theta, &event.theta_post, &faulty_buses, rng);
    Ok(Scenario {
        outage_set,
        faulty_buses,
        theta_pre: event.theta,
        theta_post: event.theta_post,
        theta_corrupt,
        noise_std: event.noise_std,
        seed,
    })
}

/// Writes one JSON object per line.
pub fn write_jsonl<W: Write>(mut out: W, scenarios: &[Scenario]) -> Result<()> {
    for s in scenarios {
        serde_json::to_writer(&mut out, s)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl<R: BufRead>(input: R) -> Result<Vec<Scenario>> {
    let mut scenarios = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        scenarios.push(
            serde_json::from_str(&line).map_err(|e| Error::parse(i + 1, e.to_string()))?,
        );
    }
    Ok(scenarios)
}
