//! Monte Carlo experiment harness.
//!
//! An experiment draws `locations` outage sets and, for each, `trials`
//! independent realizations of injection noise and bad data. Every trial is
//! scored at two stages: the joint selection straight out of the solver and
//! the final outage set after separation and recovery. Trials run in
//! parallel; each one owns a seeded substream, so the results depend on the
//! base seed only.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{
    exhaustive_search_p1, lasso_solve, metrics, LassoConfig, MetricPair, DEFAULT_ES_CAP,
};
use crate::error::{Error, Result};
use crate::grid::{
    build_a, incidence_matrix, parse_case_with, susceptance, CaseFormat, IncidenceMatrix, Network,
    ParseOptions, SusceptanceMatrix,
};
use crate::identify::{build_y, select, separate, support, top_k, IdentifyConfig, Selection};
use crate::rng;
use crate::sim::{sample_outage, scenario_for_outage, Placement, Scenario, ScenarioSpec, Simulator};
use crate::swamp::{swamp_solve, PriorParams, SwampConfig};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    #[default]
    Swamp,
    Lasso,
    Es,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Swamp => "swamp",
            Algorithm::Lasso => "lasso",
            Algorithm::Es => "es",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "swamp" => Ok(Algorithm::Swamp),
            "lasso" => Ok(Algorithm::Lasso),
            "es" => Ok(Algorithm::Es),
            other => Err(format!("unknown algorithm '{other}'")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub case: PathBuf,
    /// Guessed from the file extension when absent.
    pub format: Option<CaseFormat>,
    pub allow_negative_reactance: bool,
    pub outages: usize,
    pub bad_buses: usize,
    pub placement: Placement,
    /// Injection-noise standard deviation as a fraction of the mean
    /// absolute injection.
    pub noise_std_frac: f64,
    pub locations: usize,
    /// Realizations per location.
    pub trials: usize,
    pub seed: u64,
    pub algorithm: Algorithm,
    pub known_ssi: bool,
    pub tau: f64,
    pub components: usize,
    pub eps: f64,
    pub t_max: usize,
    /// LASSO outage penalty as a fraction of `‖Aᵀy‖∞`; tuned on a
    /// validation batch when absent.
    pub lasso_lambda: Option<f64>,
    /// LASSO bad-data penalty as a fraction of `‖y‖∞`; `e` is pinned at zero
    /// when absent.
    pub lasso_lambda_e: Option<f64>,
    pub output: Option<PathBuf>,
    pub workers: Option<usize>,
    pub keep_records: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let swamp = SwampConfig::default();
        Self {
            case: PathBuf::new(),
            format: None,
            allow_negative_reactance: false,
            outages: 2,
            bad_buses: 0,
            placement: Placement::Involved,
            noise_std_frac: 0.0,
            locations: 100,
            trials: 3,
            seed: 0,
            algorithm: Algorithm::Swamp,
            known_ssi: false,
            tau: 0.5,
            components: swamp.components,
            eps: swamp.tolerance,
            t_max: swamp.max_iter,
            lasso_lambda: None,
            lasso_lambda_e: None,
            output: None,
            workers: None,
            keep_records: true,
        }
    }
}

impl ExperimentConfig {
    /// Scales the desk defaults up to 1000 locations × 10 realizations.
    pub fn full_scale(mut self) -> Self {
        self.locations = 1000;
        self.trials = 10;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 || self.locations == 0 {
            return Err(Error::Value("need at least one location and one trial".into()));
        }
        if !(self.noise_std_frac >= 0.0 && self.noise_std_frac.is_finite()) {
            return Err(Error::Value(format!("noise fraction {}", self.noise_std_frac)));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::Value(format!("threshold {} outside (0, 1]", self.tau)));
        }
        if !(self.eps > 0.0) || self.t_max == 0 {
            return Err(Error::Value("tolerance and iteration cap must be positive".into()));
        }
        if self.algorithm == Algorithm::Es {
            if !self.known_ssi {
                return Err(Error::Value("exhaustive search needs the outage count (known SSI)".into()));
            }
            if self.outages > DEFAULT_ES_CAP {
                return Err(Error::Value(format!(
                    "exhaustive search is limited to {DEFAULT_ES_CAP} outages"
                )));
            }
        }
        for lam in [self.lasso_lambda, self.lasso_lambda_e].into_iter().flatten() {
            if !(lam > 0.0 && lam.is_finite()) {
                return Err(Error::Value(format!("LASSO penalty fraction {lam}")));
            }
        }
        Ok(())
    }

    fn spec(&self) -> ScenarioSpec {
        ScenarioSpec {
            outages: self.outages,
            bad_buses: self.bad_buses,
            placement: self.placement,
            noise_std_frac: self.noise_std_frac,
        }
    }
}

pub fn load_case(path: &Path, format: Option<CaseFormat>, allow_negative_reactance: bool) -> Result<Network> {
    let text = std::fs::read_to_string(path)?;
    let format = format.unwrap_or_else(|| CaseFormat::from_path(path));
    parse_case_with(&text, format, ParseOptions { allow_negative_reactance })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub location: usize,
    pub realization: usize,
    pub seed: u64,
    pub outages: Vec<usize>,
    pub faulty_buses: Vec<usize>,
    /// Joint selection before separation.
    pub selected: Vec<usize>,
    pub identified: Vec<usize>,
    pub sphase: MetricPair,
    #[serde(rename = "final")]
    pub final_: MetricPair,
    pub iterations: usize,
    pub converged: bool,
    /// The recovery search exceeded its cap; the joint selection is
    /// reported as the final outage set.
    #[serde(default)]
    pub search_overflow: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub config: ExperimentConfig,
    pub n_buses: usize,
    pub n_lines: usize,
    pub trials: usize,
    pub kappa_i_sphase: f64,
    pub kappa_i_final: f64,
    pub kappa_f_sphase: f64,
    pub kappa_f_final: f64,
    pub mean_runtime_s: f64,
    pub p50_runtime_s: f64,
    pub p95_runtime_s: f64,
    /// LASSO penalty fraction actually used.
    pub lasso_lambda: Option<f64>,
    pub records: Vec<TrialRecord>,
    /// Identification wall-clock per trial, in trial order.
    pub runtimes_s: Vec<f64>,
}

impl Report {
    /// Aggregates per-trial records. An empty record list gives zero
    /// aggregates.
    pub fn from_records(
        config: ExperimentConfig,
        net: &Network,
        records: Vec<TrialRecord>,
        runtimes_s: Vec<f64>,
        lasso_lambda: Option<f64>,
    ) -> Self {
        let n = records.len();
        let mean = |f: &dyn Fn(&TrialRecord) -> f64| {
            if n == 0 {
                0.0
            } else {
                records.iter().map(f).sum::<f64>() / n as f64
            }
        };
        let mut sorted = runtimes_s.clone();
        sorted.sort_by(f64::total_cmp);
        Self {
            n_buses: net.n_buses(),
            n_lines: net.n_lines(),
            trials: n,
            kappa_i_sphase: mean(&|r| r.sphase.kappa_i),
            kappa_i_final: mean(&|r| r.final_.kappa_i),
            kappa_f_sphase: mean(&|r| r.sphase.kappa_f),
            kappa_f_final: mean(&|r| r.final_.kappa_f),
            mean_runtime_s: if sorted.is_empty() {
                0.0
            } else {
                sorted.iter().sum::<f64>() / sorted.len() as f64
            },
            p50_runtime_s: percentile(&sorted, 0.5),
            p95_runtime_s: percentile(&sorted, 0.95),
            lasso_lambda,
            config,
            records,
            runtimes_s,
        }
    }
}

/// Nearest-rank percentile of sorted data.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = (q * sorted.len() as f64).ceil().max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1]
}

/// Shared read-only state of an experiment.
struct Bench<'a> {
    config: &'a ExperimentConfig,
    net: &'a Network,
    sim: Simulator<'a>,
    b: SusceptanceMatrix,
    m: IncidenceMatrix,
}

struct TrialOutcome {
    record: TrialRecord,
    runtime: f64,
}

impl<'a> Bench<'a> {
    fn new(config: &'a ExperimentConfig, net: &'a Network) -> Result<Self> {
        Ok(Self {
            config,
            net,
            sim: Simulator::new(net)?,
            b: susceptance(net),
            m: incidence_matrix(net),
        })
    }

    fn scenario(&self, base_seed: u64, trial: usize) -> Result<(usize, usize, Scenario)> {
        let (location, realization) = (trial / self.config.trials, trial % self.config.trials);
        let location_seed = rng::substream_seed(base_seed, location as u64);
        let outage = sample_outage(self.net, self.config.outages, &mut rng::seeded(location_seed))?;
        let seed = rng::substream_seed(location_seed, realization as u64 + 1);
        let scenario =
            scenario_for_outage(&self.sim, &self.config.spec(), outage, seed, &mut rng::seeded(seed))?;
        Ok((location, realization, scenario))
    }

    fn run_trial(&self, base_seed: u64, trial: usize, lasso_lambda: Option<f64>) -> Result<TrialOutcome> {
        let (location, realization, sc) = self.scenario(base_seed, trial)?;
        let y = build_y(&self.b, &sc.theta_pre, &sc.theta_corrupt)?;
        let mut search_overflow = false;
        let (selected, identified, iterations, converged, runtime) = match self.config.algorithm {
            Algorithm::Swamp => {
                let cfg = self.swamp_config(&sc, &y);
                let start = Instant::now();
                let a = build_a(self.net, &sc.theta_corrupt)?;
                let est = swamp_solve(&a, &y, &cfg.swamp)?;
                let (it, conv) = (est.iterations, est.converged);
                let joint = support(&select(&est, cfg.selection));
                let (selected, identified) = match separate(self.net, &self.m, &sc.theta_corrupt, &y, est, &cfg) {
                    Ok(res) => (res.selected, res.outages),
                    Err(Error::SearchExplosion { .. }) => {
                        search_overflow = true;
                        (joint.clone(), joint)
                    }
                    Err(e) => return Err(e),
                };
                (selected, identified, it, conv, start.elapsed().as_secs_f64())
            }
            Algorithm::Lasso => {
                let frac = lasso_lambda.expect("penalty chosen before the trials run");
                let start = Instant::now();
                let (lines, it, conv) = self.lasso_select(&sc, &y, frac)?;
                let runtime = start.elapsed().as_secs_f64();
                (lines.clone(), lines, it, conv, runtime)
            }
            Algorithm::Es => {
                let start = Instant::now();
                let a = build_a(self.net, &sc.theta_corrupt)?;
                let out = exhaustive_search_p1(&a, &y, self.config.outages, DEFAULT_ES_CAP)?;
                let runtime = start.elapsed().as_secs_f64();
                (out.lines.clone(), out.lines, 1, true, runtime)
            }
        };
        Ok(TrialOutcome {
            record: TrialRecord {
                trial,
                location,
                realization,
                seed: sc.seed,
                sphase: metrics(&sc.outage_set, &selected),
                final_: metrics(&sc.outage_set, &identified),
                outages: sc.outage_set,
                faulty_buses: sc.faulty_buses,
                selected,
                identified,
                iterations,
                converged,
                search_overflow,
            },
            runtime,
        })
    }

    fn swamp_config(&self, sc: &Scenario, y: &[f64]) -> IdentifyConfig {
        let c = self.config;
        let mut cfg = if c.known_ssi {
            let mut cfg =
                IdentifyConfig::known_ssi(self.net.n_lines(), c.outages, sc.noise_std.powi(2), c.bad_buses > 0, y);
            if let Some(p) = cfg.swamp.fixed_priors.as_mut() {
                if c.bad_buses > 0 {
                    p.gm = PriorParams::initial(self.net.n_lines(), y, c.components).gm;
                }
            }
            cfg
        } else {
            IdentifyConfig {
                selection: Selection::Threshold(c.tau),
                ..IdentifyConfig::default()
            }
        };
        cfg.swamp.components = c.components;
        cfg.swamp.tolerance = c.eps;
        cfg.swamp.max_iter = c.t_max;
        cfg.swamp.seed = sc.seed;
        cfg
    }

    fn lasso_select(&self, sc: &Scenario, y: &[f64], frac: f64) -> Result<(Vec<usize>, usize, bool)> {
        let a = build_a(self.net, &sc.theta_corrupt)?;
        let aty = a.matrix().tr_mul_vec(y).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let yinf = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let cfg = LassoConfig {
            lambda_s: (frac * aty).max(f64::MIN_POSITIVE),
            lambda_e: self
                .config
                .lasso_lambda_e
                .map_or(f64::INFINITY, |f| (f * yinf).max(f64::MIN_POSITIVE)),
            max_iter: self.config.t_max.max(5000),
            tol: self.config.eps * 1e-3,
            weighted: true,
        };
        let out = lasso_solve(&a, y, &cfg)?;
        let bits = if self.config.known_ssi {
            top_k(&out.s, self.config.outages)
        } else {
            out.s.iter().map(|&s| s >= self.config.tau).collect()
        };
        Ok((support(&bits), out.iterations, out.converged))
    }

    /// Picks the LASSO penalty fraction with the best mean identification
    /// rate on a validation batch drawn from a separate seed stream.
    fn tune_lasso(&self) -> Result<f64> {
        const POINTS: usize = 13;
        const BATCH: usize = 30;
        let validation_seed = rng::substream_seed(self.config.seed, u64::MAX);
        let scenarios: Vec<Scenario> = (0..BATCH)
            .map(|t| self.scenario(validation_seed, t).map(|(_, _, sc)| sc))
            .collect::<Result<_>>()?;
        let mut best = (f64::NEG_INFINITY, 1.0);
        for i in 0..POINTS {
            let frac = 10f64.powf(-4.0 * i as f64 / (POINTS - 1) as f64);
            let score: f64 = scenarios
                .par_iter()
                .map(|sc| {
                    let y = build_y(&self.b, &sc.theta_pre, &sc.theta_corrupt)?;
                    let (lines, _, _) = self.lasso_select(sc, &y, frac)?;
                    Ok(metrics(&sc.outage_set, &lines).kappa_i)
                })
                .collect::<Result<Vec<f64>>>()?
                .iter()
                .sum();
            if score > best.0 {
                best = (score, frac);
            }
        }
        Ok(best.1)
    }
}

/// Runs every trial of `config` and aggregates the scores.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Report> {
    config.validate()?;
    let net = load_case(&config.case, config.format, config.allow_negative_reactance)?;
    run_experiment_on(config, &net)
}

/// Same as [`run_experiment`] on an already loaded network; `config.case`
/// is only echoed.
pub fn run_experiment_on(config: &ExperimentConfig, net: &Network) -> Result<Report> {
    config.validate()?;
    let run = || -> Result<Report> {
        let bench = Bench::new(config, net)?;
        let lasso_lambda = match config.algorithm {
            Algorithm::Lasso => Some(match config.lasso_lambda {
                Some(f) => f,
                None => bench.tune_lasso()?,
            }),
            _ => None,
        };
        let total = config.locations * config.trials;
        let outcomes: Vec<TrialOutcome> = (0..total)
            .into_par_iter()
            .map(|t| {
                bench.run_trial(config.seed, t, lasso_lambda).map_err(|e| Error::Trial {
                    trial: t,
                    source: Box::new(e),
                })
            })
            .collect::<Result<_>>()?;
        let (records, runtimes): (Vec<_>, Vec<_>) =
            outcomes.into_iter().map(|o| (o.record, o.runtime)).unzip();
        let mut report = Report::from_records(config.clone(), net, records, runtimes, lasso_lambda);
        if !config.keep_records {
            report.records.clear();
        }
        Ok(report)
    };
    match config.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map_err(|e| Error::Value(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(format!("unknown report format '{other}'")),
        }
    }
}

pub const CSV_HEADER: [&str; 12] = [
    "N",
    "L",
    "outages",
    "bad_buses",
    "noise_std",
    "algorithm",
    "kappa_I_sphase",
    "kappa_I_final",
    "kappa_F_sphase",
    "kappa_F_final",
    "trials",
    "mean_runtime_s",
];

/// Writes the aggregate row (CSV) or the whole report (JSON). A report
/// without trials gives a header-only CSV.
pub fn report_write<W: Write>(out: W, reports: &[Report], format: ReportFormat) -> Result<()> {
    match format {
        ReportFormat::Json => {
            let mut out = out;
            if let [single] = reports {
                serde_json::to_writer_pretty(&mut out, single)?;
            } else {
                serde_json::to_writer_pretty(&mut out, reports)?;
            }
            out.write_all(b"\n")?;
        }
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(CSV_HEADER)?;
            for r in reports.iter().filter(|r| r.trials > 0) {
                w.write_record([
                    r.n_buses.to_string(),
                    r.n_lines.to_string(),
                    r.config.outages.to_string(),
                    r.config.bad_buses.to_string(),
                    r.config.noise_std_frac.to_string(),
                    r.config.algorithm.name().to_string(),
                    r.kappa_i_sphase.to_string(),
                    r.kappa_i_final.to_string(),
                    r.kappa_f_sphase.to_string(),
                    r.kappa_f_final.to_string(),
                    r.trials.to_string(),
                    r.mean_runtime_s.to_string(),
                ])?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

pub fn report_write_path(path: &Path, reports: &[Report], format: ReportFormat) -> Result<()> {
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    report_write(file, reports, format)
}
