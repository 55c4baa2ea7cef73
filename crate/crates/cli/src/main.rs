use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use outage_core::baselines::metrics;
use outage_core::bench::{load_case, report_write, run_experiment, Algorithm, ExperimentConfig, ReportFormat};
use outage_core::grid::{incidence_matrix, susceptance, CaseFormat};
use outage_core::identify::{identify, IdentifyConfig, Selection};
use outage_core::rng;
use outage_core::sim::{generate_scenario, read_jsonl, write_jsonl, Placement, Scenario, ScenarioSpec, Simulator};
use outage_core::swamp::PriorParams;
use serde_json::json;

#[derive(Parser)]
#[command(name = "outage-id", version, about = "Identify power-line outages from PMU angles with bad data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Identify outages in scenarios read from a JSONL file or from two angle files.
    Identify(IdentifyArgs),
    /// Run a Monte Carlo experiment and write an aggregate report.
    Bench(BenchArgs),
    /// Generate random scenarios as JSONL.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct CaseArgs {
    /// MATPOWER `.m` or native `.json` case file.
    #[arg(long)]
    case: PathBuf,
    /// Case format (matpower or native); guessed from the extension by default.
    #[arg(long)]
    format: Option<CaseFormat>,
    /// Accept branches with negative reactance.
    #[arg(long)]
    allow_negative_reactance: bool,
}

#[derive(Args)]
struct SolverArgs {
    /// Assume the outage count and the noise level are known.
    #[arg(long)]
    known_ssi: bool,
    /// Decision threshold on the outage posterior.
    #[arg(long, default_value_t = 0.5)]
    tau: f64,
    /// Gaussian components in the bad-data prior.
    #[arg(long = "K", default_value_t = 3)]
    k: usize,
    /// Convergence tolerance.
    #[arg(long, default_value_t = 1e-6)]
    eps: f64,
    /// Iteration cap.
    #[arg(long, default_value_t = 200)]
    tmax: usize,
}

#[derive(Args)]
struct IdentifyArgs {
    #[command(flatten)]
    case: CaseArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// JSONL scenarios, one identification per line.
    #[arg(long, conflicts_with_all = ["pre", "post"])]
    scenarios: Option<PathBuf>,
    /// Pre-event angles in radians, whitespace separated, in bus order.
    #[arg(long, requires = "post")]
    pre: Option<PathBuf>,
    /// Post-event (possibly corrupted) angles in radians.
    #[arg(long, requires = "pre")]
    post: Option<PathBuf>,
    /// Outage count, needed with --known-ssi when there is no ground truth.
    #[arg(long)]
    outages: Option<usize>,
    /// Noise standard deviation (per unit), used with --known-ssi.
    #[arg(long, default_value_t = 0.0)]
    noise_std: f64,
    /// Whether to model bad data under --known-ssi.
    #[arg(long)]
    bad_data: bool,
    /// Output file; stdout by default.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// JSON experiment configuration; explicit flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    case: Option<PathBuf>,
    #[arg(long)]
    format: Option<CaseFormat>,
    #[arg(long)]
    allow_negative_reactance: bool,
    #[arg(long)]
    outages: Option<usize>,
    #[arg(long)]
    bad_buses: Option<usize>,
    #[arg(long)]
    placement: Option<Placement>,
    /// Noise standard deviation as a fraction of the mean absolute injection.
    #[arg(long)]
    noise_std: Option<f64>,
    #[arg(long)]
    locations: Option<usize>,
    /// Realizations per location.
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    alg: Option<Algorithm>,
    #[arg(long)]
    known_ssi: bool,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long = "K")]
    k: Option<usize>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    tmax: Option<usize>,
    /// LASSO outage penalty as a fraction of ‖Aᵀy‖∞; tuned when omitted.
    #[arg(long)]
    lambda: Option<f64>,
    /// 1000 locations × 10 realizations.
    #[arg(long)]
    full_scale: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "csv")]
    out_format: ReportFormat,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    case: CaseArgs,
    #[arg(long, default_value_t = 1)]
    outages: usize,
    #[arg(long, default_value_t = 0)]
    bad_buses: usize,
    #[arg(long, default_value = "involved")]
    placement: Placement,
    #[arg(long, default_value_t = 0.0)]
    noise_std: f64,
    /// Number of scenarios.
    #[arg(long, default_value_t = 1)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Identify(args) => cmd_identify(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Simulate(args) => cmd_simulate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn read_angles(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().with_context(|| format!("bad angle '{t}' in {}", path.display())))
        .collect()
}

fn cmd_identify(args: IdentifyArgs) -> Result<()> {
    let net = load_case(&args.case.case, args.case.format, args.case.allow_negative_reactance)
        .with_context(|| format!("loading {}", args.case.case.display()))?;
    let b = susceptance(&net);
    let m = incidence_matrix(&net);

    let scenarios: Vec<Scenario> = match (&args.scenarios, &args.pre, &args.post) {
        (Some(path), _, _) => {
            let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
            read_jsonl(BufReader::new(file))?
        }
        (None, Some(pre), Some(post)) => {
            let theta_pre = read_angles(pre)?;
            let theta_corrupt = read_angles(post)?;
            vec![Scenario {
                outage_set: Vec::new(),
                faulty_buses: Vec::new(),
                theta_post: theta_corrupt.clone(),
                theta_pre,
                theta_corrupt,
                noise_std: args.noise_std,
                seed: 0,
            }]
        }
        _ => bail!("give either --scenarios or both --pre and --post"),
    };
    let has_truth = args.scenarios.is_some();

    let mut out = output(args.out.as_deref())?;
    for (i, sc) in scenarios.iter().enumerate() {
        let config = identify_config(&args, sc, &net, &b, has_truth)?;
        let res = identify(&net, &b, &m, &sc.theta_pre, &sc.theta_corrupt, &config)
            .with_context(|| format!("scenario {i}"))?;
        let mut value = json!({
            "scenario": i,
            "result": res.summary(&net, &sc.theta_corrupt),
            "selected": res.selected,
        });
        if has_truth {
            value["truth"] = json!({
                "outage_lines": sc.outage_set,
                "faulty_buses": sc.faulty_buses.iter().map(|&n| net.bus_id(n)).collect::<Vec<_>>(),
                "sphase": metrics(&sc.outage_set, &res.selected),
                "final": metrics(&sc.outage_set, &res.outages),
            });
        }
        serde_json::to_writer(&mut out, &value)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

fn identify_config(
    args: &IdentifyArgs,
    sc: &Scenario,
    net: &outage_core::grid::Network,
    b: &outage_core::grid::SusceptanceMatrix,
    has_truth: bool,
) -> Result<IdentifyConfig> {
    let s = &args.solver;
    let mut config = if s.known_ssi {
        let k = match (args.outages, has_truth) {
            (Some(k), _) => k,
            (None, true) => sc.outage_set.len(),
            (None, false) => bail!("--known-ssi needs --outages without ground truth"),
        };
        let bad = args.bad_data || (has_truth && !sc.faulty_buses.is_empty());
        let y = outage_core::identify::build_y(b, &sc.theta_pre, &sc.theta_corrupt)?;
        let mut config = IdentifyConfig::known_ssi(net.n_lines(), k, sc.noise_std.powi(2), bad, &y);
        if let (Some(p), true) = (config.swamp.fixed_priors.as_mut(), bad) {
            p.gm = PriorParams::initial(net.n_lines(), &y, s.k).gm;
        }
        config
    } else {
        IdentifyConfig {
            selection: Selection::Threshold(s.tau),
            ..IdentifyConfig::default()
        }
    };
    config.swamp.components = s.k;
    config.swamp.tolerance = s.eps;
    config.swamp.max_iter = s.tmax;
    config.swamp.seed = sc.seed;
    Ok(config)
}

fn cmd_bench(args: BenchArgs) -> Result<()> {
    let mut config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str::<ExperimentConfig>(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => ExperimentConfig::default(),
    };
    if args.full_scale {
        config = config.full_scale();
    }
    macro_rules! set {
        ($($field:ident <- $arg:expr),* $(,)?) => {
            $(if let Some(v) = $arg { config.$field = v; })*
        };
    }
    set!(
        case <- args.case,
        outages <- args.outages,
        bad_buses <- args.bad_buses,
        placement <- args.placement,
        noise_std_frac <- args.noise_std,
        locations <- args.locations,
        trials <- args.trials,
        seed <- args.seed,
        algorithm <- args.alg,
        tau <- args.tau,
        components <- args.k,
        eps <- args.eps,
        t_max <- args.tmax,
    );
    if args.format.is_some() {
        config.format = args.format;
    }
    if args.lambda.is_some() {
        config.lasso_lambda = args.lambda;
    }
    if args.workers.is_some() {
        config.workers = args.workers;
    }
    if args.out.is_some() {
        config.output = args.out.clone();
    }
    config.known_ssi |= args.known_ssi;
    config.allow_negative_reactance |= args.allow_negative_reactance;
    if config.case.as_os_str().is_empty() {
        bail!("no case file given (--case or a config file)");
    }

    let report = run_experiment(&config)?;
    eprintln!(
        "{} trials on {} buses / {} lines: kappa_I {:.4} -> {:.4}, kappa_F {:.4} -> {:.4}, mean {:.3e} s",
        report.trials,
        report.n_buses,
        report.n_lines,
        report.kappa_i_sphase,
        report.kappa_i_final,
        report.kappa_f_sphase,
        report.kappa_f_final,
        report.mean_runtime_s
    );
    let out = output(config.output.as_deref())?;
    report_write(out, &[report], args.out_format)?;
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let net = load_case(&args.case.case, args.case.format, args.case.allow_negative_reactance)
        .with_context(|| format!("loading {}", args.case.case.display()))?;
    let sim = Simulator::new(&net)?;
    let spec = ScenarioSpec {
        outages: args.outages,
        bad_buses: args.bad_buses,
        placement: args.placement,
        noise_std_frac: args.noise_std,
    };
    let scenarios: Vec<Scenario> = (0..args.count)
        .map(|i| generate_scenario(&sim, &spec, rng::substream_seed(args.seed, i as u64)))
        .collect::<outage_core::Result<_>>()?;
    let mut out = output(args.out.as_deref())?;
    write_jsonl(&mut out, &scenarios)?;
    out.flush()?;
    Ok(())
}
