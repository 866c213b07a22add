//! Command-line front end for the dynlab library: fixed-point
//! analysis, trajectory simulation, intervention planning, grid
//! sweeps, and Monte Carlo checks, with CSV/JSON emission for
//! external plotting.
//!
//! Every command is deterministic given its configuration and seed.
//! Exit codes: 0 success, 2 invalid configuration, 3 numeric failure;
//! errors are reported as one JSON object on stderr.

use std::cell::RefCell;
use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use dynlab_core::alt_models::{BernGaussParams, ParetoParams};
use dynlab_core::discrete_model::{
    accepts_score_one, discrete_simulate, discrete_update, lambda_star, DiscreteCase,
    DiscreteParams,
};
use dynlab_core::dynamics::{cobweb_points, iterate, Terminal, Trajectory};
use dynlab_core::emit;
use dynlab_core::fixed_points::{analyze_gaussian, grid_multiplicity_survey, SurveyFilter};
use dynlab_core::gaussian_model::{GaussianParams, WealthMean};
use dynlab_core::interventions::{
    check_one_shot_optimality, compare_beta, compare_threshold, compute_delta, dp_optimal_subsidy,
    simulate_subsidy, subsidy_form_equivalence, threshold_schedule_affine, GenericUpdateMap,
};
use dynlab_core::map::FnMap;
use dynlab_core::Error as CoreError;

// ---------------------------------------------------------------------------
// Failure plumbing: every error becomes (exit code, kind, message).

struct Failure {
    code: u8,
    kind: &'static str,
    message: String,
}

impl From<CoreError> for Failure {
    fn from(e: CoreError) -> Self {
        let (code, kind) = match e {
            CoreError::Domain(_) => (2, "domain"),
            CoreError::Degenerate(_) => (2, "degenerate"),
            CoreError::ShapeViolation(_) => (3, "shape-violation"),
            CoreError::Numeric(_) => (3, "numeric"),
        };
        Failure { code, kind, message: e.to_string() }
    }
}

fn config_failure(message: impl Into<String>) -> Failure {
    Failure { code: 2, kind: "config", message: message.into() }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure { code: 2, kind: "io", message: format!("{}: {e}", path.display()) }
}

// ---------------------------------------------------------------------------
// Flat JSON config with unknown-key rejection. Flags override file
// values; every key a command can consume is probed exactly once, so
// anything left untouched is unknown for that command.

struct Cfg {
    map: serde_json::Map<String, serde_json::Value>,
    used: RefCell<BTreeSet<String>>,
}

impl Cfg {
    fn load(path: Option<&Path>) -> Result<Self, Failure> {
        let map = match path {
            None => serde_json::Map::new(),
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| io_failure(p, e))?;
                let value: serde_json::Value = serde_json::from_str(&text)
                    .map_err(|e| config_failure(format!("{}: not valid JSON: {e}", p.display())))?;
                match value {
                    serde_json::Value::Object(m) => m,
                    _ => {
                        return Err(config_failure(format!(
                            "{}: config must be a flat JSON object",
                            p.display()
                        )))
                    }
                }
            }
        };
        for (key, value) in &map {
            if value.is_object() || value.is_array() {
                return Err(config_failure(format!(
                    "config key `{key}` must be a scalar, not a nested value"
                )));
            }
        }
        Ok(Cfg { map, used: RefCell::new(BTreeSet::new()) })
    }

    fn f64(&self, key: &str) -> Result<Option<f64>, Failure> {
        match self.map.get(key) {
            None => Ok(None),
            Some(v) => {
                self.used.borrow_mut().insert(key.to_string());
                v.as_f64()
                    .map(Some)
                    .ok_or_else(|| config_failure(format!("config key `{key}` must be a number")))
            }
        }
    }

    fn unsigned(&self, key: &str) -> Result<Option<u64>, Failure> {
        match self.map.get(key) {
            None => Ok(None),
            Some(v) => {
                self.used.borrow_mut().insert(key.to_string());
                let parsed = v.as_u64().or_else(|| {
                    v.as_f64()
                        .filter(|x| x.fract() == 0.0 && *x >= 0.0 && *x <= u64::MAX as f64)
                        .map(|x| x as u64)
                });
                parsed.map(Some).ok_or_else(|| {
                    config_failure(format!("config key `{key}` must be a non-negative integer"))
                })
            }
        }
    }

    fn usize(&self, key: &str) -> Result<Option<usize>, Failure> {
        Ok(self.unsigned(key)?.map(|v| v as usize))
    }

    fn string(&self, key: &str) -> Result<Option<String>, Failure> {
        match self.map.get(key) {
            None => Ok(None),
            Some(v) => {
                self.used.borrow_mut().insert(key.to_string());
                v.as_str()
                    .map(|s| Some(s.to_string()))
                    .ok_or_else(|| config_failure(format!("config key `{key}` must be a string")))
            }
        }
    }

    /// Must run after argument resolution and before any computation.
    fn finish(&self) -> Result<(), Failure> {
        let used = self.used.borrow();
        let unknown: Vec<&str> =
            self.map.keys().map(String::as_str).filter(|k| !used.contains(*k)).collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(config_failure(format!("unknown config keys: {}", unknown.join(", "))))
        }
    }
}

fn resolve_f64(cfg: &Cfg, key: &str, flag: Option<f64>) -> Result<f64, Failure> {
    let file = cfg.f64(key)?;
    flag.or(file).ok_or_else(|| {
        config_failure(format!("missing parameter `{key}`: pass --{key} or set it in --config"))
    })
}

fn resolve_f64_or(cfg: &Cfg, key: &str, flag: Option<f64>, default: f64) -> Result<f64, Failure> {
    Ok(flag.or(cfg.f64(key)?).unwrap_or(default))
}

fn resolve_usize_or(
    cfg: &Cfg,
    key: &str,
    flag: Option<usize>,
    default: usize,
) -> Result<usize, Failure> {
    Ok(flag.or(cfg.usize(key)?).unwrap_or(default))
}

// ---------------------------------------------------------------------------
// Argument surface.

#[derive(Parser)]
#[command(
    name = "dynlab",
    version,
    about = "Admission dynamics toolbox: fixed points, trajectories, interventions, sweeps"
)]
struct Cli {
    /// JSON file with a flat parameter map; flags override file values.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// RNG seed for stochastic commands (default 0).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Write the primary output to this file instead of stdout.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,

    /// Output format; defaults to json for reports, csv for row data.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Locate fixed points, stability, and basins for a model.
    Analyze(AnalyzeArgs),
    /// Iterate the update map from a start point; emit trajectory and cobweb data.
    Simulate(SimulateArgs),
    /// Parameter perturbations and subsidy planning on the Gaussian model.
    Intervene(InterveneArgs),
    /// Survey fixed-point multiplicity over a parameter grid.
    Sweep(SweepArgs),
    /// Monte Carlo check of the closed-form admitted fraction.
    Oracle(OracleArgs),
    /// Two-point wealth model: flip fractions and one-step updates.
    Discrete(DiscreteArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Model {
    Gaussian,
    Discrete,
    BernGauss,
    Pareto,
}

#[derive(Clone, Copy, ValueEnum)]
enum CaseArg {
    /// Admission reads the type posterior only.
    TypeOnly,
    /// Admission reads current wealth only.
    WealthOnly,
    /// Admission mixes the type posterior with wealth.
    Mixed,
}

impl CaseArg {
    fn to_core(self) -> DiscreteCase {
        match self {
            CaseArg::TypeOnly => DiscreteCase::TypeOnly,
            CaseArg::WealthOnly => DiscreteCase::WealthOnly,
            CaseArg::Mixed => DiscreteCase::Mixed,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FilterArg {
    /// Tuples satisfying both halves of the three-fixed-point sufficient condition.
    ThreeFpCandidates,
    /// Tuples satisfying at least one half.
    EitherCondition,
    /// Tuples inside the contraction region (negative control).
    ContractionOnly,
}

impl FilterArg {
    fn to_core(self) -> SurveyFilter {
        match self {
            FilterArg::ThreeFpCandidates => SurveyFilter::ThreeFpCandidates,
            FilterArg::EitherCondition => SurveyFilter::EitherCondition,
            FilterArg::ContractionOnly => SurveyFilter::ContractionOnly,
        }
    }
}

/// Continuous-model parameters.
#[derive(Args)]
struct GaussianFlags {
    /// Weight on talent in the admission objective.
    #[arg(long)]
    alpha: Option<f64>,

    /// Weight on talent in the observed score.
    #[arg(long)]
    beta: Option<f64>,

    /// Talent standard deviation.
    #[arg(long)]
    gamma: Option<f64>,

    /// Wealth standard deviation (also the noise scale of the two-point model).
    #[arg(long)]
    sigma: Option<f64>,

    /// Admission bar on the posterior objective.
    #[arg(long)]
    tau: Option<f64>,
}

/// Two-point-prior and Pareto parameters.
#[derive(Args)]
struct AltFlags {
    /// Share of initially wealthy agents.
    #[arg(long)]
    p: Option<f64>,

    /// Admission bar on the type posterior.
    #[arg(long = "beta-thr")]
    beta_thr: Option<f64>,

    /// Weight on the type posterior versus wealth in the admission score.
    #[arg(long = "alpha-mix")]
    alpha_mix: Option<f64>,

    /// Pareto scale (minimum wealth).
    #[arg(long = "x-m")]
    x_m: Option<f64>,

    /// Pareto shape exponent.
    #[arg(long)]
    shape: Option<f64>,

    /// Mean wealth at which to evaluate cutoffs and updates.
    #[arg(long)]
    mu: Option<f64>,
}

/// Discrete-model decision case and wealth-transition matrix.
#[derive(Args)]
struct DiscreteFlags {
    /// What the admission rule reads.
    #[arg(long, value_enum)]
    case: Option<CaseArg>,

    /// Chance a rejected poor agent ends up wealthy.
    #[arg(long)]
    a00: Option<f64>,

    /// Chance an accepted poor agent ends up wealthy.
    #[arg(long)]
    a01: Option<f64>,

    /// Chance a rejected wealthy agent stays wealthy.
    #[arg(long)]
    a10: Option<f64>,

    /// Chance an accepted wealthy agent stays wealthy.
    #[arg(long)]
    a11: Option<f64>,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Model family.
    #[arg(long, value_enum)]
    model: Option<Model>,

    #[command(flatten)]
    gaussian: GaussianFlags,

    #[command(flatten)]
    alt: AltFlags,
}

#[derive(Args)]
struct SimulateArgs {
    /// Model family.
    #[arg(long, value_enum)]
    model: Option<Model>,

    #[command(flatten)]
    gaussian: GaussianFlags,

    #[command(flatten)]
    alt: AltFlags,

    #[command(flatten)]
    discrete: DiscreteFlags,

    /// Start point of the trajectory.
    #[arg(long)]
    x0: Option<f64>,

    /// Iteration cap.
    #[arg(long)]
    steps: Option<usize>,

    /// Convergence tolerance on successive states.
    #[arg(long)]
    tol: Option<f64>,

    /// Also write cobweb segments to this CSV file.
    #[arg(long = "cobweb-out", value_name = "PATH")]
    cobweb_out: Option<PathBuf>,
}

#[derive(Args)]
struct InterveneArgs {
    #[command(subcommand)]
    action: InterveneCommand,
}

#[derive(Subcommand)]
enum InterveneCommand {
    /// Lower the admission bar and compare fixed points.
    Tau(TauArgs),
    /// Move the score weight toward the objective weight and compare.
    Beta(BetaArgs),
    /// Largest diagonal gap below the middle crossing.
    Delta(DeltaArgs),
    /// Roll out a constant per-step subsidy until the middle crossing.
    Subsidy(SubsidyArgs),
    /// Compare the one-shot subsidy against a grid of constant plans.
    Oneshot(OneshotArgs),
    /// Optimal subsidy schedule by value iteration on a wealth-cost grid.
    Dp(DpArgs),
    /// Check the two subsidy bookkeeping forms stay one subsidy apart.
    Equiv(EquivArgs),
    /// Affine admission-target schedule and its induced update.
    Schedule(ScheduleArgs),
}

#[derive(Args)]
struct TauArgs {
    #[command(flatten)]
    gaussian: GaussianFlags,

    /// Perturbed admission bar (at most the base value).
    #[arg(long = "tau-prime")]
    tau_prime: Option<f64>,
}

#[derive(Args)]
struct BetaArgs {
    #[command(flatten)]
    gaussian: GaussianFlags,

    /// Perturbed score weight (between the base weights).
    #[arg(long = "beta-prime")]
    beta_prime: Option<f64>,
}

#[derive(Args)]
struct DeltaArgs {
    #[command(flatten)]
    gaussian: GaussianFlags,
}

#[derive(Args)]
struct SubsidyArgs {
    #[command(flatten)]
    gaussian: GaussianFlags,

    /// Per-step subsidy size.
    #[arg(long)]
    c: Option<f64>,

    /// Weight on subsidy cost versus distance in the loss.
    #[arg(long)]
    lambda: Option<f64>,

    /// Per-step discount factor.
    #[arg(long)]
    rho: Option<f64>,

    /// Start wealth of the subsidized group.
    #[arg(long)]
    mu0: Option<f64>,

    /// Iteration cap.
    #[arg(long = "max-steps")]
    max_steps: Option<usize>,
}

#[derive(Args)]
struct OneshotArgs {
    #[command(flatten)]
    gaussian: GaussianFlags,

    /// Weight on subsidy cost versus distance in the loss.
    #[arg(long)]
    lambda: Option<f64>,

    /// Per-step discount factor.
    #[arg(long)]
    rho: Option<f64>,

    /// Start wealth of the subsidized group.
    #[arg(long)]
    mu0: Option<f64>,
}

#[derive(Args)]
struct DpArgs {
    #[command(flatten)]
    gaussian: GaussianFlags,

    /// Weight on subsidy cost versus distance in the loss.
    #[arg(long)]
    lambda: Option<f64>,

    /// Per-step discount factor.
    #[arg(long)]
    rho: Option<f64>,

    /// Start wealth of the subsidized group.
    #[arg(long)]
    mu0: Option<f64>,

    /// Wealth grid resolution.
    #[arg(long = "wealth-points")]
    wealth_points: Option<usize>,

    /// Subsidy-action grid resolution.
    #[arg(long = "cost-points")]
    cost_points: Option<usize>,
}

#[derive(Args)]
struct EquivArgs {
    #[command(flatten)]
    gaussian: GaussianFlags,

    /// Per-step subsidy size.
    #[arg(long)]
    c: Option<f64>,

    /// Start wealth.
    #[arg(long)]
    x0: Option<f64>,

    /// Number of steps to compare.
    #[arg(long)]
    steps: Option<usize>,
}

#[derive(Args)]
struct ScheduleArgs {
    #[command(flatten)]
    gaussian: GaussianFlags,

    /// Slope of the admission-target schedule.
    #[arg(long)]
    a: Option<f64>,

    /// Intercept of the admission-target schedule.
    #[arg(long)]
    b: Option<f64>,

    /// Left end of the evaluation range.
    #[arg(long = "x-min")]
    x_min: Option<f64>,

    /// Right end of the evaluation range.
    #[arg(long = "x-max")]
    x_max: Option<f64>,

    /// Number of evaluation points.
    #[arg(long)]
    points: Option<usize>,
}

#[derive(Args)]
struct SweepArgs {
    /// Grid points per axis (interior midpoints of the unit cube).
    #[arg(long)]
    points: Option<usize>,

    /// Which parameter tuples enter the survey.
    #[arg(long, value_enum)]
    filter: Option<FilterArg>,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    gaussian: GaussianFlags,

    /// Mean wealth of the simulated group.
    #[arg(long)]
    mu0: Option<f64>,

    /// Number of simulated individuals.
    #[arg(long)]
    samples: Option<usize>,
}

#[derive(Args)]
struct DiscreteArgs {
    #[command(flatten)]
    alt: AltFlags,

    #[command(flatten)]
    discrete: DiscreteFlags,

    /// Current share of wealthy agents.
    #[arg(long)]
    lambda: Option<f64>,
}

// ---------------------------------------------------------------------------
// Entry point.

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            report(&config_failure(e.to_string().trim_end().to_string()));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            report(&f);
            ExitCode::from(f.code)
        }
    }
}

fn report(f: &Failure) {
    let payload = json!({ "code": f.code, "kind": f.kind, "message": f.message });
    eprintln!("{payload}");
}

fn init_threads() -> Result<(), Failure> {
    if let Ok(raw) = std::env::var("DYNLAB_THREADS") {
        let n: usize = raw
            .trim()
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| config_failure("DYNLAB_THREADS must be a positive integer"))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| config_failure(format!("cannot set worker count: {e}")))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    init_threads()?;
    let cfg = Cfg::load(cli.config.as_deref())?;
    let seed = match cli.seed {
        Some(s) => s,
        None => cfg.unsigned("seed")?.unwrap_or(0),
    };
    let out = match cli.out {
        Some(p) => Some(p),
        None => cfg.string("out")?.map(PathBuf::from),
    };
    let out = out.as_deref();
    let format = match cli.format {
        Some(f) => Some(f),
        None => cfg.string("format")?.map(|s| parse_format(&s)).transpose()?,
    };
    match cli.command {
        Command::Analyze(args) => cmd_analyze(&cfg, &args, format, out),
        Command::Simulate(args) => cmd_simulate(&cfg, &args, format, out),
        Command::Intervene(args) => cmd_intervene(&cfg, &args, format, out),
        Command::Sweep(args) => cmd_sweep(&cfg, &args, format, out),
        Command::Oracle(args) => cmd_oracle(&cfg, &args, seed, out),
        Command::Discrete(args) => cmd_discrete(&cfg, &args, out),
    }
}

// ---------------------------------------------------------------------------
// Shared resolution helpers.

fn parse_format(s: &str) -> Result<Format, Failure> {
    match s {
        "csv" => Ok(Format::Csv),
        "json" => Ok(Format::Json),
        _ => Err(config_failure(format!("format must be `csv` or `json`, got `{s}`"))),
    }
}

fn parse_model(s: &str) -> Result<Model, Failure> {
    match s {
        "gaussian" => Ok(Model::Gaussian),
        "discrete" => Ok(Model::Discrete),
        "bern-gauss" => Ok(Model::BernGauss),
        "pareto" => Ok(Model::Pareto),
        _ => Err(config_failure(format!(
            "model must be one of gaussian, discrete, bern-gauss, pareto; got `{s}`"
        ))),
    }
}

fn parse_case(s: &str) -> Result<DiscreteCase, Failure> {
    match s {
        "type-only" => Ok(DiscreteCase::TypeOnly),
        "wealth-only" => Ok(DiscreteCase::WealthOnly),
        "mixed" => Ok(DiscreteCase::Mixed),
        _ => Err(config_failure(format!(
            "case must be one of type-only, wealth-only, mixed; got `{s}`"
        ))),
    }
}

fn resolve_model(cfg: &Cfg, flag: Option<Model>) -> Result<Model, Failure> {
    let file = cfg.string("model")?.map(|s| parse_model(&s)).transpose()?;
    Ok(flag.or(file).unwrap_or(Model::Gaussian))
}

fn resolve_case(cfg: &Cfg, flag: Option<CaseArg>) -> Result<DiscreteCase, Failure> {
    let file = cfg.string("case")?.map(|s| parse_case(&s)).transpose()?;
    flag.map(CaseArg::to_core).or(file).ok_or_else(|| {
        config_failure("missing parameter `case`: pass --case or set it in --config")
    })
}

fn gaussian_params(cfg: &Cfg, flags: &GaussianFlags) -> Result<GaussianParams, Failure> {
    let alpha = resolve_f64(cfg, "alpha", flags.alpha)?;
    let beta = resolve_f64(cfg, "beta", flags.beta)?;
    let gamma = resolve_f64(cfg, "gamma", flags.gamma)?;
    let sigma = resolve_f64(cfg, "sigma", flags.sigma)?;
    let tau = resolve_f64(cfg, "tau", flags.tau)?;
    Ok(GaussianParams::new(alpha, beta, gamma, sigma, tau)?)
}

fn bern_gauss_params(
    cfg: &Cfg,
    alt: &AltFlags,
    sigma_flag: Option<f64>,
) -> Result<BernGaussParams, Failure> {
    let p = resolve_f64(cfg, "p", alt.p)?;
    let beta_thr = resolve_f64(cfg, "beta-thr", alt.beta_thr)?;
    let sigma = resolve_f64(cfg, "sigma", sigma_flag)?;
    let alpha_mix = resolve_f64_or(cfg, "alpha-mix", alt.alpha_mix, 0.5)?;
    Ok(BernGaussParams::new(p, beta_thr, sigma, alpha_mix)?)
}

fn discrete_params(
    cfg: &Cfg,
    alt: &AltFlags,
    flags: &DiscreteFlags,
    case: DiscreteCase,
) -> Result<DiscreteParams, Failure> {
    let p = resolve_f64(cfg, "p", alt.p)?;
    let beta_thr = resolve_f64(cfg, "beta-thr", alt.beta_thr)?;
    let alpha_mix = match alt.alpha_mix.or(cfg.f64("alpha-mix")?) {
        Some(v) => v,
        None => match case {
            DiscreteCase::TypeOnly => 1.0,
            DiscreteCase::WealthOnly => 0.0,
            DiscreteCase::Mixed => {
                return Err(config_failure(
                    "missing parameter `alpha-mix`: the mixed case needs an explicit weight",
                ))
            }
        },
    };
    let a = [
        [
            resolve_f64_or(cfg, "a00", flags.a00, 0.0)?,
            resolve_f64_or(cfg, "a01", flags.a01, 1.0)?,
        ],
        [
            resolve_f64_or(cfg, "a10", flags.a10, 0.0)?,
            resolve_f64_or(cfg, "a11", flags.a11, 1.0)?,
        ],
    ];
    Ok(DiscreteParams::new(p, beta_thr, alpha_mix, a)?)
}

// ---------------------------------------------------------------------------
// Output plumbing.

fn write_output(out: Option<&Path>, content: &str) -> Result<(), Failure> {
    match out {
        Some(p) => fs::write(p, content).map_err(|e| io_failure(p, e)),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn write_json<T: serde::Serialize>(out: Option<&Path>, value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Failure { code: 3, kind: "numeric", message: format!("cannot serialize output: {e}") })?;
    write_output(out, &format!("{text}\n"))
}

fn terminal_status(terminal: &Terminal) -> String {
    match terminal {
        Terminal::Converged { z } => format!("terminal: converged z = {}", emit::format_float(*z)),
        Terminal::Cycle { period, .. } => format!("terminal: cycle period = {period}"),
        Terminal::MaxIterations => "terminal: max-iterations".to_string(),
    }
}

fn write_trajectory(
    out: Option<&Path>,
    cobweb_out: Option<&Path>,
    format: Format,
    trajectory: &Trajectory,
) -> Result<(), Failure> {
    match format {
        Format::Csv => write_output(out, &emit::trajectory_csv(trajectory))?,
        Format::Json => write_json(out, trajectory)?,
    }
    if let Some(path) = cobweb_out {
        let segments = cobweb_points(trajectory);
        write_output(Some(path), &emit::cobweb_csv(&segments))?;
    }
    eprintln!("{}", terminal_status(&trajectory.terminal));
    Ok(())
}

// ---------------------------------------------------------------------------
// Commands.

fn cmd_analyze(
    cfg: &Cfg,
    args: &AnalyzeArgs,
    format: Option<Format>,
    out: Option<&Path>,
) -> Result<(), Failure> {
    let model = resolve_model(cfg, args.model)?;
    match model {
        Model::Gaussian => {
            let params = gaussian_params(cfg, &args.gaussian)?;
            cfg.finish()?;
            let report = analyze_gaussian(&params)?;
            match format.unwrap_or(Format::Json) {
                Format::Json => write_json(out, &report),
                Format::Csv => {
                    let mut csv = String::from("x,derivative,stability\n");
                    for p in &report.points {
                        let stability = serde_json::to_value(p.stability)
                            .ok()
                            .and_then(|v| v.as_str().map(String::from))
                            .unwrap_or_default();
                        let _ = writeln!(
                            csv,
                            "{},{},{stability}",
                            emit::format_float(p.x),
                            emit::format_float(p.derivative)
                        );
                    }
                    write_output(out, &csv)
                }
            }
        }
        Model::BernGauss => {
            let params = bern_gauss_params(cfg, &args.alt, args.gaussian.sigma)?;
            let mu = args.alt.mu.or(cfg.f64("mu")?);
            cfg.finish()?;
            require_json(format, "analyze with a two-point prior")?;
            let mut payload = json!({
                "model": "bern-gauss",
                "params": params,
                "threshold_k": params.threshold_k(),
                "contraction_sigma_bound": 1.0 / (2.0 * std::f64::consts::PI).sqrt(),
            });
            if let Some(mu) = mu {
                let cutoff = params.score_cutoff(mu)?;
                payload["mu"] = json!(mu);
                payload["score_cutoff"] = json!(cutoff);
                payload["update"] = json!(params.update(mu)?.value());
                payload["posterior_at_cutoff"] = json!(params.type_posterior(cutoff, mu));
            }
            let fixed_point = bern_gauss_fixed_point(&params)?;
            payload["fixed_point"] = json!(fixed_point);
            write_json(out, &payload)
        }
        Model::Pareto => {
            let x_m = resolve_f64(cfg, "x-m", args.alt.x_m)?;
            let shape = resolve_f64(cfg, "shape", args.alt.shape)?;
            let p = resolve_f64(cfg, "p", args.alt.p)?;
            let beta_thr = resolve_f64(cfg, "beta-thr", args.alt.beta_thr)?;
            cfg.finish()?;
            require_json(format, "analyze with a Pareto prior")?;
            let params = ParetoParams::new(x_m, shape, p, beta_thr)?;
            let report = params.acceptance_set();
            write_json(out, &json!({ "model": "pareto", "params": params, "report": report }))
        }
        Model::Discrete => Err(config_failure(
            "analyze does not cover the discrete model; use the `discrete` command",
        )),
    }
}

/// Iterates the two-point-prior update from the center until successive
/// means agree to 1e-12; reports the landing point if that happens.
fn bern_gauss_fixed_point(params: &BernGaussParams) -> Result<Option<f64>, Failure> {
    let mut x = 0.5;
    for _ in 0..10_000 {
        let next = params.update(x)?.value();
        if (next - x).abs() < 1e-12 {
            return Ok(Some(next));
        }
        x = next;
    }
    Ok(None)
}

fn require_json(format: Option<Format>, what: &str) -> Result<(), Failure> {
    match format {
        Some(Format::Csv) => {
            Err(config_failure(format!("{what} has no CSV form; use --format json")))
        }
        _ => Ok(()),
    }
}

fn cmd_simulate(
    cfg: &Cfg,
    args: &SimulateArgs,
    format: Option<Format>,
    out: Option<&Path>,
) -> Result<(), Failure> {
    let model = resolve_model(cfg, args.model)?;
    let x0 = resolve_f64(cfg, "x0", args.x0)?;
    let steps = resolve_usize_or(cfg, "steps", args.steps, 100_000)?;
    let tol = resolve_f64_or(cfg, "tol", args.tol, 1e-10)?;
    let cobweb_out = match &args.cobweb_out {
        Some(p) => Some(p.clone()),
        None => cfg.string("cobweb-out")?.map(PathBuf::from),
    };
    let format = format.unwrap_or(Format::Csv);
    match model {
        Model::Gaussian => {
            let params = gaussian_params(cfg, &args.gaussian)?;
            cfg.finish()?;
            let trajectory = iterate(&params, x0, steps, tol)?;
            write_trajectory(out, cobweb_out.as_deref(), format, &trajectory)
        }
        Model::Discrete => {
            let case = resolve_case(cfg, args.discrete.case)?;
            let params = discrete_params(cfg, &args.alt, &args.discrete, case)?;
            cfg.finish()?;
            let trajectory = discrete_simulate(&params, case, x0, steps, tol)?;
            write_trajectory(out, cobweb_out.as_deref(), format, &trajectory)
        }
        Model::BernGauss => {
            let params = bern_gauss_params(cfg, &args.alt, args.gaussian.sigma)?;
            cfg.finish()?;
            // Bisection failures surface as non-finite states, which the
            // iterator reports as a numeric error.
            let map = FnMap(move |x: f64| {
                params.update(x).map(|p| p.value()).unwrap_or(f64::NAN)
            });
            let trajectory = iterate(&map, x0, steps, tol)?;
            write_trajectory(out, cobweb_out.as_deref(), format, &trajectory)
        }
        Model::Pareto => {
            Err(config_failure("the Pareto model has a one-shot acceptance set, not dynamics"))
        }
    }
}

fn cmd_intervene(
    cfg: &Cfg,
    args: &InterveneArgs,
    format: Option<Format>,
    out: Option<&Path>,
) -> Result<(), Failure> {
    match &args.action {
        InterveneCommand::Tau(a) => {
            let params = gaussian_params(cfg, &a.gaussian)?;
            let tau_prime = resolve_f64(cfg, "tau-prime", a.tau_prime)?;
            cfg.finish()?;
            let comparison = compare_threshold(&params, tau_prime)?;
            match format.unwrap_or(Format::Json) {
                Format::Json => write_json(out, &comparison),
                Format::Csv => write_output(out, &emit::comparison_csv(&comparison)),
            }
        }
        InterveneCommand::Beta(a) => {
            let params = gaussian_params(cfg, &a.gaussian)?;
            let beta_prime = resolve_f64(cfg, "beta-prime", a.beta_prime)?;
            cfg.finish()?;
            let comparison = compare_beta(&params, beta_prime)?;
            match format.unwrap_or(Format::Json) {
                Format::Json => write_json(out, &comparison),
                Format::Csv => write_output(out, &emit::comparison_csv(&comparison)),
            }
        }
        InterveneCommand::Delta(a) => {
            let params = gaussian_params(cfg, &a.gaussian)?;
            cfg.finish()?;
            require_json(format, "the diagonal-gap report")?;
            let map = GenericUpdateMap::from_gaussian(&params)?;
            let report = compute_delta(&map);
            write_json(
                out,
                &json!({
                    "fixed_points": map.fixed_points(),
                    "delta": report.delta,
                    "argmax_x": report.argmax_x,
                }),
            )
        }
        InterveneCommand::Subsidy(a) => {
            let params = gaussian_params(cfg, &a.gaussian)?;
            let c = resolve_f64(cfg, "c", a.c)?;
            let lambda = resolve_f64(cfg, "lambda", a.lambda)?;
            let rho = resolve_f64(cfg, "rho", a.rho)?;
            let mu0 = resolve_f64(cfg, "mu0", a.mu0)?;
            let max_steps = resolve_usize_or(cfg, "max-steps", a.max_steps, 100_000)?;
            cfg.finish()?;
            let map = GenericUpdateMap::from_gaussian(&params)?;
            let plan = simulate_subsidy(&map, c, lambda, rho, mu0, max_steps)?;
            match format.unwrap_or(Format::Json) {
                Format::Json => write_json(out, &plan),
                Format::Csv => {
                    let trajectory =
                        Trajectory { states: plan.states.clone(), terminal: Terminal::MaxIterations };
                    write_output(out, &emit::trajectory_csv(&trajectory))
                }
            }
        }
        InterveneCommand::Oneshot(a) => {
            let params = gaussian_params(cfg, &a.gaussian)?;
            let lambda = resolve_f64(cfg, "lambda", a.lambda)?;
            let rho = resolve_f64(cfg, "rho", a.rho)?;
            let mu0 = resolve_f64(cfg, "mu0", a.mu0)?;
            cfg.finish()?;
            require_json(format, "the one-shot comparison")?;
            let map = GenericUpdateMap::from_gaussian(&params)?;
            let verdict = check_one_shot_optimality(&map, lambda, rho, mu0)?;
            write_json(out, &verdict)
        }
        InterveneCommand::Dp(a) => {
            let params = gaussian_params(cfg, &a.gaussian)?;
            let lambda = resolve_f64(cfg, "lambda", a.lambda)?;
            let rho = resolve_f64(cfg, "rho", a.rho)?;
            let mu0 = resolve_f64(cfg, "mu0", a.mu0)?;
            let wealth_points = resolve_usize_or(cfg, "wealth-points", a.wealth_points, 65)?;
            let cost_points = resolve_usize_or(cfg, "cost-points", a.cost_points, 65)?;
            cfg.finish()?;
            require_json(format, "the subsidy schedule")?;
            let map = GenericUpdateMap::from_gaussian(&params)?;
            let plan = dp_optimal_subsidy(&map, lambda, rho, mu0, wealth_points, cost_points)?;
            write_json(out, &plan)
        }
        InterveneCommand::Equiv(a) => {
            let params = gaussian_params(cfg, &a.gaussian)?;
            let c = resolve_f64(cfg, "c", a.c)?;
            let x0 = resolve_f64(cfg, "x0", a.x0)?;
            let steps = resolve_usize_or(cfg, "steps", a.steps, 50)?;
            cfg.finish()?;
            require_json(format, "the equivalence report")?;
            let map = GenericUpdateMap::from_gaussian(&params)?;
            let report = subsidy_form_equivalence(&map, c, x0, steps)?;
            write_json(out, &report)
        }
        InterveneCommand::Schedule(a) => {
            let params = gaussian_params(cfg, &a.gaussian)?;
            let slope = resolve_f64(cfg, "a", a.a)?;
            let intercept = resolve_f64(cfg, "b", a.b)?;
            let x_min = resolve_f64_or(cfg, "x-min", a.x_min, 0.0)?;
            let x_max = resolve_f64_or(cfg, "x-max", a.x_max, 1.0)?;
            let points = resolve_usize_or(cfg, "points", a.points, 101)?;
            cfg.finish()?;
            if !(x_max > x_min) {
                return Err(config_failure("x-max must exceed x-min"));
            }
            if points < 2 {
                return Err(config_failure("points must be at least 2"));
            }
            let schedule = threshold_schedule_affine(&params, slope, intercept)?;
            let mut rows = Vec::with_capacity(points);
            for i in 0..points {
                let x = x_min + (x_max - x_min) * i as f64 / (points - 1) as f64;
                rows.push((x, schedule.target(x), schedule.threshold(x)?, schedule.induced_update(x)?));
            }
            match format.unwrap_or(Format::Csv) {
                Format::Csv => {
                    let mut csv = String::from("x,target,threshold,induced_update\n");
                    for (x, target, threshold, induced) in &rows {
                        let _ = writeln!(
                            csv,
                            "{},{},{},{}",
                            emit::format_float(*x),
                            emit::format_float(*target),
                            emit::format_float(*threshold),
                            emit::format_float(*induced)
                        );
                    }
                    write_output(out, &csv)
                }
                Format::Json => {
                    let items: Vec<serde_json::Value> = rows
                        .iter()
                        .map(|(x, target, threshold, induced)| {
                            json!({
                                "x": x,
                                "target": target,
                                "threshold": threshold,
                                "induced_update": induced,
                            })
                        })
                        .collect();
                    write_json(out, &items)
                }
            }
        }
    }
}

fn cmd_sweep(
    cfg: &Cfg,
    args: &SweepArgs,
    format: Option<Format>,
    out: Option<&Path>,
) -> Result<(), Failure> {
    let points = resolve_usize_or(cfg, "points", args.points, 10)?;
    let filter = match args.filter {
        Some(f) => f.to_core(),
        None => match cfg.string("filter")? {
            Some(s) => parse_filter(&s)?,
            None => SurveyFilter::ThreeFpCandidates,
        },
    };
    cfg.finish()?;
    let report = grid_multiplicity_survey(points, filter)?;
    match format.unwrap_or(Format::Csv) {
        Format::Csv => write_output(out, &emit::survey_csv(&report)),
        Format::Json => write_json(out, &report),
    }
}

fn parse_filter(s: &str) -> Result<SurveyFilter, Failure> {
    match s {
        "three-fp-candidates" => Ok(SurveyFilter::ThreeFpCandidates),
        "either-condition" => Ok(SurveyFilter::EitherCondition),
        "contraction-only" => Ok(SurveyFilter::ContractionOnly),
        _ => Err(config_failure(format!(
            "filter must be one of three-fp-candidates, either-condition, contraction-only; got `{s}`"
        ))),
    }
}

fn cmd_oracle(cfg: &Cfg, args: &OracleArgs, seed: u64, out: Option<&Path>) -> Result<(), Failure> {
    let params = gaussian_params(cfg, &args.gaussian)?;
    let mu0 = resolve_f64(cfg, "mu0", args.mu0)?;
    let samples = resolve_usize_or(cfg, "samples", args.samples, 1_000_000)?;
    cfg.finish()?;
    let mu = WealthMean::new(mu0)?;
    let closed_form = params.update_f(mu0)?.value();
    let (estimate, std_error) = params.monte_carlo_admit_fraction(mu, samples, seed)?;
    let estimate = estimate.value();
    let abs_difference = (closed_form - estimate).abs();
    write_json(
        out,
        &json!({
            "model": "gaussian",
            "params": params,
            "mu0": mu0,
            "samples": samples,
            "seed": seed,
            "closed_form": closed_form,
            "estimate": estimate,
            "std_error": std_error,
            "abs_difference": abs_difference,
            "within_three_se": abs_difference <= 3.0 * std_error,
        }),
    )
}

fn cmd_discrete(cfg: &Cfg, args: &DiscreteArgs, out: Option<&Path>) -> Result<(), Failure> {
    let case = resolve_case(cfg, args.discrete.case)?;
    let params = discrete_params(cfg, &args.alt, &args.discrete, case)?;
    let lambda = args.lambda.or(cfg.f64("lambda")?);
    cfg.finish()?;
    let flip = match case {
        DiscreteCase::Mixed => None,
        _ => Some(lambda_star(params.p(), params.beta_thr(), case)?),
    };
    let mut payload = json!({
        "model": "discrete",
        "case": case,
        "params": params,
        "lambda_star": flip,
    });
    if let Some(lambda) = lambda {
        payload["lambda"] = json!(lambda);
        payload["accepts_score_one"] =
            json!(accepts_score_one(params.p(), params.beta_thr(), params.alpha_mix(), lambda));
        payload["next_lambda"] = json!(discrete_update(&params, lambda, case)?.value());
    }
    write_json(out, &payload)
}
