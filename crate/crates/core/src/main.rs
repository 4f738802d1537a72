//! Command line for the feedback probe: simulate noisy deployments,
//! fit feedback curves from observation logs, regenerate the reference
//! figures, and weigh the cost of removing an estimated feedback term.

use clap::{Args, Parser, Subcommand};
use feedback_probe::basis::BasisSpec;
use feedback_probe::bootstrap::{bootstrap_feedback, BootstrapBands, BootstrapError};
use feedback_probe::config::{ConfigError, EstimatorVariant, ExperimentConfig, LoadedConfig};
use feedback_probe::estimator::{
    check_noise_consistency, fit_linear_conditioned, fit_linear_simple, fit_mean_trend,
    removal_tradeoff, EstimatorError, FitConfig, ObservationSet, SplitMode,
};
use feedback_probe::logfile::{read_log, write_log, LogError, ObservationLog};
use feedback_probe::noise::{child_seed, NoiseSpec};
use feedback_probe::report::{
    linear_report, two_stage_report, write_plot_csv, write_report, ReportMeta,
};
use feedback_probe::simulator::{generate_scenario, FeedbackShape, ScenarioSpec, SimulatorError};
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "feedback-probe",
    version,
    about = "Detect feedback loops in deployed predictors via injected noise"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an observation log (and its ground truth) from a scenario config
    Simulate(SimulateArgs),
    /// Fit the configured feedback estimator to an observation log
    Fit(FitArgs),
    /// Fit, then add resampled pointwise bands for the curve
    Bootstrap(FitArgs),
    /// Regenerate the six reference scenarios and their coverage summary
    ReproduceFigures(FiguresArgs),
    /// Expected squared-error cost of ignoring vs removing a fitted slope
    Tradeoff(TradeoffArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Experiment config (JSON) with a scenario section
    #[arg(long)]
    config: PathBuf,
    /// Override the scenario seed
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for generated files (default: config output_dir, else .)
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    /// Experiment config (JSON)
    #[arg(long)]
    config: PathBuf,
    /// Observation log to fit; defaults to the config's input_path
    #[arg(long)]
    log: Option<PathBuf>,
    /// Override the experiment seed (drives bootstrap resampling)
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for the report and curve files
    #[arg(long)]
    output: Option<PathBuf>,
    /// Bootstrap replicate count, overriding the config
    #[arg(long)]
    bootstrap_reps: Option<usize>,
}

const FIGURES_DEFAULT_SEED: u64 = 23;

#[derive(Args)]
struct FiguresArgs {
    /// Directory for the figure files
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, default_value_t = FIGURES_DEFAULT_SEED)]
    seed: u64,
    /// Small, fast scenarios (10k rows instead of 100k)
    #[arg(long)]
    quick: bool,
    /// Rows per scenario, overriding both the default and --quick
    #[arg(long)]
    n: Option<usize>,
}

#[derive(Args)]
struct TradeoffArgs {
    /// Fitted feedback slope
    #[arg(long)]
    beta: f64,
    /// Sampling variance of the fitted slope
    #[arg(long)]
    beta_variance: f64,
    /// Mean squared deployed prediction
    #[arg(long)]
    mean_sq_prediction: f64,
    /// Scale of the noise that stays injected after removal
    #[arg(long)]
    sigma_nu: f64,
}

#[derive(Debug)]
enum CliError {
    Config(String),
    Data(String),
    Numeric(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) | CliError::Data(m) | CliError::Numeric(m) => f.write_str(m),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<LogError> for CliError {
    fn from(e: LogError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<EstimatorError> for CliError {
    fn from(e: EstimatorError) -> Self {
        match e {
            // the data contradicts the declared noise: a data problem
            EstimatorError::NoiseMismatch { .. } => CliError::Data(e.to_string()),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<BootstrapError> for CliError {
    fn from(e: BootstrapError) -> Self {
        match e {
            BootstrapError::Estimator(inner) => inner.into(),
            BootstrapError::TooFewReplicates(_) => CliError::Config(e.to_string()),
            BootstrapError::TooManyFailures { .. } => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<SimulatorError> for CliError {
    fn from(e: SimulatorError) -> Self {
        match e {
            SimulatorError::InvalidSpec { .. } => CliError::Config(e.to_string()),
            SimulatorError::Estimator(inner) => inner.into(),
            other => CliError::Numeric(other.to_string()),
        }
    }
}

fn write_failed(path: &Path, e: std::io::Error) -> CliError {
    CliError::Config(format!("cannot write {}: {e}", path.display()))
}

fn main() {
    if let Err(e) = try_main() {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn try_main() -> Result<(), CliError> {
    configure_threads()?;
    match Cli::parse().command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Fit(args) => cmd_fit(args, false),
        Command::Bootstrap(args) => cmd_fit(args, true),
        Command::ReproduceFigures(args) => cmd_reproduce_figures(args),
        Command::Tradeoff(args) => cmd_tradeoff(args),
    }
}

// FEEDBACK_PROBE_THREADS caps how many replicate fits run in parallel.
fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("FEEDBACK_PROBE_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw.parse().map_err(|_| {
        CliError::Config(format!(
            "FEEDBACK_PROBE_THREADS = {raw:?} is not a thread count"
        ))
    })?;
    if threads == 0 {
        return Err(CliError::Config(
            "FEEDBACK_PROBE_THREADS must be at least 1".to_string(),
        ));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Config(format!("cannot size the thread pool: {e}")))
}

fn output_dir(flag: Option<PathBuf>, config: Option<&PathBuf>) -> Result<PathBuf, CliError> {
    let dir = flag
        .or_else(|| config.cloned())
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir).map_err(|e| write_failed(&dir, e))?;
    Ok(dir)
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), CliError> {
    let LoadedConfig { config, .. } = ExperimentConfig::load(&args.config)?;
    let Some(mut scenario) = config.scenario else {
        return Err(CliError::Config(
            "simulate needs a config with a scenario section".to_string(),
        ));
    };
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    let dir = output_dir(args.output, config.output_dir.as_ref())?;
    let sim = generate_scenario(&scenario)?;
    let log = ObservationLog::new(sim.observations, sim.period)?;

    let log_path = dir.join("observations.csv");
    write_log(&log_path, &log)?;
    let truth_path = dir.join("truth.json");
    let mut truth_text = serde_json::to_string_pretty(&sim.truth).expect("truth serializes");
    truth_text.push('\n');
    std::fs::write(&truth_path, truth_text).map_err(|e| write_failed(&truth_path, e))?;

    println!(
        "wrote {} ({} rows, {} period(s))",
        log_path.display(),
        log.observations.len(),
        log.max_period()
    );
    println!("wrote {}", truth_path.display());
    Ok(())
}

fn load_observations(
    args: &FitArgs,
    config: &ExperimentConfig,
) -> Result<ObservationLog, CliError> {
    let path = args.log.as_ref().or(config.input_path.as_ref());
    if let Some(path) = path {
        return Ok(read_log(path)?);
    }
    // no log on disk: a scenario config can still be fitted end to end
    let Some(scenario) = &config.scenario else {
        return Err(CliError::Config(
            "fit needs an observation log (input_path or --log) or a scenario".to_string(),
        ));
    };
    let sim = generate_scenario(scenario)?;
    Ok(ObservationLog::new(sim.observations, sim.period)?)
}

fn cmd_fit(args: FitArgs, force_bootstrap: bool) -> Result<(), CliError> {
    let LoadedConfig { config, sha256 } = ExperimentConfig::load(&args.config)?;
    let seed = args.seed.unwrap_or(config.seed);
    let dir = output_dir(args.output.clone(), config.output_dir.as_ref())?;
    let log = load_observations(&args, &config)?;
    let obs = &log.observations;

    let meta = ReportMeta {
        seed,
        config_sha256: &sha256,
        estimator: config.estimator,
        n_observations: obs.len(),
        periods: log.max_period(),
        noise: &config.noise,
    };

    let report = match config.estimator {
        EstimatorVariant::TwoStage | EstimatorVariant::TwoStageSplit => {
            let mode = if config.estimator == EstimatorVariant::TwoStage {
                SplitMode::Shared
            } else {
                SplitMode::Split
            };
            let fit_config = FitConfig::new(
                config.mu_basis.clone(),
                config.f_basis.clone(),
                config.noise,
            )
            .with_mode(mode);
            let fit = fit_config.fit(obs)?;
            let bands = run_bootstrap(force_bootstrap, &args, &config, &fit_config, obs, seed)?;
            let report = two_stage_report(meta, &fit, bands.as_ref());
            let feedback = report
                .feedback
                .as_ref()
                .expect("two-stage report has a curve");
            let curve_path = dir.join("curve.csv");
            let mut columns: Vec<(&str, &[f64])> = vec![
                ("f_hat", &feedback.estimate),
                ("se", &feedback.pointwise_se),
            ];
            if let Some(boot) = &feedback.bootstrap_se {
                columns.push(("bootstrap_se", boot));
            }
            write_plot_csv(&curve_path, &feedback.grid, &columns)
                .map_err(|e| write_failed(&curve_path, e))?;
            println!("wrote {}", curve_path.display());
            report
        }
        EstimatorVariant::LinearSimple | EstimatorVariant::LinearConditioned => {
            if force_bootstrap {
                return Err(CliError::Config(
                    "bootstrap bands need a two-stage estimator".to_string(),
                ));
            }
            check_noise_consistency(obs.noise(), &config.noise)?;
            if config.estimator == EstimatorVariant::LinearSimple {
                linear_report(meta, &fit_linear_simple(obs)?, None)
            } else {
                let trend = fit_mean_trend(obs, &config.mu_basis)?;
                let fit = fit_linear_conditioned(obs, &trend)?;
                linear_report(meta, &fit, Some(&trend))
            }
        }
    };

    let report_path = dir.join("report.json");
    write_report(&report_path, &report).map_err(|e| write_failed(&report_path, e))?;
    println!("wrote {}", report_path.display());
    Ok(())
}

fn run_bootstrap(
    force: bool,
    args: &FitArgs,
    config: &ExperimentConfig,
    fit_config: &FitConfig,
    obs: &ObservationSet,
    seed: u64,
) -> Result<Option<BootstrapBands>, CliError> {
    if !(force || config.bootstrap.enabled) {
        return Ok(None);
    }
    let replicates = args.bootstrap_reps.unwrap_or(config.bootstrap.replicates);
    let bands = bootstrap_feedback(obs, fit_config, replicates, seed)?;
    Ok(Some(bands))
}

fn cmd_tradeoff(args: TradeoffArgs) -> Result<(), CliError> {
    for (name, value) in [
        ("beta", args.beta),
        ("beta-variance", args.beta_variance),
        ("mean-sq-prediction", args.mean_sq_prediction),
        ("sigma-nu", args.sigma_nu),
    ] {
        if !value.is_finite() {
            return Err(CliError::Config(format!("--{name} must be finite")));
        }
    }
    if args.beta_variance < 0.0 || args.mean_sq_prediction < 0.0 || args.sigma_nu < 0.0 {
        return Err(CliError::Config(
            "variances and scales cannot be negative".to_string(),
        ));
    }
    let losses = removal_tradeoff(
        args.beta_variance,
        args.mean_sq_prediction,
        args.sigma_nu,
        args.beta,
    );
    let body = serde_json::json!({
        "ignore_loss": losses.ignore_loss,
        "correct_loss": losses.correct_loss,
        "removal_pays": losses.correct_loss < losses.ignore_loss,
    });
    println!("{}", serde_json::to_string_pretty(&body).expect("json"));
    Ok(())
}

const FIGURE_SHAPES: [(&str, FeedbackShape); 6] = [
    ("a", FeedbackShape::ContinuousMonotone),
    ("b", FeedbackShape::MonotoneWithJump),
    ("c", FeedbackShape::ContinuousNonmonotone),
    ("d", FeedbackShape::NonmonotoneWithJump),
    ("e", FeedbackShape::Null),
    ("f", FeedbackShape::JumpOnly),
];

fn shape_slug(shape: &FeedbackShape) -> &'static str {
    match shape {
        FeedbackShape::ContinuousMonotone => "continuous_monotone",
        FeedbackShape::MonotoneWithJump => "monotone_with_jump",
        FeedbackShape::ContinuousNonmonotone => "continuous_nonmonotone",
        FeedbackShape::NonmonotoneWithJump => "nonmonotone_with_jump",
        FeedbackShape::Null => "null",
        FeedbackShape::JumpOnly => "jump_only",
        FeedbackShape::Custom { .. } => "custom",
    }
}

// Grid points far enough from the boundary to score: trim 5 per side.
fn interior(len: usize) -> std::ops::Range<usize> {
    if len > 10 {
        5..len - 5
    } else {
        0..len
    }
}

fn cmd_reproduce_figures(args: FiguresArgs) -> Result<(), CliError> {
    let n = args.n.unwrap_or(if args.quick { 10_000 } else { 100_000 });
    let dir = output_dir(args.output, None)?;
    let mu_basis = BasisSpec::spline(3, -3.0, 3.0)
        .with_jumps(&[0.0])
        .with_intercept();
    let f_basis = BasisSpec::spline(3, -3.0, 3.0).with_jumps(&[0.0]);

    let mut summary = String::from("figure,shape,n,grid_points,interior_coverage\n");
    for (index, (letter, shape)) in FIGURE_SHAPES.iter().enumerate() {
        let k = index as u64;
        let noise = NoiseSpec::gaussian(0.25, child_seed(args.seed, 100 + k));
        let spec = ScenarioSpec::new(n, shape.clone(), noise, child_seed(args.seed, k));
        let sim = generate_scenario(&spec)?;
        let fit_config = FitConfig::new(mu_basis.clone(), f_basis.clone(), sim.noise);
        let fit = fit_config.fit(&sim.observations)?;

        let grid = fit.feedback.grid_points();
        let f_hat = fit.feedback.evaluation.values();
        let se = &fit.feedback.pointwise_se;
        let f_true: Vec<f64> = shape
            .evaluate(&grid)?
            .iter()
            .map(|v| v - sim.truth.mean_f_at_priors)
            .collect();

        let covered = interior(grid.len())
            .filter(|&i| (f_hat[i] - f_true[i]).abs() <= 2.0 * se[i])
            .count();
        let coverage = covered as f64 / interior(grid.len()).len() as f64;

        let slug = shape_slug(shape);
        let path = dir.join(format!("figure_{letter}_{slug}.csv"));
        write_plot_csv(
            &path,
            &grid,
            &[("f_true", &f_true), ("f_hat", f_hat), ("se", se)],
        )
        .map_err(|e| write_failed(&path, e))?;
        println!("wrote {} (coverage {coverage:.3})", path.display());
        summary.push_str(&format!(
            "{letter},{slug},{n},{},{}\n",
            grid.len(),
            coverage
        ));
    }

    let summary_path = dir.join("coverage_summary.csv");
    std::fs::write(&summary_path, summary).map_err(|e| write_failed(&summary_path, e))?;
    println!("wrote {}", summary_path.display());
    Ok(())
}
