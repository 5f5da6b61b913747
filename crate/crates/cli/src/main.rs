use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use remfrailty::baseline::{
    breslow, hazard_ratio_summary, smooth_all, write_curves_csv, SplineConfig,
};
use remfrailty::estimation::{
    build_model_data, fit_fixed, fit_frailty, FitResult, FixedOptions, FrailtyOptions, RiskPolicy,
};
use remfrailty::events::{
    parse_events, parse_rows, preprocess_email, write_events, EventHistory, PreprocessPolicy,
    TimeFormat,
};
use remfrailty::experiments::{run_study, ExperimentSpec, Scale, Study};
use remfrailty::simulate::{simulate, SimulationConfig};
use remfrailty::strata::{build_timelines, TriadicKind};
use remfrailty::{BaselineError, DataError, EstimationError, ExperimentError, SimulationError};

#[derive(Parser)]
#[command(
    name = "remfrailty",
    version,
    about = "Relational event models with sender and receiver frailties"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a history with Gaussian sender/receiver frailties.
    Simulate(SimulateArgs),
    /// Export per-dyad stratum timelines.
    Strata(StrataArgs),
    /// Fit the stratified model with or without frailties.
    Fit(FitArgs),
    /// Breslow baselines of a fitted model, smoothed per stratum.
    Baseline(BaselineArgs),
    /// Run a simulation study or the email case study.
    #[command(subcommand)]
    Experiment(ExperimentCommand),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    actors: usize,
    #[arg(long)]
    events: usize,
    #[arg(long, default_value_t = 0.9)]
    sigma_exp: f64,
    #[arg(long, default_value_t = 1.3)]
    sigma_pop: f64,
    #[arg(long, default_value_t = 1.0)]
    baseline_rate: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Event CSV output.
    #[arg(long)]
    out: PathBuf,
    /// Ground-truth frailty CSV output.
    #[arg(long)]
    frailties: Option<PathBuf>,
}

#[derive(Args)]
struct InputArgs {
    /// Event CSV with columns sender,receiver,time.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = TimeArg::Seconds)]
    time_format: TimeArg,
    /// Drop multi-recipient messages and self-loops before validation.
    #[arg(long)]
    email: bool,
    /// Where to write the preprocessing report (with --email).
    #[arg(long)]
    preprocess_report: Option<PathBuf>,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, default_value = "transitive")]
    kind: TriadicKind,
    /// `full` or `sampled:M`; chosen from the network size when omitted.
    #[arg(long)]
    risk: Option<String>,
    /// Seed for risk-set sampling.
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct StrataArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value = "transitive")]
    kind: TriadicKind,
    /// Timeline CSV output `from,to,time,label`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum TimeArg {
    Seconds,
    Iso8601,
}

impl From<TimeArg> for TimeFormat {
    fn from(t: TimeArg) -> Self {
        match t {
            TimeArg::Seconds => TimeFormat::Seconds,
            TimeArg::Iso8601 => TimeFormat::Iso8601,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Frailty,
    Fixed,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, value_enum, default_value_t = ModelArg::Frailty)]
    model_type: ModelArg,
    /// Maximize the penalized profile instead of the Laplace approximation.
    #[arg(long)]
    no_logdet: bool,
    /// Fit result JSON output.
    #[arg(long)]
    out: PathBuf,
    /// Frailty estimate CSV output `actor,b_exp_hat,b_pop_hat`.
    #[arg(long)]
    frailties: Option<PathBuf>,
}

#[derive(Args)]
struct BaselineArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Fit result JSON from `fit`.
    #[arg(long)]
    fit: PathBuf,
    /// Curve CSV output `stratum,time,cumhaz,hazard`.
    #[arg(long)]
    out: PathBuf,
    /// Hazard-ratio summary JSON output.
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Relative smoothing parameter; chosen by estimated risk when omitted.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, default_value_t = 20)]
    n_basis: usize,
}

#[derive(Subcommand)]
enum ExperimentCommand {
    Recovery(ExperimentArgs),
    Samplesize(ExperimentArgs),
    Ghost(ExperimentArgs),
    Casestudy(ExperimentArgs),
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long, value_enum, default_value_t = ScaleArg::Paper)]
    scale: ScaleArg,
    /// JSON object overriding fields of the default spec.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    kind: Option<Vec<TriadicKind>>,
    #[arg(long)]
    risk: Option<String>,
    #[arg(long)]
    sigma_exp: Option<f64>,
    #[arg(long)]
    sigma_pop: Option<f64>,
    /// Ghost study: skip the frailty fits.
    #[arg(long)]
    no_frailty_fits: bool,
    /// Case-study event file.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, value_enum)]
    time_format: Option<TimeArg>,
    /// Output directory for the report files.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScaleArg {
    Paper,
    Desk,
}

enum Failure {
    Config(String),
    Data(String),
    Failed(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Data(_) => 2,
            Failure::Failed(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Data(m) | Failure::Failed(m) => m,
        }
    }
}

impl From<DataError> for Failure {
    fn from(e: DataError) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<EstimationError> for Failure {
    fn from(e: EstimationError) -> Self {
        match e {
            EstimationError::InvalidInput(m) => Failure::Data(m),
            other => Failure::Failed(other.to_string()),
        }
    }
}

impl From<SimulationError> for Failure {
    fn from(e: SimulationError) -> Self {
        match e {
            SimulationError::InvalidConfig(m) => Failure::Config(m),
            other => Failure::Failed(other.to_string()),
        }
    }
}

impl From<BaselineError> for Failure {
    fn from(e: BaselineError) -> Self {
        match e {
            BaselineError::InvalidConfig(m) => Failure::Config(m),
            other => Failure::Failed(other.to_string()),
        }
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Data(d) => Failure::Data(d.to_string()),
            other => Failure::Config(other.to_string()),
        }
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Config(e.to_string())
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn open(path: &Path) -> Result<BufReader<File>, Failure> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")
        .and_then(|_| w.flush())
        .map_err(|e| Failure::Config(e.to_string()))
}

fn load_history(args: &InputArgs) -> Result<EventHistory, Failure> {
    let reader = open(&args.input)?;
    if !args.email {
        return Ok(parse_events(reader, args.time_format.into())?);
    }
    let rows = parse_rows(reader, args.time_format.into())?;
    let (history, report) = preprocess_email(&rows, PreprocessPolicy::default())?;
    if let Some(path) = &args.preprocess_report {
        write_json(path, &report)?;
    }
    Ok(history)
}

fn risk_policy(risk: Option<&str>, n_actors: usize, seed: u64) -> Result<RiskPolicy, Failure> {
    match risk {
        None => Ok(RiskPolicy::default_for(n_actors, seed)),
        Some(text) => match text.parse::<RiskPolicy>().map_err(Failure::Config)? {
            RiskPolicy::Sampled { m, .. } if text.matches(':').count() == 1 => {
                Ok(RiskPolicy::Sampled { m, seed })
            }
            policy => Ok(policy),
        },
    }
}

fn cmd_simulate(a: SimulateArgs) -> Result<(), Failure> {
    let cfg = SimulationConfig {
        n_actors: a.actors,
        n_events: a.events,
        sigma_exp: a.sigma_exp,
        sigma_pop: a.sigma_pop,
        baseline_rate: a.baseline_rate,
        seed: a.seed,
    };
    let (history, frailties) = simulate(&cfg, &mut cfg.rng())?;
    write_events(&history, create(&a.out)?)?;
    if let Some(path) = &a.frailties {
        frailties.write_csv(
            create(path)?,
            history.symbols(),
            ["actor", "b_exp", "b_pop"],
        )?;
    }
    Ok(())
}

fn cmd_strata(a: StrataArgs) -> Result<(), Failure> {
    let history = load_history(&a.input)?;
    build_timelines(&history, a.kind).write_csv(create(&a.out)?, &history)?;
    Ok(())
}

fn cmd_fit(a: FitArgs) -> Result<(), Failure> {
    let history = load_history(&a.input)?;
    let policy = risk_policy(a.model.risk.as_deref(), history.n_actors(), a.model.seed)?;
    let data = build_model_data(&history, a.model.kind, policy)?;
    let fit = match a.model_type {
        ModelArg::Fixed => fit_fixed(&data, &FixedOptions::default())?,
        ModelArg::Frailty => {
            let mut opts = FrailtyOptions::default();
            opts.laplace.include_logdet = !a.no_logdet;
            fit_frailty(&data, &opts)?
        }
    };
    fit.write_json(create(&a.out)?)?;
    if let Some(path) = &a.frailties {
        fit.write_frailty_csv(create(path)?, history.symbols())?;
    }
    if !fit.converged {
        return Err(Failure::Failed(
            "fit did not converge; result written".into(),
        ));
    }
    Ok(())
}

fn cmd_baseline(a: BaselineArgs) -> Result<(), Failure> {
    let history = load_history(&a.input)?;
    let fit: FitResult = serde_json::from_reader(open(&a.fit)?)?;
    let risk = a.model.risk.as_deref().or(fit.risk_policy.as_deref());
    let policy = risk_policy(risk, history.n_actors(), a.model.seed)?;
    let data = build_model_data(&history, a.model.kind, policy)?;
    if fit.b_exp.len() != data.n_actors() || fit.theta.len() != data.n_fixed() {
        return Err(Failure::Data(
            "fit result does not match the event data".into(),
        ));
    }
    let steps = breslow(&data, &fit)?;
    let cfg = SplineConfig {
        lambda: a.lambda,
        n_basis: a.n_basis,
        ..SplineConfig::default()
    };
    let curves = smooth_all(&steps.curves, &cfg)?;
    write_curves_csv(create(&a.out)?, &curves)?;
    if let Some(path) = &a.summary {
        write_json(path, &hazard_ratio_summary(&curves)?)?;
    }
    Ok(())
}

fn cmd_experiment(cmd: ExperimentCommand) -> Result<(), Failure> {
    let (study, a) = match cmd {
        ExperimentCommand::Recovery(a) => (Study::Recovery, a),
        ExperimentCommand::Samplesize(a) => (Study::SampleSize, a),
        ExperimentCommand::Ghost(a) => (Study::GhostTriadic, a),
        ExperimentCommand::Casestudy(a) => (Study::CaseStudy, a),
    };
    let scale = match a.scale {
        ScaleArg::Paper => Scale::Paper,
        ScaleArg::Desk => Scale::Desk,
    };
    let mut spec = ExperimentSpec::defaults(study, scale);
    if let Some(path) = &a.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
        let overrides: serde_json::Value = serde_json::from_str(&text)?;
        spec = spec.merged(&overrides)?;
    }
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    if let Some(r) = a.replications {
        spec.replications = r;
    }
    if let Some(kinds) = a.kind {
        spec.kinds = kinds;
    }
    if a.risk.is_some() {
        spec.risk = a.risk;
    }
    if let Some(s) = a.sigma_exp {
        spec.sigma_exp = s;
    }
    if let Some(s) = a.sigma_pop {
        spec.sigma_pop = s;
    }
    if a.no_frailty_fits {
        spec.frailty_fits = false;
    }
    if a.input.is_some() {
        spec.input = a.input;
    }
    if let Some(t) = a.time_format {
        spec.time_format = t.into();
    }
    spec.out_dir = Some(a.out.clone());
    spec.validate()?;
    let report = run_study(&spec)?;
    report.write(&a.out)?;
    let failed = report.failures().count();
    if failed > 0 {
        return Err(Failure::Failed(format!(
            "{failed} of {} records failed; report written",
            report.records.len()
        )));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Strata(a) => cmd_strata(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Baseline(a) => cmd_baseline(a),
        Command::Experiment(c) => cmd_experiment(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
