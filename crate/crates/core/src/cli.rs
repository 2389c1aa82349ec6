//! The `dnaplan` command line. Every run writes its outputs plus a
//! `<output>.manifest.json` that `dnaplan replay` can re-execute.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::diagnostics::{classify, stepwise_gain, Thresholds};
use crate::dna::{stride_indices, DnaProfile, TimeGrid};
use crate::error::Error;
use crate::flow_sim::{ErrorTable, SimScenario, DEFAULT_DIM};
use crate::planner::{
    build_graph, plan_adaptive_with, plan_fixed, plan_unconstrained, restrict_nodes, RhoMode, Schedule,
};
use crate::predictor::{load_dataset, train, RegressorParams, SyntheticTask, TrainConfig};

pub const TOOL: &str = "dnaplan";

/// Plan denoising schedules from reconstruction-error profiles.
#[derive(Debug, Parser)]
#[command(name = TOOL, version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Measure a profile in the linear-flow simulator.
    SimExtract(SimExtractArgs),
    /// Predict a profile from a condition embedding.
    Predict(PredictArgs),
    /// Fit the embedding-to-profile regressor.
    TrainPredictor(TrainArgs),
    /// Compute an optimal schedule.
    Plan(PlanArgs),
    /// Brute-force optimum on a small grid.
    Oracle(OracleArgs),
    /// Step-wise gain report and stability label.
    Diagnose(DiagnoseArgs),
    /// Execute a schedule in the simulator.
    Rollout(RolloutArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Args)]
pub struct Pins {
    /// Only the latest grid point may start a schedule (default).
    #[arg(long, overrides_with = "no_pin_start")]
    pin_start: bool,
    /// Any grid point may start a schedule.
    #[arg(long, overrides_with = "pin_start")]
    no_pin_start: bool,
    /// Only the earliest grid point may end a schedule (default).
    #[arg(long, overrides_with = "no_pin_end")]
    pin_end: bool,
    /// Any grid point may end a schedule.
    #[arg(long, overrides_with = "pin_end")]
    no_pin_end: bool,
}

impl Pins {
    pub fn start(&self) -> bool {
        !self.no_pin_start
    }

    pub fn end(&self) -> bool {
        !self.no_pin_end
    }
}

#[derive(Debug, Args)]
pub struct SimExtractArgs {
    /// Scenario JSON; a random scenario is drawn when omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Seed for the random scenario.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Dimension of the random scenario.
    #[arg(long, default_value_t = DEFAULT_DIM)]
    dim: usize,
    /// Growth rate of the random scenario's error: `e(t)^2 = amplitude * (exp(rate t) - 1)`.
    #[arg(long, default_value_t = 3.0)]
    rate: f64,
    #[arg(long, default_value_t = 1.0)]
    amplitude: f64,
    /// Number of uniformly spaced grid points in [0, 1].
    #[arg(long, default_value_t = 100)]
    points: usize,
    /// Also write the scenario used.
    #[arg(long)]
    save_scenario: Option<PathBuf>,
    /// Output DNA JSON.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Trained parameter JSON.
    #[arg(long)]
    params: PathBuf,
    /// JSON array holding one embedding.
    #[arg(long)]
    embedding: PathBuf,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset JSON: array of `{"embedding": [...], "dna": {...}}`.
    #[arg(long, conflicts_with = "synthetic")]
    dataset: Option<PathBuf>,
    /// Train on this many pairs of the built-in synthetic task instead.
    #[arg(long)]
    synthetic: Option<usize>,
    #[arg(long, default_value_t = 40)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    learning_rate: f64,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.1)]
    dropout: f64,
    /// Fraction of pairs held out for evaluation.
    #[arg(long, default_value_t = 0.1)]
    holdout: f64,
    /// Hidden widths as `H1,H2`.
    #[arg(long, default_value = "256,256", value_parser = parse_hidden)]
    hidden: (usize, usize),
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RhoModeArg {
    Replan,
    Prefix,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    /// DNA profile (JSON or CSV).
    #[arg(long)]
    dna: PathBuf,
    /// Exact number of steps.
    #[arg(long, conflicts_with = "adaptive")]
    steps: Option<usize>,
    /// Choose the step count from the explained gain ratio.
    #[arg(long, requires = "max_steps")]
    adaptive: bool,
    #[arg(long, default_value_t = 0.99)]
    rho: f64,
    /// Largest budget considered by `--adaptive`.
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long, value_enum, default_value_t = RhoModeArg::Replan)]
    rho_mode: RhoModeArg,
    #[command(flatten)]
    pins: Pins,
    /// `stride:S` or `idx:I,J,...` (grid indices).
    #[arg(long, value_parser = parse_restrict)]
    restrict: Option<Restrict>,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long)]
    dna: PathBuf,
    #[arg(long)]
    steps: Option<usize>,
    #[command(flatten)]
    pins: Pins,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[arg(long)]
    dna: PathBuf,
    #[arg(long, default_value_t = Thresholds::default().tau_neg)]
    tau_neg: f64,
    #[arg(long, default_value_t = Thresholds::default().t_late)]
    t_late: f64,
    #[arg(long, default_value_t = Thresholds::default().n_osc)]
    n_osc: usize,
    #[arg(long, default_value_t = Thresholds::default().kappa)]
    kappa: f64,
    /// Report JSON.
    #[arg(long, short)]
    out: PathBuf,
    /// Gain CSV; defaults to the report path with a `.gains.csv` suffix.
    #[arg(long)]
    gains: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RolloutArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Schedule JSON as written by `plan`.
    #[arg(long)]
    schedule: PathBuf,
    /// Carry the realized state forward instead of restarting each step on the ideal path.
    #[arg(long)]
    no_correction: bool,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    manifest: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Restrict {
    Stride(usize),
    Indices(Vec<usize>),
}

fn parse_restrict(s: &str) -> Result<Restrict, String> {
    if let Some(rest) = s.strip_prefix("stride:") {
        let stride = rest.parse().map_err(|e| format!("bad stride {rest:?}: {e}"))?;
        return Ok(Restrict::Stride(stride));
    }
    if let Some(rest) = s.strip_prefix("idx:") {
        let idx = rest
            .split(',')
            .map(|p| p.trim().parse().map_err(|e| format!("bad index {p:?}: {e}")))
            .collect::<Result<_, _>>()?;
        return Ok(Restrict::Indices(idx));
    }
    Err(format!("expected stride:S or idx:I,J,..., got {s:?}"))
}

fn parse_hidden(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected H1,H2, got {s:?}"))?;
    let p = |x: &str| x.trim().parse::<usize>().map_err(|e| format!("bad width {x:?}: {e}"));
    Ok((p(a)?, p(b)?))
}

/// Everything needed to re-run a command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Arguments after the program name, verbatim.
    pub args: Vec<String>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    /// Resolved configuration including defaults.
    pub config: Value,
    pub seed: Option<u64>,
}

impl RunManifest {
    pub fn load(path: impl AsRef<Path>) -> crate::Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Manifest location for a primary output file.
pub fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

/// Why a command failed, mapped to an exit code.
#[derive(Debug)]
pub enum Failure {
    /// Unreadable or invalid input, or an argument outside its domain.
    Input(Error),
    Infeasible(Error),
    Other(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Input(_) => 3,
            Failure::Infeasible(_) => 4,
            Failure::Other(_) => 1,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Input(e) | Failure::Infeasible(e) => write!(f, "{e}"),
            Failure::Other(e) => write!(f, "{e:#}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Infeasible(_) => Failure::Infeasible(e),
            other => Failure::Input(other),
        }
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

fn write_output(path: &Path, contents: &str) -> Outcome<()> {
    std::fs::write(path, contents)
        .map_err(|e| Failure::Other(anyhow::Error::new(e).context(format!("writing {}", path.display()))))
}

struct Run {
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    config: Value,
    seed: Option<u64>,
}

fn load_dna(path: &Path) -> Outcome<DnaProfile> {
    DnaProfile::load(path).map_err(Failure::Input)
}

fn build(dna: &DnaProfile, pins: &Pins, restrict: Option<&Restrict>) -> Outcome<crate::planner::PlannerGraph> {
    let graph = build_graph(dna, pins.start(), pins.end())?;
    let allowed: BTreeSet<usize> = match restrict {
        None => return Ok(graph),
        Some(Restrict::Stride(s)) => {
            if *s == 0 {
                return Err(Failure::Input(Error::Domain("stride must be at least 1".to_string())));
            }
            stride_indices(dna.len(), *s).into_iter().collect()
        }
        Some(Restrict::Indices(idx)) => idx.iter().copied().collect(),
    };
    Ok(restrict_nodes(&graph, &allowed)?)
}

fn restrict_label(r: Option<&Restrict>) -> Value {
    match r {
        None => Value::Null,
        Some(Restrict::Stride(s)) => json!({ "stride": s }),
        Some(Restrict::Indices(i)) => json!({ "indices": i }),
    }
}

fn sim_extract(a: &SimExtractArgs) -> Outcome<Run> {
    let grid = TimeGrid::uniform(a.points)?;
    let (scenario, mut inputs) = match &a.scenario {
        Some(path) => (SimScenario::load(path).map_err(Failure::Input)?, vec![path.clone()]),
        None => {
            if !(a.rate > 0.0 && a.amplitude > 0.0) {
                return Err(Failure::Input(Error::Domain("rate and amplitude must be positive".to_string())));
            }
            let table = ErrorTable::from_fn(&grid, |t| (a.amplitude * (a.rate * t).exp_m1()).sqrt())?;
            (SimScenario::random(a.dim, table, a.seed)?, Vec::new())
        }
    };
    let dna = scenario.extract_dna(&grid)?;
    write_output(&a.out, &dna.to_json()?)?;
    let mut outputs = vec![a.out.clone()];
    if let Some(path) = &a.save_scenario {
        write_output(path, &scenario.to_json()?)?;
        outputs.push(path.clone());
    }
    inputs.sort();
    let random = a.scenario.is_none();
    Ok(Run {
        inputs,
        outputs,
        config: json!({
            "scenario": a.scenario,
            "dim": if random { Some(a.dim) } else { None },
            "rate": if random { Some(a.rate) } else { None },
            "amplitude": if random { Some(a.amplitude) } else { None },
            "points": a.points,
        }),
        seed: random.then_some(a.seed),
    })
}

fn predict(a: &PredictArgs) -> Outcome<Run> {
    let params = RegressorParams::load(&a.params).map_err(Failure::Input)?;
    let text = std::fs::read_to_string(&a.embedding).map_err(|e| Failure::Input(e.into()))?;
    let embedding: Vec<f64> = serde_json::from_str(&text).map_err(|e| Failure::Input(e.into()))?;
    let dna = params.predict_dna(&embedding)?;
    write_output(&a.out, &dna.to_json()?)?;
    Ok(Run {
        inputs: vec![a.params.clone(), a.embedding.clone()],
        outputs: vec![a.out.clone()],
        config: json!({ "widths": params.widths() }),
        seed: None,
    })
}

fn train_predictor(a: &TrainArgs) -> Outcome<Run> {
    let (data, inputs) = match (&a.dataset, a.synthetic) {
        (Some(path), _) => (load_dataset(path).map_err(Failure::Input)?, vec![path.clone()]),
        (None, Some(n)) => (SyntheticTask::standard(a.seed).generate(n, a.seed.wrapping_add(1))?, Vec::new()),
        (None, None) => {
            return Err(Failure::Input(Error::Domain("one of --dataset or --synthetic is required".to_string())))
        }
    };
    let cfg = TrainConfig {
        learning_rate: a.learning_rate,
        batch_size: a.batch_size,
        epochs: a.epochs,
        dropout: a.dropout,
        seed: a.seed,
        holdout_fraction: a.holdout,
        hidden: a.hidden,
        ..TrainConfig::default()
    };
    let outcome = train(&data, &cfg)?;
    write_output(&a.out, &outcome.params.to_json()?)?;
    match outcome.holdout_mean_cosine {
        Some(c) => println!("held-out mean cosine {c:.4} over {} pairs", outcome.holdout_size),
        None => println!("training mean cosine {:.4} (no holdout)", outcome.train_mean_cosine),
    }
    Ok(Run {
        inputs,
        outputs: vec![a.out.clone()],
        config: json!({ "train": cfg, "synthetic_pairs": a.synthetic }),
        seed: Some(a.seed),
    })
}

fn plan(a: &PlanArgs) -> Outcome<Run> {
    let dna = load_dna(&a.dna)?;
    let graph = build(&dna, &a.pins, a.restrict.as_ref())?;
    let mode = match a.rho_mode {
        RhoModeArg::Replan => RhoMode::Replan,
        RhoModeArg::Prefix => RhoMode::Prefix,
    };
    let (schedule, method): (Schedule, &str) = if a.adaptive {
        let k_max = a.max_steps.expect("clap enforces --max-steps");
        (plan_adaptive_with(&graph, a.rho, k_max, mode)?.schedule, "adaptive")
    } else if let Some(k) = a.steps {
        (plan_fixed(&graph, k)?, "fixed")
    } else {
        (plan_unconstrained(&graph)?, "unconstrained")
    };
    write_output(&a.out, &schedule.to_json()?)?;
    println!("{} steps, total cost {}", schedule.steps, crate::fmt::sig17(schedule.total_cost));
    Ok(Run {
        inputs: vec![a.dna.clone()],
        outputs: vec![a.out.clone()],
        config: json!({
            "method": method,
            "steps": a.steps,
            "rho": if a.adaptive { Some(a.rho) } else { None },
            "max_steps": a.max_steps,
            "rho_mode": if a.adaptive { Some(mode) } else { None },
            "pin_start": a.pins.start(),
            "pin_end": a.pins.end(),
            "restrict": restrict_label(a.restrict.as_ref()),
        }),
        seed: None,
    })
}

fn oracle(a: &OracleArgs) -> Outcome<Run> {
    let dna = load_dna(&a.dna)?;
    let result = crate::oracle::enumerate_best(&dna, a.steps, a.pins.start(), a.pins.end())?;
    write_output(&a.out, &crate::fmt::to_stable_json(&result.to_report(&dna))?)?;
    Ok(Run {
        inputs: vec![a.dna.clone()],
        outputs: vec![a.out.clone()],
        config: json!({ "steps": a.steps, "pin_start": a.pins.start(), "pin_end": a.pins.end() }),
        seed: None,
    })
}

fn diagnose(a: &DiagnoseArgs) -> Outcome<Run> {
    let dna = load_dna(&a.dna)?;
    let cfg = Thresholds { tau_neg: a.tau_neg, t_late: a.t_late, n_osc: a.n_osc, kappa: a.kappa, ..Thresholds::default() };
    let series = stepwise_gain(&dna)?;
    let report = classify(&series, &cfg);
    let gains_path = a.gains.clone().unwrap_or_else(|| {
        let mut p = a.out.as_os_str().to_owned();
        p.push(".gains.csv");
        PathBuf::from(p)
    });
    write_output(&a.out, &report.to_json()?)?;
    let mut csv = Vec::new();
    series.write_csv(&mut csv)?;
    write_output(&gains_path, &String::from_utf8(csv).expect("ASCII output"))?;
    Ok(Run {
        inputs: vec![a.dna.clone()],
        outputs: vec![a.out.clone(), gains_path],
        config: json!({ "thresholds": cfg }),
        seed: None,
    })
}

fn rollout(a: &RolloutArgs) -> Outcome<Run> {
    let scenario = SimScenario::load(&a.scenario).map_err(Failure::Input)?;
    let text = std::fs::read_to_string(&a.schedule).map_err(|e| Failure::Input(e.into()))?;
    let schedule = Schedule::from_json(&text).map_err(Failure::Input)?;
    let report = scenario.rollout(&schedule.timesteps, !a.no_correction)?;
    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;
    write_output(&a.out, &String::from_utf8(csv).expect("ASCII output"))?;
    Ok(Run {
        inputs: vec![a.scenario.clone(), a.schedule.clone()],
        outputs: vec![a.out.clone()],
        config: json!({ "correction": !a.no_correction }),
        seed: None,
    })
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::SimExtract(_) => "sim-extract",
        Command::Predict(_) => "predict",
        Command::TrainPredictor(_) => "train-predictor",
        Command::Plan(_) => "plan",
        Command::Oracle(_) => "oracle",
        Command::Diagnose(_) => "diagnose",
        Command::Rollout(_) => "rollout",
        Command::Replay(_) => "replay",
    }
}

/// Runs a parsed command. `args` are the raw arguments, kept for the manifest.
pub fn execute(cli: &Cli, args: &[String]) -> Outcome<()> {
    let run = match &cli.command {
        Command::SimExtract(a) => sim_extract(a)?,
        Command::Predict(a) => predict(a)?,
        Command::TrainPredictor(a) => train_predictor(a)?,
        Command::Plan(a) => plan(a)?,
        Command::Oracle(a) => oracle(a)?,
        Command::Diagnose(a) => diagnose(a)?,
        Command::Rollout(a) => rollout(a)?,
        Command::Replay(a) => return replay(&a.manifest),
    };
    let manifest = RunManifest {
        tool: TOOL.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        command: command_name(&cli.command).to_string(),
        args: args.to_vec(),
        inputs: run.inputs,
        outputs: run.outputs.clone(),
        config: run.config,
        seed: run.seed,
    };
    write_output(&manifest_path(&run.outputs[0]), &crate::fmt::to_stable_json(&manifest)?)
}

fn replay(path: &Path) -> Outcome<()> {
    let manifest = RunManifest::load(path).map_err(Failure::Input)?;
    if manifest.tool != TOOL {
        return Err(Failure::Input(Error::Parse(format!("manifest was written by {:?}", manifest.tool))));
    }
    if manifest.command == "replay" {
        return Err(Failure::Input(Error::Parse("a manifest cannot replay a replay".to_string())));
    }
    let cli = Cli::try_parse_from(std::iter::once(TOOL.to_string()).chain(manifest.args.iter().cloned()))
        .map_err(|e| Failure::Input(Error::Parse(format!("manifest arguments do not parse: {e}"))))?;
    execute(&cli, &manifest.args)
}

/// Parses `argv` (including the program name), runs it, reports failures on
/// standard error and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let args: Vec<String> = argv.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match execute(&cli, &args) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {f}");
            f.exit_code()
        }
    }
}
