//! Batch front end: controllability sweeps, trajectory tracking, open-loop
//! simulation, geometry reports and a clamp demonstration.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod output;
mod plots;
mod profile;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mecanum_reconfig::controllability::{Analysis, Statistic};
use mecanum_reconfig::params::{DEFAULT_JSON, DEPLOYMENT_FIT_JSON};
use mecanum_reconfig::{InputMode, ModelError, RobotParams};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Failed(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Failed(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::NearSingularDynamics(_)
            | ModelError::Diverged { .. }
            | ModelError::ScalingNotConverged(_) => CliError::Failed(e.to_string()),
            ModelError::Io(_) => CliError::Io(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "mecanum-reconfig", version, about = "Reconfigurable mecanum robot: analysis, planning and simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Controllability metric over a grid of joint angles.
    Sweep(SweepArgs),
    /// Plan, time-scale and track a waypoint scenario.
    Track(TrackArgs),
    /// Open-loop simulation of an input profile.
    Simulate(SimulateArgs),
    /// Footprint width, CoM and counterbalance mass at one configuration.
    Geometry(GeometryArgs),
    /// Velocity clamp on random commands.
    ClampDemo(ClampArgs),
}

#[derive(Debug, Args)]
struct ParamsArg {
    /// Parameter file, or `default` / `deployment-fit` for the bundled sets.
    #[arg(long, default_value = "default")]
    params: String,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    params: ParamsArg,
    #[arg(long, default_value = "gsi")]
    pub analysis: Analysis,
    #[arg(long, default_value = "max")]
    pub statistic: Statistic,
    /// Grid step (deg).
    #[arg(long, default_value_t = 5.0)]
    pub grid_deg: f64,
    /// Half-width of the grid (deg). Defaults to 180, or the joint limit for kcm.
    #[arg(long)]
    pub limit_deg: Option<f64>,
    #[arg(long, default_value_t = 8)]
    pub workers: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrackArgs {
    #[command(flatten)]
    params: ParamsArg,
    /// Scenario file, or a bundled name (`square`, `square-halved-limits`).
    #[arg(long)]
    pub scenario: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    params: ParamsArg,
    /// Profile file, or a bundled name (`static`, `coast`, `wheel-pulse`).
    #[arg(long)]
    pub profile: String,
    /// Overrides the profile's input mode.
    #[arg(long)]
    pub mode: Option<Mode>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum Mode {
    Velocity,
    Torque,
}

impl From<Mode> for InputMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Velocity => InputMode::Velocity,
            Mode::Torque => InputMode::Torque,
        }
    }
}

#[derive(Debug, Args)]
pub struct GeometryArgs {
    #[command(flatten)]
    params: ParamsArg,
    /// deg
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub phi1: f64,
    /// deg
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub phi2: f64,
    /// Also write geometry.json and a manifest here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ClampArgs {
    #[command(flatten)]
    params: ParamsArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1000)]
    pub cases: usize,
    #[arg(long)]
    pub out: PathBuf,
}

/// Parameters plus the exact bytes they came from, for hashing.
pub struct LoadedParams {
    pub params: RobotParams,
    pub source: String,
    pub bytes: Vec<u8>,
}

fn load_params(arg: &ParamsArg) -> Result<LoadedParams, CliError> {
    let text = match arg.params.as_str() {
        "default" => DEFAULT_JSON.to_string(),
        "deployment-fit" => DEPLOYMENT_FIT_JSON.to_string(),
        path => std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read parameter file {path}: {e}")))?,
    };
    let params = RobotParams::from_json_str(&text)
        .map_err(|e| CliError::Usage(format!("{}: {e}", arg.params)))?;
    Ok(LoadedParams { params, source: arg.params.clone(), bytes: text.into_bytes() })
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Sweep(a) => commands::sweep(&a, load_params(&a.params)?),
        Command::Track(a) => commands::track(&a, load_params(&a.params)?),
        Command::Simulate(a) => commands::simulate(&a, load_params(&a.params)?),
        Command::Geometry(a) => commands::geometry(&a, load_params(&a.params)?),
        Command::ClampDemo(a) => commands::clamp_demo(&a, load_params(&a.params)?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
