//! `otbot`: simulate, identify and control the robot from the command line.

mod check;
mod control;
mod failure;
mod identify;
mod output;
mod scenario;
mod simulate;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use failure::{CliResult, Failure};

#[derive(Parser, Debug)]
#[command(
    name = "otbot",
    version,
    about = "Simulation, identification and tracking control of a pivot-offset omnidirectional robot"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Drive the robot with constant torques and record the trajectory.
    Simulate(SimulateArgs),
    /// Recover robot parameters from synthetic sensor records.
    Identify(IdentifyArgs),
    /// Run a computed-torque tracking scenario.
    Control(ControlArgs),
    /// Interval check of the controller torques against motor limits.
    CheckTorques(CheckArgs),
    /// List the bundled scenarios.
    Scenarios,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Bundled scenario name or scenario file.
    #[arg(long)]
    pub scenario: Option<String>,
    /// Robot parameter file.
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Motor torques `tau_r,tau_l,tau_p` [N m].
    #[arg(long, allow_hyphen_values = true)]
    pub torques: Option<String>,
    /// Duration [s].
    #[arg(long)]
    pub duration: Option<f64>,
    /// Control and output period [s].
    #[arg(long)]
    pub dt: Option<f64>,
    /// Noise seed for recorded sensors.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub rtol: Option<f64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Step {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
    #[value(name = "3")]
    Three,
    All,
}

#[derive(Args, Debug)]
pub struct IdentifyArgs {
    /// Last step to run; earlier steps always run first.
    #[arg(long, value_enum, default_value = "all")]
    pub step: Step,
    /// Parameters of the robot that generates the data.
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Starting values, sections [step1], [step2], [step3].
    #[arg(long)]
    pub guess: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also sweep the platform-step guesses over growing deviations.
    #[arg(long)]
    pub sweep: bool,
    /// Seeds per sweep deviation.
    #[arg(long, default_value_t = 10)]
    pub sweep_seeds: u64,
    /// Cap on worker threads.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long, default_value = "runs/identify")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ControlArgs {
    /// corridor, plan or figure8, or a scenario file.
    #[arg(long)]
    pub scenario: String,
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Gain file with settling times.
    #[arg(long)]
    pub gains: Option<PathBuf>,
    /// Plan CSV for the plan scenario; generated when absent.
    #[arg(long)]
    pub plan: Option<PathBuf>,
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CheckArgs {
    /// Scenario whose reference is checked.
    #[arg(long, default_value = "corridor")]
    pub scenario: String,
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long)]
    pub gains: Option<PathBuf>,
    #[arg(long)]
    pub plan: Option<PathBuf>,
    /// Symmetric motor limit [N m].
    #[arg(long, default_value_t = otbot::control::feasibility::DEFAULT_TORQUE_LIMIT)]
    pub limit: f64,
    /// Half-width of the position error box, every axis.
    #[arg(long, default_value_t = 0.01)]
    pub ep: f64,
    /// Half-width of the velocity error box, every axis.
    #[arg(long, default_value_t = 0.05)]
    pub ev: f64,
    /// Grid period [s].
    #[arg(long, default_value_t = 0.05)]
    pub dt: f64,
    /// Monte-Carlo samples per grid time checked against the intervals.
    #[arg(long, default_value_t = 0)]
    pub samples: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Seed precedence: flag, then `OTBOT_SEED`, then the configured value.
pub fn seed_override(flag: Option<u64>, configured: u64) -> CliResult<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var("OTBOT_SEED") {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Failure::usage(format!("OTBOT_SEED=`{v}` is not a non-negative integer"))),
        Err(_) => Ok(configured),
    }
}

fn list_scenarios() -> CliResult<()> {
    for (name, _) in scenario::BUNDLED {
        let cfg = scenario::ScenarioConfig::resolve(name)?;
        println!("{name:<20} {}", cfg.description);
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate(a) => simulate::run(&a),
        Command::Identify(a) => otbot::par::with_jobs(a.jobs, || identify::run(&a)),
        Command::Control(a) => otbot::par::with_jobs(a.jobs, || control::run(&a)),
        Command::CheckTorques(a) => check::run(&a),
        Command::Scenarios => list_scenarios(),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("bad arguments");
            eprintln!("{}", Failure::usage(first.trim_start_matches("error: ")));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{f}");
            ExitCode::from(f.exit_code())
        }
    }
}
