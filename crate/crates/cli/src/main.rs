mod eval;
mod gen;
mod train;

use std::process::ExitCode;

use anyhow::Context;
use clap::{ArgAction, Parser, Subcommand, ValueEnum};
use gridcharge_core::{ControllerKind, Error, InputMode, Scenario, Splits};

/// Decentralized EV charging: data generation, training and evaluation.
#[derive(Debug, Parser)]
#[command(name = "gridcharge", version)]
struct Cli {
    /// Worker threads for parallel objective evaluations.
    #[arg(long, global = true, env = "GRIDCHARGE_WORKERS", default_value_t = 1)]
    workers: usize,

    /// Leave wall-clock times out of training logs and diagnostics.
    #[arg(long, global = true)]
    no_timestamps: bool,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic scenario directory.
    Gen(gen::GenArgs),
    /// Train a controller on the train split and tune its filter on the tune split.
    Train(train::TrainArgs),
    /// Run one controller over a scenario split and export its loads.
    Simulate(eval::SimulateArgs),
    /// Compare controllers on the test split.
    Eval(eval::EvalArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitName {
    Train,
    Tune,
    Test,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Baseline {
    Max,
    Min,
    Const,
}

impl Baseline {
    pub fn kind(self) -> ControllerKind {
        match self {
            Baseline::Max => ControllerKind::MaxCharge,
            Baseline::Min => ControllerKind::MinCharge,
            Baseline::Const => ControllerKind::ConstCharge,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Inputs {
    A,
    H,
}

impl From<Inputs> for InputMode {
    fn from(i: Inputs) -> Self {
        match i {
            Inputs::A => InputMode::All,
            Inputs::H => InputMode::Household,
        }
    }
}

pub struct Global {
    pub workers: usize,
    pub timestamps: bool,
}

/// Loads a scenario and restricts it to `split`.
pub fn load_split(dir: &std::path::Path, split: SplitName) -> anyhow::Result<Scenario> {
    let (scenario, splits) =
        gridcharge_core::read_scenario_dir(dir).with_context(|| format!("reading scenario {}", dir.display()))?;
    if split == SplitName::All {
        return Ok(scenario);
    }
    let splits: Splits = splits.with_context(|| format!("{} has no split manifest", dir.display()))?;
    let name = match split {
        SplitName::Train => "train",
        SplitName::Tune => "tune",
        SplitName::Test => "test",
        SplitName::All => unreachable!(),
    };
    let range = splits.get(name).expect("named split");
    Ok(scenario.slice(range)?)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let mut logger = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level));
    if cli.no_timestamps {
        logger.format_timestamp(None);
    }
    logger.init();

    let global = Global {
        workers: cli.workers.max(1),
        timestamps: !cli.no_timestamps,
    };
    let result = match cli.command {
        Command::Gen(args) => gen::run(&args),
        Command::Train(args) => train::run(&args, &global),
        Command::Simulate(args) => eval::simulate(&args, &global),
        Command::Eval(args) => eval::run(&args, &global),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// 2 usage, 3 data validation, 4 numerical failure.
fn exit_code(e: &anyhow::Error) -> u8 {
    if e.chain().any(|c| c.is::<Usage>()) {
        return 2;
    }
    match e.chain().find_map(|c| c.downcast_ref::<Error>()) {
        Some(Error::Config(_)) => 2,
        Some(Error::Numerical(_)) => 4,
        _ => 3,
    }
}

/// Flag combinations clap cannot express.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}
