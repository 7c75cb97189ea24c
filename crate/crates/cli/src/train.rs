use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, ValueEnum};
use gridcharge_core::controllers::ParamsFile;
use gridcharge_core::optim::{
    cmaes_header, initial_params, numgrad_header, train_cmaes, train_numgrad, Checkpoints, Progress, TrainingLog,
};
use gridcharge_core::{tune_beta, CmaEsConfig, ControllerKind, ControllerParams, GradConfig};

use crate::{load_split, Global, Inputs, SplitName, Usage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Model {
    Nn,
    Esn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Optimizer {
    Cma,
    Grad,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    pub scenario: PathBuf,

    #[arg(long, value_enum, default_value_t = Model::Nn)]
    pub model: Model,

    #[arg(long, value_enum, default_value_t = Inputs::A)]
    pub inputs: Inputs,

    #[arg(long, value_enum, default_value_t = Optimizer::Cma)]
    pub optimizer: Optimizer,

    /// Seeds the initial weights, the ESN reservoir and the optimizer.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Trained parameter file (JSON).
    #[arg(long)]
    pub out: PathBuf,

    /// Training log; defaults to `<out stem>.log.csv` next to `--out`.
    #[arg(long)]
    pub log: Option<PathBuf>,

    /// CMA-ES generations.
    #[arg(long, default_value_t = 250)]
    pub generations: usize,

    /// CMA-ES population size.
    #[arg(long, default_value_t = 16)]
    pub population: usize,

    /// CMA-ES initial step size.
    #[arg(long, default_value_t = 0.3)]
    pub sigma: f64,

    /// Gradient iterations.
    #[arg(long, default_value_t = 250)]
    pub iterations: usize,

    /// Save the current best parameters every N iterations (0 disables).
    #[arg(long, default_value_t = 0)]
    pub checkpoint_every: usize,

    /// Checkpoint directory; defaults to `<out stem>_checkpoints`.
    #[arg(long)]
    pub checkpoint_dir: Option<PathBuf>,
}

fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}{suffix}"))
}

pub fn run(args: &TrainArgs, global: &Global) -> anyhow::Result<()> {
    if args.checkpoint_dir.is_some() && args.checkpoint_every == 0 {
        return Err(Usage("--checkpoint-dir needs --checkpoint-every".into()).into());
    }
    let train = load_split(&args.scenario, SplitName::Train)?;
    let tune = load_split(&args.scenario, SplitName::Tune)?;
    let warmup = train.timebase.steps_per_day();

    let kind = match args.model {
        Model::Nn => ControllerKind::Nn,
        Model::Esn => ControllerKind::Esn,
    };
    let init = initial_params(kind, args.inputs.into(), args.seed)?;
    let dim = init.n_trainable();

    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    let log_path = args.log.clone().unwrap_or_else(|| sibling(&args.out, ".log.csv"));
    let checkpoints = Checkpoints::new(
        args.checkpoint_dir
            .clone()
            .unwrap_or_else(|| sibling(&args.out, "_checkpoints")),
        args.checkpoint_every,
    )?;

    let observe = |log: &mut TrainingLog, p: &Progress, params: &ControllerParams| {
        log.record(p)?;
        checkpoints.maybe_save(p, params)?;
        Ok(())
    };
    let outcome = match args.optimizer {
        Optimizer::Cma => {
            let config = CmaEsConfig {
                generations: args.generations,
                population: args.population,
                initial_sigma: args.sigma,
                seed: args.seed,
                workers: global.workers,
            };
            let mut log = TrainingLog::create(&log_path, &cmaes_header(&config, dim), global.timestamps)?;
            train_cmaes(&train, &init, warmup, &config, |p, params| observe(&mut log, p, params))?
        }
        Optimizer::Grad => {
            let config = GradConfig {
                iterations: args.iterations,
                seed: args.seed,
                workers: global.workers,
                ..Default::default()
            };
            let mut log = TrainingLog::create(&log_path, &numgrad_header(&config, dim), global.timestamps)?;
            train_numgrad(&train, &init, warmup, &config, |p, params| observe(&mut log, p, params))?
        }
    };
    log::info!(
        "train objective {:.4} -> {:.4}",
        outcome.initial_objective,
        outcome.final_objective
    );

    let (params, search) = tune_beta(&tune, &outcome.params, warmup, global.workers)?;
    log::info!("beta {} (tune objective {:?})", search.beta, search.evaluations);

    let mut file = ParamsFile::from_params(&params);
    file.step_seconds = Some(train.timebase.step_seconds);
    file.save(&args.out)
        .with_context(|| format!("writing {}", args.out.display()))?;
    Ok(())
}
