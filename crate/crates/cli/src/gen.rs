use std::fs;
use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use gridcharge_core::{synth_scenario, write_scenario_dir, SynthConfig};

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Generator config (`key = value` lines). Defaults apply when omitted.
    pub config: Option<PathBuf>,

    /// Overrides the config's seed.
    #[arg(long)]
    pub seed: Option<u64>,

    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: &GenArgs) -> anyhow::Result<()> {
    let mut config = match &args.config {
        Some(path) => SynthConfig::load(path).with_context(|| format!("reading config {}", path.display()))?,
        None => SynthConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let out = synth_scenario(&config)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    write_scenario_dir(&args.out, &out.scenario, Some(&out.splits), Some(&out.travels))?;
    fs::write(args.out.join("config.txt"), config.to_text())?;
    log::info!(
        "wrote {} households x {} steps to {}",
        out.scenario.households.len(),
        out.scenario.n_steps(),
        args.out.display()
    );
    Ok(())
}
