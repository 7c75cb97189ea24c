use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::Args;
use gridcharge_core::controllers::ParamsFile;
use gridcharge_core::oracle::write_oracle_outputs;
use gridcharge_core::simulator::{self as sim, write_histogram_csv, write_loads_csv, write_metrics_json, Histogram};
use gridcharge_core::{
    metrics, qp_lower_bound, ControllerKind, ControllerParams, Error, Metrics, Scenario, SimResult,
};

use crate::{load_split, Baseline, Global, SplitName, Usage};

#[derive(Debug, Args)]
pub struct SimulateArgs {
    pub scenario: PathBuf,

    /// Trained parameter file.
    #[arg(long, conflicts_with = "baseline", required_unless_present = "baseline")]
    pub params: Option<PathBuf>,

    /// Baseline controller instead of a parameter file.
    #[arg(long, value_enum)]
    pub baseline: Option<Baseline>,

    #[arg(long, value_enum, default_value_t = SplitName::Test)]
    pub split: SplitName,

    /// Output directory for `loads_out.csv` and `metrics.json`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    pub scenario: PathBuf,

    /// Trained parameter files, one table row each.
    pub params: Vec<PathBuf>,

    /// Add the max/min/const charge rows.
    #[arg(long)]
    pub baselines: bool,

    /// Add the offline optimum row.
    #[arg(long)]
    pub oracle: bool,

    #[arg(long, value_enum, default_value_t = SplitName::Test)]
    pub split: SplitName,

    /// Bins of the load and load-change histograms.
    #[arg(long, default_value_t = 50)]
    pub bins: usize,

    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

/// Reads a parameter file and checks it against the scenario.
pub fn load_params(path: &Path, scenario: &Scenario) -> anyhow::Result<ControllerParams> {
    let file = ParamsFile::load(path).with_context(|| format!("reading {}", path.display()))?;
    if let Some(step) = file.step_seconds {
        if step != scenario.timebase.step_seconds {
            return Err(Error::Validation {
                file: Some(path.to_path_buf()),
                row: None,
                message: format!(
                    "controller trained on {step} s steps, scenario uses {} s steps",
                    scenario.timebase.step_seconds
                ),
            }
            .into());
        }
    }
    file.into_params()
        .with_context(|| format!("loading {}", path.display()))
}

pub fn simulate(args: &SimulateArgs, _global: &Global) -> anyhow::Result<()> {
    let scenario = load_split(&args.scenario, args.split)?;
    let params = match (&args.params, args.baseline) {
        (Some(path), None) => load_params(path, &scenario)?,
        (None, Some(b)) => ControllerParams::baseline(b.kind())?,
        _ => return Err(Usage("give exactly one of --params and --baseline".into()).into()),
    };
    let result = sim::simulate(&scenario, &params, scenario.timebase.steps_per_day())?;
    fs::create_dir_all(&args.out)?;
    write_loads_csv(&args.out.join("loads_out.csv"), &scenario.timebase, &result)?;
    write_metrics_json(&args.out.join("metrics.json"), &metrics(&result)?)?;
    Ok(())
}

struct Row {
    name: String,
    slug: String,
    result: SimResult,
    metrics: Metrics,
}

fn row(name: String, slug: String, result: SimResult) -> anyhow::Result<Row> {
    let metrics = metrics(&result)?;
    Ok(Row {
        name,
        slug,
        result,
        metrics,
    })
}

fn slugify(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect()
}

pub fn run(args: &EvalArgs, _global: &Global) -> anyhow::Result<()> {
    let scenario = load_split(&args.scenario, args.split)?;
    let warmup = scenario.timebase.steps_per_day();
    let trained = args
        .params
        .iter()
        .map(|p| load_params(p, &scenario).map(|params| (p, params)))
        .collect::<anyhow::Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    let none = ControllerParams::baseline(ControllerKind::MaxCharge)?;
    rows.push(row(
        "no charge".into(),
        "no_charge".into(),
        sim::simulate(&scenario.without_requests(), &none, warmup)?,
    )?);
    if args.baselines {
        for kind in [ControllerKind::MaxCharge, ControllerKind::MinCharge, ControllerKind::ConstCharge] {
            let name = kind.to_string();
            let result = sim::simulate(&scenario, &ControllerParams::baseline(kind)?, warmup)?;
            rows.push(row(name.clone(), slugify(&name), result)?);
        }
    }
    for (path, params) in &trained {
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let name = format!("{} ({stem})", params.label());
        let result = sim::simulate(&scenario, params, warmup)?;
        rows.push(row(name, slugify(&stem), result)?);
    }
    fs::create_dir_all(&args.out)?;
    if args.oracle {
        let oracle = qp_lower_bound(&scenario, warmup)?;
        if !oracle.converged {
            log::warn!("oracle stopped after {} iterations without converging", oracle.iterations);
        }
        write_oracle_outputs(&args.out, &scenario, &oracle)?;
        rows.push(row("oracle".into(), "oracle".into(), oracle.sim_result())?);
    }

    let mut seen = std::collections::BTreeSet::new();
    for r in &rows {
        if !seen.insert(r.slug.clone()) {
            bail!(Usage(format!("two rows would write files named {:?}", r.slug)));
        }
    }

    let mut table = String::from("controller,objective,min,p2_5,p97_5,max\n");
    for r in &rows {
        let m = &r.metrics;
        writeln!(
            table,
            "{},{},{},{},{},{}",
            r.name, m.objective_std, m.min_load, m.p2_5, m.p97_5, m.max_load
        )?;
    }
    fs::write(args.out.join("metrics.csv"), &table)?;

    let (load_lo, load_hi) = Histogram::span(rows.iter().flat_map(|r| r.result.post_warmup().iter().copied()));
    let (change_lo, change_hi) = Histogram::span(rows.iter().flat_map(|r| r.metrics.changes.iter().copied()));
    for r in &rows {
        write_loads_csv(&args.out.join(format!("loads_{}.csv", r.slug)), &scenario.timebase, &r.result)?;
        write_metrics_json(&args.out.join(format!("metrics_{}.json", r.slug)), &r.metrics)?;
        let loads = Histogram::new(r.result.post_warmup(), load_lo, load_hi, args.bins);
        write_histogram_csv(&args.out.join(format!("load_hist_{}.csv", r.slug)), &loads)?;
        let changes = r.metrics.change_histogram(change_lo, change_hi, args.bins);
        write_histogram_csv(&args.out.join(format!("change_hist_{}.csv", r.slug)), &changes)?;
    }
    print!("{table}");
    Ok(())
}
