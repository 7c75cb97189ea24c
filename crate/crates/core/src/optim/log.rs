use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use super::{CmaEsConfig, CmaEsConstants, GradConfig, Progress};
use crate::domain::ControllerParams;
use crate::error::Result;

/// Append-only training CSV: `# key=value` header lines, then
/// `iteration,best_objective,wall_seconds,step_size`. Each row is flushed as
/// it is written. With timestamps off, `wall_seconds` is left empty.
pub struct TrainingLog {
    out: BufWriter<File>,
    started: Instant,
    timestamps: bool,
}

impl TrainingLog {
    pub fn create(path: &Path, header: &[(String, String)], timestamps: bool) -> Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        for (k, v) in header {
            writeln!(out, "# {k}={v}")?;
        }
        writeln!(out, "iteration,best_objective,wall_seconds,step_size")?;
        out.flush()?;
        Ok(Self {
            out,
            started: Instant::now(),
            timestamps,
        })
    }

    pub fn record(&mut self, p: &Progress) -> Result<()> {
        let wall = if self.timestamps {
            format!("{:.3}", self.started.elapsed().as_secs_f64())
        } else {
            String::new()
        };
        let step = p.step_size.map(|s| s.to_string()).unwrap_or_default();
        writeln!(self.out, "{},{},{wall},{step}", p.iteration, p.best_objective)?;
        self.out.flush()?;
        Ok(())
    }
}

/// Writes `checkpoint_NNNN.json` every `every` iterations (never if 0).
pub struct Checkpoints {
    dir: PathBuf,
    every: usize,
}

impl Checkpoints {
    pub fn new(dir: impl Into<PathBuf>, every: usize) -> Result<Self> {
        let dir = dir.into();
        if every > 0 {
            fs::create_dir_all(&dir)?;
        }
        Ok(Self { dir, every })
    }

    pub fn maybe_save(&self, p: &Progress, params: &ControllerParams) -> Result<Option<PathBuf>> {
        if self.every == 0 || (p.iteration + 1) % self.every != 0 {
            return Ok(None);
        }
        let path = self.dir.join(format!("checkpoint_{:04}.json", p.iteration + 1));
        params.save(&path)?;
        Ok(Some(path))
    }
}

fn kv(k: &str, v: impl ToString) -> (String, String) {
    (k.to_owned(), v.to_string())
}

/// Header entries for a CMA-ES run, including the derived strategy constants.
pub fn cmaes_header(config: &CmaEsConfig, dim: usize) -> Vec<(String, String)> {
    let k = CmaEsConstants::new(dim, config.population);
    vec![
        kv("optimizer", "cma"),
        kv("dimension", dim),
        kv("generations", config.generations),
        kv("population", config.population),
        kv("initial_sigma", config.initial_sigma),
        kv("seed", config.seed),
        kv("mu", k.mu),
        kv("mu_eff", k.mu_eff),
        kv("c_sigma", k.c_sigma),
        kv("d_sigma", k.d_sigma),
        kv("c_c", k.c_c),
        kv("c_1", k.c_1),
        kv("c_mu", k.c_mu),
    ]
}

pub fn numgrad_header(config: &GradConfig, dim: usize) -> Vec<(String, String)> {
    let steps: Vec<String> = config.step_sizes.iter().map(f64::to_string).collect();
    vec![
        kv("optimizer", "grad"),
        kv("dimension", dim),
        kv("iterations", config.iterations),
        kv("window_hours", config.window_hours),
        kv("tail_hours", config.tail_hours),
        kv("fd_epsilon", config.fd_epsilon),
        kv("step_sizes", steps.join(" ")),
        kv("seed", config.seed),
    ]
}
