//! Trainers for the controller weights and the separate filter search.

mod beta;
mod cmaes;
mod log;
mod numgrad;

pub use beta::{tune_beta, BetaSearch, BETA_GRID};
pub use cmaes::{
    cmaes_minimize, cmaes_minimize_with, CmaEsConfig, CmaEsConstants, CmaEsResult, CmaEsState, GenerationRecord,
};
pub use log::{cmaes_header, numgrad_header, Checkpoints, TrainingLog};
pub use numgrad::{
    forward_difference_gradient, numgrad_minimize, GradConfig, GradResult, IterationRecord, WindowedObjective,
};

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::controllers::{EsnReservoir, EsnReservoirSpec};
use crate::domain::{ControllerKind, ControllerParams, InputMode, Scenario};
use crate::error::{Error, Result};
use crate::simulator::objective;

/// Size of the thread pool used for independent objective evaluations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Workers(pub usize);

impl Workers {
    pub fn pool(self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.0.max(1))
            .build()
            .map_err(|e| Error::Config(format!("cannot start {} workers: {e}", self.0)))
    }
}

/// One row of training progress, shared by both trainers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Progress {
    pub iteration: usize,
    pub best_objective: f64,
    /// Accepted gradient step size; `None` for CMA-ES and rejected steps.
    pub step_size: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ControllerParams,
    pub initial_objective: f64,
    pub final_objective: f64,
}

/// Full-scenario objective of a parameter template with the trainable
/// vector replaced. Failed or non-finite evaluations score `+inf`.
pub struct ScenarioObjective<'a> {
    pub scenario: &'a Scenario,
    pub template: ControllerParams,
    pub warmup_steps: usize,
}

impl<'a> ScenarioObjective<'a> {
    pub fn new(scenario: &'a Scenario, template: ControllerParams, warmup_steps: usize) -> Self {
        Self {
            scenario,
            template,
            warmup_steps,
        }
    }

    pub fn evaluate(&self, theta: &[f64]) -> Result<f64> {
        objective(self.scenario, &self.template.with_trainable(theta)?, self.warmup_steps)
    }

    pub fn value(&self, theta: &[f64]) -> f64 {
        finite_or_inf(self.evaluate(theta))
    }
}

fn finite_or_inf(r: Result<f64>) -> f64 {
    match r {
        Ok(v) if v.is_finite() => v,
        _ => f64::INFINITY,
    }
}

/// Random 72 h windows of a training scenario for gradient estimates, with
/// full-scenario evaluation for step-size probes.
pub struct ScenarioWindows<'a> {
    pub full: ScenarioObjective<'a>,
    pub window_steps: usize,
    pub tail_steps: usize,
}

impl<'a> ScenarioWindows<'a> {
    pub fn new(full: ScenarioObjective<'a>, config: &GradConfig) -> Result<Self> {
        let steps_per_hour = full.scenario.timebase.steps_per_hour();
        let window_steps = config.window_hours * steps_per_hour;
        let tail_steps = config.tail_hours * steps_per_hour;
        if window_steps > full.scenario.n_steps() {
            return Err(Error::Config(format!(
                "gradient window of {} h is longer than the training scenario ({} steps)",
                config.window_hours,
                full.scenario.n_steps()
            )));
        }
        Ok(Self {
            full,
            window_steps,
            tail_steps,
        })
    }
}

impl WindowedObjective for ScenarioWindows<'_> {
    type Window = Scenario;

    fn sample_window(&self, rng: &mut ChaCha8Rng) -> Result<Scenario> {
        let start = rng.random_range(0..=self.full.scenario.n_steps() - self.window_steps);
        self.full.scenario.slice(start..start + self.window_steps)
    }

    fn window_value(&self, window: &Scenario, theta: &[f64]) -> f64 {
        let warmup = self.window_steps - self.tail_steps;
        finite_or_inf(
            self.full
                .template
                .with_trainable(theta)
                .and_then(|p| objective(window, &p, warmup)),
        )
    }

    fn full_value(&self, theta: &[f64]) -> f64 {
        self.full.value(theta)
    }
}

/// Randomly initialised NN or ESN controller. Weights are drawn from stream 1
/// of `seed`; an ESN reservoir uses `seed` itself.
pub fn initial_params(kind: ControllerKind, mode: InputMode, seed: u64) -> Result<ControllerParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    match kind {
        ControllerKind::Nn => Ok(ControllerParams::random_nn(mode, &mut rng)),
        ControllerKind::Esn => {
            let spec = EsnReservoirSpec {
                seed,
                ..Default::default()
            };
            let reservoir = Arc::new(EsnReservoir::build(spec, mode)?);
            Ok(ControllerParams::random_esn(reservoir, &mut rng))
        }
        other => Err(Error::Config(format!("{other} has no trainable parameters"))),
    }
}

/// Trains the controller weights with CMA-ES at `beta = 0`, starting from
/// `init`. Keeps `init` if no candidate beats it.
pub fn train_cmaes<O>(
    scenario: &Scenario,
    init: &ControllerParams,
    warmup_steps: usize,
    config: &CmaEsConfig,
    mut observe: O,
) -> Result<TrainOutcome>
where
    O: FnMut(&Progress, &ControllerParams) -> Result<()>,
{
    let obj = ScenarioObjective::new(scenario, init.clone().with_beta(0.0)?, warmup_steps);
    let x0 = obj.template.trainable();
    if x0.is_empty() {
        return Err(Error::Config(format!("{} has no trainable parameters", init.kind())));
    }
    let initial = obj.evaluate(&x0)?;
    let result = cmaes_minimize_with(
        |x| obj.value(x),
        &x0,
        config,
        |rec, best| {
            let progress = Progress {
                iteration: rec.generation,
                best_objective: rec.best_so_far.min(initial),
                step_size: None,
            };
            let current = if rec.best_so_far < initial { best } else { &x0 };
            observe(&progress, &obj.template.with_trainable(current)?)
        },
    )?;
    finish(&obj, x0, initial, result.best, result.best_value)
}

/// Trains the controller weights with windowed forward-difference gradients
/// at `beta = 0`.
pub fn train_numgrad<O>(
    scenario: &Scenario,
    init: &ControllerParams,
    warmup_steps: usize,
    config: &GradConfig,
    mut observe: O,
) -> Result<TrainOutcome>
where
    O: FnMut(&Progress, &ControllerParams) -> Result<()>,
{
    let obj = ScenarioObjective::new(scenario, init.clone().with_beta(0.0)?, warmup_steps);
    let x0 = obj.template.trainable();
    if x0.is_empty() {
        return Err(Error::Config(format!("{} has no trainable parameters", init.kind())));
    }
    let initial = obj.evaluate(&x0)?;
    let windows = ScenarioWindows::new(obj, config)?;
    let result = numgrad_minimize(&windows, &x0, config, |rec, theta| {
        let progress = Progress {
            iteration: rec.iteration,
            best_objective: rec.objective,
            step_size: rec.step_size,
        };
        observe(&progress, &windows.full.template.with_trainable(theta)?)
    })?;
    finish(&windows.full, x0, initial, result.best, result.best_value)
}

fn finish(obj: &ScenarioObjective, x0: Vec<f64>, initial: f64, best: Vec<f64>, best_value: f64) -> Result<TrainOutcome> {
    let (theta, value) = if best_value < initial { (best, best_value) } else { (x0, initial) };
    Ok(TrainOutcome {
        params: obj.template.with_trainable(&theta)?,
        initial_objective: initial,
        final_objective: value,
    })
}
