//! Stochastic numerical-gradient descent on random simulation windows with
//! step-size probing on the full objective.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Workers;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GradConfig {
    pub iterations: usize,
    pub window_hours: usize,
    pub tail_hours: usize,
    pub fd_epsilon: f64,
    pub step_sizes: Vec<f64>,
    pub seed: u64,
    pub workers: usize,
}

impl Default for GradConfig {
    fn default() -> Self {
        Self {
            iterations: 250,
            window_hours: 72,
            tail_hours: 48,
            fd_epsilon: 1e-4,
            step_sizes: vec![1e-4, 5e-4, 1e-3, 5e-3, 1e-2, 5e-2, 0.1, 0.5],
            seed: 0,
            workers: 1,
        }
    }
}

impl GradConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("gradient training needs at least one iteration".into()));
        }
        if self.step_sizes.is_empty() || self.step_sizes.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Config("step sizes must be a non-empty list of positive numbers".into()));
        }
        if self.step_sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("step sizes must be strictly ascending".into()));
        }
        if self.tail_hours == 0 || self.tail_hours >= self.window_hours {
            return Err(Error::Config(format!(
                "objective tail ({} h) must be positive and shorter than the window ({} h)",
                self.tail_hours, self.window_hours
            )));
        }
        if !(self.fd_epsilon.is_finite() && self.fd_epsilon > 0.0) {
            return Err(Error::Config(format!("fd epsilon {} must be positive", self.fd_epsilon)));
        }
        Ok(())
    }
}

/// A stochastic objective: cheap values on sampled windows for gradients and
/// an exact full value for accepting steps.
pub trait WindowedObjective: Sync {
    type Window: Sync;

    fn sample_window(&self, rng: &mut ChaCha8Rng) -> Result<Self::Window>;
    fn window_value(&self, window: &Self::Window, theta: &[f64]) -> f64;
    fn full_value(&self, theta: &[f64]) -> f64;
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Full objective of the current parameters after this iteration.
    pub objective: f64,
    /// Step size taken, if the step was accepted.
    pub step_size: Option<f64>,
    /// Step size with the lowest probe value, accepted or not.
    pub best_probe: Option<f64>,
    pub skipped: bool,
}

#[derive(Debug, Clone)]
pub struct GradResult {
    pub best: Vec<f64>,
    pub best_value: f64,
    pub history: Vec<IterationRecord>,
}

/// `(f(theta + eps e_i) - f(theta)) / eps` for every coordinate; `base` is
/// `f(theta)`. Non-finite differences count as zero.
pub fn forward_difference_gradient<F>(f: F, theta: &[f64], base: f64, eps: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    (0..theta.len())
        .into_par_iter()
        .map(|i| {
            let mut x = theta.to_vec();
            x[i] += eps;
            let d = (f(&x) - base) / eps;
            if d.is_finite() {
                d
            } else {
                0.0
            }
        })
        .collect()
}

pub fn numgrad_minimize<W, O>(objective: &W, x0: &[f64], config: &GradConfig, mut observe: O) -> Result<GradResult>
where
    W: WindowedObjective,
    O: FnMut(&IterationRecord, &[f64]) -> Result<()>,
{
    config.validate()?;
    if x0.is_empty() {
        return Err(Error::Config("gradient training needs at least one parameter".into()));
    }
    let pool = Workers(config.workers).pool()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut theta = x0.to_vec();
    let mut current = objective.full_value(&theta);
    let mut history = Vec::with_capacity(config.iterations);

    for iteration in 0..config.iterations {
        let window = objective.sample_window(&mut rng)?;
        let base = objective.window_value(&window, &theta);
        let grad = if base.is_finite() {
            pool.install(|| {
                forward_difference_gradient(|x| objective.window_value(&window, x), &theta, base, config.fd_epsilon)
            })
        } else {
            vec![0.0; theta.len()]
        };

        let mut record = IterationRecord {
            iteration,
            objective: current,
            step_size: None,
            best_probe: None,
            skipped: false,
        };
        if grad.iter().all(|g| *g == 0.0) {
            log::debug!("iteration {iteration}: zero gradient, skipped");
            record.skipped = true;
        } else {
            let probes: Vec<(f64, Vec<f64>)> = pool.install(|| {
                config
                    .step_sizes
                    .par_iter()
                    .map(|&lambda| {
                        let x: Vec<f64> = theta.iter().zip(&grad).map(|(t, g)| t - lambda * g).collect();
                        (objective.full_value(&x), x)
                    })
                    .collect()
            });
            let (k, (value, _)) = probes
                .iter()
                .enumerate()
                .min_by(|a, b| a.1 .0.total_cmp(&b.1 .0).then(a.0.cmp(&b.0)))
                .expect("step sizes are non-empty");
            record.best_probe = Some(config.step_sizes[k]);
            if *value < current {
                current = *value;
                theta.clone_from(&probes[k].1);
                record.objective = current;
                record.step_size = Some(config.step_sizes[k]);
            }
        }
        observe(&record, &theta)?;
        history.push(record);
    }

    Ok(GradResult {
        best: theta,
        best_value: current,
        history,
    })
}
