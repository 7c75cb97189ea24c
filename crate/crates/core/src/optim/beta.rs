use rayon::prelude::*;
use serde::Serialize;

use super::Workers;
use crate::domain::{ControllerParams, Scenario};
use crate::error::Result;
use crate::simulator::objective;

pub const BETA_GRID: [f64; 8] = [0.0, 0.1, 0.2, 0.3, 0.4, 0.6, 0.8, 1.0];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BetaSearch {
    pub beta: f64,
    /// `(beta, objective)` for every grid point, in grid order.
    pub evaluations: Vec<(f64, f64)>,
}

/// Picks the filter coefficient from [`BETA_GRID`] minimising the objective
/// on `scenario`; ties go to the smaller value.
pub fn tune_beta(
    scenario: &Scenario,
    params: &ControllerParams,
    warmup_steps: usize,
    workers: usize,
) -> Result<(ControllerParams, BetaSearch)> {
    let candidates = BETA_GRID
        .iter()
        .map(|&b| params.clone().with_beta(b))
        .collect::<Result<Vec<_>>>()?;
    let values = Workers(workers).pool()?.install(|| {
        candidates
            .par_iter()
            .map(|p| objective(scenario, p, warmup_steps))
            .collect::<Result<Vec<f64>>>()
    })?;
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if v.total_cmp(&values[best]).is_lt() {
            best = i;
        }
    }
    let search = BetaSearch {
        beta: BETA_GRID[best],
        evaluations: BETA_GRID.iter().copied().zip(values).collect(),
    };
    Ok((candidates[best].clone(), search))
}
