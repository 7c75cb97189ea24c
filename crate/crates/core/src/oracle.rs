//! Clairvoyant lower bound: the feasible charging schedule with the smallest
//! post-warm-up load variance, found by monotone accelerated projected
//! gradient.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::domain::{Scenario, SimResult};
use crate::error::{Error, Result};
use crate::simulator::{write_loads_csv, Metrics};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleConfig {
    pub max_iterations: usize,
    /// Converged once the objective improves by less than this fraction
    /// over `window` iterations.
    pub tolerance: f64,
    pub window: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            max_iterations: 50_000,
            tolerance: 1e-9,
            window: 100,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OracleResult {
    /// Charging power per household and step, kW.
    pub schedule: Vec<Vec<f64>>,
    pub grid_load: Vec<f64>,
    pub std: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Objective (post-warm-up sum of squared deviations) after each iteration.
    pub history: Vec<f64>,
    pub warmup_steps: usize,
}

impl OracleResult {
    pub fn sim_result(&self) -> SimResult {
        SimResult {
            grid_load: self.grid_load.clone(),
            charging: self.schedule.clone(),
            warmup_steps: self.warmup_steps,
        }
    }

    pub fn metrics(&self) -> Result<Metrics> {
        Metrics::from_loads(&self.grid_load[self.warmup_steps..])
    }
}

/// One request's decision variables.
struct Block {
    household: usize,
    arrive: usize,
    upper: f64,
    /// Required sum of the block's powers (energy / step length).
    total: f64,
    x: Vec<f64>,
}

pub fn qp_lower_bound(scenario: &Scenario, warmup_steps: usize) -> Result<OracleResult> {
    qp_lower_bound_with(scenario, warmup_steps, &OracleConfig::default())
}

pub fn qp_lower_bound_with(scenario: &Scenario, warmup_steps: usize, config: &OracleConfig) -> Result<OracleResult> {
    scenario.validate()?;
    let n = scenario.n_steps();
    if warmup_steps + 2 > n {
        return Err(Error::Config(format!(
            "oracle needs at least 2 post-warm-up steps; {n} steps with {warmup_steps} warm-up"
        )));
    }
    let step_h = scenario.timebase.step_hours();
    let base = scenario.baseline_total();

    let mut blocks: Vec<Block> = Vec::new();
    let mut active = vec![0usize; n];
    for (hi, h) in scenario.households.iter().enumerate() {
        for r in &h.requests {
            let len = r.total_steps();
            let total = r.energy_kwh / step_h;
            for a in &mut active[r.arrive..r.depart] {
                *a += 1;
            }
            blocks.push(Block {
                household: hi,
                arrive: r.arrive,
                upper: r.max_kw,
                total,
                x: vec![(total / len as f64).min(r.max_kw); len],
            });
        }
    }

    let post = (n - warmup_steps) as f64;
    let loads = |blocks: &[Block]| {
        let mut c = base.clone();
        for b in blocks {
            for (k, v) in b.x.iter().enumerate() {
                c[b.arrive + k] += v;
            }
        }
        c
    };
    let objective = |c: &[f64]| {
        let tail = &c[warmup_steps..];
        let m = tail.iter().sum::<f64>() / post;
        tail.iter().map(|v| (v - m).powi(2)).sum::<f64>()
    };

    let lipschitz = 2.0 * active.iter().copied().max().unwrap_or(0) as f64;
    let mut history = Vec::new();
    let mut converged = true;
    if lipschitz > 0.0 {
        converged = false;
        let mut x_prev: Vec<Vec<f64>> = blocks.iter().map(|b| b.x.clone()).collect();
        let mut f_x = objective(&loads(&blocks));
        let mut y = blocks.iter().map(|b| b.x.clone()).collect::<Vec<_>>();
        let mut z_blocks: Vec<Block> = blocks
            .iter()
            .map(|b| Block {
                household: b.household,
                arrive: b.arrive,
                upper: b.upper,
                total: b.total,
                x: b.x.clone(),
            })
            .collect();
        let mut momentum = 1.0f64;
        for it in 0..config.max_iterations {
            // gradient at y
            let mut c = base.clone();
            for (b, yb) in blocks.iter().zip(&y) {
                for (k, v) in yb.iter().enumerate() {
                    c[b.arrive + k] += v;
                }
            }
            let m = c[warmup_steps..].iter().sum::<f64>() / post;
            let grad: Vec<f64> = c
                .iter()
                .enumerate()
                .map(|(t, v)| if t >= warmup_steps { 2.0 * (v - m) } else { 0.0 })
                .collect();
            for ((zb, b), yb) in z_blocks.iter_mut().zip(&blocks).zip(&y) {
                for (k, v) in zb.x.iter_mut().enumerate() {
                    *v = yb[k] - grad[b.arrive + k] / lipschitz;
                }
                project(&mut zb.x, b.upper, b.total);
            }
            let f_z = objective(&loads(&z_blocks));
            let next_momentum = (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt()) / 2.0;
            let accept = f_z <= f_x;
            for (i, b) in blocks.iter_mut().enumerate() {
                x_prev[i].clone_from(&b.x);
                if accept {
                    b.x.clone_from(&z_blocks[i].x);
                }
                let zx = &z_blocks[i].x;
                for k in 0..b.x.len() {
                    y[i][k] = b.x[k]
                        + (momentum / next_momentum) * (zx[k] - b.x[k])
                        + ((momentum - 1.0) / next_momentum) * (b.x[k] - x_prev[i][k]);
                }
            }
            if accept {
                f_x = f_z;
            }
            momentum = next_momentum;
            history.push(f_x);
            if it >= config.window {
                let old = history[it - config.window];
                if old - f_x <= config.tolerance * old.abs() {
                    converged = true;
                    break;
                }
            }
        }
        if !converged {
            log::warn!(
                "oracle stopped after {} iterations without meeting the {} tolerance",
                config.max_iterations,
                config.tolerance
            );
        }
    }

    let grid_load = loads(&blocks);
    let mut schedule = vec![vec![0.0; n]; scenario.households.len()];
    for b in &blocks {
        schedule[b.household][b.arrive..b.arrive + b.x.len()].copy_from_slice(&b.x);
    }
    let std = (objective(&grid_load) / post).sqrt();
    Ok(OracleResult {
        schedule,
        grid_load,
        std,
        converged,
        iterations: history.len(),
        history,
        warmup_steps,
    })
}

/// Euclidean projection of `y` onto `{x : 0 <= x <= upper, sum x = total}`:
/// `x = clamp(y - nu, 0, upper)` with the shift `nu` found by bisection and
/// refined on the set of unclamped entries.
fn project(y: &mut [f64], upper: f64, total: f64) {
    let sum_at = |nu: f64| y.iter().map(|v| (v - nu).clamp(0.0, upper)).sum::<f64>();
    let mut lo = y.iter().copied().fold(f64::INFINITY, f64::min) - upper;
    let mut hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sum_at(mid) > total {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut nu = 0.5 * (lo + hi);
    let (mut free_sum, mut free_n, mut capped) = (0.0, 0usize, 0usize);
    for v in y.iter() {
        let d = v - nu;
        if d >= upper {
            capped += 1;
        } else if d > 0.0 {
            free_sum += v;
            free_n += 1;
        }
    }
    if free_n > 0 {
        nu = (free_sum + upper * capped as f64 - total) / free_n as f64;
    }
    for v in y.iter_mut() {
        *v = (*v - nu).clamp(0.0, upper);
    }
}

#[derive(Serialize)]
struct OracleMetricsFile<'a> {
    #[serde(flatten)]
    metrics: &'a Metrics,
    converged: bool,
    iterations: usize,
}

/// `oracle_schedule.csv` (simulator load format) and `oracle_metrics.json`.
pub fn write_oracle_outputs(dir: &Path, scenario: &Scenario, result: &OracleResult) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_loads_csv(&dir.join("oracle_schedule.csv"), &scenario.timebase, &result.sim_result())?;
    let metrics = result.metrics()?;
    let mut text = serde_json::to_string_pretty(&OracleMetricsFile {
        metrics: &metrics,
        converged: result.converged,
        iterations: result.iterations,
    })?;
    text.push('\n');
    fs::write(dir.join("oracle_metrics.json"), text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{ChargingRequest, Household, Timebase};
    use chrono::NaiveDate;
    use proptest::prelude::*;

    fn scenario(baseline: Vec<f64>, requests: Vec<(usize, usize, f64, f64)>) -> Scenario {
        let start = NaiveDate::from_ymd_opt(2015, 3, 8).unwrap().and_hms_opt(0, 0, 0).unwrap();
        let n = baseline.len();
        Scenario::new(
            Timebase::quarter_hourly(start, n),
            vec![Household {
                id: "h".into(),
                baseline,
                requests: requests
                    .into_iter()
                    .map(|(a, d, e, m)| ChargingRequest {
                        household: "h".into(),
                        arrive: a,
                        depart: d,
                        energy_kwh: e,
                        max_kw: m,
                    })
                    .collect(),
            }],
        )
        .unwrap()
    }

    /// Charge where the baseline is lowest: `x_t = clamp(level - B_t, 0, u)`
    /// with the level found by bisection.
    fn water_fill(base: &[f64], upper: f64, total: f64) -> Vec<f64> {
        let fill = |level: f64| base.iter().map(|b| (level - b).clamp(0.0, upper)).collect::<Vec<_>>();
        let (mut lo, mut hi) = (0.0, 1e6);
        for _ in 0..300 {
            let mid = 0.5 * (lo + hi);
            if fill(mid).iter().sum::<f64>() < total {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        fill(0.5 * (lo + hi))
    }

    #[test]
    fn two_step_toy() {
        let s = scenario(vec![0.0, 10.0], vec![(0, 2, 2.5, 10.0)]);
        let r = qp_lower_bound(&s, 0).unwrap();
        assert!((r.schedule[0][0] - 10.0).abs() < 1e-6);
        assert!(r.schedule[0][1].abs() < 1e-6);
        assert!(r.std < 1e-6);
        assert!(r.converged);
    }

    #[test]
    fn constant_baseline_gives_constant_schedule() {
        let s = scenario(vec![3.0; 40], vec![(5, 25, 6.0, 8.0)]);
        let r = qp_lower_bound(&s, 0).unwrap();
        for t in 5..25 {
            assert!((r.schedule[0][t] - 6.0 / (20.0 * 0.25)).abs() < 1e-6);
        }
    }

    #[test]
    fn matches_water_filling() {
        let base: Vec<f64> = (0..96).map(|t| 5.0 + 3.0 * ((t as f64) / 10.0).sin() + (t % 7) as f64 * 0.2).collect();
        let s = scenario(base.clone(), vec![(0, 96, 30.0, 4.0)]);
        let r = qp_lower_bound(&s, 0).unwrap();
        let expect = water_fill(&base, 4.0, 30.0 / 0.25);
        for (a, b) in r.schedule[0].iter().zip(&expect) {
            assert!((a - b).abs() < 1e-4, "{a} vs {b}");
        }
    }

    #[test]
    fn projection_hits_box_and_sum() {
        let mut y = vec![3.0, -1.0, 0.5, 7.0, 2.0];
        project(&mut y, 2.0, 5.0);
        assert!((y.iter().sum::<f64>() - 5.0).abs() < 1e-12);
        assert!(y.iter().all(|v| (0.0..=2.0).contains(v)));
        assert_eq!(y[3], 2.0);
        assert_eq!(y[1], 0.0);
    }

    #[test]
    fn no_requests_is_the_baseline() {
        let s = scenario(vec![1.0, 2.0, 3.0], vec![]);
        let r = qp_lower_bound(&s, 0).unwrap();
        assert_eq!(r.grid_load, vec![1.0, 2.0, 3.0]);
        assert!(r.converged);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn schedule_is_feasible_and_objective_monotone(
            base in proptest::collection::vec(0.0f64..20.0, 48),
            reqs in proptest::collection::vec((0usize..6, 1usize..6, 0.05f64..1.0, 1.0f64..10.0), 1..4),
            warmup in 0usize..12,
        ) {
            // disjoint requests laid out left to right
            let mut t = 0;
            let mut spec = Vec::new();
            for (gap, len, frac, max_kw) in reqs {
                let a = t + gap;
                let d = (a + len * 2).min(48);
                if a >= d { break; }
                spec.push((a, d, frac * max_kw * (d - a) as f64 * 0.25, max_kw));
                t = d;
            }
            let s = scenario(base, spec.clone());
            let r = qp_lower_bound(&s, warmup).unwrap();
            for &(a, d, e, m) in &spec {
                let x = &r.schedule[0];
                prop_assert!(x[a..d].iter().all(|v| *v >= -1e-6 && *v <= m + 1e-6));
                prop_assert!(((x[a..d].iter().sum::<f64>() * 0.25) - e).abs() < 1e-6);
            }
            let inside: std::collections::HashSet<usize> = spec.iter().flat_map(|&(a, d, _, _)| a..d).collect();
            for t in 0..48 {
                if !inside.contains(&t) {
                    prop_assert_eq!(r.schedule[0][t], 0.0);
                }
            }
            prop_assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
        }
    }
}
