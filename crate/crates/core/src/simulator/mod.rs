//! Discrete-time grid simulation and load statistics.

mod export;
mod metrics;

pub use export::{write_histogram_csv, write_loads_csv, write_metrics_json};
pub use metrics::{metrics, percentile, population_std, Histogram, Metrics};

use crate::controllers::{control_step, StepContext};
use crate::domain::{ControllerState, ControllerParams, InputMode, RequestTracker, Scenario, SimResult};
use crate::error::{Error, Result};
use crate::features::Observation;

/// Simulates every household over the whole scenario.
///
/// Each step first books the previous step's charging into the request
/// lifecycle, then snapshots the previous grid total (the signal grid-aware
/// controllers receive), runs each household controller, and records
/// `c_t = B_t + sum_h c_t^h`. Household consumption seen by a controller is
/// its baseline at `t` plus its own charging at `t - 1`. At `t = 0` the grid
/// signal is the baseline total of step 0.
pub fn simulate(scenario: &Scenario, params: &ControllerParams, warmup_steps: usize) -> Result<SimResult> {
    params.validate()?;
    let tb = scenario.timebase;
    let n = tb.n_steps;
    let step_hours = tb.step_hours();
    let ctx = StepContext {
        steps_per_hour: tb.steps_per_hour(),
        step_hours,
    };
    let clock: Vec<_> = (0..n).map(|t| (tb.seconds_of_day(t), tb.weekday(t))).collect();
    let baseline_total = scenario.baseline_total();
    let grid_aware = params.input_mode == InputMode::All && !params.kind().is_baseline();

    let mut trackers: Vec<_> = scenario
        .households
        .iter()
        .map(|h| RequestTracker::new(&h.requests))
        .collect();
    let mut states: Vec<_> = scenario
        .households
        .iter()
        .map(|_| ControllerState::new(tb.steps_per_day(), params.input_mode, params.reservoir_size()))
        .collect();
    let mut charging = vec![vec![0.0; n]; scenario.households.len()];
    let mut grid = vec![0.0; n];

    for t in 0..n {
        let grid_prev = if t == 0 { baseline_total[0] } else { grid[t - 1] };
        let (seconds_of_day, weekday) = clock[t];
        let mut charging_total = 0.0;
        for (hi, household) in scenario.households.iter().enumerate() {
            let prev = if t == 0 { 0.0 } else { charging[hi][t - 1] };
            trackers[hi].advance(t, prev, step_hours)?;
            let active = trackers[hi].active(t);
            let obs = Observation {
                seconds_of_day,
                weekday,
                request: active.as_ref(),
                household_kw: household.baseline[t] + prev,
                grid_kw: grid_aware.then_some(grid_prev),
            };
            let speed = control_step(params, &mut states[hi], &obs, ctx)?;
            charging[hi][t] = speed;
            charging_total += speed;
        }
        grid[t] = baseline_total[t] + charging_total;
        if !grid[t].is_finite() {
            return Err(Error::Numerical(format!("grid load at step {t} is {}", grid[t])));
        }
    }

    for (hi, tracker) in trackers.iter_mut().enumerate() {
        let last = charging[hi].last().copied().unwrap_or(0.0);
        tracker.advance(n, last, step_hours)?;
        debug_assert!(tracker.is_done());
    }

    Ok(SimResult {
        grid_load: grid,
        charging,
        warmup_steps,
    })
}

/// Population standard deviation of the post-warm-up grid load.
pub fn objective(scenario: &Scenario, params: &ControllerParams, warmup_steps: usize) -> Result<f64> {
    let r = simulate(scenario, params, warmup_steps)?;
    Ok(population_std(r.post_warmup()))
}

/// Simulates `window_steps` starting at `start` from zeroed controller state
/// and scores only the final `tail_steps`.
pub fn simulate_window(
    scenario: &Scenario,
    params: &ControllerParams,
    start: usize,
    window_steps: usize,
    tail_steps: usize,
) -> Result<f64> {
    if tail_steps == 0 || tail_steps > window_steps {
        return Err(Error::Config(format!(
            "objective tail of {tail_steps} steps does not fit a window of {window_steps}"
        )));
    }
    if start + window_steps > scenario.n_steps() {
        return Err(Error::Config(format!(
            "window {}..{} exceeds the scenario's {} steps",
            start,
            start + window_steps,
            scenario.n_steps()
        )));
    }
    let window = scenario.slice(start..start + window_steps)?;
    objective(&window, params, window_steps - tail_steps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{ChargingRequest, ControllerKind, Household, Timebase};
    use chrono::NaiveDate;

    fn scenario(baselines: Vec<Vec<f64>>, requests: Vec<Vec<(usize, usize, f64)>>) -> Scenario {
        let n = baselines[0].len();
        let start = NaiveDate::from_ymd_opt(2015, 3, 8).unwrap().and_hms_opt(0, 0, 0).unwrap();
        let households = baselines
            .into_iter()
            .zip(requests)
            .enumerate()
            .map(|(i, (baseline, reqs))| {
                let id = crate::domain::HouseholdId(format!("h{i}"));
                Household {
                    requests: reqs
                        .into_iter()
                        .map(|(a, d, e)| ChargingRequest {
                            household: id.clone(),
                            arrive: a,
                            depart: d,
                            energy_kwh: e,
                            max_kw: 8.0,
                        })
                        .collect(),
                    id,
                    baseline,
                }
            })
            .collect();
        Scenario::new(Timebase::quarter_hourly(start, n), households).unwrap()
    }

    fn baseline(kind: ControllerKind) -> ControllerParams {
        ControllerParams::baseline(kind).unwrap()
    }

    #[test]
    fn no_requests_means_baseline_load() {
        let s = scenario(vec![vec![1.0, 2.0, 3.0], vec![0.5, 0.5, 0.5]], vec![vec![], vec![]]);
        let r = simulate(&s, &baseline(ControllerKind::MaxCharge), 0).unwrap();
        assert_eq!(r.grid_load, vec![1.5, 2.5, 3.5]);
    }

    #[test]
    fn max_charge_finishes_as_early_as_possible() {
        let s = scenario(vec![vec![1.0; 12]], vec![vec![(2, 10, 5.0)]]);
        let r = simulate(&s, &baseline(ControllerKind::MaxCharge), 0).unwrap();
        assert_eq!(&r.charging[0][..6], &[0.0, 0.0, 8.0, 8.0, 4.0, 0.0]);
        let s = scenario(vec![vec![1.0; 12]], vec![vec![(2, 10, 5.0)]]);
        let r = simulate(&s, &baseline(ControllerKind::MinCharge), 0).unwrap();
        assert_eq!(&r.charging[0][..10], &[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 4.0, 8.0, 8.0]);
    }

    #[test]
    fn window_matches_full_run_when_degenerate() {
        let s = scenario(
            vec![(0..20).map(|t| 1.0 + (t % 5) as f64).collect()],
            vec![vec![(3, 15, 6.0)]],
        );
        let p = baseline(ControllerKind::ConstCharge);
        let full = objective(&s, &p, 4).unwrap();
        let w = simulate_window(&s, &p, 0, 20, 16).unwrap();
        assert_eq!(full, w);
        assert!(simulate_window(&s, &p, 5, 20, 10).is_err());
        assert!(simulate_window(&s, &p, 0, 10, 11).is_err());
    }

    #[test]
    fn constant_load_has_zero_objective() {
        let s = scenario(vec![vec![3.0; 300]], vec![vec![]]);
        let p = baseline(ControllerKind::MaxCharge);
        assert_eq!(simulate_window(&s, &p, 5, 288, 192).unwrap(), 0.0);
    }

    #[test]
    fn infeasible_request_is_reported() {
        let mut s = scenario(vec![vec![1.0; 12]], vec![vec![]]);
        s.households[0].requests.push(ChargingRequest {
            household: "h0".into(),
            arrive: 2,
            depart: 4,
            energy_kwh: 100.0,
            max_kw: 8.0,
        });
        let err = simulate(&s, &baseline(ControllerKind::MinCharge), 0).unwrap_err();
        assert!(matches!(err, Error::Infeasible { .. }));
    }
}
