//! Control and output modules: raw NN/ESN outputs, the low-pass feasibility
//! filter, the three rule-based baselines, and the per-step glue that runs
//! one household's controller.

mod esn;
mod nn;
mod persist;

pub use esn::{spectral_radius, EsnReservoir, EsnReservoirSpec};
pub use nn::{nn_forward, sigmoid};
pub use persist::{ParamsFile, PARAMS_FORMAT, PARAMS_VERSION};

use crate::domain::{ActiveRequest, ControlModule, ControllerKind, ControllerParams, ControllerState};
use crate::error::Result;
use crate::features::{build_features, Observation};

/// Turns a raw output in `[0, 1]` into a charging speed in kW.
///
/// `o = max(s_min, beta * o_prev + (1 - beta) * s_max * r)`, then clamped to
/// `[s_min, min(s_max, remaining / step)]` so the request is neither missed
/// nor over-delivered.
pub fn output_filter(raw: f64, last_output: f64, req: &ActiveRequest, beta: f64, step_hours: f64) -> f64 {
    let s_min = req.min_speed(step_hours);
    let cap = req.max_speed(step_hours);
    let blended = beta * last_output + (1.0 - beta) * req.max_kw * raw;
    blended.max(s_min).min(cap)
}

/// Charging speed of a rule-based controller for an active request.
pub fn baseline_speed(kind: ControllerKind, req: &ActiveRequest, step_hours: f64) -> f64 {
    let s_min = req.min_speed(step_hours);
    let cap = req.max_speed(step_hours);
    match kind {
        ControllerKind::MaxCharge => cap,
        ControllerKind::MinCharge => s_min,
        ControllerKind::ConstCharge => {
            let constant = req.energy_kwh / (req.total_steps as f64 * step_hours);
            constant.max(s_min).min(cap)
        }
        ControllerKind::Nn | ControllerKind::Esn => {
            unreachable!("{kind} is not a rule-based controller")
        }
    }
}

/// Grid timing constants a controller needs.
#[derive(Debug, Clone, Copy)]
pub struct StepContext {
    pub steps_per_hour: usize,
    pub step_hours: f64,
}

/// Runs one household controller for one step and returns its charging speed.
///
/// Input buffers are updated after the features are built, the ESN state is
/// advanced whether or not a request is active, and the filter memory is
/// reset to zero when no request is active.
pub fn control_step(
    params: &ControllerParams,
    state: &mut ControllerState,
    obs: &Observation<'_>,
    ctx: StepContext,
) -> Result<f64> {
    let raw = match &params.control {
        ControlModule::MaxCharge => return Ok(baseline_or_idle(ControllerKind::MaxCharge, obs, ctx)),
        ControlModule::MinCharge => return Ok(baseline_or_idle(ControllerKind::MinCharge, obs, ctx)),
        ControlModule::ConstCharge => return Ok(baseline_or_idle(ControllerKind::ConstCharge, obs, ctx)),
        control => {
            let x = build_features(
                params.input_mode,
                obs,
                &state.household,
                state.grid.as_ref(),
                ctx.steps_per_hour,
                ctx.step_hours,
            )?;
            state.household.push(obs.household_kw);
            if let (Some(buf), Some(g)) = (state.grid.as_mut(), obs.grid_kw) {
                buf.push(g);
            }
            match control {
                ControlModule::Nn(w) => match obs.request {
                    Some(_) => nn_forward(&x, w)?,
                    None => 0.0,
                },
                ControlModule::Esn { readout, reservoir } => {
                    reservoir.step(&mut state.reservoir, &x)?;
                    match obs.request {
                        Some(_) => reservoir.readout(&state.reservoir, &x, readout)?,
                        None => 0.0,
                    }
                }
                _ => unreachable!(),
            }
        }
    };
    let speed = match obs.request {
        Some(req) => output_filter(raw, state.last_output, req, params.beta, ctx.step_hours),
        None => 0.0,
    };
    state.last_output = speed;
    Ok(speed)
}

fn baseline_or_idle(kind: ControllerKind, obs: &Observation<'_>, ctx: StepContext) -> f64 {
    obs.request
        .map_or(0.0, |req| baseline_speed(kind, req, ctx.step_hours))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn req(remaining_kwh: f64, remaining_steps: usize, max_kw: f64) -> ActiveRequest {
        ActiveRequest {
            index: 0,
            energy_kwh: remaining_kwh,
            max_kw,
            remaining_kwh,
            remaining_steps,
            total_steps: remaining_steps,
        }
    }

    #[test]
    fn filter_passthrough_at_full_output() {
        let r = req(10.0, 20, 8.0);
        assert_eq!(output_filter(1.0, 0.0, &r, 0.0, 0.25), 8.0);
    }

    #[test]
    fn filter_with_beta_one_ignores_raw_output() {
        let r = req(10.0, 20, 8.0);
        for raw in [0.0, 0.3, 1.0] {
            assert_eq!(output_filter(raw, 3.0, &r, 1.0, 0.25), 3.0);
        }
        // s_min dominates a small memory: 7 kWh in 4 steps at 8 kW needs 4 kW now
        let tight = req(7.0, 4, 8.0);
        assert_eq!(output_filter(0.9, 1.0, &tight, 1.0, 0.25), 4.0);
    }

    #[test]
    fn filter_floor_is_minimum_speed() {
        // 2.5 kWh in 2 steps at 8 kW: 2.5 - 2 = 0.5 kWh must go now, i.e. 2 kW
        let r = req(2.5, 2, 8.0);
        assert_eq!(r.min_speed(0.25), 2.0);
        assert_eq!(output_filter(0.0, 0.0, &r, 0.0, 0.25), 2.0);
    }

    #[test]
    fn filter_never_overshoots_remaining_energy() {
        let r = req(0.5, 3, 8.0);
        assert_eq!(output_filter(1.0, 0.0, &r, 0.0, 0.25), 2.0);
    }

    #[test]
    fn max_charge_sequence() {
        // 5 kWh at 8 kW, quarter-hour steps: 8, 8, then 4 kW
        let mut remaining = 5.0;
        let mut speeds = Vec::new();
        let mut steps = 10;
        while remaining > 1e-12 {
            let mut r = req(remaining, steps, 8.0);
            r.energy_kwh = 5.0;
            let s = baseline_speed(ControllerKind::MaxCharge, &r, 0.25);
            speeds.push(s);
            remaining -= s * 0.25;
            steps -= 1;
        }
        assert_eq!(speeds, vec![8.0, 8.0, 4.0]);
    }

    #[test]
    fn min_charge_sequences() {
        // power limit 2 kW: 2 kWh over 4 steps is 2 kW every step
        let mut remaining = 2.0;
        for steps in (1..=4).rev() {
            let s = baseline_speed(ControllerKind::MinCharge, &req(remaining, steps, 2.0), 0.25);
            assert_eq!(s, 2.0);
            remaining -= s * 0.25;
        }
        assert_eq!(remaining, 0.0);
        // power limit 8 kW: everything is deferred to the last step
        let mut remaining = 2.0;
        let mut speeds = Vec::new();
        for steps in (1..=4).rev() {
            let s = baseline_speed(ControllerKind::MinCharge, &req(remaining, steps, 8.0), 0.25);
            speeds.push(s);
            remaining -= s * 0.25;
        }
        assert_eq!(speeds, vec![0.0, 0.0, 0.0, 8.0]);
    }

    #[test]
    fn const_charge_is_constant() {
        let total = 12;
        let mut remaining = 3.0;
        let mut speeds = Vec::new();
        for steps in (1..=total).rev() {
            let r = ActiveRequest {
                energy_kwh: 3.0,
                total_steps: total,
                ..req(remaining, steps, 8.0)
            };
            let s = baseline_speed(ControllerKind::ConstCharge, &r, 0.25);
            speeds.push(s);
            remaining -= s * 0.25;
        }
        assert!(speeds.iter().all(|s| (s - 1.0).abs() < 1e-12));
        assert!(remaining.abs() < 1e-9);
    }

    proptest! {
        /// Feeding any raw sequence through the filter finishes the request
        /// by its deadline without overshooting.
        #[test]
        fn filter_guarantees_deadline(
            raws in proptest::collection::vec(0.0f64..=1.0, 1..60),
            fill in 0.0f64..=1.0,
            max_kw in 0.5f64..20.0,
            beta in 0.0f64..=1.0,
        ) {
            let steps = raws.len();
            let h = 0.25;
            let energy = fill * max_kw * h * steps as f64;
            let mut remaining = energy;
            let mut last = 0.0;
            let mut delivered = 0.0;
            for (i, raw) in raws.iter().enumerate() {
                if remaining <= crate::domain::FINISHED_TOLERANCE_KWH {
                    break;
                }
                let r = ActiveRequest {
                    index: 0,
                    energy_kwh: energy,
                    max_kw,
                    remaining_kwh: remaining,
                    remaining_steps: steps - i,
                    total_steps: steps,
                };
                let o = output_filter(*raw, last, &r, beta, h);
                prop_assert!(o >= 0.0 && o <= max_kw);
                last = o;
                remaining -= o * h;
                delivered += o * h;
            }
            prop_assert!(remaining.abs() <= 1e-9);
            prop_assert!((delivered - energy).abs() <= 1e-9);
        }
    }
}
