//! Controller input module: turns time, the active request and the recent
//! consumption history into a fixed-order feature vector.
//!
//! Order (household mode uses the first 12):
//!
//! | idx | feature |
//! |-----|---------|
//! | 0,1 | time of day as (cos, sin) |
//! | 2   | weekday flag (0 on Saturday/Sunday, 1 otherwise) |
//! | 3   | fraction of request steps remaining |
//! | 4   | fraction of request energy still missing |
//! | 5   | minimum feasible speed / max speed |
//! | 6   | constant finishing speed / max speed |
//! | 7   | household consumption / 24 h mean |
//! | 8-10| household change vs 1 step, 1 h, 3 h ago |
//! | 11  | household position in the 24 h min..max range |
//! | 12-16 | items 7-11 for the grid total (grid mode only) |

use std::f64::consts::TAU;

use chrono::Weekday;

use crate::domain::{ActiveRequest, InputMode, RollingBuffer, SECONDS_PER_DAY};
use crate::error::{Error, Result};

pub const MAX_FEATURES: usize = 17;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector {
    values: [f64; MAX_FEATURES],
    len: usize,
}

impl FeatureVector {
    fn new() -> Self {
        Self {
            values: [0.0; MAX_FEATURES],
            len: 0,
        }
    }

    fn extend(&mut self, xs: &[f64]) {
        self.values[self.len..self.len + xs.len()].copy_from_slice(xs);
        self.len += xs.len();
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values[..self.len]
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

impl std::ops::Deref for FeatureVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        self.as_slice()
    }
}

pub fn encode_time(seconds_of_day: u32) -> (f64, f64) {
    let phase = TAU * f64::from(seconds_of_day % SECONDS_PER_DAY) / f64::from(SECONDS_PER_DAY);
    (phase.cos(), phase.sin())
}

/// 0 on weekends, 1 on workdays.
pub fn weekend_flag(day: Weekday) -> f64 {
    match day {
        Weekday::Sat | Weekday::Sun => 0.0,
        _ => 1.0,
    }
}

/// `[pct_steps_remaining, pct_unfulfilled, min_speed_ratio, const_speed_ratio]`,
/// all zero without an active request.
pub fn request_features(request: Option<&ActiveRequest>, step_hours: f64) -> [f64; 4] {
    let Some(r) = request else {
        return [0.0; 4];
    };
    [
        r.remaining_steps as f64 / r.total_steps as f64,
        (r.remaining_kwh / r.energy_kwh).clamp(0.0, 1.0),
        r.min_speed(step_hours) / r.max_kw,
        (r.constant_speed(step_hours) / r.max_kw).clamp(0.0, 1.0),
    ]
}

/// `[ratio_to_mean, delta_1_step, delta_1_hour, delta_3_hours, range_position]`.
///
/// `history` holds earlier observations (not `current`). The mean is over the
/// history; the range also includes `current`. A zero mean gives ratio 1, a
/// flat range gives position 0.5, and a lag not yet in the history gives a
/// delta of 0.
pub fn consumption_features(history: &RollingBuffer, current: f64, steps_per_hour: usize) -> [f64; 5] {
    let ratio = match history.mean() {
        Some(m) if m != 0.0 => current / m,
        _ => 1.0,
    };
    let delta = |k: usize| history.lag(k).map_or(0.0, |past| current - past);
    let (lo, hi) = history
        .iter()
        .fold((current, current), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let position = if hi > lo { (current - lo) / (hi - lo) } else { 0.5 };
    [
        ratio,
        delta(1),
        delta(steps_per_hour),
        delta(3 * steps_per_hour),
        position,
    ]
}

/// What the input module sees at one step.
#[derive(Debug, Clone, Copy)]
pub struct Observation<'a> {
    pub seconds_of_day: u32,
    pub weekday: Weekday,
    pub request: Option<&'a ActiveRequest>,
    pub household_kw: f64,
    /// Grid total; required in grid mode.
    pub grid_kw: Option<f64>,
}

pub fn build_features(
    mode: InputMode,
    obs: &Observation<'_>,
    household_history: &RollingBuffer,
    grid_history: Option<&RollingBuffer>,
    steps_per_hour: usize,
    step_hours: f64,
) -> Result<FeatureVector> {
    let mut fv = FeatureVector::new();
    let (c, s) = encode_time(obs.seconds_of_day);
    fv.extend(&[c, s, weekend_flag(obs.weekday)]);
    fv.extend(&request_features(obs.request, step_hours));
    fv.extend(&consumption_features(household_history, obs.household_kw, steps_per_hour));
    if mode == InputMode::All {
        let (Some(history), Some(current)) = (grid_history, obs.grid_kw) else {
            return Err(Error::Config(
                "grid-aware controller needs the grid consumption signal".into(),
            ));
        };
        fv.extend(&consumption_features(history, current, steps_per_hour));
    }
    debug_assert_eq!(fv.len(), mode.n_features());
    Ok(fv)
}
