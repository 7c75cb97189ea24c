//! Scenario, request and result types shared by the simulator, trainers and
//! the offline bound.

mod params;
mod request;
mod state;

use std::fmt;
use std::ops::Range;

use chrono::{Datelike, Duration, NaiveDateTime, Timelike, Weekday};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use params::{ControlModule, ControllerKind, ControllerParams, EsnReadout, InputMode, NnWeights};
pub use request::{ActiveRequest, RequestTracker, FINISHED_TOLERANCE_KWH};
pub use state::{ControllerState, RollingBuffer};

pub const SECONDS_PER_DAY: u32 = 86_400;

/// Discrete time grid of a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Timebase {
    pub step_seconds: u32,
    pub start: NaiveDateTime,
    pub n_steps: usize,
}

impl Timebase {
    pub fn new(step_seconds: u32, start: NaiveDateTime, n_steps: usize) -> Result<Self> {
        if step_seconds == 0 || SECONDS_PER_DAY % step_seconds != 0 {
            return Err(Error::invalid(format!(
                "step of {step_seconds} s does not divide a day"
            )));
        }
        if n_steps == 0 {
            return Err(Error::invalid("timebase needs at least one step"));
        }
        Ok(Self {
            step_seconds,
            start,
            n_steps,
        })
    }

    /// 15-minute steps, the resolution used throughout the toolkit.
    pub fn quarter_hourly(start: NaiveDateTime, n_steps: usize) -> Self {
        Self {
            step_seconds: 900,
            start,
            n_steps,
        }
    }

    pub fn step_hours(&self) -> f64 {
        f64::from(self.step_seconds) / 3600.0
    }

    pub fn steps_per_day(&self) -> usize {
        (SECONDS_PER_DAY / self.step_seconds) as usize
    }

    pub fn steps_per_hour(&self) -> usize {
        (3600 / self.step_seconds).max(1) as usize
    }

    pub fn timestamp(&self, step: usize) -> NaiveDateTime {
        self.start + Duration::seconds(step as i64 * i64::from(self.step_seconds))
    }

    pub fn seconds_of_day(&self, step: usize) -> u32 {
        self.timestamp(step).num_seconds_from_midnight()
    }

    pub fn weekday(&self, step: usize) -> Weekday {
        self.timestamp(step).weekday()
    }

    /// Step index of an absolute timestamp; `None` when it is off the grid.
    pub fn step_of(&self, ts: NaiveDateTime) -> Option<i64> {
        let secs = (ts - self.start).num_seconds();
        let step = i64::from(self.step_seconds);
        (secs.rem_euclid(step) == 0).then(|| secs.div_euclid(step))
    }

    /// Sub-grid covering `range`, with the start shifted accordingly.
    pub fn slice(&self, range: Range<usize>) -> Self {
        Self {
            step_seconds: self.step_seconds,
            start: self.timestamp(range.start),
            n_steps: range.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct HouseholdId(pub String);

impl fmt::Display for HouseholdId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for HouseholdId {
    fn from(s: &str) -> Self {
        HouseholdId(s.to_owned())
    }
}

/// One plug-in interval: the car is available on steps `arrive..depart` and
/// needs `energy_kwh` delivered at no more than `max_kw`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChargingRequest {
    pub household: HouseholdId,
    pub arrive: usize,
    pub depart: usize,
    pub energy_kwh: f64,
    pub max_kw: f64,
}

impl ChargingRequest {
    pub fn total_steps(&self) -> usize {
        self.depart - self.arrive
    }

    /// Largest energy deliverable inside the interval.
    pub fn capacity_kwh(&self, step_hours: f64) -> f64 {
        self.max_kw * self.total_steps() as f64 * step_hours
    }

    fn check(&self, n_steps: usize, step_hours: f64) -> std::result::Result<(), String> {
        if self.arrive >= self.depart {
            return Err(format!(
                "arrival step {} is not before departure step {}",
                self.arrive, self.depart
            ));
        }
        if self.depart > n_steps {
            return Err(format!(
                "departure step {} is past the horizon of {} steps",
                self.depart, n_steps
            ));
        }
        if !(self.energy_kwh.is_finite() && self.energy_kwh >= 0.0) {
            return Err(format!("required energy {} is not a non-negative number", self.energy_kwh));
        }
        if !(self.max_kw.is_finite() && self.max_kw > 0.0) {
            return Err(format!("max power {} must be positive", self.max_kw));
        }
        let cap = self.capacity_kwh(step_hours);
        if self.energy_kwh > cap * (1.0 + 1e-12) + FINISHED_TOLERANCE_KWH {
            return Err(format!(
                "needs {} kWh but at most {} kWh fits in the interval",
                self.energy_kwh, cap
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Household {
    pub id: HouseholdId,
    /// Uncontrollable consumption in kW, one entry per step.
    pub baseline: Vec<f64>,
    /// Ordered by arrival, pairwise disjoint.
    pub requests: Vec<ChargingRequest>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub timebase: Timebase,
    pub households: Vec<Household>,
}

impl Scenario {
    /// Builds a validated scenario. Zero-energy requests are dropped and the
    /// remaining ones sorted by arrival before the invariants are checked.
    pub fn new(timebase: Timebase, mut households: Vec<Household>) -> Result<Self> {
        for h in &mut households {
            h.requests.retain(|r| r.energy_kwh != 0.0);
            h.requests.sort_by_key(|r| r.arrive);
        }
        let scenario = Self {
            timebase,
            households,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.timebase.n_steps;
        let step_h = self.timebase.step_hours();
        let mut seen = std::collections::HashSet::new();
        for h in &self.households {
            if !seen.insert(&h.id) {
                return Err(Error::invalid(format!("duplicate household id {}", h.id)));
            }
            if h.baseline.len() != n {
                return Err(Error::invalid(format!(
                    "household {} has {} baseline values for {} steps",
                    h.id,
                    h.baseline.len(),
                    n
                )));
            }
            if let Some(t) = h.baseline.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::invalid(format!(
                    "household {} baseline at step {} is {}",
                    h.id, t, h.baseline[t]
                )));
            }
            let mut prev_depart = 0;
            for (i, r) in h.requests.iter().enumerate() {
                if r.household != h.id {
                    return Err(Error::invalid(format!(
                        "request {i} of household {} is tagged {}",
                        h.id, r.household
                    )));
                }
                r.check(n, step_h).map_err(|message| Error::Infeasible {
                    household: h.id.to_string(),
                    request: i,
                    message,
                })?;
                if i > 0 && r.arrive < prev_depart {
                    return Err(Error::invalid(format!(
                        "household {} request {i} overlaps its predecessor",
                        h.id
                    )));
                }
                prev_depart = r.depart;
            }
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        self.timebase.n_steps
    }

    /// Sum of household baselines per step (the grid's B_t).
    pub fn baseline_total(&self) -> Vec<f64> {
        let mut total = vec![0.0; self.n_steps()];
        for h in &self.households {
            for (acc, b) in total.iter_mut().zip(&h.baseline) {
                *acc += b;
            }
        }
        total
    }

    pub fn requests(&self) -> impl Iterator<Item = &ChargingRequest> {
        self.households.iter().flat_map(|h| h.requests.iter())
    }

    pub fn total_requested_kwh(&self) -> f64 {
        self.requests().map(|r| r.energy_kwh).sum()
    }

    /// Same loads with every charging request removed.
    pub fn without_requests(&self) -> Self {
        let mut s = self.clone();
        for h in &mut s.households {
            h.requests.clear();
        }
        s
    }

    /// Restricts the scenario to `range`. Requests straddling a boundary are
    /// clipped and their energy scaled by the retained fraction of the
    /// interval, which keeps every clipped request feasible.
    pub fn slice(&self, range: Range<usize>) -> Result<Self> {
        if range.start >= range.end || range.end > self.n_steps() {
            return Err(Error::Config(format!(
                "slice {}..{} outside a scenario of {} steps",
                range.start,
                range.end,
                self.n_steps()
            )));
        }
        let households = self
            .households
            .iter()
            .map(|h| Household {
                id: h.id.clone(),
                baseline: h.baseline[range.clone()].to_vec(),
                requests: h
                    .requests
                    .iter()
                    .filter_map(|r| clip_request(r, &range))
                    .collect(),
            })
            .collect();
        Ok(Self {
            timebase: self.timebase.slice(range),
            households,
        })
    }
}

fn clip_request(r: &ChargingRequest, range: &Range<usize>) -> Option<ChargingRequest> {
    let arrive = r.arrive.max(range.start);
    let depart = r.depart.min(range.end);
    if arrive >= depart {
        return None;
    }
    let energy_kwh = if arrive == r.arrive && depart == r.depart {
        r.energy_kwh
    } else {
        r.energy_kwh * (depart - arrive) as f64 / r.total_steps() as f64
    };
    (energy_kwh > 0.0).then(|| ChargingRequest {
        household: r.household.clone(),
        arrive: arrive - range.start,
        depart: depart - range.start,
        energy_kwh,
        max_kw: r.max_kw,
    })
}

/// Output of one simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    /// Total grid consumption c_t = B_t + sum of household charging.
    pub grid_load: Vec<f64>,
    /// Charging power per household (outer) and step (inner), kW.
    pub charging: Vec<Vec<f64>>,
    /// Leading steps excluded from every metric.
    pub warmup_steps: usize,
}

impl SimResult {
    pub fn total_charging(&self) -> Vec<f64> {
        let mut total = vec![0.0; self.grid_load.len()];
        for row in &self.charging {
            for (acc, c) in total.iter_mut().zip(row) {
                *acc += c;
            }
        }
        total
    }

    pub fn post_warmup(&self) -> &[f64] {
        &self.grid_load[self.warmup_steps.min(self.grid_load.len())..]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn start() -> NaiveDateTime {
        NaiveDate::from_ymd_opt(2015, 1, 2)
            .unwrap()
            .and_hms_opt(16, 0, 0)
            .unwrap()
    }

    fn req(arrive: usize, depart: usize, energy_kwh: f64) -> ChargingRequest {
        ChargingRequest {
            household: "h0".into(),
            arrive,
            depart,
            energy_kwh,
            max_kw: 8.0,
        }
    }

    fn household(requests: Vec<ChargingRequest>) -> Household {
        Household {
            id: "h0".into(),
            baseline: vec![1.0; 96],
            requests,
        }
    }

    #[test]
    fn timebase_rejects_step_not_dividing_a_day() {
        assert!(Timebase::new(7, start(), 10).is_err());
        assert!(Timebase::new(900, start(), 0).is_err());
        let tb = Timebase::new(900, start(), 10).unwrap();
        assert_eq!(tb.steps_per_day(), 96);
        assert_eq!(tb.step_hours(), 0.25);
        assert_eq!(tb.seconds_of_day(1), 16 * 3600 + 900);
        assert_eq!(tb.weekday(0), Weekday::Fri);
        // 8 hours later we are on Saturday
        assert_eq!(tb.weekday(32), Weekday::Sat);
    }

    #[test]
    fn step_of_requires_grid_alignment() {
        let tb = Timebase::quarter_hourly(start(), 96);
        assert_eq!(tb.step_of(tb.timestamp(5)), Some(5));
        assert_eq!(tb.step_of(start() + Duration::seconds(60)), None);
        assert_eq!(tb.step_of(start() - Duration::seconds(900)), Some(-1));
    }

    #[test]
    fn zero_energy_requests_are_dropped() {
        let tb = Timebase::quarter_hourly(start(), 96);
        let s = Scenario::new(tb, vec![household(vec![req(10, 20, 0.0), req(30, 40, 1.0)])]).unwrap();
        assert_eq!(s.households[0].requests.len(), 1);
    }

    #[test]
    fn overlapping_and_infeasible_requests_are_rejected() {
        let tb = Timebase::quarter_hourly(start(), 96);
        let overlap = Scenario::new(tb, vec![household(vec![req(10, 20, 1.0), req(15, 30, 1.0)])]);
        assert!(matches!(overlap, Err(Error::Validation { .. })));
        // 10 steps * 0.25 h * 8 kW = 20 kWh
        let too_much = Scenario::new(tb, vec![household(vec![req(10, 20, 20.5)])]);
        assert!(matches!(too_much, Err(Error::Infeasible { .. })));
        let exact = Scenario::new(tb, vec![household(vec![req(10, 20, 20.0)])]);
        assert!(exact.is_ok());
        let past_end = Scenario::new(tb, vec![household(vec![req(90, 97, 1.0)])]);
        assert!(past_end.is_err());
    }

    #[test]
    fn slice_clips_requests_proportionally() {
        let tb = Timebase::quarter_hourly(start(), 96);
        let s = Scenario::new(tb, vec![household(vec![req(10, 20, 4.0), req(40, 50, 2.0)])]).unwrap();
        let w = s.slice(15..45).unwrap();
        assert_eq!(w.n_steps(), 30);
        assert_eq!(w.timebase.start, tb.timestamp(15));
        let r = &w.households[0].requests;
        assert_eq!(r.len(), 2);
        assert_eq!((r[0].arrive, r[0].depart), (0, 5));
        assert!((r[0].energy_kwh - 2.0).abs() < 1e-12);
        assert_eq!((r[1].arrive, r[1].depart), (25, 30));
        assert!((r[1].energy_kwh - 1.0).abs() < 1e-12);
        w.validate().unwrap();
        assert!(s.slice(50..120).is_err());
    }
}
