use super::ChargingRequest;
use crate::error::{Error, Result};

/// Remaining energy at or below this counts as delivered.
pub const FINISHED_TOLERANCE_KWH: f64 = 1e-9;

/// Snapshot of the request a household is serving at one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActiveRequest {
    /// Position of the request in its household's list.
    pub index: usize,
    pub energy_kwh: f64,
    pub max_kw: f64,
    pub remaining_kwh: f64,
    /// Steps left including the current one.
    pub remaining_steps: usize,
    pub total_steps: usize,
}

impl ActiveRequest {
    /// Slowest speed for this step that still lets the rest be delivered at
    /// full power before departure (the latest-possible-time schedule).
    pub fn min_speed(&self, step_hours: f64) -> f64 {
        let later = self.max_kw * step_hours * (self.remaining_steps - 1) as f64;
        ((self.remaining_kwh - later) / step_hours).clamp(0.0, self.max_kw)
    }

    /// Fastest useful speed: the power limit, or less on the final partial step.
    pub fn max_speed(&self, step_hours: f64) -> f64 {
        self.max_kw.min(self.remaining_kwh / step_hours)
    }

    /// Constant speed that finishes exactly at departure.
    pub fn constant_speed(&self, step_hours: f64) -> f64 {
        self.remaining_kwh / (self.remaining_steps as f64 * step_hours)
    }
}

/// Walks one household's requests through arrival, charging and completion.
#[derive(Debug, Clone)]
pub struct RequestTracker<'a> {
    requests: &'a [ChargingRequest],
    next: usize,
    current: Option<(usize, f64)>,
}

impl<'a> RequestTracker<'a> {
    pub fn new(requests: &'a [ChargingRequest]) -> Self {
        Self {
            requests,
            next: 0,
            current: None,
        }
    }

    /// Books the energy delivered during step `t - 1` and moves the lifecycle
    /// to step `t`: finished requests are removed, newly arrived ones become
    /// active. Fails when a request can no longer meet its deadline.
    pub fn advance(&mut self, t: usize, delivered_kw: f64, step_hours: f64) -> Result<()> {
        if let Some((idx, remaining)) = self.current {
            let remaining = remaining - delivered_kw * step_hours;
            if remaining <= FINISHED_TOLERANCE_KWH {
                self.current = None;
            } else if t >= self.requests[idx].depart {
                return Err(self.infeasible(idx, format!("{remaining} kWh left at departure")));
            } else {
                self.current = Some((idx, remaining));
            }
        }
        if self.current.is_none() {
            if let Some(r) = self.requests.get(self.next) {
                if r.arrive <= t {
                    self.current = Some((self.next, r.energy_kwh));
                    self.next += 1;
                }
            }
        }
        if let Some(active) = self.active(t) {
            let reachable = active.max_kw * step_hours * active.remaining_steps as f64;
            if active.remaining_kwh > reachable + FINISHED_TOLERANCE_KWH {
                return Err(self.infeasible(
                    active.index,
                    format!(
                        "{} kWh left but only {} kWh reachable at max power",
                        active.remaining_kwh, reachable
                    ),
                ));
            }
        }
        Ok(())
    }

    /// The request being served at step `t`, if any.
    pub fn active(&self, t: usize) -> Option<ActiveRequest> {
        let (idx, remaining) = self.current?;
        let r = &self.requests[idx];
        (r.arrive <= t && t < r.depart).then(|| ActiveRequest {
            index: idx,
            energy_kwh: r.energy_kwh,
            max_kw: r.max_kw,
            remaining_kwh: remaining,
            remaining_steps: r.depart - t,
            total_steps: r.total_steps(),
        })
    }

    /// True once every request has been served.
    pub fn is_done(&self) -> bool {
        self.current.is_none() && self.next == self.requests.len()
    }

    fn infeasible(&self, idx: usize, message: String) -> Error {
        Error::Infeasible {
            household: self.requests[idx].household.to_string(),
            request: idx,
            message,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(max_kw: f64) -> ChargingRequest {
        ChargingRequest {
            household: "h".into(),
            arrive: 10,
            depart: 20,
            energy_kwh: 5.0,
            max_kw,
        }
    }

    #[test]
    fn nothing_active_before_arrival() {
        let reqs = [req(8.0)];
        let mut tr = RequestTracker::new(&reqs);
        tr.advance(9, 0.0, 0.25).unwrap();
        assert!(tr.active(9).is_none());
    }

    #[test]
    fn untouched_request_reports_full_energy() {
        let reqs = [req(8.0)];
        let mut tr = RequestTracker::new(&reqs);
        tr.advance(10, 0.0, 0.25).unwrap();
        let a = tr.active(10).unwrap();
        assert_eq!(a.remaining_kwh, 5.0);
        assert_eq!(a.remaining_steps, 10);
        assert_eq!(a.total_steps, 10);
    }

    #[test]
    fn one_step_at_twenty_kw_finishes_five_kwh() {
        let reqs = [req(20.0)];
        let mut tr = RequestTracker::new(&reqs);
        tr.advance(10, 0.0, 0.25).unwrap();
        tr.advance(11, 20.0, 0.25).unwrap();
        assert!(tr.active(11).is_none());
        assert!(tr.is_done());
    }

    #[test]
    fn missing_the_deadline_is_an_error() {
        let reqs = [req(8.0)];
        let mut tr = RequestTracker::new(&reqs);
        let mut res = Ok(());
        for t in 10..=20 {
            res = tr.advance(t, 0.0, 0.25);
            if res.is_err() {
                break;
            }
        }
        assert!(matches!(res, Err(Error::Infeasible { .. })));
    }

    #[test]
    fn speed_bounds() {
        let a = ActiveRequest {
            index: 0,
            energy_kwh: 8.0,
            max_kw: 8.0,
            remaining_kwh: 8.0,
            remaining_steps: 4,
            total_steps: 4,
        };
        assert_eq!(a.min_speed(0.25), 8.0);
        let b = ActiveRequest {
            remaining_kwh: 2.0,
            ..a
        };
        assert_eq!(b.min_speed(0.25), 0.0);
        assert_eq!(b.constant_speed(0.25), 2.0);
        assert_eq!(b.max_speed(0.25), 8.0);
        let c = ActiveRequest {
            remaining_kwh: 1.0,
            remaining_steps: 1,
            ..a
        };
        assert_eq!(c.max_speed(0.25), 4.0);
        assert_eq!(c.min_speed(0.25), 4.0);
    }
}
