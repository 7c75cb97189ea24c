//! Scenario construction: CSV ingestion and a seeded synthetic generator
//! that builds charging requests from consumption traces and travel records.

mod csvio;
mod synth;

pub use csvio::{
    read_loads, read_requests, read_scenario_dir, read_splits, read_travels, write_loads, write_requests,
    write_scenario_dir, write_splits, write_travels, LOADS_FILE, REQUESTS_FILE, SPLITS_FILE, TRAVELS_FILE,
};
pub use synth::{synth_scenario, Splits, SynthConfig, SynthOutput};

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, Weekday};
use rand::Rng;

use crate::domain::{ChargingRequest, HouseholdId, Timebase, SECONDS_PER_DAY};
use crate::error::{Error, Result};

/// ISO-8601 without zone, used by every CSV the toolkit reads or writes.
pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

pub fn parse_timestamp(s: &str) -> std::result::Result<NaiveDateTime, chrono::ParseError> {
    NaiveDateTime::parse_from_str(s.trim(), TIMESTAMP_FORMAT)
}

/// One day's car usage: leaves home at `depart_s`, returns at `return_s`
/// (seconds of day). A return earlier than the departure is on the next day.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TravelRecord {
    pub day_of_week: Weekday,
    pub depart_s: u32,
    pub return_s: u32,
}

impl TravelRecord {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.depart_s >= SECONDS_PER_DAY || self.return_s >= SECONDS_PER_DAY {
            return Err(format!(
                "times {} / {} must be within [0, {SECONDS_PER_DAY})",
                self.depart_s, self.return_s
            ));
        }
        if self.depart_s == self.return_s {
            return Err("departure and return coincide".into());
        }
        Ok(())
    }

    fn depart_on(&self, day: NaiveDate) -> NaiveDateTime {
        day.and_hms_opt(0, 0, 0).unwrap() + Duration::seconds(i64::from(self.depart_s))
    }

    fn return_on(&self, day: NaiveDate) -> NaiveDateTime {
        let d = if self.return_s < self.depart_s { day.succ_opt().unwrap() } else { day };
        d.and_hms_opt(0, 0, 0).unwrap() + Duration::seconds(i64::from(self.return_s))
    }
}

/// Travel records grouped by day of week.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TravelPool {
    by_day: [Vec<TravelRecord>; 7],
}

impl TravelPool {
    pub fn new(records: impl IntoIterator<Item = TravelRecord>) -> Result<Self> {
        let mut pool = Self::default();
        for r in records {
            r.validate().map_err(Error::invalid)?;
            pool.by_day[r.day_of_week.num_days_from_monday() as usize].push(r);
        }
        Ok(pool)
    }

    pub fn len(&self) -> usize {
        self.by_day.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn on(&self, day: Weekday) -> &[TravelRecord] {
        &self.by_day[day.num_days_from_monday() as usize]
    }

    /// Every record, Monday first, in insertion order within a day.
    pub fn records(&self) -> impl Iterator<Item = &TravelRecord> {
        self.by_day.iter().flatten()
    }

    pub fn sample<R: Rng + ?Sized>(&self, day: Weekday, rng: &mut R) -> Result<TravelRecord> {
        let options = self.on(day);
        if options.is_empty() {
            return Err(Error::invalid(format!("travel pool has no records for {day}")));
        }
        Ok(options[rng.random_range(0..options.len())])
    }
}

/// Turns one household's charging trace into plug-in requests.
///
/// For every calendar day `d` touching the timeline a travel with the same
/// day of week is drawn. The request runs from the return on `d` to the
/// departure on `d + 1` (arrival rounded up, departure rounded down to the
/// step grid, both clipped to the timeline), and asks for the energy the
/// trace spent between the departures on `d` and `d + 1`. The power limit
/// is the largest value of the trace. Empty requests are dropped; requests
/// needing more than fits in their interval are capped at the capacity.
pub fn build_requests<R: Rng + ?Sized>(
    household: &HouseholdId,
    timebase: &Timebase,
    load: &[f64],
    charging: &[f64],
    travels: &TravelPool,
    rng: &mut R,
) -> Result<Vec<ChargingRequest>> {
    let n = timebase.n_steps;
    if load.len() != n || charging.len() != n {
        return Err(Error::Dimension {
            what: "household trace length",
            expected: n,
            actual: if load.len() != n { load.len() } else { charging.len() },
        });
    }
    if let Some(t) = (0..n).find(|&t| charging[t] > load[t] + 1e-9 || charging[t] < 0.0) {
        return Err(Error::invalid(format!(
            "household {household}: charging {} exceeds total load {} at step {t}",
            charging[t], load[t]
        )));
    }
    let max_kw = charging.iter().copied().fold(0.0, f64::max);
    if max_kw == 0.0 {
        return Ok(Vec::new());
    }

    let step_h = timebase.step_hours();
    let first = timebase.start.date().pred_opt().unwrap();
    let last = timebase.timestamp(n - 1).date();
    let days: Vec<NaiveDate> = first.iter_days().take_while(|d| *d <= last).collect();
    let mut trips = Vec::with_capacity(days.len() + 1);
    for d in &days {
        trips.push(travels.sample(d.weekday(), rng)?);
    }
    let after = last.succ_opt().unwrap();
    trips.push(travels.sample(after.weekday(), rng)?);

    let step_floor = |ts: NaiveDateTime| -> usize {
        let secs = (ts - timebase.start).num_seconds();
        secs.div_euclid(i64::from(timebase.step_seconds)).clamp(0, n as i64) as usize
    };
    let step_ceil = |ts: NaiveDateTime| -> usize {
        let secs = (ts - timebase.start).num_seconds();
        let s = i64::from(timebase.step_seconds);
        (secs.div_euclid(s) + i64::from(secs.rem_euclid(s) != 0)).clamp(0, n as i64) as usize
    };

    let mut requests: Vec<ChargingRequest> = Vec::new();
    for (i, day) in days.iter().enumerate() {
        let next = day.succ_opt().unwrap();
        let leave = step_floor(trips[i].depart_on(*day));
        let leave_next = step_floor(trips[i + 1].depart_on(next));
        let energy: f64 = charging[leave..leave_next.max(leave)].iter().sum::<f64>() * step_h;
        if energy <= 0.0 {
            continue;
        }
        let prev_depart = requests.last().map_or(0, |r| r.depart);
        let arrive = step_ceil(trips[i].return_on(*day)).max(prev_depart);
        let depart = leave_next;
        if arrive >= depart {
            log::warn!("household {household}: {day} has {energy:.3} kWh of charging but no plug-in window; dropped");
            continue;
        }
        let mut req = ChargingRequest {
            household: household.clone(),
            arrive,
            depart,
            energy_kwh: energy,
            max_kw,
        };
        let cap = req.capacity_kwh(step_h);
        if energy > cap {
            log::warn!(
                "household {household}: request on {day} needs {energy:.3} kWh, capped at {cap:.3} kWh"
            );
            req.energy_kwh = cap;
        }
        requests.push(req);
    }
    Ok(requests)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const H: u32 = 3600;

    fn pool(depart_h: u32, return_h: u32) -> TravelPool {
        let all = [
            Weekday::Mon,
            Weekday::Tue,
            Weekday::Wed,
            Weekday::Thu,
            Weekday::Fri,
            Weekday::Sat,
            Weekday::Sun,
        ];
        TravelPool::new(all.iter().map(|&d| TravelRecord {
            day_of_week: d,
            depart_s: depart_h * H,
            return_s: return_h * H,
        }))
        .unwrap()
    }

    fn timebase(days: usize) -> Timebase {
        let start = NaiveDate::from_ymd_opt(2015, 1, 5).unwrap().and_hms_opt(0, 0, 0).unwrap();
        Timebase::quarter_hourly(start, days * 96)
    }

    #[test]
    fn no_charging_means_no_requests() {
        let tb = timebase(3);
        let load = vec![1.0; tb.n_steps];
        let zeros = vec![0.0; tb.n_steps];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = build_requests(&"h".into(), &tb, &load, &zeros, &pool(8, 18), &mut rng).unwrap();
        assert!(r.is_empty());
    }

    #[test]
    fn request_spans_return_to_next_departure() {
        let tb = timebase(3);
        let mut charging = vec![0.0; tb.n_steps];
        // 4 kW for two steps on day 0 evening: 2 kWh.
        charging[19 * 4] = 4.0;
        charging[19 * 4 + 1] = 4.0;
        let load: Vec<f64> = charging.iter().map(|c| c + 1.0).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = build_requests(&"h".into(), &tb, &load, &charging, &pool(8, 18), &mut rng).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!((r[0].arrive, r[0].depart), (18 * 4, 96 + 8 * 4));
        assert_eq!(r[0].energy_kwh, 2.0);
        assert_eq!(r[0].max_kw, 4.0);
    }

    #[test]
    fn energy_telescopes_between_departures() {
        let tb = timebase(7);
        let mut charging = vec![0.0; tb.n_steps];
        for (k, t) in [100usize, 130, 200, 260, 333, 400, 512, 540].into_iter().enumerate() {
            charging[t] = 1.0 + k as f64;
        }
        let load: Vec<f64> = charging.iter().map(|c| c + 0.5).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let r = build_requests(&"h".into(), &tb, &load, &charging, &pool(7, 17), &mut rng).unwrap();
        let requested: f64 = r.iter().map(|q| q.energy_kwh).sum();
        let total: f64 = charging.iter().sum::<f64>() * tb.step_hours();
        assert!((requested - total).abs() < 1e-12);
        assert!(r.windows(2).all(|w| w[0].depart <= w[1].arrive));
    }

    #[test]
    fn midnight_crossing_return_starts_next_day() {
        let tb = timebase(3);
        let mut charging = vec![0.0; tb.n_steps];
        charging[96 + 4] = 2.0;
        let load: Vec<f64> = charging.iter().map(|c| c + 0.5).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        // leave 10:00, return 00:30 on the following day
        let mut p = pool(10, 0);
        for d in &mut p.by_day {
            d[0].return_s = 1800;
        }
        let r = build_requests(&"h".into(), &tb, &load, &charging, &p, &mut rng).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].arrive, 96 + 2);
        assert_eq!(r[0].depart, 96 + 40);
    }

    #[test]
    fn oversized_energy_is_capped() {
        let tb = timebase(2);
        let mut charging = vec![0.0; tb.n_steps];
        // charging while the car is away makes the next request infeasible
        for c in &mut charging[40..90] {
            *c = 5.0;
        }
        let load: Vec<f64> = charging.iter().map(|c| c + 0.5).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = build_requests(&"h".into(), &tb, &load, &charging, &pool(8, 23), &mut rng).unwrap();
        assert_eq!(r.len(), 1);
        // 62.5 kWh requested, 36 steps at 5 kW available
        assert_eq!(r[0].energy_kwh, r[0].capacity_kwh(tb.step_hours()));
        assert_eq!(r[0].energy_kwh, 45.0);
    }

    #[test]
    fn empty_weekday_is_an_error() {
        let tb = timebase(2);
        let mut charging = vec![0.0; tb.n_steps];
        charging[80] = 1.0;
        let load = vec![2.0; tb.n_steps];
        let monday_only = TravelPool::new([TravelRecord {
            day_of_week: Weekday::Mon,
            depart_s: 8 * H,
            return_s: 18 * H,
        }])
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(build_requests(&"h".into(), &tb, &load, &charging, &monday_only, &mut rng).is_err());
    }

    #[test]
    fn sampled_travel_matches_weekday() {
        let p = pool(8, 18);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for d in [Weekday::Mon, Weekday::Sat, Weekday::Sun] {
            for _ in 0..10 {
                assert_eq!(p.sample(d, &mut rng).unwrap().day_of_week, d);
            }
        }
    }
}
