use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::ops::Range;
use std::path::Path;

use chrono::{Datelike, Duration, NaiveDateTime, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{build_requests, parse_timestamp, TravelPool, TravelRecord, TIMESTAMP_FORMAT};
use crate::domain::{Household, HouseholdId, Scenario, Timebase};
use crate::error::{Error, Result};

/// Generator settings. Read from a flat `key = value` file; `#` starts a
/// comment. Keys are the field names; split days are optional and must be
/// given together.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub households: usize,
    pub days: usize,
    pub start: NaiveDateTime,
    pub step_seconds: u32,
    /// Target share of charging energy in total consumption.
    pub charging_share: f64,
    pub travels_per_weekday: usize,
    pub noise_ar: f64,
    pub noise_sigma: f64,
    pub weekend_factor: f64,
    pub train_days: Option<usize>,
    pub tune_days: Option<usize>,
    pub test_days: Option<usize>,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            households: 74,
            days: 44,
            start: parse_timestamp("2015-01-02T16:00:00").unwrap(),
            step_seconds: 900,
            charging_share: 0.18,
            travels_per_weekday: 450,
            noise_ar: 0.9,
            noise_sigma: 0.12,
            weekend_factor: 1.1,
            train_days: None,
            tune_days: None,
            test_days: None,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value, got {line:?}", i + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if seen.insert(key.to_owned(), i + 1).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key {key}", i + 1)));
            }
            let bad = |e: &dyn std::fmt::Display| Error::Config(format!("line {}: {key}: {e}", i + 1));
            macro_rules! num {
                () => {
                    value.parse().map_err(|e| bad(&e))?
                };
            }
            match key {
                "households" => cfg.households = num!(),
                "days" => cfg.days = num!(),
                "start" => cfg.start = parse_timestamp(value).map_err(|e| bad(&e))?,
                "step_seconds" => cfg.step_seconds = num!(),
                "charging_share" => cfg.charging_share = num!(),
                "travels_per_weekday" => cfg.travels_per_weekday = num!(),
                "noise_ar" => cfg.noise_ar = num!(),
                "noise_sigma" => cfg.noise_sigma = num!(),
                "weekend_factor" => cfg.weekend_factor = num!(),
                "train_days" => cfg.train_days = Some(num!()),
                "tune_days" => cfg.tune_days = Some(num!()),
                "test_days" => cfg.test_days = Some(num!()),
                "seed" => cfg.seed = num!(),
                other => return Err(Error::Config(format!("line {}: unknown key {other}", i + 1))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// The config in the file format, every key spelled out.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| s.push_str(&format!("{k} = {v}\n"));
        put("households", self.households.to_string());
        put("days", self.days.to_string());
        put("start", self.start.format(TIMESTAMP_FORMAT).to_string());
        put("step_seconds", self.step_seconds.to_string());
        put("charging_share", self.charging_share.to_string());
        put("travels_per_weekday", self.travels_per_weekday.to_string());
        put("noise_ar", self.noise_ar.to_string());
        put("noise_sigma", self.noise_sigma.to_string());
        put("weekend_factor", self.weekend_factor.to_string());
        if let (Some(a), Some(b), Some(c)) = (self.train_days, self.tune_days, self.test_days) {
            put("train_days", a.to_string());
            put("tune_days", b.to_string());
            put("test_days", c.to_string());
        }
        put("seed", self.seed.to_string());
        s
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.households == 0 {
            return fail("households must be at least 1".into());
        }
        if self.step_seconds == 0 || 86_400 % self.step_seconds != 0 || 3600 % self.step_seconds != 0 {
            return fail(format!("step_seconds {} must divide an hour", self.step_seconds));
        }
        if !(self.charging_share > 0.0 && self.charging_share < 1.0) {
            return fail(format!("charging_share {} must be in (0, 1)", self.charging_share));
        }
        if self.travels_per_weekday == 0 {
            return fail("travels_per_weekday must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.noise_ar) || self.noise_sigma < 0.0 || self.weekend_factor <= 0.0 {
            return fail("noise_ar must be in [0, 1), noise_sigma >= 0 and weekend_factor > 0".into());
        }
        self.split_days().map(|_| ())
    }

    /// `(train, tune, test)` day counts. Without explicit values the 15/8/21
    /// layout over 44 days is scaled to `days`.
    pub fn split_days(&self) -> Result<(usize, usize, usize)> {
        let split = match (self.train_days, self.tune_days, self.test_days) {
            (Some(a), Some(b), Some(c)) => {
                if a + b + c != self.days {
                    return Err(Error::Config(format!(
                        "split days {a} + {b} + {c} do not add up to {} days",
                        self.days
                    )));
                }
                (a, b, c)
            }
            (None, None, None) => {
                let train = (self.days as f64 * 15.0 / 44.0).round() as usize;
                let tune = (self.days as f64 * 8.0 / 44.0).round() as usize;
                (train, tune, self.days.saturating_sub(train + tune))
            }
            _ => {
                return Err(Error::Config(
                    "train_days, tune_days and test_days must be given together".into(),
                ))
            }
        };
        if split.0 == 0 || split.1 == 0 || split.2 == 0 {
            return Err(Error::Config(format!(
                "every split needs at least one day; got {split:?} from {} days",
                self.days
            )));
        }
        Ok(split)
    }
}

/// Contiguous, day-aligned step ranges of the three experiment phases.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Splits {
    pub train: Range<usize>,
    pub tune: Range<usize>,
    pub test: Range<usize>,
}

impl Splits {
    pub fn get(&self, name: &str) -> Option<Range<usize>> {
        match name {
            "train" => Some(self.train.clone()),
            "tune" => Some(self.tune.clone()),
            "test" => Some(self.test.clone()),
            _ => None,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&'static str, Range<usize>)> {
        [
            ("train", self.train.clone()),
            ("tune", self.tune.clone()),
            ("test", self.test.clone()),
        ]
        .into_iter()
    }
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub scenario: Scenario,
    pub splits: Splits,
    pub travels: TravelPool,
}

const WEEKDAYS: [Weekday; 7] = [
    Weekday::Mon,
    Weekday::Tue,
    Weekday::Wed,
    Weekday::Thu,
    Weekday::Fri,
    Weekday::Sat,
    Weekday::Sun,
];

/// Seeded synthetic fleet: double-peak household baselines with weekly
/// modulation and AR(1) noise, a travel pool with morning departures and
/// evening returns, per-household charging traces turned into requests by
/// [`build_requests`], and baselines rescaled so charging is
/// `charging_share` of the total energy.
pub fn synth_scenario(config: &SynthConfig) -> Result<SynthOutput> {
    config.validate()?;
    let (train_days, tune_days, test_days) = config.split_days()?;
    let n = config.days * 86_400 / config.step_seconds as usize;
    let tb = Timebase::new(config.step_seconds, config.start, n)?;
    let padded = Timebase::new(config.step_seconds, config.start, n + tb.steps_per_day())?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let travels = travel_pool(config.travels_per_weekday, &mut rng)?;
    let day_factor = shared_day_factors(&padded, &mut rng);

    let mut households = Vec::with_capacity(config.households);
    for i in 0..config.households {
        let id = HouseholdId(format!("h{:03}", i + 1));
        let baseline = household_baseline(config, &padded, &day_factor, &mut rng);
        let charging = charging_trace(&padded, &travels, &mut rng)?;
        let load: Vec<f64> = baseline.iter().zip(&charging).map(|(b, c)| b + c).collect();
        let requests = build_requests(&id, &padded, &load, &charging, &travels, &mut rng)?;
        households.push(Household { id, baseline, requests });
    }

    let mut scenario = Scenario::new(padded, households)?.slice(0..n)?;
    let step_h = tb.step_hours();
    let requested = scenario.total_requested_kwh();
    let base: f64 = scenario.baseline_total().iter().sum::<f64>() * step_h;
    if requested > 0.0 && base > 0.0 {
        let k = requested * (1.0 - config.charging_share) / (config.charging_share * base);
        for h in &mut scenario.households {
            for b in &mut h.baseline {
                *b *= k;
            }
        }
    } else {
        log::warn!("synthetic fleet has no charging; baselines left unscaled");
    }

    let spd = tb.steps_per_day();
    let a = train_days * spd;
    let b = a + tune_days * spd;
    let splits = Splits {
        train: 0..a,
        tune: a..b,
        test: b..b + test_days * spd,
    };
    Ok(SynthOutput {
        scenario,
        splits,
        travels,
    })
}

fn gauss(rng: &mut ChaCha8Rng, mean: f64, sd: f64) -> f64 {
    Normal::new(mean, sd).expect("positive sd").sample(rng)
}

fn travel_pool(per_weekday: usize, rng: &mut ChaCha8Rng) -> Result<TravelPool> {
    let mut records = Vec::with_capacity(per_weekday * 7);
    for day in WEEKDAYS {
        let weekend = matches!(day, Weekday::Sat | Weekday::Sun);
        for _ in 0..per_weekday {
            let (dep_h, ret_h) = if weekend {
                let d = gauss(rng, 10.0, 2.0).clamp(6.0, 16.0);
                (d, d + gauss(rng, 5.0, 2.5).clamp(1.0, 12.0))
            } else {
                let d = gauss(rng, 7.5, 1.0).clamp(5.0, 11.0);
                (d, gauss(rng, 17.5, 1.5).clamp(d + 1.0, 25.5))
            };
            let to_s = |h: f64| ((h * 3600.0).round() as u32 / 60 * 60) % 86_400;
            records.push(TravelRecord {
                day_of_week: day,
                depart_s: to_s(dep_h),
                return_s: to_s(ret_h),
            });
        }
    }
    TravelPool::new(records)
}

/// Fleet-wide multiplicative level per calendar day (weather and similar).
fn shared_day_factors(tb: &Timebase, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n_days = tb.n_steps / tb.steps_per_day() + 2;
    let mut level = 0.0;
    (0..n_days)
        .map(|_| {
            level = 0.7 * level + gauss(rng, 0.0, 0.05);
            1.0 + level
        })
        .collect()
}

fn bump(hour: f64, centre: f64, width: f64) -> f64 {
    let mut d = (hour - centre).rem_euclid(24.0);
    if d > 12.0 {
        d -= 24.0;
    }
    (-0.5 * (d / width).powi(2)).exp()
}

fn household_baseline(config: &SynthConfig, tb: &Timebase, day_factor: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let scale = rng.random_range(0.5..1.5);
    let floor = rng.random_range(0.3..0.6);
    let morning = (7.0 + rng.random_range(-1.0..1.0), rng.random_range(0.3..0.8));
    let evening = (19.0 + rng.random_range(-1.5..1.5), rng.random_range(0.6..1.4));
    let midday = rng.random_range(0.1..0.4);
    let first_day = tb.start.date();
    let mut noise = 0.0;
    (0..tb.n_steps)
        .map(|t| {
            let ts = tb.timestamp(t);
            let hour = f64::from(tb.seconds_of_day(t)) / 3600.0;
            let weekend = matches!(ts.weekday(), Weekday::Sat | Weekday::Sun);
            let (m_shift, day_level) = if weekend { (1.5, config.weekend_factor) } else { (0.0, 1.0) };
            let shape = floor
                + morning.1 * bump(hour, morning.0 + m_shift, 1.2)
                + evening.1 * bump(hour, evening.0, 2.0)
                + midday * day_level * bump(hour, 13.0, 3.0)
                + 0.05 * (2.0 * PI * hour / 24.0).cos();
            noise = config.noise_ar * noise + gauss(rng, 0.0, config.noise_sigma.max(1e-12));
            let day = (ts.date() - first_day).num_days() as usize;
            let weekly = if weekend { config.weekend_factor } else { 1.0 };
            (scale * shape * weekly * day_factor[day] * (1.0 + noise)).max(0.05 * scale)
        })
        .collect()
}

/// Observed EV consumption: the car charges at its charger power after it
/// comes home until the day's driving energy is replaced.
fn charging_trace(tb: &Timebase, travels: &TravelPool, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let n = tb.n_steps;
    let step_h = tb.step_hours();
    let charger: f64 = [3.3, 6.6, 7.2][rng.random_range(0..3)];
    let appetite = rng.random_range(0.6..1.4);
    let mut trace = vec![0.0; n];
    let first = tb.start.date();
    let last = tb.timestamp(n - 1).date();
    for day in first.iter_days().take_while(|d| *d <= last) {
        let weekend = matches!(day.weekday(), Weekday::Sat | Weekday::Sun);
        let trip = travels.sample(day.weekday(), rng)?;
        let drives = rng.random_bool(if weekend { 0.6 } else { 0.85 });
        let need = rng.random_range(4.0..14.0) * appetite;
        if !drives {
            continue;
        }
        let ret_day = if trip.return_s < trip.depart_s { day.succ_opt().unwrap() } else { day };
        let ret = ret_day.and_hms_opt(0, 0, 0).unwrap() + Duration::seconds(i64::from(trip.return_s));
        let secs = (ret - tb.start).num_seconds();
        if secs < 0 {
            continue;
        }
        let mut t = (secs as usize).div_ceil(tb.step_seconds as usize);
        let mut left = need;
        while left > 1e-12 && t < n {
            let p = charger.min(left / step_h);
            trace[t] += p;
            left -= p * step_h;
            t += 1;
        }
    }
    Ok(trace)
}
