use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use chrono::{NaiveDateTime, Weekday};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{parse_timestamp, Splits, TravelPool, TravelRecord, TIMESTAMP_FORMAT};
use crate::domain::{ChargingRequest, Household, HouseholdId, Scenario, Timebase};
use crate::error::{Error, Result};

pub const LOADS_FILE: &str = "loads.csv";
pub const REQUESTS_FILE: &str = "requests.csv";
pub const TRAVELS_FILE: &str = "travels.csv";
pub const SPLITS_FILE: &str = "splits.csv";

#[derive(Debug, Serialize, Deserialize)]
struct LoadRow {
    timestamp: String,
    household_id: String,
    baseline_kw: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct RequestRow {
    household_id: String,
    t_arrive_iso: String,
    t_depart_iso: String,
    required_kwh: f64,
    max_kw: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct TravelRow {
    day_of_week: String,
    depart_s: u32,
    return_s: u32,
}

#[derive(Debug, Serialize, Deserialize)]
struct SplitRow {
    split: String,
    start_step: usize,
    end_step: usize,
    start_timestamp: String,
}

/// Deserialises every row of `path`, pairing each with its line number.
fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let mut rows = Vec::new();
    for (i, rec) in rdr.deserialize::<T>().enumerate() {
        let line = i + 2;
        match rec {
            Ok(r) => rows.push((line, r)),
            Err(e) => {
                let line = e.position().map_or(line, |p| p.line() as usize);
                return Err(Error::at_row(path, line, e.to_string()));
            }
        }
    }
    Ok(rows)
}

fn timestamp_at(path: &Path, line: usize, s: &str) -> Result<NaiveDateTime> {
    parse_timestamp(s).map_err(|e| Error::at_row(path, line, format!("bad timestamp {s:?}: {e}")))
}

/// Long format, time-major: `timestamp,household_id,baseline_kw`.
pub fn write_loads(path: &Path, scenario: &Scenario) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for t in 0..scenario.n_steps() {
        let ts = scenario.timebase.timestamp(t).format(TIMESTAMP_FORMAT).to_string();
        for h in &scenario.households {
            w.serialize(LoadRow {
                timestamp: ts.clone(),
                household_id: h.id.0.clone(),
                baseline_kw: h.baseline[t],
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads `loads.csv` into a timebase and request-less households, in order
/// of first appearance. Timestamps must form a regular grid and every
/// household needs exactly one value per step.
pub fn read_loads(path: &Path) -> Result<(Timebase, Vec<Household>)> {
    let rows: Vec<(usize, LoadRow)> = read_rows(path)?;
    if rows.is_empty() {
        return Err(Error::Validation {
            file: Some(path.to_path_buf()),
            row: None,
            message: "no load rows".into(),
        });
    }
    let mut parsed = Vec::with_capacity(rows.len());
    let mut stamps = BTreeSet::new();
    for (line, r) in &rows {
        let ts = timestamp_at(path, *line, &r.timestamp)?;
        if !(r.baseline_kw.is_finite() && r.baseline_kw >= 0.0) {
            return Err(Error::at_row(path, *line, format!("baseline {} must be a non-negative number", r.baseline_kw)));
        }
        stamps.insert(ts);
        parsed.push((*line, ts, r));
    }
    let stamps: Vec<NaiveDateTime> = stamps.into_iter().collect();
    let start = stamps[0];
    let step_seconds = if stamps.len() > 1 {
        (stamps[1] - stamps[0]).num_seconds()
    } else {
        900
    };
    let step_seconds = u32::try_from(step_seconds)
        .map_err(|_| Error::at_row(path, 2, format!("unusable step of {step_seconds} s")))?;
    let tb = Timebase::new(step_seconds, start, stamps.len()).map_err(|e| Error::Validation {
        file: Some(path.to_path_buf()),
        row: None,
        message: e.to_string(),
    })?;

    let mut order: Vec<HouseholdId> = Vec::new();
    let mut series: HashMap<HouseholdId, Vec<Option<f64>>> = HashMap::new();
    for (line, ts, r) in parsed {
        let step = match tb.step_of(ts) {
            Some(s) if s >= 0 && (s as usize) < tb.n_steps => s as usize,
            _ => {
                return Err(Error::at_row(
                    path,
                    line,
                    format!("timestamp {} is off the {step_seconds} s grid starting {start}", r.timestamp),
                ))
            }
        };
        let id = HouseholdId(r.household_id.clone());
        let slot = series.entry(id.clone()).or_insert_with(|| {
            order.push(id.clone());
            vec![None; tb.n_steps]
        });
        if slot[step].replace(r.baseline_kw).is_some() {
            return Err(Error::at_row(path, line, format!("second value for household {id} at {}", r.timestamp)));
        }
    }
    let households = order
        .into_iter()
        .map(|id| {
            let values = series.remove(&id).unwrap();
            let baseline = values
                .iter()
                .enumerate()
                .map(|(t, v)| {
                    v.ok_or_else(|| Error::Validation {
                        file: Some(path.to_path_buf()),
                        row: None,
                        message: format!("household {id} has no value at {}", tb.timestamp(t).format(TIMESTAMP_FORMAT)),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(Household {
                id,
                baseline,
                requests: Vec::new(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((tb, households))
}

/// `household_id,t_arrive_iso,t_depart_iso,required_kwh,max_kw`
pub fn write_requests(path: &Path, scenario: &Scenario) -> Result<()> {
    let tb = &scenario.timebase;
    let mut w = csv::Writer::from_path(path)?;
    for r in scenario.requests() {
        w.serialize(RequestRow {
            household_id: r.household.0.clone(),
            t_arrive_iso: tb.timestamp(r.arrive).format(TIMESTAMP_FORMAT).to_string(),
            t_depart_iso: tb.timestamp(r.depart).format(TIMESTAMP_FORMAT).to_string(),
            required_kwh: r.energy_kwh,
            max_kw: r.max_kw,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Attaches the requests in `path` to `households`. Times must lie on the
/// grid of `tb`; departure may equal the end of the horizon.
pub fn read_requests(path: &Path, tb: &Timebase, households: &mut [Household]) -> Result<()> {
    let index: HashMap<HouseholdId, usize> = households.iter().enumerate().map(|(i, h)| (h.id.clone(), i)).collect();
    let step_at = |line: usize, s: &str| -> Result<usize> {
        let ts = timestamp_at(path, line, s)?;
        match tb.step_of(ts) {
            Some(k) if k >= 0 && k as usize <= tb.n_steps => Ok(k as usize),
            _ => Err(Error::at_row(path, line, format!("time {s} is not a step of the load timeline"))),
        }
    };
    for (line, r) in read_rows::<RequestRow>(path)? {
        let id = HouseholdId(r.household_id.clone());
        let &h = index
            .get(&id)
            .ok_or_else(|| Error::at_row(path, line, format!("household {id} has no load series")))?;
        let req = ChargingRequest {
            household: id,
            arrive: step_at(line, &r.t_arrive_iso)?,
            depart: step_at(line, &r.t_depart_iso)?,
            energy_kwh: r.required_kwh,
            max_kw: r.max_kw,
        };
        if req.arrive >= req.depart {
            return Err(Error::at_row(path, line, "arrival is not before departure"));
        }
        if !(req.energy_kwh.is_finite() && req.energy_kwh >= 0.0 && req.max_kw.is_finite() && req.max_kw > 0.0) {
            return Err(Error::at_row(path, line, "energy must be >= 0 and max power > 0"));
        }
        if req.energy_kwh > req.capacity_kwh(tb.step_hours()) * (1.0 + 1e-12) {
            return Err(Error::at_row(
                path,
                line,
                format!(
                    "{} kWh does not fit in {} steps at {} kW",
                    req.energy_kwh,
                    req.total_steps(),
                    req.max_kw
                ),
            ));
        }
        households[h].requests.push(req);
    }
    Ok(())
}

/// `day_of_week,depart_s,return_s` with days as `Mon` .. `Sun`.
pub fn write_travels(path: &Path, pool: &TravelPool) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in pool.records() {
        w.serialize(TravelRow {
            day_of_week: r.day_of_week.to_string(),
            depart_s: r.depart_s,
            return_s: r.return_s,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_travels(path: &Path) -> Result<TravelPool> {
    let mut records = Vec::new();
    for (line, r) in read_rows::<TravelRow>(path)? {
        let day: Weekday = r
            .day_of_week
            .parse()
            .map_err(|_| Error::at_row(path, line, format!("unknown day of week {:?}", r.day_of_week)))?;
        let rec = TravelRecord {
            day_of_week: day,
            depart_s: r.depart_s,
            return_s: r.return_s,
        };
        rec.validate().map_err(|m| Error::at_row(path, line, m))?;
        records.push(rec);
    }
    TravelPool::new(records)
}

/// `split,start_step,end_step,start_timestamp`
pub fn write_splits(path: &Path, tb: &Timebase, splits: &Splits) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for (name, range) in splits.iter() {
        w.serialize(SplitRow {
            split: name.to_owned(),
            start_step: range.start,
            end_step: range.end,
            start_timestamp: tb.timestamp(range.start).format(TIMESTAMP_FORMAT).to_string(),
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_splits(path: &Path, n_steps: usize) -> Result<Splits> {
    let mut found: HashMap<String, std::ops::Range<usize>> = HashMap::new();
    for (line, r) in read_rows::<SplitRow>(path)? {
        if r.start_step >= r.end_step || r.end_step > n_steps {
            return Err(Error::at_row(
                path,
                line,
                format!("split {}..{} outside 0..{n_steps}", r.start_step, r.end_step),
            ));
        }
        if !matches!(r.split.as_str(), "train" | "tune" | "test") {
            return Err(Error::at_row(path, line, format!("unknown split {:?}", r.split)));
        }
        found.insert(r.split, r.start_step..r.end_step);
    }
    let mut take = |name: &str| {
        found.remove(name).ok_or_else(|| Error::Validation {
            file: Some(path.to_path_buf()),
            row: None,
            message: format!("missing {name} split"),
        })
    };
    Ok(Splits {
        train: take("train")?,
        tune: take("tune")?,
        test: take("test")?,
    })
}

/// Writes `loads.csv`, `requests.csv` and, when given, `splits.csv` and
/// `travels.csv` into `dir`, creating it if needed.
pub fn write_scenario_dir(
    dir: &Path,
    scenario: &Scenario,
    splits: Option<&Splits>,
    travels: Option<&TravelPool>,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_loads(&dir.join(LOADS_FILE), scenario)?;
    write_requests(&dir.join(REQUESTS_FILE), scenario)?;
    if let Some(s) = splits {
        write_splits(&dir.join(SPLITS_FILE), &scenario.timebase, s)?;
    }
    if let Some(t) = travels {
        write_travels(&dir.join(TRAVELS_FILE), t)?;
    }
    Ok(())
}

/// Reads a scenario directory; `splits.csv` is optional.
pub fn read_scenario_dir(dir: &Path) -> Result<(Scenario, Option<Splits>)> {
    let (tb, mut households) = read_loads(&dir.join(LOADS_FILE))?;
    let requests = dir.join(REQUESTS_FILE);
    if requests.exists() {
        read_requests(&requests, &tb, &mut households)?;
    }
    let scenario = Scenario::new(tb, households)?;
    let splits_path = dir.join(SPLITS_FILE);
    let splits = if splits_path.exists() {
        Some(read_splits(&splits_path, scenario.n_steps())?)
    } else {
        None
    };
    Ok((scenario, splits))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_scenario, SynthConfig};
    use chrono::NaiveDate;
    use proptest::prelude::*;

    fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn synthetic_scenario_roundtrips() {
        let out = synth_scenario(&SynthConfig {
            households: 5,
            days: 11,
            seed: 2,
            ..Default::default()
        })
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_scenario_dir(dir.path(), &out.scenario, Some(&out.splits), Some(&out.travels)).unwrap();
        let (s, splits) = read_scenario_dir(dir.path()).unwrap();
        assert_eq!(s, out.scenario);
        assert_eq!(splits, Some(out.splits));
        assert_eq!(read_travels(&dir.path().join(TRAVELS_FILE)).unwrap(), out.travels);
    }

    #[test]
    fn load_errors_name_the_row() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "loads.csv",
            "timestamp,household_id,baseline_kw\n\
             2015-01-01T00:00:00,a,1.0\n\
             2015-01-01T00:15:00,a,-2.0\n",
        );
        match read_loads(&p).unwrap_err() {
            Error::Validation { row, .. } => assert_eq!(row, Some(3)),
            e => panic!("unexpected {e}"),
        }
        let p = write(
            dir.path(),
            "loads2.csv",
            "timestamp,household_id,baseline_kw\n\
             2015-01-01T00:00:00,a,1.0\n\
             2015-01-01T00:15:00,a,1.0\n\
             2015-01-01T00:15:00,b,1.0\n",
        );
        assert!(matches!(read_loads(&p), Err(Error::Validation { row: None, .. })));
        let p = write(
            dir.path(),
            "loads3.csv",
            "timestamp,household_id,baseline_kw\n\
             2015-01-01T00:00:00,a,1.0\n\
             yesterday,a,1.0\n",
        );
        assert!(matches!(read_loads(&p), Err(Error::Validation { row: Some(3), .. })));
    }

    #[test]
    fn request_errors_name_the_row() {
        let dir = tempfile::tempdir().unwrap();
        let start = NaiveDate::from_ymd_opt(2015, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
        let tb = Timebase::quarter_hourly(start, 8);
        let mut hh = vec![Household {
            id: "a".into(),
            baseline: vec![1.0; 8],
            requests: vec![],
        }];
        let p = write(
            dir.path(),
            "r.csv",
            "household_id,t_arrive_iso,t_depart_iso,required_kwh,max_kw\n\
             a,2015-01-01T00:00:00,2015-01-01T01:00:00,1.0,4.0\n\
             a,2015-01-01T01:00:00,2015-01-01T01:30:00,9.0,4.0\n",
        );
        assert!(matches!(
            read_requests(&p, &tb, &mut hh),
            Err(Error::Validation { row: Some(3), .. })
        ));
        let p = write(
            dir.path(),
            "r2.csv",
            "household_id,t_arrive_iso,t_depart_iso,required_kwh,max_kw\n\
             zz,2015-01-01T00:00:00,2015-01-01T01:00:00,1.0,4.0\n",
        );
        assert!(matches!(
            read_requests(&p, &tb, &mut hh),
            Err(Error::Validation { row: Some(2), .. })
        ));
        let p = write(
            dir.path(),
            "r3.csv",
            "household_id,t_arrive_iso,t_depart_iso,required_kwh,max_kw\n\
             a,2015-01-01T00:07:00,2015-01-01T01:00:00,1.0,4.0\n",
        );
        assert!(read_requests(&p, &tb, &mut hh).is_err());
    }

    #[test]
    fn travel_days_parse() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "t.csv", "day_of_week,depart_s,return_s\nSat,3600,7200\nfunday,1,2\n");
        assert!(matches!(read_travels(&p), Err(Error::Validation { row: Some(3), .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn arbitrary_scenarios_roundtrip(
            base in proptest::collection::vec(0.0f64..50.0, 12),
            arrive in 0usize..5,
            len in 1usize..7,
            frac in 0.0f64..1.0,
            max_kw in 0.5f64..20.0,
        ) {
            let start = NaiveDate::from_ymd_opt(2015, 3, 8).unwrap().and_hms_opt(16, 0, 0).unwrap();
            let tb = Timebase::quarter_hourly(start, 6);
            let cap = max_kw * len.min(6 - arrive) as f64 * 0.25;
            let depart = (arrive + len).min(6);
            let hh = vec![
                Household { id: "x".into(), baseline: base[..6].to_vec(), requests: vec![ChargingRequest {
                    household: "x".into(), arrive, depart, energy_kwh: cap * frac + 1e-3, max_kw: max_kw + 1.0,
                }] },
                Household { id: "y".into(), baseline: base[6..].to_vec(), requests: vec![] },
            ];
            let s = Scenario::new(tb, hh).unwrap();
            let dir = tempfile::tempdir().unwrap();
            write_scenario_dir(dir.path(), &s, None, None).unwrap();
            let (r, splits) = read_scenario_dir(dir.path()).unwrap();
            prop_assert_eq!(r, s);
            prop_assert!(splits.is_none());
        }
    }
}
