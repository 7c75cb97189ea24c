use std::fs;
use std::path::Path;

use super::{Histogram, Metrics};
use crate::data::TIMESTAMP_FORMAT;
use crate::domain::{SimResult, Timebase};
use crate::error::Result;

/// `step,timestamp,grid_kw,charging_kw_total`
pub fn write_loads_csv(path: &Path, timebase: &Timebase, result: &SimResult) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["step", "timestamp", "grid_kw", "charging_kw_total"])?;
    let charging = result.total_charging();
    for (t, (grid, charge)) in result.grid_load.iter().zip(&charging).enumerate() {
        w.write_record([
            t.to_string(),
            timebase.timestamp(t).format(TIMESTAMP_FORMAT).to_string(),
            grid.to_string(),
            charge.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Flat JSON object with every metric field.
pub fn write_metrics_json(path: &Path, metrics: &Metrics) -> Result<()> {
    let mut text = serde_json::to_string_pretty(metrics)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// `bin_lo,bin_hi,count`
pub fn write_histogram_csv(path: &Path, hist: &Histogram) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["bin_lo", "bin_hi", "count"])?;
    for (i, count) in hist.counts.iter().enumerate() {
        w.write_record([
            hist.edges[i].to_string(),
            hist.edges[i + 1].to_string(),
            count.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
