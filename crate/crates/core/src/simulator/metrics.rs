use serde::{Deserialize, Serialize};

use crate::domain::SimResult;
use crate::error::{Error, Result};

/// Divides by N, not N - 1.
pub fn population_std(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Percentile `p` (0..=100) of ascending `sorted`, interpolating linearly
/// between order statistics at rank `p / 100 * (n - 1)`.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of an empty sample");
    let rank = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = rank - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Load statistics over the post-warm-up steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub objective_std: f64,
    pub mean_load: f64,
    pub min_load: f64,
    pub p2_5: f64,
    pub p97_5: f64,
    pub max_load: f64,
    pub n_steps: usize,
    /// Step-to-step load changes `c_t - c_{t-1}`, both steps post-warm-up.
    #[serde(skip)]
    pub changes: Vec<f64>,
}

impl Metrics {
    pub fn from_loads(loads: &[f64]) -> Result<Self> {
        if loads.len() < 2 {
            return Err(Error::Config(format!(
                "metrics need at least 2 post-warm-up steps, got {}",
                loads.len()
            )));
        }
        let mut sorted = loads.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self {
            objective_std: population_std(loads),
            mean_load: loads.iter().sum::<f64>() / loads.len() as f64,
            min_load: sorted[0],
            p2_5: percentile(&sorted, 2.5),
            p97_5: percentile(&sorted, 97.5),
            max_load: sorted[sorted.len() - 1],
            n_steps: loads.len(),
            changes: loads.windows(2).map(|w| w[1] - w[0]).collect(),
        })
    }

    pub fn change_histogram(&self, lo: f64, hi: f64, bins: usize) -> Histogram {
        Histogram::new(&self.changes, lo, hi, bins)
    }
}

pub fn metrics(result: &SimResult) -> Result<Metrics> {
    Metrics::from_loads(result.post_warmup())
}

/// Equal-width histogram over `[lo, hi]`; values outside are clamped into
/// the edge bins.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn new(values: &[f64], lo: f64, hi: f64, bins: usize) -> Self {
        let bins = bins.max(1);
        let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
        let width = (hi - lo) / bins as f64;
        let edges = (0..=bins).map(|i| lo + width * i as f64).collect();
        let mut counts = vec![0; bins];
        for v in values {
            let idx = (((v - lo) / width).floor().max(0.0) as usize).min(bins - 1);
            counts[idx] += 1;
        }
        Self { edges, counts }
    }

    /// Bounds of `values`, for sharing bins between several series.
    pub fn span(values: impl IntoIterator<Item = f64>) -> (f64, f64) {
        values
            .into_iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    }
}
