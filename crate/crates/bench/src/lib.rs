//! Shared fixtures for the benchmarks.

use gridcharge_core::{synth_scenario, Scenario, SynthConfig};

/// Synthetic fleet of `households` over `days`, seed 0.
pub fn fleet(households: usize, days: usize) -> Scenario {
    synth_scenario(&SynthConfig {
        households,
        days,
        ..Default::default()
    })
    .expect("valid generator settings")
    .scenario
}
