//! Decentralized EV charging: per-household neural controllers, a discrete
//! grid simulator, CMA-ES and numerical-gradient trainers, a synthetic
//! scenario generator and a clairvoyant QP lower bound.

pub mod controllers;
pub mod data;
pub mod domain;
pub mod error;
pub mod features;
pub mod optim;
pub mod oracle;
pub mod simulator;

pub use controllers::{EsnReservoir, EsnReservoirSpec};
pub use data::{read_scenario_dir, synth_scenario, write_scenario_dir, Splits, SynthConfig, TravelPool, TravelRecord};
pub use domain::{
    ChargingRequest, ControlModule, ControllerKind, ControllerParams, ControllerState, EsnReadout, Household,
    HouseholdId, InputMode, NnWeights, Scenario, SimResult, Timebase,
};
pub use error::{Error, Result};
pub use optim::{tune_beta, CmaEsConfig, GradConfig, BETA_GRID};
pub use oracle::{qp_lower_bound, OracleResult};
pub use simulator::{metrics, objective, simulate, simulate_window, Metrics};
