use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::controllers::EsnReservoir;
use crate::error::{Error, Result};

/// Which observations reach the controller.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InputMode {
    /// Household signals plus the grid total ("type A").
    #[serde(rename = "A")]
    All,
    /// Household-local signals only ("type H").
    #[serde(rename = "H")]
    Household,
}

impl InputMode {
    pub const fn n_features(self) -> usize {
        match self {
            InputMode::All => 17,
            InputMode::Household => 12,
        }
    }

    pub fn letter(self) -> &'static str {
        match self {
            InputMode::All => "A",
            InputMode::Household => "H",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    Nn,
    Esn,
    MaxCharge,
    MinCharge,
    ConstCharge,
}

impl ControllerKind {
    pub fn is_baseline(self) -> bool {
        matches!(
            self,
            ControllerKind::MaxCharge | ControllerKind::MinCharge | ControllerKind::ConstCharge
        )
    }
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ControllerKind::Nn => "NN",
            ControllerKind::Esn => "ESN",
            ControllerKind::MaxCharge => "max charge",
            ControllerKind::MinCharge => "min charge",
            ControllerKind::ConstCharge => "const charge",
        })
    }
}

/// Two-layer perceptron `sigm(w2 . relu(w1 x + b1) + b2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NnWeights {
    pub d_in: usize,
    pub hidden: usize,
    /// Row-major `hidden x d_in`.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl NnWeights {
    pub const DEFAULT_HIDDEN: usize = 5;

    pub fn zeros(d_in: usize, hidden: usize) -> Self {
        Self {
            d_in,
            hidden,
            w1: vec![0.0; hidden * d_in],
            b1: vec![0.0; hidden],
            w2: vec![0.0; hidden],
            b2: 0.0,
        }
    }

    /// Every weight and bias drawn from `0.1 * N(0, 1)`.
    pub fn random<R: Rng + ?Sized>(d_in: usize, hidden: usize, rng: &mut R) -> Self {
        let mut w = Self::zeros(d_in, hidden);
        let values: Vec<f64> = (0..w.n_params()).map(|_| small_normal(rng)).collect();
        w.set_flat(&values).expect("length matches by construction");
        w
    }

    pub fn n_params(&self) -> usize {
        self.hidden * self.d_in + 2 * self.hidden + 1
    }

    /// Layout: w1 (row-major), b1, w2, b2.
    pub fn flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.n_params());
        v.extend_from_slice(&self.w1);
        v.extend_from_slice(&self.b1);
        v.extend_from_slice(&self.w2);
        v.push(self.b2);
        v
    }

    pub fn set_flat(&mut self, values: &[f64]) -> Result<()> {
        check_len("NN parameter vector", self.n_params(), values.len())?;
        let (w1, rest) = values.split_at(self.hidden * self.d_in);
        let (b1, rest) = rest.split_at(self.hidden);
        let (w2, rest) = rest.split_at(self.hidden);
        self.w1.copy_from_slice(w1);
        self.b1.copy_from_slice(b1);
        self.w2.copy_from_slice(w2);
        self.b2 = rest[0];
        Ok(())
    }
}

/// Trainable ESN readout over the concatenation `(reservoir state, inputs)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EsnReadout {
    pub w_out: Vec<f64>,
    pub b_out: f64,
}

impl EsnReadout {
    pub fn zeros(width: usize) -> Self {
        Self {
            w_out: vec![0.0; width],
            b_out: 0.0,
        }
    }

    pub fn random<R: Rng + ?Sized>(width: usize, rng: &mut R) -> Self {
        Self {
            w_out: (0..width).map(|_| small_normal(rng)).collect(),
            b_out: small_normal(rng),
        }
    }
}

fn small_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    0.1 * rng.sample::<f64, _>(StandardNormal)
}

fn check_len(what: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Dimension {
            what,
            expected,
            actual,
        })
    }
}

#[derive(Debug, Clone)]
pub enum ControlModule {
    Nn(NnWeights),
    /// The reservoir is fixed and shared; only the readout is trained.
    Esn {
        readout: EsnReadout,
        reservoir: Arc<EsnReservoir>,
    },
    MaxCharge,
    MinCharge,
    ConstCharge,
}

/// Everything that defines a controller: the control module, which inputs
/// it sees, and the output filter coefficient `beta`.
#[derive(Debug, Clone)]
pub struct ControllerParams {
    pub input_mode: InputMode,
    pub control: ControlModule,
    pub beta: f64,
}

impl ControllerParams {
    pub fn nn(input_mode: InputMode, weights: NnWeights) -> Result<Self> {
        check_len("NN input width", input_mode.n_features(), weights.d_in)?;
        let p = Self {
            input_mode,
            control: ControlModule::Nn(weights),
            beta: 0.0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn esn(input_mode: InputMode, reservoir: Arc<EsnReservoir>, readout: EsnReadout) -> Result<Self> {
        let p = Self {
            input_mode,
            control: ControlModule::Esn { readout, reservoir },
            beta: 0.0,
        };
        p.validate()?;
        Ok(p)
    }

    /// Randomly initialised NN controller with the default hidden width.
    pub fn random_nn<R: Rng + ?Sized>(input_mode: InputMode, rng: &mut R) -> Self {
        let w = NnWeights::random(input_mode.n_features(), NnWeights::DEFAULT_HIDDEN, rng);
        Self::nn(input_mode, w).expect("dimensions derived from the mode")
    }

    pub fn random_esn<R: Rng + ?Sized>(reservoir: Arc<EsnReservoir>, rng: &mut R) -> Self {
        let input_mode = reservoir.input_mode();
        let readout = EsnReadout::random(reservoir.readout_width(), rng);
        Self::esn(input_mode, reservoir, readout).expect("dimensions derived from the reservoir")
    }

    pub fn baseline(kind: ControllerKind) -> Result<Self> {
        let control = match kind {
            ControllerKind::MaxCharge => ControlModule::MaxCharge,
            ControllerKind::MinCharge => ControlModule::MinCharge,
            ControllerKind::ConstCharge => ControlModule::ConstCharge,
            other => return Err(Error::Config(format!("{other} is not a baseline controller"))),
        };
        Ok(Self {
            input_mode: InputMode::Household,
            control,
            beta: 0.0,
        })
    }

    pub fn kind(&self) -> ControllerKind {
        match self.control {
            ControlModule::Nn(_) => ControllerKind::Nn,
            ControlModule::Esn { .. } => ControllerKind::Esn,
            ControlModule::MaxCharge => ControllerKind::MaxCharge,
            ControlModule::MinCharge => ControllerKind::MinCharge,
            ControlModule::ConstCharge => ControllerKind::ConstCharge,
        }
    }

    /// Display name in the `model-inputs` style, e.g. `NN-A`.
    pub fn label(&self) -> String {
        match self.kind() {
            k if k.is_baseline() => k.to_string(),
            k => format!("{k}-{}", self.input_mode.letter()),
        }
    }

    pub fn with_beta(mut self, beta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&beta) {
            return Err(Error::Config(format!("beta {beta} outside [0, 1]")));
        }
        self.beta = beta;
        Ok(self)
    }

    pub fn reservoir_size(&self) -> usize {
        match &self.control {
            ControlModule::Esn { reservoir, .. } => reservoir.size(),
            _ => 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d_in = self.input_mode.n_features();
        match &self.control {
            ControlModule::Nn(w) => {
                check_len("NN input width", d_in, w.d_in)?;
                check_len("NN w1", w.hidden * w.d_in, w.w1.len())?;
                check_len("NN b1", w.hidden, w.b1.len())?;
                check_len("NN w2", w.hidden, w.w2.len())?;
            }
            ControlModule::Esn { readout, reservoir } => {
                check_len("ESN input width", d_in, reservoir.d_in())?;
                check_len("ESN readout", reservoir.readout_width(), readout.w_out.len())?;
            }
            _ => {}
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::Config(format!("beta {} outside [0, 1]", self.beta)));
        }
        Ok(())
    }

    pub fn n_trainable(&self) -> usize {
        match &self.control {
            ControlModule::Nn(w) => w.n_params(),
            ControlModule::Esn { readout, .. } => readout.w_out.len() + 1,
            _ => 0,
        }
    }

    /// Trainable control-module parameters as one flat vector. `beta` and the
    /// fixed reservoir are not part of it.
    pub fn trainable(&self) -> Vec<f64> {
        match &self.control {
            ControlModule::Nn(w) => w.flat(),
            ControlModule::Esn { readout, .. } => {
                let mut v = readout.w_out.clone();
                v.push(readout.b_out);
                v
            }
            _ => Vec::new(),
        }
    }

    pub fn with_trainable(&self, values: &[f64]) -> Result<Self> {
        check_len("trainable parameter vector", self.n_trainable(), values.len())?;
        let mut p = self.clone();
        match &mut p.control {
            ControlModule::Nn(w) => w.set_flat(values)?,
            ControlModule::Esn { readout, .. } => {
                let (w, b) = values.split_at(values.len() - 1);
                readout.w_out.copy_from_slice(w);
                readout.b_out = b[0];
            }
            _ => {}
        }
        Ok(p)
    }
}
