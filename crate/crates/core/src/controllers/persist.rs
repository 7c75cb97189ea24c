use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{EsnReservoir, EsnReservoirSpec};
use crate::domain::{ControlModule, ControllerKind, ControllerParams, EsnReadout, InputMode, NnWeights};
use crate::error::{Error, Result};

pub const PARAMS_FORMAT: &str = "gridcharge-params";
pub const PARAMS_VERSION: u32 = 1;

/// On-disk controller description. Reservoir matrices are not stored; they
/// are regenerated from `reservoir` (which carries the seed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsFile {
    pub format: String,
    pub version: u32,
    pub kind: ControllerKind,
    pub input_mode: InputMode,
    pub d_in: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reservoir: Option<EsnReservoirSpec>,
    pub trainable: Vec<f64>,
    pub beta: f64,
    /// Step length of the scenario the controller was trained on.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_seconds: Option<u32>,
}

impl ParamsFile {
    pub fn from_params(p: &ControllerParams) -> Self {
        let (hidden, reservoir) = match &p.control {
            ControlModule::Nn(w) => (Some(w.hidden), None),
            ControlModule::Esn { reservoir, .. } => (None, Some(*reservoir.spec())),
            _ => (None, None),
        };
        Self {
            format: PARAMS_FORMAT.to_owned(),
            version: PARAMS_VERSION,
            kind: p.kind(),
            input_mode: p.input_mode,
            d_in: p.input_mode.n_features(),
            hidden,
            reservoir,
            trainable: p.trainable(),
            beta: p.beta,
            step_seconds: None,
        }
    }

    pub fn into_params(self) -> Result<ControllerParams> {
        if self.format != PARAMS_FORMAT {
            return Err(Error::invalid(format!("not a params file (format {:?})", self.format)));
        }
        if self.version != PARAMS_VERSION {
            return Err(Error::invalid(format!(
                "params version {} unsupported (expected {PARAMS_VERSION})",
                self.version
            )));
        }
        if self.d_in != self.input_mode.n_features() {
            return Err(Error::Dimension {
                what: "stored input width",
                expected: self.input_mode.n_features(),
                actual: self.d_in,
            });
        }
        let params = match self.kind {
            ControllerKind::Nn => {
                let hidden = self
                    .hidden
                    .ok_or_else(|| Error::invalid("NN params without a hidden width"))?;
                let mut w = NnWeights::zeros(self.d_in, hidden);
                w.set_flat(&self.trainable)?;
                ControllerParams::nn(self.input_mode, w)?
            }
            ControllerKind::Esn => {
                let spec = self
                    .reservoir
                    .ok_or_else(|| Error::invalid("ESN params without a reservoir spec"))?;
                let reservoir = Arc::new(EsnReservoir::build(spec, self.input_mode)?);
                let template =
                    ControllerParams::esn(self.input_mode, reservoir.clone(), EsnReadout::zeros(reservoir.readout_width()))?;
                template.with_trainable(&self.trainable)?
            }
            kind => {
                let mut p = ControllerParams::baseline(kind)?;
                p.input_mode = self.input_mode;
                p
            }
        };
        params.with_beta(self.beta)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

impl ControllerParams {
    pub fn save(&self, path: &Path) -> Result<()> {
        ParamsFile::from_params(self).save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        ParamsFile::load(path)?.into_params()
    }
}
