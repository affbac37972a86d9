use std::path::Path;

use serde::{Deserialize, Serialize};

use super::spec::Variant;
use crate::data::NormalizationSpec;
use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::reservoir::{Activation, DeepEsn, ReservoirLayer};
use crate::trainer::TrainConfig;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerRecord {
    pub w_in: Matrix,
    pub w_rec: Matrix,
    pub leak_alpha: f64,
    pub activation: Activation,
}

/// A trained model with everything needed to classify raw series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub format_version: u32,
    pub library_version: String,
    pub variant: Variant,
    pub config: TrainConfig,
    pub normalization: NormalizationSpec,
    pub vocabulary: Vec<String>,
    pub layers: Vec<LayerRecord>,
    pub w_out: Matrix,
    pub feedback: Vec<Matrix>,
}

impl ModelFile {
    pub fn new(
        esn: &DeepEsn,
        variant: Variant,
        config: &TrainConfig,
        normalization: &NormalizationSpec,
        vocabulary: &[String],
    ) -> Self {
        ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            library_version: env!("CARGO_PKG_VERSION").to_string(),
            variant,
            config: config.clone(),
            normalization: normalization.clone(),
            vocabulary: vocabulary.to_vec(),
            layers: esn
                .layers()
                .iter()
                .map(|l| LayerRecord {
                    w_in: l.w_in().clone(),
                    w_rec: l.w_rec().clone(),
                    leak_alpha: l.leak_alpha(),
                    activation: l.activation(),
                })
                .collect(),
            w_out: esn.w_out().clone(),
            feedback: esn.feedback().to_vec(),
        }
    }

    /// Rebuilds the network. Recurrent matrices are taken as stored; their
    /// spectral radius was checked when the model was first built.
    pub fn to_esn(&self) -> Result<DeepEsn> {
        let layers = self
            .layers
            .iter()
            .map(|l| {
                ReservoirLayer::from_parts_unconstrained(
                    l.w_in.clone(),
                    l.w_rec.clone(),
                    l.leak_alpha,
                    l.activation,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        DeepEsn::new(layers, self.w_out.clone(), self.feedback.clone())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        #[derive(Deserialize)]
        struct Probe {
            format_version: u32,
        }
        let probe: Probe = serde_json::from_slice(bytes)?;
        if probe.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Version {
                found: probe.format_version,
                expected: MODEL_FORMAT_VERSION,
            });
        }
        let model: ModelFile = serde_json::from_slice(bytes)?;
        if model.normalization.dims() != model.config_input_dim() {
            return Err(Error::invalid(
                "model normalization and input dimension disagree",
            ));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&bytes)
    }

    fn config_input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.w_in.cols())
    }
}
