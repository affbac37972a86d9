use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{synthetic_sines, Dataset, NormMode, SyntheticSpec};
use crate::error::{Error, Result};
use crate::trainer::TrainConfig;

/// Which of the compared model families a spec trains.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Deep stack, hidden input matrices trained by feedback alignment.
    #[default]
    DfaDeepEsn,
    /// Deep stack with fixed random input matrices; readout only.
    DeepEsn,
    /// One reservoir (`config.depth` must be 1); readout only.
    SingleReservoir,
}

impl Variant {
    pub fn with_feedback(self) -> bool {
        self == Variant::DfaDeepEsn
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::DfaDeepEsn => "dfa-deep-esn",
            Variant::DeepEsn => "deep-esn",
            Variant::SingleReservoir => "single-reservoir",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataSpec {
    /// Train and test files (`.ts` or `.csv`); relative paths resolve against
    /// the spec file's directory.
    Files { train: PathBuf, test: PathBuf },
    Synthetic {
        #[serde(flatten)]
        spec: SyntheticSpec,
    },
}

/// Settings for finite-difference alignment tracking.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlignSpec {
    /// Probed coordinates per matrix.
    pub probes: usize,
    /// Central-difference step.
    pub h: f64,
}

impl Default for AlignSpec {
    fn default() -> Self {
        AlignSpec { probes: 64, h: 1e-5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    #[serde(default)]
    pub variant: Variant,
    pub data: DataSpec,
    #[serde(default)]
    pub normalization: NormMode,
    #[serde(default)]
    pub config: TrainConfig,
    /// Seeds for `sweep`; `train` uses `config.seed`.
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub align: AlignSpec,
}

/// A parsed spec together with where it came from.
#[derive(Clone, Debug)]
pub struct LoadedSpec {
    pub spec: ExperimentSpec,
    pub path: PathBuf,
    /// Hex SHA-256 of the spec file's bytes.
    pub sha256: String,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        if self.variant == Variant::SingleReservoir && self.config.depth != 1 {
            return Err(Error::invalid(format!(
                "variant single-reservoir needs config.depth = 1, got {}",
                self.config.depth
            )));
        }
        if self.align.probes == 0 || !(self.align.h > 0.0) {
            return Err(Error::invalid("align.probes and align.h must be positive"));
        }
        Ok(())
    }

    /// Seeds a sweep runs over: `seeds`, or just `config.seed` when empty.
    pub fn sweep_seeds(&self) -> Vec<u64> {
        if self.seeds.is_empty() {
            vec![self.config.seed]
        } else {
            self.seeds.clone()
        }
    }

    pub fn with_seed(&self, seed: u64) -> ExperimentSpec {
        let mut s = self.clone();
        s.config.seed = seed;
        s.seeds = vec![seed];
        s
    }
}

impl LoadedSpec {
    pub fn from_file(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let spec = parse_spec(&bytes, &path.display().to_string())?;
        Ok(LoadedSpec {
            spec,
            path: path.to_path_buf(),
            sha256: hex_sha256(&bytes),
        })
    }

    pub fn base_dir(&self) -> &Path {
        self.path.parent().unwrap_or(Path::new("."))
    }

    /// Loads the raw (unnormalized) dataset the spec points at.
    pub fn dataset(&self) -> Result<Dataset> {
        match &self.spec.data {
            DataSpec::Files { train, test } => {
                let base = self.base_dir();
                Dataset::load(&base.join(train), &base.join(test))
            }
            DataSpec::Synthetic { spec } => synthetic_sines(spec),
        }
    }
}

/// Parses and validates a spec, reporting the JSON path of any bad field.
pub fn parse_spec(bytes: &[u8], source_name: &str) -> Result<ExperimentSpec> {
    let de = &mut serde_json::Deserializer::from_slice(bytes);
    let spec: ExperimentSpec = serde_path_to_error::deserialize(de).map_err(|e| Error::Spec {
        path: source_name.to_string(),
        msg: format!("at '{}': {}", e.path(), e.inner()),
    })?;
    spec.validate().map_err(|e| Error::Spec {
        path: source_name.to_string(),
        msg: e.to_string(),
    })?;
    Ok(spec)
}

pub fn hex_sha256(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
