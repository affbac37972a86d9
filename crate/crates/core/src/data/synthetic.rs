use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Dataset, LabeledSeries};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, SeededRng};

/// Noisy multi-channel sinusoids; class `c` oscillates at `base_freq · (c + 1)`
/// cycles per series with random per-series phase, around the level
/// `class_offset · (c − (classes − 1) / 2)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub dims: usize,
    pub length: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    #[serde(default = "default_freq")]
    pub base_freq: f64,
    #[serde(default = "default_noise")]
    pub noise: f64,
    #[serde(default = "default_offset")]
    pub class_offset: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_freq() -> f64 {
    2.0
}

fn default_noise() -> f64 {
    0.3
}

fn default_offset() -> f64 {
    0.5
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            classes: 2,
            dims: 2,
            length: 60,
            train_per_class: 10,
            test_per_class: 10,
            base_freq: default_freq(),
            noise: default_noise(),
            class_offset: default_offset(),
            seed: 0,
        }
    }
}

pub fn synthetic_sines(spec: &SyntheticSpec) -> Result<Dataset> {
    if spec.classes == 0 || spec.dims == 0 || spec.length < 2 {
        return Err(Error::invalid("synthetic task needs classes, dims >= 1 and length >= 2"));
    }
    if !(spec.noise >= 0.0 && spec.noise.is_finite()) {
        return Err(Error::invalid("synthetic noise must be non-negative"));
    }
    if !spec.class_offset.is_finite() {
        return Err(Error::invalid("synthetic class_offset must be finite"));
    }
    let rng = SeededRng::new(spec.seed);
    let noise = Normal::new(0.0, spec.noise.max(f64::MIN_POSITIVE)).unwrap();
    let make = |split: &str, per_class: usize| -> Result<Vec<LabeledSeries>> {
        let mut s = rng.stream(&format!("synthetic/{split}"));
        let mut out = Vec::with_capacity(per_class * spec.classes);
        // Interleave classes so every prefix of the split stays balanced.
        for k in 0..per_class {
            for c in 0..spec.classes {
                let freq = spec.base_freq * (c + 1) as f64;
                let level = spec.class_offset * (c as f64 - (spec.classes - 1) as f64 / 2.0);
                let phases: Vec<f64> = (0..spec.dims)
                    .map(|_| s.random_range(0.0..std::f64::consts::TAU))
                    .collect();
                let values = Matrix::from_fn(spec.length, spec.dims, |t, j| {
                    let x = t as f64 / spec.length as f64;
                    let clean = (std::f64::consts::TAU * freq * x + phases[j]).sin();
                    let eps = if spec.noise > 0.0 { noise.sample(&mut s) } else { 0.0 };
                    level + clean + eps
                });
                out.push(LabeledSeries::new(values, c, format!("{split}#{}", k * spec.classes + c))?);
            }
        }
        Ok(out)
    };
    let train = make("train", spec.train_per_class)?;
    let test = make("test", spec.test_per_class)?;
    let vocabulary = (0..spec.classes).map(|c| format!("class{c}")).collect();
    Dataset::new("synthetic", train, test, vocabulary)
}
