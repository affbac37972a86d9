use serde::{Deserialize, Serialize};

use super::{Dataset, LabeledSeries};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormMode {
    None,
    /// Per-dimension z-score with train-split statistics.
    #[default]
    Zscore,
}

/// Per-dimension affine transform `(x - mean) / std`, fitted on train data.
/// Dimensions with zero variance are stored as mean 0, std 1 and pass
/// through unchanged.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationSpec {
    pub mode: NormMode,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormalizationSpec {
    pub fn identity(dims: usize) -> Self {
        NormalizationSpec {
            mode: NormMode::None,
            mean: vec![0.0; dims],
            std: vec![1.0; dims],
        }
    }

    pub fn fit(train: &[LabeledSeries], mode: NormMode) -> Result<Self> {
        let dims = train
            .first()
            .ok_or_else(|| Error::Data("cannot fit normalization on an empty train split".into()))?
            .dims();
        if mode == NormMode::None {
            return Ok(Self::identity(dims));
        }
        let count: usize = train.iter().map(|s| s.len()).sum();
        let mut mean = vec![0.0; dims];
        for s in train {
            for t in 0..s.len() {
                mean.iter_mut().zip(s.step(t)).for_each(|(m, v)| *m += v);
            }
        }
        mean.iter_mut().for_each(|m| *m /= count as f64);
        let mut var = vec![0.0; dims];
        for s in train {
            for t in 0..s.len() {
                for (j, v) in s.step(t).iter().enumerate() {
                    var[j] += (v - mean[j]).powi(2);
                }
            }
        }
        let mut std: Vec<f64> = var.iter().map(|v| (v / count as f64).sqrt()).collect();
        for j in 0..dims {
            if std[j] <= 1e-12 * mean[j].abs().max(1.0) {
                mean[j] = 0.0;
                std[j] = 1.0;
            }
        }
        Ok(NormalizationSpec { mode, mean, std })
    }

    pub fn dims(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, s: &LabeledSeries) -> Result<LabeledSeries> {
        if s.dims() != self.dims() {
            return Err(Error::Series {
                series: s.id().to_string(),
                msg: format!(
                    "has {} dimensions, normalization expects {}",
                    s.dims(),
                    self.dims()
                ),
            });
        }
        if self.mode == NormMode::None {
            return Ok(s.clone());
        }
        Ok(s.map_values(|j, v| (v - self.mean[j]) / self.std[j]))
    }

    pub fn apply_all(&self, series: &[LabeledSeries]) -> Result<Vec<LabeledSeries>> {
        series.iter().map(|s| self.apply(s)).collect()
    }

    pub fn apply_dataset(&self, ds: &Dataset) -> Result<Dataset> {
        Ok(Dataset {
            name: ds.name.clone(),
            train: self.apply_all(&ds.train)?,
            test: self.apply_all(&ds.test)?,
            vocabulary: ds.vocabulary.clone(),
            dims: ds.dims,
            length: ds.length,
        })
    }
}

/// Fits on the train split and transforms both splits with those statistics.
pub fn normalize(ds: &Dataset, mode: NormMode) -> Result<(Dataset, NormalizationSpec)> {
    let spec = NormalizationSpec::fit(&ds.train, mode)?;
    Ok((spec.apply_dataset(ds)?, spec))
}
