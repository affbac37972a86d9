//! Multivariate time-series classification data: `.ts` and long-format CSV
//! ingestion, normalization, and a synthetic task generator.

mod csv;
mod normalize;
mod synthetic;
mod ts;

use std::path::Path;

pub use self::csv::{parse_csv, write_csv, CsvSchema};
pub use normalize::{normalize, NormMode, NormalizationSpec};
pub use synthetic::{synthetic_sines, SyntheticSpec};
pub use ts::{parse_ts, parse_ts_with, write_ts, TsFile, TsOptions};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// A multivariate series (`len × dims`, time-major) with its class label.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSeries {
    values: Matrix,
    label: usize,
    id: String,
}

impl LabeledSeries {
    pub fn new(values: Matrix, label: usize, id: impl Into<String>) -> Result<Self> {
        let id = id.into();
        if values.rows() == 0 || values.cols() == 0 {
            return Err(Error::Series {
                series: id,
                msg: "needs at least one step and one dimension".into(),
            });
        }
        if !values.is_finite() {
            return Err(Error::Series {
                series: id,
                msg: "contains non-finite values".into(),
            });
        }
        Ok(LabeledSeries { values, label, id })
    }

    /// Number of time steps.
    pub fn len(&self) -> usize {
        self.values.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.rows() == 0
    }

    pub fn dims(&self) -> usize {
        self.values.cols()
    }

    pub fn label(&self) -> usize {
        self.label
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    /// Input vector at step `t`.
    pub fn step(&self, t: usize) -> &[f64] {
        self.values.row(t)
    }

    pub(crate) fn map_values(&self, f: impl Fn(usize, f64) -> f64) -> LabeledSeries {
        let d = self.dims();
        let values = Matrix::from_fn(self.len(), d, |t, j| f(j, self.values.get(t, j)));
        LabeledSeries {
            values,
            label: self.label,
            id: self.id.clone(),
        }
    }
}

/// Train/test split sharing one label vocabulary, dimension and length.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub train: Vec<LabeledSeries>,
    pub test: Vec<LabeledSeries>,
    pub vocabulary: Vec<String>,
    pub dims: usize,
    pub length: usize,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        train: Vec<LabeledSeries>,
        test: Vec<LabeledSeries>,
        vocabulary: Vec<String>,
    ) -> Result<Self> {
        let first = train
            .first()
            .or(test.first())
            .ok_or_else(|| Error::Data("dataset has no series".into()))?;
        let (dims, length) = (first.dims(), first.len());
        for s in train.iter().chain(&test) {
            if s.dims() != dims || s.len() != length {
                return Err(Error::Series {
                    series: s.id().to_string(),
                    msg: format!(
                        "shape {}x{} differs from the dataset's {length}x{dims}; only equal-length data is supported",
                        s.len(),
                        s.dims()
                    ),
                });
            }
            if s.label() >= vocabulary.len() {
                return Err(Error::Series {
                    series: s.id().to_string(),
                    msg: format!(
                        "label index {} outside vocabulary of {}",
                        s.label(),
                        vocabulary.len()
                    ),
                });
            }
        }
        Ok(Dataset {
            name: name.into(),
            train,
            test,
            vocabulary,
            dims,
            length,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.vocabulary.len()
    }

    /// Combines two parsed `.ts` halves; both must agree on vocabulary and shape.
    pub fn from_ts(name: impl Into<String>, train: TsFile, test: TsFile) -> Result<Self> {
        if train.class_labels != test.class_labels {
            return Err(Error::Data(format!(
                "train and test class vocabularies differ: {:?} vs {:?}",
                train.class_labels, test.class_labels
            )));
        }
        Dataset::new(name, train.series, test.series, train.class_labels)
    }

    /// Loads a train/test pair, choosing the parser by file extension
    /// (`.ts` or `.csv`).
    pub fn load(train: &Path, test: &Path) -> Result<Self> {
        let name = train
            .file_stem()
            .map(|s| s.to_string_lossy().trim_end_matches("_TRAIN").to_string())
            .unwrap_or_default();
        let read = |p: &Path| std::fs::read(p).map_err(|e| Error::io(p, e));
        match (ext(train).as_str(), ext(test).as_str()) {
            ("ts", "ts") => {
                let tr = parse_ts(&read(train)?, &train.display().to_string())?;
                let te = parse_ts(&read(test)?, &test.display().to_string())?;
                Dataset::from_ts(name, tr, te)
            }
            ("csv", "csv") => {
                let tr = parse_csv(&read(train)?, &CsvSchema::default())?;
                let schema = CsvSchema {
                    vocabulary: Some(tr.class_labels.clone()),
                };
                let te = parse_csv(&read(test)?, &schema)?;
                Dataset::from_ts(name, tr, te)
            }
            (a, b) => Err(Error::Data(format!(
                "unsupported dataset formats '{a}' and '{b}' (expected matching .ts or .csv files)"
            ))),
        }
    }
}

fn ext(p: &Path) -> String {
    p.extension()
        .map(|e| e.to_string_lossy().to_ascii_lowercase())
        .unwrap_or_default()
}
