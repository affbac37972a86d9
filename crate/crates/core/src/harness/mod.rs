//! Experiment orchestration behind the `dfa-esn` command line: spec files,
//! run records, metrics CSV, model persistence, seed sweeps and alignment
//! reports.

mod align;
mod model;
mod spec;

pub use align::{run_alignment, AlignEpoch, AlignReport};
pub use model::{LayerRecord, ModelFile, MODEL_FORMAT_VERSION};
pub use spec::{hex_sha256, parse_spec, AlignSpec, DataSpec, ExperimentSpec, LoadedSpec, Variant};

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{normalize, NormMode};
use crate::error::{Error, Result};
use crate::numerics::SeededRng;
use crate::reservoir::DeepEsn;
use crate::trainer::{evaluate, fit, predict, EpochReport, TrainConfig};

/// Everything a `train` run produced, minus the weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub name: String,
    pub variant: Variant,
    pub seed: u64,
    pub spec_sha256: String,
    pub dataset: String,
    pub normalization: NormMode,
    pub train_size: usize,
    pub test_size: usize,
    pub config: TrainConfig,
    pub epochs: Vec<EpochReport>,
    pub final_train_acc: f64,
    pub final_test_acc: f64,
    pub library_version: String,
}

pub struct TrainOutcome {
    pub record: RunRecord,
    pub model: ModelFile,
}

/// Builds and trains the model a spec describes for one seed. Pure apart
/// from reading the dataset.
pub fn run_training(loaded: &LoadedSpec, seed: Option<u64>) -> Result<TrainOutcome> {
    let spec = match seed {
        Some(s) => loaded.spec.with_seed(s),
        None => loaded.spec.clone(),
    };
    let cfg = train_config(&spec);
    let raw = loaded.dataset()?;
    let (ds, norm) = normalize(&raw, spec.normalization)?;
    let arch = cfg.architecture(ds.dims, ds.num_classes(), spec.variant.with_feedback());
    let mut esn = DeepEsn::build(&SeededRng::new(cfg.seed), &arch)?;
    let epochs = fit(&mut esn, &ds.train, &ds.test, &cfg, |_, _| Ok(()))?;
    let final_train_acc = evaluate(&esn, &ds.train, &cfg)?;
    let final_test_acc = if ds.test.is_empty() {
        f64::NAN
    } else {
        evaluate(&esn, &ds.test, &cfg)?
    };
    let record = RunRecord {
        name: spec.name.clone(),
        variant: spec.variant,
        seed: cfg.seed,
        spec_sha256: loaded.sha256.clone(),
        dataset: ds.name.clone(),
        normalization: spec.normalization,
        train_size: ds.train.len(),
        test_size: ds.test.len(),
        config: cfg.clone(),
        epochs,
        final_train_acc,
        final_test_acc,
        library_version: env!("CARGO_PKG_VERSION").to_string(),
    };
    let model = ModelFile::new(&esn, spec.variant, &cfg, &norm, &ds.vocabulary);
    Ok(TrainOutcome { record, model })
}

/// The training configuration a spec implies; variants without feedback
/// train the readout only.
pub fn train_config(spec: &ExperimentSpec) -> TrainConfig {
    let mut cfg = spec.config.clone();
    cfg.train_hidden = cfg.train_hidden && spec.variant.with_feedback();
    cfg
}

/// Per-epoch metrics as CSV (`epoch,loss,train_acc,test_acc,eta`). Floats
/// use shortest round-trip formatting so identical runs give identical bytes;
/// `test_acc` is empty for epochs without a test evaluation.
pub fn metrics_csv(epochs: &[EpochReport]) -> String {
    let mut out = String::from("epoch,loss,train_acc,test_acc,eta\n");
    for r in epochs {
        let test = r.test_acc.map(|a| a.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{},{},{},{}", r.epoch, r.loss, r.train_acc, test, r.eta);
    }
    out
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn pretty<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// Writes `run.json`, `metrics.csv` and `model.json` into `out`.
pub fn cmd_train(spec_path: &Path, out: &Path, seed: Option<u64>) -> Result<RunRecord> {
    let loaded = LoadedSpec::from_file(spec_path)?;
    create_dir(out)?;
    let TrainOutcome { record, model } = run_training(&loaded, seed)?;
    write(&out.join("run.json"), pretty(&record)?)?;
    write(&out.join("metrics.csv"), metrics_csv(&record.epochs))?;
    model.save(&out.join("model.json"))?;
    Ok(record)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub label: String,
    pub predicted: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub name: String,
    pub variant: Variant,
    pub dataset: String,
    pub test_acc: f64,
    pub predictions: Vec<Prediction>,
}

/// Scores a saved model on the test split of the spec's dataset, using the
/// normalization stored with the model. Writes `eval.json` into `out`.
pub fn cmd_eval(spec_path: &Path, model_path: &Path, out: &Path) -> Result<EvalRecord> {
    let loaded = LoadedSpec::from_file(spec_path)?;
    let model = ModelFile::load(model_path)?;
    let raw = loaded.dataset()?;
    if raw.vocabulary != model.vocabulary {
        return Err(Error::Data(format!(
            "dataset labels {:?} do not match the model's {:?}",
            raw.vocabulary, model.vocabulary
        )));
    }
    let test = model.normalization.apply_all(&raw.test)?;
    if test.is_empty() {
        return Err(Error::Data("test split is empty".into()));
    }
    let esn = model.to_esn()?;
    let preds = predict(&esn, &test, &model.config)?;
    let correct = preds.iter().zip(&test).filter(|((p, _), s)| *p == s.label()).count();
    let record = EvalRecord {
        name: loaded.spec.name.clone(),
        variant: model.variant,
        dataset: raw.name.clone(),
        test_acc: 100.0 * correct as f64 / test.len() as f64,
        predictions: preds
            .iter()
            .zip(&test)
            .map(|((p, _), s)| Prediction {
                id: s.id().to_string(),
                label: model.vocabulary[s.label()].clone(),
                predicted: model.vocabulary[*p].clone(),
            })
            .collect(),
    };
    create_dir(out)?;
    write(&out.join("eval.json"), pretty(&record)?)?;
    Ok(record)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

impl Summary {
    /// `None` for an empty sample.
    pub fn of(values: &[f64]) -> Option<Summary> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let median = if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        };
        Some(Summary {
            median,
            min: v[0],
            max: v[n - 1],
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_acc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_acc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub name: String,
    pub variant: Variant,
    pub spec_sha256: String,
    pub runs: Vec<SeedOutcome>,
    pub failed: usize,
    pub train: Option<Summary>,
    pub test: Option<Summary>,
}

impl Aggregate {
    pub fn from_runs(loaded: &LoadedSpec, runs: Vec<SeedOutcome>) -> Aggregate {
        let collect = |f: fn(&SeedOutcome) -> Option<f64>| -> Vec<f64> {
            runs.iter().filter_map(f).collect()
        };
        let train = Summary::of(&collect(|r| r.train_acc));
        let test = Summary::of(&collect(|r| r.test_acc));
        Aggregate {
            name: loaded.spec.name.clone(),
            variant: loaded.spec.variant,
            spec_sha256: loaded.sha256.clone(),
            failed: runs.iter().filter(|r| r.error.is_some()).count(),
            runs,
            train,
            test,
        }
    }
}

/// Trains once per seed (seed-ordered, each into `out/seed-<n>/`) and writes
/// `aggregate.json`. A failing seed is recorded and does not stop the sweep.
pub fn cmd_sweep(spec_path: &Path, out: &Path, seed: Option<u64>) -> Result<Aggregate> {
    let loaded = LoadedSpec::from_file(spec_path)?;
    let seeds = match seed {
        Some(s) => vec![s],
        None => loaded.spec.sweep_seeds(),
    };
    create_dir(out)?;
    let mut runs = Vec::with_capacity(seeds.len());
    for s in seeds {
        let dir = out.join(format!("seed-{s}"));
        let result = create_dir(&dir).and_then(|_| {
            let TrainOutcome { record, model } = run_training(&loaded, Some(s))?;
            write(&dir.join("run.json"), pretty(&record)?)?;
            write(&dir.join("metrics.csv"), metrics_csv(&record.epochs))?;
            model.save(&dir.join("model.json"))?;
            Ok(record)
        });
        runs.push(match result {
            Ok(r) => SeedOutcome {
                seed: s,
                train_acc: Some(r.final_train_acc),
                test_acc: Some(r.final_test_acc).filter(|a| a.is_finite()),
                error: None,
            },
            Err(e) => {
                log::error!("seed {s} failed: {e}");
                SeedOutcome {
                    seed: s,
                    train_acc: None,
                    test_acc: None,
                    error: Some(e.to_string()),
                }
            }
        });
    }
    let agg = Aggregate::from_runs(&loaded, runs);
    write(&out.join("aggregate.json"), pretty(&agg)?)?;
    Ok(agg)
}

/// Trains the toy model the spec describes and writes `align.json` and
/// `align.csv` into `out`.
pub fn cmd_align(spec_path: &Path, out: &Path, seed: Option<u64>) -> Result<AlignReport> {
    let loaded = LoadedSpec::from_file(spec_path)?;
    let report = run_alignment(&loaded, seed)?;
    create_dir(out)?;
    write(&out.join("align.json"), pretty(&report)?)?;
    write(&out.join("align.csv"), report.to_csv())?;
    Ok(report)
}
