use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::spec::{LoadedSpec, Variant};
use super::{train_config, Summary};
use crate::data::{normalize, LabeledSeries};
use crate::error::{Error, Result};
use crate::numerics::SeededRng;
use crate::reservoir::DeepEsn;
use crate::trainer::{
    alignment_angle, finite_difference_grad, fit, probe_coords, update_sketch, GradTarget,
    TrainConfig, MAX_PROBE_LAYER,
};

/// Angles (degrees) after one epoch's update; `None` where undefined.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignEpoch {
    pub epoch: usize,
    pub loss: f64,
    /// Readout update vs gradient over the whole training set.
    pub readout: Option<f64>,
    /// Per hidden layer, over the whole training set.
    pub layers: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignReport {
    pub name: String,
    pub seed: u64,
    pub depth: usize,
    pub reservoir_size: usize,
    pub probes: usize,
    pub epochs: Vec<AlignEpoch>,
    /// Per layer: median over training series of the single-series angle,
    /// measured on the final model.
    pub final_series_median: Vec<Option<f64>>,
    /// Median over training series of the final readout angle.
    pub final_readout_median: Option<f64>,
}

impl AlignReport {
    /// Long format: `epoch,matrix,angle` with `matrix` one of `readout` or
    /// `layer<i>`; undefined angles are left empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,matrix,angle_deg\n");
        let fmt = |a: Option<f64>| a.map(|v| v.to_string()).unwrap_or_default();
        for e in &self.epochs {
            let _ = writeln!(out, "{},readout,{}", e.epoch, fmt(e.readout));
            for (i, a) in e.layers.iter().enumerate() {
                let _ = writeln!(out, "{},layer{i},{}", e.epoch, fmt(*a));
            }
        }
        out
    }
}

fn angle_for(
    esn: &DeepEsn,
    series: &[LabeledSeries],
    cfg: &TrainConfig,
    target: GradTarget,
    coords: &[(usize, usize)],
    h: f64,
) -> Result<Option<f64>> {
    let grad = finite_difference_grad(esn, series, cfg, target, coords, h)?;
    let upd = update_sketch(esn, series, cfg, target, coords)?;
    alignment_angle(&upd, &grad)
}

/// Trains a small DFA model, measuring after every epoch how well each
/// matrix's update aligns with the finite-difference gradient. Refuses
/// models with any reservoir larger than [`MAX_PROBE_LAYER`].
pub fn run_alignment(loaded: &LoadedSpec, seed: Option<u64>) -> Result<AlignReport> {
    let spec = match seed {
        Some(s) => loaded.spec.with_seed(s),
        None => loaded.spec.clone(),
    };
    if spec.variant != Variant::DfaDeepEsn {
        return Err(Error::invalid("alignment needs the dfa-deep-esn variant"));
    }
    if spec.config.reservoir_size > MAX_PROBE_LAYER {
        return Err(Error::invalid(format!(
            "alignment uses finite differences and is capped at reservoir_size {MAX_PROBE_LAYER}; \
             the spec asks for {}",
            spec.config.reservoir_size
        )));
    }
    let cfg = train_config(&spec);
    let (ds, _) = normalize(&loaded.dataset()?, spec.normalization)?;
    let rng = SeededRng::new(cfg.seed);
    let mut esn = DeepEsn::build(&rng, &cfg.architecture(ds.dims, ds.num_classes(), true))?;
    let (probes, h) = (spec.align.probes, spec.align.h);
    let mut targets = vec![GradTarget::Readout];
    targets.extend((0..esn.depth()).map(GradTarget::Input));
    let coords = targets
        .iter()
        .map(|t| probe_coords(&esn, *t, probes, &rng))
        .collect::<Result<Vec<_>>>()?;

    let mut epochs = Vec::with_capacity(cfg.epochs);
    fit(&mut esn, &ds.train, &[], &cfg, |esn, report| {
        let mut angles = targets
            .iter()
            .zip(&coords)
            .map(|(t, c)| angle_for(esn, &ds.train, &cfg, *t, c, h))
            .collect::<Result<Vec<_>>>()?;
        let layers = angles.split_off(1);
        report.alignment = Some(layers.clone());
        epochs.push(AlignEpoch {
            epoch: report.epoch,
            loss: report.loss,
            readout: angles[0],
            layers,
        });
        Ok(())
    })?;

    let mut medians = Vec::with_capacity(targets.len());
    for (t, c) in targets.iter().zip(&coords) {
        let per_series = ds
            .train
            .iter()
            .map(|s| angle_for(&esn, std::slice::from_ref(s), &cfg, *t, c, h))
            .collect::<Result<Vec<_>>>()?;
        let defined: Vec<f64> = per_series.into_iter().flatten().collect();
        medians.push(Summary::of(&defined).map(|s| s.median));
    }
    let final_series_median = medians.split_off(1);
    Ok(AlignReport {
        name: spec.name.clone(),
        seed: cfg.seed,
        depth: cfg.depth,
        reservoir_size: cfg.reservoir_size,
        probes,
        epochs,
        final_series_median,
        final_readout_median: medians[0],
    })
}
