//! Finite-difference gradient probes, used to measure how well the feedback
//! updates align with the true loss gradient on small networks.

use rand::seq::index::sample;

use super::{compute_update, run_pass, TrainConfig};
use crate::data::LabeledSeries;
use crate::error::{Error, Result};
use crate::numerics::{Matrix, SeededRng};
use crate::reservoir::DeepEsn;

/// Largest reservoir size accepted for finite-difference probing.
pub const MAX_PROBE_LAYER: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GradTarget {
    Readout,
    /// The input matrix of hidden layer `i`.
    Input(usize),
}

/// Values of a matrix-shaped quantity at a fixed set of coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct GradSketch {
    pub target: GradTarget,
    pub coords: Vec<(usize, usize)>,
    pub values: Vec<f64>,
}

fn target_shape(esn: &DeepEsn, target: GradTarget) -> Result<(usize, usize)> {
    match target {
        GradTarget::Readout => Ok(esn.w_out().shape()),
        GradTarget::Input(i) if i < esn.depth() => Ok(esn.layers()[i].w_in().shape()),
        GradTarget::Input(i) => Err(Error::invalid(format!(
            "layer {i} out of range for depth {}",
            esn.depth()
        ))),
    }
}

fn target_mut(esn: &mut DeepEsn, target: GradTarget) -> &mut Matrix {
    match target {
        GradTarget::Readout => esn.w_out_mut(),
        GradTarget::Input(i) => esn.layer_mut(i).w_in_mut(),
    }
}

/// `count` distinct coordinates of the target matrix, drawn from the stream
/// `probe/<label>`. Every coordinate is returned when `count` covers the matrix.
pub fn probe_coords(
    esn: &DeepEsn,
    target: GradTarget,
    count: usize,
    rng: &SeededRng,
) -> Result<Vec<(usize, usize)>> {
    let (rows, cols) = target_shape(esn, target)?;
    let total = rows * cols;
    let mut idx: Vec<usize> = if count >= total {
        (0..total).collect()
    } else {
        let label = match target {
            GradTarget::Readout => "probe/readout".to_string(),
            GradTarget::Input(i) => format!("probe/input{i}"),
        };
        sample(&mut rng.stream(&label), total, count).into_vec()
    };
    idx.sort_unstable();
    Ok(idx.into_iter().map(|k| (k / cols, k % cols)).collect())
}

/// Mean over sampled steps and series of `½ ‖W_out x − onehot‖²`.
pub fn sampled_loss(esn: &DeepEsn, series: &[LabeledSeries], cfg: &TrainConfig) -> Result<f64> {
    Ok(run_pass(esn, series, cfg, None)?.loss)
}

/// Central-difference estimate of `∂L/∂W` at `coords`.
pub fn finite_difference_grad(
    esn: &DeepEsn,
    series: &[LabeledSeries],
    cfg: &TrainConfig,
    target: GradTarget,
    coords: &[(usize, usize)],
    h: f64,
) -> Result<GradSketch> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::invalid(format!("step h must be positive, got {h}")));
    }
    if let Some(l) = esn.layers().iter().find(|l| l.size() > MAX_PROBE_LAYER) {
        return Err(Error::invalid(format!(
            "finite differences are limited to reservoirs of at most {MAX_PROBE_LAYER} units, got {}",
            l.size()
        )));
    }
    let (rows, cols) = target_shape(esn, target)?;
    if let Some(&(r, c)) = coords.iter().find(|(r, c)| *r >= rows || *c >= cols) {
        return Err(Error::invalid(format!(
            "probe ({r}, {c}) outside a {rows}x{cols} matrix"
        )));
    }
    let mut probe = esn.clone();
    let mut values = Vec::with_capacity(coords.len());
    for &(r, c) in coords {
        let w0 = target_mut(&mut probe, target).get(r, c);
        target_mut(&mut probe, target).set(r, c, w0 + h);
        let plus = sampled_loss(&probe, series, cfg)?;
        target_mut(&mut probe, target).set(r, c, w0 - h);
        let minus = sampled_loss(&probe, series, cfg)?;
        target_mut(&mut probe, target).set(r, c, w0);
        values.push((plus - minus) / (2.0 * h));
    }
    Ok(GradSketch {
        target,
        coords: coords.to_vec(),
        values,
    })
}

/// The trainer's epoch update (at unit learning rate) restricted to `coords`.
pub fn update_sketch(
    esn: &DeepEsn,
    series: &[LabeledSeries],
    cfg: &TrainConfig,
    target: GradTarget,
    coords: &[(usize, usize)],
) -> Result<GradSketch> {
    target_shape(esn, target)?;
    let update = compute_update(esn, series, cfg, 1.0)?;
    let m = match target {
        GradTarget::Readout => &update.d_out,
        GradTarget::Input(i) => &update.d_in[i],
    };
    Ok(GradSketch {
        target,
        coords: coords.to_vec(),
        values: coords.iter().map(|&(r, c)| m.get(r, c)).collect(),
    })
}

/// Angle in degrees between an update and the descent direction `−∇L`.
/// `None` when either vector is zero, which leaves the angle undefined.
pub fn alignment_angle(update: &GradSketch, grad: &GradSketch) -> Result<Option<f64>> {
    if update.coords != grad.coords || update.values.len() != grad.values.len() {
        return Err(Error::invalid("sketches were taken at different coordinates"));
    }
    let dot: f64 = update
        .values
        .iter()
        .zip(&grad.values)
        .map(|(a, b)| -a * b)
        .sum();
    let na = update.values.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = grad.values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 || !(na * nb).is_finite() {
        return Ok(None);
    }
    Ok(Some((dot / (na * nb)).clamp(-1.0, 1.0).acos().to_degrees()))
}
