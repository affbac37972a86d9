//! Supervised training of a [`DeepEsn`].
//!
//! The readout is trained with the delta rule; each reservoir's input matrix
//! is trained with direct feedback alignment, where the output error reaches
//! layer `i` through its own fixed random matrix `B_i` instead of through the
//! (non-differentiable in practice) stack above it. Updates are accumulated
//! over every sampled step of every training series and applied once per
//! epoch.

mod config;
mod gradcheck;

pub use config::{DfaVariant, LossKind, TrainConfig, Washout};
pub use gradcheck::{
    alignment_angle, finite_difference_grad, probe_coords, sampled_loss, update_sketch,
    GradSketch, GradTarget, MAX_PROBE_LAYER,
};

use serde::{Deserialize, Serialize};

use crate::data::LabeledSeries;
use crate::error::{Error, Result};
use crate::numerics::{gemm_into, outer, MatRef, Matrix, Vector};
use crate::reservoir::{argmax, forward_batch, Activation, DeepEsn};

/// `e = y_pred − onehot(label)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorSignal(pub Vector);

pub fn error_at_sample(y_pred: &[f64], label: usize, num_classes: usize) -> Result<ErrorSignal> {
    if label >= num_classes {
        return Err(Error::invalid(format!(
            "label {label} out of range for {num_classes} classes"
        )));
    }
    if y_pred.len() != num_classes {
        return Err(Error::Shape {
            op: "error_at_sample",
            left: (y_pred.len(), 1),
            right: (num_classes, 1),
        });
    }
    let mut e = y_pred.to_vec();
    e[label] -= 1.0;
    Ok(ErrorSignal(e.into()))
}

/// Readout update `ΔW_out = −η e ⊗ x`.
pub fn delta_rule_update(e: &ErrorSignal, x_last: &[f64], eta: f64) -> Matrix {
    outer(&e.0, x_last).scaled(-eta)
}

/// Direct feedback alignment update for one layer's input matrix.
///
/// `b` is the layer's `N × B` feedback matrix, `u` its presynaptic input and
/// `preact` its pre-activation at the same step. With `use_fprime` the
/// projected error is gated by `f'(preact)`.
#[allow(clippy::too_many_arguments)]
pub fn dfa_update(
    e: &ErrorSignal,
    b: &Matrix,
    u: &[f64],
    preact: &[f64],
    eta: f64,
    variant: DfaVariant,
    use_fprime: bool,
    activation: Activation,
) -> Result<Matrix> {
    if b.cols() != e.0.len() || preact.len() != b.rows() {
        return Err(Error::Shape {
            op: "dfa_update",
            left: b.shape(),
            right: (e.0.len(), preact.len()),
        });
    }
    let mut delta = b.matvec(&e.0)?;
    match variant {
        DfaVariant::ProjectedOuter => {
            if use_fprime {
                delta
                    .iter_mut()
                    .zip(preact)
                    .for_each(|(d, z)| *d *= activation.derivative(*z));
            }
            Ok(outer(&delta, u).scaled(-eta))
        }
        DfaVariant::PaperLiteral => Ok(Matrix::from_fn(b.rows(), u.len(), |r, _| -eta * delta[r])),
    }
}

/// Accumulated weight changes for one epoch, already scaled by `−η / samples`.
#[derive(Clone, Debug, PartialEq)]
pub struct UpdateBatch {
    pub d_out: Matrix,
    pub d_in: Vec<Matrix>,
    pub samples: usize,
}

/// Per-epoch metrics. Accuracies are percentages.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    /// Mean sampled loss over the epoch's training pass.
    pub loss: f64,
    /// Accuracy of the training pass, i.e. with the weights the epoch started from.
    pub train_acc: f64,
    /// Test accuracy after the epoch's update, when evaluated.
    pub test_acc: Option<f64>,
    pub eta: f64,
    /// Per-layer alignment angle (degrees) between the DFA update and the
    /// finite-difference gradient, when tracked.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alignment: Option<Vec<Option<f64>>>,
}

pub(crate) struct Pass {
    pub update: Option<UpdateBatch>,
    pub loss: f64,
    pub correct: usize,
    pub predictions: Vec<usize>,
    pub scores: Vec<Vec<f64>>,
}

/// Forward pass over `series` collecting loss, predictions and (when `eta` is
/// given) the epoch update. Series are processed in order and every
/// reduction runs in a fixed order, so the result is bit-reproducible.
pub(crate) fn run_pass(
    esn: &DeepEsn,
    series: &[LabeledSeries],
    cfg: &TrainConfig,
    eta: Option<f64>,
) -> Result<Pass> {
    if series.is_empty() {
        return Err(Error::Data("no series to process".into()));
    }
    let len = series[0].len();
    let plan = cfg.sample_plan(len)?;
    let times = plan.times(len).map_err(|e| Error::Series {
        series: series[0].id().to_string(),
        msg: e.to_string(),
    })?;
    let s = series.len();
    let b = esn.output_dim();
    let depth = esn.depth();
    let n_last = esn.layers()[depth - 1].size();
    for x in series {
        if x.label() >= b {
            return Err(Error::Series {
                series: x.id().to_string(),
                msg: format!("label {} outside the model's {b} outputs", x.label()),
            });
        }
    }
    let train_hidden = cfg.train_hidden;

    let mut d_out = Matrix::zeros(b, n_last);
    let mut d_in: Vec<Matrix> = esn
        .layers()
        .iter()
        .map(|l| Matrix::zeros(l.size(), l.input_dim()))
        .collect();
    let mut y = vec![0.0; s * b];
    let mut scores = vec![0.0; s * b];
    let mut delta: Vec<Vec<f64>> = esn.layers().iter().map(|l| vec![0.0; s * l.size()]).collect();
    let mut loss = 0.0;
    let refs: Vec<&LabeledSeries> = series.iter().collect();

    forward_batch(esn, &refs, &times, |_, snap| {
        let x_last = &snap.states[depth - 1];
        // Y = X_last W_outᵀ
        gemm_into(
            1.0,
            MatRef::row_major(x_last, s, n_last),
            esn.w_out().view_t(),
            0.0,
            &mut y,
            s,
            b,
        );
        scores.iter_mut().zip(&y).for_each(|(a, v)| *a += v);
        // E = Y − onehot
        for (row, x) in series.iter().enumerate() {
            y[row * b + x.label()] -= 1.0;
        }
        loss += 0.5 * y.iter().map(|v| v * v).sum::<f64>();
        if eta.is_none() {
            return Ok(());
        }
        // d_out += Eᵀ X_last
        gemm_into(
            1.0,
            MatRef::row_major(&y, s, b).t(),
            MatRef::row_major(x_last, s, n_last),
            1.0,
            d_out.data_mut(),
            b,
            n_last,
        );
        if !train_hidden {
            return Ok(());
        }
        for (i, layer) in esn.layers().iter().enumerate() {
            let fb = &esn.feedback()[i];
            if fb.is_zero() {
                continue;
            }
            let n = layer.size();
            let a_cols = layer.input_dim();
            let dl = &mut delta[i];
            // Δ = E B_iᵀ (s × n)
            gemm_into(
                1.0,
                MatRef::row_major(&y, s, b),
                fb.view_t(),
                0.0,
                dl,
                s,
                n,
            );
            match cfg.dfa_variant {
                DfaVariant::ProjectedOuter => {
                    if cfg.use_activation_derivative {
                        let f = layer.activation();
                        dl.iter_mut()
                            .zip(&snap.preacts[i])
                            .for_each(|(d, z)| *d *= f.derivative(*z));
                    }
                    // d_in += Δᵀ U
                    gemm_into(
                        1.0,
                        MatRef::row_major(dl, s, n).t(),
                        MatRef::row_major(snap.input(i), s, a_cols),
                        1.0,
                        d_in[i].data_mut(),
                        n,
                        a_cols,
                    );
                }
                DfaVariant::PaperLiteral => {
                    let m = &mut d_in[i];
                    for r in 0..n {
                        let col_sum: f64 = (0..s).map(|row| dl[row * n + r]).sum();
                        m.row_mut(r).iter_mut().for_each(|v| *v += col_sum);
                    }
                }
            }
        }
        Ok(())
    })?;

    let samples = s * times.len();
    let predictions: Vec<usize> = scores.chunks_exact(b).map(argmax).collect();
    let correct = predictions
        .iter()
        .zip(series)
        .filter(|(p, x)| **p == x.label())
        .count();
    let k = times.len() as f64;
    let score_rows = scores
        .chunks_exact(b)
        .map(|r| r.iter().map(|v| v / k).collect())
        .collect();
    let update = eta.map(|eta| {
        let scale = -eta / samples as f64;
        d_out.scale_in_place(scale);
        d_in.iter_mut().for_each(|m| m.scale_in_place(scale));
        UpdateBatch {
            d_out,
            d_in,
            samples,
        }
    });
    Ok(Pass {
        update,
        loss: loss / samples as f64,
        correct,
        predictions,
        scores: score_rows,
    })
}

/// `W ← W (1 − weight_decay) + ΔW` for the readout and for every input
/// matrix whose feedback matrix is non-zero. Layers with zero feedback are
/// frozen and left untouched.
pub fn apply_update(esn: &mut DeepEsn, update: &UpdateBatch, weight_decay: f64) -> Result<()> {
    let keep = 1.0 - weight_decay;
    let w_out = esn.w_out_mut();
    w_out.scale_in_place(keep);
    w_out.add_assign(&update.d_out)?;
    for (i, d) in update.d_in.iter().enumerate() {
        if esn.feedback()[i].is_zero() {
            continue;
        }
        let w_in = esn.layer_mut(i).w_in_mut();
        w_in.scale_in_place(keep);
        w_in.add_assign(d)?;
    }
    Ok(())
}

/// Computes the epoch update for `train` without applying it.
pub fn compute_update(
    esn: &DeepEsn,
    train: &[LabeledSeries],
    cfg: &TrainConfig,
    eta: f64,
) -> Result<UpdateBatch> {
    Ok(run_pass(esn, train, cfg, Some(eta))?.update.unwrap())
}

/// One pass over `train`, then a single batched weight update.
pub fn train_epoch(
    esn: &mut DeepEsn,
    train: &[LabeledSeries],
    cfg: &TrainConfig,
    epoch: usize,
) -> Result<EpochReport> {
    let eta = cfg.effective_eta(epoch);
    let pass = run_pass(esn, train, cfg, Some(eta))?;
    apply_update(esn, pass.update.as_ref().unwrap(), cfg.weight_decay)?;
    Ok(EpochReport {
        epoch,
        loss: pass.loss,
        train_acc: 100.0 * pass.correct as f64 / train.len() as f64,
        test_acc: None,
        eta,
        alignment: None,
    })
}

/// Percentage of series whose predicted label matches the true one.
pub fn evaluate(esn: &DeepEsn, data: &[LabeledSeries], cfg: &TrainConfig) -> Result<f64> {
    let pass = run_pass(esn, data, cfg, None)?;
    Ok(100.0 * pass.correct as f64 / data.len() as f64)
}

/// Predicted label and mean readout scores for each series.
pub fn predict(
    esn: &DeepEsn,
    data: &[LabeledSeries],
    cfg: &TrainConfig,
) -> Result<Vec<(usize, Vec<f64>)>> {
    let pass = run_pass(esn, data, cfg, None)?;
    Ok(pass.predictions.into_iter().zip(pass.scores).collect())
}

/// Trains for `cfg.epochs`, evaluating `test` per `cfg.eval_every`. The
/// observer sees each report (and may annotate it) before it is stored.
pub fn fit<F>(
    esn: &mut DeepEsn,
    train: &[LabeledSeries],
    test: &[LabeledSeries],
    cfg: &TrainConfig,
    mut observer: F,
) -> Result<Vec<EpochReport>>
where
    F: FnMut(&DeepEsn, &mut EpochReport) -> Result<()>,
{
    cfg.validate()?;
    let mut reports = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut report = train_epoch(esn, train, cfg, epoch)?;
        let last = epoch + 1 == cfg.epochs;
        let due = cfg.eval_every > 0 && (epoch + 1) % cfg.eval_every == 0;
        if !test.is_empty() && (last || due) {
            report.test_acc = Some(evaluate(esn, test, cfg)?);
        }
        observer(esn, &mut report)?;
        log::info!(
            "epoch {epoch}: loss {:.6} train {:.1}% test {}",
            report.loss,
            report.train_acc,
            report
                .test_acc
                .map_or("-".to_string(), |a| format!("{a:.1}%"))
        );
        reports.push(report);
    }
    Ok(reports)
}
