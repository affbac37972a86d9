//! Leaky reservoir layers, stacked deep networks and their forward dynamics.
//!
//! Each layer updates as
//!
//! ```text
//! x_t = (1 - α) x_{t-1} + α f(W_in u_t + W_rec x_{t-1})
//! ```
//!
//! and the terminal layer's state is read out linearly, `y_t = W_out x_t`.
//! Layers are chained synchronously: layer `i > 0` receives the freshly
//! updated state of layer `i - 1` at the same time step.

use serde::{Deserialize, Serialize};

use crate::data::LabeledSeries;
use crate::error::{Error, Result};
use crate::numerics::{
    gemm_into, rng_matrix, scale_to_radius, spectral_radius, MatRef, Matrix, SeededRng, Vector,
    WeightDist, DEFAULT_MAX_ITERS, DEFAULT_TOL,
};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    /// Logistic `1 / (1 + e^{-z})`.
    #[default]
    Sigmoid,
    /// Logistic shifted to zero mean: `σ(z) − ½`.
    CenteredSigmoid,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Activation::CenteredSigmoid => 1.0 / (1.0 + (-z).exp()) - 0.5,
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// `f'(z)`.
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Sigmoid | Activation::CenteredSigmoid => {
                let s = 1.0 / (1.0 + (-z).exp());
                s * (1.0 - s)
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReservoirLayer {
    w_in: Matrix,
    w_rec: Matrix,
    state: Vector,
    leak_alpha: f64,
    activation: Activation,
}

/// Parameters for drawing one reservoir layer.
#[derive(Clone, Copy, Debug)]
pub struct LayerSpec {
    pub size: usize,
    pub input_dim: usize,
    pub leak_alpha: f64,
    pub target_rho: f64,
    pub recurrent_dist: WeightDist,
    pub input_dist: WeightDist,
    pub activation: Activation,
}

fn check_alpha(leak_alpha: f64) -> Result<()> {
    if !(leak_alpha > 0.0 && leak_alpha <= 1.0) {
        return Err(Error::invalid(format!(
            "leak rate must lie in (0, 1], got {leak_alpha}"
        )));
    }
    Ok(())
}

impl ReservoirLayer {
    /// Validates shapes and leak rate, and measures `ρ(W_rec) < 1`.
    pub fn from_parts(
        w_in: Matrix,
        w_rec: Matrix,
        leak_alpha: f64,
        activation: Activation,
    ) -> Result<Self> {
        let layer = Self::from_parts_unconstrained(w_in, w_rec, leak_alpha, activation)?;
        let rho = spectral_radius(&layer.w_rec, DEFAULT_TOL, DEFAULT_MAX_ITERS)?.radius;
        if rho >= 1.0 {
            return Err(Error::invalid(format!(
                "recurrent spectral radius {rho} is not below 1"
            )));
        }
        Ok(layer)
    }

    /// Like [`ReservoirLayer::from_parts`] without the spectral radius check.
    /// Used for stability experiments and when restoring saved weights.
    pub fn from_parts_unconstrained(
        w_in: Matrix,
        w_rec: Matrix,
        leak_alpha: f64,
        activation: Activation,
    ) -> Result<Self> {
        check_alpha(leak_alpha)?;
        if !w_rec.is_square() || w_rec.rows() != w_in.rows() {
            return Err(Error::Shape {
                op: "reservoir layer",
                left: w_in.shape(),
                right: w_rec.shape(),
            });
        }
        if w_in.rows() == 0 || w_in.cols() == 0 {
            return Err(Error::invalid("reservoir layer needs at least one neuron and input"));
        }
        if !(w_in.is_finite() && w_rec.is_finite()) {
            return Err(Error::invalid("reservoir weights must be finite"));
        }
        let n = w_rec.rows();
        Ok(ReservoirLayer {
            w_in,
            w_rec,
            state: Vector::zeros(n),
            leak_alpha,
            activation,
        })
    }

    pub fn size(&self) -> usize {
        self.w_rec.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.w_in.cols()
    }

    pub fn w_in(&self) -> &Matrix {
        &self.w_in
    }

    pub fn w_in_mut(&mut self) -> &mut Matrix {
        &mut self.w_in
    }

    pub fn w_rec(&self) -> &Matrix {
        &self.w_rec
    }

    pub fn leak_alpha(&self) -> f64 {
        self.leak_alpha
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn state(&self) -> &[f64] {
        &self.state
    }

    pub fn set_state(&mut self, state: &[f64]) -> Result<()> {
        if state.len() != self.size() {
            return Err(Error::Shape {
                op: "set_state",
                left: (self.size(), 1),
                right: (state.len(), 1),
            });
        }
        self.state.copy_from_slice(state);
        Ok(())
    }

    pub fn reset(&mut self) {
        if self.state.len() != self.size() {
            self.state = Vector::zeros(self.size());
        } else {
            self.state.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    /// Advances one step, writing the pre-activation `W_in u + W_rec x` into
    /// `preact` and returning the new state.
    pub fn step_with_preact(&mut self, u: &[f64], preact: &mut Vec<f64>) -> Result<&[f64]> {
        if u.len() != self.input_dim() {
            return Err(Error::Shape {
                op: "step_layer",
                left: self.w_in.shape(),
                right: (u.len(), 1),
            });
        }
        if self.state.len() != self.size() {
            self.reset();
        }
        let drive = self.w_in.matvec(u)?;
        let rec = self.w_rec.matvec(&self.state)?;
        preact.clear();
        preact.extend(drive.iter().zip(rec.iter()).map(|(a, b)| a + b));
        let (a, f) = (self.leak_alpha, self.activation);
        for (x, z) in self.state.iter_mut().zip(preact.iter()) {
            *x = (1.0 - a) * *x + a * f.apply(*z);
        }
        Ok(&self.state)
    }

    pub fn step(&mut self, u: &[f64]) -> Result<&[f64]> {
        let mut scratch = Vec::with_capacity(self.size());
        self.step_with_preact(u, &mut scratch)
    }
}

/// Draws `W_rec` from `spec.recurrent_dist`, rescales it to `spec.target_rho`,
/// then draws `W_in`. State starts at zero.
pub fn build_layer(rng: &SeededRng, label: &str, spec: &LayerSpec) -> Result<ReservoirLayer> {
    if spec.size == 0 || spec.input_dim == 0 {
        return Err(Error::invalid("layer size and input dimension must be at least 1"));
    }
    if !(spec.target_rho > 0.0 && spec.target_rho < 1.0) {
        return Err(Error::invalid(format!(
            "target spectral radius must lie in (0, 1), got {}",
            spec.target_rho
        )));
    }
    check_alpha(spec.leak_alpha)?;
    let mut w_rec = None;
    for attempt in ["w_rec", "w_rec/redraw"] {
        let raw = rng_matrix(
            rng,
            &format!("{label}/{attempt}"),
            spec.size,
            spec.size,
            spec.recurrent_dist,
        )?;
        match scale_to_radius(&raw, spec.target_rho) {
            Ok(m) => {
                w_rec = Some(m);
                break;
            }
            Err(Error::ZeroSpectralRadius) => continue,
            Err(e) => return Err(e),
        }
    }
    let w_rec = w_rec.ok_or(Error::ZeroSpectralRadius)?;
    let w_in = rng_matrix(
        rng,
        &format!("{label}/w_in"),
        spec.size,
        spec.input_dim,
        spec.input_dist,
    )?;
    ReservoirLayer::from_parts(w_in, w_rec, spec.leak_alpha, spec.activation)
}

/// One-step update of a single layer.
pub fn step_layer(layer: &mut ReservoirLayer, u: &[f64]) -> Result<Vector> {
    layer.step(u).map(Vector::from)
}

/// Linear readout `y = W_out · x`.
pub fn readout(w_out: &Matrix, x: &[f64]) -> Result<Vector> {
    w_out.matvec(x).map_err(|_| Error::Shape {
        op: "readout",
        left: w_out.shape(),
        right: (x.len(), 1),
    })
}

/// Which time steps are recorded for readout training and classification.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SamplePlan {
    pub washout: usize,
    pub sample_every: usize,
}

impl SamplePlan {
    /// Steps `t ≥ washout` with `(t - washout) % sample_every == 0`, plus the
    /// final step.
    pub fn times(&self, len: usize) -> Result<Vec<usize>> {
        if self.sample_every == 0 {
            return Err(Error::invalid("sample_every must be at least 1"));
        }
        if len <= self.washout {
            return Err(Error::invalid(format!(
                "series of length {len} is not longer than the washout of {}",
                self.washout
            )));
        }
        let mut t: Vec<usize> = (self.washout..len).step_by(self.sample_every).collect();
        if t.last() != Some(&(len - 1)) {
            t.push(len - 1);
        }
        Ok(t)
    }
}

/// States recorded by [`run_series`]. Indexing is `[sample][layer]`.
#[derive(Clone, Debug, PartialEq)]
pub struct StateTrace {
    pub sample_times: Vec<usize>,
    pub states: Vec<Vec<Vector>>,
    pub inputs: Vec<Vec<Vector>>,
    pub preacts: Vec<Vec<Vector>>,
}

impl StateTrace {
    pub fn len(&self) -> usize {
        self.sample_times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample_times.is_empty()
    }

    /// Terminal layer state at sample `k`.
    pub fn last_state(&self, k: usize) -> &[f64] {
        self.states[k].last().expect("trace has no layers")
    }
}

/// Architecture of a [`DeepEsn`].
#[derive(Clone, Copy, Debug)]
pub struct Architecture {
    pub input_dim: usize,
    pub output_dim: usize,
    pub reservoir_size: usize,
    pub depth: usize,
    pub leak_alpha: f64,
    pub target_rho: f64,
    pub activation: Activation,
    pub recurrent_dist: WeightDist,
    /// Input weights of the first layer.
    pub input_dist: WeightDist,
    /// Input weights of layers fed by another reservoir.
    pub hidden_input_dist: WeightDist,
    pub feedback_dist: WeightDist,
    /// When false every feedback matrix is zero and hidden layers stay frozen.
    pub with_feedback: bool,
}

/// Stack of reservoir layers with one terminal readout and one fixed random
/// feedback matrix per layer (`B_i`, shape `N_i × output_dim`).
#[derive(Clone, Debug, PartialEq)]
pub struct DeepEsn {
    layers: Vec<ReservoirLayer>,
    w_out: Matrix,
    feedback: Vec<Matrix>,
    input_dim: usize,
    output_dim: usize,
}

impl DeepEsn {
    /// Validates the chaining invariants of a stack.
    pub fn new(layers: Vec<ReservoirLayer>, w_out: Matrix, feedback: Vec<Matrix>) -> Result<Self> {
        let first = layers
            .first()
            .ok_or_else(|| Error::invalid("a deep ESN needs at least one layer"))?;
        let input_dim = first.input_dim();
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[1].input_dim() != pair[0].size() {
                return Err(Error::invalid(format!(
                    "layer {} expects input of size {} but layer {} has {} neurons",
                    i + 1,
                    pair[1].input_dim(),
                    i,
                    pair[0].size()
                )));
            }
        }
        let last = layers.last().unwrap().size();
        if w_out.cols() != last {
            return Err(Error::Shape {
                op: "readout",
                left: w_out.shape(),
                right: (last, 1),
            });
        }
        let output_dim = w_out.rows();
        if output_dim == 0 {
            return Err(Error::invalid("readout needs at least one output"));
        }
        if feedback.len() != layers.len() {
            return Err(Error::invalid(format!(
                "expected {} feedback matrices, got {}",
                layers.len(),
                feedback.len()
            )));
        }
        for (i, (b, layer)) in feedback.iter().zip(&layers).enumerate() {
            if b.shape() != (layer.size(), output_dim) {
                return Err(Error::invalid(format!(
                    "feedback matrix for layer {i} has shape {:?}, expected {:?}",
                    b.shape(),
                    (layer.size(), output_dim)
                )));
            }
        }
        Ok(DeepEsn {
            layers,
            w_out,
            feedback,
            input_dim,
            output_dim,
        })
    }

    pub fn build(rng: &SeededRng, arch: &Architecture) -> Result<Self> {
        if arch.depth == 0 {
            return Err(Error::invalid("depth must be at least 1"));
        }
        if arch.output_dim == 0 {
            return Err(Error::invalid("output dimension must be at least 1"));
        }
        let mut layers = Vec::with_capacity(arch.depth);
        for i in 0..arch.depth {
            let spec = LayerSpec {
                size: arch.reservoir_size,
                input_dim: if i == 0 {
                    arch.input_dim
                } else {
                    arch.reservoir_size
                },
                leak_alpha: arch.leak_alpha,
                target_rho: arch.target_rho,
                recurrent_dist: arch.recurrent_dist,
                input_dist: if i == 0 {
                    arch.input_dist
                } else {
                    arch.hidden_input_dist
                },
                activation: arch.activation,
            };
            layers.push(build_layer(rng, &format!("layer{i}"), &spec)?);
        }
        let feedback = (0..arch.depth)
            .map(|i| {
                if arch.with_feedback {
                    rng_matrix(
                        rng,
                        &format!("feedback{i}"),
                        arch.reservoir_size,
                        arch.output_dim,
                        arch.feedback_dist,
                    )
                } else {
                    Ok(Matrix::zeros(arch.reservoir_size, arch.output_dim))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let w_out = Matrix::zeros(arch.output_dim, arch.reservoir_size);
        DeepEsn::new(layers, w_out, feedback)
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn layers(&self) -> &[ReservoirLayer] {
        &self.layers
    }

    pub fn layer_mut(&mut self, i: usize) -> &mut ReservoirLayer {
        &mut self.layers[i]
    }

    pub fn w_out(&self) -> &Matrix {
        &self.w_out
    }

    pub fn w_out_mut(&mut self) -> &mut Matrix {
        &mut self.w_out
    }

    pub fn feedback(&self) -> &[Matrix] {
        &self.feedback
    }

    /// Replaces every feedback matrix with zeros, freezing the hidden layers.
    pub fn clear_feedback(&mut self) {
        for b in &mut self.feedback {
            b.scale_in_place(0.0);
        }
    }

    pub fn set_feedback(&mut self, i: usize, b: Matrix) -> Result<()> {
        let want = (self.layers[i].size(), self.output_dim);
        if b.shape() != want {
            return Err(Error::Shape {
                op: "set_feedback",
                left: want,
                right: b.shape(),
            });
        }
        self.feedback[i] = b;
        Ok(())
    }

    pub fn reset_states(&mut self) {
        self.layers.iter_mut().for_each(ReservoirLayer::reset);
    }

    /// Forward pass over one series from zero state, recording samples per `plan`.
    pub fn run_series(&mut self, series: &LabeledSeries, plan: SamplePlan) -> Result<StateTrace> {
        run_series(self, series, plan)
    }
}

/// Resets all states to zero and runs `series` through the cascade.
pub fn run_series(esn: &mut DeepEsn, series: &LabeledSeries, plan: SamplePlan) -> Result<StateTrace> {
    if series.dims() != esn.input_dim {
        return Err(Error::Series {
            series: series.id().to_string(),
            msg: format!(
                "has {} dimensions but the model expects {}",
                series.dims(),
                esn.input_dim
            ),
        });
    }
    let times = plan.times(series.len()).map_err(|e| Error::Series {
        series: series.id().to_string(),
        msg: e.to_string(),
    })?;
    esn.reset_states();
    let depth = esn.layers.len();
    let mut trace = StateTrace {
        sample_times: times.clone(),
        states: Vec::with_capacity(times.len()),
        inputs: Vec::with_capacity(times.len()),
        preacts: Vec::with_capacity(times.len()),
    };
    let mut next = times.iter().copied().peekable();
    let mut preact = vec![Vec::new(); depth];
    let mut inputs: Vec<Vector> = vec![Vector::default(); depth];
    for t in 0..series.len() {
        let mut u: &[f64] = series.step(t);
        for (i, layer) in esn.layers.iter_mut().enumerate() {
            inputs[i] = Vector::from(u);
            u = layer.step_with_preact(u, &mut preact[i])?;
        }
        if next.peek() == Some(&t) {
            next.next();
            trace
                .states
                .push(esn.layers.iter().map(|l| Vector::from(l.state())).collect());
            trace.inputs.push(inputs.clone());
            trace
                .preacts
                .push(preact.iter().map(|p| Vector::from(p.as_slice())).collect());
        }
    }
    Ok(trace)
}

/// Averages `W_out x` over the trace's samples and returns the argmax label
/// (lowest index wins ties) with the averaged scores.
pub fn classify(esn: &DeepEsn, trace: &StateTrace) -> Result<(usize, Vector)> {
    if trace.is_empty() {
        return Err(Error::invalid("cannot classify an empty trace"));
    }
    let mut mean = vec![0.0; esn.output_dim];
    for k in 0..trace.len() {
        let y = readout(&esn.w_out, trace.last_state(k))?;
        mean.iter_mut().zip(y.iter()).for_each(|(m, v)| *m += v);
    }
    let n = trace.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    Ok((argmax(&mean), Vector::from(mean)))
}

/// Index of the largest entry; ties resolve to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Forward state of a whole batch of equal-length series at one sample time.
/// Matrices are row-major with one row per series.
pub(crate) struct BatchSample<'a> {
    pub inputs0: &'a [f64],
    pub states: &'a [Vec<f64>],
    pub preacts: &'a [Vec<f64>],
}

impl BatchSample<'_> {
    /// Presynaptic input of layer `i`: raw input for layer 0, otherwise the
    /// previous layer's state.
    pub fn input(&self, i: usize) -> &[f64] {
        if i == 0 {
            self.inputs0
        } else {
            &self.states[i - 1]
        }
    }
}

/// Runs every series in `batch` simultaneously from zero state, calling
/// `visit(sample_index, snapshot)` at each time in `times`. Uses gemm over the
/// batch instead of per-series matvecs; results agree with [`run_series`] to
/// rounding.
pub(crate) fn forward_batch<F>(
    esn: &DeepEsn,
    batch: &[&LabeledSeries],
    times: &[usize],
    mut visit: F,
) -> Result<()>
where
    F: FnMut(usize, &BatchSample<'_>) -> Result<()>,
{
    let s = batch.len();
    if s == 0 {
        return Ok(());
    }
    let len = batch[0].len();
    for series in batch {
        if series.dims() != esn.input_dim {
            return Err(Error::Series {
                series: series.id().to_string(),
                msg: format!(
                    "has {} dimensions but the model expects {}",
                    series.dims(),
                    esn.input_dim
                ),
            });
        }
        if series.len() != len {
            return Err(Error::Series {
                series: series.id().to_string(),
                msg: format!("has length {} but the batch uses {len}", series.len()),
            });
        }
    }
    if times.last().is_some_and(|t| *t >= len) {
        return Err(Error::invalid("sample time beyond series length"));
    }
    let d = esn.input_dim;
    let mut u0 = vec![0.0; s * d];
    let mut states: Vec<Vec<f64>> = esn.layers.iter().map(|l| vec![0.0; s * l.size()]).collect();
    let mut preacts: Vec<Vec<f64>> = states.clone();
    let mut next = 0;
    for t in 0..len {
        for (b, series) in batch.iter().enumerate() {
            u0[b * d..(b + 1) * d].copy_from_slice(series.step(t));
        }
        for (i, layer) in esn.layers.iter().enumerate() {
            let n = layer.size();
            let (before, rest) = states.split_at_mut(i);
            let x = &mut rest[0];
            let (u, a_cols): (&[f64], usize) = if i == 0 {
                (u0.as_slice(), d)
            } else {
                (&before[i - 1], before[i - 1].len() / s)
            };
            let pre = &mut preacts[i];
            // pre = U W_inᵀ + X W_recᵀ
            gemm_into(
                1.0,
                MatRef::row_major(u, s, a_cols),
                layer.w_in.view_t(),
                0.0,
                pre,
                s,
                n,
            );
            gemm_into(
                1.0,
                MatRef::row_major(x, s, n),
                layer.w_rec.view_t(),
                1.0,
                pre,
                s,
                n,
            );
            let (alpha, f) = (layer.leak_alpha, layer.activation);
            for (xv, z) in x.iter_mut().zip(pre.iter()) {
                *xv = (1.0 - alpha) * *xv + alpha * f.apply(*z);
            }
        }
        if next < times.len() && times[next] == t {
            visit(
                next,
                &BatchSample {
                    inputs0: &u0,
                    states: &states,
                    preacts: &preacts,
                },
            )?;
            next += 1;
        }
    }
    Ok(())
}

impl Matrix {
    pub(crate) fn view_t(&self) -> MatRef<'_> {
        MatRef::row_major(self.data(), self.rows(), self.cols()).t()
    }
}
