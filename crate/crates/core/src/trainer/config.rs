use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::WeightDist;
use crate::reservoir::{Activation, Architecture, SamplePlan};

/// Initial transient excluded from sampling: a step count or a fraction of
/// the series length.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Washout {
    Steps(usize),
    Fraction(f64),
}

impl Washout {
    pub fn resolve(self, len: usize) -> Result<usize> {
        match self {
            Washout::Steps(n) => Ok(n),
            Washout::Fraction(f) if (0.0..1.0).contains(&f) => Ok((f * len as f64).floor() as usize),
            Washout::Fraction(f) => Err(Error::invalid(format!(
                "washout fraction must lie in [0, 1), got {f}"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DfaVariant {
    /// `ΔW_in = -η ((B e) ⊙ g) ⊗ u`, the usual direct feedback alignment rule.
    #[default]
    ProjectedOuter,
    /// `ΔW_in[r][c] = -η (B e)[r]` for every input column: the projected error
    /// broadcast across the row with no presynaptic factor. Ablation only.
    PaperLiteral,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    /// `½ ‖W_out x − onehot(label)‖²` averaged over sampled steps.
    #[default]
    MseOneHot,
}

/// Every hyperparameter of a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub eta: f64,
    pub eta_decay_per_epoch: f64,
    pub weight_decay: f64,
    pub leak_alpha: f64,
    pub reservoir_size: usize,
    pub depth: usize,
    pub target_rho: f64,
    pub washout: Washout,
    /// Defaults to roughly eight samples per series after the washout.
    pub sample_every: Option<usize>,
    pub seed: u64,
    pub dfa_variant: DfaVariant,
    pub use_activation_derivative: bool,
    pub loss: LossKind,
    /// When false only the readout is trained.
    pub train_hidden: bool,
    pub activation: Activation,
    pub recurrent_dist: WeightDist,
    pub input_dist: WeightDist,
    pub hidden_input_dist: WeightDist,
    pub feedback_dist: WeightDist,
    /// Evaluate the test split every this many epochs (the last epoch always
    /// is). Zero means only the last epoch.
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            eta: 0.01,
            eta_decay_per_epoch: 1e-7,
            weight_decay: 1e-9,
            leak_alpha: 0.1,
            reservoir_size: 800,
            depth: 4,
            target_rho: 0.9,
            washout: Washout::Fraction(0.1),
            sample_every: None,
            seed: 0,
            dfa_variant: DfaVariant::ProjectedOuter,
            use_activation_derivative: true,
            loss: LossKind::MseOneHot,
            train_hidden: true,
            activation: Activation::Sigmoid,
            recurrent_dist: WeightDist::uniform(-1.0, 1.0),
            input_dist: WeightDist::uniform(-0.5, 0.5),
            hidden_input_dist: WeightDist::uniform(-0.5, 0.5),
            feedback_dist: WeightDist::uniform(-1.0, 1.0),
            eval_every: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::invalid(msg));
        if self.epochs < 1 {
            return fail("epochs must be at least 1".into());
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return fail(format!("eta must be positive, got {}", self.eta));
        }
        if !(0.0..1.0).contains(&self.eta_decay_per_epoch) {
            return fail(format!(
                "eta_decay_per_epoch must lie in [0, 1), got {}",
                self.eta_decay_per_epoch
            ));
        }
        if !(0.0..1.0).contains(&self.weight_decay) {
            return fail(format!("weight_decay must lie in [0, 1), got {}", self.weight_decay));
        }
        if !(self.leak_alpha > 0.0 && self.leak_alpha <= 1.0) {
            return fail(format!("leak_alpha must lie in (0, 1], got {}", self.leak_alpha));
        }
        if self.depth < 1 || self.reservoir_size < 1 {
            return fail("depth and reservoir_size must be at least 1".into());
        }
        if !(self.target_rho > 0.0 && self.target_rho < 1.0) {
            return fail(format!("target_rho must lie in (0, 1), got {}", self.target_rho));
        }
        if self.sample_every == Some(0) {
            return fail("sample_every must be at least 1".into());
        }
        if let Washout::Fraction(f) = self.washout {
            if !(0.0..1.0).contains(&f) {
                return fail(format!("washout fraction must lie in [0, 1), got {f}"));
            }
        }
        for d in [
            self.recurrent_dist,
            self.input_dist,
            self.hidden_input_dist,
            self.feedback_dist,
        ] {
            d.validate()?;
        }
        Ok(())
    }

    /// Learning rate for zero-based epoch `epoch`: `η (1 − d)^epoch`.
    pub fn effective_eta(&self, epoch: usize) -> f64 {
        self.eta * (1.0 - self.eta_decay_per_epoch).powi(epoch as i32)
    }

    pub fn sample_plan(&self, len: usize) -> Result<SamplePlan> {
        let washout = self.washout.resolve(len)?;
        let sample_every = self
            .sample_every
            .unwrap_or_else(|| (len.saturating_sub(washout) / 8).max(1));
        Ok(SamplePlan {
            washout,
            sample_every,
        })
    }

    pub fn architecture(&self, input_dim: usize, output_dim: usize, with_feedback: bool) -> Architecture {
        Architecture {
            input_dim,
            output_dim,
            reservoir_size: self.reservoir_size,
            depth: self.depth,
            leak_alpha: self.leak_alpha,
            target_rho: self.target_rho,
            activation: self.activation,
            recurrent_dist: self.recurrent_dist,
            input_dist: self.input_dist,
            hidden_input_dist: self.hidden_input_dist,
            feedback_dist: self.feedback_dist,
            with_feedback,
        }
    }
}
