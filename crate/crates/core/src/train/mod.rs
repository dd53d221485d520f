//! Two-stage trust learning.
//!
//! Stage A regresses raw predictions onto rated trust levels with a summed
//! squared error. Stage B starts from the stage-A parameters, fits pairwise
//! preferences with a two-way softmax cross entropy, and penalizes drift of
//! each compared trajectory's output away from the frozen stage-A output.
//! Both stages run epoch-based minibatch SGD, at rates `learning_rate_a` and
//! `learning_rate_b` respectively.

mod dataset;

pub use dataset::*;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{self, Optimizer, ParamVector, Sgd, TrainConfig};
use crate::trust::{softmax2, DemarcationSet, PreferenceLabel, TrustModel, TrustScorer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StlConfig {
    pub train: TrainConfig,
    /// Weight of the forgetting penalty in stage B.
    pub lwf_weight: f64,
}

impl Default for StlConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            lwf_weight: 1.0,
        }
    }
}

impl StlConfig {
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if !(self.lwf_weight.is_finite() && self.lwf_weight >= 0.0) {
            return Err(Error::Config(format!(
                "lwf_weight must be >= 0, got {}",
                self.lwf_weight
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LossAndGradient {
    pub loss: f64,
    pub gradient: ParamVector,
}

/// Stage-B loss split into its parts; `loss = cross_entropy + retention`.
#[derive(Debug, Clone)]
pub struct PreferenceLoss {
    pub loss: f64,
    pub cross_entropy: f64,
    pub retention: f64,
    pub gradient: ParamVector,
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn accumulate_level(model: &TrustModel, record: &LevelRecord, grad: &mut ParamVector) -> f64 {
    let trace = model.trace(&record.features);
    let residual = trace.output() - record.label.value();
    nn::backward_into(model.params(), model.spec(), &trace, 2.0 * residual, grad, None);
    residual * residual
}

/// `sum_i (f(psi_i) - label_i)^2` and its exact parameter gradient.
pub fn level_loss(model: &TrustModel, batch: &[LevelRecord]) -> Result<LossAndGradient> {
    if batch.is_empty() {
        return Err(Error::Empty("level batch"));
    }
    let mut gradient = model.params().zeros_like();
    let loss = batch.iter().map(|r| accumulate_level(model, r, &mut gradient)).sum();
    Ok(LossAndGradient { loss, gradient })
}

/// Returns `(cross_entropy, retention)` for one pair and accumulates the gradient.
fn accumulate_preference(
    model: &TrustModel,
    frozen: &TrustModel,
    record: &PreferenceRecord,
    lwf_weight: f64,
    grad: &mut ParamVector,
) -> (f64, f64) {
    let tp = model.trace(&record.first);
    let tq = model.trace(&record.second);
    let (a, b) = (tp.output(), tq.output());
    let (p, q) = softmax2(a, b);
    let (i, ip) = record.label.as_pair();
    let (i, ip) = (f64::from(i), f64::from(ip));
    let ce = match record.label {
        PreferenceLabel::First => softplus(b - a),
        PreferenceLabel::Second => softplus(a - b),
    };
    let da_frozen = a - frozen.predict_raw(&record.first);
    let db_frozen = b - frozen.predict_raw(&record.second);
    let retention = lwf_weight * (da_frozen * da_frozen + db_frozen * db_frozen);

    let up_a = (p - i) + 2.0 * lwf_weight * da_frozen;
    let up_b = (q - ip) + 2.0 * lwf_weight * db_frozen;
    nn::backward_into(model.params(), model.spec(), &tp, up_a, grad, None);
    nn::backward_into(model.params(), model.spec(), &tq, up_b, grad, None);
    (ce, retention)
}

fn check_frozen(model: &TrustModel, frozen: &TrustModel) -> Result<()> {
    if model.spec() != frozen.spec() || !model.params().same_layout(frozen.params()) {
        return Err(Error::Dimension {
            context: "frozen snapshot layout",
            expected: model.params().len(),
            actual: frozen.params().len(),
        });
    }
    Ok(())
}

/// Cross entropy of the two-way softmax against the one-hot label, plus
/// `lwf_weight * (f(psi) - f_frozen(psi))^2` for both members of every pair.
/// The frozen model contributes no gradient.
pub fn preference_loss(
    model: &TrustModel,
    frozen: &TrustModel,
    batch: &[PreferenceRecord],
    lwf_weight: f64,
) -> Result<PreferenceLoss> {
    if batch.is_empty() {
        return Err(Error::Empty("preference batch"));
    }
    check_frozen(model, frozen)?;
    let mut gradient = model.params().zeros_like();
    let (mut cross_entropy, mut retention) = (0.0, 0.0);
    for r in batch {
        let (ce, ret) = accumulate_preference(model, frozen, r, lwf_weight, &mut gradient);
        cross_entropy += ce;
        retention += ret;
    }
    Ok(PreferenceLoss {
        loss: cross_entropy + retention,
        cross_entropy,
        retention,
        gradient,
    })
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: TrustModel,
    /// Sum of minibatch losses over each epoch.
    pub history: Vec<f64>,
}

fn run_sgd(
    mut model: TrustModel,
    n: usize,
    config: &TrainConfig,
    learning_rate: f64,
    stream: &str,
    mut batch_loss: impl FnMut(&TrustModel, &[usize], &mut ParamVector) -> f64,
) -> Result<TrainOutcome> {
    let mut rng = config.seed.derive(stream).rng();
    let mut order: Vec<usize> = (0..n).collect();
    let mut grad = model.params().zeros_like();
    let mut opt = Sgd { learning_rate };
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            grad.fill_zero();
            let loss = batch_loss(&model, batch, &mut grad);
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch });
            }
            total += loss;
            opt.step(model.params_mut(), &grad).map_err(|e| match e {
                Error::NonFiniteGradient { .. } => Error::Divergence { epoch },
                other => other,
            })?;
        }
        history.push(total);
    }
    Ok(TrainOutcome { model, history })
}

/// Stage A: fit level labels starting from `initial`.
pub fn train_level(initial: &TrustModel, data: &LevelDataset, config: &StlConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::Empty("level dataset"));
    }
    run_sgd(
        initial.clone(),
        data.len(),
        &config.train,
        config.train.learning_rate_a,
        "train-level",
        |model, batch, grad| {
            batch
                .iter()
                .map(|&i| accumulate_level(model, &data.records[i], grad))
                .sum()
        },
    )
}

/// Stage B: fit preferences starting from `theta_a`, which also serves as the
/// frozen reference for the forgetting penalty.
pub fn train_preference(theta_a: &TrustModel, data: &PreferenceDataset, config: &StlConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::Empty("preference dataset"));
    }
    let frozen = theta_a.clone();
    let lwf = config.lwf_weight;
    run_sgd(
        theta_a.clone(),
        data.len(),
        &config.train,
        config.train.learning_rate_b,
        "train-preference",
        |model, batch, grad| {
            batch
                .iter()
                .map(|&i| {
                    let (ce, ret) = accumulate_preference(model, &frozen, &data.records[i], lwf, grad);
                    ce + ret
                })
                .sum()
        },
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub level_accuracy: Option<f64>,
    pub preference_accuracy: Option<f64>,
}

pub fn level_accuracy<S: TrustScorer + ?Sized>(
    model: &S,
    demarcations: &DemarcationSet,
    data: &LevelDataset,
) -> Option<f64> {
    if data.is_empty() {
        return None;
    }
    let hits = data
        .records
        .iter()
        .filter(|r| demarcations.snap(model.raw(&r.features)) == r.label)
        .count();
    Some(hits as f64 / data.len() as f64)
}

/// Strict argmax; an exact tie counts as a miss.
pub fn preference_accuracy<S: TrustScorer + ?Sized>(model: &S, data: &PreferenceDataset) -> Option<f64> {
    if data.is_empty() {
        return None;
    }
    let hits = data
        .records
        .iter()
        .filter(|r| {
            let (p, q) = softmax2(model.raw(&r.first), model.raw(&r.second));
            match r.label {
                PreferenceLabel::First => p > q,
                PreferenceLabel::Second => q > p,
            }
        })
        .count();
    Some(hits as f64 / data.len() as f64)
}

pub fn evaluate<S: TrustScorer + ?Sized>(
    model: &S,
    demarcations: &DemarcationSet,
    level_test: &LevelDataset,
    pref_test: &PreferenceDataset,
) -> Evaluation {
    Evaluation {
        level_accuracy: level_accuracy(model, demarcations, level_test),
        preference_accuracy: preference_accuracy(model, pref_test),
    }
}
