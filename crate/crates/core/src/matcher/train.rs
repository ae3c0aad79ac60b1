use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{bce_with_logit, Gradients, LayerWidths, MatcherModel, Standardizer};
use crate::dataset::LabeledPair;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub comparator_width: usize,
    pub feature_width: usize,
    pub encoding_width: usize,
    pub hidden_width: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let w = LayerWidths::with_dim(1);
        TrainConfig {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            adam_epsilon: 1e-8,
            batch_size: 32,
            epochs: 20,
            seed: 0,
            comparator_width: w.comparator,
            feature_width: w.feature,
            encoding_width: w.encoding,
            hidden_width: w.hidden,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::validation("learning_rate must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::validation("batch_size must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::validation("Adam moment coefficients must lie in [0, 1)"));
        }
        if !(self.adam_epsilon > 0.0) {
            return Err(Error::validation("adam_epsilon must be positive"));
        }
        Ok(())
    }

    pub fn widths(&self, d: usize) -> LayerWidths {
        LayerWidths {
            d,
            comparator: self.comparator_width,
            feature: self.feature_width,
            encoding: self.encoding_width,
            hidden: self.hidden_width,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub epochs: Vec<EpochStats>,
    pub warnings: Vec<String>,
}

/// Adam state over the flattened parameter vector.
struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    fn update(&mut self, model: &mut MatcherModel, grads: &Gradients, scale: f64, cfg: &TrainConfig) {
        self.step += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.step);
        let bc2 = 1.0 - cfg.beta2.powi(self.step);
        for (((p, g), m), v) in model
            .params_mut()
            .zip(grads.flat())
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            let g = g * scale;
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.adam_epsilon);
        }
    }
}

/// Mean loss and accuracy (threshold 0.5) of `model` over `pairs`.
pub fn evaluate_loss(model: &MatcherModel, pairs: &[LabeledPair]) -> (f64, f64) {
    if pairs.is_empty() {
        return (0.0, 0.0);
    }
    let mut act = model.activations();
    let mut loss = 0.0;
    let mut correct = 0usize;
    for p in pairs {
        model.forward(&p.features, &mut act);
        let y = if p.label { 1.0 } else { 0.0 };
        loss += bce_with_logit(act.logit, y);
        if (act.logit > 0.0) == p.label {
            correct += 1;
        }
    }
    let n = pairs.len() as f64;
    (loss / n, correct as f64 / n)
}

/// Trains a fresh model with mini-batch Adam on binary cross-entropy.
///
/// Initialisation and shuffling both derive from `cfg.seed`; the run is
/// bit-reproducible.
pub fn train(
    train_pairs: &[LabeledPair],
    val_pairs: &[LabeledPair],
    cfg: &TrainConfig,
) -> Result<(MatcherModel, TrainingHistory)> {
    cfg.validate()?;
    let first = train_pairs
        .first()
        .ok_or_else(|| Error::validation("training set is empty"))?;
    let d = first.features.dim();
    let mut model = MatcherModel::init(cfg.widths(d), cfg.seed)?;
    for (i, p) in train_pairs.iter().chain(val_pairs).enumerate() {
        model
            .check_input(&p.features)
            .map_err(|e| Error::validation(format!("pair {i}: {e}")))?;
    }

    let mut history = TrainingHistory::default();
    let positives = train_pairs.iter().filter(|p| p.label).count();
    if positives == 0 || positives == train_pairs.len() {
        history.warnings.push(format!(
            "training set holds a single label ({} of {} positive)",
            positives,
            train_pairs.len()
        ));
    }

    model.set_standardizer(Standardizer::fit(train_pairs.iter().map(|p| &p.features)));
    if cfg.epochs == 0 {
        return Ok((model, history));
    }

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5eed));
    let mut adam = Adam::new(model.param_count());
    let mut grads = Gradients::zeros_like(&model);
    let mut act = model.activations();
    let mut order: Vec<usize> = (0..train_pairs.len()).collect();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        for batch in order.chunks(cfg.batch_size) {
            grads.clear();
            for &idx in batch {
                let p = &train_pairs[idx];
                model.forward(&p.features, &mut act);
                let y = if p.label { 1.0 } else { 0.0 };
                let d_logit = super::network::sigmoid(act.logit) - y;
                model.backward(&act, d_logit, &mut grads);
            }
            adam.update(&mut model, &grads, 1.0 / batch.len() as f64, cfg);
        }
        let (train_loss, train_accuracy) = evaluate_loss(&model, train_pairs);
        let (val_loss, val_accuracy) = if val_pairs.is_empty() {
            (None, None)
        } else {
            let (l, a) = evaluate_loss(&model, val_pairs);
            (Some(l), Some(a))
        };
        history.epochs.push(EpochStats {
            epoch: epoch + 1,
            train_loss,
            train_accuracy,
            val_loss,
            val_accuracy,
        });
    }
    Ok((model, history))
}
