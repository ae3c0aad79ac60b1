use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::network::{sigmoid, Gradients, MatcherModel};
use crate::error::{Error, Result};
use crate::pair_features::PairFeatures;

/// Gradients whose magnitudes are both below this are compared absolutely.
const MAGNITUDE_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// `(parameter index, analytic, numeric)` for every checked parameter.
    pub entries: Vec<(usize, f64, f64)>,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    let scale = analytic.abs().max(numeric.abs());
    if scale < MAGNITUDE_FLOOR {
        diff
    } else {
        diff / scale
    }
}

/// Analytic parameter gradients of the loss for one pair.
pub fn loss_gradient(model: &MatcherModel, pair: &PairFeatures, target: f64) -> Result<Vec<f64>> {
    model.check_input(pair)?;
    let mut act = model.activations();
    model.forward(pair, &mut act);
    let mut grads = Gradients::zeros_like(model);
    model.backward(&act, sigmoid(act.logit) - target, &mut grads);
    Ok(grads.flat().copied().collect())
}

/// Compares backpropagated gradients with central finite differences on
/// `count` parameters drawn with `seed` (all parameters if fewer exist).
/// `target` may be a soft label in [0, 1].
pub fn gradient_check(
    model: &MatcherModel,
    pair: &PairFeatures,
    target: f64,
    epsilon: f64,
    count: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    if !(epsilon > 0.0 && epsilon <= 1e-2) {
        return Err(Error::validation(format!("epsilon {epsilon} outside (0, 1e-2]")));
    }
    if !(0.0..=1.0).contains(&target) {
        return Err(Error::validation("target must lie in [0, 1]"));
    }
    model.check_input(pair)?;
    let mut grads = Gradients::zeros_like(model);
    let mut act = model.activations();
    model.forward(pair, &mut act);
    model.backward(&act, sigmoid(act.logit) - target, &mut grads);

    let n = model.param_count();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices = sample(&mut rng, n, count.min(n)).into_vec();
    indices.sort_unstable();

    let mut probe = model.clone();
    let mut entries = Vec::with_capacity(indices.len());
    let mut max_err: f64 = 0.0;
    for idx in indices {
        let original = probe.param(idx);
        probe.set_param(idx, original + epsilon);
        let plus = probe.loss(pair, target)?;
        probe.set_param(idx, original - epsilon);
        let minus = probe.loss(pair, target)?;
        probe.set_param(idx, original);
        let numeric = (plus - minus) / (2.0 * epsilon);
        let analytic = grads.get(idx);
        max_err = max_err.max(relative_error(analytic, numeric));
        entries.push((idx, analytic, numeric));
    }
    Ok(GradCheckReport {
        max_relative_error: max_err,
        entries,
    })
}
