//! Matching functions mapping a percept/anchor pair to a degree of match in
//! [0, 1]: a closed-form baseline and a trainable network.

mod analytic;
mod gradcheck;
mod model_file;
mod network;
mod train;

pub use analytic::{match_analytic, AnalyticParams};
pub use gradcheck::{gradient_check, loss_gradient, relative_error, GradCheckReport};
pub use model_file::{load_model, model_from_bytes, model_to_bytes, save_model, MODEL_SCHEMA_VERSION};
pub use network::{match_neural, Dense, LayerWidths, MatcherModel, Standardizer};
pub use train::{evaluate_loss, train, EpochStats, TrainConfig, TrainingHistory};

use crate::error::Result;
use crate::pair_features::PairFeatures;

/// A matching function `M: percept × anchor → [0, 1]`.
pub trait MatchFunction {
    fn score(&self, pair: &PairFeatures) -> Result<f64>;
}

#[derive(Debug, Clone)]
pub enum Matcher {
    Analytic(AnalyticParams),
    Neural(Box<MatcherModel>),
}

impl MatchFunction for Matcher {
    fn score(&self, pair: &PairFeatures) -> Result<f64> {
        match self {
            Matcher::Analytic(p) => match_analytic(pair, p),
            Matcher::Neural(m) => match_neural(m, pair),
        }
    }
}

impl MatchFunction for AnalyticParams {
    fn score(&self, pair: &PairFeatures) -> Result<f64> {
        match_analytic(pair, self)
    }
}

impl MatchFunction for MatcherModel {
    fn score(&self, pair: &PairFeatures) -> Result<f64> {
        match_neural(self, pair)
    }
}
