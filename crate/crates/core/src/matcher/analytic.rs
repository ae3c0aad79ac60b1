use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pair_features::PairFeatures;

/// Length scales of the closed-form matcher.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyticParams {
    /// Distance scale, metres.
    pub sigma_distance: f64,
    /// Time scale, seconds.
    pub sigma_time: f64,
}

impl Default for AnalyticParams {
    fn default() -> Self {
        AnalyticParams {
            sigma_distance: 1.0,
            sigma_time: 10.0,
        }
    }
}

impl AnalyticParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_distance > 0.0 && self.sigma_distance.is_finite()) {
            return Err(Error::validation("sigma_distance must be positive"));
        }
        if !(self.sigma_time > 0.0 && self.sigma_time.is_finite()) {
            return Err(Error::validation("sigma_time must be positive"));
        }
        Ok(())
    }
}

/// Class-gated product of distance, size, time and appearance agreement:
///
/// `exp(-d²/σd²) · scale · exp(-Δt/σt) · max(0, cos(a, b))`, or 0 when the
/// classes differ.
pub fn match_analytic(pair: &PairFeatures, params: &AnalyticParams) -> Result<f64> {
    params.validate()?;
    pair.validate()?;
    if !pair.same_class {
        return Ok(0.0);
    }
    let d = pair.distance / params.sigma_distance;
    let score = (-d * d).exp()
        * pair.scale_factor
        * (-pair.time_delta / params.sigma_time).exp()
        * pair.appearance_cosine().max(0.0);
    Ok(score.clamp(0.0, 1.0))
}
