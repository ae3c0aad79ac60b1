//! Percept-vs-anchor comparison features, the input of every matcher.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::percepts::{Anchor, Observation, Percept, Vec3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairFeatures {
    pub same_class: bool,
    /// Embedding of the percept side.
    pub appearance_a: Vec<f64>,
    /// Embedding of the anchor side.
    pub appearance_b: Vec<f64>,
    /// Euclidean distance between positions, metres.
    pub distance: f64,
    /// Ratio of geometric-mean extents, smaller over larger.
    pub scale_factor: f64,
    /// Absolute time between observations, seconds.
    pub time_delta: f64,
}

impl PairFeatures {
    pub fn dim(&self) -> usize {
        self.appearance_a.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.appearance_a.len() != self.appearance_b.len() {
            return Err(Error::validation(format!(
                "appearance dimensions differ: {} vs {}",
                self.appearance_a.len(),
                self.appearance_b.len()
            )));
        }
        if !(self.distance.is_finite() && self.distance >= 0.0) {
            return Err(Error::validation("distance must be finite and >= 0"));
        }
        if !(self.scale_factor > 0.0 && self.scale_factor <= 1.0) {
            return Err(Error::validation("scale_factor must lie in (0, 1]"));
        }
        if !(self.time_delta.is_finite() && self.time_delta >= 0.0) {
            return Err(Error::validation("time_delta must be finite and >= 0"));
        }
        if self
            .appearance_a
            .iter()
            .chain(&self.appearance_b)
            .any(|v| !v.is_finite())
        {
            return Err(Error::validation("non-finite appearance component"));
        }
        Ok(())
    }

    /// Cosine similarity of the two embeddings; 0 when either is the zero vector.
    pub fn appearance_cosine(&self) -> f64 {
        cosine(&self.appearance_a, &self.appearance_b)
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(-1.0, 1.0)
    }
}

pub fn euclidean(a: Vec3, b: Vec3) -> f64 {
    a.iter()
        .zip(&b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn scale_factor(a: Vec3, b: Vec3) -> f64 {
    let ga = a.iter().product::<f64>().cbrt();
    let gb = b.iter().product::<f64>().cbrt();
    ga.min(gb) / ga.max(gb)
}

/// Compares any two observations; `a` plays the percept role.
pub fn compare_observations(a: &impl Observation, b: &impl Observation) -> Result<PairFeatures> {
    if a.appearance().len() != b.appearance().len() {
        return Err(Error::validation(format!(
            "appearance dimension mismatch: {} vs {}",
            a.appearance().len(),
            b.appearance().len()
        )));
    }
    Ok(PairFeatures {
        same_class: a.class_label() == b.class_label(),
        appearance_a: a.appearance().to_vec(),
        appearance_b: b.appearance().to_vec(),
        distance: euclidean(a.position(), b.position()),
        scale_factor: scale_factor(a.size(), b.size()),
        time_delta: (a.timestamp() - b.timestamp()).abs(),
    })
}

pub fn compare(percept: &Percept, anchor: &Anchor) -> Result<PairFeatures> {
    compare_observations(percept, anchor)
}
