//! Synthetic ground-truth scenes.
//!
//! Each instance gets a fixed class, a base box size, a unit-norm base
//! embedding and a trajectory (stationary or constant velocity, reflecting
//! at the workspace bounds). Every frame emits one noisy percept per
//! instance that survives detection dropout, in shuffled order.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::percepts::{Frame, Percept, Scene, Vec3, DEFAULT_EMBEDDING_DIM};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Motion {
    Stationary,
    /// Speed drawn uniformly from `[0, max_speed]` m/s in a random
    /// horizontal direction.
    ConstantVelocity { max_speed: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassAssignment {
    Random,
    /// Instance `k` takes class `k mod |classes|`.
    RoundRobin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    pub num_frames: usize,
    /// Seconds between frames.
    pub frame_period: f64,
    pub num_instances: usize,
    pub classes: Vec<String>,
    pub class_assignment: ClassAssignment,
    /// Workspace lower corner, metres.
    pub bounds_min: Vec3,
    /// Workspace upper corner, metres.
    pub bounds_max: Vec3,
    pub motion: Motion,
    /// Position noise standard deviation per axis, metres.
    pub position_noise: f64,
    /// Size noise standard deviation per axis, metres.
    pub size_noise: f64,
    /// Expected norm of the embedding perturbation before renormalisation.
    pub appearance_noise: f64,
    pub dropout: f64,
    pub embedding_dim: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            seed: 0,
            num_frames: 10,
            frame_period: 0.5,
            num_instances: 8,
            classes: ["chair", "table", "person", "bottle", "monitor"]
                .map(String::from)
                .to_vec(),
            class_assignment: ClassAssignment::Random,
            bounds_min: [0.0, 0.0, 0.0],
            bounds_max: [10.0, 10.0, 2.0],
            motion: Motion::ConstantVelocity { max_speed: 1.0 },
            position_noise: 0.1,
            size_noise: 0.02,
            appearance_noise: 0.8,
            dropout: 0.05,
            embedding_dim: DEFAULT_EMBEDDING_DIM,
        }
    }
}

impl SimConfig {
    /// Noise-free, dropout-free, stationary variant of `self`.
    pub fn noise_free_stationary(mut self) -> Self {
        self.motion = Motion::Stationary;
        self.position_noise = 0.0;
        self.size_noise = 0.0;
        self.appearance_noise = 0.0;
        self.dropout = 0.0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let non_negative = [
            ("position_noise", self.position_noise),
            ("size_noise", self.size_noise),
            ("appearance_noise", self.appearance_noise),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::validation(format!("{name} must be >= 0")));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::validation("dropout must lie in [0, 1)"));
        }
        if (0..3).any(|k| !(self.bounds_min[k] < self.bounds_max[k])) {
            return Err(Error::validation("workspace bounds are degenerate"));
        }
        if !(self.frame_period > 0.0 && self.frame_period.is_finite()) {
            return Err(Error::validation("frame_period must be positive"));
        }
        if self.classes.is_empty() {
            return Err(Error::validation("class vocabulary is empty"));
        }
        if self.embedding_dim == 0 {
            return Err(Error::validation("embedding_dim must be positive"));
        }
        if let Motion::ConstantVelocity { max_speed } = self.motion {
            if !(max_speed.is_finite() && max_speed >= 0.0) {
                return Err(Error::validation("max_speed must be >= 0"));
            }
        }
        Ok(())
    }
}

struct Instance {
    id: String,
    class: String,
    size: Vec3,
    appearance: Vec<f64>,
    position: Vec3,
    velocity: Vec3,
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

fn unit_vector(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    let normal = Normal::new(0.0, 1.0).expect("valid normal");
    loop {
        let mut v: Vec<f64> = (0..dim).map(|_| normal.sample(rng)).collect();
        if v.iter().any(|x| *x != 0.0) {
            normalize(&mut v);
            return v;
        }
    }
}

fn gaussian(rng: &mut impl Rng, sigma: f64) -> f64 {
    if sigma == 0.0 {
        0.0
    } else {
        Normal::new(0.0, sigma).expect("valid normal").sample(rng)
    }
}

/// Generates one scene named `scene_id`. Fully determined by `cfg`.
pub fn generate(cfg: &SimConfig, scene_id: &str) -> Result<Scene> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let d = cfg.embedding_dim;

    let mut instances: Vec<Instance> = (0..cfg.num_instances)
        .map(|k| {
            let class = match cfg.class_assignment {
                ClassAssignment::Random => cfg.classes[rng.random_range(0..cfg.classes.len())].clone(),
                ClassAssignment::RoundRobin => cfg.classes[k % cfg.classes.len()].clone(),
            };
            let size = [0, 1, 2].map(|_| rng.random_range(0.2..1.5));
            let appearance = unit_vector(&mut rng, d);
            let position = [0, 1, 2].map(|a| rng.random_range(cfg.bounds_min[a]..cfg.bounds_max[a]));
            let velocity = match cfg.motion {
                Motion::Stationary => [0.0; 3],
                Motion::ConstantVelocity { max_speed } => {
                    let speed = rng.random_range(0.0..=max_speed);
                    let heading = rng.random_range(0.0..std::f64::consts::TAU);
                    [speed * heading.cos(), speed * heading.sin(), 0.0]
                }
            };
            Instance {
                id: format!("inst_{k}"),
                class,
                size,
                appearance,
                position,
                velocity,
            }
        })
        .collect();

    let per_component = cfg.appearance_noise / (d as f64).sqrt();
    let mut frames = Vec::with_capacity(cfg.num_frames);
    for f in 0..cfg.num_frames {
        let t = f as f64 * cfg.frame_period;
        if f > 0 {
            for inst in &mut instances {
                advance(inst, cfg);
            }
        }
        let mut percepts = Vec::with_capacity(instances.len());
        for inst in &instances {
            // draw the dropout decision unconditionally so the stream stays aligned
            let dropped = rng.random_bool(cfg.dropout);
            let position = inst.position.map(|c| c + gaussian(&mut rng, cfg.position_noise));
            let size = inst
                .size
                .map(|s| (s + gaussian(&mut rng, cfg.size_noise)).max(1e-3));
            let mut appearance: Vec<f64> = inst
                .appearance
                .iter()
                .map(|a| a + gaussian(&mut rng, per_component))
                .collect();
            normalize(&mut appearance);
            if dropped {
                continue;
            }
            percepts.push(Percept {
                percept_id: String::new(),
                class_label: inst.class.clone(),
                appearance,
                position,
                size,
                timestamp: t,
                ground_truth_instance: Some(inst.id.clone()),
            });
        }
        percepts.shuffle(&mut rng);
        for (j, p) in percepts.iter_mut().enumerate() {
            p.percept_id = format!("p{j}");
        }
        frames.push(Frame::new(t, percepts));
    }
    let scene = Scene {
        scene_id: scene_id.to_string(),
        embedding_dim: d,
        frames,
    };
    scene.validate()?;
    Ok(scene)
}

fn advance(inst: &mut Instance, cfg: &SimConfig) {
    for a in 0..3 {
        let (lo, hi) = (cfg.bounds_min[a], cfg.bounds_max[a]);
        let mut x = inst.position[a] + inst.velocity[a] * cfg.frame_period;
        // reflect until inside; a fast object may bounce more than once
        while x < lo || x > hi {
            if x < lo {
                x = 2.0 * lo - x;
            } else {
                x = 2.0 * hi - x;
            }
            inst.velocity[a] = -inst.velocity[a];
        }
        inst.position[a] = x;
    }
}

/// `count` scenes named `{prefix}{i}`, each with its own derived seed.
pub fn generate_many(cfg: &SimConfig, prefix: &str, count: usize) -> Result<Vec<Scene>> {
    (0..count)
        .map(|i| {
            let mut c = cfg.clone();
            c.seed = scene_seed(cfg.seed, i as u64);
            generate(&c, &format!("{prefix}{i}"))
        })
        .collect()
}

pub fn scene_seed(base: u64, index: u64) -> u64 {
    base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn noise_free_stationary_scene() {
        let cfg = SimConfig {
            num_instances: 5,
            num_frames: 10,
            ..SimConfig::default()
        }
        .noise_free_stationary();
        let s = generate(&cfg, "s").unwrap();
        assert_eq!(s.percept_count(), 50);
        let mut first: HashMap<String, Vec3> = HashMap::new();
        for f in &s.frames {
            for p in &f.percepts {
                let inst = p.ground_truth_instance.clone().unwrap();
                let pos = *first.entry(inst).or_insert(p.position);
                assert_eq!(pos, p.position);
            }
        }
    }

    #[test]
    fn same_seed_same_scene() {
        let cfg = SimConfig::default();
        assert_eq!(generate(&cfg, "s").unwrap(), generate(&cfg, "s").unwrap());
        let other = SimConfig { seed: 1, ..cfg.clone() };
        assert_ne!(generate(&cfg, "s").unwrap(), generate(&other, "s").unwrap());
    }

    #[test]
    fn dropout_rate_concentrates() {
        let cfg = SimConfig {
            num_instances: 10,
            num_frames: 100,
            dropout: 0.2,
            ..SimConfig::default()
        };
        let s = generate(&cfg, "s").unwrap();
        let emitted = 1000.0;
        let rate = 1.0 - s.percept_count() as f64 / emitted;
        assert!((rate - 0.2).abs() <= 0.05, "rate {rate}");
    }

    #[test]
    fn instances_keep_class_and_stay_in_bounds() {
        let cfg = SimConfig {
            num_frames: 200,
            position_noise: 0.0,
            motion: Motion::ConstantVelocity { max_speed: 3.0 },
            ..SimConfig::default()
        };
        let s = generate(&cfg, "s").unwrap();
        let mut classes: HashMap<String, String> = HashMap::new();
        for f in &s.frames {
            for p in &f.percepts {
                let c = classes
                    .entry(p.ground_truth_instance.clone().unwrap())
                    .or_insert(p.class_label.clone());
                assert_eq!(c, &p.class_label);
                for a in 0..3 {
                    assert!(p.position[a] >= cfg.bounds_min[a] && p.position[a] <= cfg.bounds_max[a]);
                }
            }
        }
    }

    #[test]
    fn heavy_size_noise_still_positive() {
        let cfg = SimConfig {
            size_noise: 5.0,
            ..SimConfig::default()
        };
        let s = generate(&cfg, "s").unwrap();
        assert!(s.frames.iter().flat_map(|f| &f.percepts).all(|p| p.size.iter().all(|v| *v > 0.0)));
    }

    #[test]
    fn invalid_configs() {
        let base = SimConfig::default();
        assert!(generate(&SimConfig { dropout: 1.0, ..base.clone() }, "s").is_err());
        assert!(generate(&SimConfig { position_noise: -1.0, ..base.clone() }, "s").is_err());
        assert!(generate(&SimConfig { bounds_max: [0.0, 10.0, 2.0], ..base.clone() }, "s").is_err());
        assert!(generate(&SimConfig { classes: vec![], ..base }, "s").is_err());
    }

    #[test]
    fn round_robin_classes_are_distinct() {
        let cfg = SimConfig {
            num_instances: 5,
            class_assignment: ClassAssignment::RoundRobin,
            ..SimConfig::default()
        };
        let s = generate(&cfg, "s").unwrap();
        let mut classes: Vec<_> = s.frames[0].percepts.iter().map(|p| p.class_label.clone()).collect();
        classes.sort();
        classes.dedup();
        assert_eq!(classes.len(), s.frames[0].percepts.len());
    }
}
