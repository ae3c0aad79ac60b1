//! Perceptual anchoring: maintains the correspondence between streams of
//! object percepts and symbols in a knowledge base.
//!
//! The per-frame loop lives in [`engine`]. It scores every percept against
//! every anchor with a [`matcher::Matcher`], resolves the table with
//! [`assignment::solve`], and keeps the [`world_model::KnowledgeBase`] in sync
//! through grounding rules. [`sim`], [`dataset`] and [`eval`] provide the
//! data and scoring around it.

pub mod assignment;
pub mod dataset;
pub mod engine;
pub mod error;
pub mod eval;
pub mod matcher;
pub mod pair_features;
pub mod percepts;
pub mod sim;
pub mod world_model;

pub use assignment::{solve, Assignment, MatchingTable};
pub use engine::{Engine, EngineConfig, FrameEvents, UpdatePolicy};
pub use error::{Error, Result};
pub use matcher::{MatchFunction, Matcher, MatcherModel};
pub use pair_features::{compare, PairFeatures};
pub use percepts::{Anchor, AnchorId, AnchorStatus, Frame, Percept, Scene, Vec3};
pub use world_model::{Fact, KnowledgeBase, Term};
