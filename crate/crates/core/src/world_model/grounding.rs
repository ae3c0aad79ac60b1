use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Fact, KnowledgeBase, PredicateDecl, Term, NUMBER_TYPE, OBJECT_TYPE, STRING_TYPE};
use crate::error::{Error, Result};
use crate::percepts::{Anchor, Vec3};

/// Percept feature a grounding rule reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    Class,
    Position,
    Size,
    Timestamp,
}

impl FromStr for Feature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "class" => Ok(Feature::Class),
            "position" => Ok(Feature::Position),
            "size" => Ok(Feature::Size),
            "timestamp" => Ok(Feature::Timestamp),
            other => Err(Error::validation(format!("unknown feature {other:?}"))),
        }
    }
}

/// How a feature value is turned into a fact argument.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum Encoder {
    /// Class label as a symbol, timestamp as a number.
    Verbatim,
    /// Position floored onto a grid of `cell_size` metre cubes.
    Zone { cell_size: f64 },
    /// Box volume bucketed into small / medium / large.
    SizeCategory { small_max: f64, large_min: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SizeCategory {
    Small,
    Medium,
    Large,
}

impl SizeCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            SizeCategory::Small => "small",
            SizeCategory::Medium => "medium",
            SizeCategory::Large => "large",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "small" => Some(SizeCategory::Small),
            "medium" => Some(SizeCategory::Medium),
            "large" => Some(SizeCategory::Large),
            _ => None,
        }
    }

    pub fn classify(volume: f64, small_max: f64, large_min: f64) -> Self {
        if volume < small_max {
            SizeCategory::Small
        } else if volume > large_min {
            SizeCategory::Large
        } else {
            SizeCategory::Medium
        }
    }

    /// Representative cube extents for a category. Large has no upper
    /// bound, so it uses twice its lower threshold.
    pub fn representative_size(self, small_max: f64, large_min: f64) -> Vec3 {
        let volume = match self {
            SizeCategory::Small => small_max / 2.0,
            SizeCategory::Medium => (small_max + large_min) / 2.0,
            SizeCategory::Large => 2.0 * large_min,
        };
        let edge = volume.cbrt();
        [edge, edge, edge]
    }
}

/// One element of the grounding relation: predicate × feature × encoding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingRule {
    pub predicate: String,
    pub feature: Feature,
    pub encoder: Encoder,
}

impl GroundingRule {
    pub fn new(predicate: impl Into<String>, feature: Feature, encoder: Encoder) -> Result<Self> {
        let rule = GroundingRule {
            predicate: predicate.into(),
            feature,
            encoder,
        };
        rule.validate()?;
        Ok(rule)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match (self.feature, self.encoder) {
            (Feature::Class | Feature::Timestamp, Encoder::Verbatim) => true,
            (Feature::Position, Encoder::Zone { cell_size }) => cell_size.is_finite() && cell_size > 0.0,
            (Feature::Size, Encoder::SizeCategory { small_max, large_min }) => {
                small_max > 0.0 && large_min >= small_max && large_min.is_finite()
            }
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::validation(format!(
                "rule {}: encoder {:?} is not valid for feature {:?}",
                self.predicate, self.encoder, self.feature
            )))
        }
    }

    /// Literal type of the second argument of the rule's predicate.
    pub fn value_type(&self) -> &'static str {
        match self.feature {
            Feature::Timestamp => NUMBER_TYPE,
            _ => STRING_TYPE,
        }
    }

    fn encode(&self, anchor: &Anchor) -> Term {
        match (self.feature, self.encoder) {
            (Feature::Class, _) => Term::Symbol(anchor.class_label.clone()),
            (Feature::Timestamp, _) => Term::Number(anchor.last_timestamp),
            (Feature::Position, Encoder::Zone { cell_size }) => {
                Term::Symbol(zone_symbol(anchor.position, cell_size))
            }
            (Feature::Size, Encoder::SizeCategory { small_max, large_min }) => {
                let v = anchor.size.iter().product::<f64>();
                Term::Symbol(SizeCategory::classify(v, small_max, large_min).as_str().into())
            }
            _ => unreachable!("validated rule"),
        }
    }
}

/// `zone_<i>_<j>_<k>` where each index is the floored coordinate / cell size.
pub fn zone_symbol(position: Vec3, cell_size: f64) -> String {
    let idx = position.map(|c| (c / cell_size).floor() as i64);
    format!("zone_{}_{}_{}", idx[0], idx[1], idx[2])
}

/// Centre of the cell named by a zone symbol.
pub fn zone_centroid(symbol: &str, cell_size: f64) -> Option<Vec3> {
    let rest = symbol.strip_prefix("zone_")?;
    let parts: Vec<i64> = rest
        .split('_')
        .map(|p| p.parse().ok())
        .collect::<Option<_>>()?;
    if parts.len() != 3 {
        return None;
    }
    Some([0, 1, 2].map(|i| (parts[i] as f64 + 0.5) * cell_size))
}

/// Default vocabulary: class verbatim, 1 m zones, volume categories with
/// thresholds 0.01 m³ and 0.5 m³.
pub fn default_rules() -> Vec<GroundingRule> {
    vec![
        GroundingRule {
            predicate: "object_class".into(),
            feature: Feature::Class,
            encoder: Encoder::Verbatim,
        },
        GroundingRule {
            predicate: "object_at_zone".into(),
            feature: Feature::Position,
            encoder: Encoder::Zone { cell_size: 1.0 },
        },
        GroundingRule {
            predicate: "object_size_category".into(),
            feature: Feature::Size,
            encoder: Encoder::SizeCategory {
                small_max: 0.01,
                large_min: 0.5,
            },
        },
    ]
}

/// Declares the `object` type and one functional binary predicate per rule.
pub fn declare_rule_predicates(kb: &mut KnowledgeBase, rules: &[GroundingRule]) -> Result<()> {
    kb.declare_type(OBJECT_TYPE)?;
    for r in rules {
        r.validate()?;
        kb.declare_predicate(PredicateDecl::new(
            r.predicate.clone(),
            &[OBJECT_TYPE, r.value_type()],
            true,
        ))?;
    }
    Ok(())
}

/// Encodes the anchor's features into one fact per rule.
pub fn ground(anchor: &Anchor, rules: &[GroundingRule]) -> Result<Vec<Fact>> {
    rules
        .iter()
        .map(|r| {
            r.validate()?;
            Ok(Fact::new(
                r.predicate.clone(),
                vec![Term::Object(anchor.object_id.clone()), r.encode(anchor)],
            ))
        })
        .collect()
}
