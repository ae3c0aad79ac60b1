//! The anchoring loop: acquire, reacquire, find and track.
//!
//! Each frame is scored against every existing anchor, the matching table is
//! resolved with an optimal one-to-one assignment, and every percept is then
//! either linked to its assigned anchor (value strictly above the threshold)
//! or turned into a new anchor. Grounding facts follow every change.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::assignment::{solve, Assignment, MatchingTable};
use crate::error::{Error, Result};
use crate::matcher::{AnalyticParams, MatchFunction, Matcher};
use crate::pair_features::compare;
use crate::percepts::{anchor_from_percept, Anchor, AnchorId, AnchorStatus, Frame, Percept, Scene, Vec3};
use crate::world_model::{
    declare_rule_predicates, default_rules, ground, snapshot_with_digest, zone_centroid, Encoder, Fact,
    Feature, GroundingRule, KnowledgeBase, SizeCategory, Term, OBJECT_TYPE,
};

pub const EVENT_LOG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum UpdatePolicy {
    /// The anchor takes the latest percept's features.
    Replace,
    /// `new = beta * percept + (1 - beta) * anchor` for position, size and
    /// appearance.
    Smooth { beta: f64 },
}

#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub threshold: f64,
    pub matcher: Matcher,
    /// Seconds without observation after which an anchor becomes stale.
    pub track_staleness: f64,
    pub grounding_rules: Vec<GroundingRule>,
    pub update_policy: UpdatePolicy,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            threshold: 0.5,
            matcher: Matcher::Analytic(AnalyticParams::default()),
            track_staleness: 5.0,
            grounding_rules: default_rules(),
            update_policy: UpdatePolicy::Replace,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::validation(format!(
                "threshold {} must lie in (0, 1)",
                self.threshold
            )));
        }
        if !(self.track_staleness > 0.0) {
            return Err(Error::validation("track_staleness must be positive"));
        }
        if let UpdatePolicy::Smooth { beta } = self.update_policy {
            if !(beta > 0.0 && beta <= 1.0) {
                return Err(Error::validation(format!("smoothing factor {beta} must lie in (0, 1]")));
            }
        }
        if let Matcher::Analytic(p) = &self.matcher {
            p.validate()?;
        }
        for r in &self.grounding_rules {
            r.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Acquired {
    pub percept_id: String,
    pub anchor_id: AnchorId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reacquired {
    pub percept_id: String,
    pub anchor_id: AnchorId,
    pub value: f64,
}

/// What one frame did to the anchor set. Also the event-log record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameEvents {
    pub frame_index: usize,
    pub timestamp: f64,
    pub acquired: Vec<Acquired>,
    pub reacquired: Vec<Reacquired>,
    /// Anchors that turned stale at this frame.
    pub tracked_stale: Vec<AnchorId>,
}

/// Per-percept outcome of a resolved matching table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Decision {
    Acquire,
    Reacquire { col: usize, value: f64 },
}

/// Row `i` reacquires its assigned column when the value is strictly above
/// `threshold`; unassigned rows and weak pairs acquire.
pub fn decide(table: &MatchingTable, assignment: &Assignment, threshold: f64) -> Vec<Decision> {
    (0..table.n_rows())
        .map(|i| match assignment.col_for_row(i) {
            Some(j) if table.get(i, j) > threshold => Decision::Reacquire {
                col: j,
                value: table.get(i, j),
            },
            _ => Decision::Acquire,
        })
        .collect()
}

/// Cell `(i, j)` is `matcher(compare(percepts[i], anchors[j]))`.
pub fn create_matching_table(
    percepts: &[Percept],
    anchors: &[Anchor],
    matcher: &impl MatchFunction,
) -> Result<MatchingTable> {
    let mut values = Vec::with_capacity(percepts.len() * anchors.len());
    for p in percepts {
        for a in anchors {
            values.push(matcher.score(&compare(p, a)?)?);
        }
    }
    MatchingTable::new(
        percepts.iter().map(|p| p.percept_id.clone()).collect(),
        anchors.iter().map(|a| a.anchor_id).collect(),
        values,
    )
}

/// Constant-position prediction: only the staleness flag can change.
pub fn track(anchor: &Anchor, now: f64, staleness: f64) -> Anchor {
    let mut a = anchor.clone();
    if now - a.last_timestamp > staleness {
        a.status = AnchorStatus::Stale;
    }
    a
}

#[derive(Debug, Clone, PartialEq)]
pub enum FindResult {
    /// An anchor is already linked to the object.
    Linked(AnchorId),
    /// Best-scoring anchor for the prototype built from the facts.
    Matched { anchor_id: AnchorId, value: f64 },
    NoMatch,
}

pub struct Engine {
    config: EngineConfig,
    kb: KnowledgeBase,
    anchors: Vec<Anchor>,
    next_id: u64,
    last_time: Option<f64>,
    frames_seen: usize,
}

impl Engine {
    pub fn new(config: EngineConfig) -> Result<Self> {
        config.validate()?;
        let mut kb = KnowledgeBase::new();
        declare_rule_predicates(&mut kb, &config.grounding_rules)?;
        Ok(Engine {
            config,
            kb,
            anchors: Vec::new(),
            next_id: 0,
            last_time: None,
            frames_seen: 0,
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn kb(&self) -> &KnowledgeBase {
        &self.kb
    }

    pub fn anchors(&self) -> &[Anchor] {
        &self.anchors
    }

    pub fn anchor(&self, id: AnchorId) -> Option<&Anchor> {
        self.anchors.iter().find(|a| a.anchor_id == id)
    }

    fn index_of(&self, id: AnchorId) -> Result<usize> {
        self.anchors
            .iter()
            .position(|a| a.anchor_id == id)
            .ok_or_else(|| Error::validation(format!("unknown anchor {id}")))
    }

    /// New anchor and KB object for `percept`, with its grounding facts.
    pub fn acquire(&mut self, percept: &Percept) -> Result<AnchorId> {
        let id = AnchorId(self.next_id);
        let object_id = format!("obj_{}", self.next_id);
        let anchor = anchor_from_percept(percept, &object_id, id);
        let facts = ground(&anchor, &self.config.grounding_rules)?;
        self.kb.add_object(object_id, OBJECT_TYPE)?;
        self.kb.apply_facts(&facts, &[])?;
        self.next_id += 1;
        self.anchors.push(anchor);
        Ok(id)
    }

    /// Extends anchor `id` with `percept`. The class label stays as acquired.
    pub fn reacquire(&mut self, id: AnchorId, percept: &Percept) -> Result<()> {
        let idx = self.index_of(id)?;
        let a = &mut self.anchors[idx];
        if percept.timestamp < a.last_timestamp {
            return Err(Error::validation(format!(
                "percept {} at t={} predates {} last seen at t={}",
                percept.percept_id, percept.timestamp, id, a.last_timestamp
            )));
        }
        if percept.appearance.len() != a.appearance.len() {
            return Err(Error::validation(format!(
                "percept {}: appearance dimension {} != {}",
                percept.percept_id,
                percept.appearance.len(),
                a.appearance.len()
            )));
        }
        match self.config.update_policy {
            UpdatePolicy::Replace => {
                a.position = percept.position;
                a.size = percept.size;
                a.appearance.clone_from(&percept.appearance);
            }
            UpdatePolicy::Smooth { beta } => {
                let mix = |old: f64, new: f64| beta * new + (1.0 - beta) * old;
                a.position = blend3(a.position, percept.position, mix);
                a.size = blend3(a.size, percept.size, mix);
                for (o, n) in a.appearance.iter_mut().zip(&percept.appearance) {
                    *o = mix(*o, *n);
                }
            }
        }
        a.last_timestamp = percept.timestamp;
        a.observation_count += 1;
        a.status = AnchorStatus::Active;
        let facts = ground(a, &self.config.grounding_rules)?;
        self.kb.apply_facts(&facts, &[])
    }

    /// Re-evaluates staleness of anchor `id` at time `now`. Returns true when
    /// the anchor turned stale with this call.
    pub fn track(&mut self, id: AnchorId, now: f64) -> Result<bool> {
        let idx = self.index_of(id)?;
        let before = self.anchors[idx].status;
        let after = track(&self.anchors[idx], now, self.config.track_staleness);
        let turned = before == AnchorStatus::Active && after.status == AnchorStatus::Stale;
        self.anchors[idx] = after;
        Ok(turned)
    }

    pub fn create_matching_table(&self, percepts: &[Percept]) -> Result<MatchingTable> {
        create_matching_table(percepts, &self.anchors, &self.config.matcher)
    }

    pub fn process_frame(&mut self, frame: &Frame) -> Result<FrameEvents> {
        if let Some(last) = self.last_time {
            if frame.timestamp < last {
                return Err(Error::validation(format!(
                    "frame at t={} arrives after t={}",
                    frame.timestamp, last
                )));
            }
        }
        let dim = frame
            .percepts
            .first()
            .map(|p| p.appearance.len())
            .or_else(|| self.anchors.first().map(|a| a.appearance.len()));
        if let Some(d) = dim {
            frame.validate(d)?;
        }
        // stamp a private copy so reacquire sees the frame time even if the
        // caller built percepts by hand
        let frame = Frame::new(frame.timestamp, frame.percepts.clone());

        let decisions = if self.anchors.is_empty() {
            vec![Decision::Acquire; frame.percepts.len()]
        } else {
            let table = self.create_matching_table(&frame.percepts)?;
            decide(&table, &solve(&table), self.config.threshold)
        };

        let existing: Vec<AnchorId> = self.anchors.iter().map(|a| a.anchor_id).collect();
        let mut events = FrameEvents {
            frame_index: self.frames_seen,
            timestamp: frame.timestamp,
            acquired: Vec::new(),
            reacquired: Vec::new(),
            tracked_stale: Vec::new(),
        };
        for (p, d) in frame.percepts.iter().zip(decisions) {
            match d {
                Decision::Acquire => {
                    let anchor_id = self.acquire(p)?;
                    events.acquired.push(Acquired {
                        percept_id: p.percept_id.clone(),
                        anchor_id,
                    });
                }
                Decision::Reacquire { col, value } => {
                    self.reacquire(existing[col], p)?;
                    events.reacquired.push(Reacquired {
                        percept_id: p.percept_id.clone(),
                        anchor_id: existing[col],
                        value,
                    });
                }
            }
        }
        for id in existing {
            if self.track(id, frame.timestamp)? {
                events.tracked_stale.push(id);
            }
        }
        self.last_time = Some(frame.timestamp);
        self.frames_seen += 1;
        Ok(events)
    }

    /// Runs every frame of `scene` in order.
    pub fn run(&mut self, scene: &Scene) -> Result<Vec<FrameEvents>> {
        scene.frames.iter().map(|f| self.process_frame(f)).collect()
    }

    /// Resolves a symbol to an anchor. Without a direct link, a prototype is
    /// built from the class, zone and size-category facts and scored against
    /// the active anchors. Features the facts do not describe (appearance,
    /// time, and position or size when absent) are copied from each
    /// candidate so they do not influence the score.
    pub fn find(&self, object_id: &str, facts: &[Fact]) -> Result<FindResult> {
        if let Some(a) = self.anchors.iter().find(|a| a.object_id == object_id) {
            return Ok(FindResult::Linked(a.anchor_id));
        }
        let proto = self.prototype(object_id, facts)?;
        let mut best: Option<(AnchorId, f64)> = None;
        for a in self.anchors.iter().filter(|a| a.status == AnchorStatus::Active) {
            let candidate = Percept {
                percept_id: object_id.to_string(),
                class_label: proto.class.clone(),
                appearance: a.appearance.clone(),
                position: proto.position.unwrap_or(a.position),
                size: proto.size.unwrap_or(a.size),
                timestamp: a.last_timestamp,
                ground_truth_instance: None,
            };
            let v = self.config.matcher.score(&compare(&candidate, a)?)?;
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((a.anchor_id, v));
            }
        }
        Ok(match best {
            Some((anchor_id, value)) if value > self.config.threshold => FindResult::Matched { anchor_id, value },
            _ => FindResult::NoMatch,
        })
    }

    fn prototype(&self, object_id: &str, facts: &[Fact]) -> Result<Prototype> {
        let mut proto = Prototype::default();
        for f in facts {
            let (Some(Term::Object(subject)), Some(Term::Symbol(value))) = (f.args.first(), f.args.get(1)) else {
                continue;
            };
            if subject != object_id {
                continue;
            }
            let Some(rule) = self.config.grounding_rules.iter().find(|r| r.predicate == f.predicate) else {
                continue;
            };
            match (rule.feature, rule.encoder) {
                (Feature::Class, _) => proto.class_opt = Some(value.clone()),
                (Feature::Position, Encoder::Zone { cell_size }) => {
                    proto.position = zone_centroid(value, cell_size);
                }
                (Feature::Size, Encoder::SizeCategory { small_max, large_min }) => {
                    proto.size = SizeCategory::parse(value).map(|c| c.representative_size(small_max, large_min));
                }
                _ => {}
            }
        }
        match proto.class_opt.take() {
            Some(c) => {
                proto.class = c;
                Ok(proto)
            }
            None => Err(Error::validation(format!(
                "facts about {object_id} carry no class, cannot build a prototype"
            ))),
        }
    }

    /// Knowledge-base snapshot, optionally stamped with a config digest.
    pub fn snapshot(&self, config_digest: Option<&str>) -> Vec<u8> {
        snapshot_with_digest(&self.kb, config_digest)
    }
}

#[derive(Default)]
struct Prototype {
    class_opt: Option<String>,
    class: String,
    position: Option<Vec3>,
    size: Option<Vec3>,
}

fn blend3(old: Vec3, new: Vec3, mix: impl Fn(f64, f64) -> f64) -> Vec3 {
    [0, 1, 2].map(|k| mix(old[k], new[k]))
}

#[derive(Serialize, Deserialize)]
struct EventLogHeader {
    schema_version: u32,
    scene_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config_digest: Option<String>,
}

/// JSON Lines: a header then one record per frame.
pub fn write_event_log(
    mut out: impl Write,
    scene_id: &str,
    events: &[FrameEvents],
    config_digest: Option<&str>,
) -> Result<()> {
    let io = |e| Error::io("event log", e);
    let header = EventLogHeader {
        schema_version: EVENT_LOG_SCHEMA_VERSION,
        scene_id: scene_id.to_string(),
        config_digest: config_digest.map(str::to_string),
    };
    serde_json::to_writer(&mut out, &header).map_err(|e| Error::format("event log", e.to_string()))?;
    out.write_all(b"\n").map_err(io)?;
    for ev in events {
        serde_json::to_writer(&mut out, ev).map_err(|e| Error::format("event log", e.to_string()))?;
        out.write_all(b"\n").map_err(io)?;
    }
    Ok(())
}

/// Returns the scene id and the frame records.
pub fn read_event_log(reader: impl BufRead, context: &str) -> Result<(String, Vec<FrameEvents>)> {
    let mut lines = reader.lines().enumerate();
    let header: EventLogHeader = match lines.next() {
        Some((_, line)) => {
            let line = line.map_err(|e| Error::io(context, e))?;
            serde_json::from_str(&line).map_err(|e| Error::format(context, format!("line 1: {e}")))?
        }
        None => return Err(Error::format(context, "empty file, missing header")),
    };
    if header.schema_version != EVENT_LOG_SCHEMA_VERSION {
        return Err(Error::format(
            context,
            format!("unsupported schema_version {}", header.schema_version),
        ));
    }
    let mut events = Vec::new();
    for (i, line) in lines {
        let line = line.map_err(|e| Error::io(context, e))?;
        if line.trim().is_empty() {
            continue;
        }
        events.push(
            serde_json::from_str(&line).map_err(|e| Error::format(context, format!("line {}: {e}", i + 1)))?,
        );
    }
    Ok((header.scene_id, events))
}
