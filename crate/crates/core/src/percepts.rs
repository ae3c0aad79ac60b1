//! Percepts, anchors and scene files.
//!
//! A scene file is UTF-8 JSON Lines. The first line is a header
//! (`{"schema_version":1,"scene_id":..,"embedding_dim":..}`), every following
//! line is one frame record:
//!
//! ```text
//! {"timestamp":0.5,"percepts":[{"id":"p0","class":"chair","appearance":[..],
//!   "position":[x,y,z],"size":[sx,sy,sz],"instance_id":"i3"}]}
//! ```
//!
//! `instance_id` is optional and only present in simulated or labeled data.

use std::collections::HashSet;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SCENE_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_EMBEDDING_DIM: usize = 32;

pub type Vec3 = [f64; 3];

/// One detected object instance in one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Percept {
    #[serde(rename = "id")]
    pub percept_id: String,
    #[serde(rename = "class")]
    pub class_label: String,
    pub appearance: Vec<f64>,
    pub position: Vec3,
    pub size: Vec3,
    /// Carried by the enclosing frame record in scene files.
    #[serde(skip)]
    pub timestamp: f64,
    #[serde(
        rename = "instance_id",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub ground_truth_instance: Option<String>,
}

impl Percept {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.appearance.len() != dim {
            return Err(Error::validation(format!(
                "percept {}: appearance dimension {} != {}",
                self.percept_id,
                self.appearance.len(),
                dim
            )));
        }
        if self.appearance.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation(format!(
                "percept {}: non-finite appearance component",
                self.percept_id
            )));
        }
        if self.position.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation(format!(
                "percept {}: non-finite position",
                self.percept_id
            )));
        }
        if self.size.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::validation(format!(
                "percept {}: size components must be strictly positive, got {:?}",
                self.percept_id, self.size
            )));
        }
        if !self.timestamp.is_finite() || self.timestamp < 0.0 {
            return Err(Error::validation(format!(
                "percept {}: timestamp must be finite and non-negative",
                self.percept_id
            )));
        }
        Ok(())
    }
}

/// Identifier of an anchor inside one engine run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AnchorId(pub u64);

impl fmt::Display for AnchorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "anchor_{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorStatus {
    Active,
    Stale,
}

/// Persistent link between a knowledge-base object and its perceptual features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub anchor_id: AnchorId,
    pub object_id: String,
    pub class_label: String,
    pub appearance: Vec<f64>,
    pub position: Vec3,
    pub size: Vec3,
    pub last_timestamp: f64,
    pub observation_count: u32,
    pub status: AnchorStatus,
}

/// Builds a fresh anchor carrying all five features of `percept`.
pub fn anchor_from_percept(percept: &Percept, object_id: &str, anchor_id: AnchorId) -> Anchor {
    Anchor {
        anchor_id,
        object_id: object_id.to_string(),
        class_label: percept.class_label.clone(),
        appearance: percept.appearance.clone(),
        position: percept.position,
        size: percept.size,
        last_timestamp: percept.timestamp,
        observation_count: 1,
        status: AnchorStatus::Active,
    }
}

/// Read access to the features shared by percepts and anchors.
pub trait Observation {
    fn class_label(&self) -> &str;
    fn appearance(&self) -> &[f64];
    fn position(&self) -> Vec3;
    fn size(&self) -> Vec3;
    fn timestamp(&self) -> f64;
}

impl Observation for Percept {
    fn class_label(&self) -> &str {
        &self.class_label
    }
    fn appearance(&self) -> &[f64] {
        &self.appearance
    }
    fn position(&self) -> Vec3 {
        self.position
    }
    fn size(&self) -> Vec3 {
        self.size
    }
    fn timestamp(&self) -> f64 {
        self.timestamp
    }
}

impl Observation for Anchor {
    fn class_label(&self) -> &str {
        &self.class_label
    }
    fn appearance(&self) -> &[f64] {
        &self.appearance
    }
    fn position(&self) -> Vec3 {
        self.position
    }
    fn size(&self) -> Vec3 {
        self.size
    }
    fn timestamp(&self) -> f64 {
        self.last_timestamp
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub timestamp: f64,
    pub percepts: Vec<Percept>,
}

impl Frame {
    /// Builds a frame, stamping every percept with the frame time.
    pub fn new(timestamp: f64, mut percepts: Vec<Percept>) -> Self {
        for p in &mut percepts {
            p.timestamp = timestamp;
        }
        Frame {
            timestamp,
            percepts,
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if !self.timestamp.is_finite() || self.timestamp < 0.0 {
            return Err(Error::validation(format!(
                "frame timestamp {} must be finite and non-negative",
                self.timestamp
            )));
        }
        let mut seen = HashSet::new();
        for p in &self.percepts {
            p.validate(dim)?;
            if p.timestamp != self.timestamp {
                return Err(Error::validation(format!(
                    "percept {} timestamp {} differs from frame timestamp {}",
                    p.percept_id, p.timestamp, self.timestamp
                )));
            }
            if !seen.insert(p.percept_id.as_str()) {
                return Err(Error::validation(format!(
                    "duplicate percept id {} in frame at t={}",
                    p.percept_id, self.timestamp
                )));
            }
        }
        Ok(())
    }
}

/// An ordered sequence of frames with a shared embedding dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub scene_id: String,
    pub embedding_dim: usize,
    pub frames: Vec<Frame>,
}

impl Scene {
    pub fn validate(&self) -> Result<()> {
        let mut prev: Option<f64> = None;
        for (idx, frame) in self.frames.iter().enumerate() {
            frame
                .validate(self.embedding_dim)
                .map_err(|e| Error::validation(format!("frame record {idx}: {e}")))?;
            if let Some(p) = prev {
                if frame.timestamp <= p {
                    return Err(Error::validation(format!(
                        "frame record {idx}: timestamp {} is not strictly greater than {}",
                        frame.timestamp, p
                    )));
                }
            }
            prev = Some(frame.timestamp);
        }
        Ok(())
    }

    pub fn percept_count(&self) -> usize {
        self.frames.iter().map(|f| f.percepts.len()).sum()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct SceneHeader {
    schema_version: u32,
    scene_id: String,
    embedding_dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config_digest: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameRecord {
    timestamp: f64,
    percepts: Vec<Percept>,
}

/// Parses a scene from JSON Lines text.
pub fn parse_scene(reader: impl BufRead, context: &str) -> Result<Scene> {
    let mut lines = reader.lines().enumerate().filter(|(_, l)| match l {
        Ok(s) => !s.trim().is_empty(),
        Err(_) => true,
    });
    let (_, header_line) = lines
        .next()
        .ok_or_else(|| Error::format(context, "missing scene header"))?;
    let header_line = header_line.map_err(|e| Error::format(context, e.to_string()))?;
    let header: SceneHeader = serde_json::from_str(&header_line)
        .map_err(|e| Error::format(context, format!("header: {e}")))?;
    if header.schema_version != SCENE_SCHEMA_VERSION {
        return Err(Error::format(
            context,
            format!("unsupported schema_version {}", header.schema_version),
        ));
    }
    let mut frames = Vec::new();
    for (record_idx, (_, line)) in lines.enumerate() {
        let line = line.map_err(|e| Error::format(context, e.to_string()))?;
        let rec: FrameRecord = serde_json::from_str(&line)
            .map_err(|e| Error::format(context, format!("frame record {record_idx}: {e}")))?;
        frames.push(Frame::new(rec.timestamp, rec.percepts));
    }
    let scene = Scene {
        scene_id: header.scene_id,
        embedding_dim: header.embedding_dim,
        frames,
    };
    scene
        .validate()
        .map_err(|e| Error::format(context, e.to_string()))?;
    Ok(scene)
}

pub fn load_scene(path: impl AsRef<Path>) -> Result<Scene> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_scene(std::io::BufReader::new(file), &path.display().to_string())
}

/// Writes a scene in the JSON Lines format. `config_digest` records the
/// configuration that produced it.
pub fn write_scene(mut out: impl Write, scene: &Scene, config_digest: Option<&str>) -> Result<()> {
    let header = SceneHeader {
        schema_version: SCENE_SCHEMA_VERSION,
        scene_id: scene.scene_id.clone(),
        embedding_dim: scene.embedding_dim,
        config_digest: config_digest.map(str::to_string),
    };
    let to_io = |e: std::io::Error| Error::io("<scene output>", e);
    writeln!(out, "{}", serde_json::to_string(&header).expect("header serializes")).map_err(to_io)?;
    for frame in &scene.frames {
        let rec = FrameRecord {
            timestamp: frame.timestamp,
            percepts: frame.percepts.clone(),
        };
        writeln!(out, "{}", serde_json::to_string(&rec).expect("frame serializes")).map_err(to_io)?;
    }
    Ok(())
}

pub fn save_scene(path: impl AsRef<Path>, scene: &Scene, config_digest: Option<&str>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_scene(&mut w, scene, config_digest)?;
    w.flush().map_err(|e| Error::io(path, e))
}
