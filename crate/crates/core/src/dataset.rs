//! Labeled percept/anchor pairs built from ground-truth scenes, and
//! scene-level train/val/test splits.
//!
//! Within a scene every observation is paired with every observation seen
//! before it (earlier frames, and earlier entries of the same frame). The
//! earlier observation plays the anchor. A pair is positive iff both sides
//! carry the same ground-truth instance id.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pair_features::{compare_observations, PairFeatures};
use crate::percepts::{Percept, Scene};

pub const PAIRS_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub scene_id: String,
    /// Frame indices of the anchor side and the percept side.
    pub frames: [usize; 2],
    /// Instance ids of the anchor side and the percept side.
    pub instances: [String; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPair {
    pub features: PairFeatures,
    pub label: bool,
    pub provenance: Provenance,
}

fn instance_of<'a>(scene: &Scene, frame: usize, p: &'a Percept) -> Result<&'a str> {
    p.ground_truth_instance.as_deref().ok_or_else(|| {
        Error::validation(format!(
            "scene {} frame {frame} percept {}: missing instance_id",
            scene.scene_id, p.percept_id
        ))
    })
}

/// Pairs for one scene, in generation order.
pub fn build_scene_pairs(scene: &Scene) -> Result<Vec<LabeledPair>> {
    let mut seen: Vec<(usize, &Percept, &str)> = Vec::new();
    let mut pairs = Vec::new();
    for (fi, frame) in scene.frames.iter().enumerate() {
        for p in &frame.percepts {
            let inst = instance_of(scene, fi, p)?;
            for &(ofi, o, oinst) in &seen {
                let features = compare_observations(p, o)?;
                let label = inst == oinst;
                if label && !features.same_class {
                    return Err(Error::validation(format!(
                        "scene {} instance {inst}: class changes between frame {ofi} ({}) and frame {fi} ({})",
                        scene.scene_id, o.class_label, p.class_label
                    )));
                }
                pairs.push(LabeledPair {
                    features,
                    label,
                    provenance: Provenance {
                        scene_id: scene.scene_id.clone(),
                        frames: [ofi, fi],
                        instances: [oinst.to_string(), inst.to_string()],
                    },
                });
            }
            seen.push((fi, p, inst));
        }
    }
    Ok(pairs)
}

/// Pairs for all scenes; pairs never cross scene boundaries.
pub fn build_pairs(scenes: &[Scene]) -> Result<Vec<LabeledPair>> {
    let mut out = Vec::new();
    for s in scenes {
        out.extend(build_scene_pairs(s)?);
    }
    Ok(out)
}

/// Keeps every positive and at most `ratio` negatives per positive, chosen
/// with `seed`. Relative order is preserved.
pub fn balance_negatives(pairs: Vec<LabeledPair>, ratio: f64, seed: u64) -> Vec<LabeledPair> {
    let positives = pairs.iter().filter(|p| p.label).count();
    let negatives = pairs.len() - positives;
    let keep = ((positives as f64 * ratio).floor() as usize).min(negatives);
    if keep == negatives {
        return pairs;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chosen: HashSet<usize> = sample(&mut rng, negatives, keep).into_iter().collect();
    let mut neg_idx = 0;
    pairs
        .into_iter()
        .filter(|p| {
            if p.label {
                true
            } else {
                let k = neg_idx;
                neg_idx += 1;
                chosen.contains(&k)
            }
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    #[serde(default)]
    pub train: Vec<String>,
    #[serde(default)]
    pub val: Vec<String>,
    #[serde(default)]
    pub test: Vec<String>,
}

impl SplitManifest {
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for (split, ids) in [("train", &self.train), ("val", &self.val), ("test", &self.test)] {
            for id in ids {
                if !seen.insert(id.as_str()) {
                    return Err(Error::validation(format!(
                        "scene {id} listed more than once (again in {split})"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: SplitManifest = serde_json::from_str(&text)
            .map_err(|e| Error::format(path.display().to_string(), e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub name: String,
    pub dim: usize,
    pub manifest: SplitManifest,
    pub train: Vec<LabeledPair>,
    pub val: Vec<LabeledPair>,
    pub test: Vec<LabeledPair>,
}

impl DatasetSplit {
    pub fn counts(&self) -> [usize; 3] {
        [self.train.len(), self.val.len(), self.test.len()]
    }
}

/// Builds each split's pairs from its own scenes.
pub fn split_by_scene(
    name: &str,
    scenes: &[Scene],
    manifest: &SplitManifest,
) -> Result<DatasetSplit> {
    manifest.validate()?;
    let dim = scenes.first().map_or(0, |s| s.embedding_dim);
    if let Some(s) = scenes.iter().find(|s| s.embedding_dim != dim) {
        return Err(Error::validation(format!(
            "scene {} has embedding dimension {} but {} was expected",
            s.scene_id, s.embedding_dim, dim
        )));
    }
    let pick = |ids: &[String]| -> Result<Vec<LabeledPair>> {
        let mut out = Vec::new();
        for id in ids {
            let scene = scenes
                .iter()
                .find(|s| &s.scene_id == id)
                .ok_or_else(|| Error::validation(format!("manifest scene {id} not found")))?;
            out.extend(build_scene_pairs(scene)?);
        }
        Ok(out)
    };
    Ok(DatasetSplit {
        name: name.to_string(),
        dim,
        manifest: manifest.clone(),
        train: pick(&manifest.train)?,
        val: pick(&manifest.val)?,
        test: pick(&manifest.test)?,
    })
}

/// Split-wise concatenation of several datasets.
pub fn merge(name: &str, datasets: &[&DatasetSplit]) -> Result<DatasetSplit> {
    let non_empty: Vec<usize> = datasets
        .iter()
        .filter(|d| d.counts().iter().sum::<usize>() > 0)
        .map(|d| d.dim)
        .collect();
    let dim = non_empty.first().copied().unwrap_or(0);
    if let Some(other) = non_empty.iter().find(|&&d| d != dim) {
        return Err(Error::validation(format!(
            "cannot merge datasets with embedding dimensions {dim} and {other}"
        )));
    }
    let mut out = DatasetSplit {
        name: name.to_string(),
        dim,
        manifest: SplitManifest::default(),
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for d in datasets {
        out.train.extend(d.train.iter().cloned());
        out.val.extend(d.val.iter().cloned());
        out.test.extend(d.test.iter().cloned());
        out.manifest.train.extend(d.manifest.train.iter().cloned());
        out.manifest.val.extend(d.manifest.val.iter().cloned());
        out.manifest.test.extend(d.manifest.test.iter().cloned());
    }
    Ok(out)
}

/// Dataset | Train | Val | Test table of pair counts.
pub fn summary_table(datasets: &[&DatasetSplit]) -> String {
    let name_w = datasets
        .iter()
        .map(|d| d.name.len())
        .chain(["Dataset".len()])
        .max()
        .unwrap_or(7);
    let mut s = String::new();
    let _ = writeln!(s, "{:<name_w$} | {:>10} | {:>10} | {:>10}", "Dataset", "Train", "Val", "Test");
    let _ = writeln!(s, "{}", "-".repeat(name_w + 3 * 13));
    for d in datasets {
        let [tr, va, te] = d.counts();
        let _ = writeln!(s, "{:<name_w$} | {tr:>10} | {va:>10} | {te:>10}", d.name);
    }
    s
}

#[derive(Serialize, Deserialize)]
struct PairsHeader {
    schema_version: u32,
    dataset: String,
    split: String,
    dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config_digest: Option<String>,
}

/// Writes pairs as JSON Lines: a header line then one record per pair.
pub fn write_pairs(
    mut out: impl Write,
    dataset: &str,
    split: &str,
    dim: usize,
    pairs: &[LabeledPair],
    config_digest: Option<&str>,
) -> Result<()> {
    let header = PairsHeader {
        schema_version: PAIRS_SCHEMA_VERSION,
        dataset: dataset.to_string(),
        split: split.to_string(),
        dim,
        config_digest: config_digest.map(str::to_string),
    };
    let io = |e| Error::io("<pairs output>", e);
    writeln!(out, "{}", serde_json::to_string(&header).expect("serializes")).map_err(io)?;
    for p in pairs {
        writeln!(out, "{}", serde_json::to_string(p).expect("serializes")).map_err(io)?;
    }
    Ok(())
}

/// Reads a pair file, returning `(dataset name, split name, dim, pairs)`.
pub fn read_pairs(reader: impl BufRead, context: &str) -> Result<(String, String, usize, Vec<LabeledPair>)> {
    let mut lines = reader.lines();
    let header_line = lines
        .next()
        .ok_or_else(|| Error::format(context, "missing header"))?
        .map_err(|e| Error::format(context, e.to_string()))?;
    let header: PairsHeader = serde_json::from_str(&header_line)
        .map_err(|e| Error::format(context, format!("header: {e}")))?;
    if header.schema_version != PAIRS_SCHEMA_VERSION {
        return Err(Error::format(
            context,
            format!("unsupported schema_version {}", header.schema_version),
        ));
    }
    let mut pairs = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::format(context, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let p: LabeledPair = serde_json::from_str(&line)
            .map_err(|e| Error::format(context, format!("pair record {i}: {e}")))?;
        if p.features.dim() != header.dim {
            return Err(Error::format(
                context,
                format!("pair record {i}: dimension {} != {}", p.features.dim(), header.dim),
            ));
        }
        pairs.push(p);
    }
    Ok((header.dataset, header.split, header.dim, pairs))
}

pub fn save_pairs(
    path: impl AsRef<Path>,
    dataset: &str,
    split: &str,
    dim: usize,
    pairs: &[LabeledPair],
    config_digest: Option<&str>,
) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_pairs(&mut w, dataset, split, dim, pairs, config_digest)?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_pairs(path: impl AsRef<Path>) -> Result<(String, String, usize, Vec<LabeledPair>)> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_pairs(std::io::BufReader::new(file), &path.display().to_string())
}
