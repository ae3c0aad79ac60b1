//! Pipeline commands behind the `anchor` binary.
//!
//! Every machine-readable output carries a `schema_version` and the digest
//! of the effective run configuration, and is byte-identical across runs
//! with the same configuration and inputs.

pub mod config;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anchoring::dataset::{balance_negatives, save_pairs, load_pairs, split_by_scene, summary_table, SplitManifest};
use anchoring::engine::{read_event_log, write_event_log, Engine};
use anchoring::eval::{evaluate_pairs, identity_score, report_text, write_report_records, ReportRow};
use anchoring::matcher::{load_model, save_model, train, AnalyticParams, Matcher, MatcherModel};
use anchoring::percepts::{load_scene, save_scene, Scene};
use anchoring::sim::generate_many;
use anchoring::world_model::restore;
use anyhow::{bail, Context};
use serde::Serialize;

pub use config::RunConfig;

pub const SCENE_PREFIX: &str = "scene_";
pub const HISTORY_SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
pub const IDENTITY_SCHEMA_VERSION: u32 = 1;

/// Errors in how the tool was invoked rather than in the data it was given.
#[derive(Debug, thiserror::Error)]
pub enum UsageError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Args(String),
}

/// 2 for usage errors, 3 for invalid configuration or input data, 1 for
/// anything else (I/O and other runtime failures).
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(u) = cause.downcast_ref::<UsageError>() {
            return match u {
                UsageError::Args(_) => 2,
                UsageError::Config(_) => 3,
            };
        }
        if let Some(e) = cause.downcast_ref::<anchoring::Error>() {
            return match e {
                anchoring::Error::Validation(_) | anchoring::Error::Format { .. } => 3,
                anchoring::Error::Io { .. } => 1,
            };
        }
    }
    1
}

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_file(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn buffered(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

#[derive(Serialize)]
struct ManifestDoc<'a> {
    schema_version: u32,
    config_digest: &'a str,
    #[serde(flatten)]
    manifest: &'a SplitManifest,
}

/// Generates train + val + test scenes into `out/scenes/` and a split
/// manifest `out/manifest.json`. Returns the written scene paths.
pub fn cmd_simulate(cfg: &RunConfig, out: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let d = &cfg.dataset;
    let total = d.train_scenes + d.val_scenes + d.test_scenes;
    let scenes = generate_many(&cfg.sim, SCENE_PREFIX, total)?;
    let scene_dir = out.join("scenes");
    create_dir(&scene_dir)?;
    let digest = cfg.digest();
    let mut paths = Vec::with_capacity(total);
    let mut renamed = Vec::with_capacity(total);
    for (i, mut scene) in scenes.into_iter().enumerate() {
        scene.scene_id = format!("{SCENE_PREFIX}{i:03}");
        let path = scene_dir.join(format!("{}.jsonl", scene.scene_id));
        save_scene(&path, &scene, Some(&digest))?;
        paths.push(path);
        renamed.push(scene.scene_id);
    }
    let manifest = SplitManifest {
        train: renamed[..d.train_scenes].to_vec(),
        val: renamed[d.train_scenes..d.train_scenes + d.val_scenes].to_vec(),
        test: renamed[d.train_scenes + d.val_scenes..].to_vec(),
    };
    let doc = ManifestDoc {
        schema_version: MANIFEST_SCHEMA_VERSION,
        config_digest: &digest,
        manifest: &manifest,
    };
    let mut text = serde_json::to_vec_pretty(&doc)?;
    text.push(b'\n');
    write_file(&out.join("manifest.json"), &text)?;
    Ok(paths)
}

/// Scene files given directly, or every `*.jsonl` inside given directories,
/// in lexicographic path order.
pub fn collect_scenes(inputs: &[PathBuf]) -> anyhow::Result<Vec<Scene>> {
    let mut files = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut inner: Vec<PathBuf> = std::fs::read_dir(p)
                .with_context(|| format!("listing {}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|q| q.extension().is_some_and(|x| x == "jsonl"))
                .collect();
            inner.sort();
            files.extend(inner);
        } else {
            files.push(p.clone());
        }
    }
    if files.is_empty() {
        bail!(UsageError::Args("no scene files found".into()));
    }
    files.iter().map(|f| Ok(load_scene(f)?)).collect()
}

/// Builds pair files `out/<name>_{train,val,test}.jsonl` from the scenes
/// listed in the manifest. Returns the summary table.
pub fn cmd_dataset(
    cfg: &RunConfig,
    scenes: &[PathBuf],
    manifest: &Path,
    name: &str,
    out: &Path,
) -> anyhow::Result<String> {
    let scenes = collect_scenes(scenes)?;
    let manifest = SplitManifest::load(manifest)?;
    let mut split = split_by_scene(name, &scenes, &manifest)?;
    if let Some(ratio) = cfg.dataset.negative_ratio {
        if !(ratio >= 0.0) {
            bail!(UsageError::Config("negative_ratio must be >= 0".into()));
        }
        split.train = balance_negatives(std::mem::take(&mut split.train), ratio, cfg.seed);
    }
    create_dir(out)?;
    let digest = cfg.digest();
    for (tag, pairs) in [("train", &split.train), ("val", &split.val), ("test", &split.test)] {
        let path = out.join(format!("{name}_{tag}.jsonl"));
        save_pairs(&path, name, tag, split.dim, pairs, Some(&digest))?;
    }
    Ok(summary_table(&[&split]))
}

#[derive(Serialize)]
struct HistoryHeader<'a> {
    schema_version: u32,
    config_digest: &'a str,
    warnings: &'a [String],
}

/// Trains on one pair file, optionally tracking a validation file. Writes
/// `out/model.json` and `out/history.jsonl`.
pub fn cmd_train(cfg: &RunConfig, train_path: &Path, val_path: Option<&Path>, out: &Path) -> anyhow::Result<MatcherModel> {
    let (_, _, _, train_pairs) = load_pairs(train_path)?;
    let val_pairs = match val_path {
        Some(p) => load_pairs(p)?.3,
        None => Vec::new(),
    };
    let (model, history) = train(&train_pairs, &val_pairs, &cfg.train)?;
    create_dir(out)?;
    let digest = cfg.digest();
    save_model(&model, out.join("model.json"), Some(&digest))?;
    let path = out.join("history.jsonl");
    let mut w = buffered(&path)?;
    let header = HistoryHeader {
        schema_version: HISTORY_SCHEMA_VERSION,
        config_digest: &digest,
        warnings: &history.warnings,
    };
    serde_json::to_writer(&mut w, &header)?;
    writeln!(w)?;
    for e in &history.epochs {
        serde_json::to_writer(&mut w, e)?;
        writeln!(w)?;
    }
    w.flush()?;
    for warning in &history.warnings {
        eprintln!("warning: {warning}");
    }
    Ok(model)
}

/// Summary of one engine run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSummary {
    pub frames: usize,
    pub anchors: usize,
    pub acquires: usize,
    pub reacquires: usize,
    pub facts: usize,
}

/// Runs the engine over a scene with the analytic matcher, or the neural
/// one when `model` is given. Writes `out/events.jsonl` and `out/kb.json`.
pub fn cmd_run(cfg: &RunConfig, scene_path: &Path, model: Option<&Path>, out: &Path) -> anyhow::Result<RunSummary> {
    let scene = load_scene(scene_path)?;
    let matcher = model
        .map(|p| load_model(p).map(|m| Matcher::Neural(Box::new(m))))
        .transpose()?;
    let mut engine = Engine::new(cfg.engine.engine_config(matcher))?;
    let events = engine
        .run(&scene)
        .with_context(|| format!("running {}", scene_path.display()))?;
    create_dir(out)?;
    let digest = cfg.digest();
    let path = out.join("events.jsonl");
    let mut w = buffered(&path)?;
    write_event_log(&mut w, &scene.scene_id, &events, Some(&digest))?;
    w.flush()?;
    write_file(&out.join("kb.json"), &engine.snapshot(Some(&digest)))?;
    Ok(RunSummary {
        frames: events.len(),
        anchors: engine.anchors().len(),
        acquires: events.iter().map(|e| e.acquired.len()).sum(),
        reacquires: events.iter().map(|e| e.reacquired.len()).sum(),
        facts: engine.kb().fact_count(),
    })
}

/// Classification report for a trained model (and optionally the analytic
/// baseline) on each pair file. Writes `out/report.txt` and
/// `out/report.jsonl`; returns the text.
pub fn cmd_eval_pairs(
    cfg: &RunConfig,
    model: Option<&Path>,
    baseline: bool,
    pair_files: &[PathBuf],
    out: &Path,
) -> anyhow::Result<String> {
    if model.is_none() && !baseline {
        bail!(UsageError::Args("eval needs --model, --baseline, or both".into()));
    }
    if pair_files.is_empty() {
        bail!(UsageError::Args("eval needs at least one --pairs file".into()));
    }
    let mut sets = Vec::new();
    for p in pair_files {
        let (dataset, split, _, pairs) = load_pairs(p)?;
        sets.push((format!("{dataset}/{split}"), pairs));
    }
    let threshold = cfg.engine.threshold;
    let mut rows = Vec::new();
    if let Some(path) = model {
        let m = load_model(path)?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "model".into());
        for (set, pairs) in &sets {
            rows.push(ReportRow::new(&name, set, evaluate_pairs(&m, pairs, threshold)?)?);
        }
    }
    if baseline {
        let params: AnalyticParams = cfg.engine.analytic;
        for (set, pairs) in &sets {
            rows.push(ReportRow::new("analytic", set, evaluate_pairs(&params, pairs, threshold)?)?);
        }
    }
    create_dir(out)?;
    let text = report_text(&rows);
    write_file(&out.join("report.txt"), text.as_bytes())?;
    let path = out.join("report.jsonl");
    let mut w = buffered(&path)?;
    write_report_records(&mut w, &rows, Some(&cfg.digest()))?;
    w.flush()?;
    Ok(text)
}

#[derive(Serialize)]
struct IdentityDoc<'a> {
    schema_version: u32,
    config_digest: &'a str,
    scene_id: &'a str,
    identity_score: f64,
}

/// Identity score of an event log against the scene's ground truth. Writes
/// `out/identity.json` when `out` is given.
pub fn cmd_eval_run(cfg: &RunConfig, events_path: &Path, scene_path: &Path, out: Option<&Path>) -> anyhow::Result<f64> {
    let scene = load_scene(scene_path)?;
    let file = File::open(events_path).with_context(|| format!("opening {}", events_path.display()))?;
    let (scene_id, events) = read_event_log(BufReader::new(file), &events_path.display().to_string())?;
    if scene_id != scene.scene_id {
        bail!(anchoring::Error::validation(format!(
            "event log is for scene {scene_id}, truth file holds {}",
            scene.scene_id
        )));
    }
    let score = identity_score(&events, &scene)?;
    if let Some(dir) = out {
        create_dir(dir)?;
        let doc = IdentityDoc {
            schema_version: IDENTITY_SCHEMA_VERSION,
            config_digest: &cfg.digest(),
            scene_id: &scene.scene_id,
            identity_score: score,
        };
        let mut text = serde_json::to_vec_pretty(&doc)?;
        text.push(b'\n');
        write_file(&dir.join("identity.json"), &text)?;
    }
    Ok(score)
}

/// Readable dump of a knowledge-base snapshot: types, predicates, then each
/// object with its facts.
pub fn cmd_kb_export(snapshot: &Path) -> anyhow::Result<String> {
    let bytes = std::fs::read(snapshot).with_context(|| format!("reading {}", snapshot.display()))?;
    let kb = restore(&bytes)?;
    let mut s = String::new();
    use std::fmt::Write as _;
    let types: Vec<&str> = kb.types().collect();
    writeln!(s, "types: {}", types.join(", "))?;
    writeln!(s, "predicates:")?;
    for p in kb.predicates() {
        let mark = if p.functional { " functional" } else { "" };
        writeln!(s, "  {}({}){mark}", p.name, p.arg_types.join(", "))?;
    }
    writeln!(s, "objects: {}", kb.object_count())?;
    for (id, t) in kb.objects() {
        writeln!(s, "  {id} : {t}")?;
        for f in kb.facts_about(id) {
            writeln!(s, "    {f}")?;
        }
    }
    let unattached: Vec<_> = kb
        .facts()
        .filter(|f| !matches!(f.args.first(), Some(anchoring::Term::Object(o)) if kb.has_object(o)))
        .collect();
    if !unattached.is_empty() {
        writeln!(s, "other facts:")?;
        for f in unattached {
            writeln!(s, "  {f}")?;
        }
    }
    Ok(s)
}
