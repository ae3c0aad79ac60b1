//! Confusion matrices, classification metrics, identity scoring of engine
//! runs, and report tables.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::dataset::LabeledPair;
use crate::engine::FrameEvents;
use crate::error::{Error, Result};
use crate::matcher::MatchFunction;
use crate::percepts::{AnchorId, Scene};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub fp: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fn_: u64, fp: u64, tn: u64) -> Self {
        ConfusionMatrix { tp, fn_, fp, tn }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fn_ + self.fp + self.tn
    }

    /// Each cell as a percentage of its prediction column, the layout used by
    /// published confusion tables. An empty column yields zeros.
    pub fn column_percentages(&self) -> ColumnPercentages {
        let pct = |x: u64, col: u64| if col == 0 { 0.0 } else { 100.0 * x as f64 / col as f64 };
        let pos = self.tp + self.fp;
        let neg = self.fn_ + self.tn;
        ColumnPercentages {
            tp: pct(self.tp, pos),
            fp: pct(self.fp, pos),
            fn_: pct(self.fn_, neg),
            tn: pct(self.tn, neg),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnPercentages {
    pub tp: f64,
    #[serde(rename = "fn")]
    pub fn_: f64,
    pub fp: f64,
    pub tn: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Tallies predictions (`score > threshold`) against labels.
pub fn confusion(scores: &[f64], labels: &[bool], threshold: f64) -> Result<ConfusionMatrix> {
    if scores.len() != labels.len() {
        return Err(Error::validation(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let mut cm = ConfusionMatrix::default();
    for (i, (&s, &l)) in scores.iter().zip(labels).enumerate() {
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::validation(format!("score {s} at index {i} outside [0, 1]")));
        }
        match (s > threshold, l) {
            (true, true) => cm.tp += 1,
            (true, false) => cm.fp += 1,
            (false, true) => cm.fn_ += 1,
            (false, false) => cm.tn += 1,
        }
    }
    Ok(cm)
}

/// Precision with no positive predictions is 1 when nothing was missed and 0
/// otherwise; recall with no actual positives is 1 when nothing was falsely
/// flagged and 0 otherwise; F1 is 0 when precision + recall is 0.
pub fn metrics(cm: &ConfusionMatrix) -> Result<Metrics> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::validation("empty confusion matrix"));
    }
    let accuracy = (cm.tp + cm.tn) as f64 / total as f64;
    let precision = if cm.tp + cm.fp == 0 {
        if cm.fn_ == 0 { 1.0 } else { 0.0 }
    } else {
        cm.tp as f64 / (cm.tp + cm.fp) as f64
    };
    let recall = if cm.tp + cm.fn_ == 0 {
        if cm.fp == 0 { 1.0 } else { 0.0 }
    } else {
        cm.tp as f64 / (cm.tp + cm.fn_) as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(Metrics {
        accuracy,
        precision,
        recall,
        f1,
    })
}

/// Scores every pair and tallies against its label.
pub fn evaluate_pairs(
    matcher: &impl MatchFunction,
    pairs: &[LabeledPair],
    threshold: f64,
) -> Result<ConfusionMatrix> {
    let scores = pairs
        .iter()
        .map(|p| matcher.score(&p.features))
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<bool> = pairs.iter().map(|p| p.label).collect();
    confusion(&scores, &labels, threshold)
}

/// Fraction of percepts of already-seen instances whose reacquire linked
/// them to the anchor founded by the same instance.
///
/// The denominator counts percepts in frames after the first whose instance
/// was observed in some earlier frame; a percept of a never-seen instance
/// cannot be reacquired correctly and is excluded. A run with no such
/// percept scores 1.
pub fn identity_score(events: &[FrameEvents], scene: &Scene) -> Result<f64> {
    if events.len() != scene.frames.len() {
        return Err(Error::validation(format!(
            "{} event records for {} frames",
            events.len(),
            scene.frames.len()
        )));
    }
    let mut founder: HashMap<AnchorId, String> = HashMap::new();
    let mut seen: std::collections::HashSet<String> = Default::default();
    let (mut hits, mut total) = (0u64, 0u64);
    for (k, (ev, frame)) in events.iter().zip(&scene.frames).enumerate() {
        let mut instance_of: HashMap<&str, &str> = HashMap::new();
        for p in &frame.percepts {
            let inst = p.ground_truth_instance.as_deref().ok_or_else(|| {
                Error::validation(format!(
                    "scene {}, frame {k}, percept {}: no ground-truth instance",
                    scene.scene_id, p.percept_id
                ))
            })?;
            instance_of.insert(&p.percept_id, inst);
        }
        let lookup = |pid: &str| {
            instance_of.get(pid).copied().ok_or_else(|| {
                Error::validation(format!("frame {k}: event names unknown percept {pid}"))
            })
        };
        if k > 0 {
            for p in &frame.percepts {
                if seen.contains(p.ground_truth_instance.as_deref().unwrap_or_default()) {
                    total += 1;
                }
            }
            for r in &ev.reacquired {
                let inst = lookup(&r.percept_id)?;
                if seen.contains(inst) && founder.get(&r.anchor_id).map(String::as_str) == Some(inst) {
                    hits += 1;
                }
            }
        }
        for a in &ev.acquired {
            founder.insert(a.anchor_id, lookup(&a.percept_id)?.to_string());
        }
        seen.extend(instance_of.values().map(|s| s.to_string()));
    }
    Ok(if total == 0 { 1.0 } else { hits as f64 / total as f64 })
}

/// One (model, test set) row of a results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model: String,
    pub test_set: String,
    pub confusion: ConfusionMatrix,
    pub metrics: Metrics,
    pub percentages: ColumnPercentages,
}

impl ReportRow {
    pub fn new(model: &str, test_set: &str, confusion: ConfusionMatrix) -> Result<Self> {
        Ok(ReportRow {
            model: model.to_string(),
            test_set: test_set.to_string(),
            metrics: metrics(&confusion)?,
            percentages: confusion.column_percentages(),
            confusion,
        })
    }
}

/// Aligned text, one block per model in order of first appearance.
pub fn report_text(rows: &[ReportRow]) -> String {
    let mut models: Vec<&str> = Vec::new();
    for r in rows {
        if !models.contains(&r.model.as_str()) {
            models.push(&r.model);
        }
    }
    let w = rows.iter().map(|r| r.test_set.len()).max().unwrap_or(0).max("Test set".len());
    let mut out = String::new();
    for m in models {
        out.push_str(&format!("Model: {m}\n"));
        out.push_str(&format!(
            "  {:<w$}  {:>8}  {:>9}  {:>6}  {:>6}  {:>9}  {:>9}  {:>9}  {:>9}  {:>7}  {:>7}  {:>7}  {:>7}\n",
            "Test set", "Accuracy", "Precision", "Recall", "F1", "TP", "FN", "FP", "TN", "TP%", "FN%", "FP%", "TN%"
        ));
        for r in rows.iter().filter(|r| r.model == m) {
            let (c, x, p) = (&r.confusion, &r.metrics, &r.percentages);
            out.push_str(&format!(
                "  {:<w$}  {:>8.3}  {:>9.3}  {:>6.3}  {:>6.3}  {:>9}  {:>9}  {:>9}  {:>9}  {:>7.2}  {:>7.2}  {:>7.2}  {:>7.2}\n",
                r.test_set, x.accuracy, x.precision, x.recall, x.f1, c.tp, c.fn_, c.fp, c.tn, p.tp, p.fn_, p.fp, p.tn
            ));
        }
        out.push('\n');
    }
    out
}

#[derive(Serialize, Deserialize)]
struct ReportHeader {
    schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config_digest: Option<String>,
}

/// JSON Lines: a header then one record per row.
pub fn write_report_records(mut out: impl Write, rows: &[ReportRow], config_digest: Option<&str>) -> Result<()> {
    let fmt = |e: serde_json::Error| Error::format("report", e.to_string());
    let io = |e| Error::io("report", e);
    let header = ReportHeader {
        schema_version: REPORT_SCHEMA_VERSION,
        config_digest: config_digest.map(str::to_string),
    };
    serde_json::to_writer(&mut out, &header).map_err(fmt)?;
    out.write_all(b"\n").map_err(io)?;
    for r in rows {
        serde_json::to_writer(&mut out, r).map_err(fmt)?;
        out.write_all(b"\n").map_err(io)?;
    }
    Ok(())
}

pub fn read_report_records(reader: impl BufRead, context: &str) -> Result<Vec<ReportRow>> {
    let mut rows = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(context, e))?;
        if i == 0 {
            let h: ReportHeader = serde_json::from_str(&line)
                .map_err(|e| Error::format(context, format!("line 1: {e}")))?;
            if h.schema_version != REPORT_SCHEMA_VERSION {
                return Err(Error::format(
                    context,
                    format!("unsupported schema_version {}", h.schema_version),
                ));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        rows.push(serde_json::from_str(&line).map_err(|e| Error::format(context, format!("line {}: {e}", i + 1)))?);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{Acquired, Reacquired};
    use crate::percepts::{Frame, Percept};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-3
    }

    #[test]
    fn simple_confusions() {
        let cm = confusion(&[0.9, 0.1], &[true, false], 0.5).unwrap();
        assert_eq!(cm, ConfusionMatrix::new(1, 0, 0, 1));
        let cm = confusion(&[0.0; 7], &[false; 7], 0.5).unwrap();
        assert_eq!(cm.tn, 7);
        assert!(confusion(&[0.1], &[], 0.5).is_err());
        assert!(confusion(&[1.5], &[true], 0.5).is_err());
        // strictly greater
        assert_eq!(confusion(&[0.5], &[true], 0.5).unwrap().fn_, 1);
    }

    #[test]
    fn confusion_matches_naive_tally() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let scores: Vec<f64> = (0..200).map(|_| rng.random_range(0.0..=1.0)).collect();
        let labels: Vec<bool> = (0..200).map(|_| rng.random_bool(0.4)).collect();
        let cm = confusion(&scores, &labels, 0.5).unwrap();
        let mut counts = [0u64; 4];
        for i in 0..200 {
            let idx = match (scores[i] > 0.5, labels[i]) {
                (true, true) => 0,
                (false, true) => 1,
                (true, false) => 2,
                (false, false) => 3,
            };
            counts[idx] += 1;
        }
        assert_eq!([cm.tp, cm.fn_, cm.fp, cm.tn], counts);
        assert_eq!(cm.total(), 200);
    }

    #[test]
    fn published_counts_reproduce_summary_cells() {
        let m = metrics(&ConfusionMatrix::new(36370, 179, 69, 80037)).unwrap();
        assert!(close(m.accuracy, 0.998) && close(m.precision, 0.998));
        assert!(close(m.recall, 0.995) && close(m.f1, 0.997));
        let m = metrics(&ConfusionMatrix::new(1201, 588, 0, 51017)).unwrap();
        assert!(close(m.precision, 1.0) && close(m.recall, 0.671));
    }

    #[test]
    fn perfect_and_degenerate() {
        let m = metrics(&ConfusionMatrix::new(10, 0, 0, 0)).unwrap();
        assert_eq!((m.accuracy, m.precision, m.recall, m.f1), (1.0, 1.0, 1.0, 1.0));
        assert!(metrics(&ConfusionMatrix::default()).is_err());
        // nothing predicted positive, nothing missed
        let m = metrics(&ConfusionMatrix::new(0, 0, 0, 5)).unwrap();
        assert_eq!((m.precision, m.recall), (1.0, 1.0));
        // nothing predicted positive, some missed
        let m = metrics(&ConfusionMatrix::new(0, 3, 0, 5)).unwrap();
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
        // no actual positives, some false alarms
        let m = metrics(&ConfusionMatrix::new(0, 0, 2, 5)).unwrap();
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn column_percentages_follow_prediction_columns() {
        let p = ConfusionMatrix::new(33397, 3152, 702, 79404).column_percentages();
        assert!((p.tp - 97.94).abs() < 0.005);
        assert!((p.fn_ - 3.82).abs() < 0.005);
        assert!((p.fp - 2.06).abs() < 0.005);
        assert!((p.tn - 96.18).abs() < 0.005);
    }

    #[test]
    fn precision_and_recall_move_oppositely_with_threshold() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let scores: Vec<f64> = (0..500).map(|_| rng.random_range(0.0..=1.0)).collect();
        let labels: Vec<bool> = scores.iter().map(|s| rng.random_bool(*s)).collect();
        let mut prev_recall = f64::INFINITY;
        for k in 1..10 {
            let cm = confusion(&scores, &labels, k as f64 / 10.0).unwrap();
            let m = metrics(&cm).unwrap();
            assert!(m.recall <= prev_recall);
            prev_recall = m.recall;
        }
    }

    fn scene_with(instances: &[&[&str]]) -> Scene {
        Scene {
            scene_id: "s".into(),
            embedding_dim: 1,
            frames: instances
                .iter()
                .enumerate()
                .map(|(k, ids)| {
                    Frame::new(
                        k as f64,
                        ids.iter()
                            .enumerate()
                            .map(|(j, inst)| Percept {
                                percept_id: format!("p{j}"),
                                class_label: "c".into(),
                                appearance: vec![1.0],
                                position: [0.0; 3],
                                size: [1.0; 3],
                                timestamp: 0.0,
                                ground_truth_instance: Some(inst.to_string()),
                            })
                            .collect(),
                    )
                })
                .collect(),
        }
    }

    fn ev(k: usize, acq: &[(usize, u64)], re: &[(usize, u64)]) -> FrameEvents {
        FrameEvents {
            frame_index: k,
            timestamp: k as f64,
            acquired: acq
                .iter()
                .map(|(p, a)| Acquired { percept_id: format!("p{p}"), anchor_id: AnchorId(*a) })
                .collect(),
            reacquired: re
                .iter()
                .map(|(p, a)| Reacquired { percept_id: format!("p{p}"), anchor_id: AnchorId(*a), value: 0.9 })
                .collect(),
            tracked_stale: vec![],
        }
    }

    #[test]
    fn identity_perfect_always_acquire_and_swap() {
        let scene = scene_with(&[&["x", "y"], &["x", "y"], &["y", "x"]]);
        let perfect = [
            ev(0, &[(0, 0), (1, 1)], &[]),
            ev(1, &[], &[(0, 0), (1, 1)]),
            ev(2, &[], &[(0, 1), (1, 0)]),
        ];
        assert_eq!(identity_score(&perfect, &scene).unwrap(), 1.0);

        let acquire_all = [
            ev(0, &[(0, 0), (1, 1)], &[]),
            ev(1, &[(0, 2), (1, 3)], &[]),
            ev(2, &[(0, 4), (1, 5)], &[]),
        ];
        assert_eq!(identity_score(&acquire_all, &scene).unwrap(), 0.0);

        // frame 1 correct, frame 2 swapped: 2 of 4 linked correctly
        let swapped = [
            ev(0, &[(0, 0), (1, 1)], &[]),
            ev(1, &[], &[(0, 0), (1, 1)]),
            ev(2, &[], &[(0, 0), (1, 1)]),
        ];
        assert_eq!(identity_score(&swapped, &scene).unwrap(), 0.5);
    }

    #[test]
    fn identity_excludes_first_sightings() {
        // z first appears in frame 1; acquiring it is correct and not counted
        let scene = scene_with(&[&["x"], &["x", "z"]]);
        let events = [ev(0, &[(0, 0)], &[]), ev(1, &[(1, 1)], &[(0, 0)])];
        assert_eq!(identity_score(&events, &scene).unwrap(), 1.0);
    }

    #[test]
    fn identity_requires_ground_truth() {
        let mut scene = scene_with(&[&["x"]]);
        scene.frames[0].percepts[0].ground_truth_instance = None;
        assert!(identity_score(&[ev(0, &[(0, 0)], &[])], &scene).is_err());
        assert!(identity_score(&[], &scene_with(&[&["x"]])).is_err());
    }

    fn six_rows() -> Vec<ReportRow> {
        let cms = [
            ("A", "t1", ConfusionMatrix::new(5, 1, 1, 5)),
            ("B", "t1", ConfusionMatrix::new(3, 0, 2, 9)),
            ("A", "t2", ConfusionMatrix::new(2, 2, 2, 2)),
            ("C", "t1", ConfusionMatrix::new(1, 0, 0, 1)),
            ("B", "t2", ConfusionMatrix::new(7, 1, 0, 1)),
            ("C", "t2", ConfusionMatrix::new(0, 1, 1, 0)),
        ];
        cms.iter().map(|(m, t, c)| ReportRow::new(m, t, *c).unwrap()).collect()
    }

    #[test]
    fn report_groups_by_model() {
        let one = report_text(&six_rows()[..1]);
        assert_eq!(one.lines().filter(|l| l.starts_with("  t")).count(), 1);
        let text = report_text(&six_rows());
        let blocks: Vec<&str> = text.lines().filter(|l| l.starts_with("Model:")).collect();
        assert_eq!(blocks, ["Model: A", "Model: B", "Model: C"]);
        assert_eq!(text.lines().filter(|l| l.starts_with("  t")).count(), 6);
        let a_block: Vec<&str> = text.split("Model: B").next().unwrap().lines().collect();
        assert!(a_block.iter().any(|l| l.starts_with("  t2")));
    }

    #[test]
    fn records_round_trip() {
        let rows = six_rows();
        let mut buf = Vec::new();
        write_report_records(&mut buf, &rows, Some("d")).unwrap();
        assert_eq!(read_report_records(buf.as_slice(), "r").unwrap(), rows);
    }
}
