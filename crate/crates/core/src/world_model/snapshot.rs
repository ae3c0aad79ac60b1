//! Single-file knowledge-base persistence.
//!
//! Snapshot layout (JSON):
//!
//! ```text
//! {
//!   "schema_version": 1,
//!   "types": ["object"],
//!   "objects": [{"id": "obj_0", "type": "object"}],
//!   "predicates": [{"name": "object_class", "arg_types": ["object", "string"], "functional": true}],
//!   "facts": [{"predicate": "object_class", "args": [{"object": "obj_0"}, {"symbol": "chair"}]}]
//! }
//! ```

use serde::{Deserialize, Serialize};

use super::{Fact, KnowledgeBase, PredicateDecl};
use crate::error::{Error, Result};

pub const SNAPSHOT_SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObjectRecord {
    id: String,
    #[serde(rename = "type")]
    type_name: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SnapshotDoc {
    schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config_digest: Option<String>,
    types: Vec<String>,
    objects: Vec<ObjectRecord>,
    predicates: Vec<PredicateDecl>,
    facts: Vec<Fact>,
}

/// Serializes the knowledge base. Output is deterministic for a given KB.
pub fn snapshot(kb: &KnowledgeBase) -> Vec<u8> {
    snapshot_with_digest(kb, None)
}

pub(crate) fn snapshot_with_digest(kb: &KnowledgeBase, digest: Option<&str>) -> Vec<u8> {
    let doc = SnapshotDoc {
        schema_version: SNAPSHOT_SCHEMA_VERSION,
        config_digest: digest.map(str::to_string),
        types: kb.types.iter().cloned().collect(),
        objects: kb
            .objects
            .iter()
            .map(|(id, t)| ObjectRecord {
                id: id.clone(),
                type_name: t.clone(),
            })
            .collect(),
        predicates: kb.predicates.values().cloned().collect(),
        facts: kb.facts.iter().cloned().collect(),
    };
    let mut out = serde_json::to_vec_pretty(&doc).expect("snapshot serializes");
    out.push(b'\n');
    out
}

/// Rebuilds a knowledge base, re-checking every invariant.
pub fn restore(bytes: &[u8]) -> Result<KnowledgeBase> {
    let doc: SnapshotDoc = serde_json::from_slice(bytes).map_err(|e| {
        Error::format(
            "knowledge-base snapshot",
            format!("line {} column {}: {e}", e.line(), e.column()),
        )
    })?;
    if doc.schema_version != SNAPSHOT_SCHEMA_VERSION {
        return Err(Error::format(
            "knowledge-base snapshot",
            format!("unsupported schema_version {}", doc.schema_version),
        ));
    }
    let ctx = |what: &str, idx: usize, e: Error| {
        Error::format("knowledge-base snapshot", format!("{what}[{idx}]: {e}"))
    };
    let mut kb = KnowledgeBase::new();
    for (i, t) in doc.types.into_iter().enumerate() {
        kb.declare_type(t).map_err(|e| ctx("types", i, e))?;
    }
    for (i, p) in doc.predicates.into_iter().enumerate() {
        if kb.predicates.contains_key(&p.name) {
            return Err(ctx(
                "predicates",
                i,
                Error::validation(format!("duplicate predicate {}", p.name)),
            ));
        }
        kb.declare_predicate(p).map_err(|e| ctx("predicates", i, e))?;
    }
    for (i, o) in doc.objects.into_iter().enumerate() {
        kb.add_object(o.id, &o.type_name)
            .map_err(|e| ctx("objects", i, e))?;
    }
    for (i, f) in doc.facts.into_iter().enumerate() {
        kb.check_fact(&f).map_err(|e| ctx("facts", i, e))?;
        kb.facts.insert(f);
    }
    kb.validate()
        .map_err(|e| Error::format("knowledge-base snapshot", e.to_string()))?;
    Ok(kb)
}
