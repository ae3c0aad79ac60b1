//! Model file: JSON with a header (schema version, embedding dimension,
//! layer widths, standardization constants) followed by named layers.
//! Floats are written in shortest round-trip form, so a reload is exact.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::{Dense, LayerWidths, MatcherModel, Standardizer, LAYER_NAMES};
use crate::error::{Error, Result};

pub const MODEL_SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NamedLayer {
    name: String,
    #[serde(flatten)]
    layer: Dense,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    schema_version: u32,
    d: usize,
    widths: LayerWidths,
    standardization: Standardizer,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config_digest: Option<String>,
    layers: Vec<NamedLayer>,
}

pub fn model_to_bytes(model: &MatcherModel, config_digest: Option<&str>) -> Vec<u8> {
    let doc = ModelDoc {
        schema_version: MODEL_SCHEMA_VERSION,
        d: model.widths.d,
        widths: model.widths,
        standardization: model.standardizer,
        config_digest: config_digest.map(str::to_string),
        layers: model
            .layers
            .iter()
            .zip(LAYER_NAMES)
            .map(|(l, n)| NamedLayer {
                name: n.to_string(),
                layer: l.clone(),
            })
            .collect(),
    };
    let mut out = serde_json::to_vec(&doc).expect("model serializes");
    out.push(b'\n');
    out
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<MatcherModel> {
    let ctx = "model file";
    let doc: ModelDoc = serde_json::from_slice(bytes).map_err(|e| {
        Error::format(ctx, format!("line {} column {}: {e}", e.line(), e.column()))
    })?;
    if doc.schema_version != MODEL_SCHEMA_VERSION {
        return Err(Error::format(
            ctx,
            format!("unsupported schema_version {}", doc.schema_version),
        ));
    }
    if doc.d != doc.widths.d {
        return Err(Error::format(
            ctx,
            format!("header d = {} disagrees with widths.d = {}", doc.d, doc.widths.d),
        ));
    }
    for (l, expected) in doc.layers.iter().zip(LAYER_NAMES) {
        if l.name != expected {
            return Err(Error::format(
                ctx,
                format!("expected layer {expected}, found {}", l.name),
            ));
        }
    }
    MatcherModel::from_parts(
        doc.widths,
        doc.layers.into_iter().map(|l| l.layer).collect(),
        doc.standardization,
    )
    .map_err(|e| Error::format(ctx, e.to_string()))
}

pub fn save_model(model: &MatcherModel, path: impl AsRef<Path>, config_digest: Option<&str>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, model_to_bytes(model, config_digest)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<MatcherModel> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    model_from_bytes(&bytes)
}
