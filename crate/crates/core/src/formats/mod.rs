// SPDX-License-Identifier: Apache-2.0

//! On-disk formats: per-image annotation files, the merged VG150-style
//! dataset file and project configuration files. All are UTF-8 JSON,
//! newline-terminated, written in a canonical form so that byte equality
//! means document equality.

mod config_file;
mod merged;
mod per_image;
mod report;

pub use config_file::{load_config, save_config};
pub use merged::{
    export_merged, import_merged, load_merged, save_merged, MergedDataset, MergedImage, SplitAssignment, SPLIT_TEST,
    SPLIT_TRAIN, SPLIT_VAL,
};
pub use per_image::{load_per_image, parse_per_image, save_per_image};
pub use report::{ClusterExpansion, ConversionReport, DroppedField, EntityRef};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::error::Category;

use crate::model::Violation;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FormatError {
    #[error("malformed JSON at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("schema error at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("document violates {} invariant(s); first: {}", .0.len(), .0.first().map(ToString::to_string).unwrap_or_default())]
    Validation(Vec<Violation>),
    #[error("image id `{0}` appears more than once")]
    DuplicateImageId(String),
    #[error("image `{image_id}` has unknown split label `{label}`")]
    UnknownSplitLabel { image_id: String, label: String },
    #[error("index range error: {0}")]
    IndexRange(String),
    #[error("unresolved label: {0}")]
    UnresolvedLabel(String),
}

impl FormatError {
    pub fn code(&self) -> &'static str {
        match self {
            FormatError::Parse { .. } => "ParseError",
            FormatError::Schema { .. } => "SchemaError",
            FormatError::Validation(_) => "ValidationError",
            FormatError::DuplicateImageId(_) => "DuplicateImageId",
            FormatError::UnknownSplitLabel { .. } => "UnknownSplitLabel",
            FormatError::IndexRange(_) => "IndexRangeError",
            FormatError::UnresolvedLabel(_) => "UnresolvedLabel",
        }
    }
}

/// Byte offset of a 1-based (line, column) position.
fn byte_offset(bytes: &[u8], line: usize, column: usize) -> usize {
    let line_start: usize = bytes.split_inclusive(|b| *b == b'\n').take(line.saturating_sub(1)).map(<[u8]>::len).sum();
    (line_start + column.saturating_sub(1)).min(bytes.len())
}

/// Strict JSON decode that separates syntax errors (with byte offset) from
/// shape errors (with the path of the offending field).
pub(crate) fn decode<T: DeserializeOwned>(bytes: &[u8]) -> Result<T, FormatError> {
    let mut de = serde_json::Deserializer::from_slice(bytes);
    let value: T = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        classify(bytes, inner, path)
    })?;
    de.end().map_err(|e| classify(bytes, e, String::new()))?;
    Ok(value)
}

fn classify(bytes: &[u8], e: serde_json::Error, path: String) -> FormatError {
    match e.classify() {
        Category::Data => FormatError::Schema { path, message: e.to_string() },
        _ => FormatError::Parse { offset: byte_offset(bytes, e.line(), e.column()), message: e.to_string() },
    }
}

pub(crate) fn encode_pretty<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("in-memory serialization cannot fail");
    out.push(b'\n');
    out
}

pub(crate) fn encode_compact<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec(value).expect("in-memory serialization cannot fail");
    out.push(b'\n');
    out
}
