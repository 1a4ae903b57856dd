// SPDX-License-Identifier: Apache-2.0

use super::{decode, encode_pretty, FormatError};
use crate::config::ProjectConfig;
use crate::model::AnnotationDocument;

/// Decodes a per-image file without semantic validation. The result is in
/// canonical order.
pub fn parse_per_image(bytes: &[u8]) -> Result<AnnotationDocument, FormatError> {
    let mut doc: AnnotationDocument = decode(bytes)?;
    doc.canonicalize();
    Ok(doc)
}

/// Decodes and validates a per-image file against `cfg`.
pub fn load_per_image(bytes: &[u8], cfg: &ProjectConfig) -> Result<AnnotationDocument, FormatError> {
    let doc = parse_per_image(bytes)?;
    let violations = doc.validate(cfg);
    if violations.is_empty() {
        Ok(doc)
    } else {
        Err(FormatError::Validation(violations))
    }
}

/// Canonical bytes: schema key order, entity arrays sorted by id, two-space
/// indentation, trailing newline.
pub fn save_per_image(doc: &AnnotationDocument) -> Vec<u8> {
    let mut doc = doc.clone();
    doc.canonicalize();
    encode_pretty(&doc)
}
