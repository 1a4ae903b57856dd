// SPDX-License-Identifier: Apache-2.0

//! Append-only mutation log (one JSON record per line).
//!
//! Every image's history starts with a `put_annotation` record, so replaying
//! the log from an empty store reproduces each logged document exactly.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::store::append_line;
use super::ServiceError;
use crate::config::ProjectConfig;
use crate::model::{AnnotationDocument, Instance, Region, Relationship, Violation};
use crate::recommender::{extract_with, PairKey, PriorRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Mutation {
    PutAnnotation {
        document: AnnotationDocument,
    },
    AddInstance {
        instance: Instance,
    },
    UpdateInstance {
        instance: Instance,
    },
    DeleteInstance {
        id: String,
    },
    AddRegion {
        region: Region,
    },
    DeleteRegion {
        id: String,
    },
    AddCluster {
        id: String,
        member_ids: Vec<String>,
    },
    DeleteCluster {
        id: String,
    },
    /// `relationship.features` holds the features frozen at annotation time.
    AddRelationship {
        relationship: Relationship,
        pair: PairKey,
    },
    DeleteRelationship {
        id: String,
    },
    /// Re-derives every relationship's features from current geometry.
    RebuildPriors,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub seq: u64,
    pub ts_millis: u64,
    /// `None` for project-wide mutations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_id: Option<String>,
    #[serde(flatten)]
    pub mutation: Mutation,
}

impl LogRecord {
    pub fn new(seq: u64, image_id: Option<String>, mutation: Mutation) -> Self {
        let ts_millis = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0);
        LogRecord { seq, ts_millis, image_id, mutation }
    }

    /// The `(u, b, i)` triple of an annotation record.
    pub fn annotation(&self) -> Option<PriorRecord> {
        match &self.mutation {
            Mutation::AddRelationship { relationship, pair } => Some(PriorRecord::new(
                pair.clone(),
                relationship.features.unwrap_or_default(),
                relationship.predicate.clone(),
            )),
            _ => None,
        }
    }
}

/// Result of reading a log file.
#[derive(Debug, Default)]
pub struct LogContents {
    pub records: Vec<LogRecord>,
    /// Byte length of the valid prefix when the final line was torn.
    pub torn_tail_at: Option<u64>,
}

pub fn read_log(path: &Path) -> Result<LogContents, ServiceError> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(LogContents::default()),
        Err(e) => return Err(ServiceError::storage(path, e)),
    };
    let mut out = LogContents::default();
    let mut offset = 0u64;
    let lines: Vec<&str> = text.split_inclusive('\n').collect();
    for (idx, raw) in lines.iter().enumerate() {
        let line = raw.trim_end_matches('\n');
        let is_last = idx + 1 == lines.len();
        if !line.trim().is_empty() {
            match serde_json::from_str::<LogRecord>(line) {
                Ok(rec) if raw.ends_with('\n') => out.records.push(rec),
                // An unterminated or unparsable final line is a torn append.
                _ if is_last => {
                    out.torn_tail_at = Some(offset);
                    break;
                }
                Ok(rec) => out.records.push(rec),
                Err(e) => {
                    return Err(ServiceError::CorruptLog { line: idx + 1, message: e.to_string() });
                }
            }
        }
        offset += raw.len() as u64;
    }
    Ok(out)
}

pub fn append_record(path: &Path, rec: &LogRecord) -> Result<(), ServiceError> {
    let line = serde_json::to_string(rec).expect("log record serializes");
    append_line(path, &line).map_err(|e| ServiceError::storage(path, e))
}

/// Applies one mutation to `doc`. Shared by the live path and log replay.
pub fn apply(doc: &mut AnnotationDocument, cfg: &ProjectConfig, mutation: &Mutation) -> Result<(), Violation> {
    match mutation {
        Mutation::PutAnnotation { document } => {
            let mut next = document.clone();
            next.canonicalize();
            if let Some(v) = next.validate(cfg).into_iter().next() {
                return Err(v);
            }
            freeze_missing_features(&mut next, cfg);
            *doc = next;
            Ok(())
        }
        Mutation::AddInstance { instance } => doc.add_instance(cfg, instance.clone()),
        Mutation::UpdateInstance { instance } => doc.update_instance(cfg, instance.clone()),
        Mutation::DeleteInstance { id } => doc.delete_instance(id).map(drop),
        Mutation::AddRegion { region } => doc.add_region(region.clone()),
        Mutation::DeleteRegion { id } => doc.delete_region(id).map(drop),
        Mutation::AddCluster { id, member_ids } => doc.make_cluster(member_ids, id).map(drop),
        Mutation::DeleteCluster { id } => doc.delete_cluster(id).map(drop),
        Mutation::AddRelationship { relationship, .. } => doc.add_relationship(cfg, relationship.clone()),
        Mutation::DeleteRelationship { id } => doc.delete_relationship(id).map(drop),
        Mutation::RebuildPriors => {
            for rel in &mut doc.relationships {
                rel.features = None;
            }
            freeze_missing_features(doc, cfg);
            Ok(())
        }
    }
}

/// Fills `features` on relationships that lack them from current geometry.
pub fn freeze_missing_features(doc: &mut AnnotationDocument, cfg: &ProjectConfig) {
    let computed: Vec<Option<_>> = doc
        .relationships
        .iter()
        .map(|r| match r.features {
            Some(_) => None,
            None => match (doc.entity_bbox(&r.subject_ref), doc.entity_bbox(&r.object_ref)) {
                (Some(s), Some(o)) => Some(extract_with(&cfg.features, &s, &o)),
                _ => None,
            },
        })
        .collect();
    for (rel, fv) in doc.relationships.iter_mut().zip(computed) {
        if fv.is_some() {
            rel.features = fv;
        }
    }
}

/// Prior records of every stored relationship: pair from current endpoint
/// categories, features as frozen (or from current geometry when absent).
pub fn prior_records(doc: &AnnotationDocument, cfg: &ProjectConfig) -> Vec<PriorRecord> {
    doc.relationships
        .iter()
        .filter_map(|r| {
            let pair = PairKey::new(doc.entity_category(&r.subject_ref)?, doc.entity_category(&r.object_ref)?);
            let features = match r.features {
                Some(f) => f,
                None => {
                    extract_with(&cfg.features, &doc.entity_bbox(&r.subject_ref)?, &doc.entity_bbox(&r.object_ref)?)
                }
            };
            Some(PriorRecord::new(pair, features, r.predicate.clone()))
        })
        .collect()
}
