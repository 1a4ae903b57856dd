// SPDX-License-Identifier: Apache-2.0

use super::{recommend, PriorDatabase, PriorRecord};
use crate::config::ProjectConfig;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReplayError {
    #[error("annotation log is empty")]
    EmptyLog,
}

/// Replays an annotation log against a fresh prior database and returns the
/// fraction of entries whose chosen predicate was among the top-`k`
/// recommendations made just before it was recorded.
pub fn evaluate_replay(cfg: &ProjectConfig, log: &[PriorRecord], k: usize) -> Result<f64, ReplayError> {
    if log.is_empty() {
        return Err(ReplayError::EmptyLog);
    }
    let mut db = PriorDatabase::new();
    let mut hits = 0usize;
    for entry in log {
        let recs = recommend(&db, cfg, &entry.pair, entry.features, k);
        if recs.iter().any(|r| r.predicate == entry.predicate) {
            hits += 1;
        }
        db.record(entry);
    }
    Ok(hits as f64 / log.len() as f64)
}
