// SPDX-License-Identifier: Apache-2.0

//! Co-occurrence counts behind the tag-based relationship score.
//!
//! `count_ub[(u, b)]` counts how often category pair `u` was annotated while
//! feature `b` held; `count_bi[(b, i)]` counts how often feature `b` held for
//! an annotation with predicate `i`. The score of predicate `i` for a live
//! pair is `Σ_b count_ub[(u, b)] · count_bi[(b, i)]`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::features::{Feature, FeatureVector};
use super::ScoreDomain;

/// Ordered (subject category, object category) pair.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PairKey {
    pub subject_category: String,
    pub object_category: String,
}

impl PairKey {
    pub fn new(subject_category: impl Into<String>, object_category: impl Into<String>) -> Self {
        PairKey { subject_category: subject_category.into(), object_category: object_category.into() }
    }
}

/// One annotation as seen by the prior database.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PriorRecord {
    pub pair: PairKey,
    pub features: FeatureVector,
    pub predicate: String,
}

impl PriorRecord {
    pub fn new(pair: PairKey, features: FeatureVector, predicate: impl Into<String>) -> Self {
        PriorRecord { pair, features, predicate: predicate.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PriorError {
    #[error("removing this annotation would drive a count below zero; it was never recorded")]
    UnderflowWouldOccur,
    #[error("prior database line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PriorDatabase {
    count_ub: BTreeMap<(PairKey, Feature), u64>,
    count_bi: BTreeMap<(Feature, String), u64>,
    total_annotations: u64,
}

const TEXT_HEADER: &str = "# scene-graph prior database v1";

impl PriorDatabase {
    pub fn new() -> Self {
        Self::default()
    }

    /// Batch count over a full annotation log.
    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a PriorRecord>) -> Self {
        let mut db = PriorDatabase::new();
        for r in records {
            db.record(r);
        }
        db
    }

    pub fn count_ub(&self, pair: &PairKey, feature: Feature) -> u64 {
        self.count_ub.get(&(pair.clone(), feature)).copied().unwrap_or(0)
    }

    pub fn count_bi(&self, feature: Feature, predicate: &str) -> u64 {
        self.count_bi.get(&(feature, predicate.to_string())).copied().unwrap_or(0)
    }

    pub fn total_annotations(&self) -> u64 {
        self.total_annotations
    }

    pub fn is_empty(&self) -> bool {
        self.total_annotations == 0 && self.count_ub.is_empty() && self.count_bi.is_empty()
    }

    /// Records one annotation: every present feature bumps one `count_ub`
    /// cell and one `count_bi` cell.
    pub fn update(&mut self, pair: &PairKey, features: FeatureVector, chosen: &str) {
        for f in features.present() {
            *self.count_ub.entry((pair.clone(), f)).or_default() += 1;
            *self.count_bi.entry((f, chosen.to_string())).or_default() += 1;
        }
        self.total_annotations += 1;
    }

    /// Exact inverse of [`PriorDatabase::update`]. Leaves the database
    /// untouched on error.
    pub fn remove(&mut self, pair: &PairKey, features: FeatureVector, chosen: &str) -> Result<(), PriorError> {
        let ub_keys: Vec<_> = features.present().map(|f| (pair.clone(), f)).collect();
        let bi_keys: Vec<_> = features.present().map(|f| (f, chosen.to_string())).collect();
        let ok = self.total_annotations >= 1
            && ub_keys.iter().all(|k| self.count_ub.get(k).is_some_and(|c| *c >= 1))
            && bi_keys.iter().all(|k| self.count_bi.get(k).is_some_and(|c| *c >= 1));
        if !ok {
            return Err(PriorError::UnderflowWouldOccur);
        }
        for k in ub_keys {
            decrement(&mut self.count_ub, k);
        }
        for k in bi_keys {
            decrement(&mut self.count_bi, k);
        }
        self.total_annotations -= 1;
        Ok(())
    }

    pub fn record(&mut self, r: &PriorRecord) {
        self.update(&r.pair, r.features, &r.predicate);
    }

    pub fn unrecord(&mut self, r: &PriorRecord) -> Result<(), PriorError> {
        self.remove(&r.pair, r.features, &r.predicate)
    }

    /// Score of predicate `predicate` for the live pair.
    ///
    /// With [`ScoreDomain::Present`] the sum runs over features present in
    /// `features`; with [`ScoreDomain::All`] it runs over every feature.
    pub fn score(&self, pair: &PairKey, features: FeatureVector, predicate: &str, domain: ScoreDomain) -> u64 {
        let terms: Box<dyn Iterator<Item = Feature>> = match domain {
            ScoreDomain::Present => Box::new(features.present()),
            ScoreDomain::All => Box::new(Feature::ALL.into_iter()),
        };
        terms.map(|f| self.count_ub(pair, f) * self.count_bi(f, predicate)).sum()
    }

    /// Canonical line-oriented text form; see [`PriorDatabase::from_text`].
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{TEXT_HEADER}");
        let _ = writeln!(s, "total\t{}", self.total_annotations);
        for ((pair, f), c) in &self.count_ub {
            let _ = writeln!(s, "ub\t{}\t{}\t{}\t{}", pair.subject_category, pair.object_category, f, c);
        }
        for ((f, p), c) in &self.count_bi {
            let _ = writeln!(s, "bi\t{f}\t{p}\t{c}");
        }
        s
    }

    /// Parses the tab-separated form written by [`PriorDatabase::to_text`].
    ///
    /// Lines: `total<TAB>n`, `ub<TAB>subject<TAB>object<TAB>feature<TAB>n`,
    /// `bi<TAB>feature<TAB>predicate<TAB>n`. Blank lines and lines starting
    /// with `#` are ignored. Zero counts are dropped.
    pub fn from_text(text: &str) -> Result<Self, PriorError> {
        let mut db = PriorDatabase::new();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let err = |message: String| PriorError::Parse { line: line_no, message };
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let count = |s: &str| s.parse::<u64>().map_err(|e| err(format!("bad count `{s}`: {e}")));
            let feature = |s: &str| s.parse::<Feature>().map_err(|e| err(e.to_string()));
            match fields.as_slice() {
                ["total", n] => db.total_annotations = count(n)?,
                ["ub", s, o, f, n] => {
                    let n = count(n)?;
                    if n > 0 {
                        db.count_ub.insert((PairKey::new(*s, *o), feature(f)?), n);
                    }
                }
                ["bi", f, p, n] => {
                    let n = count(n)?;
                    if n > 0 {
                        db.count_bi.insert((feature(f)?, p.to_string()), n);
                    }
                }
                _ => return Err(err(format!("unrecognized line `{line}`"))),
            }
        }
        Ok(db)
    }

    pub fn snapshot(&self) -> PriorSnapshot {
        PriorSnapshot {
            total_annotations: self.total_annotations,
            count_ub: self
                .count_ub
                .iter()
                .map(|((pair, f), c)| UbCell { pair: pair.clone(), feature: *f, count: *c })
                .collect(),
            count_bi: self
                .count_bi
                .iter()
                .map(|((f, p), c)| BiCell { feature: *f, predicate: p.clone(), count: *c })
                .collect(),
        }
    }
}

fn decrement<K: Ord>(map: &mut BTreeMap<K, u64>, key: K) {
    if let Some(c) = map.get_mut(&key) {
        *c -= 1;
        if *c == 0 {
            map.remove(&key);
        }
    }
}

/// Serializable view of all non-zero cells.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PriorSnapshot {
    pub total_annotations: u64,
    pub count_ub: Vec<UbCell>,
    pub count_bi: Vec<BiCell>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UbCell {
    #[serde(flatten)]
    pub pair: PairKey,
    pub feature: Feature,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BiCell {
    pub feature: Feature,
    pub predicate: String,
    pub count: u64,
}
