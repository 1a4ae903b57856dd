// SPDX-License-Identifier: Apache-2.0

//! Relationship recommendation: tag-based scoring over an incrementally
//! updated prior database, with a rule table for the cold-start regime.

mod features;
mod prior;
mod replay;
mod rules;

pub use features::{extract_features, extract_with, Feature, FeatureVector, UnknownFeature};
pub use prior::{BiCell, PairKey, PriorDatabase, PriorError, PriorRecord, PriorSnapshot, UbCell};
pub use replay::{evaluate_replay, ReplayError};
pub use rules::{matching_rules, Rule};

use serde::{Deserialize, Serialize};

use crate::config::ProjectConfig;

/// Which features the score sums over.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreDomain {
    /// Only features present in the live pair.
    #[default]
    Present,
    /// Every feature, regardless of the live pair.
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Prior,
    Rule,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Recommendation {
    pub predicate: String,
    /// Prior score for `Source::Prior`; rule priority for `Source::Rule`.
    pub score: u64,
    pub source: Source,
}

/// Scores every configured predicate for the pair.
pub fn score_table(
    db: &PriorDatabase,
    cfg: &ProjectConfig,
    pair: &PairKey,
    features: FeatureVector,
) -> Vec<(String, u64)> {
    let features = features.restrict_to(&cfg.features);
    cfg.predicates.iter().map(|p| (p.clone(), db.score(pair, features, p, cfg.score_domain))).collect()
}

/// Top-`k` predicates for the pair.
///
/// When any predicate has a positive prior score, returns the best `k` by
/// score descending then predicate name ascending. Otherwise falls back to
/// the rule table: matching rules in ascending priority, truncated to `k`.
/// `k == 0` yields an empty list.
pub fn recommend(
    db: &PriorDatabase,
    cfg: &ProjectConfig,
    pair: &PairKey,
    features: FeatureVector,
    k: usize,
) -> Vec<Recommendation> {
    let mut table = score_table(db, cfg, pair, features);
    table.retain(|(_, s)| *s > 0);
    if !table.is_empty() {
        table.sort_by(|(pa, sa), (pb, sb)| sb.cmp(sa).then_with(|| pa.cmp(pb)));
        return table
            .into_iter()
            .take(k)
            .map(|(predicate, score)| Recommendation { predicate, score, source: Source::Prior })
            .collect();
    }
    let features = features.restrict_to(&cfg.features);
    matching_rules(&cfg.rules, features)
        .into_iter()
        .take(k)
        .map(|r| Recommendation { predicate: r.predicate.clone(), score: u64::from(r.priority), source: Source::Rule })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn car_road() -> PairKey {
        PairKey::new("car", "road")
    }

    fn contact_above() -> FeatureVector {
        FeatureVector::empty().with(Feature::Contact).with(Feature::SubjectAbove)
    }

    #[test]
    fn prior_path_picks_best() {
        let cfg = ProjectConfig::default_traffic();
        let mut db = PriorDatabase::new();
        db.update(&car_road(), contact_above(), "driving on");
        db.update(&car_road(), FeatureVector::empty().with(Feature::Contact), "driving on");
        db.update(&car_road(), FeatureVector::empty().with(Feature::Contact), "parking on");
        let recs = recommend(&db, &cfg, &car_road(), contact_above(), 1);
        assert_eq!(recs, [Recommendation { predicate: "driving on".into(), score: 7, source: Source::Prior }]);
        let recs = recommend(&db, &cfg, &car_road(), contact_above(), 5);
        let names: Vec<_> = recs.iter().map(|r| (r.predicate.as_str(), r.score)).collect();
        assert_eq!(names, [("driving on", 7), ("parking on", 3)]);
    }

    #[test]
    fn cold_start_uses_rules() {
        let cfg = ProjectConfig::default_traffic();
        let db = PriorDatabase::new();
        let recs = recommend(&db, &cfg, &car_road(), contact_above(), 1);
        assert_eq!(recs, [Recommendation { predicate: "on".into(), score: 1, source: Source::Rule }]);
        let all = recommend(&db, &cfg, &car_road(), contact_above(), 10);
        assert!(all.iter().all(|r| r.source == Source::Rule));
        assert_eq!(all.last().unwrap().predicate, "next to");
    }

    #[test]
    fn cold_start_without_matching_rule_is_empty() {
        let mut cfg = ProjectConfig::default_traffic();
        cfg.rules.retain(|r| r.priority == 1);
        let recs = recommend(&PriorDatabase::new(), &cfg, &car_road(), FeatureVector::empty(), 3);
        assert!(recs.is_empty());
    }

    #[test]
    fn ties_break_by_name() {
        let cfg = ProjectConfig::default_traffic();
        let mut db = PriorDatabase::new();
        let contact = FeatureVector::empty().with(Feature::Contact);
        db.update(&car_road(), contact, "parking on");
        db.update(&car_road(), contact, "driving on");
        let recs = recommend(&db, &cfg, &car_road(), contact, 2);
        assert_eq!(recs[0].predicate, "driving on");
        assert_eq!(recs[1].predicate, "parking on");
        assert_eq!(recs[0].score, recs[1].score);
    }

    #[test]
    fn unconfigured_features_are_ignored() {
        let mut cfg = ProjectConfig::default_traffic();
        let mut db = PriorDatabase::new();
        db.update(&car_road(), contact_above(), "driving on");
        cfg.features = vec![Feature::SubjectLeft];
        cfg.rules.clear();
        assert!(recommend(&db, &cfg, &car_road(), contact_above(), 3).is_empty());
    }
}
