// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::features::{Feature, FeatureVector};

/// Condition-to-predicate entry of the cold-start rule table.
///
/// A rule matches when every listed feature has the required value in the
/// pair's feature vector. Lower priority values are tried first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rule {
    pub priority: u32,
    pub predicate: String,
    pub conditions: BTreeMap<Feature, bool>,
}

impl Rule {
    pub fn new(priority: u32, predicate: impl Into<String>, conditions: &[(Feature, bool)]) -> Self {
        Rule { priority, predicate: predicate.into(), conditions: conditions.iter().copied().collect() }
    }

    pub fn matches(&self, features: FeatureVector) -> bool {
        self.conditions.iter().all(|(f, required)| features.get(*f) == *required)
    }
}

/// Matching rules in ascending priority order.
pub fn matching_rules(rules: &[Rule], features: FeatureVector) -> Vec<&Rule> {
    let mut hits: Vec<&Rule> = rules.iter().filter(|r| r.matches(features)).collect();
    hits.sort_by_key(|r| r.priority);
    hits
}
