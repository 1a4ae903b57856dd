// SPDX-License-Identifier: Apache-2.0

//! Project-level vocabulary: categories, predicates, their hierarchies,
//! attribute values, the feature set and the cold-start rule table.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::recommender::{Feature, Rule, ScoreDomain};

/// Category name that maps to label index 0 in the merged layout.
pub const BACKGROUND_LABEL: &str = "unlabeled";

static DEFAULT_TRAFFIC_CONFIG: &str = include_str!("../assets/traffic_config.json");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HierarchyNode {
    pub name: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<HierarchyNode>,
}

impl HierarchyNode {
    pub fn leaf(name: impl Into<String>) -> Self {
        HierarchyNode { name: name.into(), children: Vec::new() }
    }

    fn walk<'a>(&'a self, parent: Option<&'a str>, out: &mut Vec<(&'a str, Option<&'a str>, bool)>) {
        out.push((&self.name, parent, self.children.is_empty()));
        for child in &self.children {
            child.walk(Some(&self.name), out);
        }
    }
}

/// Forest of named nodes. Nesting makes cycles unrepresentable; uniqueness of
/// names is checked by [`Hierarchy::problems`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Hierarchy {
    pub roots: Vec<HierarchyNode>,
}

impl Hierarchy {
    /// Flat hierarchy: every category is its own root.
    pub fn flat<S: AsRef<str>>(names: &[S]) -> Self {
        Hierarchy { roots: names.iter().map(|n| HierarchyNode::leaf(n.as_ref())).collect() }
    }

    /// `(name, parent, is_leaf)` for every node in pre-order.
    fn nodes(&self) -> Vec<(&str, Option<&str>, bool)> {
        let mut out = Vec::new();
        for root in &self.roots {
            root.walk(None, &mut out);
        }
        out
    }

    pub fn contains(&self, name: &str) -> bool {
        self.nodes().iter().any(|(n, _, _)| *n == name)
    }

    pub fn parent_of(&self, name: &str) -> Option<&str> {
        self.nodes().into_iter().find(|(n, _, _)| *n == name).and_then(|(_, p, _)| p)
    }

    /// Ancestors from the direct parent up to the root.
    pub fn ancestors(&self, name: &str) -> Vec<&str> {
        let parents: BTreeMap<&str, Option<&str>> = self.nodes().into_iter().map(|(n, p, _)| (n, p)).collect();
        let mut chain = Vec::new();
        let mut cur = parents.get(name).copied().flatten();
        while let Some(p) = cur {
            chain.push(p);
            cur = parents.get(p).copied().flatten();
        }
        chain
    }

    /// Reflexive: a node is a descendant of itself.
    pub fn is_a(&self, name: &str, ancestor: &str) -> bool {
        (name == ancestor && self.contains(name)) || self.ancestors(name).contains(&ancestor)
    }

    /// Invariant violations against the flat category list.
    pub fn problems<S: AsRef<str>>(&self, categories: &[S]) -> Vec<String> {
        let mut problems = Vec::new();
        let nodes = self.nodes();
        let mut seen = HashSet::new();
        for (name, _, _) in &nodes {
            if !seen.insert(*name) {
                problems.push(format!("node `{name}` appears more than once"));
            }
        }
        let cats: HashSet<&str> = categories.iter().map(AsRef::as_ref).collect();
        for cat in &cats {
            if !seen.contains(cat) {
                problems.push(format!("category `{cat}` missing from hierarchy"));
            }
        }
        for (name, _, is_leaf) in &nodes {
            if *is_leaf && !cats.contains(name) {
                problems.push(format!("leaf `{name}` is not a listed category"));
            }
        }
        problems
    }
}

/// User-defined underlying data of an annotation project.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectConfig {
    pub object_categories: Vec<String>,
    pub object_hierarchy: Hierarchy,
    pub predicates: Vec<String>,
    pub predicate_hierarchy: Hierarchy,
    /// Attribute name to its closed set of admissible values.
    pub attributes: BTreeMap<String, Vec<String>>,
    /// Feature set in display order.
    pub features: Vec<Feature>,
    pub rules: Vec<Rule>,
    #[serde(default)]
    pub score_domain: ScoreDomain,
}

impl ProjectConfig {
    /// The shipped traffic-scene configuration.
    pub fn default_traffic() -> Self {
        serde_json::from_str(DEFAULT_TRAFFIC_CONFIG).expect("bundled traffic config is valid JSON")
    }

    pub fn has_category(&self, name: &str) -> bool {
        self.object_categories.iter().any(|c| c == name)
    }

    pub fn has_predicate(&self, name: &str) -> bool {
        self.predicates.iter().any(|p| p == name)
    }

    pub fn attribute_allows(&self, attribute: &str, value: &str) -> Option<bool> {
        self.attributes.get(attribute).map(|vals| vals.iter().any(|v| v == value))
    }

    /// Total number of attribute values across the vocabulary.
    pub fn attribute_value_count(&self) -> usize {
        self.attributes.values().map(Vec::len).sum()
    }

    /// Every invariant violation, as `(path, message)` pairs.
    pub fn problems(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        check_names(&mut out, "object_categories", &self.object_categories);
        check_names(&mut out, "predicates", &self.predicates);
        for p in self.object_hierarchy.problems(&self.object_categories) {
            out.push(("object_hierarchy".into(), p));
        }
        for p in self.predicate_hierarchy.problems(&self.predicates) {
            out.push(("predicate_hierarchy".into(), p));
        }
        for (name, values) in &self.attributes {
            let path = format!("attributes.{name}");
            if name.is_empty() || name.contains(':') || has_control(name) {
                out.push((path.clone(), "attribute names must be non-empty without ':' or control characters".into()));
            }
            check_names(&mut out, &path, values);
        }
        let mut feats = BTreeSet::new();
        for f in &self.features {
            if !feats.insert(*f) {
                out.push(("features".into(), format!("feature `{f}` listed twice")));
            }
        }
        let mut priorities = BTreeSet::new();
        for (i, rule) in self.rules.iter().enumerate() {
            let path = format!("rules[{i}]");
            if !priorities.insert(rule.priority) {
                out.push((path.clone(), format!("priority {} is not unique", rule.priority)));
            }
            if !self.has_predicate(&rule.predicate) {
                out.push((path.clone(), format!("unknown predicate `{}`", rule.predicate)));
            }
            for f in rule.conditions.keys() {
                if !feats.contains(f) {
                    out.push((path.clone(), format!("feature `{f}` not in the configured feature set")));
                }
            }
        }
        out
    }
}

fn has_control(s: &str) -> bool {
    s.chars().any(char::is_control)
}

fn check_names(out: &mut Vec<(String, String)>, path: &str, names: &[String]) {
    if names.is_empty() {
        out.push((path.to_string(), "list must not be empty".into()));
    }
    let mut seen = HashSet::new();
    for (i, n) in names.iter().enumerate() {
        if n.is_empty() || has_control(n) {
            out.push((format!("{path}[{i}]"), "names must be non-empty without control characters".into()));
        }
        if !seen.insert(n.as_str()) {
            out.push((format!("{path}[{i}]"), format!("duplicate name `{n}`")));
        }
    }
}
