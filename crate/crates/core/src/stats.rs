// SPDX-License-Identifier: Apache-2.0

//! Density and coverage metrics over a set of annotated images.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::ops::Add;

use serde::{Deserialize, Serialize};

use crate::config::ProjectConfig;
use crate::model::AnnotationDocument;

/// Additive per-dataset counts. Partial counts over disjoint parts of a
/// dataset sum to the whole-dataset counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawCounts {
    pub images: u64,
    pub total_instances: u64,
    pub instances_in_graph: u64,
    /// After cluster expansion.
    pub total_relationships: u64,
    pub instances_with_attribute: u64,
}

impl RawCounts {
    pub fn of_document(doc: &AnnotationDocument) -> Self {
        let expanded = doc.expand_clusters();
        RawCounts {
            images: 1,
            total_instances: doc.instances.len() as u64,
            instances_in_graph: doc.instances_in_scene_graph().len() as u64,
            total_relationships: expanded.relationships.len() as u64,
            instances_with_attribute: doc.instances.iter().filter(|i| !i.attributes.is_empty()).count() as u64,
        }
    }
}

impl Add for RawCounts {
    type Output = RawCounts;

    fn add(self, o: RawCounts) -> RawCounts {
        RawCounts {
            images: self.images + o.images,
            total_instances: self.total_instances + o.total_instances,
            instances_in_graph: self.instances_in_graph + o.instances_in_graph,
            total_relationships: self.total_relationships + o.total_relationships,
            instances_with_attribute: self.instances_with_attribute + o.instances_with_attribute,
        }
    }
}

impl std::iter::Sum for RawCounts {
    fn sum<I: Iterator<Item = RawCounts>>(iter: I) -> Self {
        iter.fold(RawCounts::default(), Add::add)
    }
}

/// Ratios are kept at full precision; `None` where the denominator is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMetrics {
    pub images: u64,
    pub object_categories: u64,
    pub total_instances: u64,
    pub instances_in_graph: u64,
    pub pct_in_graph: Option<f64>,
    pub instances_in_graph_per_image: Option<f64>,
    pub relationship_categories: u64,
    pub total_relationships: u64,
    pub relationships_per_image: Option<f64>,
    /// Average degree: `2 · total_relationships / instances_in_graph`.
    pub relationships_per_instance_in_graph: Option<f64>,
    pub attribute_categories: u64,
    pub instances_with_attribute: u64,
    pub attribute_coverage: Option<f64>,
}

fn ratio(num: f64, den: u64) -> Option<f64> {
    (den > 0).then(|| num / den as f64)
}

/// Half-up rounding to two decimals, for display.
pub fn round2(x: f64) -> f64 {
    ((x * 100.0) + 0.5 + 1e-9).floor() / 100.0
}

impl DatasetMetrics {
    pub fn from_counts(
        raw: RawCounts,
        object_categories: u64,
        relationship_categories: u64,
        attribute_categories: u64,
    ) -> Self {
        DatasetMetrics {
            images: raw.images,
            object_categories,
            total_instances: raw.total_instances,
            instances_in_graph: raw.instances_in_graph,
            pct_in_graph: ratio(100.0 * raw.instances_in_graph as f64, raw.total_instances),
            instances_in_graph_per_image: ratio(raw.instances_in_graph as f64, raw.images),
            relationship_categories,
            total_relationships: raw.total_relationships,
            relationships_per_image: ratio(raw.total_relationships as f64, raw.images),
            relationships_per_instance_in_graph: ratio(2.0 * raw.total_relationships as f64, raw.instances_in_graph),
            attribute_categories,
            instances_with_attribute: raw.instances_with_attribute,
            attribute_coverage: ratio(100.0 * raw.instances_with_attribute as f64, raw.total_instances),
        }
    }

    /// Two-column text table with ratios rounded half-up to two decimals.
    pub fn to_table(&self) -> String {
        let show = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |x| format!("{:.2}", round2(x)));
        let pct = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |x| format!("{:.2}%", round2(x)));
        let rows: [(&str, String); 13] = [
            ("images", self.images.to_string()),
            ("object_categories", self.object_categories.to_string()),
            ("total_instances", self.total_instances.to_string()),
            ("instances_in_graph", self.instances_in_graph.to_string()),
            ("pct_in_graph", pct(self.pct_in_graph)),
            ("instances_in_graph_per_image", show(self.instances_in_graph_per_image)),
            ("relationship_categories", self.relationship_categories.to_string()),
            ("total_relationships", self.total_relationships.to_string()),
            ("relationships_per_image", show(self.relationships_per_image)),
            ("relationships_per_instance_in_graph", show(self.relationships_per_instance_in_graph)),
            ("attribute_categories", self.attribute_categories.to_string()),
            ("instances_with_attribute", self.instances_with_attribute.to_string()),
            ("attribute_coverage", pct(self.attribute_coverage)),
        ];
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        let mut out = String::new();
        for (k, v) in rows {
            let _ = writeln!(out, "{k:<width$}  {v:>12}");
        }
        out
    }
}

/// Table-style metrics for `docs`. Category counts come from the config.
pub fn compute_metrics(docs: &[AnnotationDocument], cfg: &ProjectConfig) -> DatasetMetrics {
    let raw: RawCounts = docs.iter().map(RawCounts::of_document).sum();
    DatasetMetrics::from_counts(
        raw,
        cfg.object_categories.len() as u64,
        cfg.predicates.len() as u64,
        cfg.attribute_value_count() as u64,
    )
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripleCount {
    pub subject_category: String,
    pub predicate: String,
    pub object_category: String,
    pub count: u64,
}

/// Category-level triple counts over cluster-expanded relationships, by
/// count descending then triple ascending.
pub fn triple_frequencies(docs: &[AnnotationDocument]) -> Vec<TripleCount> {
    let mut counts: BTreeMap<(String, String, String), u64> = BTreeMap::new();
    for doc in docs {
        let flat = doc.expand_clusters();
        for rel in &flat.relationships {
            let (Some(s), Some(o)) = (flat.entity_category(&rel.subject_ref), flat.entity_category(&rel.object_ref))
            else {
                continue;
            };
            *counts.entry((s.to_string(), rel.predicate.clone(), o.to_string())).or_default() += 1;
        }
    }
    let mut out: Vec<TripleCount> = counts
        .into_iter()
        .map(|((s, p, o), count)| TripleCount { subject_category: s, predicate: p, object_category: o, count })
        .collect();
    out.sort_by_key(|t| std::cmp::Reverse(t.count));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BBox, Instance, Relationship};

    fn cfg() -> ProjectConfig {
        ProjectConfig::default_traffic()
    }

    /// Image 1: a, b (oriented cars), c (road); a->c, b->c, a->b.
    /// Image 2: one unrelated building.
    fn two_image_fixture() -> Vec<AnnotationDocument> {
        let c = cfg();
        let mut one = AnnotationDocument::new("1", 100, 100, "1.png");
        one.add_instance(
            &c,
            Instance::new("a", "car", BBox::new(0, 0, 10, 10)).with_attribute("orientation", "forward"),
        )
        .unwrap();
        one.add_instance(
            &c,
            Instance::new("b", "car", BBox::new(20, 0, 30, 10)).with_attribute("orientation", "leftward"),
        )
        .unwrap();
        one.add_instance(&c, Instance::new("c", "road", BBox::new(0, 5, 100, 100))).unwrap();
        one.add_relationship(&c, Relationship::new("r1", "a", "driving on", "c")).unwrap();
        one.add_relationship(&c, Relationship::new("r2", "b", "driving on", "c")).unwrap();
        one.add_relationship(&c, Relationship::new("r3", "a", "in left of", "b")).unwrap();
        let mut two = AnnotationDocument::new("2", 100, 100, "2.png");
        two.add_instance(&c, Instance::new("d", "building", BBox::new(0, 0, 50, 50))).unwrap();
        vec![one, two]
    }

    #[test]
    fn hand_arithmetic_fixture() {
        let m = compute_metrics(&two_image_fixture(), &cfg());
        assert_eq!((m.images, m.total_instances, m.instances_in_graph, m.total_relationships), (2, 4, 3, 3));
        assert_eq!(m.pct_in_graph, Some(75.0));
        assert_eq!(m.instances_in_graph_per_image, Some(1.5));
        assert_eq!(m.relationships_per_image, Some(1.5));
        assert_eq!(m.relationships_per_instance_in_graph, Some(2.0));
        assert_eq!(m.attribute_coverage, Some(50.0));
        assert_eq!((m.object_categories, m.relationship_categories, m.attribute_categories), (34, 51, 4));
    }

    #[test]
    fn empty_dataset_has_null_ratios() {
        let m = compute_metrics(&[], &cfg());
        assert_eq!(m.images, 0);
        assert_eq!(m.total_instances, 0);
        assert!(m.pct_in_graph.is_none());
        assert!(m.relationships_per_instance_in_graph.is_none());
        assert!(m.attribute_coverage.is_none());
        assert!(m.to_table().contains("n/a"));
        let json = serde_json::to_value(&m).unwrap();
        assert!(json["pct_in_graph"].is_null());
    }

    #[test]
    fn rounding_is_half_up() {
        assert_eq!(round2(1.358_66), 1.36);
        assert_eq!(round2(3.026_4), 3.03);
        assert_eq!(round2(2.005), 2.01);
        assert_eq!(round2(76.709_9), 76.71);
    }

    #[test]
    fn triples_sorted_by_count() {
        let t = triple_frequencies(&two_image_fixture());
        assert_eq!(t[0].count, 2);
        assert_eq!(
            (t[0].subject_category.as_str(), t[0].predicate.as_str(), t[0].object_category.as_str()),
            ("car", "driving on", "road")
        );
        assert_eq!(t.iter().map(|x| x.count).sum::<u64>(), 3);
    }

    #[test]
    fn clustered_persons_count_per_member() {
        let c = cfg();
        let mut d = AnnotationDocument::new("x", 100, 100, "x.png");
        d.add_instance(&c, Instance::new("p1", "person", BBox::new(0, 0, 5, 10))).unwrap();
        d.add_instance(&c, Instance::new("p2", "person", BBox::new(6, 0, 11, 10))).unwrap();
        d.add_instance(&c, Instance::new("s", "sidewalk", BBox::new(0, 8, 100, 20))).unwrap();
        d.make_cluster(&["p1".into(), "p2".into()], "crowd").unwrap();
        d.add_relationship(&c, Relationship::new("r", "crowd", "walking on", "s")).unwrap();
        let t = triple_frequencies(&[d]);
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].count, 2);
    }
}
