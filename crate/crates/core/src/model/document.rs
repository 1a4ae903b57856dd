// SPDX-License-Identifier: Apache-2.0

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{BBox, Violation};
use crate::config::ProjectConfig;
use crate::recommender::FeatureVector;

/// Keys not covered by the schema, kept so they survive a load/save cycle.
pub type Extra = BTreeMap<String, Value>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageInfo {
    pub image_id: String,
    pub width: u32,
    pub height: u32,
    pub file_name: String,
    #[serde(flatten)]
    pub extra: Extra,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AttributeValue {
    pub attribute: String,
    pub value: String,
}

impl AttributeValue {
    pub fn new(attribute: impl Into<String>, value: impl Into<String>) -> Self {
        AttributeValue { attribute: attribute.into(), value: value.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    pub category: String,
    pub bbox: BBox,
    #[serde(default)]
    pub attributes: BTreeSet<AttributeValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_ref: Option<String>,
    #[serde(flatten)]
    pub extra: Extra,
}

impl Instance {
    pub fn new(id: impl Into<String>, category: impl Into<String>, bbox: BBox) -> Self {
        Instance {
            id: id.into(),
            category: category.into(),
            bbox,
            attributes: BTreeSet::new(),
            mask_ref: None,
            extra: Extra::new(),
        }
    }

    pub fn with_attribute(mut self, attribute: &str, value: &str) -> Self {
        self.attributes.insert(AttributeValue::new(attribute, value));
        self
    }
}

/// Same-category group of instances that shares relationships collectively.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub id: String,
    pub category: String,
    pub member_ids: Vec<String>,
    #[serde(flatten)]
    pub extra: Extra,
}

/// Box scoping which entity pairs are offered for annotation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub id: String,
    pub bbox: BBox,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(flatten)]
    pub extra: Extra,
}

impl Region {
    pub fn new(id: impl Into<String>, bbox: BBox) -> Self {
        Region { id: id.into(), bbox, label: None, extra: Extra::new() }
    }
}

/// Directed edge `<subject, predicate, object>`. Endpoints are instance or
/// cluster ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Relationship {
    pub id: String,
    pub subject_ref: String,
    pub predicate: String,
    pub object_ref: String,
    /// Pair features frozen when the relationship was annotated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<FeatureVector>,
    #[serde(flatten)]
    pub extra: Extra,
}

impl Relationship {
    pub fn new(
        id: impl Into<String>,
        subject_ref: impl Into<String>,
        predicate: impl Into<String>,
        object_ref: impl Into<String>,
    ) -> Self {
        Relationship {
            id: id.into(),
            subject_ref: subject_ref.into(),
            predicate: predicate.into(),
            object_ref: object_ref.into(),
            features: None,
            extra: Extra::new(),
        }
    }

    pub fn triple(&self) -> (&str, &str, &str) {
        (&self.subject_ref, &self.predicate, &self.object_ref)
    }
}

/// One image's complete annotation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationDocument {
    pub image: ImageInfo,
    #[serde(default)]
    pub instances: Vec<Instance>,
    #[serde(default)]
    pub clusters: Vec<Cluster>,
    #[serde(default)]
    pub regions: Vec<Region>,
    #[serde(default)]
    pub relationships: Vec<Relationship>,
    #[serde(flatten)]
    pub extra: Extra,
}

fn insert_sorted<T>(items: &mut Vec<T>, item: T, id: impl Fn(&T) -> &str) {
    let pos = items.partition_point(|x| id(x) < id(&item));
    items.insert(pos, item);
}

impl AnnotationDocument {
    pub fn new(image_id: impl Into<String>, width: u32, height: u32, file_name: impl Into<String>) -> Self {
        AnnotationDocument {
            image: ImageInfo {
                image_id: image_id.into(),
                width,
                height,
                file_name: file_name.into(),
                extra: Extra::new(),
            },
            instances: Vec::new(),
            clusters: Vec::new(),
            regions: Vec::new(),
            relationships: Vec::new(),
            extra: Extra::new(),
        }
    }

    pub fn image_id(&self) -> &str {
        &self.image.image_id
    }

    /// Sorts every entity list by id and cluster members lexicographically.
    pub fn canonicalize(&mut self) {
        self.instances.sort_by(|a, b| a.id.cmp(&b.id));
        self.clusters.sort_by(|a, b| a.id.cmp(&b.id));
        for c in &mut self.clusters {
            c.member_ids.sort();
        }
        self.regions.sort_by(|a, b| a.id.cmp(&b.id));
        self.relationships.sort_by(|a, b| a.id.cmp(&b.id));
    }

    pub fn instance(&self, id: &str) -> Option<&Instance> {
        self.instances.iter().find(|i| i.id == id)
    }

    pub fn cluster(&self, id: &str) -> Option<&Cluster> {
        self.clusters.iter().find(|c| c.id == id)
    }

    pub fn relationship(&self, id: &str) -> Option<&Relationship> {
        self.relationships.iter().find(|r| r.id == id)
    }

    /// Cluster holding the instance, if any.
    pub fn cluster_of(&self, instance_id: &str) -> Option<&Cluster> {
        self.clusters.iter().find(|c| c.member_ids.iter().any(|m| m == instance_id))
    }

    /// Instance or cluster id.
    pub fn has_entity(&self, id: &str) -> bool {
        self.instance(id).is_some() || self.cluster(id).is_some()
    }

    pub fn entity_category(&self, id: &str) -> Option<&str> {
        self.instance(id).map(|i| i.category.as_str()).or_else(|| self.cluster(id).map(|c| c.category.as_str()))
    }

    /// Instance box, or the tight union of member boxes for a cluster.
    pub fn entity_bbox(&self, id: &str) -> Option<BBox> {
        if let Some(inst) = self.instance(id) {
            return Some(inst.bbox);
        }
        let cluster = self.cluster(id)?;
        cluster.member_ids.iter().filter_map(|m| self.instance(m).map(|i| i.bbox)).reduce(|a, b| a.union(&b))
    }

    /// First `{prefix}{n}` (n ≥ 1) not used by any entity of any kind.
    pub fn next_id(&self, prefix: &str) -> String {
        let used: HashSet<&str> = self
            .instances
            .iter()
            .map(|i| i.id.as_str())
            .chain(self.clusters.iter().map(|c| c.id.as_str()))
            .chain(self.regions.iter().map(|r| r.id.as_str()))
            .chain(self.relationships.iter().map(|r| r.id.as_str()))
            .collect();
        (1u64..).map(|n| format!("{prefix}{n}")).find(|id| !used.contains(id.as_str())).expect("id space exhausted")
    }

    pub(super) fn check_instance(&self, cfg: &ProjectConfig, inst: &Instance) -> Vec<Violation> {
        let mut out = Vec::new();
        if !cfg.has_category(&inst.category) {
            out.push(Violation::UnknownCategory { id: inst.id.clone(), category: inst.category.clone() });
        }
        if !inst.bbox.is_well_formed() {
            out.push(Violation::InvalidBBox { id: inst.id.clone() });
        } else if !inst.bbox.fits_in(self.image.width, self.image.height) {
            out.push(Violation::BBoxOutOfBounds { id: inst.id.clone() });
        }
        for av in &inst.attributes {
            match cfg.attribute_allows(&av.attribute, &av.value) {
                None => out.push(Violation::UnknownAttribute { id: inst.id.clone(), attribute: av.attribute.clone() }),
                Some(false) => out.push(Violation::UnknownAttributeValue {
                    id: inst.id.clone(),
                    attribute: av.attribute.clone(),
                    value: av.value.clone(),
                }),
                Some(true) => {}
            }
        }
        out
    }

    pub(super) fn check_region(&self, region: &Region) -> Option<Violation> {
        if !region.bbox.is_well_formed() {
            Some(Violation::InvalidBBox { id: region.id.clone() })
        } else if !region.bbox.fits_in(self.image.width, self.image.height) {
            Some(Violation::BBoxOutOfBounds { id: region.id.clone() })
        } else {
            None
        }
    }

    /// Endpoint, predicate and self-loop checks; not uniqueness.
    pub(super) fn check_relationship(&self, cfg: &ProjectConfig, rel: &Relationship) -> Vec<Violation> {
        let mut out = Vec::new();
        if rel.subject_ref == rel.object_ref {
            out.push(Violation::SelfLoop { id: rel.id.clone() });
        }
        for endpoint in [&rel.subject_ref, &rel.object_ref] {
            if !self.has_entity(endpoint) {
                out.push(Violation::DanglingEndpoint { id: rel.id.clone(), endpoint: endpoint.clone() });
            }
        }
        if !cfg.has_predicate(&rel.predicate) {
            out.push(Violation::UnknownPredicate { id: rel.id.clone(), predicate: rel.predicate.clone() });
        }
        out
    }

    pub fn add_instance(&mut self, cfg: &ProjectConfig, inst: Instance) -> Result<(), Violation> {
        if self.has_entity(&inst.id) {
            return Err(Violation::DuplicateId { id: inst.id });
        }
        if let Some(v) = self.check_instance(cfg, &inst).into_iter().next() {
            return Err(v);
        }
        insert_sorted(&mut self.instances, inst, |i| &i.id);
        Ok(())
    }

    /// Replaces an existing instance (category, box, attributes, mask).
    /// Fails with `MixedCategories` if the new category would break its cluster.
    pub fn update_instance(&mut self, cfg: &ProjectConfig, inst: Instance) -> Result<(), Violation> {
        let pos = self
            .instances
            .iter()
            .position(|i| i.id == inst.id)
            .ok_or_else(|| Violation::UnknownEntity { id: inst.id.clone() })?;
        if let Some(v) = self.check_instance(cfg, &inst).into_iter().next() {
            return Err(v);
        }
        if let Some(c) = self.cluster_of(&inst.id) {
            if c.category != inst.category {
                return Err(Violation::MixedCategories { id: c.id.clone() });
            }
        }
        self.instances[pos] = inst;
        Ok(())
    }

    /// Removes the instance, drops it from its cluster and removes every
    /// relationship that would reference it after expansion. A cluster left
    /// empty is deleted with its relationships. Returns removed relationships.
    pub fn delete_instance(&mut self, id: &str) -> Result<Vec<Relationship>, Violation> {
        let pos = self
            .instances
            .iter()
            .position(|i| i.id == id)
            .ok_or_else(|| Violation::UnknownEntity { id: id.to_string() })?;
        self.instances.remove(pos);
        let mut removed = self.take_relationships_touching(id);
        let mut emptied = Vec::new();
        for c in &mut self.clusters {
            c.member_ids.retain(|m| m != id);
            if c.member_ids.is_empty() {
                emptied.push(c.id.clone());
            }
        }
        for cid in emptied {
            removed.extend(self.delete_cluster(&cid)?);
        }
        Ok(removed)
    }

    fn take_relationships_touching(&mut self, id: &str) -> Vec<Relationship> {
        let (gone, kept): (Vec<_>, Vec<_>) = std::mem::take(&mut self.relationships)
            .into_iter()
            .partition(|r| r.subject_ref == id || r.object_ref == id);
        self.relationships = kept;
        gone
    }

    pub fn add_region(&mut self, region: Region) -> Result<(), Violation> {
        if self.regions.iter().any(|r| r.id == region.id) {
            return Err(Violation::DuplicateId { id: region.id });
        }
        if let Some(v) = self.check_region(&region) {
            return Err(v);
        }
        insert_sorted(&mut self.regions, region, |r| &r.id);
        Ok(())
    }

    pub fn delete_region(&mut self, id: &str) -> Result<Region, Violation> {
        let pos = self
            .regions
            .iter()
            .position(|r| r.id == id)
            .ok_or_else(|| Violation::UnknownEntity { id: id.to_string() })?;
        Ok(self.regions.remove(pos))
    }

    /// Groups existing, unclustered, same-category instances under `id`.
    pub fn make_cluster(&mut self, member_ids: &[String], id: &str) -> Result<&Cluster, Violation> {
        if member_ids.is_empty() {
            return Err(Violation::EmptyMemberList { id: id.to_string() });
        }
        if self.has_entity(id) {
            return Err(Violation::DuplicateId { id: id.to_string() });
        }
        let mut category: Option<&str> = None;
        let mut seen = HashSet::new();
        for m in member_ids {
            let inst =
                self.instance(m).ok_or_else(|| Violation::UnknownMember { id: id.to_string(), member: m.clone() })?;
            if !seen.insert(m.as_str()) {
                return Err(Violation::DuplicateId { id: m.clone() });
            }
            if let Some(c) = self.cluster_of(m) {
                return Err(Violation::MemberAlreadyClustered { member: m.clone(), cluster: c.id.clone() });
            }
            match category {
                None => category = Some(&inst.category),
                Some(c) if c != inst.category => return Err(Violation::MixedCategories { id: id.to_string() }),
                Some(_) => {}
            }
        }
        let mut members = member_ids.to_vec();
        members.sort();
        let cluster = Cluster {
            id: id.to_string(),
            category: category.expect("non-empty member list").to_string(),
            member_ids: members,
            extra: Extra::new(),
        };
        insert_sorted(&mut self.clusters, cluster, |c| &c.id);
        Ok(self.cluster(id).expect("just inserted"))
    }

    /// Dissolves the cluster and removes relationships that reference it.
    pub fn delete_cluster(&mut self, id: &str) -> Result<Vec<Relationship>, Violation> {
        let pos = self
            .clusters
            .iter()
            .position(|c| c.id == id)
            .ok_or_else(|| Violation::UnknownEntity { id: id.to_string() })?;
        self.clusters.remove(pos);
        Ok(self.take_relationships_touching(id))
    }

    pub fn add_relationship(&mut self, cfg: &ProjectConfig, rel: Relationship) -> Result<(), Violation> {
        if let Some(v) = self.check_relationship(cfg, &rel).into_iter().next() {
            return Err(v);
        }
        if self.relationships.iter().any(|r| r.id == rel.id) {
            return Err(Violation::DuplicateId { id: rel.id });
        }
        if let Some(existing) = self.relationships.iter().find(|r| r.triple() == rel.triple()) {
            return Err(Violation::DuplicateTriple { id: rel.id, existing: existing.id.clone() });
        }
        insert_sorted(&mut self.relationships, rel, |r| &r.id);
        Ok(())
    }

    pub fn delete_relationship(&mut self, id: &str) -> Result<Relationship, Violation> {
        let pos = self
            .relationships
            .iter()
            .position(|r| r.id == id)
            .ok_or_else(|| Violation::UnknownEntity { id: id.to_string() })?;
        Ok(self.relationships.remove(pos))
    }

    /// Replaces every cluster-endpoint relationship with one relationship per
    /// member (Cartesian product when both ends are clusters) and drops the
    /// clusters. Direct relationships win over expanded duplicates; among
    /// expanded ones the lower source id wins. Expanded relationships get ids
    /// `{rid}/{member}` or `{rid}/{subject}/{object}`.
    pub fn expand_clusters(&self) -> AnnotationDocument {
        let mut out = self.clone();
        if self.clusters.is_empty() {
            return out;
        }
        out.clusters.clear();

        let members: HashMap<&str, &[String]> =
            self.clusters.iter().map(|c| (c.id.as_str(), c.member_ids.as_slice())).collect();
        let side = |r: &str| -> Vec<String> {
            match members.get(r) {
                Some(ms) => ms.to_vec(),
                None => vec![r.to_string()],
            }
        };
        let is_clustered = |r: &Relationship| {
            members.contains_key(r.subject_ref.as_str()) || members.contains_key(r.object_ref.as_str())
        };

        let (expanding, direct): (Vec<&Relationship>, Vec<&Relationship>) =
            self.relationships.iter().partition(|r| is_clustered(r));
        let mut used_ids: HashSet<String> = direct.iter().map(|r| r.id.clone()).collect();
        let mut triples: HashSet<(String, String, String)> =
            direct.iter().map(|r| (r.subject_ref.clone(), r.predicate.clone(), r.object_ref.clone())).collect();
        let mut rels: Vec<Relationship> = direct.into_iter().cloned().collect();

        for r in expanding {
            let both = members.contains_key(r.subject_ref.as_str()) && members.contains_key(r.object_ref.as_str());
            for s in side(&r.subject_ref) {
                for o in side(&r.object_ref) {
                    if s == o {
                        continue;
                    }
                    if !triples.insert((s.clone(), r.predicate.clone(), o.clone())) {
                        continue;
                    }
                    let mut id = if both {
                        format!("{}/{}/{}", r.id, s, o)
                    } else if members.contains_key(r.subject_ref.as_str()) {
                        format!("{}/{}", r.id, s)
                    } else {
                        format!("{}/{}", r.id, o)
                    };
                    while used_ids.contains(&id) {
                        id.push('_');
                    }
                    used_ids.insert(id.clone());
                    rels.push(Relationship {
                        id,
                        subject_ref: s.clone(),
                        predicate: r.predicate.clone(),
                        object_ref: o,
                        features: None,
                        extra: r.extra.clone(),
                    });
                }
            }
        }
        rels.sort_by(|a, b| a.id.cmp(&b.id));
        out.relationships = rels;
        out
    }

    /// Ids of instances that are an endpoint of at least one relationship
    /// after cluster expansion.
    pub fn instances_in_scene_graph(&self) -> BTreeSet<String> {
        self.expand_clusters()
            .relationships
            .iter()
            .flat_map(|r| [r.subject_ref.clone(), r.object_ref.clone()])
            .filter(|id| self.instance(id).is_some())
            .collect()
    }

    /// Unclustered instances plus clusters, sorted by id.
    pub fn visible_entities(&self) -> Vec<&str> {
        let mut ids: Vec<&str> = self
            .instances
            .iter()
            .filter(|i| self.cluster_of(&i.id).is_none())
            .map(|i| i.id.as_str())
            .chain(self.clusters.iter().map(|c| c.id.as_str()))
            .collect();
        ids.sort();
        ids
    }

    /// True if some region contains both entities, or if there are no regions.
    pub fn pair_in_common_region(&self, a: &str, b: &str) -> bool {
        if self.regions.is_empty() {
            return true;
        }
        match (self.entity_bbox(a), self.entity_bbox(b)) {
            (Some(ba), Some(bb)) => self.regions.iter().any(|r| r.bbox.contains(&ba) && r.bbox.contains(&bb)),
            _ => false,
        }
    }

    /// Ordered pairs of distinct visible entities that share a region
    /// (all ordered pairs when the document has no regions).
    pub fn pairs_in_regions(&self) -> Vec<(String, String)> {
        let ents = self.visible_entities();
        let boxes: Vec<Option<BBox>> = ents.iter().map(|e| self.entity_bbox(e)).collect();
        let region_sets: Vec<Vec<bool>> = boxes
            .iter()
            .map(|b| self.regions.iter().map(|r| b.is_some_and(|b| r.bbox.contains(&b))).collect())
            .collect();
        let mut pairs = Vec::new();
        for (i, a) in ents.iter().enumerate() {
            for (j, b) in ents.iter().enumerate() {
                if i == j {
                    continue;
                }
                let shared =
                    self.regions.is_empty() || region_sets[i].iter().zip(&region_sets[j]).any(|(x, y)| *x && *y);
                if shared {
                    pairs.push((a.to_string(), b.to_string()));
                }
            }
        }
        pairs
    }

    /// Relationships whose endpoints share no region. Advisory only.
    pub fn relationships_outside_regions(&self) -> Vec<String> {
        self.relationships
            .iter()
            .filter(|r| !self.pair_in_common_region(&r.subject_ref, &r.object_ref))
            .map(|r| r.id.clone())
            .collect()
    }
}
