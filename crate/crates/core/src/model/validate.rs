// SPDX-License-Identifier: Apache-2.0

use std::collections::{HashMap, HashSet};

use super::{AnnotationDocument, Violation};
use crate::config::ProjectConfig;

impl AnnotationDocument {
    /// Every invariant violation in the document. Empty iff the document is
    /// well-formed against `cfg`.
    pub fn validate(&self, cfg: &ProjectConfig) -> Vec<Violation> {
        let mut out = Vec::new();

        let mut node_ids = HashSet::new();
        for inst in &self.instances {
            if !node_ids.insert(inst.id.as_str()) {
                out.push(Violation::DuplicateId { id: inst.id.clone() });
            }
            out.extend(self.check_instance(cfg, inst));
        }

        let mut owner: HashMap<&str, &str> = HashMap::new();
        for cluster in &self.clusters {
            if !node_ids.insert(cluster.id.as_str()) {
                out.push(Violation::DuplicateId { id: cluster.id.clone() });
            }
            if !cfg.has_category(&cluster.category) {
                out.push(Violation::UnknownCategory { id: cluster.id.clone(), category: cluster.category.clone() });
            }
            if cluster.member_ids.is_empty() {
                out.push(Violation::EmptyMemberList { id: cluster.id.clone() });
            }
            let mut mixed = false;
            for m in &cluster.member_ids {
                match self.instance(m) {
                    None => out.push(Violation::UnknownMember { id: cluster.id.clone(), member: m.clone() }),
                    Some(inst) => mixed |= inst.category != cluster.category,
                }
                if let Some(prev) = owner.insert(m.as_str(), cluster.id.as_str()) {
                    out.push(Violation::MemberAlreadyClustered { member: m.clone(), cluster: prev.to_string() });
                }
            }
            if mixed {
                out.push(Violation::MixedCategories { id: cluster.id.clone() });
            }
        }

        let mut region_ids = HashSet::new();
        for region in &self.regions {
            if !region_ids.insert(region.id.as_str()) {
                out.push(Violation::DuplicateId { id: region.id.clone() });
            }
            out.extend(self.check_region(region));
        }

        let mut rel_ids = HashSet::new();
        let mut triples: HashMap<(&str, &str, &str), &str> = HashMap::new();
        for rel in &self.relationships {
            if !rel_ids.insert(rel.id.as_str()) {
                out.push(Violation::DuplicateId { id: rel.id.clone() });
            }
            out.extend(self.check_relationship(cfg, rel));
            if let Some(existing) = triples.insert(rel.triple(), rel.id.as_str()) {
                out.push(Violation::DuplicateTriple { id: rel.id.clone(), existing: existing.to_string() });
            }
        }
        out
    }
}
