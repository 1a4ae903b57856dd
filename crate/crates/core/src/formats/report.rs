// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use crate::model::AnnotationDocument;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityRef {
    pub image_id: String,
    pub id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterExpansion {
    pub image_id: String,
    pub cluster_id: String,
    pub members: usize,
    /// Stored relationships with this cluster as an endpoint.
    pub relationships: usize,
}

/// A schema-external key that the target format has no slot for.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedField {
    pub image_id: String,
    /// `document`, `image`, or the id of the entity carrying the key.
    pub entity: String,
    pub field: String,
}

/// What a conversion could not carry over verbatim. Empty iff lossless.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConversionReport {
    pub dropped_regions: Vec<EntityRef>,
    pub expanded_clusters: Vec<ClusterExpansion>,
    pub dropped_fields: Vec<DroppedField>,
}

impl ConversionReport {
    pub fn is_lossless(&self) -> bool {
        self.dropped_regions.is_empty() && self.expanded_clusters.is_empty() && self.dropped_fields.is_empty()
    }

    pub fn extend(&mut self, other: ConversionReport) {
        self.dropped_regions.extend(other.dropped_regions);
        self.expanded_clusters.extend(other.expanded_clusters);
        self.dropped_fields.extend(other.dropped_fields);
    }

    /// Everything the merged layout cannot represent for `doc`.
    pub(crate) fn for_merged_export(doc: &AnnotationDocument) -> Self {
        let image_id = doc.image_id().to_string();
        let mut report = ConversionReport::default();
        for region in &doc.regions {
            report.dropped_regions.push(EntityRef { image_id: image_id.clone(), id: region.id.clone() });
        }
        for cluster in &doc.clusters {
            let relationships =
                doc.relationships.iter().filter(|r| r.subject_ref == cluster.id || r.object_ref == cluster.id).count();
            report.expanded_clusters.push(ClusterExpansion {
                image_id: image_id.clone(),
                cluster_id: cluster.id.clone(),
                members: cluster.member_ids.len(),
                relationships,
            });
        }
        let mut drop = |entity: &str, keys: &mut dyn Iterator<Item = &String>| {
            for k in keys {
                report.dropped_fields.push(DroppedField {
                    image_id: image_id.clone(),
                    entity: entity.to_string(),
                    field: k.clone(),
                });
            }
        };
        drop("document", &mut doc.extra.keys());
        drop("image", &mut doc.image.extra.keys());
        for i in &doc.instances {
            drop(&i.id, &mut i.extra.keys());
        }
        // Cluster and region keys are reported with their entity.
        for r in &doc.relationships {
            drop(&r.id, &mut r.extra.keys());
        }
        report
    }
}
