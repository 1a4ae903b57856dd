// SPDX-License-Identifier: Apache-2.0

//! Seeded random documents.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use scenegraph_core::model::{AnnotationDocument, BBox, Instance, Region, Relationship};
use scenegraph_core::recommender::extract_with;
use scenegraph_core::ProjectConfig;

#[derive(Debug, Clone, Copy)]
pub struct Shape {
    pub max_instances: usize,
    pub clusters: bool,
    pub regions: bool,
    /// Unknown keys on the document, image, instances and relationships.
    pub extras: bool,
}

impl Shape {
    pub const FULL: Shape = Shape { max_instances: 12, clusters: true, regions: true, extras: true };
    /// Exactly representable in the merged format.
    pub const FLAT: Shape = Shape { max_instances: 12, clusters: false, regions: false, extras: false };
}

pub fn bbox(rng: &mut ChaCha8Rng, w: u32, h: u32) -> BBox {
    let x1 = rng.gen_range(0..w - 1);
    let y1 = rng.gen_range(0..h - 1);
    let x2 = rng.gen_range(x1 + 1..=w);
    let y2 = rng.gen_range(y1 + 1..=h);
    BBox::new(x1, y1, x2, y2)
}

pub fn document(rng: &mut ChaCha8Rng, cfg: &ProjectConfig, image_id: &str, shape: Shape) -> AnnotationDocument {
    let (w, h) = (rng.gen_range(2..2000), rng.gen_range(2..1200));
    let mut doc = AnnotationDocument::new(image_id, w, h, format!("{image_id}.png"));
    if shape.extras && rng.gen_bool(0.3) {
        doc.extra.insert("annotator".into(), json!(format!("user{}", rng.gen_range(0..5))));
        doc.image.extra.insert("camera".into(), json!({"fov": rng.gen_range(30..120)}));
    }
    // Few categories so clusters have same-category candidates.
    let cats: Vec<&String> = cfg.object_categories.choose_multiple(rng, 4).collect();
    let orientations = &cfg.attributes["orientation"];
    let n = rng.gen_range(0..=shape.max_instances);
    for k in 0..n {
        let mut inst = Instance::new(format!("i{k}"), cats.choose(rng).unwrap().as_str(), bbox(rng, w, h));
        if rng.gen_bool(0.3) {
            inst = inst.with_attribute("orientation", orientations.choose(rng).unwrap());
        }
        if rng.gen_bool(0.1) {
            inst.mask_ref = Some(format!("masks/{image_id}/{k}.png"));
        }
        if shape.extras && rng.gen_bool(0.1) {
            inst.extra.insert("score".into(), json!(rng.gen_range(0..100)));
        }
        doc.add_instance(cfg, inst).unwrap();
    }
    if shape.clusters {
        for c in 0..rng.gen_range(0..3) {
            let Some(cat) = cats.choose(rng) else { break };
            let free: Vec<String> = doc
                .instances
                .iter()
                .filter(|i| &i.category == *cat && doc.cluster_of(&i.id).is_none())
                .map(|i| i.id.clone())
                .collect();
            if free.len() >= 2 {
                let take = rng.gen_range(2..=free.len());
                let members: Vec<String> = free.choose_multiple(rng, take).cloned().collect();
                doc.make_cluster(&members, &format!("c{c}")).unwrap();
            }
        }
    }
    if shape.regions {
        for g in 0..rng.gen_range(0..3) {
            doc.add_region(Region::new(format!("g{g}"), bbox(rng, w, h))).unwrap();
        }
    }
    let visible: Vec<String> = doc.visible_entities().into_iter().map(str::to_string).collect();
    if visible.len() >= 2 {
        for k in 0..rng.gen_range(0..visible.len() * 2) {
            let s = visible.choose(rng).unwrap();
            let o = visible.choose(rng).unwrap();
            let mut rel = Relationship::new(
                format!("r{k}"),
                s.as_str(),
                cfg.predicates.choose(rng).unwrap().as_str(),
                o.as_str(),
            );
            if s != o && rng.gen_bool(0.7) {
                let (sb, ob) = (doc.entity_bbox(s).unwrap(), doc.entity_bbox(o).unwrap());
                rel.features = Some(extract_with(&cfg.features, &sb, &ob));
            }
            if shape.extras && rng.gen_bool(0.1) {
                rel.extra.insert("confidence".into(), json!(0.5));
            }
            // Self loops and duplicate triples are rejected; skip them.
            let _ = doc.add_relationship(cfg, rel);
        }
    }
    doc
}
