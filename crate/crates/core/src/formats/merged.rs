// SPDX-License-Identifier: Apache-2.0

//! Whole-dataset file in the VG150 flattened-array layout.
//!
//! Boxes, labels, attributes and relationships of all images live in global
//! arrays; `img_to_first_box`/`img_to_last_box` and
//! `img_to_first_rel`/`img_to_last_rel` give each image's inclusive index
//! range, `-1` marking an image without entries. Relationship rows are
//! `[subject_box, object_box, predicate]` with global box indices. Label,
//! predicate and attribute indices are 1-based over the sorted vocabulary;
//! label 0 is the background category.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{decode, encode_compact, ConversionReport, FormatError};
use crate::config::{ProjectConfig, BACKGROUND_LABEL};
use crate::model::{AnnotationDocument, AttributeValue, BBox, Instance, Relationship};
use crate::recommender::FeatureVector;

pub const SPLIT_TRAIN: u8 = 0;
pub const SPLIT_VAL: u8 = 1;
pub const SPLIT_TEST: u8 = 2;

/// image_id → `train` | `val` | `test`. Images not listed are `train`.
pub type SplitAssignment = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergedImage {
    pub image_id: String,
    pub width: u32,
    pub height: u32,
    pub file_name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergedDataset {
    pub idx_to_label: BTreeMap<u32, String>,
    pub label_to_idx: BTreeMap<String, u32>,
    pub idx_to_predicate: BTreeMap<u32, String>,
    pub predicate_to_idx: BTreeMap<String, u32>,
    pub idx_to_attribute: BTreeMap<u32, String>,
    #[serde(default)]
    pub attribute_to_idx: BTreeMap<String, u32>,
    pub images: Vec<MergedImage>,
    /// Per image: 0 train, 1 val, 2 test.
    pub split: Vec<u8>,
    pub img_to_first_box: Vec<i64>,
    pub img_to_last_box: Vec<i64>,
    pub img_to_first_rel: Vec<i64>,
    pub img_to_last_rel: Vec<i64>,
    pub boxes: Vec<BBox>,
    pub labels: Vec<u32>,
    pub attributes: Vec<Vec<u32>>,
    pub relationships: Vec<[u64; 3]>,
    /// Instance ids per box; generated on import when absent.
    #[serde(default)]
    pub box_ids: Vec<String>,
    #[serde(default)]
    pub box_mask_refs: Vec<Option<String>>,
    #[serde(default)]
    pub rel_ids: Vec<String>,
    #[serde(default)]
    pub rel_features: Vec<Option<FeatureVector>>,
}

/// `name:value` as used in the attribute maps.
fn attribute_key(av: &AttributeValue) -> String {
    format!("{}:{}", av.attribute, av.value)
}

struct Vocabulary {
    labels: BTreeMap<String, u32>,
    predicates: BTreeMap<String, u32>,
    attributes: BTreeMap<String, u32>,
}

impl Vocabulary {
    fn from_config(cfg: &ProjectConfig) -> Self {
        let mut cats: Vec<&String> = cfg.object_categories.iter().filter(|c| *c != BACKGROUND_LABEL).collect();
        cats.sort();
        let mut labels: BTreeMap<String, u32> = cats.into_iter().cloned().zip(1..).collect();
        if cfg.has_category(BACKGROUND_LABEL) {
            labels.insert(BACKGROUND_LABEL.to_string(), 0);
        }
        let mut preds: Vec<&String> = cfg.predicates.iter().collect();
        preds.sort();
        let predicates = preds.into_iter().cloned().zip(1..).collect();
        let attrs: Vec<String> = cfg
            .attributes
            .iter()
            .flat_map(|(name, vals)| vals.iter().map(move |v| attribute_key(&AttributeValue::new(name, v))))
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        let attributes = attrs.into_iter().zip(1..).collect();
        Vocabulary { labels, predicates, attributes }
    }
}

fn invert(map: &BTreeMap<String, u32>) -> BTreeMap<u32, String> {
    map.iter().map(|(k, v)| (*v, k.clone())).collect()
}

fn split_code(image_id: &str, split: &SplitAssignment) -> Result<u8, FormatError> {
    match split.get(image_id).map(String::as_str) {
        None | Some("train") => Ok(SPLIT_TRAIN),
        Some("val") => Ok(SPLIT_VAL),
        Some("test") => Ok(SPLIT_TEST),
        Some(other) => Err(FormatError::UnknownSplitLabel { image_id: image_id.to_string(), label: other.to_string() }),
    }
}

fn range(first: usize, end: usize) -> (i64, i64) {
    if end > first {
        (first as i64, end as i64 - 1)
    } else {
        (-1, -1)
    }
}

/// Builds the merged dataset. Documents are ordered by image id, clusters
/// are expanded and regions dropped; the report lists every such loss.
pub fn export_merged(
    docs: &[AnnotationDocument],
    cfg: &ProjectConfig,
    split: &SplitAssignment,
) -> Result<(MergedDataset, ConversionReport), FormatError> {
    let mut order: Vec<&AnnotationDocument> = docs.iter().collect();
    order.sort_by(|a, b| a.image_id().cmp(b.image_id()));
    for pair in order.windows(2) {
        if pair[0].image_id() == pair[1].image_id() {
            return Err(FormatError::DuplicateImageId(pair[0].image_id().to_string()));
        }
    }

    let vocab = Vocabulary::from_config(cfg);
    let mut out = MergedDataset {
        idx_to_label: invert(&vocab.labels),
        label_to_idx: vocab.labels.clone(),
        idx_to_predicate: invert(&vocab.predicates),
        predicate_to_idx: vocab.predicates.clone(),
        idx_to_attribute: invert(&vocab.attributes),
        attribute_to_idx: vocab.attributes.clone(),
        images: Vec::with_capacity(order.len()),
        split: Vec::with_capacity(order.len()),
        img_to_first_box: Vec::new(),
        img_to_last_box: Vec::new(),
        img_to_first_rel: Vec::new(),
        img_to_last_rel: Vec::new(),
        boxes: Vec::new(),
        labels: Vec::new(),
        attributes: Vec::new(),
        relationships: Vec::new(),
        box_ids: Vec::new(),
        box_mask_refs: Vec::new(),
        rel_ids: Vec::new(),
        rel_features: Vec::new(),
    };
    let mut report = ConversionReport::default();

    for doc in order {
        let image_id = doc.image_id();
        out.split.push(split_code(image_id, split)?);
        report.extend(ConversionReport::for_merged_export(doc));
        let mut flat = doc.expand_clusters();
        flat.canonicalize();
        out.images.push(MergedImage {
            image_id: image_id.to_string(),
            width: doc.image.width,
            height: doc.image.height,
            file_name: doc.image.file_name.clone(),
        });

        let first_box = out.boxes.len();
        let mut box_index: HashMap<&str, u64> = HashMap::new();
        for inst in &flat.instances {
            let label = *vocab.labels.get(&inst.category).ok_or_else(|| {
                FormatError::UnresolvedLabel(format!("category `{}` in image `{image_id}`", inst.category))
            })?;
            let mut attrs = Vec::with_capacity(inst.attributes.len());
            for av in &inst.attributes {
                let key = attribute_key(av);
                let idx = vocab
                    .attributes
                    .get(&key)
                    .ok_or_else(|| FormatError::UnresolvedLabel(format!("attribute `{key}` in image `{image_id}`")))?;
                attrs.push(*idx);
            }
            attrs.sort_unstable();
            box_index.insert(&inst.id, out.boxes.len() as u64);
            out.boxes.push(inst.bbox);
            out.labels.push(label);
            out.attributes.push(attrs);
            out.box_ids.push(inst.id.clone());
            out.box_mask_refs.push(inst.mask_ref.clone());
        }
        let (fb, lb) = range(first_box, out.boxes.len());
        out.img_to_first_box.push(fb);
        out.img_to_last_box.push(lb);

        let first_rel = out.relationships.len();
        for rel in &flat.relationships {
            let endpoint = |r: &str| {
                box_index.get(r).copied().ok_or_else(|| {
                    FormatError::Validation(vec![crate::model::Violation::DanglingEndpoint {
                        id: rel.id.clone(),
                        endpoint: r.to_string(),
                    }])
                })
            };
            let pred = *vocab.predicates.get(&rel.predicate).ok_or_else(|| {
                FormatError::UnresolvedLabel(format!("predicate `{}` in image `{image_id}`", rel.predicate))
            })?;
            out.relationships.push([endpoint(&rel.subject_ref)?, endpoint(&rel.object_ref)?, u64::from(pred)]);
            out.rel_ids.push(rel.id.clone());
            out.rel_features.push(rel.features);
        }
        let (fr, lr) = range(first_rel, out.relationships.len());
        out.img_to_first_rel.push(fr);
        out.img_to_last_rel.push(lr);
    }
    Ok((out, report))
}

/// Checks that `first`/`last` partition `0..total` in image order and returns
/// each image's half-open range.
fn partition(first: &[i64], last: &[i64], total: usize, what: &str) -> Result<Vec<(usize, usize)>, FormatError> {
    let mut next = 0usize;
    let mut out = Vec::with_capacity(first.len());
    for (img, (&f, &l)) in first.iter().zip(last).enumerate() {
        if f == -1 && l == -1 {
            out.push((next, next));
            continue;
        }
        if f < 0 || l < f {
            return Err(FormatError::IndexRange(format!("image {img}: {what} range [{f}, {l}] is malformed")));
        }
        let (f, l) = (f as usize, l as usize);
        if f != next {
            return Err(FormatError::IndexRange(format!("image {img}: {what} range starts at {f}, expected {next}")));
        }
        if l >= total {
            return Err(FormatError::IndexRange(format!(
                "image {img}: {what} range ends at {l} but only {total} entries exist"
            )));
        }
        out.push((f, l + 1));
        next = l + 1;
    }
    if next != total {
        return Err(FormatError::IndexRange(format!("{what} ranges cover {next} of {total} entries")));
    }
    Ok(out)
}

fn check_len(name: &str, len: usize, expected: usize) -> Result<(), FormatError> {
    if len == expected {
        Ok(())
    } else {
        Err(FormatError::Schema {
            path: name.to_string(),
            message: format!("expected {expected} entries, found {len}"),
        })
    }
}

/// Splits a merged dataset back into per-image documents, validated against
/// `cfg`. Clusters and regions are not representable and come back empty.
pub fn import_merged(
    data: &MergedDataset,
    cfg: &ProjectConfig,
) -> Result<(Vec<AnnotationDocument>, ConversionReport), FormatError> {
    let n_img = data.images.len();
    for (name, len) in [
        ("split", data.split.len()),
        ("img_to_first_box", data.img_to_first_box.len()),
        ("img_to_last_box", data.img_to_last_box.len()),
        ("img_to_first_rel", data.img_to_first_rel.len()),
        ("img_to_last_rel", data.img_to_last_rel.len()),
    ] {
        check_len(name, len, n_img)?;
    }
    let n_box = data.boxes.len();
    check_len("labels", data.labels.len(), n_box)?;
    check_len("attributes", data.attributes.len(), n_box)?;
    if !data.box_ids.is_empty() {
        check_len("box_ids", data.box_ids.len(), n_box)?;
    }
    if !data.box_mask_refs.is_empty() {
        check_len("box_mask_refs", data.box_mask_refs.len(), n_box)?;
    }
    let n_rel = data.relationships.len();
    if !data.rel_ids.is_empty() {
        check_len("rel_ids", data.rel_ids.len(), n_rel)?;
    }
    if !data.rel_features.is_empty() {
        check_len("rel_features", data.rel_features.len(), n_rel)?;
    }

    let box_ranges = partition(&data.img_to_first_box, &data.img_to_last_box, n_box, "box")?;
    let rel_ranges = partition(&data.img_to_first_rel, &data.img_to_last_rel, n_rel, "relationship")?;

    let mut docs = Vec::with_capacity(n_img);
    for (img, meta) in data.images.iter().enumerate() {
        let (b0, b1) = box_ranges[img];
        let (r0, r1) = rel_ranges[img];
        let mut doc = AnnotationDocument::new(&meta.image_id, meta.width, meta.height, &meta.file_name);
        let box_id = |k: usize| data.box_ids.get(k).cloned().unwrap_or_else(|| format!("i{}", k - b0 + 1));

        for k in b0..b1 {
            let label = data.labels[k];
            let category = data
                .idx_to_label
                .get(&label)
                .ok_or_else(|| FormatError::UnresolvedLabel(format!("label index {label} (box {k})")))?;
            if !cfg.has_category(category) {
                return Err(FormatError::UnresolvedLabel(format!("category `{category}` not in config")));
            }
            let mut inst = Instance::new(box_id(k), category.clone(), data.boxes[k]);
            for idx in &data.attributes[k] {
                let key = data
                    .idx_to_attribute
                    .get(idx)
                    .ok_or_else(|| FormatError::UnresolvedLabel(format!("attribute index {idx} (box {k})")))?;
                let (name, value) = key
                    .split_once(':')
                    .ok_or_else(|| FormatError::UnresolvedLabel(format!("attribute `{key}` is not `name:value`")))?;
                inst.attributes.insert(AttributeValue::new(name, value));
            }
            inst.mask_ref = data.box_mask_refs.get(k).cloned().flatten();
            doc.instances.push(inst);
        }

        for k in r0..r1 {
            let [s, o, p] = data.relationships[k];
            for endpoint in [s, o] {
                if !(b0 as u64..b1 as u64).contains(&endpoint) {
                    return Err(FormatError::IndexRange(format!(
                        "relationship {k} references box {endpoint} outside image `{}` range",
                        meta.image_id
                    )));
                }
            }
            let predicate = u32::try_from(p)
                .ok()
                .and_then(|p| data.idx_to_predicate.get(&p))
                .ok_or_else(|| FormatError::UnresolvedLabel(format!("predicate index {p} (relationship {k})")))?;
            let id = data.rel_ids.get(k).cloned().unwrap_or_else(|| format!("r{}", k - r0 + 1));
            let mut rel = Relationship::new(id, box_id(s as usize), predicate.clone(), box_id(o as usize));
            rel.features = data.rel_features.get(k).copied().flatten();
            doc.relationships.push(rel);
        }

        doc.canonicalize();
        let violations = doc.validate(cfg);
        if !violations.is_empty() {
            return Err(FormatError::Validation(violations));
        }
        docs.push(doc);
    }
    Ok((docs, ConversionReport::default()))
}

pub fn load_merged(bytes: &[u8]) -> Result<MergedDataset, FormatError> {
    decode(bytes)
}

/// Compact single-line JSON with a trailing newline.
pub fn save_merged(data: &MergedDataset) -> Vec<u8> {
    encode_compact(data)
}
