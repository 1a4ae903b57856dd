// SPDX-License-Identifier: Apache-2.0

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::log::{append_record, apply, prior_records, read_log, LogRecord, Mutation};
use super::store::{is_valid_image_id, write_atomic, ProjectPaths};
use super::ServiceError;
use crate::config::ProjectConfig;
use crate::formats::{
    export_merged, load_config, load_per_image, save_merged, save_per_image, ConversionReport, SplitAssignment,
};
use crate::model::{AnnotationDocument, AttributeValue, BBox, Instance, Region, Relationship, Violation};
use crate::recommender::{
    extract_with, recommend, FeatureVector, PairKey, PriorDatabase, PriorSnapshot, Recommendation,
};
use crate::stats::{compute_metrics, DatasetMetrics};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpenMode {
    /// Fix what can be fixed: restore files from the log, truncate a torn
    /// log tail, recount the prior database.
    Repair,
    /// Report problems without touching the directory. Mutations fail.
    ReadOnly,
}

/// Where an injected crash interrupts a mutation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FaultPoint {
    AfterLogAppend,
    AfterDocWrite,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Issue {
    pub code: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub image_id: Option<String>,
    pub message: String,
    pub repaired: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpenReport {
    pub issues: Vec<Issue>,
}

impl OpenReport {
    pub fn is_clean(&self) -> bool {
        self.issues.is_empty()
    }

    fn push(&mut self, code: &str, image_id: Option<&str>, message: String, repaired: bool) {
        tracing::warn!(code, image_id, repaired, "{message}");
        self.issues.push(Issue { code: code.to_string(), image_id: image_id.map(str::to_string), message, repaired });
    }
}

#[derive(Debug, Clone)]
struct ImageEntry {
    doc: AnnotationDocument,
    bitmap: Option<PathBuf>,
    /// The log holds this image's history (starting with a full snapshot).
    logged: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageSummary {
    pub image_id: String,
    pub width: u32,
    pub height: u32,
    pub file_name: String,
    pub has_bitmap: bool,
    pub instances: usize,
    pub clusters: usize,
    pub regions: usize,
    pub relationships: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewInstance {
    #[serde(default)]
    pub id: Option<String>,
    pub category: String,
    pub bbox: BBox,
    #[serde(default)]
    pub attributes: BTreeSet<AttributeValue>,
    #[serde(default)]
    pub mask_ref: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewRegion {
    #[serde(default)]
    pub id: Option<String>,
    pub bbox: BBox,
    #[serde(default)]
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewCluster {
    #[serde(default)]
    pub id: Option<String>,
    pub member_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecommendRequest {
    pub subject_ref: String,
    pub object_ref: String,
    #[serde(default = "default_k")]
    pub k: usize,
    /// Skip the shared-region check.
    #[serde(default)]
    pub override_regions: bool,
}

fn default_k() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecommendResponse {
    pub subject_ref: String,
    pub object_ref: String,
    pub pair: PairKey,
    pub features: FeatureVector,
    pub recommendations: Vec<Recommendation>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotateRequest {
    #[serde(default)]
    pub id: Option<String>,
    pub subject_ref: String,
    pub predicate: String,
    pub object_ref: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotateResponse {
    pub id: String,
    pub features: FeatureVector,
    /// Advisory codes, e.g. `PairOutsideRegions`.
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Instance,
    Cluster,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphNode {
    pub id: String,
    pub kind: NodeKind,
    pub category: String,
    pub attributes: Vec<AttributeValue>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub members: Vec<String>,
    /// Cluster holding this instance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphEdge {
    pub id: String,
    pub subject: String,
    pub predicate: String,
    pub object: String,
}

/// Stored scene graph of one image; cluster edges are not expanded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneGraph {
    pub image_id: String,
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<GraphEdge>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExportFormat {
    Merged,
    PerImage,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportResult {
    pub format: ExportFormat,
    pub path: PathBuf,
    pub images: usize,
    pub report: ConversionReport,
}

/// An open project directory.
#[derive(Debug)]
pub struct Project {
    paths: ProjectPaths,
    mode: OpenMode,
    config: ProjectConfig,
    images: BTreeMap<String, ImageEntry>,
    prior: PriorDatabase,
    next_seq: u64,
    fault: Option<FaultPoint>,
}

fn bitmap_dimensions(path: &Path) -> Result<(u32, u32), String> {
    image::image_dimensions(path).map_err(|e| e.to_string())
}

fn file_name_of(path: &Path) -> String {
    path.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string()
}

impl Project {
    /// Opens `root`, replaying the mutation log and checking the prior
    /// database against a recount of the stored relationships.
    pub fn open(root: impl Into<PathBuf>, mode: OpenMode) -> Result<(Project, OpenReport), ServiceError> {
        let paths = ProjectPaths::new(root);
        let repair = mode == OpenMode::Repair;
        let mut report = OpenReport::default();

        let cfg_path = paths.config();
        let cfg_bytes = match fs::read(&cfg_path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(ServiceError::MissingConfig(cfg_path.display().to_string()));
            }
            Err(e) => return Err(ServiceError::storage(&cfg_path, e)),
        };
        let config = load_config(&cfg_bytes).map_err(ServiceError::Config)?;

        // Bitmaps.
        let mut bitmaps: BTreeMap<String, (PathBuf, u32, u32)> = BTreeMap::new();
        for (id, path) in paths.bitmaps().map_err(|e| ServiceError::storage(&paths.images(), e))? {
            if !is_valid_image_id(&id) {
                report.push("InvalidImageId", Some(&id), format!("skipping {}", path.display()), false);
                continue;
            }
            match bitmap_dimensions(&path) {
                Ok((w, h)) => {
                    bitmaps.insert(id, (path, w, h));
                }
                Err(e) => report.push("UnreadableImage", Some(&id), format!("{}: {e}", path.display()), false),
            }
        }

        // Annotation files. Failures are fatal only for images the log
        // cannot restore.
        let mut files: BTreeMap<String, (Vec<u8>, Result<AnnotationDocument, String>)> = BTreeMap::new();
        let ann_files = paths.annotation_files().map_err(|e| ServiceError::storage(&paths.annotations(), e))?;
        for path in ann_files {
            let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            let bytes = fs::read(&path).map_err(|e| ServiceError::storage(&path, e))?;
            let parsed = load_per_image(&bytes, &config).map_err(|e| e.to_string()).and_then(|doc| {
                if doc.image_id() == id {
                    Ok(doc)
                } else {
                    Err(format!("file name does not match image_id `{}`", doc.image_id()))
                }
            });
            files.insert(id, (bytes, parsed));
        }

        // Log replay.
        let log_path = paths.log();
        let contents = read_log(&log_path)?;
        if let Some(len) = contents.torn_tail_at {
            if repair {
                let f = fs::OpenOptions::new()
                    .write(true)
                    .open(&log_path)
                    .map_err(|e| ServiceError::storage(&log_path, e))?;
                f.set_len(len).and_then(|_| f.sync_all()).map_err(|e| ServiceError::storage(&log_path, e))?;
            }
            report.push("TornLogTail", None, format!("incomplete final record at byte {len}"), repair);
        }
        let replayed = replay(&config, &contents.records)?;
        let next_seq = contents.records.last().map_or(1, |r| r.seq + 1);

        // Reconcile.
        let ids: BTreeSet<String> = bitmaps.keys().chain(files.keys()).chain(replayed.keys()).cloned().collect();
        let mut images = BTreeMap::new();
        for id in ids {
            let bitmap = bitmaps.get(&id).map(|(p, _, _)| p.clone());
            let file = files.remove(&id);
            let (doc, logged) = if let Some(doc) = replayed.get(&id) {
                let canonical = save_per_image(doc);
                let stale = match &file {
                    None => Some("missing".to_string()),
                    Some((bytes, _)) if *bytes != canonical => Some("differs from the log".to_string()),
                    _ => None,
                };
                if let Some(why) = stale {
                    if repair {
                        let p = paths.annotation_file(&id);
                        write_atomic(&p, &canonical).map_err(|e| ServiceError::storage(&p, e))?;
                    }
                    report.push("AnnotationRestored", Some(&id), format!("annotation file {why}"), repair);
                }
                (doc.clone(), true)
            } else if let Some((_, parsed)) = file {
                let doc = parsed.map_err(|cause| ServiceError::CorruptAnnotation {
                    file: paths.annotation_file(&id).display().to_string(),
                    cause,
                })?;
                (doc, false)
            } else {
                let (path, w, h) = &bitmaps[&id];
                (AnnotationDocument::new(id.clone(), *w, *h, file_name_of(path)), false)
            };
            images.insert(id, ImageEntry { doc, bitmap, logged });
        }

        // Prior database.
        let recount = recount(&config, images.values().map(|e| &e.doc));
        let prior_path = paths.prior_db();
        let stored = match fs::read_to_string(&prior_path) {
            Ok(text) => Some(PriorDatabase::from_text(&text).map_err(|e| e.to_string())),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
            Err(e) => return Err(ServiceError::storage(&prior_path, e)),
        };
        let mismatch = match &stored {
            None if recount.is_empty() => None,
            None => Some("prior database file is missing".to_string()),
            Some(Err(e)) => Some(format!("unreadable prior database: {e}")),
            Some(Ok(db)) if *db != recount => Some("prior database differs from the recount".to_string()),
            Some(Ok(_)) => None,
        };
        if let Some(message) = mismatch {
            if repair {
                write_atomic(&prior_path, recount.to_text().as_bytes())
                    .map_err(|e| ServiceError::storage(&prior_path, e))?;
            }
            report.push("PriorDbMismatch", None, message, repair);
        }

        let project = Project { paths, mode, config, images, prior: recount, next_seq, fault: None };
        Ok((project, report))
    }

    /// Opens read-only and returns the integrity report.
    pub fn verify(root: impl Into<PathBuf>) -> Result<OpenReport, ServiceError> {
        Project::open(root, OpenMode::ReadOnly).map(|(_, report)| report)
    }

    /// Creates a project directory with `config` and no images.
    pub fn init(root: impl Into<PathBuf>, config: &ProjectConfig) -> Result<(), ServiceError> {
        let paths = ProjectPaths::new(root);
        for dir in [paths.images(), paths.annotations(), paths.export()] {
            fs::create_dir_all(&dir).map_err(|e| ServiceError::storage(&dir, e))?;
        }
        let p = paths.config();
        write_atomic(&p, &crate::formats::save_config(config)).map_err(|e| ServiceError::storage(&p, e))
    }

    pub fn root(&self) -> &Path {
        &self.paths.root
    }

    pub fn config(&self) -> &ProjectConfig {
        &self.config
    }

    pub fn prior(&self) -> &PriorDatabase {
        &self.prior
    }

    pub fn prior_snapshot(&self) -> PriorSnapshot {
        self.prior.snapshot()
    }

    pub fn image_ids(&self) -> impl Iterator<Item = &str> {
        self.images.keys().map(String::as_str)
    }

    pub fn documents(&self) -> impl Iterator<Item = &AnnotationDocument> {
        self.images.values().map(|e| &e.doc)
    }

    fn entry(&self, image_id: &str) -> Result<&ImageEntry, ServiceError> {
        self.images.get(image_id).ok_or_else(|| ServiceError::UnknownImage(image_id.to_string()))
    }

    pub fn document(&self, image_id: &str) -> Result<&AnnotationDocument, ServiceError> {
        self.entry(image_id).map(|e| &e.doc)
    }

    pub fn bitmap_path(&self, image_id: &str) -> Result<Option<&Path>, ServiceError> {
        self.entry(image_id).map(|e| e.bitmap.as_deref())
    }

    pub fn summary(&self, image_id: &str) -> Result<ImageSummary, ServiceError> {
        let e = self.entry(image_id)?;
        Ok(ImageSummary {
            image_id: image_id.to_string(),
            width: e.doc.image.width,
            height: e.doc.image.height,
            file_name: e.doc.image.file_name.clone(),
            has_bitmap: e.bitmap.is_some(),
            instances: e.doc.instances.len(),
            clusters: e.doc.clusters.len(),
            regions: e.doc.regions.len(),
            relationships: e.doc.relationships.len(),
        })
    }

    pub fn list_images(&self) -> Vec<ImageSummary> {
        self.images.keys().filter_map(|id| self.summary(id).ok()).collect()
    }

    pub fn stats(&self) -> DatasetMetrics {
        let docs: Vec<AnnotationDocument> = self.documents().cloned().collect();
        compute_metrics(&docs, &self.config)
    }

    pub fn scenegraph(&self, image_id: &str) -> Result<SceneGraph, ServiceError> {
        let doc = self.document(image_id)?;
        let mut nodes: Vec<GraphNode> = doc
            .instances
            .iter()
            .map(|i| GraphNode {
                id: i.id.clone(),
                kind: NodeKind::Instance,
                category: i.category.clone(),
                attributes: i.attributes.iter().cloned().collect(),
                members: Vec::new(),
                cluster: doc.cluster_of(&i.id).map(|c| c.id.clone()),
            })
            .chain(doc.clusters.iter().map(|c| GraphNode {
                id: c.id.clone(),
                kind: NodeKind::Cluster,
                category: c.category.clone(),
                attributes: Vec::new(),
                members: c.member_ids.clone(),
                cluster: None,
            }))
            .collect();
        nodes.sort_by(|a, b| a.id.cmp(&b.id));
        let edges = doc
            .relationships
            .iter()
            .map(|r| GraphEdge {
                id: r.id.clone(),
                subject: r.subject_ref.clone(),
                predicate: r.predicate.clone(),
                object: r.object_ref.clone(),
            })
            .collect();
        Ok(SceneGraph { image_id: image_id.to_string(), nodes, edges })
    }

    /// Ranked predicates for a pair, from current geometry.
    pub fn recommend(&self, image_id: &str, req: &RecommendRequest) -> Result<RecommendResponse, ServiceError> {
        let doc = self.document(image_id)?;
        if req.subject_ref == req.object_ref {
            return Err(Violation::SelfLoop { id: req.subject_ref.clone() }.into());
        }
        let (pair, features) = self.pair_features(doc, &req.subject_ref, &req.object_ref)?;
        if !req.override_regions && !doc.pair_in_common_region(&req.subject_ref, &req.object_ref) {
            return Err(ServiceError::PairOutsideRegions {
                subject: req.subject_ref.clone(),
                object: req.object_ref.clone(),
            });
        }
        Ok(RecommendResponse {
            subject_ref: req.subject_ref.clone(),
            object_ref: req.object_ref.clone(),
            recommendations: recommend(&self.prior, &self.config, &pair, features, req.k),
            pair,
            features,
        })
    }

    fn pair_features(
        &self,
        doc: &AnnotationDocument,
        s: &str,
        o: &str,
    ) -> Result<(PairKey, FeatureVector), ServiceError> {
        let resolve = |id: &str| match (doc.entity_category(id), doc.entity_bbox(id)) {
            (Some(c), Some(b)) => Ok((c.to_string(), b)),
            _ => Err(ServiceError::Invalid(Violation::UnknownEntity { id: id.to_string() })),
        };
        let (sc, sb) = resolve(s)?;
        let (oc, ob) = resolve(o)?;
        Ok((PairKey::new(sc, oc), extract_with(&self.config.features, &sb, &ob)))
    }

    /// Stores a relationship with its features frozen from current geometry.
    pub fn annotate(&mut self, image_id: &str, req: AnnotateRequest) -> Result<AnnotateResponse, ServiceError> {
        self.writable()?;
        let doc = self.document(image_id)?;
        let id = req.id.clone().unwrap_or_else(|| doc.next_id("r"));
        let mut rel =
            Relationship::new(id.clone(), req.subject_ref.clone(), req.predicate.clone(), req.object_ref.clone());
        if req.subject_ref == req.object_ref {
            return Err(Violation::SelfLoop { id }.into());
        }
        let (pair, features) = self.pair_features(doc, &req.subject_ref, &req.object_ref).map_err(|_| {
            let missing = if doc.has_entity(&req.subject_ref) { &req.object_ref } else { &req.subject_ref };
            ServiceError::Invalid(Violation::DanglingEndpoint { id: id.clone(), endpoint: missing.clone() })
        })?;
        let mut warnings = Vec::new();
        if !doc.pair_in_common_region(&req.subject_ref, &req.object_ref) {
            warnings.push("PairOutsideRegions".to_string());
        }
        rel.features = Some(features);
        self.commit(image_id, Mutation::AddRelationship { relationship: rel, pair })?;
        Ok(AnnotateResponse { id, features, warnings })
    }

    pub fn delete_relationship(&mut self, image_id: &str, id: &str) -> Result<(), ServiceError> {
        self.commit(image_id, Mutation::DeleteRelationship { id: id.to_string() })
    }

    pub fn put_annotation(&mut self, image_id: &str, doc: AnnotationDocument) -> Result<(), ServiceError> {
        self.writable()?;
        if doc.image_id() != image_id {
            return Err(ServiceError::BadRequest(format!(
                "document image_id `{}` does not match `{image_id}`",
                doc.image_id()
            )));
        }
        self.commit(image_id, Mutation::PutAnnotation { document: doc })
    }

    pub fn add_instance(&mut self, image_id: &str, new: NewInstance) -> Result<String, ServiceError> {
        self.writable()?;
        let id = match new.id {
            Some(id) => id,
            None => self.document(image_id)?.next_id("i"),
        };
        let mut instance = Instance::new(id.clone(), new.category, new.bbox);
        instance.attributes = new.attributes;
        instance.mask_ref = new.mask_ref;
        self.commit(image_id, Mutation::AddInstance { instance })?;
        Ok(id)
    }

    pub fn update_instance(&mut self, image_id: &str, instance: Instance) -> Result<(), ServiceError> {
        self.commit(image_id, Mutation::UpdateInstance { instance })
    }

    pub fn set_attributes(
        &mut self,
        image_id: &str,
        id: &str,
        attributes: BTreeSet<AttributeValue>,
    ) -> Result<(), ServiceError> {
        self.writable()?;
        let mut instance = self
            .document(image_id)?
            .instance(id)
            .cloned()
            .ok_or_else(|| ServiceError::Invalid(Violation::UnknownEntity { id: id.to_string() }))?;
        instance.attributes = attributes;
        self.update_instance(image_id, instance)
    }

    pub fn delete_instance(&mut self, image_id: &str, id: &str) -> Result<(), ServiceError> {
        self.commit(image_id, Mutation::DeleteInstance { id: id.to_string() })
    }

    pub fn add_region(&mut self, image_id: &str, new: NewRegion) -> Result<String, ServiceError> {
        self.writable()?;
        let id = match new.id {
            Some(id) => id,
            None => self.document(image_id)?.next_id("g"),
        };
        let mut region = Region::new(id.clone(), new.bbox);
        region.label = new.label;
        self.commit(image_id, Mutation::AddRegion { region })?;
        Ok(id)
    }

    pub fn delete_region(&mut self, image_id: &str, id: &str) -> Result<(), ServiceError> {
        self.commit(image_id, Mutation::DeleteRegion { id: id.to_string() })
    }

    pub fn add_cluster(&mut self, image_id: &str, new: NewCluster) -> Result<String, ServiceError> {
        self.writable()?;
        let id = match new.id {
            Some(id) => id,
            None => self.document(image_id)?.next_id("c"),
        };
        self.commit(image_id, Mutation::AddCluster { id: id.clone(), member_ids: new.member_ids })?;
        Ok(id)
    }

    pub fn delete_cluster(&mut self, image_id: &str, id: &str) -> Result<(), ServiceError> {
        self.commit(image_id, Mutation::DeleteCluster { id: id.to_string() })
    }

    /// Re-derives every relationship's frozen features from current
    /// geometry and rewrites the prior database. Returns the number of
    /// documents whose features changed.
    pub fn rebuild_priors(&mut self) -> Result<usize, ServiceError> {
        self.writable()?;
        let mut changed = Vec::new();
        for (id, e) in &self.images {
            let mut doc = e.doc.clone();
            apply(&mut doc, &self.config, &Mutation::RebuildPriors)?;
            if doc != e.doc {
                changed.push(id.clone());
            }
        }
        for id in &changed {
            self.ensure_logged(id)?;
        }
        let rec = LogRecord::new(self.next_seq, None, Mutation::RebuildPriors);
        append_record(&self.paths.log(), &rec)?;
        self.next_seq += 1;
        self.check_fault(FaultPoint::AfterLogAppend)?;
        for e in self.images.values_mut().filter(|e| e.logged) {
            apply(&mut e.doc, &self.config, &Mutation::RebuildPriors)?;
        }
        self.prior = recount(&self.config, self.documents());
        for id in &changed {
            self.write_doc(id)?;
        }
        self.check_fault(FaultPoint::AfterDocWrite)?;
        self.write_prior()?;
        Ok(changed.len())
    }

    /// Writes the dataset under `export/`.
    pub fn export(&self, format: ExportFormat, split: &SplitAssignment) -> Result<ExportResult, ServiceError> {
        self.writable()?;
        let docs: Vec<AnnotationDocument> = self.documents().cloned().collect();
        let dir = self.paths.export();
        let io = |p: &Path, e| ServiceError::storage(p, e);
        match format {
            ExportFormat::Merged => {
                let (data, report) = export_merged(&docs, &self.config, split).map_err(ServiceError::Format)?;
                let path = dir.join("merged.json");
                write_atomic(&path, &save_merged(&data)).map_err(|e| io(&path, e))?;
                let report_path = dir.join("merged.report.json");
                let mut report_bytes = serde_json::to_vec_pretty(&report).expect("report serializes");
                report_bytes.push(b'\n');
                write_atomic(&report_path, &report_bytes).map_err(|e| io(&report_path, e))?;
                Ok(ExportResult { format, path, images: docs.len(), report })
            }
            ExportFormat::PerImage => {
                let path = dir.join("per_image");
                for doc in &docs {
                    let p = path.join(format!("{}.json", doc.image_id()));
                    write_atomic(&p, &save_per_image(doc)).map_err(|e| io(&p, e))?;
                }
                Ok(ExportResult { format, path, images: docs.len(), report: ConversionReport::default() })
            }
        }
    }

    /// Makes the next mutation fail at `point`, leaving the directory as a
    /// crash there would. For recovery tests.
    #[doc(hidden)]
    pub fn inject_fault(&mut self, point: FaultPoint) {
        self.fault = Some(point);
    }

    fn check_fault(&mut self, point: FaultPoint) -> Result<(), ServiceError> {
        if self.fault == Some(point) {
            self.fault = None;
            return Err(ServiceError::InjectedFault(point));
        }
        Ok(())
    }

    fn writable(&self) -> Result<(), ServiceError> {
        match self.mode {
            OpenMode::Repair => Ok(()),
            OpenMode::ReadOnly => Err(ServiceError::ReadOnly),
        }
    }

    /// Starts the image's log history with a snapshot of its current state.
    fn ensure_logged(&mut self, image_id: &str) -> Result<(), ServiceError> {
        if self.entry(image_id)?.logged {
            return Ok(());
        }
        let document = self.images[image_id].doc.clone();
        self.commit(image_id, Mutation::PutAnnotation { document })
    }

    /// Validate, log, then persist. Once the record is in the log the
    /// mutation is durable: memory is updated and files follow; a failure
    /// past that point is repaired on the next open.
    fn commit(&mut self, image_id: &str, mutation: Mutation) -> Result<(), ServiceError> {
        self.writable()?;
        if !matches!(mutation, Mutation::PutAnnotation { .. }) {
            self.ensure_logged(image_id)?;
        }
        let old = &self.entry(image_id)?.doc;
        let mut doc = old.clone();
        apply(&mut doc, &self.config, &mutation)?;
        let mut prior = self.prior.clone();
        for r in prior_records(old, &self.config) {
            prior.unrecord(&r)?;
        }
        for r in prior_records(&doc, &self.config) {
            prior.record(&r);
        }

        let rec = LogRecord::new(self.next_seq, Some(image_id.to_string()), mutation);
        append_record(&self.paths.log(), &rec)?;
        self.next_seq += 1;
        let entry = self.images.get_mut(image_id).expect("entry checked above");
        entry.doc = doc;
        entry.logged = true;
        self.prior = prior;

        self.check_fault(FaultPoint::AfterLogAppend)?;
        self.write_doc(image_id)?;
        self.check_fault(FaultPoint::AfterDocWrite)?;
        self.write_prior()
    }

    fn write_doc(&self, image_id: &str) -> Result<(), ServiceError> {
        let p = self.paths.annotation_file(image_id);
        write_atomic(&p, &save_per_image(&self.images[image_id].doc)).map_err(|e| ServiceError::storage(&p, e))
    }

    fn write_prior(&self) -> Result<(), ServiceError> {
        let p = self.paths.prior_db();
        write_atomic(&p, self.prior.to_text().as_bytes()).map_err(|e| ServiceError::storage(&p, e))
    }
}

/// Batch recount over every stored relationship.
pub(crate) fn recount<'a>(
    cfg: &ProjectConfig,
    docs: impl IntoIterator<Item = &'a AnnotationDocument>,
) -> PriorDatabase {
    let records: Vec<_> = docs.into_iter().flat_map(|d| prior_records(d, cfg)).collect();
    PriorDatabase::from_records(&records)
}

/// Replays log records from an empty store.
fn replay(cfg: &ProjectConfig, records: &[LogRecord]) -> Result<BTreeMap<String, AnnotationDocument>, ServiceError> {
    let mut docs: BTreeMap<String, AnnotationDocument> = BTreeMap::new();
    for (idx, rec) in records.iter().enumerate() {
        let fail = |message: String| ServiceError::CorruptLog { line: idx + 1, message };
        match &rec.image_id {
            None => {
                for doc in docs.values_mut() {
                    apply(doc, cfg, &rec.mutation).map_err(|v| fail(v.to_string()))?;
                }
            }
            Some(id) => {
                if !is_valid_image_id(id) {
                    return Err(fail(format!("invalid image id `{id}`")));
                }
                if let Mutation::PutAnnotation { document } = &rec.mutation {
                    docs.entry(id.clone()).or_insert_with(|| document.clone());
                }
                let doc = docs
                    .get_mut(id)
                    .ok_or_else(|| fail(format!("history of `{id}` does not start with put_annotation")))?;
                apply(doc, cfg, &rec.mutation).map_err(|v| fail(v.to_string()))?;
            }
        }
    }
    Ok(docs)
}

/// Replays `mutations.log` under `root` from empty and returns the
/// resulting documents and prior database, without touching the store.
pub fn replay_from_empty(root: &Path) -> Result<(BTreeMap<String, AnnotationDocument>, PriorDatabase), ServiceError> {
    let paths = ProjectPaths::new(root);
    let cfg_bytes = fs::read(paths.config()).map_err(|e| ServiceError::storage(&paths.config(), e))?;
    let config = load_config(&cfg_bytes).map_err(ServiceError::Config)?;
    let contents = read_log(&paths.log())?;
    let docs = replay(&config, &contents.records)?;
    let prior = recount(&config, docs.values());
    Ok((docs, prior))
}
