// SPDX-License-Identifier: Apache-2.0

//! In-memory annotation model for one image: instances, clusters, regions and
//! directed relationships.

mod bbox;
mod document;
mod validate;

pub use bbox::BBox;
pub use document::{AnnotationDocument, AttributeValue, Cluster, ImageInfo, Instance, Region, Relationship};

use serde::Serialize;

/// A broken invariant. Mutations return it as an error; [`AnnotationDocument::validate`]
/// returns a list of them. Every variant names the offending entity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, thiserror::Error)]
#[serde(tag = "code")]
pub enum Violation {
    #[error("id `{id}` is already used")]
    DuplicateId { id: String },
    #[error("instance `{id}` has unknown category `{category}`")]
    UnknownCategory { id: String, category: String },
    #[error("`{id}` has a degenerate box")]
    InvalidBBox { id: String },
    #[error("`{id}` has a box outside the image bounds")]
    BBoxOutOfBounds { id: String },
    #[error("instance `{id}` uses unknown attribute `{attribute}`")]
    UnknownAttribute { id: String, attribute: String },
    #[error("instance `{id}` uses value `{value}` not admitted by attribute `{attribute}`")]
    UnknownAttributeValue { id: String, attribute: String, value: String },
    #[error("relationship `{id}` refers to missing entity `{endpoint}`")]
    DanglingEndpoint { id: String, endpoint: String },
    #[error("relationship `{id}` has the same subject and object")]
    SelfLoop { id: String },
    #[error("relationship `{id}` duplicates triple already stored as `{existing}`")]
    DuplicateTriple { id: String, existing: String },
    #[error("relationship `{id}` has unknown predicate `{predicate}`")]
    UnknownPredicate { id: String, predicate: String },
    #[error("cluster `{id}` mixes categories")]
    MixedCategories { id: String },
    #[error("instance `{member}` already belongs to cluster `{cluster}`")]
    MemberAlreadyClustered { member: String, cluster: String },
    #[error("cluster `{id}` has no members")]
    EmptyMemberList { id: String },
    #[error("cluster `{id}` lists missing instance `{member}`")]
    UnknownMember { id: String, member: String },
    #[error("no entity with id `{id}`")]
    UnknownEntity { id: String },
}

impl Violation {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            Violation::DuplicateId { .. } => "DuplicateId",
            Violation::UnknownCategory { .. } => "UnknownCategory",
            Violation::InvalidBBox { .. } => "InvalidBBox",
            Violation::BBoxOutOfBounds { .. } => "BBoxOutOfBounds",
            Violation::UnknownAttribute { .. } => "UnknownAttribute",
            Violation::UnknownAttributeValue { .. } => "UnknownAttributeValue",
            Violation::DanglingEndpoint { .. } => "DanglingEndpoint",
            Violation::SelfLoop { .. } => "SelfLoop",
            Violation::DuplicateTriple { .. } => "DuplicateTriple",
            Violation::UnknownPredicate { .. } => "UnknownPredicate",
            Violation::MixedCategories { .. } => "MixedCategories",
            Violation::MemberAlreadyClustered { .. } => "MemberAlreadyClustered",
            Violation::EmptyMemberList { .. } => "EmptyMemberList",
            Violation::UnknownMember { .. } => "UnknownMember",
            Violation::UnknownEntity { .. } => "UnknownEntity",
        }
    }
}
