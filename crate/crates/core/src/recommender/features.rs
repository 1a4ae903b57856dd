// SPDX-License-Identifier: Apache-2.0

//! Binary geometric descriptors of an ordered (subject, object) box pair.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::model::BBox;

/// One named binary feature of a subject/object pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    /// Boxes intersect or touch.
    Contact,
    /// Subject center strictly left of object center.
    SubjectLeft,
    /// Subject center strictly above object center.
    SubjectAbove,
    /// Subject area below half the object area.
    SubjectSmaller,
    /// Subject area above twice the object area.
    SubjectLarger,
    /// Subject box fully inside the object box.
    SubjectInside,
    /// Object box fully inside the subject box.
    ObjectInside,
}

impl Feature {
    pub const ALL: [Feature; 7] = [
        Feature::Contact,
        Feature::SubjectLeft,
        Feature::SubjectAbove,
        Feature::SubjectSmaller,
        Feature::SubjectLarger,
        Feature::SubjectInside,
        Feature::ObjectInside,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Feature::Contact => "contact",
            Feature::SubjectLeft => "subject_left",
            Feature::SubjectAbove => "subject_above",
            Feature::SubjectSmaller => "subject_smaller",
            Feature::SubjectLarger => "subject_larger",
            Feature::SubjectInside => "subject_inside",
            Feature::ObjectInside => "object_inside",
        }
    }

    fn bit(self) -> u8 {
        1 << (self as u8)
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown feature name `{0}`")]
pub struct UnknownFeature(pub String);

impl FromStr for Feature {
    type Err = UnknownFeature;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Feature::ALL.into_iter().find(|f| f.name() == s).ok_or_else(|| UnknownFeature(s.to_string()))
    }
}

/// Set of features that hold for a pair. Serialized as the list of present
/// feature names in canonical order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FeatureVector(u8);

impl FeatureVector {
    pub fn empty() -> Self {
        FeatureVector(0)
    }

    pub fn from_bits(bits: u8) -> Self {
        FeatureVector(bits & 0x7f)
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn get(self, feature: Feature) -> bool {
        self.0 & feature.bit() != 0
    }

    pub fn set(&mut self, feature: Feature, value: bool) {
        if value {
            self.0 |= feature.bit();
        } else {
            self.0 &= !feature.bit();
        }
    }

    pub fn with(mut self, feature: Feature) -> Self {
        self.set(feature, true);
        self
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// Present features in canonical order.
    pub fn present(self) -> impl Iterator<Item = Feature> {
        Feature::ALL.into_iter().filter(move |f| self.get(*f))
    }

    pub fn restrict_to(self, set: &[Feature]) -> Self {
        let mask = set.iter().fold(0u8, |m, f| m | f.bit());
        FeatureVector(self.0 & mask)
    }
}

impl FromIterator<Feature> for FeatureVector {
    fn from_iter<I: IntoIterator<Item = Feature>>(iter: I) -> Self {
        iter.into_iter().fold(FeatureVector::empty(), FeatureVector::with)
    }
}

impl Serialize for FeatureVector {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_seq(self.present())
    }
}

impl<'de> Deserialize<'de> for FeatureVector {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let names = Vec::<Feature>::deserialize(deserializer)?;
        Ok(names.into_iter().collect())
    }
}

/// Computes every default feature for the ordered pair.
pub fn extract_features(subject: &BBox, object: &BBox) -> FeatureVector {
    let (scx, scy) = subject.doubled_center();
    let (ocx, ocy) = object.doubled_center();
    let (sa, oa) = (subject.area(), object.area());

    let mut fv = FeatureVector::empty();
    fv.set(Feature::Contact, subject.intersects(object));
    fv.set(Feature::SubjectLeft, scx < ocx);
    fv.set(Feature::SubjectAbove, scy < ocy);
    fv.set(Feature::SubjectSmaller, 2 * sa < oa);
    fv.set(Feature::SubjectLarger, sa > 2 * oa);
    fv.set(Feature::SubjectInside, object.contains(subject));
    fv.set(Feature::ObjectInside, subject.contains(object));
    fv
}

/// Extracts features and keeps only those in the configured set.
pub fn extract_with(set: &[Feature], subject: &BBox, object: &BBox) -> FeatureVector {
    extract_features(subject, object).restrict_to(set)
}
