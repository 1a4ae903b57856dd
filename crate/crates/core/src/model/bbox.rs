// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

/// Axis-aligned box in integer pixel coordinates, corner form, origin top-left.
///
/// Serialized as `[x1, y1, x2, y2]`. Boxes are treated as closed sets, so two
/// boxes that share only an edge or a corner still intersect.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[u32; 4]", into = "[u32; 4]")]
pub struct BBox {
    pub x1: u32,
    pub y1: u32,
    pub x2: u32,
    pub y2: u32,
}

impl From<[u32; 4]> for BBox {
    fn from([x1, y1, x2, y2]: [u32; 4]) -> Self {
        BBox { x1, y1, x2, y2 }
    }
}

impl From<BBox> for [u32; 4] {
    fn from(b: BBox) -> Self {
        [b.x1, b.y1, b.x2, b.y2]
    }
}

impl BBox {
    pub fn new(x1: u32, y1: u32, x2: u32, y2: u32) -> Self {
        BBox { x1, y1, x2, y2 }
    }

    /// `x1 < x2` and `y1 < y2`.
    pub fn is_well_formed(&self) -> bool {
        self.x1 < self.x2 && self.y1 < self.y2
    }

    pub fn fits_in(&self, width: u32, height: u32) -> bool {
        self.x2 <= width && self.y2 <= height
    }

    pub fn width(&self) -> u32 {
        self.x2.saturating_sub(self.x1)
    }

    pub fn height(&self) -> u32 {
        self.y2.saturating_sub(self.y1)
    }

    pub fn area(&self) -> u64 {
        u64::from(self.width()) * u64::from(self.height())
    }

    /// Twice the center, so comparisons stay in integers.
    pub fn doubled_center(&self) -> (u64, u64) {
        (u64::from(self.x1) + u64::from(self.x2), u64::from(self.y1) + u64::from(self.y2))
    }

    /// Closed intersection test: touching edges or corners count.
    pub fn intersects(&self, other: &BBox) -> bool {
        self.x1 <= other.x2 && other.x1 <= self.x2 && self.y1 <= other.y2 && other.y1 <= self.y2
    }

    /// True when `inner` lies entirely within `self` (boundaries included).
    pub fn contains(&self, inner: &BBox) -> bool {
        self.x1 <= inner.x1 && inner.x2 <= self.x2 && self.y1 <= inner.y1 && inner.y2 <= self.y2
    }

    pub fn union(&self, other: &BBox) -> BBox {
        BBox {
            x1: self.x1.min(other.x1),
            y1: self.y1.min(other.y1),
            x2: self.x2.max(other.x2),
            y2: self.y2.max(other.y2),
        }
    }

    pub fn translate(&self, dx: u32, dy: u32) -> BBox {
        BBox { x1: self.x1 + dx, y1: self.y1 + dy, x2: self.x2 + dx, y2: self.y2 + dy }
    }
}
