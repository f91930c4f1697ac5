//! 2D landmark tracks, their triangulation and the similarity alignment of
//! the template to the triangulated landmarks.

mod align;
mod triangulate;

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::camera::Intrinsics;
use crate::error::{Error, Result};

pub use align::{rigid_align, similarity_align, umeyama, Similarity, SimilarityAlignment};
pub use triangulate::{triangulate_all, triangulate_landmark, ReprojectionProblem, TriangulationConfig};

/// First id of the ear landmark namespace; face landmarks use 0–67.
pub const EAR_ID_BASE: i64 = 100;

/// Jaw contour ids of the 68-point face layout.
pub const FACE_CONTOUR_IDS: std::ops::RangeInclusive<i64> = 0..=16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LandmarkObservation {
    pub frame_id: u32,
    pub landmark_id: i64,
    pub position: Vector2<f64>,
    pub confidence: f64,
}

impl LandmarkObservation {
    pub fn validate(&self, intr: &Intrinsics) -> Result<()> {
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(Error::InvalidInput(format!(
                "landmark {} in frame {}: confidence {} outside [0, 1]",
                self.landmark_id, self.frame_id, self.confidence
            )));
        }
        let (mx, my) = (0.1 * intr.width as f64, 0.1 * intr.height as f64);
        let p = self.position;
        if !(p.x >= -mx && p.y >= -my && p.x <= intr.width as f64 + mx && p.y <= intr.height as f64 + my) {
            return Err(Error::InvalidInput(format!(
                "landmark {} in frame {}: position ({}, {}) far outside the image",
                self.landmark_id, self.frame_id, p.x, p.y
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Landmark3D {
    pub landmark_id: i64,
    pub position: Vector3<f64>,
    pub rms_reprojection_error: f64,
    pub num_views: usize,
}

/// Landmark id to template vertex map, plus the landmark subsets used for
/// fitting.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CorrespondenceTable {
    entries: BTreeMap<i64, usize>,
    /// Ids never triangulated. `None` means the jaw contour 0–16.
    pub excluded_landmark_ids: Option<BTreeSet<i64>>,
    /// Ear ids to use. `None` means all ear ids.
    pub ear_outer_contour_ids: Option<BTreeSet<i64>>,
}

impl CorrespondenceTable {
    pub fn new(entries: impl IntoIterator<Item = (i64, usize)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (id, v) in entries {
            if map.insert(id, v).is_some() {
                return Err(Error::InvalidInput(format!("duplicate landmark id {id} in correspondence table")));
            }
        }
        Ok(CorrespondenceTable { entries: map, ..Default::default() })
    }

    pub fn vertex(&self, landmark_id: i64) -> Result<usize> {
        self.entries.get(&landmark_id).copied().ok_or(Error::MissingCorrespondence(landmark_id))
    }

    pub fn entries(&self) -> impl Iterator<Item = (i64, usize)> + '_ {
        self.entries.iter().map(|(&k, &v)| (k, v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn validate(&self, num_vertices: usize) -> Result<()> {
        for (id, v) in self.entries() {
            if v >= num_vertices {
                return Err(Error::InvalidInput(format!("landmark {id} maps to vertex {v}, template has {num_vertices}")));
            }
        }
        Ok(())
    }

    pub fn selection(&self) -> LandmarkSelection {
        LandmarkSelection {
            excluded: self.excluded_landmark_ids.clone().unwrap_or_else(|| FACE_CONTOUR_IDS.collect()),
            ear_ids: self.ear_outer_contour_ids.clone(),
            use_ears: true,
        }
    }
}

/// Which landmark ids take part in triangulation and fitting.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkSelection {
    pub excluded: BTreeSet<i64>,
    pub ear_ids: Option<BTreeSet<i64>>,
    pub use_ears: bool,
}

impl Default for LandmarkSelection {
    fn default() -> Self {
        LandmarkSelection { excluded: FACE_CONTOUR_IDS.collect(), ear_ids: None, use_ears: true }
    }
}

impl LandmarkSelection {
    pub fn accepts(&self, id: i64) -> bool {
        if self.excluded.contains(&id) {
            return false;
        }
        if id >= EAR_ID_BASE {
            return self.use_ears && self.ear_ids.as_ref().is_none_or(|s| s.contains(&id));
        }
        true
    }
}
