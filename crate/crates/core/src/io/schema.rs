//! Versioned JSON documents for cameras, landmarks, correspondences and
//! stage outputs.

use std::collections::BTreeSet;

use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::camera::{CameraPose, Intrinsics};
use crate::error::{Error, Result};
use crate::landmarks::{CorrespondenceTable, Landmark3D, LandmarkObservation, Similarity};

pub const SCHEMA_VERSION: u32 = 1;

pub(crate) fn check_version(path: &str, found: u32) -> Result<()> {
    if found != SCHEMA_VERSION {
        return Err(Error::parse(path, "schema_version", format!("unsupported schema version {found} (expected {SCHEMA_VERSION})")));
    }
    Ok(())
}

fn one() -> u32 {
    SCHEMA_VERSION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraRecord {
    pub frame_id: u32,
    /// Image path, relative to the camera file.
    pub image: String,
    /// Rotation, row-major.
    #[serde(rename = "R")]
    pub r: [f64; 9],
    pub t: [f64; 3],
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    #[serde(default)]
    pub k1: f64,
    #[serde(default)]
    pub k2: f64,
}

impl CameraRecord {
    pub fn new(frame_id: u32, image: String, pose: &CameraPose, intr: &Intrinsics) -> Self {
        let r = pose.rotation;
        CameraRecord {
            frame_id,
            image,
            r: [r[(0, 0)], r[(0, 1)], r[(0, 2)], r[(1, 0)], r[(1, 1)], r[(1, 2)], r[(2, 0)], r[(2, 1)], r[(2, 2)]],
            t: [pose.translation.x, pose.translation.y, pose.translation.z],
            fx: intr.fx,
            fy: intr.fy,
            cx: intr.cx,
            cy: intr.cy,
            width: intr.width,
            height: intr.height,
            k1: intr.k1,
            k2: intr.k2,
        }
    }

    pub fn pose(&self) -> Result<CameraPose> {
        CameraPose::new(Matrix3::from_row_slice(&self.r), Vector3::from(self.t))
            .map_err(|e| Error::InvalidInput(format!("camera {}: {e}", self.frame_id)))
    }

    pub fn intrinsics(&self) -> Result<Intrinsics> {
        let intr = Intrinsics {
            fx: self.fx,
            fy: self.fy,
            cx: self.cx,
            cy: self.cy,
            width: self.width,
            height: self.height,
            k1: self.k1,
            k2: self.k2,
        };
        intr.validate().map_err(|e| Error::InvalidInput(format!("camera {}: {e}", self.frame_id)))?;
        Ok(intr)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CamerasFile {
    #[serde(default = "one")]
    pub schema_version: u32,
    pub cameras: Vec<CameraRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkRecord {
    pub id: i64,
    pub x: f64,
    pub y: f64,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameLandmarks {
    pub frame_id: u32,
    pub landmarks: Vec<LandmarkRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarksFile {
    #[serde(default = "one")]
    pub schema_version: u32,
    pub frames: Vec<FrameLandmarks>,
}

impl LandmarksFile {
    pub fn from_observations(obs: &[LandmarkObservation]) -> Self {
        let mut frames: Vec<FrameLandmarks> = Vec::new();
        for o in obs {
            let rec = LandmarkRecord { id: o.landmark_id, x: o.position.x, y: o.position.y, confidence: o.confidence };
            match frames.iter_mut().find(|f| f.frame_id == o.frame_id) {
                Some(f) => f.landmarks.push(rec),
                None => frames.push(FrameLandmarks { frame_id: o.frame_id, landmarks: vec![rec] }),
            }
        }
        LandmarksFile { schema_version: SCHEMA_VERSION, frames }
    }

    pub fn observations(&self) -> Vec<LandmarkObservation> {
        self.frames
            .iter()
            .flat_map(|f| {
                f.landmarks.iter().map(move |l| LandmarkObservation {
                    frame_id: f.frame_id,
                    landmark_id: l.id,
                    position: Vector2::new(l.x, l.y),
                    confidence: l.confidence,
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrespondenceEntry {
    pub landmark_id: i64,
    pub vertex_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrespondenceFile {
    #[serde(default = "one")]
    pub schema_version: u32,
    pub entries: Vec<CorrespondenceEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub excluded_landmark_ids: Option<Vec<i64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ear_outer_contour_ids: Option<Vec<i64>>,
}

impl CorrespondenceFile {
    pub fn from_table(table: &CorrespondenceTable) -> Self {
        CorrespondenceFile {
            schema_version: SCHEMA_VERSION,
            entries: table.entries().map(|(landmark_id, vertex_index)| CorrespondenceEntry { landmark_id, vertex_index }).collect(),
            excluded_landmark_ids: table.excluded_landmark_ids.as_ref().map(|s| s.iter().copied().collect()),
            ear_outer_contour_ids: table.ear_outer_contour_ids.as_ref().map(|s| s.iter().copied().collect()),
        }
    }

    pub fn table(&self) -> Result<CorrespondenceTable> {
        let mut t = CorrespondenceTable::new(self.entries.iter().map(|e| (e.landmark_id, e.vertex_index)))?;
        t.excluded_landmark_ids = self.excluded_landmark_ids.as_ref().map(|v| v.iter().copied().collect::<BTreeSet<_>>());
        t.ear_outer_contour_ids = self.ear_outer_contour_ids.as_ref().map(|v| v.iter().copied().collect::<BTreeSet<_>>());
        Ok(t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Landmarks3DFile {
    #[serde(default = "one")]
    pub schema_version: u32,
    pub landmarks: Vec<Landmark3D>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentFile {
    #[serde(default = "one")]
    pub schema_version: u32,
    pub transform: Similarity,
    pub rms: f64,
    pub num_correspondences: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewSelectionFile {
    #[serde(default = "one")]
    pub schema_version: u32,
    pub views: Vec<crate::viewsel::SourceViews>,
}
