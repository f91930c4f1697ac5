//! Fitting constraints: point-cloud, landmark and edge targets for template
//! vertices.

mod contour;
mod edges;
mod pointcloud;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::landmarks::{CorrespondenceTable, Landmark3D};

pub use contour::{contour_edges, contour_vertices, edge_targets, edge_targets_multi, EdgeConfig, EdgeMatch};
pub use edges::{detect_edges, distance_transform, EdgeMap, NO_FEATURE};
pub use pointcloud::{accepted_points, componentwise_median, pointcloud_targets, pointcloud_targets_with, PclConstraintConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstraintKind {
    Pointcloud,
    Landmark,
    Edge,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub vertex_index: usize,
    pub target: Vector3<f64>,
    pub weight: f64,
    pub kind: ConstraintKind,
}

/// Constraints with at most one entry per (vertex, kind).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConstraintSet {
    constraints: Vec<Constraint>,
    keys: HashSet<(usize, ConstraintKind)>,
}

impl ConstraintSet {
    pub fn new(constraints: Vec<Constraint>) -> Result<Self> {
        let mut set = ConstraintSet::default();
        for c in constraints {
            set.push(c)?;
        }
        Ok(set)
    }

    pub fn push(&mut self, c: Constraint) -> Result<()> {
        if !(c.weight >= 0.0) || !c.target.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput(format!("invalid constraint on vertex {}", c.vertex_index)));
        }
        if !self.keys.insert((c.vertex_index, c.kind)) {
            return Err(Error::InvalidInput(format!("vertex {} already has a {:?} constraint", c.vertex_index, c.kind)));
        }
        self.constraints.push(c);
        Ok(())
    }

    /// Union of sets with disjoint kinds, or of the same kind on disjoint
    /// vertices.
    pub fn extend(&mut self, other: ConstraintSet) -> Result<()> {
        for c in other.constraints {
            self.push(c)?;
        }
        Ok(())
    }

    pub fn as_slice(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Constraint> {
        self.constraints.iter()
    }

    pub fn len(&self) -> usize {
        self.constraints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    pub fn count(&self, kind: ConstraintKind) -> usize {
        self.constraints.iter().filter(|c| c.kind == kind).count()
    }

    pub fn validate(&self, num_vertices: usize) -> Result<()> {
        match self.constraints.iter().find(|c| c.vertex_index >= num_vertices) {
            Some(c) => Err(Error::InvalidInput(format!("constraint on vertex {} but the mesh has {num_vertices}", c.vertex_index))),
            None => Ok(()),
        }
    }

    /// Builds a set of one kind from (vertex, target, weight) triples that
    /// are already unique per vertex.
    pub(crate) fn from_unique(kind: ConstraintKind, items: impl IntoIterator<Item = (usize, Vector3<f64>, f64)>) -> Self {
        let constraints: Vec<Constraint> =
            items.into_iter().map(|(vertex_index, target, weight)| Constraint { vertex_index, target, weight, kind }).collect();
        let keys = constraints.iter().map(|c| (c.vertex_index, kind)).collect();
        ConstraintSet { constraints, keys }
    }
}

impl<'a> IntoIterator for &'a ConstraintSet {
    type Item = &'a Constraint;
    type IntoIter = std::slice::Iter<'a, Constraint>;

    fn into_iter(self) -> Self::IntoIter {
        self.constraints.iter()
    }
}

/// One landmark constraint per triangulated landmark.
pub fn landmark_targets(landmarks: &[Landmark3D], table: &CorrespondenceTable, weight: f64) -> Result<ConstraintSet> {
    let mut seen = std::collections::BTreeSet::new();
    let mut items = Vec::with_capacity(landmarks.len());
    for l in landmarks {
        if !seen.insert(l.landmark_id) {
            return Err(Error::InvalidInput(format!("duplicate landmark id {}", l.landmark_id)));
        }
        items.push((table.vertex(l.landmark_id)?, l.position, weight));
    }
    // Two ids mapped to the same vertex would violate per-vertex uniqueness.
    ConstraintSet::new(
        items
            .into_iter()
            .map(|(vertex_index, target, weight)| Constraint { vertex_index, target, weight, kind: ConstraintKind::Landmark })
            .collect(),
    )
}
