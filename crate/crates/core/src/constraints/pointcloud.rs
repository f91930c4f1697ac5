use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ConstraintKind, ConstraintSet};
use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::mesh::TriMesh;
use crate::spatial::KdTree;

/// Neighbourhood parameters, as fractions of the template bounding-box
/// diagonal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PclConstraintConfig {
    pub search_radius_frac: f64,
    /// Maximum distance of an accepted point from the vertex normal line.
    pub axial_threshold_frac: f64,
    pub min_points: usize,
}

impl Default for PclConstraintConfig {
    fn default() -> Self {
        PclConstraintConfig { search_radius_frac: 0.02, axial_threshold_frac: 0.005, min_points: 3 }
    }
}

impl PclConstraintConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.search_radius_frac > 0.0 && self.axial_threshold_frac > 0.0 && self.min_points >= 1) {
            return Err(Error::Config(format!("invalid point-cloud constraint config {self:?}")));
        }
        Ok(())
    }
}

/// Median of each coordinate separately; even counts average the two middle
/// values.
pub fn componentwise_median(points: &[Vector3<f64>]) -> Option<Vector3<f64>> {
    if points.is_empty() {
        return None;
    }
    let mut out = Vector3::zeros();
    let mut buf: Vec<f64> = Vec::with_capacity(points.len());
    for k in 0..3 {
        buf.clear();
        buf.extend(points.iter().map(|p| p[k]));
        buf.sort_by(f64::total_cmp);
        let m = buf.len() / 2;
        out[k] = if buf.len() % 2 == 1 { buf[m] } else { 0.5 * (buf[m - 1] + buf[m]) };
    }
    Some(out)
}

fn tangent_frame(n: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let helper = if n.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let t1 = n.cross(&helper).normalize();
    (t1, n.cross(&t1))
}

/// Cloud points within `radius` of `x` and within `axial` of the line
/// through `x` along `normal`, ascending.
pub fn accepted_points(tree: &KdTree, x: &Vector3<f64>, normal: &Vector3<f64>, radius: f64, axial: f64) -> Vec<usize> {
    let points = tree.points();
    tree.radius_neighbors(x, radius)
        .into_iter()
        .filter(|&i| {
            let d = points[i] - x;
            (d - normal * d.dot(normal)).norm() <= axial
        })
        .collect()
}

pub fn pointcloud_targets(mesh: &TriMesh, cloud: &PointCloud, cfg: &PclConstraintConfig) -> Result<ConstraintSet> {
    let tree = KdTree::new(&cloud.points);
    pointcloud_targets_with(mesh, &tree, mesh.diagonal(), cfg)
}

/// Point-cloud targets against a prebuilt index. Radii are relative to
/// `diagonal`. Each vertex gathers the cloud points near its normal line and
/// targets their median, taken per coordinate in the vertex's
/// (tangent, bitangent, normal) frame.
pub fn pointcloud_targets_with(mesh: &TriMesh, tree: &KdTree, diagonal: f64, cfg: &PclConstraintConfig) -> Result<ConstraintSet> {
    cfg.validate()?;
    let radius = cfg.search_radius_frac * diagonal;
    let axial = cfg.axial_threshold_frac * diagonal;
    let normals = mesh.vertex_normals();
    let points = tree.points();
    let targets: Vec<Option<Vector3<f64>>> = (0..mesh.num_vertices())
        .into_par_iter()
        .map_init(Vec::new, |local: &mut Vec<Vector3<f64>>, v| {
            let n = normals.get(v)?;
            let x = mesh.vertices[v];
            let (t1, t2) = tangent_frame(&n);
            local.clear();
            for i in accepted_points(tree, &x, &n, radius, axial) {
                let d = points[i] - x;
                local.push(Vector3::new(d.dot(&t1), d.dot(&t2), d.dot(&n)));
            }
            if local.len() < cfg.min_points {
                return None;
            }
            let m = componentwise_median(local)?;
            Some(x + t1 * m.x + t2 * m.y + n * m.z)
        })
        .collect();
    Ok(ConstraintSet::from_unique(ConstraintKind::Pointcloud, targets.into_iter().enumerate().filter_map(|(v, t)| t.map(|t| (v, t, 1.0)))))
}
