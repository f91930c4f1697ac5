use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::{ConstraintKind, ConstraintSet, EdgeMap};
use crate::camera::{CameraPose, Intrinsics, Keyframe};
use crate::error::{Error, Result};
use crate::mesh::TriMesh;
use crate::raster::{is_front_facing, render_depth};

/// Relative slack of the visibility test against the Z-buffer.
const VISIBILITY_REL_TOL: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EdgeConfig {
    /// Matching radius in pixels at `reference_width`.
    pub tau_edge_px: f64,
    pub reference_width: f64,
    pub low: f64,
    pub high: f64,
}

impl Default for EdgeConfig {
    fn default() -> Self {
        EdgeConfig { tau_edge_px: 10.0, reference_width: 640.0, low: 0.1, high: 0.2 }
    }
}

impl EdgeConfig {
    /// Matching radius for an image `width` pixels wide.
    pub fn tau_for(&self, width: usize) -> f64 {
        self.tau_edge_px * width as f64 / self.reference_width
    }
}

/// Occluding-contour edges: edges between a front- and a back-facing
/// triangle, and boundary edges of front-facing triangles.
pub fn contour_edges(mesh: &TriMesh, center: &Vector3<f64>) -> Vec<(usize, usize)> {
    let front: Vec<bool> = (0..mesh.faces.len()).map(|f| is_front_facing(mesh, f, center)).collect();
    mesh.edge_faces()
        .into_iter()
        .filter(|(_, faces)| {
            let nf = faces.iter().filter(|&&f| front[f]).count();
            match faces.len() {
                1 => nf == 1,
                _ => nf > 0 && nf < faces.len(),
            }
        })
        .map(|(e, _)| e)
        .collect()
}

/// Visible vertices lying on an occluding contour, ascending.
pub fn contour_vertices(mesh: &TriMesh, pose: &CameraPose, intr: &Intrinsics) -> Vec<usize> {
    if mesh.is_empty() {
        return Vec::new();
    }
    let center = pose.center();
    let mut on_contour = vec![false; mesh.num_vertices()];
    for (a, b) in contour_edges(mesh, &center) {
        on_contour[a] = true;
        on_contour[b] = true;
    }
    let zbuf = render_depth(mesh, pose, intr);
    (0..mesh.num_vertices())
        .filter(|&v| on_contour[v])
        .filter(|&v| {
            let xc = pose.to_camera(&mesh.vertices[v]);
            if !(xc.z > 0.0) {
                return false;
            }
            let p = Vector2::new(intr.fx * xc.x / xc.z + intr.cx, intr.fy * xc.y / xc.z + intr.cy);
            let Some((x, y)) = intr.pixel_index(p) else { return false };
            // Uncovered pixels (silhouette vertices whose pixel center
            // misses the surface) cannot occlude the vertex.
            zbuf.get(x, y).is_none_or(|z| xc.z <= z * (1.0 + VISIBILITY_REL_TOL))
        })
        .collect()
}

/// A contour vertex matched to an edge pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeMatch {
    pub vertex: usize,
    pub target: Vector3<f64>,
    pub pixel_distance: f64,
}

fn edge_matches(mesh: &TriMesh, kf: &Keyframe, edges: &EdgeMap, tau_px: f64) -> Result<Vec<EdgeMatch>> {
    if edges.width != kf.intrinsics.width || edges.height != kf.intrinsics.height {
        return Err(Error::DimensionMismatch(format!(
            "edge map {}x{} for keyframe {} of size {}x{}",
            edges.width, edges.height, kf.id, kf.intrinsics.width, kf.intrinsics.height
        )));
    }
    let mut out = Vec::new();
    for v in contour_vertices(mesh, &kf.pose, &kf.intrinsics) {
        let Ok((p, depth)) = kf.project(&mesh.vertices[v]) else { continue };
        let Some((ex, ey)) = edges.nearest_edge(p) else { continue };
        let e = Vector2::new(ex as f64, ey as f64);
        let dist = (e - p).norm();
        if dist > tau_px {
            continue;
        }
        out.push(EdgeMatch { vertex: v, target: kf.backproject(e, depth)?, pixel_distance: dist });
    }
    Ok(out)
}

/// Edge targets from one keyframe: each visible contour vertex is pulled to
/// its nearest edge pixel, lifted at the vertex's own depth.
pub fn edge_targets(mesh: &TriMesh, kf: &Keyframe, edges: &EdgeMap, tau_px: f64) -> Result<ConstraintSet> {
    let matches = edge_matches(mesh, kf, edges, tau_px)?;
    Ok(ConstraintSet::from_unique(ConstraintKind::Edge, matches.into_iter().map(|m| (m.vertex, m.target, 1.0))))
}

/// Edge targets from several keyframes. A vertex matched in more than one
/// keyframe keeps the match with the smallest pixel distance, ties going to
/// the lower keyframe id.
pub fn edge_targets_multi(mesh: &TriMesh, keyframes: &[Keyframe], edges: &[EdgeMap], cfg: &EdgeConfig) -> Result<ConstraintSet> {
    use rayon::prelude::*;
    if keyframes.len() != edges.len() {
        return Err(Error::DimensionMismatch(format!("{} keyframes but {} edge maps", keyframes.len(), edges.len())));
    }
    let per_view: Vec<Result<(u32, Vec<EdgeMatch>)>> =
        keyframes.par_iter().zip(edges).map(|(kf, e)| Ok((kf.id, edge_matches(mesh, kf, e, cfg.tau_for(kf.intrinsics.width))?))).collect();
    let mut best: Vec<Option<(f64, u32, Vector3<f64>)>> = vec![None; mesh.num_vertices()];
    for r in per_view {
        let (id, matches) = r?;
        for m in matches {
            let slot = &mut best[m.vertex];
            let better = match slot {
                None => true,
                Some((d, kid, _)) => m.pixel_distance < *d || (m.pixel_distance == *d && id < *kid),
            };
            if better {
                *slot = Some((m.pixel_distance, id, m.target));
            }
        }
    }
    Ok(ConstraintSet::from_unique(ConstraintKind::Edge, best.into_iter().enumerate().filter_map(|(v, b)| b.map(|(_, _, t)| (v, t, 1.0)))))
}
