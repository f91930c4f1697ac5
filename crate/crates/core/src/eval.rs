//! Accuracy / completion metrics and error heatmaps.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::TriMesh;
use crate::spatial::MeshDistance;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricStats {
    pub mean: f64,
    pub std_dev: f64,
    pub median: f64,
    pub max: f64,
    pub count: usize,
}

impl MetricStats {
    /// Population statistics; the median of an even count averages the two
    /// middle values.
    pub fn from_distances(d: &[f64]) -> Result<MetricStats> {
        if d.is_empty() {
            return Err(Error::InvalidInput("no distances".into()));
        }
        let n = d.len() as f64;
        let mean = d.iter().sum::<f64>() / n;
        let var = d.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        let mut sorted = d.to_vec();
        sorted.sort_by(f64::total_cmp);
        let m = sorted.len() / 2;
        let median = if sorted.len() % 2 == 1 { sorted[m] } else { 0.5 * (sorted[m - 1] + sorted[m]) };
        Ok(MetricStats { mean, std_dev: var.sqrt(), median, max: sorted[sorted.len() - 1], count: d.len() })
    }
}

/// Distance from every vertex of `from` to the surface of `to`.
pub fn vertex_to_surface(from: &TriMesh, to: &TriMesh) -> Result<Vec<f64>> {
    if from.vertices.is_empty() {
        return Err(Error::EmptyMesh);
    }
    let tree = MeshDistance::new(to)?;
    Ok(from.vertices.par_iter().map(|v| tree.distance(v)).collect())
}

/// Reconstruction vertices to the ground-truth surface.
pub fn accuracy(recon: &TriMesh, gt: &TriMesh) -> Result<(MetricStats, Vec<f64>)> {
    let d = vertex_to_surface(recon, gt)?;
    Ok((MetricStats::from_distances(&d)?, d))
}

/// Ground-truth vertices to the reconstruction surface.
pub fn completion(recon: &TriMesh, gt: &TriMesh) -> Result<(MetricStats, Vec<f64>)> {
    accuracy(gt, recon)
}

/// Blue → red color map: hue falls linearly from 240° at `d = 0` to 0° at
/// `d ≥ d_max`, full saturation and value.
pub fn heatmap_color(d: f64, d_max: f64) -> [u8; 3] {
    let t = if d_max > 0.0 {
        (d / d_max).clamp(0.0, 1.0)
    } else if d > 0.0 {
        1.0
    } else {
        0.0
    };
    let hue = 240.0 * (1.0 - t);
    let sector = hue / 60.0;
    let x = 1.0 - (sector % 2.0 - 1.0).abs();
    let (r, g, b) = match sector as u32 {
        0 => (1.0, x, 0.0),
        1 => (x, 1.0, 0.0),
        2 => (0.0, 1.0, x),
        _ => (0.0, x, 1.0),
    };
    [r, g, b].map(|c: f64| (c * 255.0).round() as u8)
}

pub fn heatmap_colors(distances: &[f64], d_max: f64) -> Vec<[u8; 3]> {
    distances.iter().map(|&d| heatmap_color(d, d_max)).collect()
}

/// Writes `mesh` as binary PLY colored by per-vertex error.
pub fn error_heatmap(mesh: &TriMesh, distances: &[f64], d_max: f64, path: &Path) -> Result<()> {
    if distances.len() != mesh.num_vertices() {
        return Err(Error::DimensionMismatch(format!("{} distances for {} vertices", distances.len(), mesh.num_vertices())));
    }
    let colors = heatmap_colors(distances, d_max);
    crate::io::write_mesh_ply(path, mesh, Some(&colors), crate::io::PlyFormat::BinaryLittleEndian)
}
