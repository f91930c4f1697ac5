use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::{CorrespondenceTable, Landmark3D};
use crate::error::{Error, Result};
use crate::mesh::TriMesh;

/// `x -> scale * rotation * x + translation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Similarity {
    pub scale: f64,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Similarity {
    pub fn identity() -> Self {
        Similarity { scale: 1.0, rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    pub fn apply(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.scale * (self.rotation * x) + self.translation
    }

    pub fn inverse(&self) -> Similarity {
        let rt = self.rotation.transpose();
        Similarity { scale: 1.0 / self.scale, rotation: rt, translation: -(rt * self.translation) / self.scale }
    }
}

#[derive(Debug, Clone)]
pub struct SimilarityAlignment {
    pub mesh: TriMesh,
    pub transform: Similarity,
    /// RMS distance between transformed template vertices and landmarks.
    pub rms: f64,
    pub num_correspondences: usize,
}

/// Closed-form least-squares similarity mapping `src` onto `dst`.
pub fn umeyama(src: &[Vector3<f64>], dst: &[Vector3<f64>]) -> Result<Similarity> {
    fit_transform(src, dst, true)
}

/// Least-squares rigid motion (unit scale) mapping `src` onto `dst`, for
/// registering a reconstruction to ground truth before evaluation.
pub fn rigid_align(src: &[Vector3<f64>], dst: &[Vector3<f64>]) -> Result<Similarity> {
    fit_transform(src, dst, false)
}

fn fit_transform(src: &[Vector3<f64>], dst: &[Vector3<f64>], with_scale: bool) -> Result<Similarity> {
    if src.len() != dst.len() {
        return Err(Error::DimensionMismatch(format!("{} source vs {} target points", src.len(), dst.len())));
    }
    if src.len() < 3 {
        return Err(Error::Degenerate(format!("{} correspondence(s), need at least 3", src.len())));
    }
    let n = src.len() as f64;
    let mu_s = src.iter().sum::<Vector3<f64>>() / n;
    let mu_d = dst.iter().sum::<Vector3<f64>>() / n;
    let mut cov = Matrix3::zeros();
    let mut var_s = 0.0;
    for (s, d) in src.iter().zip(dst) {
        let (sc, dc) = (s - mu_s, d - mu_d);
        cov += dc * sc.transpose();
        var_s += sc.norm_squared();
    }
    cov /= n;
    var_s /= n;
    let svd = cov.svd(true, true);
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    // Coplanar points give one zero singular value; collinear ones two.
    if !(sv[1] >= 1e-9 * sv[0]) || sv[0] == 0.0 {
        return Err(Error::Degenerate(format!(
            "correspondences are collinear (singular values {:.3e}, {:.3e}, {:.3e})",
            sv[0], sv[1], sv[2]
        )));
    }
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");
    let mut d = Matrix3::identity();
    if (u.determinant() * v_t.determinant()) < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let rotation = u * d * v_t;
    let trace: f64 = (0..3).map(|k| svd.singular_values[k] * d[(k, k)]).sum();
    let scale = if with_scale { trace / var_s } else { 1.0 };
    let translation = mu_d - rotation * mu_s * scale;
    Ok(Similarity { scale, rotation, translation })
}

/// Similarity-aligns `template` so that its corresponding vertices land on
/// the triangulated landmarks.
pub fn similarity_align(template: &TriMesh, table: &CorrespondenceTable, landmarks: &[Landmark3D]) -> Result<SimilarityAlignment> {
    table.validate(template.num_vertices())?;
    let mut src = Vec::with_capacity(landmarks.len());
    let mut dst = Vec::with_capacity(landmarks.len());
    for l in landmarks {
        src.push(template.vertices[table.vertex(l.landmark_id)?]);
        dst.push(l.position);
    }
    let transform = umeyama(&src, &dst)?;
    let rms = (src.iter().zip(&dst).map(|(s, d)| (transform.apply(s) - d).norm_squared()).sum::<f64>() / src.len() as f64).sqrt();
    Ok(SimilarityAlignment {
        mesh: template.transformed(transform.scale, &transform.rotation, &transform.translation),
        transform,
        rms,
        num_correspondences: src.len(),
    })
}
