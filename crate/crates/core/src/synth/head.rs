//! Procedural head proxy: a displaced icosphere with face and ear features,
//! plus a landmark layout on it.
//!
//! Head frame: +y up, +z out of the face, ears on ±x.

use std::collections::HashSet;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::landmarks::{CorrespondenceTable, EAR_ID_BASE, FACE_CONTOUR_IDS};
use crate::mesh::TriMesh;

/// Radial Gaussian feature: relative height `amplitude` at unit direction
/// `center`, angular width `width` (radians).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center: [f64; 3],
    pub width: f64,
    pub amplitude: f64,
}

impl Bump {
    fn new(c: [f64; 3], width: f64, amplitude: f64) -> Self {
        let v = Vector3::from(c).normalize();
        Bump { center: [v.x, v.y, v.z], width, amplitude }
    }

    fn eval(&self, d: &Vector3<f64>) -> f64 {
        let c = Vector3::from(self.center);
        self.amplitude * (-(1.0 - d.dot(&c)) / (self.width * self.width)).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadParams {
    /// Semi-axes of the base ellipsoid.
    pub axes: [f64; 3],
    pub bumps: Vec<Bump>,
    pub subdivisions: u32,
}

impl HeadParams {
    /// The ground-truth subject of the synthetic benchmark.
    pub fn subject() -> Self {
        HeadParams { axes: [0.078, 0.105, 0.095], bumps: features(0.22, 0.26, 0.08, 1.0), subdivisions: 5 }
    }

    /// A generic template head: different proportions and weaker features.
    pub fn template() -> Self {
        HeadParams { axes: [0.082, 0.1, 0.098], bumps: features(0.14, 0.17, 0.05, 0.6), subdivisions: 5 }
    }

    pub fn radius(&self, d: &Vector3<f64>) -> f64 {
        let [a, b, c] = self.axes;
        let re = 1.0 / ((d.x / a).powi(2) + (d.y / b).powi(2) + (d.z / c).powi(2)).sqrt();
        re * (1.0 + self.bumps.iter().map(|bump| bump.eval(d)).sum::<f64>())
    }

    pub fn mesh(&self) -> TriMesh {
        let sphere = TriMesh::icosphere(self.subdivisions, 1.0);
        let v = sphere.vertices.iter().map(|d| d * self.radius(d)).collect();
        sphere.with_vertices(v)
    }
}

fn features(nose: f64, ears: f64, chin: f64, detail: f64) -> Vec<Bump> {
    let mut b = vec![
        Bump::new([0.0, -0.05, 1.0], 0.13, nose),
        Bump::new([0.0, -0.12, 1.0], 0.06, 0.45 * nose),
        Bump::new([0.0, -0.62, 0.78], 0.16, chin),
        Bump::new([0.0, -0.36, 1.0], 0.09, 0.04 * detail),
    ];
    for s in [-1.0, 1.0] {
        b.push(Bump::new([0.3 * s, 0.26, 1.0], 0.14, 0.05 * detail));
        b.push(Bump::new([0.32 * s, 0.13, 1.0], 0.09, -0.06 * detail));
        b.push(Bump::new([0.55 * s, -0.2, 0.8], 0.2, 0.04 * detail));
        b.push(Bump::new([s, 0.05, -0.1], 0.14, ears));
    }
    b
}

/// Unit directions of the landmark layout: ids 0–67 in the 68-point face
/// convention, ids 100–119 on the ears (100–109 left, 110–119 right; the
/// first six of each ear trace its outer contour).
pub fn landmark_directions() -> Vec<(i64, Vector3<f64>)> {
    let mut out: Vec<(i64, Vector3<f64>)> = Vec::new();
    let mut push = |id: i64, x: f64, y: f64, z: f64| out.push((id, Vector3::new(x, y, z).normalize()));
    for k in FACE_CONTOUR_IDS {
        let s = -1.0 + 2.0 * k as f64 / 16.0;
        let a = 1.3 * s;
        push(k, 0.95 * a.sin(), -0.05 - 0.6 * (1.0 - s * s).sqrt(), 0.9 * a.cos());
    }
    for (i, k) in (17..27).enumerate() {
        let (side, t) = if i < 5 { (-1.0, i as f64 / 4.0) } else { (1.0, (i - 5) as f64 / 4.0) };
        let x = if side < 0.0 { -0.5 + 0.35 * t } else { 0.15 + 0.35 * t };
        push(k, x, 0.3 + 0.04 * (1.0 - (2.0 * t - 1.0).powi(2)), 1.0);
    }
    for (i, k) in (27..31).enumerate() {
        push(k, 0.0, 0.2 - 0.085 * i as f64, 1.0);
    }
    for (i, k) in (31..36).enumerate() {
        push(k, -0.12 + 0.06 * i as f64, -0.13, 1.0);
    }
    for (e, cx) in [-0.32, 0.32].into_iter().enumerate() {
        for i in 0..6 {
            let a = std::f64::consts::PI * (1.0 - i as f64 / 3.0);
            push(36 + 6 * e as i64 + i as i64, cx + 0.1 * a.cos(), 0.15 + 0.045 * a.sin(), 1.0);
        }
    }
    for i in 0..12 {
        let a = std::f64::consts::PI * (1.0 - i as f64 / 6.0);
        push(48 + i, 0.2 * a.cos(), -0.36 + 0.08 * a.sin(), 1.0);
    }
    for i in 0..8 {
        let a = std::f64::consts::PI * (1.0 - i as f64 / 4.0);
        push(60 + i, 0.11 * a.cos(), -0.36 + 0.035 * a.sin(), 1.0);
    }
    for (e, s) in [-1.0, 1.0].into_iter().enumerate() {
        let base = EAR_ID_BASE + 10 * e as i64;
        let c = Vector3::new(s, 0.05, -0.1).normalize();
        let u = Vector3::y().cross(&c).normalize();
        let v = c.cross(&u);
        for i in 0..10 {
            let (r, n, j) = if i < 6 { (0.2, 6.0, i) } else { (0.08, 4.0, i - 6) };
            let a = 2.0 * std::f64::consts::PI * j as f64 / n;
            let d = c + (u * a.cos() + v * a.sin()) * r;
            push(base + i as i64, d.x, d.y, d.z);
        }
    }
    out
}

/// Correspondence table mapping each landmark to the vertex of a unit
/// icosphere of `subdivisions` levels nearest its direction (distinct
/// vertices, assigned in id order). The jaw contour is excluded and the
/// ear outer contours are the designated ear subset.
pub fn head_correspondences(subdivisions: u32) -> CorrespondenceTable {
    let sphere = TriMesh::icosphere(subdivisions, 1.0);
    let mut used = HashSet::new();
    let mut entries = Vec::new();
    for (id, d) in landmark_directions() {
        let best = (0..sphere.num_vertices())
            .filter(|v| !used.contains(v))
            .max_by(|&a, &b| sphere.vertices[a].dot(&d).total_cmp(&sphere.vertices[b].dot(&d)).then(b.cmp(&a)))
            .expect("more vertices than landmarks");
        used.insert(best);
        entries.push((id, best));
    }
    let mut table = CorrespondenceTable::new(entries).expect("landmark ids are unique");
    table.excluded_landmark_ids = Some(FACE_CONTOUR_IDS.collect());
    table.ear_outer_contour_ids = Some((0..2).flat_map(|e| (0..6).map(move |i| EAR_ID_BASE + 10 * e + i)).collect());
    table
}
