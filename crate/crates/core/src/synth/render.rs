//! Shaded, procedurally textured renderings of meshes.

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::camera::{CameraPose, Intrinsics};
use crate::image::GrayImage;
use crate::mesh::TriMesh;
use crate::raster::{rasterize, NO_FACE};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Shading {
    /// Direction the light travels *from* (unit vector toward the light).
    pub light_dir: Vector3<f64>,
    pub ambient: f64,
    pub diffuse: f64,
    /// Feature size of the surface texture in scene units.
    pub texture_scale: f64,
    /// Peak-to-peak albedo variation.
    pub texture_amplitude: f64,
    pub albedo: f64,
    pub background: f32,
    pub texture_seed: u64,
}

impl Default for Shading {
    fn default() -> Self {
        Shading {
            light_dir: Vector3::new(0.3, -0.4, -1.0).normalize(),
            ambient: 0.35,
            diffuse: 0.65,
            texture_scale: 0.02,
            texture_amplitude: 0.3,
            albedo: 0.75,
            background: 0.0,
            texture_seed: 1,
        }
    }
}

fn hash3(seed: u64, x: i64, y: i64, z: i64) -> f64 {
    let mut h = seed ^ 0x51_7CC1_B727_220A;
    for v in [x, y, z] {
        h ^= v as u64;
        h = h.wrapping_mul(0x9E37_79B9_7F4A_7C15);
        h ^= h >> 32;
        h = h.wrapping_mul(0xD6E8_FEB8_6659_FD93);
        h ^= h >> 29;
    }
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn smooth(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Trilinear value noise in `[0, 1]` with unit lattice spacing.
pub fn value_noise(seed: u64, p: &Vector3<f64>) -> f64 {
    let base = p.map(f64::floor);
    let f = p - base;
    let (bx, by, bz) = (base.x as i64, base.y as i64, base.z as i64);
    let (u, v, w) = (smooth(f.x), smooth(f.y), smooth(f.z));
    let mut acc = 0.0;
    for dz in 0..2 {
        for dy in 0..2 {
            for dx in 0..2 {
                let wgt = (if dx == 1 { u } else { 1.0 - u }) * (if dy == 1 { v } else { 1.0 - v }) * (if dz == 1 { w } else { 1.0 - w });
                acc += wgt * hash3(seed, bx + dx, by + dy, bz + dz);
            }
        }
    }
    acc
}

impl Shading {
    /// Surface albedo at a world point.
    pub fn albedo_at(&self, p: &Vector3<f64>) -> f64 {
        let q = p / self.texture_scale;
        let t = 0.6 * value_noise(self.texture_seed, &q) + 0.4 * value_noise(self.texture_seed.wrapping_add(1), &(q * 2.03));
        self.albedo + self.texture_amplitude * (t - 0.5)
    }
}

/// Renders `mesh` with smooth Lambertian shading and a 3D procedural
/// albedo texture; uncovered pixels get the background value.
pub fn render_image(mesh: &TriMesh, pose: &CameraPose, intr: &Intrinsics, shading: &Shading) -> GrayImage {
    let buf = rasterize(mesh, pose, intr);
    let normals = mesh.vertex_normals();
    let light = shading.light_dir.normalize();
    let mut img = GrayImage::new(intr.width, intr.height);
    for y in 0..intr.height {
        for x in 0..intr.width {
            let i = y * intr.width + x;
            let f = buf.face[i];
            if f == NO_FACE {
                img.data[i] = shading.background;
                continue;
            }
            let z = buf.depth.depth[i] as f64;
            let p = pose.to_world(&(intr.ray(Vector2::new(x as f64, y as f64)) * z));
            let [a, b, c] = mesh.faces[f as usize];
            let bary = barycentric(&p, &mesh.vertices[a], &mesh.vertices[b], &mesh.vertices[c]);
            let n = (normals.normals[a] * bary.x + normals.normals[b] * bary.y + normals.normals[c] * bary.z)
                .try_normalize(1e-12)
                .unwrap_or_else(|| mesh.face_normal(f as usize).normalize());
            let lambert = n.dot(&light).max(0.0);
            let v = shading.albedo_at(&p) * (shading.ambient + shading.diffuse * lambert);
            img.data[i] = v.clamp(0.0, 1.0) as f32;
        }
    }
    img
}

fn barycentric(p: &Vector3<f64>, a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>) -> Vector3<f64> {
    let v0 = b - a;
    let v1 = c - a;
    let v2 = p - a;
    let d00 = v0.dot(&v0);
    let d01 = v0.dot(&v1);
    let d11 = v1.dot(&v1);
    let d20 = v2.dot(&v0);
    let d21 = v2.dot(&v1);
    let denom = d00 * d11 - d01 * d01;
    if denom.abs() < 1e-300 {
        return Vector3::new(1.0, 0.0, 0.0);
    }
    let v = (d11 * d20 - d01 * d21) / denom;
    let w = (d00 * d21 - d01 * d20) / denom;
    let v = v.clamp(0.0, 1.0);
    let w = w.clamp(0.0, 1.0 - v);
    Vector3::new(1.0 - v - w, v, w)
}
