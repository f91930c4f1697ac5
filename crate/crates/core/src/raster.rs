//! Z-buffer rasterization with backface culling.
//!
//! Pixel centers sit at integer coordinates. Coverage uses a top-left fill
//! rule so pixels on shared edges belong to exactly one triangle, and depth
//! is interpolated perspective-correctly (linear in `1/z`).

use nalgebra::{Vector2, Vector3};

use crate::camera::{CameraPose, Intrinsics};
use crate::depth::DepthMap;
use crate::mesh::TriMesh;

const NEAR: f64 = 1e-6;
pub const NO_FACE: u32 = u32::MAX;

/// Depth plus the index of the visible face per pixel.
#[derive(Debug, Clone)]
pub struct RenderBuffer {
    pub depth: DepthMap,
    pub face: Vec<u32>,
}

/// Whether face `f` faces the camera centered at `center`.
#[inline]
pub fn is_front_facing(mesh: &TriMesh, f: usize, center: &Vector3<f64>) -> bool {
    let v0 = mesh.vertices[mesh.faces[f][0]];
    mesh.face_normal(f).dot(&(center - v0)) > 0.0
}

pub fn render_depth(mesh: &TriMesh, pose: &CameraPose, intr: &Intrinsics) -> DepthMap {
    rasterize(mesh, pose, intr).depth
}

pub fn rasterize(mesh: &TriMesh, pose: &CameraPose, intr: &Intrinsics) -> RenderBuffer {
    let (w, h) = (intr.width, intr.height);
    let mut zbuf = vec![f64::INFINITY; w * h];
    let mut face = vec![NO_FACE; w * h];
    let center = pose.center();
    let cam: Vec<Vector3<f64>> = mesh.vertices.iter().map(|v| pose.to_camera(v)).collect();

    for (fi, f) in mesh.faces.iter().enumerate() {
        if !is_front_facing(mesh, fi, &center) {
            continue;
        }
        let tri = [cam[f[0]], cam[f[1]], cam[f[2]]];
        if tri.iter().all(|p| p.z <= NEAR) {
            continue;
        }
        if tri.iter().all(|p| p.z > NEAR) {
            draw_triangle(&tri, intr, fi as u32, &mut zbuf, &mut face);
        } else {
            let poly = clip_near(&tri);
            for k in 1..poly.len().saturating_sub(1) {
                draw_triangle(&[poly[0], poly[k], poly[k + 1]], intr, fi as u32, &mut zbuf, &mut face);
            }
        }
    }

    let mut depth = DepthMap::invalid(w, h);
    for i in 0..w * h {
        if face[i] != NO_FACE {
            depth.depth[i] = zbuf[i] as f32;
            depth.valid[i] = true;
        }
    }
    RenderBuffer { depth, face }
}

fn clip_near(tri: &[Vector3<f64>; 3]) -> Vec<Vector3<f64>> {
    let mut out = Vec::with_capacity(4);
    for k in 0..3 {
        let a = tri[k];
        let b = tri[(k + 1) % 3];
        let ina = a.z > NEAR;
        let inb = b.z > NEAR;
        if ina {
            out.push(a);
        }
        if ina != inb {
            let t = (NEAR - a.z) / (b.z - a.z);
            let mut p = a + (b - a) * t;
            p.z = NEAR * (1.0 + 1e-9);
            out.push(p);
        }
    }
    out
}

#[inline]
fn edge(a: &Vector2<f64>, b: &Vector2<f64>, p: &Vector2<f64>) -> f64 {
    (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x)
}

/// Edge `a -> b` owns pixels lying exactly on it.
#[inline]
fn owns_boundary(a: &Vector2<f64>, b: &Vector2<f64>) -> bool {
    let d = b - a;
    d.y < 0.0 || (d.y == 0.0 && d.x > 0.0)
}

fn draw_triangle(tri: &[Vector3<f64>; 3], intr: &Intrinsics, fid: u32, zbuf: &mut [f64], face: &mut [u32]) {
    let (w, h) = (intr.width, intr.height);
    let proj = |p: &Vector3<f64>| Vector2::new(intr.fx * p.x / p.z + intr.cx, intr.fy * p.y / p.z + intr.cy);
    let mut s = [proj(&tri[0]), proj(&tri[1]), proj(&tri[2])];
    let mut inv_z = [1.0 / tri[0].z, 1.0 / tri[1].z, 1.0 / tri[2].z];
    let mut area = edge(&s[0], &s[1], &s[2]);
    if area == 0.0 || !area.is_finite() {
        return;
    }
    if area < 0.0 {
        s.swap(1, 2);
        inv_z.swap(1, 2);
        area = -area;
    }
    let xmin = s.iter().map(|p| p.x).fold(f64::INFINITY, f64::min).ceil().max(0.0);
    let xmax = s.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max).floor().min(w as f64 - 1.0);
    let ymin = s.iter().map(|p| p.y).fold(f64::INFINITY, f64::min).ceil().max(0.0);
    let ymax = s.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max).floor().min(h as f64 - 1.0);
    if xmin > xmax || ymin > ymax {
        return;
    }
    let own = [owns_boundary(&s[1], &s[2]), owns_boundary(&s[2], &s[0]), owns_boundary(&s[0], &s[1])];
    for y in ymin as usize..=ymax as usize {
        for x in xmin as usize..=xmax as usize {
            let p = Vector2::new(x as f64, y as f64);
            let e = [edge(&s[1], &s[2], &p), edge(&s[2], &s[0], &p), edge(&s[0], &s[1], &p)];
            if (0..3).any(|k| e[k] < 0.0 || (e[k] == 0.0 && !own[k])) {
                continue;
            }
            let iz = (e[0] * inv_z[0] + e[1] * inv_z[1] + e[2] * inv_z[2]) / area;
            let z = 1.0 / iz;
            let i = y * w + x;
            if z < zbuf[i] {
                zbuf[i] = z;
                face[i] = fid;
            }
        }
    }
}
