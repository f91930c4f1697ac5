//! Fixed-topology triangle meshes.

use std::collections::HashMap;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl Aabb {
    pub fn empty() -> Self {
        Aabb { min: Vector3::repeat(f64::INFINITY), max: Vector3::repeat(f64::NEG_INFINITY) }
    }

    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Vector3<f64>>) -> Self {
        let mut b = Aabb::empty();
        for p in points {
            b.grow(p);
        }
        b
    }

    #[inline]
    pub fn grow(&mut self, p: &Vector3<f64>) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    pub fn merge(&self, other: &Aabb) -> Aabb {
        Aabb { min: self.min.inf(&other.min), max: self.max.sup(&other.max) }
    }

    pub fn diagonal(&self) -> f64 {
        if self.min.x > self.max.x {
            return 0.0;
        }
        (self.max - self.min).norm()
    }

    pub fn center(&self) -> Vector3<f64> {
        (self.min + self.max) * 0.5
    }

    pub fn corners(&self) -> [Vector3<f64>; 8] {
        let (a, b) = (self.min, self.max);
        [
            Vector3::new(a.x, a.y, a.z),
            Vector3::new(b.x, a.y, a.z),
            Vector3::new(a.x, b.y, a.z),
            Vector3::new(b.x, b.y, a.z),
            Vector3::new(a.x, a.y, b.z),
            Vector3::new(b.x, a.y, b.z),
            Vector3::new(a.x, b.y, b.z),
            Vector3::new(b.x, b.y, b.z),
        ]
    }

    /// Squared distance from `p` to the box (0 inside).
    #[inline]
    pub fn distance_squared(&self, p: &Vector3<f64>) -> f64 {
        let mut d = 0.0;
        for k in 0..3 {
            let v = if p[k] < self.min[k] {
                self.min[k] - p[k]
            } else if p[k] > self.max[k] {
                p[k] - self.max[k]
            } else {
                0.0
            };
            d += v * v;
        }
        d
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriMesh {
    pub vertices: Vec<Vector3<f64>>,
    pub faces: Vec<[usize; 3]>,
}

/// Per-vertex normals; vertices without any non-degenerate incident face
/// carry a zero placeholder and `degenerate[i] == true`.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexNormals {
    pub normals: Vec<Vector3<f64>>,
    pub degenerate: Vec<bool>,
}

impl VertexNormals {
    pub fn get(&self, i: usize) -> Option<Vector3<f64>> {
        (!self.degenerate[i]).then(|| self.normals[i])
    }
}

impl TriMesh {
    pub fn new(vertices: Vec<Vector3<f64>>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let mesh = TriMesh { vertices, faces };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        for (fi, f) in self.faces.iter().enumerate() {
            if f.iter().any(|&i| i >= n) {
                return Err(Error::InvalidInput(format!("face {fi} references vertex out of range (n = {n}): {f:?}")));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::InvalidInput(format!("face {fi} is degenerate: {f:?}")));
            }
        }
        if let Some(i) = self.vertices.iter().position(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidInput(format!("vertex {i} is not finite")));
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty() || self.faces.is_empty()
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn bbox(&self) -> Aabb {
        Aabb::from_points(&self.vertices)
    }

    pub fn diagonal(&self) -> f64 {
        self.bbox().diagonal()
    }

    pub fn centroid(&self) -> Vector3<f64> {
        if self.vertices.is_empty() {
            return Vector3::zeros();
        }
        self.vertices.iter().sum::<Vector3<f64>>() / self.vertices.len() as f64
    }

    #[inline]
    pub fn triangle(&self, f: usize) -> [Vector3<f64>; 3] {
        let [a, b, c] = self.faces[f];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Unnormalized face normal (twice the area), counter-clockwise winding.
    #[inline]
    pub fn face_normal(&self, f: usize) -> Vector3<f64> {
        let [a, b, c] = self.triangle(f);
        (b - a).cross(&(c - a))
    }

    /// Undirected edges `(u, v)` with `u < v`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut edges: Vec<(usize, usize)> =
            self.faces.iter().flat_map(|f| [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])]).map(|(a, b)| (a.min(b), a.max(b))).collect();
        edges.sort_unstable();
        edges.dedup();
        edges
    }

    /// Every undirected edge with the faces that contain it.
    pub fn edge_faces(&self) -> Vec<((usize, usize), Vec<usize>)> {
        let mut map: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for (fi, f) in self.faces.iter().enumerate() {
            for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
                map.entry((a.min(b), a.max(b))).or_default().push(fi);
            }
        }
        let mut out: Vec<_> = map.into_iter().collect();
        out.sort_unstable_by_key(|(e, _)| *e);
        out
    }

    /// Area-weighted vertex normals.
    pub fn vertex_normals(&self) -> VertexNormals {
        let mut acc = vec![Vector3::zeros(); self.vertices.len()];
        for fi in 0..self.faces.len() {
            let n = self.face_normal(fi);
            for &v in &self.faces[fi] {
                acc[v] += n;
            }
        }
        let mut degenerate = vec![false; acc.len()];
        let normals = acc
            .into_iter()
            .enumerate()
            .map(|(i, n)| {
                let len = n.norm();
                if len > 1e-300 && len.is_finite() {
                    n / len
                } else {
                    degenerate[i] = true;
                    Vector3::zeros()
                }
            })
            .collect();
        VertexNormals { normals, degenerate }
    }

    pub fn transformed(&self, scale: f64, rotation: &Matrix3<f64>, translation: &Vector3<f64>) -> TriMesh {
        TriMesh { vertices: self.vertices.iter().map(|v| scale * (rotation * v) + translation).collect(), faces: self.faces.clone() }
    }

    pub fn with_vertices(&self, vertices: Vec<Vector3<f64>>) -> TriMesh {
        assert_eq!(vertices.len(), self.vertices.len());
        TriMesh { vertices, faces: self.faces.clone() }
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| 0.5 * self.face_normal(f).norm()).sum()
    }

    /// One-to-four midpoint subdivision; new vertices lie on the old faces.
    pub fn subdivided(&self) -> TriMesh {
        let mut vertices = self.vertices.clone();
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, vertices: &mut Vec<Vector3<f64>>| -> usize {
            *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
                vertices.push((vertices[a] + vertices[b]) * 0.5);
                vertices.len() - 1
            })
        };
        let mut faces = Vec::with_capacity(self.faces.len() * 4);
        for &[a, b, c] in &self.faces {
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            faces.extend_from_slice(&[[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]);
        }
        TriMesh { vertices, faces }
    }

    /// Icosphere: `level` subdivisions of an icosahedron projected to the
    /// sphere. Level 4 has 2562 vertices, level 5 has 10242.
    pub fn icosphere(level: u32, radius: f64) -> TriMesh {
        let t = (1.0 + 5f64.sqrt()) / 2.0;
        let raw = [
            (-1.0, t, 0.0),
            (1.0, t, 0.0),
            (-1.0, -t, 0.0),
            (1.0, -t, 0.0),
            (0.0, -1.0, t),
            (0.0, 1.0, t),
            (0.0, -1.0, -t),
            (0.0, 1.0, -t),
            (t, 0.0, -1.0),
            (t, 0.0, 1.0),
            (-t, 0.0, -1.0),
            (-t, 0.0, 1.0),
        ];
        let vertices = raw.iter().map(|&(x, y, z)| Vector3::new(x, y, z).normalize()).collect();
        let faces = vec![
            [0, 11, 5],
            [0, 5, 1],
            [0, 1, 7],
            [0, 7, 10],
            [0, 10, 11],
            [1, 5, 9],
            [5, 11, 4],
            [11, 10, 2],
            [10, 7, 6],
            [7, 1, 8],
            [3, 9, 4],
            [3, 4, 2],
            [3, 2, 6],
            [3, 6, 8],
            [3, 8, 9],
            [4, 9, 5],
            [2, 4, 11],
            [6, 2, 10],
            [8, 6, 7],
            [9, 8, 1],
        ];
        let mut mesh = TriMesh { vertices, faces };
        for _ in 0..level {
            mesh = mesh.subdivided();
            for v in &mut mesh.vertices {
                *v = v.normalize();
            }
        }
        for v in &mut mesh.vertices {
            *v *= radius;
        }
        mesh
    }

    /// `nx` by `ny` grid of quads in the plane `z = z0` spanning
    /// `[x0, x1] x [y0, y1]`, wound so normals point along +z.
    pub fn grid(nx: usize, ny: usize, x: (f64, f64), y: (f64, f64), z0: f64) -> TriMesh {
        let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            for i in 0..=nx {
                vertices.push(Vector3::new(x.0 + (x.1 - x.0) * i as f64 / nx as f64, y.0 + (y.1 - y.0) * j as f64 / ny as f64, z0));
            }
        }
        let idx = |i: usize, j: usize| j * (nx + 1) + i;
        let mut faces = Vec::with_capacity(2 * nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                faces.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
                faces.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
            }
        }
        TriMesh { vertices, faces }
    }

    /// Axis-aligned cube `[lo, hi]^3` with outward normals.
    pub fn cube(lo: f64, hi: f64) -> TriMesh {
        let vertices = (0..8)
            .map(|i| Vector3::new(if i & 1 == 0 { lo } else { hi }, if i & 2 == 0 { lo } else { hi }, if i & 4 == 0 { lo } else { hi }))
            .collect();
        let faces = vec![
            [0, 2, 1],
            [1, 2, 3],
            [4, 5, 6],
            [5, 7, 6],
            [0, 1, 4],
            [1, 5, 4],
            [2, 6, 3],
            [3, 6, 7],
            [0, 4, 2],
            [2, 4, 6],
            [1, 3, 5],
            [3, 7, 5],
        ];
        TriMesh { vertices, faces }
    }
}
