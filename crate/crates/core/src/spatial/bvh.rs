use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::mesh::{Aabb, TriMesh};

const LEAF_SIZE: usize = 4;

#[derive(Debug, Clone)]
struct Node {
    bounds: Aabb,
    /// Leaf: `[start, end)` into `order`; inner: children indices.
    kind: NodeKind,
}

#[derive(Debug, Clone)]
enum NodeKind {
    Leaf(usize, usize),
    Inner(usize, usize),
}

/// Bounding-volume hierarchy over the triangles of a mesh for exact
/// closest-point queries.
#[derive(Debug, Clone)]
pub struct MeshDistance {
    tris: Vec<[Vector3<f64>; 3]>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl MeshDistance {
    pub fn new(mesh: &TriMesh) -> Result<Self> {
        if mesh.faces.is_empty() {
            return Err(Error::EmptyMesh);
        }
        let tris: Vec<_> = (0..mesh.faces.len()).map(|f| mesh.triangle(f)).collect();
        let mut bvh = MeshDistance { order: (0..tris.len()).collect(), tris, nodes: Vec::new() };
        let centroids: Vec<Vector3<f64>> = bvh.tris.iter().map(|t| (t[0] + t[1] + t[2]) / 3.0).collect();
        bvh.build(0, bvh.tris.len(), &centroids);
        Ok(bvh)
    }

    fn build(&mut self, start: usize, end: usize, centroids: &[Vector3<f64>]) -> usize {
        let mut bounds = Aabb::empty();
        for &t in &self.order[start..end] {
            for p in &self.tris[t] {
                bounds.grow(p);
            }
        }
        let id = self.nodes.len();
        self.nodes.push(Node { bounds, kind: NodeKind::Leaf(start, end) });
        if end - start <= LEAF_SIZE {
            return id;
        }
        let cb = Aabb::from_points(self.order[start..end].iter().map(|&t| &centroids[t]));
        let axis = (cb.max - cb.min).imax();
        let mid = start + (end - start) / 2;
        self.order[start..end]
            .select_nth_unstable_by(mid - start, |&a, &b| centroids[a][axis].total_cmp(&centroids[b][axis]).then(a.cmp(&b)));
        let left = self.build(start, mid, centroids);
        let right = self.build(mid, end, centroids);
        self.nodes[id].kind = NodeKind::Inner(left, right);
        id
    }

    /// Closest point on the surface: `(distance, point, face index)`.
    pub fn closest(&self, p: &Vector3<f64>) -> (f64, Vector3<f64>, usize) {
        let mut best = (f64::INFINITY, Vector3::zeros(), usize::MAX);
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            if node.bounds.distance_squared(p) > best.0 {
                continue;
            }
            match node.kind {
                NodeKind::Leaf(s, e) => {
                    for &t in &self.order[s..e] {
                        let [a, b, c] = &self.tris[t];
                        let q = closest_point_on_triangle(p, a, b, c);
                        let d = (q - p).norm_squared();
                        if d < best.0 || (d == best.0 && t < best.2) {
                            best = (d, q, t);
                        }
                    }
                }
                NodeKind::Inner(l, r) => {
                    let dl = self.nodes[l].bounds.distance_squared(p);
                    let dr = self.nodes[r].bounds.distance_squared(p);
                    // Visit the nearer child first.
                    if dl <= dr {
                        stack.push(r);
                        stack.push(l);
                    } else {
                        stack.push(l);
                        stack.push(r);
                    }
                }
            }
        }
        (best.0.sqrt(), best.1, best.2)
    }

    pub fn distance(&self, p: &Vector3<f64>) -> f64 {
        self.closest(p).0
    }
}

/// Unsigned distance from `point` to the surface of `mesh`. Builds an index
/// per call; use [`MeshDistance`] for repeated queries.
pub fn point_to_surface_distance(point: &Vector3<f64>, mesh: &TriMesh) -> Result<f64> {
    Ok(MeshDistance::new(mesh)?.distance(point))
}

/// Closest point on triangle `abc` (Voronoi-region walk).
pub fn closest_point_on_triangle(p: &Vector3<f64>, a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>) -> Vector3<f64> {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}
