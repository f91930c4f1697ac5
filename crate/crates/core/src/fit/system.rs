use std::collections::HashMap;

use nalgebra::{Matrix4, Matrix4x3, Vector3, Vector4};

use super::cholesky::{BlockMatrix, Factor, Symbolic};
use super::VertexTransforms;
use crate::constraints::{ConstraintKind, ConstraintSet};
use crate::error::{Error, Result};
use crate::mesh::TriMesh;

/// What a row of the stacked system expresses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    Stiffness,
    Data(ConstraintKind),
}

/// Sparse least-squares system `A X ≈ B` over the stacked `4n x 3`
/// per-vertex transforms, stored row-compressed.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub num_vertices: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
    pub rhs: Vec<Vector3<f64>>,
    pub kinds: Vec<RowKind>,
}

impl LinearSystem {
    pub fn num_rows(&self) -> usize {
        self.rhs.len()
    }

    pub fn num_cols(&self) -> usize {
        4 * self.num_vertices
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (self.cols[k], self.vals[k]))
    }

    /// Dense copy of `A`, for small systems and tests.
    pub fn dense_a(&self) -> nalgebra::DMatrix<f64> {
        let mut a = nalgebra::DMatrix::zeros(self.num_rows(), self.num_cols());
        for r in 0..self.num_rows() {
            for (c, v) in self.row(r) {
                a[(r, c)] += v;
            }
        }
        a
    }

    pub fn dense_b(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_fn(self.num_rows(), 3, |r, c| self.rhs[r][c])
    }

    /// Row residuals `A X - B`.
    pub fn residuals(&self, x: &VertexTransforms) -> Vec<Vector3<f64>> {
        (0..self.num_rows())
            .map(|r| {
                let mut acc = -self.rhs[r];
                for (c, v) in self.row(r) {
                    acc += x.blocks[c / 4].row(c % 4).transpose() * v;
                }
                acc
            })
            .collect()
    }

    /// `‖A X − B‖²_F`.
    pub fn energy(&self, x: &VertexTransforms) -> f64 {
        self.residuals(x).iter().map(|r| r.norm_squared()).sum()
    }

    /// Normal equations `AᵀA` and `AᵀB` in 4x4 blocks.
    pub fn normal_equations(&self) -> (BlockMatrix, Vec<Matrix4x3<f64>>) {
        let n = self.num_vertices;
        let mut diag = vec![Matrix4::zeros(); n];
        let mut upper: HashMap<(usize, usize), Matrix4<f64>> = HashMap::new();
        let mut atb = vec![Matrix4x3::zeros(); n];
        for r in 0..self.num_rows() {
            let entries: Vec<(usize, f64)> = self.row(r).collect();
            for &(c1, v1) in &entries {
                let (b1, k1) = (c1 / 4, c1 % 4);
                for c in 0..3 {
                    atb[b1][(k1, c)] += v1 * self.rhs[r][c];
                }
                for &(c2, v2) in &entries {
                    let (b2, k2) = (c2 / 4, c2 % 4);
                    if b1 == b2 {
                        diag[b1][(k1, k2)] += v1 * v2;
                    } else if b1 < b2 {
                        upper.entry((b1, b2)).or_insert_with(Matrix4::zeros)[(k1, k2)] += v1 * v2;
                    }
                }
            }
        }
        let mut upper: Vec<(usize, usize, Matrix4<f64>)> = upper.into_iter().map(|((i, j), m)| (i, j, m)).collect();
        upper.sort_unstable_by_key(|(i, j, _)| (*i, *j));
        (BlockMatrix { diag, upper }, atb)
    }

    /// Block pairs coupled by the system.
    pub fn block_pattern(&self) -> Vec<(usize, usize)> {
        let mut pairs = Vec::new();
        for r in 0..self.num_rows() {
            let blocks: Vec<usize> = self.row(r).map(|(c, _)| c / 4).collect();
            for (i, &a) in blocks.iter().enumerate() {
                for &b in &blocks[i + 1..] {
                    if a != b {
                        pairs.push((a.min(b), a.max(b)));
                    }
                }
            }
        }
        pairs.sort_unstable();
        pairs.dedup();
        pairs
    }
}

/// Kind multiplier applied on top of each constraint's own weight.
pub fn kind_weight(kind: ConstraintKind, lm_weight: f64, edge_weight: f64) -> f64 {
    match kind {
        ConstraintKind::Pointcloud => 1.0,
        ConstraintKind::Landmark => lm_weight,
        ConstraintKind::Edge => edge_weight,
    }
}

/// Stacks the stiffness rows (four per mesh edge, `stiffness·G·(X_u − X_v)`
/// with `G = diag(1, 1, 1, gamma_skew)`) followed by one row per constraint
/// (`w·[v 1]` in the vertex's block, target `w·target`).
pub fn assemble_system(
    mesh: &TriMesh,
    constraints: &ConstraintSet,
    stiffness: f64,
    lm_weight: f64,
    edge_weight: f64,
    gamma_skew: f64,
) -> Result<LinearSystem> {
    constraints.validate(mesh.num_vertices())?;
    if constraints.is_empty() && stiffness == 0.0 {
        return Err(Error::Singular("no constraints and zero stiffness".into()));
    }
    if !(stiffness >= 0.0 && lm_weight >= 0.0 && edge_weight >= 0.0 && gamma_skew >= 0.0) {
        return Err(Error::InvalidInput("weights must be non-negative".into()));
    }
    let edges = mesh.edges();
    let n_rows = 4 * edges.len() + constraints.len();
    let mut sys = LinearSystem {
        num_vertices: mesh.num_vertices(),
        row_ptr: Vec::with_capacity(n_rows + 1),
        cols: Vec::with_capacity(8 * edges.len() + 4 * constraints.len()),
        vals: Vec::with_capacity(8 * edges.len() + 4 * constraints.len()),
        rhs: Vec::with_capacity(n_rows),
        kinds: Vec::with_capacity(n_rows),
    };
    sys.row_ptr.push(0);
    let g = [1.0, 1.0, 1.0, gamma_skew];
    for &(u, v) in &edges {
        for (k, gk) in g.iter().enumerate() {
            let w = stiffness * gk;
            sys.cols.extend([4 * u + k, 4 * v + k]);
            sys.vals.extend([w, -w]);
            sys.row_ptr.push(sys.cols.len());
            sys.rhs.push(Vector3::zeros());
            sys.kinds.push(RowKind::Stiffness);
        }
    }
    for c in constraints {
        let w = c.weight * kind_weight(c.kind, lm_weight, edge_weight);
        let p = mesh.vertices[c.vertex_index];
        let h = Vector4::new(p.x, p.y, p.z, 1.0);
        for k in 0..4 {
            sys.cols.push(4 * c.vertex_index + k);
            sys.vals.push(w * h[k]);
        }
        sys.row_ptr.push(sys.cols.len());
        sys.rhs.push(c.target * w);
        sys.kinds.push(RowKind::Data(c.kind));
    }
    Ok(sys)
}

/// Least-squares solution through the normal equations.
pub fn solve_step(system: &LinearSystem) -> Result<VertexTransforms> {
    let symbolic = Symbolic::new(system.num_vertices, system.block_pattern());
    solve_with(system, &symbolic)
}

/// As [`solve_step`], reusing an ordering whose pattern covers the system.
pub fn solve_with(system: &LinearSystem, symbolic: &Symbolic) -> Result<VertexTransforms> {
    let (ata, atb) = system.normal_equations();
    let factor = Factor::new(symbolic, &ata)?;
    Ok(VertexTransforms { blocks: factor.solve(&atb) })
}
