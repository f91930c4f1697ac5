//! Sparse Cholesky factorization of symmetric positive definite matrices
//! made of 4x4 blocks, one block row per mesh vertex.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use nalgebra::{Matrix4, Matrix4x3};

use crate::error::{Error, Result};

/// Relative pivot threshold below which the system counts as rank deficient.
pub const PIVOT_REL_TOL: f64 = 1e-12;

/// Symmetric block matrix: diagonal blocks plus upper off-diagonal blocks
/// `(i, j, block)` with `i < j`, where `block` sits at block row `i`,
/// block column `j`.
#[derive(Debug, Clone)]
pub struct BlockMatrix {
    pub diag: Vec<Matrix4<f64>>,
    pub upper: Vec<(usize, usize, Matrix4<f64>)>,
}

impl BlockMatrix {
    pub fn num_blocks(&self) -> usize {
        self.diag.len()
    }

    pub fn max_diagonal(&self) -> f64 {
        self.diag.iter().flat_map(|d| (0..4).map(move |k| d[(k, k)])).fold(0.0, f64::max)
    }

    pub fn mul(&self, x: &[Matrix4x3<f64>]) -> Vec<Matrix4x3<f64>> {
        let mut y: Vec<Matrix4x3<f64>> = self.diag.iter().zip(x).map(|(d, xi)| d * xi).collect();
        for (i, j, b) in &self.upper {
            y[*i] += b * x[*j];
            y[*j] += b.transpose() * x[*i];
        }
        y
    }
}

/// Elimination order and the fill pattern of the factor.
#[derive(Debug, Clone)]
pub struct Symbolic {
    /// `order[k]` is the block eliminated at step `k`.
    pub order: Vec<usize>,
    position: Vec<usize>,
    /// For step `k`, the later steps with a nonzero block in that column,
    /// ascending.
    pattern: Vec<Vec<usize>>,
}

impl Symbolic {
    /// Minimum-degree ordering of the block graph given by `edges`; ties go
    /// to the lower block index.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Symbolic {
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (a, b) in edges {
            if a != b {
                adj[a].push(b);
                adj[b].push(a);
            }
        }
        for a in &mut adj {
            a.sort_unstable();
            a.dedup();
        }
        let mut eliminated = vec![false; n];
        let mut heap: BinaryHeap<Reverse<(usize, usize)>> = (0..n).map(|i| Reverse((adj[i].len(), i))).collect();
        let mut order = Vec::with_capacity(n);
        let mut cliques: Vec<Vec<usize>> = vec![Vec::new(); n];
        while let Some(Reverse((deg, p))) = heap.pop() {
            if eliminated[p] || deg != adj[p].len() {
                continue;
            }
            eliminated[p] = true;
            order.push(p);
            let nbrs = std::mem::take(&mut adj[p]);
            for &u in &nbrs {
                let mut merged = Vec::with_capacity(adj[u].len() + nbrs.len());
                let (a, b) = (&adj[u], &nbrs);
                let (mut i, mut j) = (0, 0);
                while i < a.len() || j < b.len() {
                    let next = if j >= b.len() || (i < a.len() && a[i] <= b[j]) {
                        let v = a[i];
                        i += 1;
                        if j < b.len() && b[j] == v {
                            j += 1;
                        }
                        v
                    } else {
                        let v = b[j];
                        j += 1;
                        v
                    };
                    if next != p && next != u {
                        merged.push(next);
                    }
                }
                adj[u] = merged;
                heap.push(Reverse((adj[u].len(), u)));
            }
            cliques[p] = nbrs;
        }
        let mut position = vec![0; n];
        for (k, &b) in order.iter().enumerate() {
            position[b] = k;
        }
        let pattern = order
            .iter()
            .map(|&b| {
                let mut rows: Vec<usize> = cliques[b].iter().map(|&u| position[u]).collect();
                rows.sort_unstable();
                rows
            })
            .collect();
        Symbolic { order, position, pattern }
    }

    pub fn num_blocks(&self) -> usize {
        self.order.len()
    }

    /// Number of off-diagonal blocks in the factor.
    pub fn fill(&self) -> usize {
        self.pattern.iter().map(Vec::len).sum()
    }
}

/// Numeric factor `P A Pᵀ = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Factor<'a> {
    symbolic: &'a Symbolic,
    diag: Vec<Matrix4<f64>>,
    cols: Vec<Vec<Matrix4<f64>>>,
}

fn chol4(m: &Matrix4<f64>, step: usize, threshold: f64, max_diag: f64) -> Result<Matrix4<f64>> {
    let mut l = Matrix4::zeros();
    for j in 0..4 {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d >= threshold) {
            return Err(Error::RankDeficient { index: 4 * step + j, pivot: d, threshold, max_diag });
        }
        let s = d.sqrt();
        l[(j, j)] = s;
        for i in j + 1..4 {
            let mut v = m[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = v / s;
        }
    }
    Ok(l)
}

/// Solves `X Lᵀ = B` for lower-triangular `l`, i.e. `X = B L⁻ᵀ`.
fn right_solve_lt(b: &Matrix4<f64>, l: &Matrix4<f64>) -> Matrix4<f64> {
    let mut x = Matrix4::zeros();
    for r in 0..4 {
        for j in 0..4 {
            let mut v = b[(r, j)];
            for k in 0..j {
                v -= x[(r, k)] * l[(j, k)];
            }
            x[(r, j)] = v / l[(j, j)];
        }
    }
    x
}

fn lower_solve(l: &Matrix4<f64>, b: &mut Matrix4x3<f64>) {
    for c in 0..3 {
        for i in 0..4 {
            let mut v = b[(i, c)];
            for k in 0..i {
                v -= l[(i, k)] * b[(k, c)];
            }
            b[(i, c)] = v / l[(i, i)];
        }
    }
}

fn upper_solve(l: &Matrix4<f64>, b: &mut Matrix4x3<f64>) {
    for c in 0..3 {
        for i in (0..4).rev() {
            let mut v = b[(i, c)];
            for k in i + 1..4 {
                v -= l[(k, i)] * b[(k, c)];
            }
            b[(i, c)] = v / l[(i, i)];
        }
    }
}

impl<'a> Factor<'a> {
    /// Factorizes `a`, whose off-diagonal blocks must lie within the
    /// symbolic pattern.
    pub fn new(symbolic: &'a Symbolic, a: &BlockMatrix) -> Result<Factor<'a>> {
        let n = symbolic.num_blocks();
        if a.num_blocks() != n {
            return Err(Error::DimensionMismatch(format!("matrix has {} blocks, ordering has {n}", a.num_blocks())));
        }
        let pos = &symbolic.position;
        let mut diag: Vec<Matrix4<f64>> = symbolic.order.iter().map(|&b| a.diag[b]).collect();
        let mut cols: Vec<Vec<Matrix4<f64>>> = symbolic.pattern.iter().map(|p| vec![Matrix4::zeros(); p.len()]).collect();
        for (i, j, blk) in &a.upper {
            let (pi, pj) = (pos[*i], pos[*j]);
            // Store the lower-triangle block (row = later step).
            let (col, row, b) = if pi < pj { (pi, pj, blk.transpose()) } else { (pj, pi, *blk) };
            let slot = symbolic.pattern[col]
                .binary_search(&row)
                .map_err(|_| Error::InvalidInput(format!("block ({i}, {j}) is outside the symbolic pattern")))?;
            cols[col][slot] += b;
        }
        let max_diag = a.max_diagonal();
        let threshold = PIVOT_REL_TOL * max_diag;
        for k in 0..n {
            let lkk = chol4(&diag[k], k, threshold, max_diag)?;
            diag[k] = lkk;
            let rows = &symbolic.pattern[k];
            let mut col = std::mem::take(&mut cols[k]);
            for b in col.iter_mut() {
                *b = right_solve_lt(b, &lkk);
            }
            for (x, &r1) in rows.iter().enumerate() {
                let l1 = col[x];
                diag[r1] -= l1 * l1.transpose();
                for (y, &r2) in rows.iter().enumerate().skip(x + 1) {
                    let slot = symbolic.pattern[r1].binary_search(&r2).expect("elimination clique is in the pattern");
                    cols[r1][slot] -= col[y] * l1.transpose();
                }
            }
            cols[k] = col;
        }
        Ok(Factor { symbolic, diag, cols })
    }

    /// Solves `A X = B` with one 4x3 block per block row.
    pub fn solve(&self, b: &[Matrix4x3<f64>]) -> Vec<Matrix4x3<f64>> {
        let s = self.symbolic;
        let n = s.num_blocks();
        let mut y: Vec<Matrix4x3<f64>> = s.order.iter().map(|&i| b[i]).collect();
        for k in 0..n {
            let mut yk = y[k];
            lower_solve(&self.diag[k], &mut yk);
            y[k] = yk;
            for (slot, &r) in s.pattern[k].iter().enumerate() {
                y[r] -= self.cols[k][slot] * yk;
            }
        }
        for k in (0..n).rev() {
            let mut yk = y[k];
            for (slot, &r) in s.pattern[k].iter().enumerate() {
                yk -= self.cols[k][slot].transpose() * y[r];
            }
            upper_solve(&self.diag[k], &mut yk);
            y[k] = yk;
        }
        let mut x = vec![Matrix4x3::zeros(); n];
        for (k, &i) in s.order.iter().enumerate() {
            x[i] = y[k];
        }
        x
    }
}
