//! Non-rigid template fitting: per-vertex affine transforms solved from a
//! sparse linear system with a decreasing stiffness schedule.

mod cholesky;
mod system;

use std::fmt::Write as _;

use nalgebra::{Matrix3, Matrix4x3, Vector4};
use serde::{Deserialize, Serialize};

use crate::camera::Keyframe;
use crate::cloud::PointCloud;
use crate::constraints::{
    edge_targets_multi, landmark_targets, pointcloud_targets_with, ConstraintKind, ConstraintSet, EdgeConfig, EdgeMap, PclConstraintConfig,
};
use crate::error::{Error, Result};
use crate::landmarks::{CorrespondenceTable, Landmark3D};
use crate::mesh::TriMesh;
use crate::spatial::KdTree;

pub use cholesky::{BlockMatrix, Factor, Symbolic, PIVOT_REL_TOL};
pub use system::{assemble_system, kind_weight, solve_step, solve_with, LinearSystem, RowKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub stiffness_schedule: Vec<f64>,
    pub landmark_weight_schedule: Vec<f64>,
    pub edge_weight: f64,
    pub gamma_skew: f64,
    pub inner_max_iters: usize,
    pub inner_tol: f64,
    pub refresh_every: usize,
    pub edge: EdgeConfig,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            stiffness_schedule: vec![50.0, 20.0, 8.0, 3.0, 1.5, 0.8, 0.5, 0.35],
            landmark_weight_schedule: vec![10.0, 8.0, 6.0, 4.0, 2.0, 1.5, 1.0, 1.0],
            edge_weight: 2.0,
            gamma_skew: 1.0,
            inner_max_iters: 10,
            inner_tol: 1e-4,
            refresh_every: 1,
            edge: EdgeConfig::default(),
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let s = &self.stiffness_schedule;
        let l = &self.landmark_weight_schedule;
        if s.is_empty() || s.len() != l.len() {
            return Err(Error::Config(format!(
                "stiffness and landmark schedules must be non-empty and equally long ({} vs {})",
                s.len(),
                l.len()
            )));
        }
        if s.iter().chain(l).any(|v| !(*v > 0.0)) {
            return Err(Error::Config("schedules must be strictly positive".into()));
        }
        if s.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::Config("stiffness schedule must be non-increasing".into()));
        }
        if !(self.edge_weight >= 0.0 && self.gamma_skew >= 0.0 && self.inner_tol >= 0.0)
            || self.inner_max_iters == 0
            || self.refresh_every == 0
        {
            return Err(Error::Config(format!("invalid fit config {self:?}")));
        }
        Ok(())
    }
}

/// Per-vertex 3x4 affine transforms, stored transposed as 4x3 blocks so the
/// stack is the `4n x 3` unknown: `v' = Xᵢᵀ [v; 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexTransforms {
    pub blocks: Vec<Matrix4x3<f64>>,
}

impl VertexTransforms {
    pub fn identity(n: usize) -> Self {
        let mut b = Matrix4x3::zeros();
        b.fixed_view_mut::<3, 3>(0, 0).copy_from(&Matrix3::identity());
        VertexTransforms { blocks: vec![b; n] }
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Σ over mesh edges of ‖G (X_u − X_v)‖²_F with G = diag(1, 1, 1, gamma).
    pub fn stiffness_energy(&self, mesh: &TriMesh, gamma_skew: f64) -> f64 {
        mesh.edges()
            .iter()
            .map(|&(u, v)| {
                let (a, b) = (&self.blocks[u], &self.blocks[v]);
                let mut e = 0.0;
                for c in 0..3 {
                    for r in 0..4 {
                        let g = if r == 3 { gamma_skew } else { 1.0 };
                        let d = g * (a[(r, c)] - b[(r, c)]);
                        e += d * d;
                    }
                }
                e
            })
            .sum()
    }

    /// Largest per-vertex change, Frobenius norm with the translation row
    /// divided by `scale`.
    pub fn max_change(&self, other: &VertexTransforms, scale: f64) -> f64 {
        self.blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| {
                let mut d = a - b;
                d.row_mut(3).scale_mut(1.0 / scale);
                d.norm()
            })
            .fold(0.0, f64::max)
    }
}

pub fn apply_transforms(mesh: &TriMesh, x: &VertexTransforms) -> Result<TriMesh> {
    if x.len() != mesh.num_vertices() {
        return Err(Error::DimensionMismatch(format!("{} transforms for {} vertices", x.len(), mesh.num_vertices())));
    }
    Ok(mesh.with_vertices(mesh.vertices.iter().zip(&x.blocks).map(|(v, b)| b.transpose() * Vector4::new(v.x, v.y, v.z, 1.0)).collect()))
}

/// Data energy of one kind: Σ weight²·‖Xᵢᵀ[vᵢ; 1] − target‖², without the
/// kind multiplier.
pub fn data_energy(mesh: &TriMesh, x: &VertexTransforms, constraints: &ConstraintSet, kind: ConstraintKind) -> f64 {
    constraints
        .iter()
        .filter(|c| c.kind == kind)
        .map(|c| {
            let v = mesh.vertices[c.vertex_index];
            let p = x.blocks[c.vertex_index].transpose() * Vector4::new(v.x, v.y, v.z, 1.0);
            c.weight * c.weight * (p - c.target).norm_squared()
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyRecord {
    pub stage: usize,
    pub iteration: usize,
    pub stiffness: f64,
    pub landmark_weight: f64,
    pub num_pointcloud: usize,
    pub num_landmark: usize,
    pub num_edge: usize,
    pub e_pcl: f64,
    pub e_lms: f64,
    pub e_edges: f64,
    pub e_reg: f64,
    /// `‖A X − B‖²` of this iteration's system at the previous transforms.
    pub energy_before: f64,
    /// The same quadratic at the solved transforms.
    pub energy_after: f64,
    pub max_change: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyLog {
    pub records: Vec<EnergyRecord>,
}

impl EnergyLog {
    /// Whitespace-separated table with a header line.
    pub fn to_table(&self) -> String {
        let mut s = String::from(
            "stage iteration stiffness landmark_weight n_pcl n_lms n_edges E_pcl E_lms E_edges E_reg energy_before energy_after max_change\n",
        );
        for r in &self.records {
            let _ = writeln!(
                s,
                "{} {} {} {} {} {} {} {:.9e} {:.9e} {:.9e} {:.9e} {:.9e} {:.9e} {:.9e}",
                r.stage,
                r.iteration,
                r.stiffness,
                r.landmark_weight,
                r.num_pointcloud,
                r.num_landmark,
                r.num_edge,
                r.e_pcl,
                r.e_lms,
                r.e_edges,
                r.e_reg,
                r.energy_before,
                r.energy_after,
                r.max_change
            );
        }
        s
    }
}

/// Observations the template is fitted to.
#[derive(Debug, Clone, Copy)]
pub struct FitData<'a> {
    pub cloud: Option<&'a PointCloud>,
    pub landmarks: &'a [Landmark3D],
    pub table: &'a CorrespondenceTable,
    pub keyframes: &'a [Keyframe],
    /// One edge map per keyframe, or empty to disable edge constraints.
    pub edge_maps: &'a [EdgeMap],
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub mesh: TriMesh,
    pub transforms: VertexTransforms,
    pub log: EnergyLog,
}

/// Fits `template` to the data. Point-cloud and edge constraints are
/// recomputed on the current deformed mesh every `refresh_every` inner
/// iterations; landmark constraints stay fixed. The transforms always map
/// the original template vertices.
pub fn fit_mesh(template: &TriMesh, data: &FitData, pcl: &PclConstraintConfig, cfg: &FitConfig) -> Result<FitResult> {
    cfg.validate()?;
    template.validate()?;
    if template.is_empty() {
        return Err(Error::EmptyMesh);
    }
    let cloud = data.cloud.filter(|c| !c.is_empty());
    if cloud.is_none() && data.landmarks.is_empty() {
        return Err(Error::InvalidInput("nothing to fit: empty point cloud and no landmarks".into()));
    }
    let use_edges = !data.edge_maps.is_empty();
    if use_edges && data.edge_maps.len() != data.keyframes.len() {
        return Err(Error::DimensionMismatch(format!("{} edge maps for {} keyframes", data.edge_maps.len(), data.keyframes.len())));
    }
    let n = template.num_vertices();
    let diag = template.diagonal();
    let tree = cloud.map(|c| KdTree::new(&c.points));
    let landmarks = landmark_targets(data.landmarks, data.table, 1.0)?;
    landmarks.validate(n)?;
    let symbolic = Symbolic::new(n, template.edges());

    let mut x = VertexTransforms::identity(n);
    let mut current = template.clone();
    let mut log = EnergyLog::default();
    let mut constraints = ConstraintSet::default();
    for (stage, (&stiffness, &lm_weight)) in cfg.stiffness_schedule.iter().zip(&cfg.landmark_weight_schedule).enumerate() {
        for it in 0..cfg.inner_max_iters {
            if it % cfg.refresh_every == 0 {
                constraints = landmarks.clone();
                if let Some(tree) = &tree {
                    constraints.extend(pointcloud_targets_with(&current, tree, diag, pcl)?)?;
                }
                if use_edges {
                    constraints.extend(edge_targets_multi(&current, data.keyframes, data.edge_maps, &cfg.edge)?)?;
                }
            }
            let system = assemble_system(template, &constraints, stiffness, lm_weight, cfg.edge_weight, cfg.gamma_skew)?;
            let energy_before = system.energy(&x);
            let next = solve_with(&system, &symbolic)?;
            let energy_after = system.energy(&next);
            let change = next.max_change(&x, diag);
            x = next;
            current = apply_transforms(template, &x)?;
            let record = EnergyRecord {
                stage,
                iteration: it,
                stiffness,
                landmark_weight: lm_weight,
                num_pointcloud: constraints.count(ConstraintKind::Pointcloud),
                num_landmark: constraints.count(ConstraintKind::Landmark),
                num_edge: constraints.count(ConstraintKind::Edge),
                e_pcl: data_energy(template, &x, &constraints, ConstraintKind::Pointcloud),
                e_lms: data_energy(template, &x, &constraints, ConstraintKind::Landmark),
                e_edges: data_energy(template, &x, &constraints, ConstraintKind::Edge),
                e_reg: x.stiffness_energy(template, cfg.gamma_skew),
                energy_before,
                energy_after,
                max_change: change,
            };
            log::debug!("stage {stage} iter {it}: energy {:.6e} -> {:.6e}, change {change:.3e}", energy_before, energy_after);
            log.records.push(record);
            if change < cfg.inner_tol {
                break;
            }
        }
    }
    Ok(FitResult { mesh: current, transforms: x, log })
}
