mod common;

use common::{ellipsoid_distance, sample_surface, two_sided_rms};
use std::collections::BTreeSet;

use mvsfit::cloud::PointCloud;
use mvsfit::constraints::{Constraint, ConstraintKind, ConstraintSet, PclConstraintConfig};
use mvsfit::fit::{apply_transforms, assemble_system, fit_mesh, solve_step, FitConfig, FitData, VertexTransforms};
use mvsfit::landmarks::{CorrespondenceTable, Landmark3D};
use mvsfit::mesh::TriMesh;
use mvsfit::spatial::MeshDistance;
use mvsfit::Error;
use nalgebra::{Matrix4x3, Rotation3, Unit, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tetrahedron() -> TriMesh {
    TriMesh::new(
        vec![Vector3::new(0.0, 0.0, 0.0), Vector3::new(1.0, 0.0, 0.0), Vector3::new(0.0, 1.0, 0.0), Vector3::new(0.0, 0.0, 1.0)],
        vec![[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]],
    )
    .unwrap()
}

fn pcl(vertex_index: usize, target: Vector3<f64>) -> Constraint {
    Constraint { vertex_index, target, weight: 1.0, kind: ConstraintKind::Pointcloud }
}

fn at_vertices(mesh: &TriMesh, offset: Vector3<f64>) -> ConstraintSet {
    ConstraintSet::new(mesh.vertices.iter().enumerate().map(|(i, v)| pcl(i, v + offset)).collect()).unwrap()
}

#[test]
fn tetrahedron_system_shape() {
    let m = tetrahedron();
    let c = ConstraintSet::new(vec![pcl(0, Vector3::zeros()), pcl(2, Vector3::y())]).unwrap();
    let s = assemble_system(&m, &c, 1.0, 1.0, 1.0, 1.0).unwrap();
    assert_eq!(s.num_rows(), 26);
    assert_eq!(s.num_cols(), 16);
}

#[test]
fn translated_targets_give_uniform_translation() {
    let m = TriMesh::icosphere(1, 1.0);
    let t = Vector3::new(0.3, -0.2, 0.5);
    let s = assemble_system(&m, &at_vertices(&m, t), 5.0, 1.0, 1.0, 1.0).unwrap();
    let x = solve_step(&s).unwrap();
    let mut expected = VertexTransforms::identity(1).blocks[0];
    expected.set_row(3, &t.transpose());
    for b in &x.blocks {
        assert!((b - expected).norm() < 1e-9);
    }
    assert!(s.energy(&x) < 1e-18);
}

#[test]
fn identity_targets_give_identity() {
    let m = TriMesh::icosphere(1, 1.0);
    for stiffness in [0.1, 3.0, 100.0] {
        let s = assemble_system(&m, &at_vertices(&m, Vector3::zeros()), stiffness, 1.0, 1.0, 1.0).unwrap();
        let x = solve_step(&s).unwrap();
        let id = VertexTransforms::identity(m.num_vertices());
        assert!(x.max_change(&id, 1.0) < 1e-9);
        assert!(s.energy(&x) < 1e-18);
    }
}

#[test]
fn unconstrained_systems_are_rejected() {
    let m = tetrahedron();
    let empty = ConstraintSet::default();
    assert!(matches!(assemble_system(&m, &empty, 0.0, 1.0, 1.0, 1.0), Err(Error::Singular(_))));
    let s = assemble_system(&m, &empty, 2.0, 1.0, 1.0, 1.0).unwrap();
    assert!(matches!(solve_step(&s), Err(Error::RankDeficient { .. })));
}

#[test]
fn matches_dense_least_squares() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let m = tetrahedron();
    let c = ConstraintSet::new(
        (0..4)
            .map(|i| {
                pcl(i, m.vertices[i] + Vector3::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3)))
            })
            .collect(),
    )
    .unwrap();
    let s = assemble_system(&m, &c, 0.7, 1.0, 1.0, 1.3).unwrap();
    let x = solve_step(&s).unwrap();
    let dense = s.dense_a().pseudo_inverse(1e-14).unwrap() * s.dense_b();
    for v in 0..4 {
        for r in 0..4 {
            for col in 0..3 {
                assert!((x.blocks[v][(r, col)] - dense[(4 * v + r, col)]).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn weak_stiffness_lets_the_constrained_vertex_reach_its_target() {
    let m = TriMesh::icosphere(1, 1.0);
    let mut cs: Vec<Constraint> = m.vertices.iter().enumerate().map(|(i, v)| pcl(i, *v)).collect();
    let target = m.vertices[0] + Vector3::new(0.1, -0.05, 0.02);
    cs[0].target = target;
    let set = ConstraintSet::new(cs).unwrap();
    let s = assemble_system(&m, &set, 1e-5, 1.0, 1.0, 1.0).unwrap();
    let out = apply_transforms(&m, &solve_step(&s).unwrap()).unwrap();
    assert!((out.vertices[0] - target).norm() < 1e-6);
    // At 1e-8 the stiffness pivots fall below the relative threshold.
    let s = assemble_system(&m, &set, 1e-8, 1.0, 1.0, 1.0).unwrap();
    assert!(matches!(solve_step(&s), Err(Error::RankDeficient { .. })));
}

#[test]
fn very_stiff_solution_is_nearly_global_affine() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let m = TriMesh::icosphere(2, 1.0);
    let set = ConstraintSet::new(
        m.vertices
            .iter()
            .enumerate()
            .map(|(i, v)| {
                pcl(i, v * 1.1 + Vector3::new(rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05)))
            })
            .collect(),
    )
    .unwrap();
    let x = solve_step(&assemble_system(&m, &set, 1e6, 1.0, 1.0, 1.0).unwrap()).unwrap();
    let mean_norm = x.blocks.iter().map(|b| b.norm()).sum::<f64>() / x.len() as f64;
    let mut worst: f64 = 0.0;
    for a in &x.blocks {
        worst = worst.max((a - x.blocks[0]).norm());
    }
    assert!(worst <= 2.0 * 1e-3 * mean_norm);
    for a in &x.blocks {
        for b in x.blocks.iter().step_by(7) {
            assert!((a - b).norm() <= 1e-3 * mean_norm);
        }
    }
}

#[test]
fn stiffness_energy_audit() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let m = TriMesh::icosphere(2, 1.0);
    let x = VertexTransforms { blocks: (0..m.num_vertices()).map(|_| Matrix4x3::from_fn(|_, _| rng.random_range(-1.0..1.0))).collect() };
    let gamma = 0.7;
    let mut edges = BTreeSet::new();
    for f in &m.faces {
        for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
            edges.insert((a.min(b), a.max(b)));
        }
    }
    let mut expected = 0.0;
    for (u, v) in edges {
        let mut e = 0.0;
        for c in 0..3 {
            for r in 0..4 {
                let g = if r == 3 { gamma } else { 1.0 };
                let d = g * (x.blocks[u][(r, c)] - x.blocks[v][(r, c)]);
                e += d * d;
            }
        }
        expected += e;
    }
    assert_eq!(x.stiffness_energy(&m, gamma), expected);
    // The stiffness rows of the assembled system carry the same energy.
    let s = assemble_system(&m, &ConstraintSet::default(), 2.0, 1.0, 1.0, gamma).unwrap();
    assert!((s.energy(&x) / 4.0 - expected).abs() <= 1e-12 * expected);
}

#[test]
fn apply_transforms_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let m = TriMesh::icosphere(1, 1.0);
    let id = VertexTransforms::identity(m.num_vertices());
    assert_eq!(apply_transforms(&m, &id).unwrap(), m);
    let mut tr = id.clone();
    let t = Vector3::new(1.0, 2.0, -3.0);
    for b in &mut tr.blocks {
        b.set_row(3, &t.transpose());
    }
    let moved = apply_transforms(&m, &tr).unwrap();
    for (a, b) in moved.vertices.iter().zip(&m.vertices) {
        assert!((a - b - t).norm() < 1e-15);
    }
    let x = VertexTransforms { blocks: (0..m.num_vertices()).map(|_| Matrix4x3::from_fn(|_, _| rng.random_range(-2.0..2.0))).collect() };
    let out = apply_transforms(&m, &x).unwrap();
    for i in 0..m.num_vertices() {
        let v = m.vertices[i];
        let h = [v.x, v.y, v.z, 1.0];
        for c in 0..3 {
            let expected: f64 = (0..4).map(|r| x.blocks[i][(r, c)] * h[r]).sum();
            assert!((out.vertices[i][c] - expected).abs() < 1e-12);
        }
    }
    assert_eq!(out.faces, m.faces);
    assert!(apply_transforms(&m, &VertexTransforms::identity(3)).is_err());
}

// ---- fitting ----

fn table_for(ids: &[usize]) -> CorrespondenceTable {
    CorrespondenceTable::new(ids.iter().map(|&v| (v as i64 + 17, v))).unwrap()
}

fn landmarks_on(mesh: &TriMesh, ids: &[usize]) -> Vec<Landmark3D> {
    ids.iter()
        .map(|&v| Landmark3D { landmark_id: v as i64 + 17, position: mesh.vertices[v], rms_reprojection_error: 0.0, num_views: 3 })
        .collect()
}

fn assert_monotone(result: &mvsfit::fit::FitResult) {
    for r in &result.log.records {
        assert!(r.energy_after <= r.energy_before * (1.0 + 1e-12) + 1e-20, "{r:?}");
    }
}

#[test]
fn exact_self_samples_are_a_fixed_point() {
    let template = TriMesh::icosphere(3, 1.0);
    let cloud = PointCloud::from_points(template.subdivided().vertices);
    let ids = [0, 11, 50, 120, 300, 420, 600];
    let (table, lms) = (table_for(&ids), landmarks_on(&template, &ids));
    let pcl = PclConstraintConfig { axial_threshold_frac: 1e-3, min_points: 1, ..Default::default() };
    let data = FitData { cloud: Some(&cloud), landmarks: &lms, table: &table, keyframes: &[], edge_maps: &[] };
    let out = fit_mesh(&template, &data, &pcl, &FitConfig::default()).unwrap();
    let mean = out.mesh.vertices.iter().zip(&template.vertices).map(|(a, b)| (a - b).norm()).sum::<f64>() / template.num_vertices() as f64;
    assert!(mean <= 1e-6 * template.diagonal());
    assert_monotone(&out);
    assert_eq!(out.mesh.faces, template.faces);
}

#[test]
fn rigidly_moved_template_is_recovered() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let oracle = TriMesh::icosphere(3, 1.0);
    let r = Rotation3::from_axis_angle(&Unit::new_normalize(Vector3::new(0.3, 1.0, -0.2)), 0.8).into_inner();
    let moved = oracle.transformed(1.0, &r, &Vector3::new(0.5, -1.0, 2.0));
    let ids = [0, 11, 50, 120, 300, 420, 600];
    let (table, lms) = (table_for(&ids), landmarks_on(&oracle, &ids));
    let aligned = mvsfit::landmarks::similarity_align(&moved, &table, &lms).unwrap().mesh;
    let cloud = PointCloud::from_points(sample_surface(&oracle, 60_000, &mut rng));
    let data = FitData { cloud: Some(&cloud), landmarks: &lms, table: &table, keyframes: &[], edge_maps: &[] };
    let out = fit_mesh(&aligned, &data, &PclConstraintConfig::default(), &FitConfig::default()).unwrap();
    assert!(two_sided_rms(&out.mesh, &oracle) <= 1e-3 * oracle.diagonal());
    assert_monotone(&out);
}

#[test]
fn sphere_fits_an_ellipsoid() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let axes = Vector3::new(1.2, 1.0, 0.8);
    let template = TriMesh::icosphere(4, 1.0);
    let fine = TriMesh::icosphere(6, 1.0);
    let ellipsoid = fine.with_vertices(fine.vertices.iter().map(|v| v.component_mul(&axes)).collect());
    let cloud = PointCloud::from_points(sample_surface(&ellipsoid, 200_000, &mut rng));
    let table = CorrespondenceTable::default();
    let data = FitData { cloud: Some(&cloud), landmarks: &[], table: &table, keyframes: &[], edge_maps: &[] };
    let out = fit_mesh(&template, &data, &PclConstraintConfig::default(), &FitConfig::default()).unwrap();
    assert_monotone(&out);
    let d_fit: Vec<f64> = out.mesh.vertices.iter().map(|v| ellipsoid_distance(v, &axes)).collect();
    let tree = MeshDistance::new(&out.mesh).unwrap();
    let d_gt: Vec<f64> = cloud.points[..20_000].iter().map(|p| tree.distance(p)).collect();
    let s: f64 = d_fit.iter().chain(&d_gt).map(|d| d * d).sum();
    let rms = (s / (d_fit.len() + d_gt.len()) as f64).sqrt();
    let diag = 2.0 * axes.norm();
    println!("ellipsoid two-sided rms {:.3e} of diagonal", rms / diag);
    assert!(rms <= 5e-3 * diag);
}

#[test]
fn ellipsoid_distance_oracle_is_sane() {
    let axes = Vector3::new(1.2, 1.0, 0.8);
    assert!((ellipsoid_distance(&Vector3::new(2.0, 0.0, 0.0), &axes) - 0.8).abs() < 1e-12);
    assert!((ellipsoid_distance(&Vector3::new(0.0, 0.0, 0.3), &axes) - 0.5).abs() < 1e-12);
    assert!(ellipsoid_distance(&Vector3::new(1.2, 0.0, 0.0), &axes) < 1e-12);
}

#[test]
fn fitting_needs_data_and_is_deterministic() {
    let template = TriMesh::icosphere(2, 1.0);
    let table = CorrespondenceTable::default();
    let empty = PointCloud::default();
    let data = FitData { cloud: Some(&empty), landmarks: &[], table: &table, keyframes: &[], edge_maps: &[] };
    assert!(fit_mesh(&template, &data, &PclConstraintConfig::default(), &FitConfig::default()).is_err());
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let cloud = PointCloud::from_points(sample_surface(&TriMesh::icosphere(4, 1.05), 20_000, &mut rng));
    let data = FitData { cloud: Some(&cloud), ..data };
    let cfg = FitConfig { stiffness_schedule: vec![10.0, 2.0], landmark_weight_schedule: vec![1.0, 1.0], ..Default::default() };
    let a = fit_mesh(&template, &data, &PclConstraintConfig::default(), &cfg).unwrap();
    let b = fit_mesh(&template, &data, &PclConstraintConfig::default(), &cfg).unwrap();
    assert_eq!(a.mesh, b.mesh);
    assert_eq!(a.log, b.log);
    let bad = FitConfig { stiffness_schedule: vec![1.0, 2.0], landmark_weight_schedule: vec![1.0, 1.0], ..Default::default() };
    assert!(fit_mesh(&template, &data, &PclConstraintConfig::default(), &bad).is_err());
}
