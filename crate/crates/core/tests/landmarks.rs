mod common;

use common::{grid_minimizer, observe, pixel, ring};
use mvsfit::landmarks::{
    similarity_align, triangulate_all, triangulate_landmark, umeyama, CorrespondenceTable, LandmarkSelection, ReprojectionProblem,
    TriangulationConfig,
};
use mvsfit::mesh::TriMesh;
use nalgebra::{Rotation3, Unit, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn exact_observations_recover_the_point() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let kfs = ring(3, &mut rng);
    let x = Vector3::new(0.1, -0.2, 0.05);
    let obs = observe(&kfs, 30, &x, 0.0, &mut rng);
    let l = triangulate_landmark(&obs, &kfs, &TriangulationConfig::default()).unwrap();
    assert!((l.position - x).norm() < 1e-9);
    assert!(l.rms_reprojection_error < 1e-9);
    assert_eq!(l.num_views, 3);
}

#[test]
fn too_few_confident_views_is_an_error() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let kfs = ring(3, &mut rng);
    let mut obs = observe(&kfs, 30, &Vector3::zeros(), 0.0, &mut rng);
    assert!(triangulate_landmark(&obs[..1], &kfs, &TriangulationConfig::default()).is_err());
    obs[0].confidence = 0.5;
    obs[1].confidence = 0.89;
    assert!(triangulate_landmark(&obs, &kfs, &TriangulationConfig::default()).is_err());
}

#[test]
fn noisy_minimizer_matches_grid_search() {
    let cfg = TriangulationConfig { huber_px: None, ..Default::default() };
    for seed in 0..3 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let kfs = ring(8, &mut rng);
        let x = Vector3::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3));
        let obs = observe(&kfs, 40, &x, 0.5, &mut rng);
        let l = triangulate_landmark(&obs, &kfs, &cfg).unwrap();
        let g = grid_minimizer(&kfs, &obs, x);
        assert!((l.position - g).norm() < 1e-6, "seed {seed}: {:e}", (l.position - g).norm());
    }
}

#[test]
fn refinement_never_increases_cost_and_gradient_matches_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let kfs = ring(6, &mut rng);
    for huber in [None, Some(2.0)] {
        let x = Vector3::new(0.2, 0.1, -0.1);
        let mut obs = observe(&kfs, 41, &x, 1.0, &mut rng);
        obs[2].position.x += 25.0;
        let views: Vec<_> = obs.iter().map(|o| (&kfs[o.frame_id as usize], o.position)).collect();
        let problem = ReprojectionProblem::new(views, huber);
        let x0 = problem.linear().unwrap();
        let x1 = problem.refine(x0, 100, 1e-12);
        assert!(problem.cost(&x1) <= problem.cost(&x0));
        let h = 1e-6;
        // Rounding of pixel coordinates bounds how well central differences
        // can resolve the gradient.
        let floor = |p: &Vector3<f64>| -> f64 {
            obs.iter()
                .map(|o| {
                    let q = pixel(&kfs[o.frame_id as usize], p);
                    2.0 * (q - o.position).norm() * (q.norm() + o.position.norm()) * f64::EPSILON
                })
                .sum::<f64>()
                * 4.0
                / h
        };
        for p in [x1, x1 + Vector3::new(0.01, -0.02, 0.015)] {
            let g = problem.gradient(&p);
            let fd = Vector3::from_fn(|i, _| {
                let mut e = Vector3::zeros();
                e[i] = h;
                (problem.cost(&(p + e)) - problem.cost(&(p - e))) / (2.0 * h)
            });
            assert!((g - fd).norm() <= 1e-4 * fd.norm() + floor(&p), "{g:?} vs {fd:?}");
        }
    }
}

#[test]
fn observation_order_does_not_matter() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let kfs = ring(8, &mut rng);
    let obs = observe(&kfs, 50, &Vector3::new(0.0, 0.1, 0.2), 0.7, &mut rng);
    let a = triangulate_landmark(&obs, &kfs, &TriangulationConfig::default()).unwrap();
    let mut rev = obs.clone();
    rev.reverse();
    rev.swap(1, 5);
    let b = triangulate_landmark(&rev, &kfs, &TriangulationConfig::default()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn contour_and_ear_selection() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let kfs = ring(4, &mut rng);
    let mut obs = Vec::new();
    for id in (0..68).chain(100..110) {
        let x = Vector3::new(0.01 * id as f64, 0.02, -0.01 * (id % 7) as f64);
        obs.extend(observe(&kfs, id, &x, 0.0, &mut rng));
    }
    let all = triangulate_all(&obs, &kfs, &LandmarkSelection::default(), &TriangulationConfig::default());
    let face = all.iter().filter(|l| l.landmark_id < 100).count();
    // Without an exclusion list only the 17 jaw ids are dropped.
    assert_eq!(face, 51);
    assert_eq!(all.len(), 51 + 10);
    assert!(all.iter().all(|l| l.rms_reprojection_error <= 1e-6));
    assert!(all.windows(2).all(|w| w[0].landmark_id < w[1].landmark_id));

    let mut table = CorrespondenceTable::new((0..68).chain(100..110).map(|i| (i, i as usize))).unwrap();
    table.excluded_landmark_ids = Some((0..=16).chain([60]).collect());
    table.ear_outer_contour_ids = Some([100, 103, 104].into_iter().collect());
    let sel = table.selection();
    let picked = triangulate_all(&obs, &kfs, &sel, &TriangulationConfig::default());
    assert!(picked.iter().filter(|l| l.landmark_id < 100).count() <= 50);
    assert_eq!(picked.iter().filter(|l| l.landmark_id >= 100).count(), 3);
    let no_ears = LandmarkSelection { use_ears: false, ..sel };
    assert!(triangulate_all(&obs, &kfs, &no_ears, &TriangulationConfig::default()).iter().all(|l| l.landmark_id < 100));

    let contour: Vec<_> = obs.iter().filter(|o| o.landmark_id <= 16).copied().collect();
    assert!(triangulate_all(&contour, &kfs, &LandmarkSelection::default(), &TriangulationConfig::default()).is_empty());
}

#[test]
fn duplicate_table_ids_are_rejected() {
    assert!(CorrespondenceTable::new([(1, 0), (2, 3), (1, 4)]).is_err());
}

fn random_similarity(rng: &mut ChaCha8Rng) -> (f64, nalgebra::Matrix3<f64>, Vector3<f64>) {
    let axis = Unit::new_normalize(Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    let r = Rotation3::from_axis_angle(&axis, rng.random_range(-3.0..3.0)).into_inner();
    let t = Vector3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
    (2.5, r, t)
}

fn landmarks_at(mesh: &TriMesh, ids: &[usize]) -> Vec<mvsfit::landmarks::Landmark3D> {
    ids.iter()
        .map(|&v| mvsfit::landmarks::Landmark3D {
            landmark_id: v as i64,
            position: mesh.vertices[v],
            rms_reprojection_error: 0.0,
            num_views: 2,
        })
        .collect()
}

#[test]
fn alignment_at_exact_vertices_is_identity() {
    let mesh = TriMesh::icosphere(2, 1.0);
    let ids = [0, 5, 17, 40, 77, 101];
    let table = CorrespondenceTable::new(ids.iter().map(|&v| (v as i64, v))).unwrap();
    let a = similarity_align(&mesh, &table, &landmarks_at(&mesh, &ids)).unwrap();
    assert!((a.transform.scale - 1.0).abs() < 1e-12);
    assert!((a.transform.rotation - nalgebra::Matrix3::identity()).norm() < 1e-12);
    assert!(a.transform.translation.norm() < 1e-12);
    assert!(a.rms < 1e-12);
}

#[test]
fn known_similarity_is_inverted() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mesh = TriMesh::icosphere(2, 1.0);
    let ids = [0, 5, 17, 40, 77, 101, 130];
    let table = CorrespondenceTable::new(ids.iter().map(|&v| (v as i64, v))).unwrap();
    let targets = landmarks_at(&mesh, &ids);
    let (s, r, t) = random_similarity(&mut rng);
    let moved = mesh.transformed(s, &r, &t);
    let a = similarity_align(&moved, &table, &targets).unwrap();
    for (p, q) in a.mesh.vertices.iter().zip(&mesh.vertices) {
        assert!((p - q).norm() < 1e-9);
    }
    assert!((a.transform.scale * s - 1.0).abs() < 1e-9);
}

#[test]
fn collinear_or_too_few_correspondences_fail() {
    let src: Vec<_> = (0..3).map(|i| Vector3::new(i as f64, 2.0 * i as f64, 0.5)).collect();
    let dst: Vec<_> = src.iter().map(|p| p * 2.0).collect();
    assert!(umeyama(&src, &dst).is_err());
    assert!(umeyama(&src[..2], &dst[..2]).is_err());
    let tri = vec![Vector3::zeros(), Vector3::x(), Vector3::y()];
    assert!(umeyama(&tri, &tri).is_ok());
}

#[test]
fn alignment_residual_is_rigid_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mesh = TriMesh::icosphere(2, 1.0);
    let ids = [0, 5, 17, 40, 77, 101, 130];
    let table = CorrespondenceTable::new(ids.iter().map(|&v| (v as i64, v))).unwrap();
    let mut targets = landmarks_at(&mesh, &ids);
    for l in &mut targets {
        l.position += Vector3::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1));
    }
    let base = similarity_align(&mesh, &table, &targets).unwrap().rms;
    let (_, r, t) = random_similarity(&mut rng);
    let moved_mesh = mesh.transformed(1.0, &r, &t);
    let moved: Vec<_> = targets.iter().map(|l| mvsfit::landmarks::Landmark3D { position: r * l.position + t, ..*l }).collect();
    let again = similarity_align(&moved_mesh, &table, &moved).unwrap().rms;
    assert!((base - again).abs() < 1e-9);
}
