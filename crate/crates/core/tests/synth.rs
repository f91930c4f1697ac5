use mvsfit::eval::vertex_to_surface;
use mvsfit::landmarks::{triangulate_all, LandmarkSelection, TriangulationConfig};
use mvsfit::mesh::TriMesh;
use mvsfit::mvs::{fuse_depth_maps, FusionConfig};
use mvsfit::pipeline::ProjectConfig;
use mvsfit::synth::{head_correspondences, head_project, render_scene, HeadParams, SynthConfig};
use mvsfit::Error;

fn small_head() -> (TriMesh, mvsfit::landmarks::CorrespondenceTable) {
    let p = HeadParams { subdivisions: 3, ..HeadParams::subject() };
    (p.mesh(), head_correspondences(3))
}

fn small_cfg() -> SynthConfig {
    SynthConfig { n_views: 9, width: 160, height: 120, ..SynthConfig::default() }
}

#[test]
fn noiseless_landmarks_triangulate_onto_their_vertices() {
    let (gt, table) = small_head();
    let cfg = SynthConfig { landmark_sigma_px: 0.0, depth_sigma_frac: 0.0, ..small_cfg() };
    let scene = render_scene(&gt, &table, &cfg).unwrap();
    let tri = TriangulationConfig { huber_px: None, ..TriangulationConfig::default() };
    let sel = LandmarkSelection::default();
    let lms = triangulate_all(&scene.observations, &scene.keyframes, &sel, &tri);
    assert!(lms.len() > 40, "only {} landmarks", lms.len());
    for l in &lms {
        let v = gt.vertices[table.vertex(l.landmark_id).unwrap()];
        assert!((l.position - v).norm() < 1e-9, "landmark {}: {:e}", l.landmark_id, (l.position - v).norm());
    }
}

#[test]
fn fused_noisy_depth_stays_within_three_sigma() {
    let (gt, table) = small_head();
    let cfg = small_cfg();
    let scene = render_scene(&gt, &table, &cfg).unwrap();
    let cloud = fuse_depth_maps(&scene.keyframes, &scene.depth, &FusionConfig::default()).unwrap();
    assert!(cloud.points.len() > 1000);
    let pts = TriMesh::new(cloud.points.clone(), vec![]).unwrap();
    let d = vertex_to_surface(&pts, &gt).unwrap();
    let mean = d.iter().sum::<f64>() / d.len() as f64;
    let sigma = cfg.depth_sigma_frac * gt.diagonal();
    println!("fused mean distance {mean:.3e}, sigma {sigma:.3e}");
    assert!(mean <= 3.0 * sigma);
}

#[test]
fn landmarks_are_only_reported_where_visible() {
    let (gt, table) = small_head();
    let scene = render_scene(&gt, &table, &small_cfg()).unwrap();
    // The first view looks at the left side: the far ear is hidden there.
    let first: Vec<i64> = scene.observations.iter().filter(|o| o.frame_id == 0).map(|o| o.landmark_id).collect();
    let last: Vec<i64> = scene.observations.iter().filter(|o| o.frame_id == 8).map(|o| o.landmark_id).collect();
    let left = |ids: &[i64]| ids.iter().filter(|&&i| (100..110).contains(&i)).count();
    let right = |ids: &[i64]| ids.iter().filter(|&&i| (110..120).contains(&i)).count();
    assert!(left(&first) + right(&first) > 0 && left(&last) + right(&last) > 0);
    assert!(left(&first) == 0 || right(&first) == 0);
    assert!(left(&last) == 0 || right(&last) == 0);
    assert!(scene.observations.iter().all(|o| o.confidence == 1.0));
}

#[test]
fn same_seed_gives_identical_projects() {
    let cfg = SynthConfig { n_views: 4, width: 96, height: 72, ..SynthConfig::default() };
    let (a, b, c) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    head_project(a.path(), &cfg, &ProjectConfig::default()).unwrap();
    head_project(b.path(), &cfg, &ProjectConfig::default()).unwrap();
    head_project(c.path(), &SynthConfig { seed: 1, ..cfg }, &ProjectConfig::default()).unwrap();
    let files = [
        "manifest.json",
        "cameras.json",
        "landmarks.json",
        "correspondence.json",
        "template.ply",
        "gt.ply",
        "images/0000.png",
        "images/0003.png",
        "gt_depth/0002.pfm",
    ];
    for f in files {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    assert_ne!(std::fs::read(a.path().join("landmarks.json")).unwrap(), std::fs::read(c.path().join("landmarks.json")).unwrap());
}

#[test]
fn bad_configurations_are_rejected() {
    let (gt, table) = small_head();
    let one = SynthConfig { n_views: 1, ..small_cfg() };
    assert!(matches!(render_scene(&gt, &table, &one), Err(Error::InvalidInput(_))));
    let inside = SynthConfig { distance_factor: 0.5, ..small_cfg() };
    match render_scene(&gt, &table, &inside) {
        Err(Error::InvalidInput(m)) => assert!(m.contains("bounding sphere"), "{m}"),
        other => panic!("expected an error, got {:?}", other.map(|_| ())),
    }
}

#[test]
fn head_table_is_complete_and_injective() {
    let table = head_correspondences(5);
    let ids: Vec<i64> = table.entries().map(|(i, _)| i).collect();
    assert_eq!(ids.len(), 88);
    assert!(ids.iter().all(|&i| (0..68).contains(&i) || (100..120).contains(&i)));
    let mut verts: Vec<usize> = table.entries().map(|(_, v)| v).collect();
    verts.sort();
    verts.dedup();
    assert_eq!(verts.len(), 88);
    assert_eq!(table.excluded_landmark_ids.as_ref().unwrap().len(), 17);
    assert_eq!(HeadParams::subject().mesh().num_vertices(), 10242);
}
