mod common;

use common::{facing_plane, look_at, plane_scene, sphere_depth, sphere_views, PLANE_Z};
use mvsfit::camera::{Intrinsics, Keyframe};
use mvsfit::image::Image;
use mvsfit::mvs::{
    filter_with_prior, fuse_depth_maps, fuse_with_provenance, patchmatch_depth, patchmatch_run, FusionConfig, PatchMatchConfig, PriorDepth,
};
use mvsfit::raster::render_depth;
use nalgebra::{Vector2, Vector3};

#[test]
fn textured_plane_is_recovered() {
    let (_, kfs) = plane_scene();
    // Coarse prior 2% in front of the true plane.
    let prior_mesh = facing_plane(4.0, PLANE_Z * 0.98, 8);
    let prior = PriorDepth::from_mesh(&prior_mesh, &kfs[0]);
    let sources: Vec<&Keyframe> = kfs[1..].iter().collect();
    let out = patchmatch_run(&kfs[0], &sources, &prior, &PatchMatchConfig::default()).unwrap();
    let d = &out.depth;
    d.validate().unwrap();
    let valid = d.num_valid();
    let good = (0..d.valid.len()).filter_map(|i| d.get_index(i)).filter(|z| (z - PLANE_Z).abs() / PLANE_Z <= 0.005).count();
    let interior = (160 - 10) * (120 - 10);
    assert!(valid as f64 >= 0.95 * interior as f64, "only {valid} of {interior} interior pixels valid");
    assert!(good as f64 >= 0.95 * valid as f64, "{good} of {valid} within 0.5%");
    // Propagation and refinement only ever accept improvements.
    for (a, b) in out.init_cost.iter().zip(&out.final_cost) {
        assert!(b <= a);
    }
}

#[test]
fn zero_range_pins_prior() {
    let (plane, kfs) = plane_scene();
    let prior = PriorDepth::from_mesh(&plane, &kfs[0]);
    let cfg = PatchMatchConfig { depth_range_frac: 0.0, iterations: 2, ..Default::default() };
    let sources: Vec<&Keyframe> = kfs[1..].iter().collect();
    let d = patchmatch_depth(&kfs[0], &sources, &prior, &cfg).unwrap();
    assert!(d.num_valid() > 1000);
    for i in 0..d.valid.len() {
        if let Some(z) = d.get_index(i) {
            assert_eq!(Some(z), prior.depth.get_index(i));
        }
    }
}

#[test]
fn constant_image_is_all_invalid() {
    let (plane, kfs) = plane_scene();
    let mut flat = kfs[0].clone();
    let img = Image { width: 160, height: 120, channels: 1, data: vec![0.5; 160 * 120] };
    flat = Keyframe::new(flat.id, img, flat.pose, flat.intrinsics).unwrap();
    let prior = PriorDepth::from_mesh(&plane, &flat);
    let sources: Vec<&Keyframe> = kfs[1..].iter().collect();
    let d = patchmatch_depth(&flat, &sources, &prior, &PatchMatchConfig::default()).unwrap();
    assert!(d.is_all_invalid());
}

#[test]
fn no_sources_is_an_error() {
    let (plane, kfs) = plane_scene();
    let prior = PriorDepth::from_mesh(&plane, &kfs[0]);
    assert!(patchmatch_depth(&kfs[0], &[], &prior, &PatchMatchConfig::default()).is_err());
}

#[test]
fn empty_prior_falls_back_to_scene_bounds() {
    let (plane, kfs) = plane_scene();
    let mut prior = PriorDepth::from_mesh(&plane, &kfs[0]);
    prior.depth = mvsfit::DepthMap::invalid(160, 120);
    let cfg = PatchMatchConfig { iterations: 3, ..Default::default() };
    let sources: Vec<&Keyframe> = kfs[1..].iter().collect();
    let d = patchmatch_depth(&kfs[0], &sources, &prior, &cfg).unwrap();
    assert!(d.num_valid() > 0);
}

#[test]
fn deterministic_across_thread_counts() {
    let (_, kfs) = plane_scene();
    let prior_mesh = facing_plane(4.0, PLANE_Z * 1.01, 8);
    let prior = PriorDepth::from_mesh(&prior_mesh, &kfs[0]);
    let sources: Vec<&Keyframe> = kfs[1..].iter().collect();
    let cfg = PatchMatchConfig { iterations: 2, rng_seed: 42, ..Default::default() };
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| patchmatch_depth(&kfs[0], &sources, &prior, &cfg).unwrap())
    };
    let a = run(1);
    let b = run(4);
    assert_eq!(a.depth.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.depth.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    assert_eq!(a, b);
}

#[test]
fn filter_keeps_subset_of_valid() {
    let (_, kfs) = plane_scene();
    let prior_mesh = facing_plane(4.0, PLANE_Z, 8);
    let prior = PriorDepth::from_mesh(&prior_mesh, &kfs[0]);
    let sources: Vec<&Keyframe> = kfs[1..].iter().collect();
    let cfg = PatchMatchConfig { iterations: 2, ..Default::default() };
    let d = patchmatch_depth(&kfs[0], &sources, &prior, &cfg).unwrap();
    let f = filter_with_prior(&d, &prior.depth, 0.05, cfg.cost_threshold).unwrap();
    for i in 0..d.valid.len() {
        if prior.depth.valid[i] && f.valid[i] {
            assert!(d.valid[i]);
        }
    }
}

// ---- fusion ----

#[test]
fn single_map_yields_backprojections() {
    let kfs = sphere_views(1, 40, 60.0);
    let d = sphere_depth(&kfs[0], Vector3::zeros(), 1.0);
    let cfg = FusionConfig { min_consistent_views: 1, ..Default::default() };
    let cloud = fuse_depth_maps(&kfs, std::slice::from_ref(&d), &cfg).unwrap();
    assert_eq!(cloud.len(), d.num_valid());
    let mut k = 0;
    for i in 0..d.valid.len() {
        if let Some(z) = d.get_index(i) {
            let p = kfs[0].backproject(Vector2::new((i % 40) as f64, (i / 40) as f64), z).unwrap();
            assert_eq!(cloud.points[k], p);
            k += 1;
        }
    }
}

#[test]
fn two_view_support_is_dropped_at_three() {
    let kfs = sphere_views(3, 40, 60.0);
    let mut maps: Vec<_> = kfs.iter().map(|k| sphere_depth(k, Vector3::zeros(), 1.0)).collect();
    maps[2] = mvsfit::DepthMap::invalid(40, 40);
    let cloud = fuse_depth_maps(&kfs, &maps, &FusionConfig::default()).unwrap();
    assert!(cloud.is_empty());
    let two = FusionConfig { min_consistent_views: 2, ..Default::default() };
    assert!(!fuse_depth_maps(&kfs, &maps, &two).unwrap().is_empty());
    assert!(fuse_depth_maps(&kfs, &maps[..2], &two).is_err());
}

#[test]
fn ideal_sphere_maps_fuse_onto_the_sphere() {
    let kfs = sphere_views(5, 800, 1400.0);
    let maps: Vec<_> = kfs.iter().map(|k| sphere_depth(k, Vector3::zeros(), 1.0)).collect();
    let (cloud, prov) = fuse_with_provenance(&kfs, &maps, &FusionConfig::default()).unwrap();
    cloud.validate().unwrap();
    assert!(cloud.len() > 10_000);
    let worst = cloud.points.iter().map(|p| (p.norm() - 1.0).abs()).fold(0.0, f64::max);
    println!("worst sphere deviation {worst:.3e} over {} points", cloud.len());
    assert!(worst <= 1e-6, "worst deviation {worst:e}");
    assert!(cloud.support.as_ref().unwrap().iter().all(|&s| s >= 3));
    assert_eq!(prov.len(), cloud.len());
}

#[test]
fn fused_points_satisfy_their_predicate_and_ignore_input_order() {
    let kfs = sphere_views(5, 120, 200.0);
    let maps: Vec<_> = kfs.iter().map(|k| sphere_depth(k, Vector3::zeros(), 1.0)).collect();
    let cfg = FusionConfig::default();
    let (cloud, prov) = fuse_with_provenance(&kfs, &maps, &cfg).unwrap();
    // Audit against the raw maps with an independent predicate.
    for fp in &prov {
        let (kf, map) = (&kfs[fp.reference], &maps[fp.reference]);
        let x = kf.backproject(Vector2::new((fp.pixel % 120) as f64, (fp.pixel / 120) as f64), map.get_index(fp.pixel).unwrap()).unwrap();
        let mut agree = 0;
        for (j, (kj, mj)) in kfs.iter().zip(&maps).enumerate() {
            if j == fp.reference {
                continue;
            }
            let xc = kj.pose.rotation * x + kj.pose.translation;
            let u = (kj.intrinsics.fx * xc.x / xc.z + kj.intrinsics.cx).round();
            let v = (kj.intrinsics.fy * xc.y / xc.z + kj.intrinsics.cy).round();
            if u < 0.0 || v < 0.0 || u >= 120.0 || v >= 120.0 {
                continue;
            }
            let Some(dj) = mj.get(u as usize, v as usize) else { continue };
            let ni = kf.pose.rotation.transpose() * map.normal_at(fp.pixel).unwrap();
            let nj = kj.pose.rotation.transpose() * mj.normal_at(v as usize * 120 + u as usize).unwrap();
            if (xc.z - dj).abs() <= cfg.rel_depth_eps * dj && ni.dot(&nj) >= cfg.normal_agreement_deg.to_radians().cos() {
                agree += 1;
            }
        }
        assert!(agree + 1 >= cfg.min_consistent_views);
    }
    // Reversed input gives the same point set.
    let rk: Vec<_> = kfs.iter().rev().cloned().collect();
    let rm: Vec<_> = maps.iter().rev().cloned().collect();
    let rev = fuse_depth_maps(&rk, &rm, &cfg).unwrap();
    let key = |p: &Vector3<f64>| (p.x.to_bits(), p.y.to_bits(), p.z.to_bits());
    let mut a: Vec<_> = cloud.points.iter().map(key).collect();
    let mut b: Vec<_> = rev.points.iter().map(key).collect();
    a.sort();
    b.sort();
    assert_eq!(a, b);
}

#[test]
fn rendered_depth_round_trips_through_fusion() {
    let plane = facing_plane(4.0, PLANE_Z, 8);
    let intr = Intrinsics::new(150.0, 150.0, 80.0, 60.0, 160, 120).unwrap();
    let kf = Keyframe::blank(0, look_at(Vector3::zeros(), Vector3::new(0.0, 0.0, 1.0)), intr);
    let d = render_depth(&plane, &kf.pose, &kf.intrinsics);
    let cfg = FusionConfig { min_consistent_views: 1, ..Default::default() };
    let cloud = fuse_depth_maps(std::slice::from_ref(&kf), std::slice::from_ref(&d), &cfg).unwrap();
    assert!(cloud.points.iter().all(|p| (p.z - PLANE_Z).abs() < 1e-5));
}
