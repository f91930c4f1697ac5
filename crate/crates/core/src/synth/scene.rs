//! Synthetic capture: keyframes on an arc around a mesh, with rendered
//! images, noisy depth maps and projected landmarks.

use std::path::{Path, PathBuf};

use nalgebra::{Point3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::render::{render_image, Shading};
use crate::camera::{CameraPose, Intrinsics, Keyframe};
use crate::depth::DepthMap;
use crate::error::{Error, Result};
use crate::image::{GrayImage, Image};
use crate::io::schema::{CameraRecord, CamerasFile, CorrespondenceFile, LandmarksFile, SCHEMA_VERSION};
use crate::io::{write_depth_pfm, write_gray_png, write_json, write_mesh_ply, PlyFormat};
use crate::landmarks::{CorrespondenceTable, LandmarkObservation};
use crate::mesh::TriMesh;
use crate::pipeline::{Manifest, ProjectConfig};
use crate::raster::render_depth;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_views: usize,
    /// Horizontal arc covered by the cameras, centered on +z.
    pub arc_degrees: f64,
    pub elevation_degrees: f64,
    pub width: usize,
    pub height: usize,
    /// Camera distance from the centroid in bounding radii.
    pub distance_factor: f64,
    /// Depth noise standard deviation as a fraction of the mesh diagonal.
    pub depth_sigma_frac: f64,
    pub landmark_sigma_px: f64,
    pub seed: u64,
    /// Texture feature size as a fraction of the bounding radius.
    pub texture_scale_frac: f64,
    pub shading: Shading,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_views: 40,
            arc_degrees: 180.0,
            elevation_degrees: 10.0,
            width: 320,
            height: 240,
            distance_factor: 3.0,
            depth_sigma_frac: 0.002,
            landmark_sigma_px: 0.5,
            seed: 0,
            texture_scale_frac: 0.05,
            shading: Shading { light_dir: Vector3::new(0.4, 0.5, 1.0).normalize(), texture_amplitude: 0.5, ..Shading::default() },
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthScene {
    pub keyframes: Vec<Keyframe>,
    /// Rendered depth plus noise, one per keyframe.
    pub depth: Vec<DepthMap>,
    pub observations: Vec<LandmarkObservation>,
}

/// Keyframe poses on a circular arc facing the mesh centroid.
pub fn arc_cameras(mesh: &TriMesh, cfg: &SynthConfig) -> Result<Vec<(CameraPose, Intrinsics)>> {
    if cfg.n_views < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 views, got {}", cfg.n_views)));
    }
    if !(cfg.distance_factor > 1.0) {
        return Err(Error::InvalidInput(format!(
            "camera distance factor {} puts the cameras inside the bounding sphere",
            cfg.distance_factor
        )));
    }
    let center = mesh.bbox().center();
    let radius = mesh.vertices.iter().map(|v| (v - center).norm()).fold(0.0, f64::max);
    let dist = cfg.distance_factor * radius;
    let f = 0.9 * 0.5 * cfg.width.min(cfg.height) as f64 * (dist * dist - radius * radius).max(0.0).sqrt() / radius;
    let intr = Intrinsics::new(f, f, (cfg.width as f64 - 1.0) / 2.0, (cfg.height as f64 - 1.0) / 2.0, cfg.width, cfg.height)?;
    let el = cfg.elevation_degrees.to_radians();
    (0..cfg.n_views)
        .map(|k| {
            let a = (-cfg.arc_degrees / 2.0 + cfg.arc_degrees * k as f64 / (cfg.n_views - 1) as f64).to_radians();
            let eye = center + Vector3::new(a.sin() * el.cos(), el.sin(), a.cos() * el.cos()) * dist;
            let pose = CameraPose::look_at(Point3::from(eye), Point3::from(center), Vector3::y())?;
            Ok((pose, intr))
        })
        .collect()
}

fn quantized(img: &GrayImage) -> GrayImage {
    GrayImage {
        width: img.width,
        height: img.height,
        data: img.data.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() / 255.0).collect(),
    }
}

/// Renders the capture in memory. Images are quantized to 8 bits so they
/// equal what is read back from disk.
pub fn render_scene(gt: &TriMesh, table: &CorrespondenceTable, cfg: &SynthConfig) -> Result<SynthScene> {
    if gt.is_empty() {
        return Err(Error::EmptyMesh);
    }
    table.validate(gt.num_vertices())?;
    let cams = arc_cameras(gt, cfg)?;
    let center = gt.bbox().center();
    let radius = gt.vertices.iter().map(|v| (v - center).norm()).fold(0.0, f64::max);
    let mut shading = cfg.shading;
    shading.texture_scale = cfg.texture_scale_frac * radius;
    let sigma_d = cfg.depth_sigma_frac * gt.diagonal();
    let per_view: Vec<Result<(Keyframe, DepthMap, Vec<LandmarkObservation>)>> = cams
        .par_iter()
        .enumerate()
        .map(|(k, (pose, intr))| {
            if let Some(v) = gt.vertices.iter().position(|v| pose.to_camera(v).z <= 0.0) {
                return Err(Error::InvalidInput(format!("view {k}: mesh vertex {v} is not in front of the camera")));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(k as u64);
            let img = quantized(&render_image(gt, pose, intr, &shading));
            let clean = render_depth(gt, pose, intr);
            let mut depth = clean.clone();
            if sigma_d > 0.0 {
                let noise = Normal::new(0.0, sigma_d).expect("positive sigma");
                for i in 0..depth.depth.len() {
                    if depth.valid[i] {
                        depth.depth[i] = (depth.depth[i] as f64 + noise.sample(&mut rng)).max(1e-9) as f32;
                    }
                }
            }
            let lm_noise = (cfg.landmark_sigma_px > 0.0).then(|| Normal::new(0.0, cfg.landmark_sigma_px).expect("positive sigma"));
            let mut obs = Vec::new();
            for (id, v) in table.entries() {
                let p = gt.vertices[v];
                let (mut px, z) = crate::camera::project(pose, intr, &p)?;
                let Some((u, w)) = intr.pixel_index(px) else { continue };
                if let Some(zb) = clean.get(u, w) {
                    if z > zb * (1.0 + crate::viewsel::VISIBILITY_REL_TOL) {
                        continue;
                    }
                }
                if let Some(n) = &lm_noise {
                    px.x += n.sample(&mut rng);
                    px.y += n.sample(&mut rng);
                }
                obs.push(LandmarkObservation { frame_id: k as u32, landmark_id: id, position: px, confidence: 1.0 });
            }
            let kf = Keyframe::new(k as u32, Image::from_gray(&img), *pose, *intr)?;
            Ok((kf, depth, obs))
        })
        .collect();
    let mut scene = SynthScene { keyframes: Vec::new(), depth: Vec::new(), observations: Vec::new() };
    for r in per_view {
        let (kf, d, o) = r?;
        scene.keyframes.push(kf);
        scene.depth.push(d);
        scene.observations.extend(o);
    }
    Ok(scene)
}

/// Writes a complete project for `scene` under `dir` and returns the
/// manifest path.
pub fn write_project(
    dir: &Path,
    scene: &SynthScene,
    gt: &TriMesh,
    template: &TriMesh,
    table: &CorrespondenceTable,
    config: &ProjectConfig,
) -> Result<PathBuf> {
    let mut cameras = Vec::new();
    for kf in &scene.keyframes {
        let name = format!("images/{:04}.png", kf.id);
        write_gray_png(&dir.join(&name), &kf.gray)?;
        cameras.push(CameraRecord::new(kf.id, name, &kf.pose, &kf.intrinsics));
    }
    for (kf, d) in scene.keyframes.iter().zip(&scene.depth) {
        write_depth_pfm(&dir.join(format!("gt_depth/{:04}.pfm", kf.id)), d)?;
    }
    write_json(&dir.join("cameras.json"), &CamerasFile { schema_version: SCHEMA_VERSION, cameras })?;
    write_json(&dir.join("landmarks.json"), &LandmarksFile::from_observations(&scene.observations))?;
    write_json(&dir.join("correspondence.json"), &CorrespondenceFile::from_table(table))?;
    write_mesh_ply(&dir.join("template.ply"), template, None, PlyFormat::BinaryLittleEndian)?;
    write_mesh_ply(&dir.join("gt.ply"), gt, None, PlyFormat::BinaryLittleEndian)?;
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        cameras: "cameras.json".into(),
        landmarks: "landmarks.json".into(),
        correspondence: "correspondence.json".into(),
        template: "template.ply".into(),
        edge_maps: None,
        gt_mesh: Some("gt.ply".into()),
        output_dir: "out".into(),
        config: config.clone(),
    };
    let path = dir.join("manifest.json");
    write_json(&path, &manifest)?;
    Ok(path)
}

pub fn synth_scene(
    gt: &TriMesh,
    template: &TriMesh,
    table: &CorrespondenceTable,
    cfg: &SynthConfig,
    config: &ProjectConfig,
    dir: &Path,
) -> Result<PathBuf> {
    let scene = render_scene(gt, table, cfg)?;
    write_project(dir, &scene, gt, template, table, config)
}

/// Similarity that places the template in its own frame, so that the
/// alignment stage has work to do.
pub fn template_placement() -> crate::landmarks::Similarity {
    crate::landmarks::Similarity {
        scale: 1.15,
        rotation: nalgebra::Rotation3::from_axis_angle(&Vector3::y_axis(), 15f64.to_radians()).into_inner(),
        translation: Vector3::new(0.02, -0.01, 0.03),
    }
}

/// The bundled benchmark: the head proxy subject as ground truth, the
/// generic template head placed by [`template_placement`], and the shared
/// landmark table.
pub fn head_project(dir: &Path, cfg: &SynthConfig, config: &ProjectConfig) -> Result<PathBuf> {
    let gt = super::HeadParams::subject().mesh();
    let t = template_placement();
    let template = super::HeadParams::template().mesh().transformed(t.scale, &t.rotation, &t.translation);
    let table = super::head_correspondences(super::HeadParams::subject().subdivisions);
    synth_scene(&gt, &template, &table, cfg, config, dir)
}
