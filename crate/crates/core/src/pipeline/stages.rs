use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use super::{Project, Stage, StageReport};
use crate::camera::Keyframe;
use crate::constraints::{detect_edges, EdgeMap};
use crate::depth::DepthMap;
use crate::error::{Error, Result};
use crate::eval::{accuracy, completion, heatmap_colors, MetricStats};
use crate::fit::{fit_mesh, FitData};
use crate::io::schema::{
    check_version, AlignmentFile, CamerasFile, CorrespondenceFile, Landmarks3DFile, LandmarksFile, ViewSelectionFile, SCHEMA_VERSION,
};
use crate::io::{
    file_sha256, read_cloud_ply, read_depth_pfm, read_edge_png, read_image_png, read_json, read_mesh, read_normal_pfm, write_atomic,
    write_cloud_ply, write_depth_pfm, write_edge_png, write_json, write_mesh_ply, write_normal_pfm, PlyFormat,
};
use crate::landmarks::{similarity_align, triangulate_all, CorrespondenceTable, Landmark3D, EAR_ID_BASE};
use crate::mesh::TriMesh;
use crate::mvs::{filter_with_prior, fuse_depth_maps, patchmatch_run, PriorDepth};
use crate::viewsel::select_source_views;

/// Locations of every stage artifact under the output directory.
#[derive(Debug, Clone)]
pub struct ArtifactPaths {
    pub dir: PathBuf,
    pub landmarks3d: PathBuf,
    pub aligned: PathBuf,
    pub alignment: PathBuf,
    pub views: PathBuf,
    pub cloud: PathBuf,
    pub fitted: PathBuf,
    pub energy_log: PathBuf,
    pub eval: PathBuf,
    pub heatmap: PathBuf,
}

impl ArtifactPaths {
    pub fn new(dir: &Path) -> Self {
        ArtifactPaths {
            dir: dir.to_path_buf(),
            landmarks3d: dir.join("landmarks3d.json"),
            aligned: dir.join("aligned.ply"),
            alignment: dir.join("alignment.json"),
            views: dir.join("views.json"),
            cloud: dir.join("cloud.ply"),
            fitted: dir.join("fitted.ply"),
            energy_log: dir.join("energy.log"),
            eval: dir.join("eval.json"),
            heatmap: dir.join("heatmap_accuracy.ply"),
        }
    }

    pub fn depth(&self, id: u32) -> PathBuf {
        self.dir.join(format!("depth/{id:04}.pfm"))
    }

    pub fn normal(&self, id: u32) -> PathBuf {
        self.dir.join(format!("depth/{id:04}.normal.pfm"))
    }

    pub fn edges(&self, id: u32) -> PathBuf {
        self.dir.join(format!("edges/{id:04}.png"))
    }

    pub fn report(&self, stage: Stage) -> PathBuf {
        self.dir.join(format!("reports/{}.json", stage.name()))
    }
}

/// Input bookkeeping for a stage report.
struct Ledger {
    inputs: BTreeMap<String, String>,
    outputs: Vec<String>,
    counts: BTreeMap<String, f64>,
}

impl Ledger {
    fn new() -> Self {
        Ledger { inputs: BTreeMap::new(), outputs: Vec::new(), counts: BTreeMap::new() }
    }

    fn input(&mut self, p: &Path) -> Result<()> {
        self.inputs.insert(p.display().to_string(), file_sha256(p)?);
        Ok(())
    }

    fn output(&mut self, p: &Path) {
        self.outputs.push(p.display().to_string());
    }

    fn count(&mut self, name: &str, v: impl Into<f64>) {
        self.counts.insert(name.to_string(), v.into());
    }
}

/// Fails with a pointer to the producing stage when an upstream artifact is
/// missing.
fn require(path: &Path, stage: &'static str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::MissingArtifact { stage, path: path.to_path_buf() })
    }
}

fn load_cameras(project: &Project, ledger: &mut Ledger) -> Result<CamerasFile> {
    let path = project.resolve(&project.manifest.cameras);
    ledger.input(&path)?;
    let cams: CamerasFile = read_json(&path)?;
    check_version(&path.display().to_string(), cams.schema_version)?;
    if cams.cameras.is_empty() {
        return Err(Error::InvalidInput(format!("{}: no cameras", path.display())));
    }
    let mut ids: Vec<u32> = cams.cameras.iter().map(|c| c.frame_id).collect();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidInput(format!("{}: duplicate frame ids", path.display())));
    }
    Ok(cams)
}

fn camera_dir(project: &Project) -> PathBuf {
    project.resolve(&project.manifest.cameras).parent().map(Path::to_path_buf).unwrap_or_default()
}

/// Keyframes of a project, with or without pixel content.
pub fn load_keyframes(project: &Project, with_images: bool) -> Result<Vec<Keyframe>> {
    keyframes(project, with_images, &mut Ledger::new())
}

fn keyframes(project: &Project, with_images: bool, ledger: &mut Ledger) -> Result<Vec<Keyframe>> {
    let cams = load_cameras(project, ledger)?;
    let dir = camera_dir(project);
    cams.cameras
        .iter()
        .map(|c| {
            let (pose, intr) = (c.pose()?, c.intrinsics()?);
            if with_images {
                let path = dir.join(&c.image);
                ledger.input(&path)?;
                Keyframe::new(c.frame_id, read_image_png(&path)?, pose, intr)
            } else {
                Ok(Keyframe::blank(c.frame_id, pose, intr))
            }
        })
        .collect()
}

fn load_table(project: &Project, ledger: &mut Ledger) -> Result<CorrespondenceTable> {
    let path = project.resolve(&project.manifest.correspondence);
    ledger.input(&path)?;
    let file: CorrespondenceFile = read_json(&path)?;
    check_version(&path.display().to_string(), file.schema_version)?;
    file.table()
}

fn load_landmarks3d(a: &ArtifactPaths, ledger: &mut Ledger) -> Result<Vec<Landmark3D>> {
    require(&a.landmarks3d, "triangulate")?;
    ledger.input(&a.landmarks3d)?;
    let file: Landmarks3DFile = read_json(&a.landmarks3d)?;
    check_version(&a.landmarks3d.display().to_string(), file.schema_version)?;
    Ok(file.landmarks)
}

fn load_aligned(a: &ArtifactPaths, ledger: &mut Ledger) -> Result<TriMesh> {
    require(&a.aligned, "align")?;
    ledger.input(&a.aligned)?;
    read_mesh(&a.aligned)
}

fn config_value<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("configs serialize")
}

/// Runs one stage and writes its report.
pub fn run_stage(project: &Project, stage: Stage) -> Result<StageReport> {
    let start = Instant::now();
    let a = project.artifacts();
    let mut ledger = Ledger::new();
    let cfg = &project.config;
    let mut energies = None;
    let config = match stage {
        Stage::Triangulate => {
            let kfs = keyframes(project, false, &mut ledger)?;
            let table = load_table(project, &mut ledger)?;
            let lm_path = project.resolve(&project.manifest.landmarks);
            ledger.input(&lm_path)?;
            let file: LandmarksFile = read_json(&lm_path)?;
            check_version(&lm_path.display().to_string(), file.schema_version)?;
            let obs = file.observations();
            let by_id: BTreeMap<u32, &Keyframe> = kfs.iter().map(|k| (k.id, k)).collect();
            for o in &obs {
                let kf = by_id
                    .get(&o.frame_id)
                    .ok_or_else(|| Error::InvalidInput(format!("landmark observation in unknown frame {}", o.frame_id)))?;
                o.validate(&kf.intrinsics)?;
            }
            let mut selection = table.selection();
            selection.use_ears = cfg.landmarks.use_ears;
            let lms = triangulate_all(&obs, &kfs, &selection, &cfg.triangulation);
            ledger.count("observations", obs.len() as f64);
            ledger.count("landmarks", lms.len() as f64);
            if !lms.is_empty() {
                ledger.count("mean_rms_px", lms.iter().map(|l| l.rms_reprojection_error).sum::<f64>() / lms.len() as f64);
            }
            write_json(&a.landmarks3d, &Landmarks3DFile { schema_version: SCHEMA_VERSION, landmarks: lms })?;
            ledger.output(&a.landmarks3d);
            serde_json::json!({ "triangulation": cfg.triangulation, "landmarks": cfg.landmarks })
        }
        Stage::Align => {
            let lms = load_landmarks3d(&a, &mut ledger)?;
            let table = load_table(project, &mut ledger)?;
            let tpath = project.resolve(&project.manifest.template);
            ledger.input(&tpath)?;
            let template = read_mesh(&tpath)?;
            let used: Vec<Landmark3D> = lms.into_iter().filter(|l| cfg.landmarks.align_with_ears || l.landmark_id < EAR_ID_BASE).collect();
            let al = similarity_align(&template, &table, &used)?;
            ledger.count("correspondences", al.num_correspondences as f64);
            ledger.count("rms", al.rms);
            ledger.count("scale", al.transform.scale);
            write_mesh_ply(&a.aligned, &al.mesh, None, PlyFormat::BinaryLittleEndian)?;
            write_json(
                &a.alignment,
                &AlignmentFile {
                    schema_version: SCHEMA_VERSION,
                    transform: al.transform,
                    rms: al.rms,
                    num_correspondences: al.num_correspondences,
                },
            )?;
            ledger.output(&a.aligned);
            ledger.output(&a.alignment);
            serde_json::json!({ "landmarks": cfg.landmarks })
        }
        Stage::SelectViews => {
            let kfs = keyframes(project, false, &mut ledger)?;
            let prior = load_aligned(&a, &mut ledger)?;
            let views = select_source_views(&kfs, &prior, &cfg.viewsel)?;
            ledger.count("keyframes", kfs.len() as f64);
            write_json(&a.views, &ViewSelectionFile { schema_version: SCHEMA_VERSION, views })?;
            ledger.output(&a.views);
            config_value(&cfg.viewsel)
        }
        Stage::Mvs => {
            let kfs = keyframes(project, true, &mut ledger)?;
            let prior_mesh = load_aligned(&a, &mut ledger)?;
            require(&a.views, "select-views")?;
            ledger.input(&a.views)?;
            let views: ViewSelectionFile = read_json(&a.views)?;
            check_version(&a.views.display().to_string(), views.schema_version)?;
            let index: BTreeMap<u32, usize> = kfs.iter().enumerate().map(|(i, k)| (k.id, i)).collect();
            let mut total_valid = 0usize;
            for kf in &kfs {
                let entry = views
                    .views
                    .iter()
                    .find(|v| v.reference == kf.id)
                    .ok_or_else(|| Error::InvalidInput(format!("no source views for keyframe {}", kf.id)))?;
                let sources: Vec<&Keyframe> = entry
                    .sources
                    .iter()
                    .map(|id| index.get(id).map(|&i| &kfs[i]).ok_or_else(|| Error::InvalidInput(format!("unknown source keyframe {id}"))))
                    .collect::<Result<_>>()?;
                let prior = PriorDepth::from_mesh(&prior_mesh, kf);
                let pm = cfg.patchmatch;
                let out = patchmatch_run(kf, &sources, &prior, &pm)?;
                let depth = if cfg.filter.enabled {
                    filter_with_prior(&out.depth, &prior.depth, cfg.filter.tau_rel, pm.cost_threshold)?
                } else {
                    out.depth
                };
                total_valid += depth.num_valid();
                write_depth_pfm(&a.depth(kf.id), &depth)?;
                write_normal_pfm(&a.normal(kf.id), &depth)?;
                ledger.output(&a.depth(kf.id));
                ledger.output(&a.normal(kf.id));
                log::info!("mvs: keyframe {} has {} valid depths", kf.id, depth.num_valid());
            }
            ledger.count("valid_depths", total_valid as f64);
            serde_json::json!({ "patchmatch": cfg.patchmatch, "filter": cfg.filter })
        }
        Stage::Fuse => {
            let kfs = keyframes(project, true, &mut ledger)?;
            let mut depths: Vec<DepthMap> = Vec::with_capacity(kfs.len());
            for kf in &kfs {
                let (dp, np) = (a.depth(kf.id), a.normal(kf.id));
                require(&dp, "mvs")?;
                ledger.input(&dp)?;
                let mut d = read_depth_pfm(&dp)?;
                if np.is_file() {
                    ledger.input(&np)?;
                    read_normal_pfm(&np, &mut d)?;
                }
                depths.push(d);
            }
            let cloud = fuse_depth_maps(&kfs, &depths, &cfg.fusion)?;
            ledger.count("points", cloud.len() as f64);
            write_cloud_ply(&a.cloud, &cloud, PlyFormat::BinaryLittleEndian)?;
            ledger.output(&a.cloud);
            config_value(&cfg.fusion)
        }
        Stage::Edges => {
            let kfs = keyframes(project, project.manifest.edge_maps.is_none(), &mut ledger)?;
            let mut total = 0usize;
            for (i, kf) in kfs.iter().enumerate() {
                let edges = match &project.manifest.edge_maps {
                    Some(list) => {
                        let p = list
                            .get(i)
                            .map(|p| project.resolve(p))
                            .ok_or_else(|| Error::Config(format!("{} edge maps for {} cameras", list.len(), kfs.len())))?;
                        ledger.input(&p)?;
                        read_edge_png(&p)?
                    }
                    None => detect_edges(&kf.gray, cfg.fit.edge.low, cfg.fit.edge.high),
                };
                if edges.width != kf.intrinsics.width || edges.height != kf.intrinsics.height {
                    return Err(Error::DimensionMismatch(format!("edge map of keyframe {} has the wrong size", kf.id)));
                }
                total += edges.num_edges();
                write_edge_png(&a.edges(kf.id), &edges)?;
                ledger.output(&a.edges(kf.id));
            }
            ledger.count("edge_pixels", total as f64);
            serde_json::json!({ "low": cfg.fit.edge.low, "high": cfg.fit.edge.high })
        }
        Stage::Fit => {
            let template = load_aligned(&a, &mut ledger)?;
            require(&a.cloud, "fuse")?;
            ledger.input(&a.cloud)?;
            let cloud = read_cloud_ply(&a.cloud)?;
            let lms: Vec<Landmark3D> =
                load_landmarks3d(&a, &mut ledger)?.into_iter().filter(|l| cfg.landmarks.use_ears || l.landmark_id < EAR_ID_BASE).collect();
            let table = load_table(project, &mut ledger)?;
            let kfs = keyframes(project, false, &mut ledger)?;
            let mut edge_maps: Vec<EdgeMap> = Vec::new();
            if cfg.edges.enabled {
                for kf in &kfs {
                    let p = a.edges(kf.id);
                    require(&p, "edges")?;
                    ledger.input(&p)?;
                    edge_maps.push(read_edge_png(&p)?);
                }
            }
            let data = FitData { cloud: Some(&cloud), landmarks: &lms, table: &table, keyframes: &kfs, edge_maps: &edge_maps };
            let result = fit_mesh(&template, &data, &cfg.pointcloud, &cfg.fit)?;
            write_mesh_ply(&a.fitted, &result.mesh, None, PlyFormat::BinaryLittleEndian)?;
            write_atomic(&a.energy_log, result.log.to_table().as_bytes())?;
            ledger.output(&a.fitted);
            ledger.output(&a.energy_log);
            ledger.count("inner_iterations", result.log.records.len() as f64);
            if let Some(last) = result.log.records.last() {
                ledger.count("final_energy", last.energy_after);
            }
            energies = Some(result.log.records);
            ledger.count("landmarks", lms.len() as f64);
            serde_json::json!({ "fit": cfg.fit, "pointcloud": cfg.pointcloud, "edges": cfg.edges, "landmarks": cfg.landmarks })
        }
        Stage::Eval => {
            let gt_rel = project.manifest.gt_mesh.as_ref().ok_or_else(|| Error::Config("eval needs `gt_mesh` in the manifest".into()))?;
            let gt_path = project.resolve(gt_rel);
            require(&a.fitted, "fit")?;
            ledger.input(&a.fitted)?;
            ledger.input(&gt_path)?;
            let recon = read_mesh(&a.fitted)?;
            let gt = read_mesh(&gt_path)?;
            let report = evaluate(&recon, &gt)?;
            let d_max = cfg.eval.heatmap_d_max_frac * gt.diagonal();
            write_mesh_ply(&a.heatmap, &recon, Some(&heatmap_colors(&report.accuracy_distances, d_max)), PlyFormat::BinaryLittleEndian)?;
            write_json(&a.eval, &report.summary)?;
            ledger.count("accuracy_mean", report.summary.accuracy.mean);
            ledger.count("completion_mean", report.summary.completion.mean);
            ledger.output(&a.eval);
            ledger.output(&a.heatmap);
            config_value(&cfg.eval)
        }
    };
    let report = StageReport {
        schema_version: SCHEMA_VERSION,
        stage,
        duration_ms: start.elapsed().as_secs_f64() * 1e3,
        inputs: ledger.inputs,
        outputs: ledger.outputs,
        counts: ledger.counts,
        config,
        energies,
    };
    write_json(&a.report(stage), &report)?;
    log::info!("{stage}: done in {:.1} s", report.duration_ms / 1e3);
    Ok(report)
}

/// Summary written by the `eval` stage.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct EvalSummary {
    pub schema_version: u32,
    pub accuracy: MetricStats,
    pub completion: MetricStats,
    /// Ground-truth bounding-box diagonal, for relative figures.
    pub gt_diagonal: f64,
}

pub(crate) struct EvalReport {
    pub summary: EvalSummary,
    pub accuracy_distances: Vec<f64>,
}

pub(crate) fn evaluate(recon: &TriMesh, gt: &TriMesh) -> Result<EvalReport> {
    let (acc, d) = accuracy(recon, gt)?;
    let (comp, _) = completion(recon, gt)?;
    Ok(EvalReport {
        summary: EvalSummary { schema_version: SCHEMA_VERSION, accuracy: acc, completion: comp, gt_diagonal: gt.diagonal() },
        accuracy_distances: d,
    })
}

/// Runs every stage in order; `eval` only when the manifest names a
/// ground-truth mesh.
pub fn run_pipeline(project: &Project) -> Result<Vec<StageReport>> {
    let mut reports = Vec::new();
    for stage in Stage::ALL {
        if stage == Stage::Eval && project.manifest.gt_mesh.is_none() {
            log::info!("pipeline: no ground truth, skipping eval");
            continue;
        }
        reports.push(run_stage(project, stage)?);
    }
    Ok(reports)
}
