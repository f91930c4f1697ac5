//! Project manifests and the staged reconstruction pipeline.
//!
//! Each stage reads its inputs from the project (manifest-relative paths)
//! and from upstream artifacts in the output directory, writes its own
//! artifacts atomically, and leaves a JSON report under `reports/`.

mod stages;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::constraints::PclConstraintConfig;
use crate::error::{Error, Result};
use crate::fit::FitConfig;
use crate::io::schema::{check_version, SCHEMA_VERSION};
use crate::io::{read_json, write_json};
use crate::landmarks::TriangulationConfig;
use crate::mvs::{FusionConfig, PatchMatchConfig, DEFAULT_TAU_REL};
use crate::viewsel::ViewSelConfig;

pub use stages::{load_keyframes, run_pipeline, run_stage, ArtifactPaths, EvalSummary};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LandmarkStageConfig {
    /// Include the ear landmark subset.
    pub use_ears: bool,
    /// Also align the template with ear landmarks. By default the coarse
    /// prior comes from face landmarks only and ears enter the fit alone.
    pub align_with_ears: bool,
}

impl Default for LandmarkStageConfig {
    fn default() -> Self {
        LandmarkStageConfig { use_ears: true, align_with_ears: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub enabled: bool,
    /// Maximum relative disagreement with the prior depth.
    pub tau_rel: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig { enabled: true, tau_rel: DEFAULT_TAU_REL }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EdgeStageConfig {
    /// Use edge constraints in the fit.
    pub enabled: bool,
}

impl Default for EdgeStageConfig {
    fn default() -> Self {
        EdgeStageConfig { enabled: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Heatmap saturation distance as a fraction of the ground-truth
    /// bounding-box diagonal.
    pub heatmap_d_max_frac: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { heatmap_d_max_frac: 0.02 }
    }
}

/// Every tunable of every stage.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ProjectConfig {
    pub triangulation: TriangulationConfig,
    pub landmarks: LandmarkStageConfig,
    pub viewsel: ViewSelConfig,
    pub patchmatch: PatchMatchConfig,
    pub filter: FilterConfig,
    pub fusion: FusionConfig,
    pub edges: EdgeStageConfig,
    pub pointcloud: PclConstraintConfig,
    pub fit: FitConfig,
    pub eval: EvalConfig,
}

impl ProjectConfig {
    pub fn validate(&self) -> Result<()> {
        self.viewsel.validate()?;
        self.patchmatch.validate()?;
        self.fusion.validate()?;
        self.pointcloud.validate()?;
        self.fit.validate()?;
        if !(self.filter.tau_rel > 0.0) || !(self.eval.heatmap_d_max_frac > 0.0) {
            return Err(Error::Config("filter.tau_rel and eval.heatmap_d_max_frac must be positive".into()));
        }
        Ok(())
    }
}

/// On-disk project description. Paths are relative to the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub cameras: PathBuf,
    pub landmarks: PathBuf,
    pub correspondence: PathBuf,
    pub template: PathBuf,
    /// Precomputed edge masks, one per camera in camera-file order. When
    /// absent the `edges` stage detects edges in the keyframe images.
    #[serde(default)]
    pub edge_maps: Option<Vec<PathBuf>>,
    #[serde(default)]
    pub gt_mesh: Option<PathBuf>,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub config: ProjectConfig,
}

/// A loaded manifest with paths resolved against its directory.
#[derive(Debug, Clone)]
pub struct Project {
    pub manifest_path: PathBuf,
    pub root: PathBuf,
    pub manifest: Manifest,
    pub config: ProjectConfig,
}

impl Project {
    /// Loads and checks a manifest: schema version, config invariants and
    /// the existence of every referenced input file.
    pub fn load(path: &Path) -> Result<Project> {
        let manifest: Manifest = read_json(path)?;
        check_version(&path.display().to_string(), manifest.schema_version)?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let project = Project { manifest_path: path.to_path_buf(), root, config: manifest.config.clone(), manifest };
        project.config.validate()?;
        let m = &project.manifest;
        let mut required = vec![&m.cameras, &m.landmarks, &m.correspondence, &m.template];
        required.extend(m.edge_maps.iter().flatten());
        required.extend(m.gt_mesh.iter());
        for p in required {
            let full = project.resolve(p);
            if !full.is_file() {
                return Err(Error::Config(format!("manifest references missing file {}", full.display())));
            }
        }
        Ok(project)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.manifest.output_dir)
    }

    pub fn artifacts(&self) -> ArtifactPaths {
        ArtifactPaths::new(&self.output_dir())
    }

    pub fn save_manifest(&self, path: &Path) -> Result<()> {
        let mut m = self.manifest.clone();
        m.config = self.config.clone();
        m.schema_version = SCHEMA_VERSION;
        write_json(path, &m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Triangulate,
    Align,
    SelectViews,
    Mvs,
    Fuse,
    Edges,
    Fit,
    Eval,
}

impl Stage {
    /// Execution order of `pipeline`.
    pub const ALL: [Stage; 8] =
        [Stage::Triangulate, Stage::Align, Stage::SelectViews, Stage::Mvs, Stage::Fuse, Stage::Edges, Stage::Fit, Stage::Eval];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Triangulate => "triangulate",
            Stage::Align => "align",
            Stage::SelectViews => "select-views",
            Stage::Mvs => "mvs",
            Stage::Fuse => "fuse",
            Stage::Edges => "edges",
            Stage::Fit => "fit",
            Stage::Eval => "eval",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Stage> {
        Stage::ALL.into_iter().find(|st| st.name() == s).ok_or_else(|| Error::Config(format!("unknown stage '{s}'")))
    }
}

/// Machine-readable summary of one stage run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub schema_version: u32,
    pub stage: Stage,
    pub duration_ms: f64,
    /// SHA-256 of every input file, keyed by path.
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub counts: BTreeMap<String, f64>,
    /// Effective configuration of the stage.
    pub config: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energies: Option<Vec<crate::fit::EnergyRecord>>,
}
