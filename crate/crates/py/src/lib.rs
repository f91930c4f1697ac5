//! Python module `mvsfit`: meshes, alignment, evaluation metrics, synthetic
//! projects and the staged pipeline.

use std::path::PathBuf;

use mvsfit::eval::MetricStats;
use mvsfit::landmarks::Similarity as CoreSimilarity;
use mvsfit::pipeline::{run_pipeline, run_stage, Project, ProjectConfig, Stage};
use mvsfit::synth::{head_project, SynthConfig};
use mvsfit::TriMesh;
use nalgebra::Vector3;
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyIOError, PyValueError};
use pyo3::prelude::*;

create_exception!(mvsfit, SolverError, PyException);
create_exception!(mvsfit, ConfigError, PyValueError);

fn to_py(e: mvsfit::Error) -> PyErr {
    let msg = e.to_string();
    match e.category() {
        "io" => PyIOError::new_err(msg),
        "config" => ConfigError::new_err(msg),
        "solver" => SolverError::new_err(msg),
        _ => PyValueError::new_err(msg),
    }
}

fn points(v: Vec<[f64; 3]>) -> Vec<Vector3<f64>> {
    v.into_iter().map(Vector3::from).collect()
}

/// Triangle mesh with float64 vertices.
#[pyclass(name = "TriMesh", module = "mvsfit", from_py_object)]
#[derive(Clone)]
pub struct PyTriMesh {
    pub inner: TriMesh,
}

#[pymethods]
impl PyTriMesh {
    #[new]
    fn new(vertices: Vec<[f64; 3]>, faces: Vec<[usize; 3]>) -> PyResult<Self> {
        Ok(PyTriMesh { inner: TriMesh::new(points(vertices), faces).map_err(to_py)? })
    }

    #[staticmethod]
    fn icosphere(subdivisions: u32, radius: f64) -> Self {
        PyTriMesh { inner: TriMesh::icosphere(subdivisions, radius) }
    }

    /// Reads `.ply` or `.obj`.
    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        Ok(PyTriMesh { inner: mvsfit::io::read_mesh(&path).map_err(to_py)? })
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        mvsfit::io::write_mesh(&path, &self.inner).map_err(to_py)
    }

    #[getter]
    fn vertices(&self) -> Vec<[f64; 3]> {
        self.inner.vertices.iter().map(|v| [v.x, v.y, v.z]).collect()
    }

    #[getter]
    fn faces(&self) -> Vec<[usize; 3]> {
        self.inner.faces.clone()
    }

    fn num_vertices(&self) -> usize {
        self.inner.num_vertices()
    }

    fn diagonal(&self) -> f64 {
        self.inner.diagonal()
    }

    fn transformed(&self, t: &PySimilarity) -> Self {
        let s = &t.inner;
        PyTriMesh { inner: self.inner.transformed(s.scale, &s.rotation, &s.translation) }
    }

    fn __len__(&self) -> usize {
        self.inner.num_vertices()
    }

    fn __repr__(&self) -> String {
        format!("TriMesh({} vertices, {} faces)", self.inner.num_vertices(), self.inner.faces.len())
    }
}

/// `x -> scale * R x + t`.
#[pyclass(name = "Similarity", module = "mvsfit", from_py_object)]
#[derive(Clone)]
pub struct PySimilarity {
    pub inner: CoreSimilarity,
}

#[pymethods]
impl PySimilarity {
    #[getter]
    fn scale(&self) -> f64 {
        self.inner.scale
    }

    /// Row-major 3x3 rotation.
    #[getter]
    fn rotation(&self) -> [[f64; 3]; 3] {
        let r = &self.inner.rotation;
        [0, 1, 2].map(|i| [r[(i, 0)], r[(i, 1)], r[(i, 2)]])
    }

    #[getter]
    fn translation(&self) -> [f64; 3] {
        let t = &self.inner.translation;
        [t.x, t.y, t.z]
    }

    fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        let q = self.inner.apply(&Vector3::from(p));
        [q.x, q.y, q.z]
    }

    fn inverse(&self) -> Self {
        PySimilarity { inner: self.inner.inverse() }
    }

    fn __repr__(&self) -> String {
        format!("Similarity(scale={}, translation={:?})", self.inner.scale, self.translation())
    }
}

/// Least-squares similarity mapping `src` onto `dst`.
#[pyfunction]
fn umeyama(src: Vec<[f64; 3]>, dst: Vec<[f64; 3]>) -> PyResult<PySimilarity> {
    Ok(PySimilarity { inner: mvsfit::landmarks::umeyama(&points(src), &points(dst)).map_err(to_py)? })
}

fn stats_json(s: &MetricStats) -> String {
    serde_json::to_string(s).expect("plain numbers serialize")
}

/// Accuracy statistics (JSON) and per-vertex distances from `recon` to `gt`.
#[pyfunction]
fn accuracy(recon: &PyTriMesh, gt: &PyTriMesh) -> PyResult<(String, Vec<f64>)> {
    let (s, d) = mvsfit::eval::accuracy(&recon.inner, &gt.inner).map_err(to_py)?;
    Ok((stats_json(&s), d))
}

/// Completion statistics (JSON) and per-vertex distances from `gt` to `recon`.
#[pyfunction]
fn completion(recon: &PyTriMesh, gt: &PyTriMesh) -> PyResult<(String, Vec<f64>)> {
    let (s, d) = mvsfit::eval::completion(&recon.inner, &gt.inner).map_err(to_py)?;
    Ok((stats_json(&s), d))
}

/// Writes the synthetic head benchmark project and returns its manifest path.
/// `synth_config` and `project_config` are JSON overrides of the defaults.
#[pyfunction]
#[pyo3(signature = (out_dir, synth_config=None, project_config=None))]
fn synth_head(out_dir: PathBuf, synth_config: Option<&str>, project_config: Option<&str>) -> PyResult<PathBuf> {
    let parse_err = |e: serde_json::Error| PyValueError::new_err(e.to_string());
    let cfg: SynthConfig = synth_config.map(serde_json::from_str).transpose().map_err(parse_err)?.unwrap_or_default();
    let config: ProjectConfig = project_config.map(serde_json::from_str).transpose().map_err(parse_err)?.unwrap_or_default();
    head_project(&out_dir, &cfg, &config).map_err(to_py)
}

/// Runs one stage (`triangulate`, `align`, ..., `eval`) and returns its
/// report as JSON.
#[pyfunction]
fn stage(manifest: PathBuf, name: &str) -> PyResult<String> {
    let stage: Stage = name.parse().map_err(to_py)?;
    let project = Project::load(&manifest).map_err(to_py)?;
    let report = run_stage(&project, stage).map_err(to_py)?;
    Ok(serde_json::to_string(&report).expect("report serializes"))
}

/// Runs every stage and returns the reports as JSON strings.
#[pyfunction]
fn pipeline(manifest: PathBuf) -> PyResult<Vec<String>> {
    let project = Project::load(&manifest).map_err(to_py)?;
    let reports = run_pipeline(&project).map_err(to_py)?;
    Ok(reports.iter().map(|r| serde_json::to_string(r).expect("report serializes")).collect())
}

#[pymodule]
#[pyo3(name = "mvsfit")]
fn mvsfit_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTriMesh>()?;
    m.add_class::<PySimilarity>()?;
    m.add_function(wrap_pyfunction!(umeyama, m)?)?;
    m.add_function(wrap_pyfunction!(accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(completion, m)?)?;
    m.add_function(wrap_pyfunction!(synth_head, m)?)?;
    m.add_function(wrap_pyfunction!(stage, m)?)?;
    m.add_function(wrap_pyfunction!(pipeline, m)?)?;
    m.add("SolverError", m.py().get_type::<SolverError>())?;
    m.add("ConfigError", m.py().get_type::<ConfigError>())?;
    Ok(())
}
