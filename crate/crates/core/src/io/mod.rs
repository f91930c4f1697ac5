//! File formats. Every writer goes through [`write_atomic`], so a reader
//! never observes a partially written artifact.

mod obj;
mod pfm;
mod ply;
mod png;
pub mod schema;

use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::mesh::TriMesh;

pub use obj::{obj_string, parse_obj, read_obj, write_obj};
pub use pfm::{
    depth_to_floatmap, floatmap_to_depth, parse_pfm, pfm_bytes, read_depth_pfm, read_normal_pfm, read_pfm, write_depth_pfm,
    write_normal_pfm, FloatMap,
};
pub use ply::{
    cloud_ply_bytes, mesh_ply_bytes, parse_ply, read_cloud_ply, read_mesh_ply, read_ply, write_cloud_ply, write_mesh_ply, PlyData,
    PlyFormat,
};
pub use png::{read_edge_png, read_image_png, write_edge_png, write_gray_png, write_image_png, EDGE_THRESHOLD};

/// Writes `bytes` to a temporary file next to `path` and renames it into
/// place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(tmp.path(), e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| Error::Json { path: path.to_path_buf(), source })?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Parses a JSON document; syntax errors carry line and column.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::parse(path.display().to_string(), format!("line {} column {}", e.line(), e.column()), e.to_string()))
}

/// Hex SHA-256 of a file's contents.
pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Mesh by extension: `.ply` or `.obj`.
pub fn read_mesh(path: &Path) -> Result<TriMesh> {
    match extension(path).as_str() {
        "ply" => read_mesh_ply(path),
        "obj" => read_obj(path),
        other => Err(Error::InvalidInput(format!("{}: unsupported mesh format '{other}'", path.display()))),
    }
}

pub fn write_mesh(path: &Path, mesh: &TriMesh) -> Result<()> {
    match extension(path).as_str() {
        "ply" => write_mesh_ply(path, mesh, None, PlyFormat::BinaryLittleEndian),
        "obj" => write_obj(path, mesh),
        other => Err(Error::InvalidInput(format!("{}: unsupported mesh format '{other}'", path.display()))),
    }
}

fn extension(path: &Path) -> String {
    path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase()
}
