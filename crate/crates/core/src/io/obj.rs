//! Wavefront OBJ meshes (positions and faces only).

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;

use super::write_atomic;
use crate::error::{Error, Result};
use crate::mesh::TriMesh;

pub fn obj_string(mesh: &TriMesh) -> String {
    let mut s = String::with_capacity(40 * (mesh.num_vertices() + mesh.faces.len()));
    for v in &mesh.vertices {
        let _ = writeln!(s, "v {:?} {:?} {:?}", v.x, v.y, v.z);
    }
    for f in &mesh.faces {
        let _ = writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    s
}

/// Parses `v` and `f` records; polygons are fan-triangulated, `v/vt/vn`
/// references and negative (relative) indices are accepted.
pub fn parse_obj(path: &str, text: &str) -> Result<TriMesh> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let loc = || format!("line {}", ln + 1);
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("v") => {
                let c: Vec<f64> =
                    tok.take(3).map(|t| t.parse::<f64>().map_err(|e| Error::parse(path, loc(), e.to_string()))).collect::<Result<_>>()?;
                if c.len() != 3 {
                    return Err(Error::parse(path, loc(), "vertex needs 3 coordinates"));
                }
                vertices.push(Vector3::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                let mut idx = Vec::new();
                for t in tok {
                    let first = t.split('/').next().unwrap_or("");
                    let i: i64 = first.parse().map_err(|_| Error::parse(path, loc(), format!("bad face index '{t}'")))?;
                    let resolved = if i > 0 { i - 1 } else { vertices.len() as i64 + i };
                    if i == 0 || resolved < 0 || resolved >= vertices.len() as i64 {
                        return Err(Error::parse(path, loc(), format!("face index {i} out of range")));
                    }
                    idx.push(resolved as usize);
                }
                if idx.len() < 3 {
                    return Err(Error::parse(path, loc(), "face with fewer than 3 vertices"));
                }
                for k in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    TriMesh::new(vertices, faces)
}

pub fn read_obj(path: &Path) -> Result<TriMesh> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_obj(&path.display().to_string(), &text)
}

pub fn write_obj(path: &Path, mesh: &TriMesh) -> Result<()> {
    write_atomic(path, obj_string(mesh).as_bytes())
}
