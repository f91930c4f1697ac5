//! PLY reading and writing (ascii and binary little-endian).
//!
//! Meshes and clouds are written with `double` coordinates so binary files
//! round-trip bit for bit. The reader accepts any scalar property types.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::Vector3;

use super::write_atomic;
use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::mesh::TriMesh;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlyFormat {
    Ascii,
    BinaryLittleEndian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(s: &str) -> Option<Scalar> {
        Some(match s {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn decode(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar(String, Scalar),
    List(String, Scalar, Scalar),
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

/// Decoded contents of a PLY file: scalar columns and list columns per
/// element.
#[derive(Debug, Default)]
pub struct PlyData {
    scalars: HashMap<(String, String), Vec<f64>>,
    lists: HashMap<(String, String), Vec<Vec<f64>>>,
    counts: HashMap<String, usize>,
}

impl PlyData {
    pub fn count(&self, element: &str) -> usize {
        self.counts.get(element).copied().unwrap_or(0)
    }

    pub fn scalar(&self, element: &str, prop: &str) -> Option<&[f64]> {
        self.scalars.get(&(element.to_string(), prop.to_string())).map(Vec::as_slice)
    }

    pub fn list(&self, element: &str, prop: &str) -> Option<&[Vec<f64>]> {
        self.lists.get(&(element.to_string(), prop.to_string())).map(Vec::as_slice)
    }

    fn vec3(&self, element: &str, names: [&str; 3]) -> Option<Vec<Vector3<f64>>> {
        let [a, b, c] = names.map(|n| self.scalar(element, n));
        let (a, b, c) = (a?, b?, c?);
        Some((0..a.len()).map(|i| Vector3::new(a[i], b[i], c[i])).collect())
    }
}

struct Header {
    format: PlyFormat,
    elements: Vec<Element>,
}

fn parse_header(path: &str, reader: &mut impl BufRead) -> Result<(Header, usize, usize)> {
    let mut line = String::new();
    let mut line_no = 0;
    let mut offset = 0;
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        line.clear();
        let n = reader.read_line(&mut line).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            return Err(Error::parse(path, format!("line {}", line_no + 1), "unexpected end of file in header"));
        }
        offset += n;
        line_no += 1;
        let loc = format!("line {line_no}");
        let t: Vec<&str> = line.split_whitespace().collect();
        if line_no == 1 {
            if t != ["ply"] {
                return Err(Error::parse(path, loc, "missing 'ply' magic"));
            }
            continue;
        }
        match t.first().copied() {
            None | Some("comment") | Some("obj_info") => {}
            Some("format") => {
                format = Some(match t.get(1).copied() {
                    Some("ascii") => PlyFormat::Ascii,
                    Some("binary_little_endian") => PlyFormat::BinaryLittleEndian,
                    other => return Err(Error::parse(path, loc, format!("unsupported format {other:?}"))),
                })
            }
            Some("element") => {
                let (Some(name), Some(count)) = (t.get(1), t.get(2).and_then(|c| c.parse().ok())) else {
                    return Err(Error::parse(path, loc, "malformed element line"));
                };
                elements.push(Element { name: name.to_string(), count, props: Vec::new() });
            }
            Some("property") => {
                let el = elements.last_mut().ok_or_else(|| Error::parse(path, loc.clone(), "property before any element"))?;
                let prop = if t.get(1) == Some(&"list") {
                    match (t.get(2).and_then(|s| Scalar::parse(s)), t.get(3).and_then(|s| Scalar::parse(s)), t.get(4)) {
                        (Some(c), Some(i), Some(name)) => Property::List(name.to_string(), c, i),
                        _ => return Err(Error::parse(path, loc, "malformed list property")),
                    }
                } else {
                    match (t.get(1).and_then(|s| Scalar::parse(s)), t.get(2)) {
                        (Some(ty), Some(name)) => Property::Scalar(name.to_string(), ty),
                        _ => return Err(Error::parse(path, loc, "malformed property")),
                    }
                };
                el.props.push(prop);
            }
            Some("end_header") => break,
            Some(other) => return Err(Error::parse(path, loc, format!("unknown header keyword '{other}'"))),
        }
    }
    let format = format.ok_or_else(|| Error::parse(path, format!("line {line_no}"), "missing format line"))?;
    Ok((Header { format, elements }, line_no, offset))
}

pub fn read_ply(path: &Path) -> Result<PlyData> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_ply(&path.display().to_string(), &bytes)
}

/// Parses a complete PLY document held in memory.
pub fn parse_ply(path: &str, bytes: &[u8]) -> Result<PlyData> {
    let mut cursor = std::io::Cursor::new(bytes);
    let (header, mut line_no, offset) = parse_header(path, &mut cursor)?;
    let body = &bytes[offset..];
    let mut data = PlyData::default();
    for el in &header.elements {
        data.counts.insert(el.name.clone(), el.count);
        for p in &el.props {
            match p {
                Property::Scalar(n, _) => {
                    data.scalars.insert((el.name.clone(), n.clone()), Vec::with_capacity(el.count));
                }
                Property::List(n, ..) => {
                    data.lists.insert((el.name.clone(), n.clone()), Vec::with_capacity(el.count));
                }
            }
        }
    }
    match header.format {
        PlyFormat::Ascii => {
            let text = std::str::from_utf8(body)
                .map_err(|e| Error::parse(path, format!("byte offset {}", offset + e.valid_up_to()), "invalid UTF-8"))?;
            let mut lines = text.lines();
            for el in &header.elements {
                for _ in 0..el.count {
                    line_no += 1;
                    let loc = || format!("line {line_no}");
                    let line = lines
                        .next()
                        .ok_or_else(|| Error::parse(path, loc(), format!("unexpected end of file in element '{}'", el.name)))?;
                    let mut tok = line.split_whitespace();
                    let mut next = || -> Result<f64> {
                        tok.next()
                            .ok_or_else(|| Error::parse(path, loc(), "too few values"))?
                            .parse::<f64>()
                            .map_err(|e| Error::parse(path, loc(), e.to_string()))
                    };
                    for p in &el.props {
                        match p {
                            Property::Scalar(n, _) => {
                                let v = next()?;
                                data.scalars.get_mut(&(el.name.clone(), n.clone())).unwrap().push(v);
                            }
                            Property::List(n, ..) => {
                                let len = next()?;
                                if len < 0.0 || len.fract() != 0.0 {
                                    return Err(Error::parse(path, loc(), "invalid list length"));
                                }
                                let items = (0..len as usize).map(|_| next()).collect::<Result<Vec<_>>>()?;
                                data.lists.get_mut(&(el.name.clone(), n.clone())).unwrap().push(items);
                            }
                        }
                    }
                }
            }
        }
        PlyFormat::BinaryLittleEndian => {
            let mut pos = 0usize;
            let mut take = |n: usize, what: &str| -> Result<&[u8]> {
                if pos + n > body.len() {
                    return Err(Error::parse(path, format!("byte offset {}", offset + pos), format!("truncated data reading {what}")));
                }
                let s = &body[pos..pos + n];
                pos += n;
                Ok(s)
            };
            for el in &header.elements {
                for _ in 0..el.count {
                    for p in &el.props {
                        match p {
                            Property::Scalar(n, ty) => {
                                let v = ty.decode(take(ty.size(), &el.name)?);
                                data.scalars.get_mut(&(el.name.clone(), n.clone())).unwrap().push(v);
                            }
                            Property::List(n, cty, ity) => {
                                let len = cty.decode(take(cty.size(), &el.name)?);
                                if len < 0.0 {
                                    return Err(Error::parse(path, format!("element '{}'", el.name), "negative list length"));
                                }
                                let mut items = Vec::with_capacity(len as usize);
                                for _ in 0..len as usize {
                                    items.push(ity.decode(take(ity.size(), &el.name)?));
                                }
                                data.lists.get_mut(&(el.name.clone(), n.clone())).unwrap().push(items);
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(data)
}

fn faces_from(path: &str, data: &PlyData, num_vertices: usize) -> Result<Vec<[usize; 3]>> {
    let lists = data.list("face", "vertex_indices").or_else(|| data.list("face", "vertex_index")).unwrap_or(&[]);
    let mut faces = Vec::with_capacity(lists.len());
    for (f, l) in lists.iter().enumerate() {
        if l.len() < 3 {
            return Err(Error::parse(path, format!("face {f}"), "face with fewer than 3 vertices"));
        }
        let idx: Vec<usize> = l.iter().map(|&v| v as usize).collect();
        if let Some(bad) = l.iter().find(|&&v| v < 0.0 || v as usize >= num_vertices) {
            return Err(Error::parse(path, format!("face {f}"), format!("vertex index {bad} out of range")));
        }
        for k in 1..idx.len() - 1 {
            faces.push([idx[0], idx[k], idx[k + 1]]);
        }
    }
    Ok(faces)
}

pub fn read_mesh_ply(path: &Path) -> Result<TriMesh> {
    let p = path.display().to_string();
    let data = read_ply(path)?;
    let vertices = data.vec3("vertex", ["x", "y", "z"]).ok_or_else(|| Error::parse(&p, "header", "vertex element lacks x/y/z"))?;
    let faces = faces_from(&p, &data, vertices.len())?;
    TriMesh::new(vertices, faces)
}

pub fn read_cloud_ply(path: &Path) -> Result<PointCloud> {
    let p = path.display().to_string();
    let data = read_ply(path)?;
    let points = data.vec3("vertex", ["x", "y", "z"]).ok_or_else(|| Error::parse(&p, "header", "vertex element lacks x/y/z"))?;
    let normals = data.vec3("vertex", ["nx", "ny", "nz"]);
    let colors = match (data.scalar("vertex", "red"), data.scalar("vertex", "green"), data.scalar("vertex", "blue")) {
        (Some(r), Some(g), Some(b)) => Some((0..r.len()).map(|i| [r[i] as u8, g[i] as u8, b[i] as u8]).collect()),
        _ => None,
    };
    let support = data.scalar("vertex", "support").map(|s| s.iter().map(|&v| v as u32).collect());
    let cloud = PointCloud { points, normals, colors, support };
    cloud.validate()?;
    Ok(cloud)
}

#[derive(Clone, Copy)]
enum Field<'a> {
    F64(&'a [Vector3<f64>]),
    Rgb(&'a [[u8; 3]]),
    U32(&'a [u32]),
}

fn write_vertex_element(w: &mut impl Write, format: PlyFormat, n: usize, fields: &[Field]) -> std::io::Result<()> {
    match format {
        PlyFormat::Ascii => {
            for i in 0..n {
                let mut parts: Vec<String> = Vec::new();
                for f in fields {
                    match f {
                        Field::F64(v) => parts.extend(v[i].iter().map(|c| format!("{c:?}"))),
                        Field::Rgb(c) => parts.extend(c[i].iter().map(|c| c.to_string())),
                        Field::U32(s) => parts.push(s[i].to_string()),
                    }
                }
                writeln!(w, "{}", parts.join(" "))?;
            }
        }
        PlyFormat::BinaryLittleEndian => {
            for i in 0..n {
                for f in fields {
                    match f {
                        Field::F64(v) => {
                            for c in v[i].iter() {
                                w.write_all(&c.to_le_bytes())?;
                            }
                        }
                        Field::Rgb(c) => w.write_all(&c[i])?,
                        Field::U32(s) => w.write_all(&s[i].to_le_bytes())?,
                    }
                }
            }
        }
    }
    Ok(())
}

fn header(w: &mut impl Write, format: PlyFormat) -> std::io::Result<()> {
    let f = match format {
        PlyFormat::Ascii => "ascii",
        PlyFormat::BinaryLittleEndian => "binary_little_endian",
    };
    writeln!(w, "ply\nformat {f} 1.0")
}

/// Serializes a mesh (optionally with per-vertex colors).
pub fn mesh_ply_bytes(mesh: &TriMesh, colors: Option<&[[u8; 3]]>, format: PlyFormat) -> Result<Vec<u8>> {
    if let Some(c) = colors {
        if c.len() != mesh.num_vertices() {
            return Err(Error::DimensionMismatch(format!("{} colors for {} vertices", c.len(), mesh.num_vertices())));
        }
    }
    let mut w = Vec::new();
    let io = |e| Error::io("<memory>", e);
    header(&mut w, format).map_err(io)?;
    writeln!(w, "element vertex {}", mesh.num_vertices()).map_err(io)?;
    writeln!(w, "property double x\nproperty double y\nproperty double z").map_err(io)?;
    let mut fields = vec![Field::F64(&mesh.vertices)];
    if let Some(c) = colors {
        writeln!(w, "property uchar red\nproperty uchar green\nproperty uchar blue").map_err(io)?;
        fields.push(Field::Rgb(c));
    }
    writeln!(w, "element face {}\nproperty list uchar int vertex_indices\nend_header", mesh.faces.len()).map_err(io)?;
    write_vertex_element(&mut w, format, mesh.num_vertices(), &fields).map_err(io)?;
    for f in &mesh.faces {
        match format {
            PlyFormat::Ascii => writeln!(w, "3 {} {} {}", f[0], f[1], f[2]).map_err(io)?,
            PlyFormat::BinaryLittleEndian => {
                w.push(3);
                for &v in f {
                    w.extend_from_slice(&(v as i32).to_le_bytes());
                }
            }
        }
    }
    Ok(w)
}

pub fn cloud_ply_bytes(cloud: &PointCloud, format: PlyFormat) -> Result<Vec<u8>> {
    cloud.validate()?;
    let mut w = Vec::new();
    let io = |e| Error::io("<memory>", e);
    header(&mut w, format).map_err(io)?;
    writeln!(w, "element vertex {}", cloud.len()).map_err(io)?;
    writeln!(w, "property double x\nproperty double y\nproperty double z").map_err(io)?;
    let mut fields = vec![Field::F64(&cloud.points)];
    if let Some(n) = &cloud.normals {
        writeln!(w, "property double nx\nproperty double ny\nproperty double nz").map_err(io)?;
        fields.push(Field::F64(n));
    }
    if let Some(c) = &cloud.colors {
        writeln!(w, "property uchar red\nproperty uchar green\nproperty uchar blue").map_err(io)?;
        fields.push(Field::Rgb(c));
    }
    if let Some(s) = &cloud.support {
        writeln!(w, "property uint support").map_err(io)?;
        fields.push(Field::U32(s));
    }
    writeln!(w, "end_header").map_err(io)?;
    write_vertex_element(&mut w, format, cloud.len(), &fields).map_err(io)?;
    Ok(w)
}

pub fn write_mesh_ply(path: &Path, mesh: &TriMesh, colors: Option<&[[u8; 3]]>, format: PlyFormat) -> Result<()> {
    write_atomic(path, &mesh_ply_bytes(mesh, colors, format)?)
}

pub fn write_cloud_ply(path: &Path, cloud: &PointCloud, format: PlyFormat) -> Result<()> {
    write_atomic(path, &cloud_ply_bytes(cloud, format)?)
}
