//! Portable float maps: `Pf` (one channel) and `PF` (three channels).
//!
//! Files are written little-endian (negative scale), rows bottom to top.
//! Depth maps store invalid pixels as `+∞`.

use std::path::Path;

use super::write_atomic;
use crate::depth::DepthMap;
use crate::error::{Error, Result};

/// A decoded float map in top-to-bottom row order.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatMap {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

pub fn pfm_bytes(map: &FloatMap) -> Vec<u8> {
    let magic = if map.channels == 3 { "PF" } else { "Pf" };
    let mut out = format!("{magic}\n{} {}\n-1.0\n", map.width, map.height).into_bytes();
    let row = map.width * map.channels;
    out.reserve(map.data.len() * 4);
    for y in (0..map.height).rev() {
        for v in &map.data[y * row..(y + 1) * row] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn parse_pfm(path: &str, bytes: &[u8]) -> Result<FloatMap> {
    let mut pos = 0;
    let mut tokens = Vec::new();
    while tokens.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::parse(path, format!("byte offset {pos}"), "truncated header"));
        }
        tokens.push((start, std::str::from_utf8(&bytes[start..pos]).unwrap_or("")));
    }
    // Exactly one whitespace byte separates the header from the data.
    pos += 1;
    let channels = match tokens[0].1 {
        "Pf" => 1,
        "PF" => 3,
        other => return Err(Error::parse(path, "byte offset 0", format!("bad magic '{other}'"))),
    };
    let num = |(off, t): (usize, &str)| -> Result<usize> {
        t.parse().map_err(|_| Error::parse(path, format!("byte offset {off}"), format!("bad size '{t}'")))
    };
    let (width, height) = (num(tokens[1])?, num(tokens[2])?);
    let scale: f64 = tokens[3].1.parse().map_err(|_| Error::parse(path, format!("byte offset {}", tokens[3].0), "bad scale"))?;
    if scale == 0.0 {
        return Err(Error::parse(path, format!("byte offset {}", tokens[3].0), "scale must be non-zero"));
    }
    let little = scale < 0.0;
    let n = width * height * channels;
    let need = pos + 4 * n;
    if bytes.len() < need {
        return Err(Error::parse(
            path,
            format!("byte offset {}", bytes.len()),
            format!("truncated data: expected {} bytes, found {}", need, bytes.len()),
        ));
    }
    let row = width * channels;
    let mut data = vec![0f32; n];
    for (k, chunk) in bytes[pos..need].chunks_exact(4).enumerate() {
        let b: [u8; 4] = chunk.try_into().unwrap();
        let v = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
        let (file_row, col) = (k / row, k % row);
        data[(height - 1 - file_row) * row + col] = v;
    }
    Ok(FloatMap { width, height, channels, data })
}

pub fn read_pfm(path: &Path) -> Result<FloatMap> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_pfm(&path.display().to_string(), &bytes)
}

pub fn depth_to_floatmap(map: &DepthMap) -> FloatMap {
    FloatMap {
        width: map.width,
        height: map.height,
        channels: 1,
        data: map.depth.iter().zip(&map.valid).map(|(&d, &v)| if v { d } else { f32::INFINITY }).collect(),
    }
}

/// Depth map from a one-channel map; non-finite or non-positive pixels are
/// invalid.
pub fn floatmap_to_depth(map: &FloatMap) -> Result<DepthMap> {
    if map.channels != 1 {
        return Err(Error::InvalidInput("depth maps have one channel".into()));
    }
    let mut d = DepthMap::invalid(map.width, map.height);
    for (i, &v) in map.data.iter().enumerate() {
        if v.is_finite() && v > 0.0 {
            d.depth[i] = v;
            d.valid[i] = true;
        }
    }
    Ok(d)
}

pub fn write_depth_pfm(path: &Path, map: &DepthMap) -> Result<()> {
    write_atomic(path, &pfm_bytes(&depth_to_floatmap(map)))
}

pub fn read_depth_pfm(path: &Path) -> Result<DepthMap> {
    floatmap_to_depth(&read_pfm(path)?)
}

/// Normals of a depth map as a three-channel map (zeros where absent).
pub fn write_normal_pfm(path: &Path, map: &DepthMap) -> Result<()> {
    let normals = map.normal.as_ref().ok_or_else(|| Error::InvalidInput("depth map has no normals".into()))?;
    let fm = FloatMap { width: map.width, height: map.height, channels: 3, data: normals.iter().flatten().copied().collect() };
    write_atomic(path, &pfm_bytes(&fm))
}

pub fn read_normal_pfm(path: &Path, into: &mut DepthMap) -> Result<()> {
    let fm = read_pfm(path)?;
    if fm.channels != 3 || fm.width != into.width || fm.height != into.height {
        return Err(Error::DimensionMismatch(format!("{}: normal map does not match depth map", path.display())));
    }
    into.normal = Some(fm.data.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect());
    Ok(())
}
