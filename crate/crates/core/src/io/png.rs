//! 8-bit PNG images and edge masks.

use std::path::Path;

use image::{DynamicImage, GrayImage as Luma8, ImageFormat, RgbImage};

use super::write_atomic;
use crate::constraints::EdgeMap;
use crate::error::{Error, Result};
use crate::image::{GrayImage, Image};

/// Edge mask pixels at or above this value are edges.
pub const EDGE_THRESHOLD: u8 = 128;

fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn encode(path: &Path, img: DynamicImage) -> Result<()> {
    let mut buf = std::io::Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png).map_err(|source| Error::Image { path: path.to_path_buf(), source })?;
    write_atomic(path, buf.get_ref())
}

pub fn write_image_png(path: &Path, img: &Image) -> Result<()> {
    let data: Vec<u8> = img.data.iter().map(|&v| quantize(v)).collect();
    let (w, h) = (img.width as u32, img.height as u32);
    let dynamic = match img.channels {
        1 => DynamicImage::ImageLuma8(Luma8::from_raw(w, h, data).expect("buffer size matches")),
        _ => DynamicImage::ImageRgb8(RgbImage::from_raw(w, h, data).expect("buffer size matches")),
    };
    encode(path, dynamic)
}

pub fn write_gray_png(path: &Path, img: &GrayImage) -> Result<()> {
    write_image_png(path, &Image::from_gray(img))
}

/// Loads an 8-bit image, keeping it gray when it has no color.
pub fn read_image_png(path: &Path) -> Result<Image> {
    let img = image::open(path).map_err(|source| Error::Image { path: path.to_path_buf(), source })?;
    let (width, height) = (img.width() as usize, img.height() as usize);
    let (channels, raw) = if img.color().has_color() { (3, img.into_rgb8().into_raw()) } else { (1, img.into_luma8().into_raw()) };
    Ok(Image { width, height, channels, data: raw.into_iter().map(|v| v as f32 / 255.0).collect() })
}

pub fn write_edge_png(path: &Path, edges: &EdgeMap) -> Result<()> {
    let data = edges.mask.iter().map(|&m| if m { 255 } else { 0 }).collect();
    encode(path, DynamicImage::ImageLuma8(Luma8::from_raw(edges.width as u32, edges.height as u32, data).expect("buffer size matches")))
}

pub fn read_edge_png(path: &Path) -> Result<EdgeMap> {
    let img = image::open(path).map_err(|source| Error::Image { path: path.to_path_buf(), source })?.into_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    EdgeMap::from_mask(w, h, img.into_raw().into_iter().map(|v| v >= EDGE_THRESHOLD).collect())
}
