//! Minimal float rasters. Intensities are in `[0, 1]`.

use serde::{Deserialize, Serialize};

/// Row-major raster with 1 (gray) or 3 (RGB) interleaved channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        assert!(channels == 1 || channels == 3, "images have 1 or 3 channels");
        Image { width, height, channels, data: vec![0.0; width * height * channels] }
    }

    pub fn from_gray(gray: &GrayImage) -> Self {
        Image { width: gray.width, height: gray.height, channels: 1, data: gray.data.clone() }
    }

    /// Rec. 601 luma for RGB, identity for gray.
    pub fn luma(&self) -> GrayImage {
        let data = match self.channels {
            1 => self.data.clone(),
            _ => self.data.chunks_exact(3).map(|c| 0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2]).collect(),
        };
        GrayImage { width: self.width, height: self.height, data }
    }

    pub fn rgb(&self, x: usize, y: usize) -> [f32; 3] {
        let i = (y * self.width + x) * self.channels;
        match self.channels {
            1 => [self.data[i]; 3],
            _ => [self.data[i], self.data[i + 1], self.data[i + 2]],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize) -> Self {
        GrayImage { width, height, data: vec![0.0; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        GrayImage { width, height, data }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        self.data[y * self.width + x] = v;
    }

    /// Bilinear sample at a continuous pixel position; `None` outside the
    /// area spanned by pixel centers.
    #[inline]
    pub fn bilinear(&self, u: f64, v: f64) -> Option<f32> {
        let (w, h) = (self.width, self.height);
        if !(u >= 0.0 && v >= 0.0 && u <= (w - 1) as f64 && v <= (h - 1) as f64) || w < 2 || h < 2 {
            return None;
        }
        let x0 = (u as usize).min(w - 2);
        let y0 = (v as usize).min(h - 2);
        let a = (u - x0 as f64) as f32;
        let b = (v - y0 as f64) as f32;
        let i = y0 * w + x0;
        let p00 = self.data[i];
        let p10 = self.data[i + 1];
        let p01 = self.data[i + w];
        let p11 = self.data[i + w + 1];
        let top = p00 + (p10 - p00) * a;
        let bot = p01 + (p11 - p01) * a;
        Some(top + (bot - top) * b)
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.data.iter().fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bilinear_interpolates_and_rejects_outside() {
        let img = GrayImage::from_fn(3, 2, |x, y| (x + 10 * y) as f32);
        assert_eq!(img.bilinear(0.5, 0.5), Some(5.5));
        assert_eq!(img.bilinear(2.0, 1.0), Some(12.0));
        assert_eq!(img.bilinear(2.0, 0.5), Some(7.0));
        assert_eq!(img.bilinear(1.5, 1.0), Some(11.5));
        assert_eq!(img.bilinear(-0.1, 0.0), None);
        assert_eq!(img.bilinear(2.1, 0.0), None);
        assert_eq!(img.bilinear(0.0, 1.1), None);
    }

    #[test]
    fn luma_of_gray_is_identity() {
        let mut img = Image::new(2, 2, 3);
        img.data.iter_mut().for_each(|v| *v = 0.5);
        let g = img.luma();
        assert!(g.data.iter().all(|&v| (v - 0.5).abs() < 1e-6));
    }
}
