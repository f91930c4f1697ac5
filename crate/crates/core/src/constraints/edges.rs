use std::collections::VecDeque;

use nalgebra::Vector2;

use crate::error::{Error, Result};
use crate::image::GrayImage;

/// Marker in [`EdgeMap::nearest`] when the mask has no edge pixel.
pub const NO_FEATURE: u32 = u32::MAX;

/// Edge strength, binary edge mask, and the Euclidean distance transform of
/// the mask with the index of the nearest edge pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeMap {
    pub width: usize,
    pub height: usize,
    pub strength: Vec<f32>,
    pub mask: Vec<bool>,
    /// Distance to the nearest edge pixel center; `+inf` without edges.
    pub distance: Vec<f32>,
    pub nearest: Vec<u32>,
}

impl EdgeMap {
    pub fn from_mask(width: usize, height: usize, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != width * height {
            return Err(Error::DimensionMismatch(format!("edge mask has {} entries for {width}x{height}", mask.len())));
        }
        let strength = mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
        let (distance, nearest) = distance_transform(width, height, &mask);
        Ok(EdgeMap { width, height, strength, mask, distance, nearest })
    }

    pub fn num_edges(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Nearest edge pixel to the pixel containing `p`.
    pub fn nearest_edge(&self, p: Vector2<f64>) -> Option<(usize, usize)> {
        let x = (p.x + 0.5).floor();
        let y = (p.y + 0.5).floor();
        if x < 0.0 || y < 0.0 || x >= self.width as f64 || y >= self.height as f64 {
            return None;
        }
        let n = self.nearest[y as usize * self.width + x as usize];
        (n != NO_FEATURE).then(|| (n as usize % self.width, n as usize / self.width))
    }
}

/// Exact Euclidean distance transform (separable lower-envelope algorithm)
/// returning distances and the flat index of the nearest feature pixel.
pub fn distance_transform(width: usize, height: usize, mask: &[bool]) -> (Vec<f32>, Vec<u32>) {
    let n = width * height;
    // Column pass: nearest feature row in the same column.
    let mut col_row = vec![u32::MAX; n];
    for x in 0..width {
        let mut last: Option<usize> = None;
        for y in 0..height {
            if mask[y * width + x] {
                last = Some(y);
            }
            if let Some(l) = last {
                col_row[y * width + x] = l as u32;
            }
        }
        let mut next: Option<usize> = None;
        for y in (0..height).rev() {
            if mask[y * width + x] {
                next = Some(y);
            }
            if let Some(nx) = next {
                let i = y * width + x;
                let cur = col_row[i];
                if cur == u32::MAX || (nx - y) < y - cur as usize {
                    col_row[i] = nx as u32;
                }
            }
        }
    }
    // Row pass: lower envelope of parabolas (x - q)^2 + g(q).
    let mut dist = vec![f32::INFINITY; n];
    let mut nearest = vec![NO_FEATURE; n];
    let mut v = vec![0usize; width];
    let mut z = vec![0f64; width + 1];
    for y in 0..height {
        let g = |q: usize| -> f64 {
            let r = col_row[y * width + q];
            if r == u32::MAX {
                f64::INFINITY
            } else {
                let d = r as f64 - y as f64;
                d * d
            }
        };
        let mut k: isize = -1;
        for q in 0..width {
            let gq = g(q);
            if !gq.is_finite() {
                continue;
            }
            loop {
                if k < 0 {
                    k = 0;
                    v[0] = q;
                    z[0] = f64::NEG_INFINITY;
                    z[1] = f64::INFINITY;
                    break;
                }
                let p = v[k as usize];
                let s = ((gq + (q * q) as f64) - (g(p) + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
                if s <= z[k as usize] {
                    k -= 1;
                    continue;
                }
                k += 1;
                v[k as usize] = q;
                z[k as usize] = s;
                z[k as usize + 1] = f64::INFINITY;
                break;
            }
        }
        if k < 0 {
            continue;
        }
        let mut j = 0usize;
        for x in 0..width {
            while z[j + 1] < x as f64 {
                j += 1;
            }
            let q = v[j];
            let dx = x as f64 - q as f64;
            let d2 = dx * dx + g(q);
            let i = y * width + x;
            dist[i] = d2.sqrt() as f32;
            nearest[i] = col_row[y * width + q] * width as u32 + q as u32;
        }
    }
    (dist, nearest)
}

/// Sobel gradient edges with non-maximum suppression and hysteresis.
/// Thresholds are fractions of the maximum gradient magnitude.
pub fn detect_edges(image: &GrayImage, low: f64, high: f64) -> EdgeMap {
    let (w, h) = (image.width, image.height);
    let px = |x: isize, y: isize| image.get(x.clamp(0, w as isize - 1) as usize, y.clamp(0, h as isize - 1) as usize);
    let mut gx = vec![0f32; w * h];
    let mut gy = vec![0f32; w * h];
    let mut mag = vec![0f32; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let dx =
                (px(x + 1, y - 1) + 2.0 * px(x + 1, y) + px(x + 1, y + 1)) - (px(x - 1, y - 1) + 2.0 * px(x - 1, y) + px(x - 1, y + 1));
            let dy =
                (px(x - 1, y + 1) + 2.0 * px(x, y + 1) + px(x + 1, y + 1)) - (px(x - 1, y - 1) + 2.0 * px(x, y - 1) + px(x + 1, y - 1));
            let i = y as usize * w + x as usize;
            gx[i] = dx;
            gy[i] = dy;
            mag[i] = (dx * dx + dy * dy).sqrt();
        }
    }
    let max = mag.iter().cloned().fold(0.0f32, f32::max);
    let strength: Vec<f32> = if max > 0.0 { mag.iter().map(|m| m / max).collect() } else { vec![0.0; w * h] };
    let mut mask = vec![false; w * h];
    if max > 1e-6 {
        let at = |x: isize, y: isize| {
            if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
                0.0
            } else {
                mag[y as usize * w + x as usize]
            }
        };
        // Thin to local maxima across the gradient direction. Ties keep the
        // pixel on the positive side so a symmetric ramp yields one line.
        let mut thin = vec![0f32; w * h];
        for y in 0..h as isize {
            for x in 0..w as isize {
                let i = y as usize * w + x as usize;
                let m = mag[i];
                if m == 0.0 {
                    continue;
                }
                let angle = gy[i].atan2(gx[i]).to_degrees();
                let a = if angle < 0.0 { angle + 180.0 } else { angle };
                let (ox, oy) = if !(22.5..157.5).contains(&a) {
                    (1, 0)
                } else if a < 67.5 {
                    (1, 1)
                } else if a < 112.5 {
                    (0, 1)
                } else {
                    (-1, 1)
                };
                if m >= at(x - ox, y - oy) && m > at(x + ox, y + oy) {
                    thin[i] = m;
                }
            }
        }
        let (lo, hi) = (low as f32 * max, high as f32 * max);
        let mut queue = VecDeque::new();
        for i in 0..w * h {
            if thin[i] >= hi && thin[i] > 0.0 {
                mask[i] = true;
                queue.push_back(i);
            }
        }
        while let Some(i) = queue.pop_front() {
            let (x, y) = ((i % w) as isize, (i / w) as isize);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if !mask[j] && thin[j] >= lo && thin[j] > 0.0 {
                        mask[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
    }
    let (distance, nearest) = distance_transform(w, h, &mask);
    EdgeMap { width: w, height: h, strength, mask, distance, nearest }
}
