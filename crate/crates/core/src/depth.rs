//! Per-pixel depth maps with validity masks.

use nalgebra::Vector3;

use crate::error::{Error, Result};

/// Depth (camera z), optional unit normal (camera frame) and matching cost
/// per pixel. Invalid pixels are tracked by `valid`; their stored values are
/// meaningless.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub width: usize,
    pub height: usize,
    pub depth: Vec<f32>,
    pub valid: Vec<bool>,
    pub normal: Option<Vec<[f32; 3]>>,
    pub cost: Option<Vec<f32>>,
}

impl DepthMap {
    pub fn invalid(width: usize, height: usize) -> Self {
        DepthMap { width, height, depth: vec![f32::INFINITY; width * height], valid: vec![false; width * height], normal: None, cost: None }
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Option<f64> {
        let i = self.index(x, y);
        self.valid[i].then(|| self.depth[i] as f64)
    }

    #[inline]
    pub fn get_index(&self, i: usize) -> Option<f64> {
        self.valid[i].then(|| self.depth[i] as f64)
    }

    pub fn set(&mut self, x: usize, y: usize, depth: f64) {
        let i = self.index(x, y);
        self.depth[i] = depth as f32;
        self.valid[i] = true;
    }

    pub fn invalidate(&mut self, i: usize) {
        self.valid[i] = false;
        self.depth[i] = f32::INFINITY;
    }

    pub fn normal_at(&self, i: usize) -> Option<Vector3<f64>> {
        self.normal.as_ref().map(|n| Vector3::new(n[i][0] as f64, n[i][1] as f64, n[i][2] as f64))
    }

    pub fn num_valid(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    pub fn is_all_invalid(&self) -> bool {
        !self.valid.iter().any(|&v| v)
    }

    /// Range of valid depths.
    pub fn depth_range(&self) -> Option<(f64, f64)> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (d, _) in self.depth.iter().zip(&self.valid).filter(|(_, &v)| v) {
            lo = lo.min(*d as f64);
            hi = hi.max(*d as f64);
        }
        (lo <= hi).then_some((lo, hi))
    }

    pub fn check_same_size(&self, other: &DepthMap) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::DimensionMismatch(format!(
                "depth maps are {}x{} and {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }

    /// Checks stored invariants: valid depths positive and finite, normals
    /// unit length.
    pub fn validate(&self) -> Result<()> {
        let n = self.width * self.height;
        if self.depth.len() != n || self.valid.len() != n {
            return Err(Error::DimensionMismatch("depth buffer size".into()));
        }
        for i in 0..n {
            if !self.valid[i] {
                continue;
            }
            let d = self.depth[i];
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::InvalidInput(format!("pixel {i}: invalid depth {d}")));
            }
            if let Some(nrm) = self.normal_at(i) {
                if (nrm.norm() - 1.0).abs() > 1e-6 {
                    return Err(Error::InvalidInput(format!("pixel {i}: normal not unit length")));
                }
            }
        }
        Ok(())
    }
}
