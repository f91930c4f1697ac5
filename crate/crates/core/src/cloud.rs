use nalgebra::Vector3;

use crate::error::{Error, Result};

/// Fused, optionally oriented and colored point set.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vector3<f64>>,
    pub normals: Option<Vec<Vector3<f64>>>,
    pub colors: Option<Vec<[u8; 3]>>,
    /// Number of depth maps agreeing with each point.
    pub support: Option<Vec<u32>>,
}

impl PointCloud {
    pub fn from_points(points: Vec<Vector3<f64>>) -> Self {
        PointCloud { points, ..Default::default() }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.points.len();
        let check_len = |name: &str, len: usize| {
            if len != n {
                Err(Error::DimensionMismatch(format!("{name}: {len} entries for {n} points")))
            } else {
                Ok(())
            }
        };
        if let Some(normals) = &self.normals {
            check_len("normals", normals.len())?;
            if let Some(i) = normals.iter().position(|v| (v.norm() - 1.0).abs() > 1e-6) {
                return Err(Error::InvalidInput(format!("normal {i} is not unit length")));
            }
        }
        if let Some(c) = &self.colors {
            check_len("colors", c.len())?;
        }
        if let Some(s) = &self.support {
            check_len("support", s.len())?;
            if s.contains(&0) {
                return Err(Error::InvalidInput("support count must be at least 1".into()));
            }
        }
        Ok(())
    }
}
