//! Pinhole camera model and posed keyframes.
//!
//! Poses map world points into the camera frame as `x_cam = R * x_world + t`.
//! The camera looks along +z, so a point is in front of the camera iff
//! `z_cam > 0`. Pixel coordinates put the center of pixel `(i, j)` at
//! `(i, j)`.

use nalgebra::{Matrix3, Point3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{GrayImage, Image};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    /// Radial distortion is carried for completeness; images are assumed
    /// to be undistorted already.
    #[serde(default)]
    pub k1: f64,
    #[serde(default)]
    pub k2: f64,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let intr = Intrinsics { fx, fy, cx, cy, width, height, k1: 0.0, k2: 0.0 };
        intr.validate()?;
        Ok(intr)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::InvalidInput(format!("focal lengths must be positive (fx={}, fy={})", self.fx, self.fy)));
        }
        if !(self.cx > 0.0 && self.cx < self.width as f64 && self.cy > 0.0 && self.cy < self.height as f64) {
            return Err(Error::InvalidInput(format!(
                "principal point ({}, {}) outside image {}x{}",
                self.cx, self.cy, self.width, self.height
            )));
        }
        if self.k1 != 0.0 || self.k2 != 0.0 {
            log::warn!("radial distortion (k1={}, k2={}) is ignored; images must be pre-undistorted", self.k1, self.k2);
        }
        Ok(())
    }

    /// Same camera at a different resolution (principal point and focal
    /// lengths scaled).
    pub fn scaled(&self, factor: f64) -> Intrinsics {
        Intrinsics {
            fx: self.fx * factor,
            fy: self.fy * factor,
            cx: self.cx * factor,
            cy: self.cy * factor,
            width: ((self.width as f64) * factor).round() as usize,
            height: ((self.height as f64) * factor).round() as usize,
            k1: self.k1,
            k2: self.k2,
        }
    }

    /// Ray through `pixel` in the camera frame, normalized to `z = 1`.
    #[inline]
    pub fn ray(&self, pixel: Vector2<f64>) -> Vector3<f64> {
        Vector3::new((pixel.x - self.cx) / self.fx, (pixel.y - self.cy) / self.fy, 1.0)
    }

    #[inline]
    pub fn contains(&self, pixel: Vector2<f64>) -> bool {
        pixel.x >= -0.5 && pixel.y >= -0.5 && pixel.x < self.width as f64 - 0.5 && pixel.y < self.height as f64 - 0.5
    }

    /// Integer pixel whose square contains `pixel`, if inside the image.
    #[inline]
    pub fn pixel_index(&self, pixel: Vector2<f64>) -> Option<(usize, usize)> {
        let x = (pixel.x + 0.5).floor();
        let y = (pixel.y + 0.5).floor();
        if x < 0.0 || y < 0.0 || x >= self.width as f64 || y >= self.height as f64 {
            return None;
        }
        Some((x as usize, y as usize))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraPose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl CameraPose {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let pose = CameraPose { rotation, translation };
        pose.validate()?;
        Ok(pose)
    }

    pub fn identity() -> Self {
        CameraPose { rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.rotation;
        let ortho = (r.transpose() * r - Matrix3::identity()).amax();
        if ortho > 1e-9 || (r.determinant() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "rotation is not a proper orthonormal matrix (|RᵀR − I| = {ortho:.2e}, det = {})",
                r.determinant()
            )));
        }
        if !self.translation.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("non-finite translation".into()));
        }
        Ok(())
    }

    /// Camera looking from `eye` at `target`, with image y pointing along `-up`.
    pub fn look_at(eye: Point3<f64>, target: Point3<f64>, up: Vector3<f64>) -> Result<Self> {
        let z = (target - eye).normalize();
        let x = up.cross(&z);
        if x.norm() < 1e-12 {
            return Err(Error::Degenerate("look_at: up vector parallel to view direction".into()));
        }
        let x = -x.normalize();
        let y = z.cross(&x);
        let rotation = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
        let translation = -(rotation * eye.coords);
        CameraPose::new(rotation, translation)
    }

    #[inline]
    pub fn to_camera(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * x + self.translation
    }

    #[inline]
    pub fn to_world(&self, x_cam: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * (x_cam - self.translation)
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }
}

/// Projects a world point. The pixel may fall outside the image.
pub fn project(pose: &CameraPose, intr: &Intrinsics, x: &Vector3<f64>) -> Result<(Vector2<f64>, f64)> {
    let xc = pose.to_camera(x);
    if !(xc.z > 0.0) {
        return Err(Error::BehindCamera { z: xc.z });
    }
    let pixel = Vector2::new(intr.fx * xc.x / xc.z + intr.cx, intr.fy * xc.y / xc.z + intr.cy);
    Ok((pixel, xc.z))
}

/// Inverse of [`project`] for a known camera depth.
pub fn backproject(pose: &CameraPose, intr: &Intrinsics, pixel: Vector2<f64>, depth: f64) -> Result<Vector3<f64>> {
    if !(depth > 0.0) {
        return Err(Error::NonPositiveDepth(depth));
    }
    Ok(pose.to_world(&(intr.ray(pixel) * depth)))
}

#[derive(Debug, Clone)]
pub struct Keyframe {
    pub id: u32,
    pub image: Image,
    /// Luma of `image`, used for photometric matching.
    pub gray: GrayImage,
    pub pose: CameraPose,
    pub intrinsics: Intrinsics,
}

impl Keyframe {
    pub fn new(id: u32, image: Image, pose: CameraPose, intrinsics: Intrinsics) -> Result<Self> {
        if image.width != intrinsics.width || image.height != intrinsics.height {
            return Err(Error::DimensionMismatch(format!(
                "keyframe {id}: image is {}x{} but intrinsics say {}x{}",
                image.width, image.height, intrinsics.width, intrinsics.height
            )));
        }
        let gray = image.luma();
        Ok(Keyframe { id, image, gray, pose, intrinsics })
    }

    /// Keyframe without pixel content, for purely geometric stages.
    pub fn blank(id: u32, pose: CameraPose, intrinsics: Intrinsics) -> Self {
        let image = Image::new(intrinsics.width, intrinsics.height, 1);
        let gray = image.luma();
        Keyframe { id, image, gray, pose, intrinsics }
    }

    pub fn center(&self) -> Vector3<f64> {
        self.pose.center()
    }

    pub fn project(&self, x: &Vector3<f64>) -> Result<(Vector2<f64>, f64)> {
        project(&self.pose, &self.intrinsics, x)
    }

    pub fn backproject(&self, pixel: Vector2<f64>, depth: f64) -> Result<Vector3<f64>> {
        backproject(&self.pose, &self.intrinsics, pixel, depth)
    }
}
