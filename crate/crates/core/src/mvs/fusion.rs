use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::patchmatch::pixel_center;
use crate::camera::Keyframe;
use crate::cloud::PointCloud;
use crate::depth::DepthMap;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionConfig {
    /// Views (including the reference) that must agree on a point.
    pub min_consistent_views: usize,
    pub rel_depth_eps: f64,
    pub normal_agreement_deg: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig { min_consistent_views: 3, rel_depth_eps: 0.01, normal_agreement_deg: 30.0 }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_consistent_views < 1 || !(self.rel_depth_eps > 0.0) {
            return Err(Error::Config(format!("invalid fusion config {self:?}")));
        }
        Ok(())
    }
}

/// Provenance of one fused point: the reference pixel and the pixels of
/// other views that agreed with it (indices into the input slices).
#[derive(Debug, Clone, PartialEq)]
pub struct FusedPoint {
    pub reference: usize,
    pub pixel: usize,
    pub supporters: Vec<(usize, usize)>,
}

fn world_normal(kf: &Keyframe, map: &DepthMap, i: usize) -> Option<Vector3<f64>> {
    map.normal_at(i).map(|n| kf.pose.rotation.transpose() * n)
}

/// Pixels of other views that agree with pixel `pixel` of view `reference`.
/// `order` fixes the order views are visited in; pixels flagged in
/// `consumed` are skipped.
pub fn fusion_support(
    keyframes: &[Keyframe],
    depths: &[DepthMap],
    reference: usize,
    pixel: usize,
    cfg: &FusionConfig,
    consumed: Option<&[Vec<bool>]>,
) -> Vec<(usize, usize)> {
    let order: Vec<usize> = canonical_order(keyframes);
    support_in_order(keyframes, depths, &order, reference, pixel, cfg, consumed)
}

fn canonical_order(keyframes: &[Keyframe]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..keyframes.len()).collect();
    order.sort_by_key(|&i| keyframes[i].id);
    order
}

fn support_in_order(
    keyframes: &[Keyframe],
    depths: &[DepthMap],
    order: &[usize],
    reference: usize,
    pixel: usize,
    cfg: &FusionConfig,
    consumed: Option<&[Vec<bool>]>,
) -> Vec<(usize, usize)> {
    let kf = &keyframes[reference];
    let map = &depths[reference];
    let Some(d) = map.get_index(pixel) else { return Vec::new() };
    let Ok(x) = kf.backproject(pixel_center(pixel, map.width), d) else { return Vec::new() };
    let n_ref = world_normal(kf, map, pixel);
    let cos_max = cfg.normal_agreement_deg.to_radians().cos();
    let mut out = Vec::new();
    for &j in order {
        if j == reference {
            continue;
        }
        let (kj, mj) = (&keyframes[j], &depths[j]);
        let Ok((px, z)) = kj.project(&x) else { continue };
        let Some((u, v)) = kj.intrinsics.pixel_index(px) else { continue };
        let pj = v * mj.width + u;
        if consumed.is_some_and(|c| c[j][pj]) {
            continue;
        }
        let Some(dj) = mj.get_index(pj) else { continue };
        if (z - dj).abs() > cfg.rel_depth_eps * dj {
            continue;
        }
        if let (Some(a), Some(b)) = (n_ref, world_normal(kj, mj, pj)) {
            if a.dot(&b) < cos_max {
                continue;
            }
        }
        out.push((j, pj));
    }
    out
}

pub fn fuse_depth_maps(keyframes: &[Keyframe], depths: &[DepthMap], cfg: &FusionConfig) -> Result<PointCloud> {
    Ok(fuse_with_provenance(keyframes, depths, cfg)?.0)
}

/// Fuses depth maps into one cloud. Views are visited in ascending keyframe
/// id, so the result does not depend on input order. A kept point sits at the
/// backprojection of its reference pixel; supporters vote and contribute to
/// the averaged normal. Every pixel that
/// contributes to a kept point is consumed and cannot seed or support
/// another point.
pub fn fuse_with_provenance(keyframes: &[Keyframe], depths: &[DepthMap], cfg: &FusionConfig) -> Result<(PointCloud, Vec<FusedPoint>)> {
    cfg.validate()?;
    if keyframes.len() != depths.len() {
        return Err(Error::DimensionMismatch(format!("{} keyframes but {} depth maps", keyframes.len(), depths.len())));
    }
    for (k, m) in keyframes.iter().zip(depths) {
        if m.width != k.intrinsics.width || m.height != k.intrinsics.height {
            return Err(Error::DimensionMismatch(format!("depth map of keyframe {} has the wrong size", k.id)));
        }
    }
    let order = canonical_order(keyframes);
    if order.windows(2).any(|w| keyframes[w[0]].id == keyframes[w[1]].id) {
        return Err(Error::InvalidInput("duplicate keyframe ids".into()));
    }
    let has_normals = depths.iter().all(|m| m.normal.is_some());
    let mut consumed: Vec<Vec<bool>> = depths.iter().map(|m| vec![false; m.valid.len()]).collect();
    let mut cloud = PointCloud::default();
    let mut normals = Vec::new();
    let mut colors = Vec::new();
    let mut support = Vec::new();
    let mut provenance = Vec::new();

    for &i in &order {
        let (kf, map) = (&keyframes[i], &depths[i]);
        for p in 0..map.valid.len() {
            if consumed[i][p] {
                continue;
            }
            let Some(d) = map.get_index(p) else { continue };
            let sup = support_in_order(keyframes, depths, &order, i, p, cfg, Some(&consumed));
            if sup.len() + 1 < cfg.min_consistent_views {
                continue;
            }
            let pos = kf.backproject(pixel_center(p, map.width), d)?;
            let mut nsum = world_normal(kf, map, p).unwrap_or_else(Vector3::zeros);
            for &(j, pj) in &sup {
                let mj = &depths[j];
                if let Some(n) = world_normal(&keyframes[j], mj, pj) {
                    nsum += n;
                }
                consumed[j][pj] = true;
            }
            consumed[i][p] = true;
            cloud.points.push(pos);
            if has_normals {
                let len = nsum.norm();
                normals.push(if len > 0.0 { nsum / len } else { Vector3::z() });
            }
            let c = kf.image.rgb(p % map.width, p / map.width);
            colors.push(c.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
            support.push(sup.len() as u32 + 1);
            provenance.push(FusedPoint { reference: i, pixel: p, supporters: sup });
        }
    }
    if has_normals {
        cloud.normals = Some(normals);
    }
    cloud.colors = Some(colors);
    cloud.support = Some(support);
    Ok((cloud, provenance))
}
