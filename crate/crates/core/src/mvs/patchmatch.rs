//! Slanted-plane PatchMatch over a reference view and its sources.
//!
//! Each pixel carries a plane hypothesis (depth along its ray plus a unit
//! normal in the reference camera frame). A hypothesis is scored by warping
//! the reference window into every source view through the plane-induced
//! homography and taking `1 - NCC`; the per-pixel cost is the mean of the
//! `cost_top_k` best sources. Hypotheses improve by red/black checkerboard
//! propagation from neighbors and by random perturbation with a shrinking
//! step. Random streams are keyed by pixel, so results do not depend on the
//! number of worker threads.

use nalgebra::{Matrix3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::Keyframe;
use crate::depth::DepthMap;
use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::mesh::{Aabb, TriMesh};
use crate::raster::render_depth;

/// Upper bound on the angle between a hypothesis normal and the direction
/// back to the camera.
const MAX_SLANT_DEG: f64 = 80.0;
/// Cost of a source view the window cannot be evaluated in.
const INVALID_COST: f32 = 2.0;

/// Propagation offsets; all have odd Manhattan length, so they always read
/// pixels of the opposite checkerboard color.
const NEIGHBORS: [(i32, i32); 8] = [(-1, 0), (1, 0), (0, -1), (0, 1), (-5, 0), (5, 0), (0, -5), (0, 5)];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PatchMatchConfig {
    pub iterations: usize,
    /// Odd window side length in pixels.
    pub window: usize,
    /// Sampling stride inside the window.
    pub window_step: usize,
    pub cost_top_k: usize,
    /// Search half-width around the prior depth, as a fraction of the prior
    /// mesh bounding-box diagonal.
    pub depth_range_frac: f64,
    pub cost_threshold: f64,
    pub rng_seed: u64,
}

impl Default for PatchMatchConfig {
    fn default() -> Self {
        PatchMatchConfig {
            iterations: 8,
            window: 11,
            window_step: 2,
            cost_top_k: 4,
            depth_range_frac: 0.05,
            cost_threshold: 0.6,
            rng_seed: 0,
        }
    }
}

impl PatchMatchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window < 3 || self.window.is_multiple_of(2) {
            return Err(Error::Config(format!("window must be odd and >= 3, got {}", self.window)));
        }
        if self.iterations < 1 || self.cost_top_k < 1 || self.window_step < 1 {
            return Err(Error::Config(format!("invalid PatchMatch config {self:?}")));
        }
        if !(self.depth_range_frac >= 0.0) {
            return Err(Error::Config("depth_range_frac must be non-negative".into()));
        }
        Ok(())
    }
}

/// Prior depth rendered from the coarse mesh at the reference viewpoint,
/// plus the mesh extent that scales the search range.
#[derive(Debug, Clone)]
pub struct PriorDepth {
    pub depth: DepthMap,
    pub bbox: Aabb,
}

impl PriorDepth {
    pub fn from_mesh(mesh: &TriMesh, kf: &Keyframe) -> Self {
        PriorDepth { depth: render_depth(mesh, &kf.pose, &kf.intrinsics), bbox: mesh.bbox() }
    }

    pub fn diagonal(&self) -> f64 {
        self.bbox.diagonal()
    }
}

#[derive(Debug, Clone)]
pub struct PatchMatchOutput {
    pub depth: DepthMap,
    /// Aggregated cost of each pixel's initial hypothesis (`INFINITY` where
    /// the pixel was never evaluated).
    pub init_cost: Vec<f32>,
    /// Aggregated cost of the returned hypothesis, before thresholding.
    pub final_cost: Vec<f32>,
}

pub fn patchmatch_depth(reference: &Keyframe, sources: &[&Keyframe], prior: &PriorDepth, cfg: &PatchMatchConfig) -> Result<DepthMap> {
    Ok(patchmatch_run(reference, sources, prior, cfg)?.depth)
}

struct SourceView<'a> {
    img: &'a GrayImage,
    k: Matrix3<f64>,
    r_rel: Matrix3<f64>,
    t_rel: Vector3<f64>,
}

struct Matcher<'a> {
    gray: &'a GrayImage,
    k_inv: Matrix3<f64>,
    sources: Vec<SourceView<'a>>,
    offsets: Vec<(i32, i32)>,
    top_k: usize,
}

#[derive(Clone, Copy)]
struct RefStats {
    mean: f32,
    sum_sq: f32,
    /// Number of best sources aggregated at this pixel.
    top_k: usize,
}

#[derive(Clone, Copy)]
struct Hypothesis {
    depth: f64,
    normal: Vector3<f64>,
    cost: f32,
}

impl<'a> Matcher<'a> {
    fn ref_stats(&self, x: usize, y: usize) -> RefStats {
        let mut sum = 0.0f32;
        for &(dx, dy) in &self.offsets {
            sum += self.gray.get((x as i32 + dx) as usize, (y as i32 + dy) as usize);
        }
        let mean = sum / self.offsets.len() as f32;
        let mut sum_sq = 0.0f32;
        for &(dx, dy) in &self.offsets {
            let r = self.gray.get((x as i32 + dx) as usize, (y as i32 + dy) as usize) - mean;
            sum_sq += r * r;
        }
        RefStats { mean, sum_sq, top_k: self.top_k }
    }

    #[inline]
    fn ray(&self, x: usize, y: usize) -> Vector3<f64> {
        self.k_inv * Vector3::new(x as f64, y as f64, 1.0)
    }

    /// Aggregated cost of plane `(depth, normal)` at pixel `(x, y)`.
    fn cost(&self, x: usize, y: usize, stats: RefStats, depth: f64, normal: &Vector3<f64>, scratch: &mut Vec<f32>) -> f32 {
        let ray = self.ray(x, y);
        let q = normal.dot(&(ray * depth));
        if !(q < 0.0) || !depth.is_finite() {
            return INVALID_COST;
        }
        scratch.clear();
        let n = self.offsets.len() as f32;
        let p0 = Vector3::new(x as f64, y as f64, 1.0);
        for src in &self.sources {
            let h = src.k * (src.r_rel + src.t_rel * (normal.transpose() / q)) * self.k_inv;
            let base = h * p0;
            let cx = h.column(0).into_owned();
            let cy = h.column(1).into_owned();
            let (mut s1, mut s2, mut rs) = (0.0f32, 0.0f32, 0.0f32);
            let mut ok = true;
            for &(dx, dy) in &self.offsets {
                let p = base + cx * dx as f64 + cy * dy as f64;
                if !(p.z > 0.0) {
                    ok = false;
                    break;
                }
                let Some(s) = src.img.bilinear(p.x / p.z, p.y / p.z) else {
                    ok = false;
                    break;
                };
                let r = self.gray.get((x as i32 + dx) as usize, (y as i32 + dy) as usize) - stats.mean;
                s1 += s;
                s2 += s * s;
                rs += r * s;
            }
            let c = if ok {
                let var_s = s2 - s1 * s1 / n;
                if var_s > 1e-10 * n {
                    let ncc = rs / (stats.sum_sq * var_s).sqrt();
                    (1.0 - ncc).clamp(0.0, 2.0)
                } else {
                    INVALID_COST
                }
            } else {
                INVALID_COST
            };
            scratch.push(c);
        }
        let k = stats.top_k.min(scratch.len());
        if k < scratch.len() {
            scratch.select_nth_unstable_by(k - 1, |a, b| a.total_cmp(b));
        }
        let best = &mut scratch[..k];
        best.sort_unstable_by(|a, b| a.total_cmp(b));
        best.iter().sum::<f32>() / k as f32
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn pixel_rng(seed: u64, view: u32, pixel: usize, round: usize) -> ChaCha8Rng {
    let h = splitmix(splitmix(splitmix(seed) ^ view as u64) ^ pixel as u64) ^ (round as u64).wrapping_mul(0xA24B_AED4_963E_E407);
    ChaCha8Rng::seed_from_u64(splitmix(h))
}

fn facing(normal: &Vector3<f64>, ray_unit: &Vector3<f64>) -> bool {
    -normal.dot(ray_unit) >= MAX_SLANT_DEG.to_radians().cos()
}

fn random_normal(rng: &mut ChaCha8Rng, ray_unit: &Vector3<f64>) -> Vector3<f64> {
    for _ in 0..16 {
        let v = Vector3::new(rng.sample::<f64, _>(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal));
        let len = v.norm();
        if len < 1e-12 {
            continue;
        }
        let mut n = v / len;
        if n.dot(ray_unit) > 0.0 {
            n = -n;
        }
        if facing(&n, ray_unit) {
            return n;
        }
    }
    -ray_unit
}

fn perturb_normal(rng: &mut ChaCha8Rng, n: &Vector3<f64>, scale: f64, ray_unit: &Vector3<f64>) -> Vector3<f64> {
    let v = Vector3::new(rng.sample::<f64, _>(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal));
    let p = (n + v * scale).normalize();
    if p.iter().all(|c| c.is_finite()) && facing(&p, ray_unit) {
        p
    } else {
        *n
    }
}

pub fn patchmatch_run(reference: &Keyframe, sources: &[&Keyframe], prior: &PriorDepth, cfg: &PatchMatchConfig) -> Result<PatchMatchOutput> {
    cfg.validate()?;
    if sources.is_empty() {
        return Err(Error::InvalidInput(format!("keyframe {}: PatchMatch needs at least one source view", reference.id)));
    }
    let intr = &reference.intrinsics;
    let (w, h) = (intr.width, intr.height);
    if prior.depth.width != w || prior.depth.height != h {
        return Err(Error::DimensionMismatch("prior depth does not match the reference image".into()));
    }
    let k_of = |kf: &Keyframe| {
        let i = &kf.intrinsics;
        Matrix3::new(i.fx, 0.0, i.cx, 0.0, i.fy, i.cy, 0.0, 0.0, 1.0)
    };
    let k_ref = k_of(reference);
    let k_inv = k_ref.try_inverse().expect("intrinsics are invertible");
    let r_ref = reference.pose.rotation;
    let t_ref = reference.pose.translation;
    let half = (cfg.window / 2) as i32;
    let step = cfg.window_step as i32;
    let mut offsets = Vec::new();
    let mut dy = -half;
    while dy <= half {
        let mut dx = -half;
        while dx <= half {
            offsets.push((dx, dy));
            dx += step;
        }
        dy += step;
    }
    let matcher = Matcher {
        gray: &reference.gray,
        k_inv,
        sources: sources
            .iter()
            .map(|s| {
                let r_rel = s.pose.rotation * r_ref.transpose();
                SourceView { img: &s.gray, k: k_of(s), r_rel, t_rel: s.pose.translation - r_rel * t_ref }
            })
            .collect(),
        offsets,
        top_k: cfg.cost_top_k.min(sources.len()),
    };

    // Search intervals.
    let range = cfg.depth_range_frac * prior.diagonal();
    let eps = 1e-9 * prior.diagonal().max(1e-12);
    let global = match prior.depth.depth_range() {
        Some((lo, hi)) => ((lo - range).max(eps), hi + range),
        None => {
            log::warn!("keyframe {}: prior depth is empty, searching the scene bounding box depth range", reference.id);
            let zs: Vec<f64> = prior.bbox.corners().iter().map(|c| reference.pose.to_camera(c).z).collect();
            let lo = zs.iter().cloned().fold(f64::INFINITY, f64::min).max(eps);
            let hi = zs.iter().cloned().fold(f64::NEG_INFINITY, f64::max).max(lo);
            (lo, hi)
        }
    };
    let interval = |i: usize| -> (f64, f64) {
        match prior.depth.get_index(i) {
            Some(d) => ((d - range).max(eps), d + range),
            None => global,
        }
    };

    // Active pixels: full window inside the image and enough texture.
    let (lo_i, hi_i) = reference.gray.min_max();
    let intensity_range = (hi_i - lo_i).max(0.0);
    let degenerate_var = 1e-8 * intensity_range * intensity_range;
    let n_off = matcher.offsets.len() as f32;
    let mut stats = vec![RefStats { mean: 0.0, sum_sq: 0.0, top_k: matcher.top_k }; w * h];
    // Sources that see a pixel's window at its prior depth. Aggregating over
    // no more than these keeps hypotheses from winning by pushing a window
    // into a source that cannot see the pixel.
    let margin = half as f64 + 1.0;
    let seen_by = |x: usize, y: usize, depth: f64| -> usize {
        let p = matcher.ray(x, y) * depth;
        matcher
            .sources
            .iter()
            .filter(|s| {
                let q = s.k * (s.r_rel * p + s.t_rel);
                if !(q.z > 0.0) {
                    return false;
                }
                let (u, v) = (q.x / q.z, q.y / q.z);
                u >= margin && v >= margin && u <= s.img.width as f64 - 1.0 - margin && v <= s.img.height as f64 - 1.0 - margin
            })
            .count()
    };
    let mut active = vec![false; w * h];
    let hu = half as usize;
    if w > 2 * hu && h > 2 * hu {
        for y in hu..h - hu {
            for x in hu..w - hu {
                let mut s = matcher.ref_stats(x, y);
                let i = y * w + x;
                let (lo, hi) = interval(i);
                s.top_k = s.top_k.min(seen_by(x, y, 0.5 * (lo + hi))).max(1);
                stats[i] = s;
                active[i] = s.sum_sq / n_off > degenerate_var;
            }
        }
    }

    let view = reference.id;
    let seed = cfg.rng_seed;
    let ray_unit = |x: usize, y: usize| matcher.ray(x, y).normalize();

    // Initialization.
    let mut hyp: Vec<Option<Hypothesis>> = (0..w * h)
        .into_par_iter()
        .map_init(Vec::new, |scratch, i| {
            if !active[i] {
                return None;
            }
            let (x, y) = (i % w, i / w);
            let mut rng = pixel_rng(seed, view, i, 0);
            let (lo, hi) = interval(i);
            let depth = if hi > lo { rng.random_range(lo..=hi) } else { lo };
            let normal = random_normal(&mut rng, &ray_unit(x, y));
            let cost = matcher.cost(x, y, stats[i], depth, &normal, scratch);
            Some(Hypothesis { depth, normal, cost })
        })
        .collect();
    let init_cost: Vec<f32> = hyp.iter().map(|h| h.map_or(f32::INFINITY, |h| h.cost)).collect();

    let color_pixels: [Vec<usize>; 2] = [0, 1].map(|c| (0..w * h).filter(|&i| active[i] && (i % w + i / w) % 2 == c).collect());

    for it in 0..cfg.iterations {
        let shrink = 0.5f64.powi(it as i32 + 1);
        for (c, pixels) in color_pixels.iter().enumerate() {
            let round = 1 + 2 * it + c;
            let updates: Vec<Hypothesis> = pixels
                .par_iter()
                .map_init(Vec::new, |scratch, &i| {
                    let (x, y) = (i % w, i / w);
                    let mut best = hyp[i].expect("active pixel has a hypothesis");
                    let ray = matcher.ray(x, y);
                    let ru = ray.normalize();
                    let (lo, hi) = interval(i);
                    let try_hyp = |depth: f64, normal: Vector3<f64>, best: &mut Hypothesis, scratch: &mut Vec<f32>| {
                        let depth = depth.clamp(lo, hi);
                        let cost = matcher.cost(x, y, stats[i], depth, &normal, scratch);
                        if cost < best.cost {
                            *best = Hypothesis { depth, normal, cost };
                        }
                    };
                    // Propagation from the other color.
                    for &(dx, dy) in &NEIGHBORS {
                        let nx = x as i32 + dx;
                        let ny = y as i32 + dy;
                        if nx < 0 || ny < 0 || nx >= w as i32 || ny >= h as i32 {
                            continue;
                        }
                        let j = ny as usize * w + nx as usize;
                        let Some(nb) = hyp[j] else { continue };
                        let xn = matcher.ray(nx as usize, ny as usize) * nb.depth;
                        let denom = nb.normal.dot(&ray);
                        if !(denom < 0.0) || !facing(&nb.normal, &ru) {
                            continue;
                        }
                        let depth = nb.normal.dot(&xn) / denom;
                        if depth.is_finite() && depth > 0.0 {
                            try_hyp(depth, nb.normal, &mut best, scratch);
                        }
                    }
                    // Random refinement.
                    let mut rng = pixel_rng(seed, view, i, round);
                    let dd = (hi - lo) * shrink;
                    let d1 = best.depth + dd * rng.random_range(-1.0..=1.0);
                    try_hyp(d1, best.normal, &mut best, scratch);
                    let n1 = perturb_normal(&mut rng, &best.normal, shrink, &ru);
                    try_hyp(best.depth, n1, &mut best, scratch);
                    let d2 = best.depth + dd * rng.random_range(-1.0..=1.0);
                    let n2 = perturb_normal(&mut rng, &best.normal, shrink, &ru);
                    try_hyp(d2, n2, &mut best, scratch);
                    let d3 = if hi > lo { rng.random_range(lo..=hi) } else { lo };
                    let n3 = random_normal(&mut rng, &ru);
                    try_hyp(d3, n3, &mut best, scratch);
                    best
                })
                .collect();
            for (&i, u) in pixels.iter().zip(updates) {
                hyp[i] = Some(u);
            }
        }
    }

    let mut depth = DepthMap::invalid(w, h);
    let mut normals = vec![[0.0f32; 3]; w * h];
    let mut costs = vec![INVALID_COST; w * h];
    let mut final_cost = vec![f32::INFINITY; w * h];
    for i in 0..w * h {
        let Some(hp) = hyp[i] else { continue };
        final_cost[i] = hp.cost;
        costs[i] = hp.cost;
        normals[i] = [hp.normal.x as f32, hp.normal.y as f32, hp.normal.z as f32];
        if (hp.cost as f64) <= cfg.cost_threshold {
            depth.depth[i] = hp.depth as f32;
            depth.valid[i] = true;
        }
    }
    // Re-normalize in f32 so stored normals are unit length at storage precision.
    for n in &mut normals {
        let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
        if len > 0.0 {
            n.iter_mut().for_each(|c| *c /= len);
        }
    }
    depth.normal = Some(normals);
    depth.cost = Some(costs);
    Ok(PatchMatchOutput { depth, init_cost, final_cost })
}

/// Pixel position of the center of pixel index `i`.
pub(crate) fn pixel_center(i: usize, width: usize) -> Vector2<f64> {
    Vector2::new((i % width) as f64, (i / width) as f64)
}
