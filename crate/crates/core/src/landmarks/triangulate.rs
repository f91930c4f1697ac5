use std::collections::BTreeMap;

use nalgebra::{DMatrix, Matrix3, Matrix3x4, Vector2, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Landmark3D, LandmarkObservation, LandmarkSelection};
use crate::camera::Keyframe;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TriangulationConfig {
    pub min_confidence: f64,
    /// Huber threshold on the reprojection distance in pixels; `None`
    /// minimizes the plain sum of squares.
    pub huber_px: Option<f64>,
    pub max_iterations: usize,
    pub rel_tol: f64,
}

impl Default for TriangulationConfig {
    fn default() -> Self {
        TriangulationConfig { min_confidence: 0.9, huber_px: Some(2.0), max_iterations: 100, rel_tol: 1e-12 }
    }
}

/// Reprojection cost of one 3D point observed in several views.
#[derive(Debug, Clone)]
pub struct ReprojectionProblem<'a> {
    views: Vec<(&'a Keyframe, Vector2<f64>)>,
    huber: Option<f64>,
}

impl<'a> ReprojectionProblem<'a> {
    pub fn new(views: Vec<(&'a Keyframe, Vector2<f64>)>, huber: Option<f64>) -> Self {
        ReprojectionProblem { views, huber }
    }

    pub fn num_views(&self) -> usize {
        self.views.len()
    }

    fn rho(&self, s2: f64) -> f64 {
        match self.huber {
            Some(d) if s2 > d * d => 2.0 * d * s2.sqrt() - d * d,
            _ => s2,
        }
    }

    /// Weight of a residual with squared norm `s2` in the reweighted
    /// least-squares step.
    fn weight(&self, s2: f64) -> f64 {
        match self.huber {
            Some(d) if s2 > d * d => d / s2.sqrt(),
            _ => 1.0,
        }
    }

    fn residual(kf: &Keyframe, obs: &Vector2<f64>, x: &Vector3<f64>) -> (Vector2<f64>, f64) {
        let xc = kf.pose.rotation * x + kf.pose.translation;
        let i = &kf.intrinsics;
        let p = Vector2::new(i.fx * xc.x / xc.z + i.cx, i.fy * xc.y / xc.z + i.cy);
        (p - obs, xc.z)
    }

    fn jacobian(kf: &Keyframe, x: &Vector3<f64>) -> nalgebra::Matrix2x3<f64> {
        let r = &kf.pose.rotation;
        let xc = r * x + kf.pose.translation;
        let i = &kf.intrinsics;
        let iz = 1.0 / xc.z;
        let du = (r.row(0) - r.row(2) * (xc.x * iz)) * (i.fx * iz);
        let dv = (r.row(1) - r.row(2) * (xc.y * iz)) * (i.fy * iz);
        nalgebra::Matrix2x3::from_rows(&[du, dv])
    }

    /// Sum over views of the (robustified) squared pixel distance.
    pub fn cost(&self, x: &Vector3<f64>) -> f64 {
        self.views.iter().map(|(kf, obs)| self.rho(Self::residual(kf, obs, x).0.norm_squared())).sum()
    }

    pub fn gradient(&self, x: &Vector3<f64>) -> Vector3<f64> {
        let mut g = Vector3::zeros();
        for (kf, obs) in &self.views {
            let (r, _) = Self::residual(kf, obs, x);
            g += Self::jacobian(kf, x).transpose() * r * (2.0 * self.weight(r.norm_squared()));
        }
        g
    }

    /// Root mean square reprojection distance in pixels.
    pub fn rms(&self, x: &Vector3<f64>) -> f64 {
        let s: f64 = self.views.iter().map(|(kf, obs)| Self::residual(kf, obs, x).0.norm_squared()).sum();
        (s / self.views.len().max(1) as f64).sqrt()
    }

    /// Homogeneous least-squares triangulation from all views.
    pub fn linear(&self) -> Result<Vector3<f64>> {
        if self.views.len() < 2 {
            return Err(Error::Degenerate(format!("{} view(s), need at least 2", self.views.len())));
        }
        let mut a = DMatrix::zeros(2 * self.views.len(), 4);
        for (k, (kf, obs)) in self.views.iter().enumerate() {
            let i = &kf.intrinsics;
            let kmat = Matrix3::new(i.fx, 0.0, i.cx, 0.0, i.fy, i.cy, 0.0, 0.0, 1.0);
            let mut rt = Matrix3x4::zeros();
            rt.fixed_view_mut::<3, 3>(0, 0).copy_from(&kf.pose.rotation);
            rt.set_column(3, &kf.pose.translation);
            let p = kmat * rt;
            for (row, (coord, axis)) in [(obs.x, 0), (obs.y, 1)].into_iter().enumerate() {
                let r = p.row(2) * coord - p.row(axis);
                let n = r.norm();
                if n > 0.0 {
                    a.row_mut(2 * k + row).copy_from(&(r / n));
                }
            }
        }
        let svd = a.svd(false, true);
        let v_t = svd.v_t.ok_or_else(|| Error::Singular("SVD failed in linear triangulation".into()))?;
        let (imin, _) = svd.singular_values.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).expect("four singular values");
        let h = v_t.row(imin);
        if h[3].abs() < 1e-300 {
            return Err(Error::Degenerate("linear triangulation gives a point at infinity".into()));
        }
        Ok(Vector3::new(h[0] / h[3], h[1] / h[3], h[2] / h[3]))
    }

    /// Levenberg–Marquardt refinement from `x0`. Never returns a point with
    /// a higher cost than `x0`.
    pub fn refine(&self, x0: Vector3<f64>, max_iterations: usize, rel_tol: f64) -> Vector3<f64> {
        let mut x = x0;
        let mut cost = self.cost(&x);
        let mut lambda = 1e-3;
        for _ in 0..max_iterations {
            if cost == 0.0 {
                break;
            }
            let mut h = Matrix3::zeros();
            let mut g = Vector3::zeros();
            for (kf, obs) in &self.views {
                let (r, _) = Self::residual(kf, obs, &x);
                let w = self.weight(r.norm_squared());
                let j = Self::jacobian(kf, &x);
                h += j.transpose() * j * w;
                g += j.transpose() * r * w;
            }
            let mut accepted = false;
            while lambda < 1e16 {
                let mut damped = h;
                for k in 0..3 {
                    damped[(k, k)] += lambda * h[(k, k)].max(1e-12);
                }
                let Some(step) = damped.cholesky().map(|c| c.solve(&(-g))) else {
                    lambda *= 10.0;
                    continue;
                };
                let cand = x + step;
                let in_front = self.views.iter().all(|(kf, _)| kf.pose.to_camera(&cand).z > 0.0);
                let c = if in_front { self.cost(&cand) } else { f64::INFINITY };
                if c <= cost {
                    let rel = (cost - c) / cost.max(f64::MIN_POSITIVE);
                    x = cand;
                    cost = c;
                    lambda = (lambda * 0.1).max(1e-12);
                    accepted = true;
                    if rel < rel_tol {
                        return x;
                    }
                    break;
                }
                lambda *= 10.0;
            }
            if !accepted {
                break;
            }
        }
        x
    }
}

/// Triangulates one landmark id from its observations. Observations from
/// unknown frames or below `min_confidence` are ignored.
pub fn triangulate_landmark(observations: &[LandmarkObservation], keyframes: &[Keyframe], cfg: &TriangulationConfig) -> Result<Landmark3D> {
    let Some(first) = observations.first() else {
        return Err(Error::Degenerate("no observations".into()));
    };
    let id = first.landmark_id;
    if observations.iter().any(|o| o.landmark_id != id) {
        return Err(Error::InvalidInput("observations of several landmark ids".into()));
    }
    let by_id: BTreeMap<u32, &Keyframe> = keyframes.iter().map(|k| (k.id, k)).collect();
    let mut used: Vec<&LandmarkObservation> =
        observations.iter().filter(|o| o.confidence >= cfg.min_confidence && by_id.contains_key(&o.frame_id)).collect();
    // Fixed order so the result does not depend on the input order.
    used.sort_by(|a, b| {
        (a.frame_id, a.position.x.to_bits(), a.position.y.to_bits()).cmp(&(b.frame_id, b.position.x.to_bits(), b.position.y.to_bits()))
    });
    if used.len() < 2 {
        return Err(Error::Degenerate(format!("landmark {id}: {} confident view(s), need at least 2", used.len())));
    }
    let problem = ReprojectionProblem::new(used.iter().map(|o| (by_id[&o.frame_id], o.position)).collect(), cfg.huber_px);
    let x0 = problem.linear()?;
    for (kf, _) in &problem.views {
        let z = kf.pose.to_camera(&x0).z;
        if !(z > 0.0) {
            log::warn!("landmark {id}: linear triangulation lies behind keyframe {}", kf.id);
            return Err(Error::BehindCamera { z });
        }
    }
    let x = problem.refine(x0, cfg.max_iterations, cfg.rel_tol);
    Ok(Landmark3D { landmark_id: id, position: x, rms_reprojection_error: problem.rms(&x), num_views: problem.num_views() })
}

/// Triangulates every selected landmark id, in ascending id order.
/// Landmarks that fail are dropped with a warning.
pub fn triangulate_all(
    observations: &[LandmarkObservation],
    keyframes: &[Keyframe],
    selection: &LandmarkSelection,
    cfg: &TriangulationConfig,
) -> Vec<Landmark3D> {
    let mut groups: BTreeMap<i64, Vec<LandmarkObservation>> = BTreeMap::new();
    for o in observations.iter().filter(|o| selection.accepts(o.landmark_id)) {
        groups.entry(o.landmark_id).or_default().push(*o);
    }
    let groups: Vec<(i64, Vec<LandmarkObservation>)> = groups.into_iter().collect();
    groups
        .par_iter()
        .filter_map(|(id, obs)| match triangulate_landmark(obs, keyframes, cfg) {
            Ok(l) => Some(l),
            Err(e) => {
                log::warn!("landmark {id} skipped: {e}");
                None
            }
        })
        .collect()
}
