//! Pairwise keyframe scoring and source-view selection for MVS.
//!
//! A pair `(i, j)` scores `sum_p G(theta_ij(p))` over 3D points `p` seen by
//! both views, where `theta_ij(p)` is the angle subtended at `p` by the two
//! camera centers and `G` is a Gaussian peaked at `theta0` with separate
//! widths on either side.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::camera::Keyframe;
use crate::error::{Error, Result};
use crate::mesh::TriMesh;
use crate::raster::render_depth;

/// Relative depth tolerance for Z-buffer visibility tests.
pub const VISIBILITY_REL_TOL: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ViewSelConfig {
    /// Peak baseline angle in degrees.
    pub theta0: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub num_sources: usize,
}

impl Default for ViewSelConfig {
    fn default() -> Self {
        ViewSelConfig { theta0: 10.0, sigma1: 5.0, sigma2: 10.0, num_sources: 12 }
    }
}

impl ViewSelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma1 > 0.0 && self.sigma2 > 0.0 && self.theta0 >= 0.0 && self.num_sources >= 1) {
            return Err(Error::Config(format!("invalid view selection config {self:?}")));
        }
        Ok(())
    }
}

pub fn gaussian_weight(theta: f64, cfg: &ViewSelConfig) -> Result<f64> {
    if !(0.0..=180.0).contains(&theta) {
        return Err(Error::InvalidInput(format!("angle {theta} outside [0, 180] degrees")));
    }
    let sigma = if theta <= cfg.theta0 { cfg.sigma1 } else { cfg.sigma2 };
    let d = theta - cfg.theta0;
    Ok((-(d * d) / (2.0 * sigma * sigma)).exp())
}

/// Angle in degrees between the rays from `p` to the two camera centers.
pub fn baseline_angle(ci: &Vector3<f64>, cj: &Vector3<f64>, p: &Vector3<f64>) -> Result<f64> {
    let a = ci - p;
    let b = cj - p;
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Degenerate("point coincides with a camera center".into()));
    }
    let cos = (a.dot(&b) / (na * nb)).clamp(-1.0, 1.0);
    Ok(cos.acos().to_degrees())
}

/// View score of a keyframe pair over a set of shared points. Points that
/// coincide with a camera center contribute nothing.
pub fn pair_score(kf_i: &Keyframe, kf_j: &Keyframe, shared_points: &[Vector3<f64>], cfg: &ViewSelConfig) -> f64 {
    score_centers(&kf_i.center(), &kf_j.center(), shared_points.iter(), cfg)
}

fn score_centers<'a>(ci: &Vector3<f64>, cj: &Vector3<f64>, points: impl Iterator<Item = &'a Vector3<f64>>, cfg: &ViewSelConfig) -> f64 {
    points.filter_map(|p| baseline_angle(ci, cj, p).ok()).map(|theta| gaussian_weight(theta, cfg).unwrap_or(0.0)).sum()
}

/// Vertices of `mesh` visible from `kf`: inside the image and within
/// [`VISIBILITY_REL_TOL`] of the rendered depth at their pixel.
pub fn visible_vertices(mesh: &TriMesh, kf: &Keyframe) -> Vec<bool> {
    let depth = render_depth(mesh, &kf.pose, &kf.intrinsics);
    mesh.vertices
        .iter()
        .map(|v| {
            let Ok((px, z)) = kf.project(v) else { return false };
            let Some((x, y)) = kf.intrinsics.pixel_index(px) else { return false };
            match depth.get(x, y) {
                Some(zb) => (z - zb).abs() <= VISIBILITY_REL_TOL * zb,
                None => false,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceViews {
    pub reference: u32,
    /// Selected source keyframe ids, best first.
    pub sources: Vec<u32>,
    pub scores: Vec<f64>,
}

/// Full pairwise score matrix (indexed like `keyframes`), symmetric with a
/// zero diagonal.
pub fn score_matrix(keyframes: &[Keyframe], prior_mesh: &TriMesh, cfg: &ViewSelConfig) -> Vec<Vec<f64>> {
    let vis: Vec<Vec<bool>> = keyframes.iter().map(|kf| visible_vertices(prior_mesh, kf)).collect();
    let centers: Vec<_> = keyframes.iter().map(|k| k.center()).collect();
    let n = keyframes.len();
    let mut scores = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let shared = prior_mesh.vertices.iter().enumerate().filter(|(k, _)| vis[i][*k] && vis[j][*k]).map(|(_, p)| p);
            let s = score_centers(&centers[i], &centers[j], shared, cfg);
            scores[i][j] = s;
            scores[j][i] = s;
        }
    }
    scores
}

/// Picks the `num_sources` best-scoring partners for every keyframe; ties
/// go to the lower keyframe id.
pub fn select_source_views(keyframes: &[Keyframe], prior_mesh: &TriMesh, cfg: &ViewSelConfig) -> Result<Vec<SourceViews>> {
    cfg.validate()?;
    if keyframes.len() < 2 {
        return Err(Error::InvalidInput(format!("view selection needs at least 2 keyframes, got {}", keyframes.len())));
    }
    let scores = score_matrix(keyframes, prior_mesh, cfg);
    Ok(rank_sources(keyframes, &scores, cfg.num_sources))
}

pub fn rank_sources(keyframes: &[Keyframe], scores: &[Vec<f64>], num_sources: usize) -> Vec<SourceViews> {
    (0..keyframes.len())
        .map(|i| {
            let mut cand: Vec<usize> = (0..keyframes.len()).filter(|&j| j != i).collect();
            cand.sort_by(|&a, &b| scores[i][b].total_cmp(&scores[i][a]).then(keyframes[a].id.cmp(&keyframes[b].id)));
            cand.truncate(num_sources);
            SourceViews {
                reference: keyframes[i].id,
                sources: cand.iter().map(|&j| keyframes[j].id).collect(),
                scores: cand.iter().map(|&j| scores[i][j]).collect(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::{CameraPose, Intrinsics};
    use nalgebra::Point3;
    use proptest::prelude::*;

    fn cfg() -> ViewSelConfig {
        ViewSelConfig::default()
    }

    #[test]
    fn weight_values() {
        assert_eq!(gaussian_weight(10.0, &cfg()).unwrap(), 1.0);
        assert!((gaussian_weight(5.0, &cfg()).unwrap() - (-0.5f64).exp()).abs() < 1e-12);
        assert!((gaussian_weight(20.0, &cfg()).unwrap() - (-0.5f64).exp()).abs() < 1e-12);
        assert!((gaussian_weight(0.0, &cfg()).unwrap() - (-2.0f64).exp()).abs() < 1e-12);
        assert!((gaussian_weight(5.0, &cfg()).unwrap() - 0.606531).abs() < 1e-6);
        assert!(gaussian_weight(-1.0, &cfg()).is_err());
        assert!(gaussian_weight(180.5, &cfg()).is_err());
    }

    #[test]
    fn angles() {
        let o = Vector3::zeros();
        assert!((baseline_angle(&Vector3::x(), &Vector3::y(), &o).unwrap() - 90.0).abs() < 1e-12);
        assert_eq!(baseline_angle(&Vector3::x(), &Vector3::x(), &o).unwrap(), 0.0);
        let a = baseline_angle(&Vector3::new(1.0, 0.0, 1.0), &Vector3::new(-1.0, 0.0, 1.0), &o).unwrap();
        assert!((a - 90.0).abs() < 1e-12);
        assert!(baseline_angle(&Vector3::x(), &Vector3::y(), &Vector3::x()).is_err());
    }

    fn kf_at(id: u32, eye: Vector3<f64>) -> Keyframe {
        let intr = Intrinsics::new(100.0, 100.0, 32.0, 32.0, 64, 64).unwrap();
        let pose = CameraPose::look_at(Point3::from(eye), Point3::origin(), Vector3::new(0.0, -1.0, 0.0)).unwrap();
        Keyframe::blank(id, pose, intr)
    }

    /// Two cameras whose centers subtend `deg` degrees at the origin.
    fn pair_at(deg: f64) -> (Keyframe, Keyframe) {
        let h = (deg / 2.0).to_radians();
        (kf_at(0, Vector3::new(5.0 * h.sin(), 0.0, -5.0 * h.cos())), kf_at(1, Vector3::new(-5.0 * h.sin(), 0.0, -5.0 * h.cos())))
    }

    #[test]
    fn pair_scores() {
        let (a, b) = pair_at(10.0);
        assert_eq!(pair_score(&a, &b, &[], &cfg()), 0.0);
        let s = pair_score(&a, &b, &[Vector3::zeros()], &cfg());
        assert!((s - 1.0).abs() < 1e-12);
        // A far point along the bisector sees the pair at nearly zero angle.
        let far = Vector3::new(0.0, 0.0, 1e9);
        let s2 = pair_score(&a, &b, &[Vector3::zeros(), far], &cfg());
        assert!((s2 - 1.135335).abs() < 1e-6);
        assert_eq!(pair_score(&b, &a, &[Vector3::zeros(), far], &cfg()), s2);
    }

    #[test]
    fn two_keyframes_select_each_other() {
        let sphere = TriMesh::icosphere(2, 1.0);
        let (a, b) = pair_at(20.0);
        let sel = select_source_views(&[a, b], &sphere, &cfg()).unwrap();
        assert_eq!(sel[0].sources, vec![1]);
        assert_eq!(sel[1].sources, vec![0]);
        assert!(select_source_views(&[kf_at(3, Vector3::new(0.0, 0.0, -5.0))], &sphere, &cfg()).is_err());
    }

    #[test]
    fn arc_of_thirteen() {
        let sphere = TriMesh::icosphere(2, 1.0);
        let kfs: Vec<_> = (0..13)
            .map(|k| {
                let a = (-90.0 + 15.0 * k as f64).to_radians();
                kf_at(k as u32, Vector3::new(5.0 * a.sin(), 0.0, -5.0 * a.cos()))
            })
            .collect();
        let sel = select_source_views(&kfs, &sphere, &cfg()).unwrap();
        for s in &sel {
            assert_eq!(s.sources.len(), 12);
            assert!(!s.sources.contains(&s.reference));
        }
        // The immediate neighbors are the best sources.
        assert!(sel[6].sources[..2].contains(&5) && sel[6].sources[..2].contains(&7));
    }

    proptest! {
        #[test]
        fn weight_monotone_each_side(a in 0.0f64..180.0, b in 0.0f64..180.0) {
            let c = cfg();
            let (wa, wb) = (gaussian_weight(a, &c).unwrap(), gaussian_weight(b, &c).unwrap());
            prop_assert!(wa > 0.0 && wa <= 1.0);
            let same_side = (a <= 10.0 && b <= 10.0) || (a >= 10.0 && b >= 10.0);
            if same_side && (a - 10.0).abs() < (b - 10.0).abs() {
                prop_assert!(wa >= wb);
            }
        }

        #[test]
        fn score_permutation_and_additivity(
            pts in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0), 0..40),
            split in 0usize..40,
        ) {
            let (a, b) = pair_at(25.0);
            let pts: Vec<_> = pts.into_iter().map(|(x, y, z)| Vector3::new(x, y, z)).collect();
            let s = pair_score(&a, &b, &pts, &cfg());
            let mut rev = pts.clone();
            rev.reverse();
            prop_assert!((pair_score(&a, &b, &rev, &cfg()) - s).abs() < 1e-9);
            let k = split.min(pts.len());
            let parts = pair_score(&a, &b, &pts[..k], &cfg()) + pair_score(&a, &b, &pts[k..], &cfg());
            prop_assert!((parts - s).abs() < 1e-9);
            prop_assert_eq!(pair_score(&b, &a, &pts, &cfg()), s);
        }
    }
}
