use crate::depth::DepthMap;
use crate::error::Result;

pub const DEFAULT_TAU_REL: f64 = 0.05;

/// Drops depths that disagree with the prior by more than `tau_rel`
/// (relative). Pixels the prior does not cover survive only when their
/// matching cost is strictly below `cost_threshold / 2`.
pub fn filter_with_prior(depth: &DepthMap, prior: &DepthMap, tau_rel: f64, cost_threshold: f64) -> Result<DepthMap> {
    depth.check_same_size(prior)?;
    let mut out = depth.clone();
    for i in 0..depth.valid.len() {
        let Some(d) = depth.get_index(i) else { continue };
        let keep = match prior.get_index(i) {
            Some(dp) => (d - dp).abs() <= tau_rel * dp,
            None => depth.cost.as_ref().is_some_and(|c| (c[i] as f64) < cost_threshold / 2.0),
        };
        if !keep {
            out.invalidate(i);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(vals: &[Option<f32>]) -> DepthMap {
        let mut m = DepthMap::invalid(vals.len(), 1);
        for (i, v) in vals.iter().enumerate() {
            if let Some(d) = v {
                m.set(i, 0, *d as f64);
            }
        }
        m
    }

    #[test]
    fn identical_is_unchanged() {
        let m = map(&[Some(1.0), None, Some(2.0)]);
        assert_eq!(filter_with_prior(&m, &m, 0.05, 0.6).unwrap(), m);
    }

    #[test]
    fn ten_percent_deviation_dropped() {
        let prior = map(&[Some(1.0), Some(1.0)]);
        let d = map(&[Some(1.1), Some(1.04)]);
        let out = filter_with_prior(&d, &prior, 0.05, 0.6).unwrap();
        assert_eq!(out.valid, vec![false, true]);
    }

    #[test]
    fn uncovered_pixels_use_cost() {
        let prior = map(&[None, None, None, None]);
        let mut d = map(&[Some(1.0), Some(1.0), Some(1.0), Some(1.0)]);
        d.cost = Some(vec![0.1, 0.3, 0.5, 0.29]);
        let out = filter_with_prior(&d, &prior, 0.05, 0.6).unwrap();
        assert_eq!(out.valid, vec![true, false, false, true]);
        // No stored cost means no evidence: dropped.
        d.cost = None;
        assert!(filter_with_prior(&d, &prior, 0.05, 0.6).unwrap().is_all_invalid());
    }

    #[test]
    fn size_mismatch() {
        assert!(filter_with_prior(&map(&[None]), &map(&[None, None]), 0.05, 0.6).is_err());
    }
}
