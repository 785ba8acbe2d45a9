//! Fusion of per-target similarity maps.
//!
//! The intersection surface is the per-cell minimum over all maps; the
//! guidance surface blends it with the per-cell maximum so that targets not
//! yet observed do not flatten the whole map.

use serde::{Deserialize, Serialize};

use crate::belief_map::SimilarityMap;
use crate::error::{Error, Result};
use crate::exec::Exec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionConfig {
    /// Weight of the intersection term, in `[0, 1]`.
    pub alpha: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self { alpha: 0.8 }
    }
}

impl FusionConfig {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::Argument(format!("alpha {alpha} outside [0, 1]")));
        }
        Ok(Self { alpha })
    }
}

fn check(maps: &[SimilarityMap]) -> Result<()> {
    let first = maps
        .first()
        .ok_or_else(|| Error::Argument("fusion needs at least one map".into()))?;
    for m in &maps[1..] {
        first.spec().ensure_same(m.spec())?;
    }
    Ok(())
}

/// Per-cell minimum across `maps`.
pub fn intersect(maps: &[SimilarityMap]) -> Result<SimilarityMap> {
    intersect_with(maps, Exec::Auto)
}

pub fn intersect_with(maps: &[SimilarityMap], exec: Exec) -> Result<SimilarityMap> {
    check(maps)?;
    let spec = *maps[0].spec();
    let scores = exec.map_indices(spec.len(), |i| {
        maps.iter().map(|m| m.scores()[i]).fold(f64::INFINITY, f64::min)
    });
    SimilarityMap::new(spec, scores)
}

/// Per-cell `alpha * min + (1 - alpha) * max` across `maps`.
pub fn combine(maps: &[SimilarityMap], cfg: FusionConfig) -> Result<SimilarityMap> {
    combine_with(maps, cfg, Exec::Auto)
}

pub fn combine_with(maps: &[SimilarityMap], cfg: FusionConfig, exec: Exec) -> Result<SimilarityMap> {
    check(maps)?;
    FusionConfig::new(cfg.alpha)?;
    let spec = *maps[0].spec();
    let a = cfg.alpha;
    let scores = exec.map_indices(spec.len(), |i| {
        let (lo, hi) = maps.iter().map(|m| m.scores()[i]).fold(
            (f64::INFINITY, f64::NEG_INFINITY),
            |(lo, hi), s| (lo.min(s), hi.max(s)),
        );
        // Rounding can push the blend a hair outside [lo, hi].
        (a * lo + (1.0 - a) * hi).clamp(lo, hi)
    });
    SimilarityMap::new(spec, scores)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Cell, GridSpec};

    fn map(w: usize, h: usize, scores: Vec<f64>) -> SimilarityMap {
        SimilarityMap::new(GridSpec::new(1.0, w, h).unwrap(), scores).unwrap()
    }

    #[test]
    fn min_of_identical_maps() {
        let m = map(2, 1, vec![0.3, 0.7]);
        assert_eq!(intersect(&[m.clone(), m.clone()]).unwrap(), m);
    }

    #[test]
    fn min_and_blend_by_hand() {
        let a = map(1, 1, vec![0.9]);
        let b = map(1, 1, vec![0.2]);
        assert_eq!(intersect(&[a, b]).unwrap().get(Cell::new(0, 0)), 0.2);

        let a = map(1, 1, vec![0.8]);
        let b = map(1, 1, vec![0.4]);
        let c = combine(&[a, b], FusionConfig::new(0.8).unwrap()).unwrap();
        assert!((c.get(Cell::new(0, 0)) - 0.48).abs() < 1e-12);
    }

    #[test]
    fn single_map_identity() {
        let m = map(3, 1, vec![0.0, 0.5, 1.0]);
        for alpha in [0.0, 0.3, 1.0] {
            assert_eq!(combine(&[m.clone()], FusionConfig { alpha }).unwrap(), m);
        }
    }

    #[test]
    fn alpha_one_is_intersection() {
        let a = map(2, 1, vec![0.1, 0.9]);
        let b = map(2, 1, vec![0.6, 0.3]);
        let maps = [a, b];
        assert_eq!(
            combine(&maps, FusionConfig { alpha: 1.0 }).unwrap(),
            intersect(&maps).unwrap()
        );
    }

    #[test]
    fn argument_errors() {
        assert!(matches!(intersect(&[]), Err(Error::Argument(_))));
        let a = map(2, 1, vec![0.1, 0.9]);
        let b = map(1, 2, vec![0.1, 0.9]);
        assert!(matches!(intersect(&[a.clone(), b]), Err(Error::DimensionMismatch(_))));
        assert!(combine(&[a], FusionConfig { alpha: 1.5 }).is_err());
        assert!(FusionConfig::new(-0.1).is_err());
    }
}
