//! Segmentation ratios and depth accuracy against ground truth.

use crate::error::{Error, Result};
use crate::raster::{DepthMap, Mask};

/// Hit, background and overlap ratios of a result mask against ground truth.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SegMetrics {
    /// `|R ∩ G| / |G|`.
    pub hit: f64,
    /// `|R − G| / |R|`, zero for an empty result.
    pub bkg: f64,
    /// `|R ∩ G| / |R ∪ G|`.
    pub overlap: f64,
}

impl SegMetrics {
    /// Arithmetic mean of each ratio.
    pub fn mean(all: &[SegMetrics]) -> Option<SegMetrics> {
        if all.is_empty() {
            return None;
        }
        let n = all.len() as f64;
        Some(SegMetrics {
            hit: all.iter().map(|m| m.hit).sum::<f64>() / n,
            bkg: all.iter().map(|m| m.bkg).sum::<f64>() / n,
            overlap: all.iter().map(|m| m.overlap).sum::<f64>() / n,
        })
    }
}

pub fn seg_metrics(result: &Mask, gt: &Mask) -> Result<SegMetrics> {
    result.same_dims(gt)?;
    let (mut inter, mut r, mut g) = (0usize, 0usize, 0usize);
    for (&a, &b) in result.data().iter().zip(gt.data()) {
        inter += usize::from(a && b);
        r += usize::from(a);
        g += usize::from(b);
    }
    if g == 0 {
        return Err(Error::EmptyGroundTruth);
    }
    let union = r + g - inter;
    Ok(SegMetrics {
        hit: inter as f64 / g as f64,
        bkg: if r == 0 { 0.0 } else { (r - inter) as f64 / r as f64 },
        overlap: inter as f64 / union as f64,
    })
}

/// Median absolute depth error over ground-truth foreground pixels where the
/// result has a depth.
pub fn median_depth_error(result: &DepthMap, gt_depth: &DepthMap, gt_mask: &Mask) -> Result<Option<f64>> {
    result.same_dims(gt_depth)?;
    result.same_dims(gt_mask)?;
    let mut errs: Vec<f64> = result
        .data()
        .iter()
        .zip(gt_depth.data())
        .zip(gt_mask.data())
        .filter_map(|((r, g), &m)| match (r, g, m) {
            (Some(r), Some(g), true) => Some((r - g).abs()),
            _ => None,
        })
        .collect();
    if errs.is_empty() {
        return Ok(None);
    }
    errs.sort_by(f64::total_cmp);
    let n = errs.len();
    Ok(Some(if n % 2 == 1 {
        errs[n / 2]
    } else {
        0.5 * (errs[n / 2 - 1] + errs[n / 2])
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Raster;
    use proptest::prelude::*;

    #[test]
    fn identity_superset_and_disjoint() {
        let gt = Raster::from_fn(8, 8, |x, _| x < 4);
        assert_eq!(
            seg_metrics(&gt, &gt).unwrap(),
            SegMetrics {
                hit: 1.0,
                bkg: 0.0,
                overlap: 1.0
            }
        );

        let gt = Raster::from_fn(8, 8, |x, _| x < 2);
        let sup = Raster::from_fn(8, 8, |x, _| x < 4);
        assert_eq!(
            seg_metrics(&sup, &gt).unwrap(),
            SegMetrics {
                hit: 1.0,
                bkg: 0.5,
                overlap: 0.5
            }
        );

        let other = Raster::from_fn(8, 8, |x, _| x >= 6);
        assert_eq!(
            seg_metrics(&other, &gt).unwrap(),
            SegMetrics {
                hit: 0.0,
                bkg: 1.0,
                overlap: 0.0
            }
        );
    }

    #[test]
    fn empty_inputs() {
        let empty = Raster::new(4, 4, false);
        let full = Raster::new(4, 4, true);
        assert!(matches!(seg_metrics(&full, &empty), Err(Error::EmptyGroundTruth)));
        let m = seg_metrics(&empty, &full).unwrap();
        assert_eq!((m.hit, m.bkg, m.overlap), (0.0, 0.0, 0.0));
        assert!(seg_metrics(&Raster::new(3, 4, true), &full).is_err());
    }

    #[test]
    fn depth_error_median() {
        let gt = Raster::new(3, 1, Some(2.0));
        let mask = Raster::from_vec(3, 1, vec![true, true, false]).unwrap();
        let res = Raster::from_vec(3, 1, vec![Some(2.5), None, Some(9.0)]).unwrap();
        assert_eq!(median_depth_error(&res, &gt, &mask).unwrap(), Some(0.5));
        assert_eq!(median_depth_error(&Raster::new(3, 1, None), &gt, &mask).unwrap(), None);
    }

    proptest! {
        #[test]
        fn ratios_are_ordered_and_bounded(
            (w, h, a, b) in (1usize..16, 1usize..16).prop_flat_map(|(w, h)| (
                Just(w), Just(h),
                proptest::collection::vec(any::<bool>(), w * h),
                proptest::collection::vec(any::<bool>(), w * h),
            ))
        ) {
            let r = Raster::from_vec(w, h, a).unwrap();
            let g = Raster::from_vec(w, h, b).unwrap();
            if let Ok(m) = seg_metrics(&r, &g) {
                prop_assert!(m.overlap <= m.hit);
                for v in [m.hit, m.bkg, m.overlap] {
                    prop_assert!((0.0..=1.0).contains(&v));
                }
            }
        }
    }
}
