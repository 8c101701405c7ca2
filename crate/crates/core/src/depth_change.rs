//! Depth-change metric: per-pixel absolute depth difference between the
//! pre- and post-removal renders, an automatically selected change threshold,
//! and the fraction of object pixels that changed beyond it.
//!
//! The threshold is picked on the histogram of differences over the whole
//! image (not just the object), so it adapts to the scene's depth scale; the
//! ratio then counts strictly-greater changes inside the object mask.

use crate::error::{Error, Result};
use crate::ght::{ght_split, GhtConfig};
use crate::raster::{BinaryMask, DepthMap};

/// Absolute per-pixel depth difference with joint validity.
#[derive(Debug, Clone)]
pub struct DepthDiffMap {
    width: u32,
    height: u32,
    diffs: Vec<f32>,
    valid: Vec<bool>,
}

impl DepthDiffMap {
    /// Builds a diff map directly; diffs at invalid pixels are ignored.
    pub fn from_parts(width: u32, height: u32, diffs: Vec<f32>, valid: Vec<bool>) -> Result<Self> {
        let n = width as usize * height as usize;
        if width == 0 || height == 0 || diffs.len() != n || valid.len() != n {
            return Err(Error::InvalidInput(format!(
                "diff map shape mismatch: {width}x{height}, {} diffs, {} valid",
                diffs.len(),
                valid.len()
            )));
        }
        for (i, (&d, &v)) in diffs.iter().zip(&valid).enumerate() {
            if v && !(d.is_finite() && d >= 0.0) {
                return Err(Error::InvalidInput(format!(
                    "valid diff at index {i} must be finite and non-negative, got {d}"
                )));
            }
        }
        Ok(DepthDiffMap {
            width,
            height,
            diffs,
            valid,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn diffs(&self) -> &[f32] {
        &self.diffs
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    #[inline]
    pub fn diff(&self, x: u32, y: u32) -> f32 {
        self.diffs[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn is_valid(&self, x: u32, y: u32) -> bool {
        self.valid[y as usize * self.width as usize + x as usize]
    }
}

/// Per-pixel `|pre - post|` over jointly valid pixels.
pub fn depth_diff(pre: &DepthMap, post: &DepthMap) -> Result<DepthDiffMap> {
    if pre.dims() != post.dims() {
        return Err(Error::dims(
            format!("{}x{}", pre.width(), pre.height()),
            format!("{}x{}", post.width(), post.height()),
            "depth_diff",
        ));
    }
    let n = pre.values().len();
    let mut diffs = vec![0f32; n];
    let mut valid = vec![false; n];
    for i in 0..n {
        if pre.valid()[i] && post.valid()[i] {
            diffs[i] = (pre.values()[i] - post.values()[i]).abs();
            valid[i] = true;
        }
    }
    DepthDiffMap::from_parts(pre.width(), pre.height(), diffs, valid)
}

/// An automatically selected depth-change threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthThreshold {
    pub value: f64,
    /// Set when the histogram could not be split (all differences equal, or
    /// indistinguishable at histogram resolution). The strictly-greater
    /// comparison in [`acc_depth`] then yields 0.
    pub degenerate: bool,
    /// Histogram split bin (boundary after this bin), when one was selected.
    pub split_bin: Option<usize>,
}

/// Selects the change threshold on the histogram of all valid differences
/// over the whole image, binned uniformly over `[0, max_diff]`.
pub fn ght_threshold(diff: &DepthDiffMap, cfg: &GhtConfig) -> Result<DepthThreshold> {
    cfg.validate()?;
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    let mut count = 0usize;
    for (d, v) in diff.diffs().iter().zip(diff.valid()) {
        if *v {
            let d = *d as f64;
            min = min.min(d);
            max = max.max(d);
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::NoValidPixels("depth difference histogram".into()));
    }
    if min == max {
        return Ok(DepthThreshold {
            value: max,
            degenerate: true,
            split_bin: None,
        });
    }

    let n_bins = cfg.n_bins;
    let mut counts = vec![0u64; n_bins];
    let scale = n_bins as f64 / max;
    for (d, v) in diff.diffs().iter().zip(diff.valid()) {
        if *v {
            let bin = ((*d as f64 * scale) as usize).min(n_bins - 1);
            counts[bin] += 1;
        }
    }

    match ght_split(&counts, cfg) {
        Some(t) => Ok(DepthThreshold {
            value: (t + 1) as f64 * (max / n_bins as f64),
            degenerate: false,
            split_bin: Some(t),
        }),
        // Distinct values collapsed into one bin: unresolvable at histogram
        // resolution, treat like the all-equal case.
        None => Ok(DepthThreshold {
            value: max,
            degenerate: true,
            split_bin: None,
        }),
    }
}

/// Fraction of valid object pixels whose depth changed strictly more than
/// the threshold.
pub fn acc_depth(diff: &DepthDiffMap, object_mask: &BinaryMask, xi_depth: f64) -> Result<f64> {
    if diff.dims() != object_mask.dims() {
        return Err(Error::dims(
            format!("{}x{}", diff.width(), diff.height()),
            format!("{}x{}", object_mask.width(), object_mask.height()),
            "acc_depth",
        ));
    }
    if object_mask.is_empty() {
        return Err(Error::EmptyInput("object mask for acc_depth".into()));
    }
    let mut total = 0u64;
    let mut changed = 0u64;
    for y in 0..diff.height() {
        for x in 0..diff.width() {
            if object_mask.get(x, y) && diff.is_valid(x, y) {
                total += 1;
                if diff.diff(x, y) as f64 > xi_depth {
                    changed += 1;
                }
            }
        }
    }
    if total == 0 {
        return Err(Error::NoValidPixels("object pixels in depth diff".into()));
    }
    Ok(changed as f64 / total as f64)
}

/// Visualization mask of pixels whose change exceeds the threshold.
pub fn threshold_mask(diff: &DepthDiffMap, xi_depth: f64) -> Result<BinaryMask> {
    BinaryMask::from_fn(diff.width(), diff.height(), |x, y| {
        diff.is_valid(x, y) && diff.diff(x, y) as f64 > xi_depth
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn constant_depth(w: u32, h: u32, v: f32) -> DepthMap {
        DepthMap::new(w, h, vec![v; (w * h) as usize]).unwrap()
    }

    #[test]
    fn identical_maps_give_zero_diffs() {
        let a = constant_depth(4, 4, 5.0);
        let d = depth_diff(&a, &a).unwrap();
        assert!(d.diffs().iter().all(|&v| v == 0.0));
        assert!(d.valid().iter().all(|&v| v));
    }

    #[test]
    fn constant_shift_diffs_everywhere() {
        let pre = constant_depth(3, 3, 5.0);
        let post = constant_depth(3, 3, 3.0);
        let d = depth_diff(&pre, &post).unwrap();
        assert!(d.diffs().iter().all(|&v| v == 2.0));
    }

    #[test]
    fn invalid_pixel_in_either_input_is_invalid_in_diff() {
        let pre = constant_depth(2, 1, 5.0);
        let post = DepthMap::new(2, 1, vec![4.0, f32::NAN]).unwrap();
        let d = depth_diff(&pre, &post).unwrap();
        assert!(d.is_valid(0, 0));
        assert!(!d.is_valid(1, 0));
    }

    #[test]
    fn dimension_mismatch_is_error() {
        let a = constant_depth(2, 2, 1.0);
        let b = constant_depth(3, 2, 1.0);
        assert!(depth_diff(&a, &b).is_err());
    }

    #[test]
    fn bimodal_diffs_threshold_separates_modes() {
        // Half the image unchanged, half changed by 10.
        let n = 16u32;
        let mut diffs = vec![0f32; (n * n) as usize];
        for d in diffs.iter_mut().take((n * n) as usize / 2) {
            *d = 10.0;
        }
        let d = DepthDiffMap::from_parts(n, n, diffs, vec![true; (n * n) as usize]).unwrap();
        let t = ght_threshold(&d, &GhtConfig::default()).unwrap();
        assert!(!t.degenerate);
        assert!(t.value > 0.0 && t.value < 10.0, "threshold {}", t.value);
    }

    #[test]
    fn all_equal_diffs_are_degenerate() {
        let d = DepthDiffMap::from_parts(4, 4, vec![0.0; 16], vec![true; 16]).unwrap();
        let t = ght_threshold(&d, &GhtConfig::default()).unwrap();
        assert!(t.degenerate);
        assert_eq!(t.value, 0.0);

        let d2 = DepthDiffMap::from_parts(4, 4, vec![3.5; 16], vec![true; 16]).unwrap();
        let t2 = ght_threshold(&d2, &GhtConfig::default()).unwrap();
        assert!(t2.degenerate);
        assert_eq!(t2.value, 3.5);
    }

    #[test]
    fn degenerate_threshold_yields_zero_acc() {
        let d = DepthDiffMap::from_parts(4, 4, vec![0.0; 16], vec![true; 16]).unwrap();
        let t = ght_threshold(&d, &GhtConfig::default()).unwrap();
        let object = BinaryMask::from_fn(4, 4, |x, _| x < 2).unwrap();
        assert_eq!(acc_depth(&d, &object, t.value).unwrap(), 0.0);
    }

    #[test]
    fn acc_counts_only_object_pixels() {
        // 10x10 object in a 32x32 image; 60 of its 100 pixels changed.
        let w = 32u32;
        let object = BinaryMask::from_fn(w, w, |x, y| x < 10 && y < 10).unwrap();
        let mut diffs = vec![0f32; (w * w) as usize];
        let mut planted = 0;
        'outer: for y in 0..10u32 {
            for x in 0..10u32 {
                if planted == 60 {
                    break 'outer;
                }
                diffs[(y * w + x) as usize] = 3.0;
                planted += 1;
            }
        }
        let d = DepthDiffMap::from_parts(w, w, diffs, vec![true; (w * w) as usize]).unwrap();
        let t = ght_threshold(&d, &GhtConfig::default()).unwrap();
        assert!(t.value > 0.0 && t.value < 3.0);
        let acc = acc_depth(&d, &object, t.value).unwrap();
        assert_eq!(acc, 0.60);
    }

    #[test]
    fn acc_is_invariant_to_background_changes() {
        let w = 16u32;
        let object = BinaryMask::from_fn(w, w, |x, y| x < 4 && y < 4).unwrap();
        let mut diffs = vec![0f32; (w * w) as usize];
        for (i, d) in diffs.iter_mut().enumerate() {
            if i % 3 == 0 {
                *d = 5.0;
            }
        }
        let base = DepthDiffMap::from_parts(w, w, diffs.clone(), vec![true; (w * w) as usize])
            .unwrap();
        // Change background pixels only (outside the 4x4 object block).
        for y in 0..w {
            for x in 0..w {
                if !(x < 4 && y < 4) {
                    diffs[(y * w + x) as usize] = 1.0;
                }
            }
        }
        let shifted =
            DepthDiffMap::from_parts(w, w, diffs, vec![true; (w * w) as usize]).unwrap();
        let xi = 2.0;
        assert_eq!(
            acc_depth(&base, &object, xi).unwrap(),
            acc_depth(&shifted, &object, xi).unwrap()
        );
    }

    #[test]
    fn empty_object_mask_is_error() {
        let d = DepthDiffMap::from_parts(4, 4, vec![0.0; 16], vec![true; 16]).unwrap();
        let empty = BinaryMask::new(4, 4).unwrap();
        assert!(acc_depth(&d, &empty, 0.5).is_err());
    }

    #[test]
    fn object_with_no_valid_pixels_is_error() {
        let d = DepthDiffMap::from_parts(4, 4, vec![0.0; 16], vec![false; 16]).unwrap();
        let object = BinaryMask::from_fn(4, 4, |x, _| x == 0).unwrap();
        assert!(acc_depth(&d, &object, 0.5).is_err());
        assert!(ght_threshold(&d, &GhtConfig::default()).is_err());
    }

    #[test]
    fn acc_monotone_in_threshold() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w = 12u32;
        let diffs: Vec<f32> = (0..w * w).map(|_| rng.gen_range(0.0..4.0)).collect();
        let d = DepthDiffMap::from_parts(w, w, diffs, vec![true; (w * w) as usize]).unwrap();
        let object = BinaryMask::from_fn(w, w, |x, y| (x + y) % 2 == 0).unwrap();
        let mut last = 1.0f64;
        for xi in [0.0, 0.5, 1.0, 2.0, 3.0, 4.0] {
            let acc = acc_depth(&d, &object, xi).unwrap();
            assert!(acc <= last + 1e-15, "acc must not increase with threshold");
            last = acc;
        }
    }

    #[test]
    fn common_scale_factor_scales_threshold_and_preserves_acc() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let w = 24u32;
        let n = (w * w) as usize;
        let diffs: Vec<f32> = (0..n)
            .map(|_| {
                if rng.gen_bool(0.5) {
                    rng.gen_range(0.0..0.5)
                } else {
                    rng.gen_range(4.0..6.0)
                }
            })
            .collect();
        let object = BinaryMask::from_fn(w, w, |x, y| (4..16).contains(&x) && (4..16).contains(&y)).unwrap();
        let cfg = GhtConfig::default();

        let base = DepthDiffMap::from_parts(w, w, diffs.clone(), vec![true; n]).unwrap();
        let t_base = ght_threshold(&base, &cfg).unwrap();
        let acc_base = acc_depth(&base, &object, t_base.value).unwrap();

        let s = 3.5f32;
        let scaled_diffs: Vec<f32> = diffs.iter().map(|d| d * s).collect();
        let scaled = DepthDiffMap::from_parts(w, w, scaled_diffs, vec![true; n]).unwrap();
        let t_scaled = ght_threshold(&scaled, &cfg).unwrap();
        let acc_scaled = acc_depth(&scaled, &object, t_scaled.value).unwrap();

        assert_eq!(t_base.split_bin, t_scaled.split_bin, "binning is range-relative");
        assert!(
            (t_scaled.value - t_base.value * s as f64).abs() < 1e-6 * t_base.value.max(1.0) * s as f64,
            "threshold should scale with the inputs"
        );
        assert_eq!(acc_base, acc_scaled);
    }
}
