//! Semantic-recognition metrics: per-view IoU before/after removal, the IoU
//! drop, recognition-accuracy rates at IoU thresholds, and scene aggregates.
//!
//! The drop is `iou_pre - iou_post`; higher means the segmenter lost the
//! object, i.e. a better removal. When the segmenter could not find the
//! object even before removal the drop is bounded by that low `iou_pre` and
//! says nothing — the summary surfaces this as a low-confidence flag.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// When the mean pre-removal IoU is below this, the drop carries no signal.
pub const LOW_CONFIDENCE_MIOU_PRE: f64 = 0.2;

/// Default recognition thresholds reported by scene summaries.
pub const DEFAULT_THRESHOLDS: [f64; 3] = [0.5, 0.7, 0.9];

/// Per-view semantic segmentation outcome.
///
/// An undetected object yields no mask, so the corresponding IoU is 0 by
/// convention; the constructor enforces it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SemanticViewRecord {
    pub view_id: String,
    pub iou_pre: f64,
    pub iou_post: f64,
    pub detected_pre: bool,
    pub detected_post: bool,
}

impl SemanticViewRecord {
    pub fn new(
        view_id: impl Into<String>,
        iou_pre: f64,
        iou_post: f64,
        detected_pre: bool,
        detected_post: bool,
    ) -> Result<Self> {
        check_ratio(iou_pre, "iou_pre")?;
        check_ratio(iou_post, "iou_post")?;
        if !detected_pre && iou_pre != 0.0 {
            return Err(Error::InvalidInput(
                "undetected pre-removal view must have iou_pre = 0".into(),
            ));
        }
        if !detected_post && iou_post != 0.0 {
            return Err(Error::InvalidInput(
                "undetected post-removal view must have iou_post = 0".into(),
            ));
        }
        Ok(SemanticViewRecord {
            view_id: view_id.into(),
            iou_pre,
            iou_post,
            detected_pre,
            detected_post,
        })
    }

    /// Record for a view where the segmenter produced no post-removal mask.
    pub fn undetected_post(view_id: impl Into<String>, iou_pre: f64) -> Result<Self> {
        Self::new(view_id, iou_pre, 0.0, true, false)
    }
}

fn check_ratio(v: f64, name: &str) -> Result<()> {
    if !(0.0..=1.0).contains(&v) || v.is_nan() {
        return Err(Error::InvalidInput(format!(
            "{name} must lie in [0,1], got {v}"
        )));
    }
    Ok(())
}

/// Scene-level aggregate of the semantic metrics.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SemanticSceneSummary {
    pub miou_pre: f64,
    pub miou_post: f64,
    pub iou_drop: f64,
    /// `100 * iou_drop / miou_pre`; `None` when `miou_pre` is 0.
    pub pct_reduction: Option<f64>,
    /// Recognition-failure rate per threshold, sorted by threshold.
    pub acc_seg_at: Vec<(f64, f64)>,
    /// True when `miou_pre` is too low for the drop to be meaningful.
    pub low_confidence: bool,
}

impl SemanticSceneSummary {
    /// Renders the `drop / pct` composite cell, e.g. `0.62 / 98.4`.
    pub fn drop_pct_cell(&self) -> String {
        format_drop_pct(self.iou_drop, self.pct_reduction)
    }
}

/// Formats the composite drop cell: drop with 2 decimals, percentage with 3
/// significant digits (`98.4`, `100`, `3.50`), `n/a` when undefined.
pub fn format_drop_pct(drop: f64, pct: Option<f64>) -> String {
    match pct {
        Some(p) => format!("{:.2} / {}", drop, format_sig3(p)),
        None => format!("{drop:.2} / n/a"),
    }
}

fn format_sig3(v: f64) -> String {
    if v == 0.0 {
        return "0.00".to_string();
    }
    let magnitude = v.abs().log10().floor() as i32;
    let decimals = (2 - magnitude).max(0) as usize;
    format!("{v:.decimals$}")
}

/// IoU drop: `iou_pre - iou_post`, in [-1, 1]. Higher is a better removal.
pub fn iou_drop(iou_pre: f64, iou_post: f64) -> Result<f64> {
    check_ratio(iou_pre, "iou_pre")?;
    check_ratio(iou_post, "iou_post")?;
    Ok(iou_pre - iou_post)
}

/// Fraction of views in which the object is no longer recognized, i.e. with
/// `iou_post` strictly below the threshold.
pub fn acc_seg(records: &[SemanticViewRecord], threshold: f64) -> Result<f64> {
    check_records_and_threshold(records, threshold)?;
    let below = records.iter().filter(|r| r.iou_post < threshold).count();
    Ok(below as f64 / records.len() as f64)
}

/// Fraction of views in which the object is still segmented, i.e. with
/// `iou_post` strictly above the threshold. Reported as a percentage in
/// table output.
pub fn acc_post_ratio(records: &[SemanticViewRecord], threshold: f64) -> Result<f64> {
    check_records_and_threshold(records, threshold)?;
    let above = records.iter().filter(|r| r.iou_post > threshold).count();
    Ok(above as f64 / records.len() as f64)
}

fn check_records_and_threshold(records: &[SemanticViewRecord], threshold: f64) -> Result<()> {
    if records.is_empty() {
        return Err(Error::EmptyInput("semantic view records".into()));
    }
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "threshold must lie in (0,1], got {threshold}"
        )));
    }
    Ok(())
}

/// Aggregates per-view records into a scene summary.
///
/// Means are unweighted arithmetic means over the given records; callers
/// exclude skipped views before aggregation.
pub fn summarize_scene(
    records: &[SemanticViewRecord],
    thresholds: &[f64],
) -> Result<SemanticSceneSummary> {
    if records.is_empty() {
        return Err(Error::EmptyInput("semantic view records".into()));
    }
    let n = records.len() as f64;
    let miou_pre = records.iter().map(|r| r.iou_pre).sum::<f64>() / n;
    let miou_post = records.iter().map(|r| r.iou_post).sum::<f64>() / n;
    let drop = miou_pre - miou_post;
    let pct_reduction = if miou_pre > 0.0 {
        Some(100.0 * drop / miou_pre)
    } else {
        None
    };
    let mut acc_seg_at = Vec::with_capacity(thresholds.len());
    for &t in thresholds {
        acc_seg_at.push((t, acc_seg(records, t)?));
    }
    acc_seg_at.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(SemanticSceneSummary {
        miou_pre,
        miou_post,
        iou_drop: drop,
        pct_reduction,
        acc_seg_at,
        low_confidence: miou_pre < LOW_CONFIDENCE_MIOU_PRE,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(pre: f64, post: f64) -> SemanticViewRecord {
        SemanticViewRecord::new("v", pre, post, pre > 0.0, post > 0.0).unwrap()
    }

    #[test]
    fn drop_matches_reported_scene_value() {
        // Counter / baking tray with the strongest method: 0.63 pre, 0.01 post.
        assert!((iou_drop(0.63, 0.01).unwrap() - 0.62).abs() < 1e-12);
    }

    #[test]
    fn drop_of_identical_ious_is_zero() {
        for x in [0.0, 0.25, 1.0] {
            assert_eq!(iou_drop(x, x).unwrap(), 0.0);
        }
    }

    #[test]
    fn drop_boundary_is_minus_one() {
        assert_eq!(iou_drop(0.0, 1.0).unwrap(), -1.0);
    }

    #[test]
    fn drop_rejects_out_of_range() {
        assert!(iou_drop(1.2, 0.0).is_err());
        assert!(iou_drop(0.5, -0.1).is_err());
    }

    #[test]
    fn acc_seg_all_zero_post_is_one() {
        let records = vec![rec(0.9, 0.0), rec(0.7, 0.0), rec(0.2, 0.0)];
        for t in [0.1, 0.5, 1.0] {
            assert_eq!(acc_seg(&records, t).unwrap(), 1.0);
        }
    }

    #[test]
    fn acc_seg_counts_strictly_below() {
        let records = vec![rec(1.0, 0.4), rec(1.0, 0.6), rec(1.0, 0.8)];
        assert!((acc_seg(&records, 0.5).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        // Threshold exactly at a value: strict comparison excludes it.
        assert!((acc_seg(&records, 0.6).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn acc_seg_empty_records_is_error() {
        assert!(acc_seg(&[], 0.5).is_err());
    }

    #[test]
    fn acc_post_ratio_counts_strictly_above() {
        let records = vec![rec(1.0, 0.6), rec(1.0, 0.6), rec(1.0, 0.2)];
        assert!((acc_post_ratio(&records, 0.5).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        let all_zero = vec![rec(1.0, 0.0), rec(0.5, 0.0)];
        assert_eq!(acc_post_ratio(&all_zero, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn summary_reproduces_paper_style_cell() {
        let records = vec![rec(0.63, 0.01); 4];
        let s = summarize_scene(&records, &DEFAULT_THRESHOLDS).unwrap();
        assert!((s.miou_pre - 0.63).abs() < 1e-12);
        assert!((s.miou_post - 0.01).abs() < 1e-12);
        assert!((s.iou_drop - 0.62).abs() < 1e-12);
        assert_eq!(s.drop_pct_cell(), "0.62 / 98.4");
        assert!(!s.low_confidence);
    }

    #[test]
    fn summary_single_noop_view() {
        let s = summarize_scene(&[rec(0.5, 0.5)], &DEFAULT_THRESHOLDS).unwrap();
        assert_eq!(s.iou_drop, 0.0);
        assert_eq!(s.pct_reduction, Some(0.0));
        assert_eq!(s.drop_pct_cell(), "0.00 / 0.00");
    }

    #[test]
    fn summary_means_are_arithmetic() {
        let s = summarize_scene(&[rec(0.8, 0.2), rec(0.6, 0.0)], &DEFAULT_THRESHOLDS).unwrap();
        assert!((s.miou_pre - 0.7).abs() < 1e-12);
        assert!((s.miou_post - 0.1).abs() < 1e-12);
        assert!((s.iou_drop - 0.6).abs() < 1e-12);
        let pct = s.pct_reduction.unwrap();
        assert!((pct - 600.0 / 7.0).abs() < 1e-9, "pct = {pct}");
    }

    #[test]
    fn summary_with_zero_pre_has_undefined_pct_and_low_confidence() {
        let s = summarize_scene(&[rec(0.0, 0.0)], &DEFAULT_THRESHOLDS).unwrap();
        assert_eq!(s.pct_reduction, None);
        assert!(s.low_confidence);
        assert!(s.drop_pct_cell().ends_with("n/a"));
    }

    #[test]
    fn sig3_formatting_matches_table_style() {
        assert_eq!(format_sig3(98.412698), "98.4");
        assert_eq!(format_sig3(100.0), "100");
        assert_eq!(format_sig3(3.5), "3.50");
        assert_eq!(format_sig3(0.0), "0.00");
        assert_eq!(format_sig3(13.51), "13.5");
    }

    #[test]
    fn undetected_record_must_have_zero_iou() {
        assert!(SemanticViewRecord::new("v", 0.3, 0.0, false, false).is_err());
        assert!(SemanticViewRecord::new("v", 0.0, 0.2, true, false).is_err());
        let r = SemanticViewRecord::undetected_post("v", 0.8).unwrap();
        assert_eq!(r.iou_post, 0.0);
        assert!(!r.detected_post);
    }

    proptest! {
        #[test]
        fn prop_drop_bounded(pre in 0.0..=1.0f64, post in 0.0..=1.0f64) {
            let d = iou_drop(pre, post).unwrap();
            prop_assert!((-1.0..=1.0).contains(&d));
        }

        #[test]
        fn prop_acc_seg_monotone_in_threshold(
            posts in proptest::collection::vec(0.0..=1.0f64, 1..20),
            t1 in 0.01..=1.0f64,
            t2 in 0.01..=1.0f64,
        ) {
            let records: Vec<_> = posts.iter().map(|&p| rec(1.0, p)).collect();
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            prop_assert!(acc_seg(&records, lo).unwrap() <= acc_seg(&records, hi).unwrap());
        }

        #[test]
        fn prop_acc_partition_without_exact_ties(
            posts in proptest::collection::vec(0.0..=1.0f64, 1..20),
            t in 0.01..=0.99f64,
        ) {
            // With no iou_post exactly equal to the threshold, the two rates
            // partition the views.
            let records: Vec<_> = posts
                .iter()
                .map(|&p| rec(1.0, p))
                .filter(|r| r.iou_post != t)
                .collect();
            prop_assume!(!records.is_empty());
            let sum = acc_seg(&records, t).unwrap() + acc_post_ratio(&records, t).unwrap();
            prop_assert!((sum - 1.0).abs() < 1e-12);
        }

        #[test]
        fn prop_summary_permutation_invariant(
            pairs in proptest::collection::vec((0.0..=1.0f64, 0.0..=1.0f64), 1..12),
            seed in any::<u64>(),
        ) {
            let records: Vec<_> = pairs.iter().map(|&(a, b)| rec(a, b)).collect();
            let mut shuffled = records.clone();
            // Cheap deterministic shuffle.
            let mut s = seed;
            for i in (1..shuffled.len()).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                shuffled.swap(i, (s % (i as u64 + 1)) as usize);
            }
            let a = summarize_scene(&records, &DEFAULT_THRESHOLDS).unwrap();
            let b = summarize_scene(&shuffled, &DEFAULT_THRESHOLDS).unwrap();
            prop_assert!((a.miou_pre - b.miou_pre).abs() < 1e-12);
            prop_assert!((a.miou_post - b.miou_post).abs() < 1e-12);
            prop_assert_eq!(a.acc_seg_at, b.acc_seg_at);
        }
    }
}
