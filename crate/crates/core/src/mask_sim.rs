//! Similarity between two "anything" mask sets of the same view.
//!
//! Both sets are first restricted to the masks overlapping the object, the
//! restricted sets are matched 1-to-1 to maximize total IoU, and the matched
//! overlap is normalized by the larger set size so that appearing/vanishing
//! masks lower the score. Low scores mean the scene content changed at the
//! object, i.e. a better removal.

use serde::{Deserialize, Serialize};

use crate::assignment::min_cost_assignment;
use crate::error::{Error, Result};
use crate::raster::{iou, BinaryMask, MaskSet};

/// Default minimum object overlap for a mask to participate.
pub const DEFAULT_OVERLAP_TAU: f64 = 0.1;

/// How mask-vs-object overlap is measured during filtering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterMode {
    /// IoU between the mask and the object mask.
    #[default]
    Iou,
    /// Intersection divided by the mask's own area. Lets small parts fully
    /// inside a large object pass the gate even when their IoU is tiny.
    IntersectionOverMaskArea,
}

/// A 1-to-1 matching between two (already filtered) mask sets.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MaskMatching {
    /// `(index_in_a, index_in_b, iou)` triples; every pair has `iou > 0` and
    /// each index appears at most once.
    pub pairs: Vec<(usize, usize, f64)>,
    pub n_filtered_a: usize,
    pub n_filtered_b: usize,
}

impl MaskMatching {
    pub fn total_iou(&self) -> f64 {
        // fold from +0.0: std's empty f64 sum is -0.0, which would print as
        // "-0" in reports.
        self.pairs.iter().fold(0.0, |acc, p| acc + p.2)
    }
}

/// Outcome of the mask-set similarity computation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimSamScore {
    /// Normalized matched overlap in [0,1]; lower means a better removal.
    pub value: f64,
    /// True when neither filtered set contains any mask; the 0.0 score then
    /// means "nothing overlapped the object", not "perfect removal".
    pub no_overlap: bool,
    pub matching: MaskMatching,
}

/// Keeps the masks whose overlap with the object is at least `tau`,
/// preserving the original relative order.
pub fn filter_object_masks(
    set: &MaskSet,
    object_mask: &BinaryMask,
    tau: f64,
    mode: FilterMode,
) -> Result<MaskSet> {
    MaskSet::new(
        filter_object_mask_indices(set, object_mask, tau, mode)?
            .into_iter()
            .map(|i| set.get(i).unwrap().clone())
            .collect(),
    )
}

fn filter_object_mask_indices(
    set: &MaskSet,
    object_mask: &BinaryMask,
    tau: f64,
    mode: FilterMode,
) -> Result<Vec<usize>> {
    if object_mask.is_empty() {
        return Ok(Vec::new());
    }
    let mut kept = Vec::new();
    for (i, mask) in set.iter().enumerate() {
        mask.check_same_dims(object_mask, "object-overlap filter")?;
        let overlap = match mode {
            FilterMode::Iou => iou(mask, object_mask)?,
            FilterMode::IntersectionOverMaskArea => {
                let area = mask.count_ones();
                if area == 0 {
                    0.0
                } else {
                    mask.intersection_count(object_mask)? as f64 / area as f64
                }
            }
        };
        if overlap >= tau {
            kept.push(i);
        }
    }
    Ok(kept)
}

/// 1-to-1 assignment between two mask sets maximizing the total IoU.
///
/// Pairs with zero IoU are dropped from the result (two masks only match if
/// they overlay). Among equal-total optima, ties are canonicalized toward the
/// lowest `(i, j)` lexicographic indices so reports are reproducible.
pub fn match_masks(a: &MaskSet, b: &MaskSet) -> Result<MaskMatching> {
    let (n, m) = (a.len(), b.len());
    if let (Some(da), Some(db)) = (a.dims(), b.dims()) {
        if da != db {
            return Err(Error::dims(
                format!("{}x{}", da.0, da.1),
                format!("{}x{}", db.0, db.1),
                "match_masks",
            ));
        }
    }
    if n == 0 || m == 0 {
        return Ok(MaskMatching {
            pairs: Vec::new(),
            n_filtered_a: n,
            n_filtered_b: m,
        });
    }

    let mut ious = vec![0.0f64; n * m];
    for i in 0..n {
        for j in 0..m {
            ious[i * m + j] = iou(a.get(i).unwrap(), b.get(j).unwrap())?;
        }
    }

    // Pad to square; dummy rows/columns cost 0, exactly like a zero-IoU pair,
    // so the maximum positive total is preserved.
    let dim = n.max(m);
    let mut cost = vec![0.0f64; dim * dim];
    for i in 0..n {
        for j in 0..m {
            cost[i * dim + j] = -ious[i * m + j];
        }
    }
    let assignment = min_cost_assignment(&cost, dim);

    let mut pairs: Vec<(usize, usize, f64)> = assignment
        .iter()
        .enumerate()
        .filter(|&(i, &j)| i < n && j < m && ious[i * m + j] > 0.0)
        .map(|(i, &j)| (i, j, ious[i * m + j]))
        .collect();
    canonicalize_ties(&mut pairs, &ious, m);
    pairs.sort_by_key(|&(i, j, _)| (i, j));

    Ok(MaskMatching {
        pairs,
        n_filtered_a: n,
        n_filtered_b: m,
    })
}

/// Swaps partner columns between pair couples whenever doing so keeps the
/// total IoU identical but lowers the lexicographic (i, j) order. Resolves
/// the ambiguity between equal-total optima (e.g. sets of identical masks).
fn canonicalize_ties(pairs: &mut [(usize, usize, f64)], ious: &[f64], m: usize) {
    // Sorted by row index; rows are unique, so p < q implies i_p < i_q.
    pairs.sort_by_key(|&(i, j, _)| (i, j));
    let mut changed = true;
    while changed {
        changed = false;
        for p in 0..pairs.len() {
            for q in (p + 1)..pairs.len() {
                let (i1, j1, v1) = pairs[p];
                let (i2, j2, v2) = pairs[q];
                if j2 >= j1 {
                    continue;
                }
                let cross1 = ious[i1 * m + j2];
                let cross2 = ious[i2 * m + j1];
                if cross1 > 0.0 && cross2 > 0.0 && cross1 + cross2 == v1 + v2 {
                    // The lower row takes the lower column.
                    pairs[p] = (i1, j2, cross1);
                    pairs[q] = (i2, j1, cross2);
                    changed = true;
                }
            }
        }
    }
}

/// Configuration for the mask-set similarity.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimSamConfig {
    #[serde(default = "default_tau")]
    pub overlap_tau: f64,
    #[serde(default)]
    pub filter_mode: FilterMode,
}

fn default_tau() -> f64 {
    DEFAULT_OVERLAP_TAU
}

impl Default for SimSamConfig {
    fn default() -> Self {
        SimSamConfig {
            overlap_tau: DEFAULT_OVERLAP_TAU,
            filter_mode: FilterMode::Iou,
        }
    }
}

/// Normalized optimal-assignment overlap between two mask sets, restricted to
/// masks overlapping the object. Lower = better removal.
pub fn sim_sam(
    a_raw: &MaskSet,
    b_raw: &MaskSet,
    object_mask: &BinaryMask,
    config: &SimSamConfig,
) -> Result<SimSamScore> {
    let kept_a = filter_object_mask_indices(a_raw, object_mask, config.overlap_tau, config.filter_mode)?;
    let kept_b = filter_object_mask_indices(b_raw, object_mask, config.overlap_tau, config.filter_mode)?;
    let a = MaskSet::new(kept_a.iter().map(|&i| a_raw.get(i).unwrap().clone()).collect())?;
    let b = MaskSet::new(kept_b.iter().map(|&i| b_raw.get(i).unwrap().clone()).collect())?;

    let denom = a.len().max(b.len());
    if denom == 0 {
        return Ok(SimSamScore {
            value: 0.0,
            no_overlap: true,
            matching: MaskMatching {
                pairs: Vec::new(),
                n_filtered_a: 0,
                n_filtered_b: 0,
            },
        });
    }
    let matching = match_masks(&a, &b)?;
    let value = matching.total_iou() / denom as f64;
    Ok(SimSamScore {
        value,
        no_overlap: false,
        matching,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(w: u32, h: u32, coords: &[(u32, u32)]) -> BinaryMask {
        let mut m = BinaryMask::new(w, h).unwrap();
        for &(x, y) in coords {
            m.set(x, y, true);
        }
        m
    }

    fn rect(w: u32, h: u32, x0: u32, y0: u32, rw: u32, rh: u32) -> BinaryMask {
        BinaryMask::from_fn(w, h, |x, y| x >= x0 && x < x0 + rw && y >= y0 && y < y0 + rh)
            .unwrap()
    }

    #[test]
    fn empty_object_filters_everything() {
        let set = MaskSet::new(vec![rect(8, 8, 0, 0, 4, 4)]).unwrap();
        let object = BinaryMask::new(8, 8).unwrap();
        let f = filter_object_masks(&set, &object, 0.1, FilterMode::Iou).unwrap();
        assert_eq!(f.len(), 0);
    }

    #[test]
    fn object_mask_itself_is_retained() {
        let object = rect(8, 8, 1, 1, 4, 4);
        let set = MaskSet::new(vec![object.clone()]).unwrap();
        let f = filter_object_masks(&set, &object, 0.1, FilterMode::Iou).unwrap();
        assert_eq!(f.len(), 1);
    }

    #[test]
    fn one_percent_overlap_is_filtered_out() {
        // 10x10 object; candidate covers exactly one of its pixels.
        let object = rect(16, 16, 0, 0, 10, 10);
        let candidate = mask(16, 16, &[(0, 0)]);
        let i = iou(&candidate, &object).unwrap();
        assert!((i - 0.01).abs() < 1e-12);
        let set = MaskSet::new(vec![candidate]).unwrap();
        let f = filter_object_masks(&set, &object, 0.1, FilterMode::Iou).unwrap();
        assert_eq!(f.len(), 0);
    }

    #[test]
    fn intersection_over_area_mode_keeps_contained_parts() {
        // Small part fully inside a large object: IoU 0.04 but 100% contained.
        let object = rect(16, 16, 0, 0, 10, 10);
        let part = rect(16, 16, 2, 2, 2, 2);
        let set = MaskSet::new(vec![part]).unwrap();
        let by_iou = filter_object_masks(&set, &object, 0.1, FilterMode::Iou).unwrap();
        assert_eq!(by_iou.len(), 0);
        let by_area =
            filter_object_masks(&set, &object, 0.1, FilterMode::IntersectionOverMaskArea).unwrap();
        assert_eq!(by_area.len(), 1);
    }

    #[test]
    fn identity_sets_match_one_to_one() {
        let masks = vec![
            rect(8, 8, 0, 0, 2, 2),
            rect(8, 8, 4, 0, 2, 2),
            rect(8, 8, 0, 4, 2, 2),
        ];
        let a = MaskSet::new(masks.clone()).unwrap();
        let b = MaskSet::new(masks).unwrap();
        let m = match_masks(&a, &b).unwrap();
        assert_eq!(m.pairs.len(), 3);
        for (k, &(i, j, v)) in m.pairs.iter().enumerate() {
            assert_eq!((i, j), (k, k), "identity matching expected");
            assert_eq!(v, 1.0);
        }
    }

    #[test]
    fn single_mask_picks_the_better_partner() {
        // a overlaps b0 weakly and b1 strongly; the optimum takes b1.
        let a0 = rect(10, 10, 0, 0, 2, 5); // 10 px column
        let b0 = rect(10, 10, 0, 0, 2, 2); // iou 4/10... adjust to get 0.3/0.7-ish
        let b1 = rect(10, 10, 0, 1, 2, 4); // overlap 8, union 10+8-8=10 -> 0.8
        let a = MaskSet::new(vec![a0.clone()]).unwrap();
        let b = MaskSet::new(vec![b0.clone(), b1.clone()]).unwrap();
        let i0 = iou(&a0, &b0).unwrap();
        let i1 = iou(&a0, &b1).unwrap();
        assert!(i1 > i0);
        let m = match_masks(&a, &b).unwrap();
        assert_eq!(m.pairs.len(), 1);
        assert_eq!((m.pairs[0].0, m.pairs[0].1), (0, 1));
        assert_eq!(m.pairs[0].2, i1);
    }

    #[test]
    fn zero_iou_pairs_are_dropped() {
        let a = MaskSet::new(vec![rect(8, 8, 0, 0, 2, 2), rect(8, 8, 6, 6, 2, 2)]).unwrap();
        let b = MaskSet::new(vec![rect(8, 8, 0, 0, 2, 2)]).unwrap();
        let m = match_masks(&a, &b).unwrap();
        assert_eq!(m.pairs.len(), 1);
        assert_eq!((m.pairs[0].0, m.pairs[0].1), (0, 0));
        assert!(m.pairs.iter().all(|p| p.2 > 0.0));
    }

    /// Exhaustive maximum total IoU over all injective partial matchings.
    fn brute_force_total(ious: &[f64], n: usize, m: usize) -> f64 {
        fn rec(ious: &[f64], n: usize, m: usize, i: usize, used: &mut [bool], acc: f64) -> f64 {
            if i == n {
                return acc;
            }
            // Leave mask i unmatched...
            let mut best = rec(ious, n, m, i + 1, used, acc);
            // ...or match it to any free j.
            for j in 0..m {
                if !used[j] {
                    used[j] = true;
                    best = best.max(rec(ious, n, m, i + 1, used, acc + ious[i * m + j]));
                    used[j] = false;
                }
            }
            best
        }
        rec(ious, n, m, 0, &mut vec![false; m], 0.0)
    }

    #[test]
    fn matching_total_equals_brute_force_on_random_sets() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        for _ in 0..60 {
            let n = rng.gen_range(1..=4);
            let m = rng.gen_range(1..=4);
            let gen_set = |rng: &mut rand_chacha::ChaCha8Rng, k: usize| {
                MaskSet::new(
                    (0..k)
                        .map(|_| {
                            BinaryMask::from_fn(6, 6, |_, _| rng.gen_bool(0.4)).unwrap()
                        })
                        .collect(),
                )
                .unwrap()
            };
            let a = gen_set(&mut rng, n);
            let b = gen_set(&mut rng, m);
            let mut ious = vec![0.0; n * m];
            for i in 0..n {
                for j in 0..m {
                    ious[i * m + j] = iou(a.get(i).unwrap(), b.get(j).unwrap()).unwrap();
                }
            }
            let matching = match_masks(&a, &b).unwrap();
            let best = brute_force_total(&ious, n, m);
            assert!(
                (matching.total_iou() - best).abs() < 1e-12,
                "hungarian {} vs brute force {}",
                matching.total_iou(),
                best
            );
        }
    }

    #[test]
    fn sim_sam_identical_sets_is_one() {
        let object = rect(8, 8, 2, 2, 4, 4);
        let masks = vec![object.clone(), rect(8, 8, 2, 2, 5, 5)];
        let a = MaskSet::new(masks.clone()).unwrap();
        let b = MaskSet::new(masks).unwrap();
        let s = sim_sam(&a, &b, &object, &SimSamConfig::default()).unwrap();
        assert_eq!(s.value, 1.0);
        assert!(!s.no_overlap);
    }

    #[test]
    fn sim_sam_disjoint_filtered_sets_is_zero() {
        let object = rect(8, 8, 0, 0, 4, 4);
        let a = MaskSet::new(vec![rect(8, 8, 0, 0, 4, 4)]).unwrap();
        let b = MaskSet::new(vec![rect(8, 8, 1, 1, 4, 4)]).unwrap();
        // Both pass the 0.1 filter but are made disjoint by shifting… they are
        // not disjoint; instead check value < 1. For the true disjoint case,
        // use masks that overlap the object but not each other.
        let a2 = MaskSet::new(vec![rect(8, 8, 0, 0, 4, 2)]).unwrap();
        let b2 = MaskSet::new(vec![rect(8, 8, 0, 2, 4, 2)]).unwrap();
        let s2 = sim_sam(&a2, &b2, &object, &SimSamConfig::default()).unwrap();
        assert_eq!(s2.value, 0.0);
        assert!(!s2.no_overlap);
        let s = sim_sam(&a, &b, &object, &SimSamConfig::default()).unwrap();
        assert!(s.value > 0.0 && s.value < 1.0);
    }

    #[test]
    fn sim_sam_no_overlapping_masks_flags_no_overlap() {
        let object = rect(8, 8, 0, 0, 2, 2);
        let a = MaskSet::new(vec![rect(8, 8, 6, 6, 2, 2)]).unwrap();
        let b = MaskSet::new(vec![rect(8, 8, 4, 4, 2, 2)]).unwrap();
        let s = sim_sam(&a, &b, &object, &SimSamConfig::default()).unwrap();
        assert_eq!(s.value, 0.0);
        assert!(s.no_overlap);
    }

    #[test]
    fn sim_sam_normalizes_by_larger_filtered_set() {
        // Filtered N = 2, M = 3 with optimal matching IoUs {0.8, 0.5}:
        // the score is (0.8 + 0.5) / 3.
        let object = rect(20, 20, 0, 0, 10, 10);
        let a0 = rect(20, 20, 0, 0, 10, 1); // 10-px strip
        let a1 = rect(20, 20, 0, 2, 5, 1); // 5-px strip
        let b0 = rect(20, 20, 0, 0, 8, 1); // inside a0: 8/10 = 0.8
        let b1 = rect(20, 20, 0, 2, 10, 1); // contains a1: 5/10 = 0.5
        let b2 = rect(20, 20, 0, 4, 3, 1); // overlaps the object, matches nothing
        assert_eq!(iou(&a0, &b0).unwrap(), 0.8);
        assert_eq!(iou(&a1, &b1).unwrap(), 0.5);
        let a = MaskSet::new(vec![a0, a1]).unwrap();
        let b = MaskSet::new(vec![b0, b1, b2]).unwrap();
        let cfg = SimSamConfig {
            // The strips overlap the big object only partially; gate on
            // containment so all of them participate.
            filter_mode: FilterMode::IntersectionOverMaskArea,
            ..SimSamConfig::default()
        };
        let s = sim_sam(&a, &b, &object, &cfg).unwrap();
        assert_eq!(s.matching.n_filtered_a, 2);
        assert_eq!(s.matching.n_filtered_b, 3);
        assert_eq!(
            s.matching.pairs,
            vec![(0, 0, 0.8), (1, 1, 0.5)],
            "optimal matching"
        );
        assert!((s.value - (0.8 + 0.5) / 3.0).abs() < 1e-12);
    }

    #[test]
    fn sim_sam_symmetric_in_its_sets() {
        let object = rect(10, 10, 1, 1, 6, 6);
        let a = MaskSet::new(vec![rect(10, 10, 1, 1, 6, 6), rect(10, 10, 1, 1, 3, 6)]).unwrap();
        let b = MaskSet::new(vec![rect(10, 10, 2, 1, 6, 6)]).unwrap();
        let cfg = SimSamConfig::default();
        let ab = sim_sam(&a, &b, &object, &cfg).unwrap();
        let ba = sim_sam(&b, &a, &object, &cfg).unwrap();
        assert!((ab.value - ba.value).abs() < 1e-12);
    }

    #[test]
    fn adding_unmatched_mask_to_larger_set_never_raises_score() {
        let object = rect(10, 10, 0, 0, 6, 6);
        let a = MaskSet::new(vec![rect(10, 10, 0, 0, 6, 6)]).unwrap();
        let b1 = MaskSet::new(vec![rect(10, 10, 0, 0, 6, 6)]).unwrap();
        let b2 = MaskSet::new(vec![rect(10, 10, 0, 0, 6, 6), rect(10, 10, 0, 0, 6, 3)]).unwrap();
        let cfg = SimSamConfig::default();
        let s1 = sim_sam(&a, &b1, &object, &cfg).unwrap();
        let s2 = sim_sam(&a, &b2, &object, &cfg).unwrap();
        assert!(s2.value <= s1.value);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let a = MaskSet::new(vec![rect(8, 8, 0, 0, 2, 2)]).unwrap();
        let b = MaskSet::new(vec![rect(9, 8, 0, 0, 2, 2)]).unwrap();
        assert!(match_masks(&a, &b).is_err());
    }
}
