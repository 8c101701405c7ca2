//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line (visible with `cargo test --test acceptance -- --nocapture`).
//!
//! Expected values come from independent oracles computed inside this file
//! (exhaustive enumeration, exact rational arithmetic, a textbook
//! between-class-variance threshold) or from constructed fixtures with
//! analytically known outcomes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use splateval::ght::{ght_split, GhtConfig};
use splateval::mask_sim::match_masks;
use splateval::pipeline::{
    gen_fixture, run_eval, validate_manifest, EvalConfig, FixtureSpec, GaussianFixtureSpec,
    RemovalMode,
};
use splateval::raster::{BinaryMask, MaskSet};
use splateval::refine::{
    energy, refine, solve, GraphEdge, RefineConfig, RefinementGraph, RefinementStatus,
};
use splateval::scene::{load_ply, load_removal};
use splateval::semantic::{iou_drop, summarize_scene, SemanticViewRecord};

fn pass(criterion: u32, detail: &str) {
    println!("[criterion {criterion}] PASS - {detail}");
}

/// Criterion 1: the drop arithmetic and the composite table cell for the
/// strongest reported scene/object pair, exactly.
#[test]
fn criterion_1_iou_drop_arithmetic_and_formatting() {
    let drop = iou_drop(0.63, 0.01).expect("valid inputs");
    assert!((drop - 0.62).abs() < 1e-12, "drop {drop}");

    let records: Vec<SemanticViewRecord> = (0..7)
        .map(|i| SemanticViewRecord::new(format!("v{i}"), 0.63, 0.01, true, true).unwrap())
        .collect();
    let summary = summarize_scene(&records, &[0.5, 0.7, 0.9]).unwrap();
    assert!((summary.iou_drop - 0.62).abs() < 1e-12);
    let cell = summary.drop_pct_cell();
    assert_eq!(cell, "0.62 / 98.4");
    pass(1, &format!("drop {drop:.4}, cell `{cell}`"));
}

/// Exact rational total of a matching: sum of intersection/union fractions
/// in i128 arithmetic (denominators stay within 512^6).
fn exact_total(pairs: &[(usize, usize)], inter_union: &[(i128, i128)], m: usize) -> (i128, i128) {
    let mut num: i128 = 0;
    let mut den: i128 = 1;
    for &(i, j) in pairs {
        let (p, q) = inter_union[i * m + j];
        if q == 0 {
            continue; // empty-vs-empty masks never appear in these fixtures
        }
        num = num * q + p * den;
        den *= q;
    }
    (num, den)
}

fn frac_cmp(a: (i128, i128), b: (i128, i128)) -> std::cmp::Ordering {
    (a.0 * b.1).cmp(&(b.0 * a.1))
}

/// Criterion 2: on 200 randomized mask-set pairs (N, M <= 6, 16x16 grids)
/// the assignment total equals the exhaustive maximum over all injective
/// matchings, compared in exact rational arithmetic.
#[test]
fn criterion_2_assignment_matches_exhaustive_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xA55160);
    for trial in 0..200 {
        let n = rng.gen_range(1..=6);
        let m = rng.gen_range(1..=6);
        let mut make_set = |k: usize| -> MaskSet {
            MaskSet::new(
                (0..k)
                    .map(|_| {
                        let density = rng.gen_range(0.2..0.7);
                        BinaryMask::from_fn(16, 16, |_, _| rng.gen_bool(density)).unwrap()
                    })
                    .collect(),
            )
            .unwrap()
        };
        let a = make_set(n);
        let b = make_set(m);

        let mut inter_union = vec![(0i128, 0i128); n * m];
        for i in 0..n {
            for j in 0..m {
                let (ma, mb) = (a.get(i).unwrap(), b.get(j).unwrap());
                let inter = ma.intersection_count(mb).unwrap() as i128;
                let union = (ma.count_ones() + mb.count_ones()) as i128 - inter;
                inter_union[i * m + j] = (inter, union);
            }
        }

        // Exhaustive max over injective partial matchings, in rationals.
        fn search(
            i: usize,
            n: usize,
            m: usize,
            used: &mut Vec<bool>,
            chosen: &mut Vec<(usize, usize)>,
            inter_union: &[(i128, i128)],
            best: &mut (i128, i128),
        ) {
            if i == n {
                let total = exact_total(chosen, inter_union, m);
                if frac_cmp(total, *best) == std::cmp::Ordering::Greater {
                    *best = total;
                }
                return;
            }
            search(i + 1, n, m, used, chosen, inter_union, best);
            for j in 0..m {
                if !used[j] {
                    used[j] = true;
                    chosen.push((i, j));
                    search(i + 1, n, m, used, chosen, inter_union, best);
                    chosen.pop();
                    used[j] = false;
                }
            }
        }
        let mut best = (0i128, 1i128);
        search(
            0,
            n,
            m,
            &mut vec![false; m],
            &mut Vec::new(),
            &inter_union,
            &mut best,
        );

        let matching = match_masks(&a, &b).unwrap();
        let pairs: Vec<(usize, usize)> =
            matching.pairs.iter().map(|&(i, j, _)| (i, j)).collect();
        let got = exact_total(&pairs, &inter_union, m);
        assert_eq!(
            frac_cmp(got, best),
            std::cmp::Ordering::Equal,
            "trial {trial}: assignment total {got:?} != exhaustive max {best:?}"
        );
    }
    pass(2, "200 randomized pairs, exact rational equality with brute force");
}

/// Criterion 3: the default threshold configuration selects the identical
/// bin as an independently implemented textbook Otsu on 100 random
/// 256-bin histograms.
#[test]
fn criterion_3_default_threshold_equals_otsu() {
    /// Independent oracle: maximize the between-class variance
    /// w0*w1*(mu0-mu1)^2 in f64, scanning splits ascending.
    fn otsu_between_class(counts: &[u64]) -> Option<usize> {
        let total_w: f64 = counts.iter().map(|&c| c as f64).sum();
        let total_s: f64 = counts
            .iter()
            .enumerate()
            .map(|(i, &c)| c as f64 * i as f64)
            .sum();
        let (mut w0, mut s0) = (0.0, 0.0);
        let mut best: Option<(usize, f64)> = None;
        for (t, &c) in counts.iter().take(counts.len() - 1).enumerate() {
            w0 += c as f64;
            s0 += c as f64 * t as f64;
            let w1 = total_w - w0;
            if w0 <= 0.0 || w1 <= 0.0 {
                continue;
            }
            let d = s0 / w0 - (total_s - s0) / w1;
            let between = w0 * w1 * d * d;
            if best.is_none_or(|(_, b)| between > b) {
                best = Some((t, between));
            }
        }
        best.map(|(t, _)| t)
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0x615);
    let cfg = GhtConfig::default();
    for trial in 0..100 {
        let c1 = rng.gen_range(30.0..100.0);
        let c2 = rng.gen_range(150.0..230.0);
        let s1 = rng.gen_range(3.0..15.0);
        let s2 = rng.gen_range(3.0..15.0);
        let a1 = rng.gen_range(200.0..3000.0);
        let a2 = rng.gen_range(200.0..3000.0);
        let counts: Vec<u64> = (0..256)
            .map(|i| {
                let x = i as f64;
                let g1 = a1 * (-0.5 * ((x - c1) / s1).powi(2)).exp();
                let g2 = a2 * (-0.5 * ((x - c2) / s2).powi(2)).exp();
                (g1 + g2).round() as u64 + rng.gen_range(1..7)
            })
            .collect();
        let ours = ght_split(&counts, &cfg).expect("multi-bin histogram splits");
        let oracle = otsu_between_class(&counts).unwrap();
        assert_eq!(ours, oracle, "trial {trial}");
    }
    pass(3, "identical bin on 100 random histograms");
}

/// Criterion 4: planted residual fixtures evaluate to the constructed
/// changed-pixel fractions exactly.
#[test]
fn criterion_4_depth_metric_on_planted_fixtures() {
    for (rho, want_acc) in [(1.0, 0.0), (0.4, 0.6), (0.0, 1.0)] {
        let dir = tempfile::tempdir().unwrap();
        gen_fixture(
            &FixtureSpec {
                removal: RemovalMode::Residual { rho },
                ..FixtureSpec::default()
            },
            dir.path(),
        )
        .unwrap();
        let manifest_path = dir.path().join("manifest.json");
        let (manifest, _) = validate_manifest(&manifest_path).unwrap();
        let report = run_eval(&manifest, &manifest_path, &EvalConfig::default()).unwrap();
        let got = report.summary.mean_acc_depth.expect("depth metric computed");
        assert_eq!(got, want_acc, "rho {rho}");
        for row in &report.rows {
            assert_eq!(row.acc_depth, Some(want_acc));
        }
    }
    pass(4, "acc_depth exactly {0.0, 0.6, 1.0} for residual fractions {1.0, 0.4, 0.0}");
}

fn random_refinement_graph(rng: &mut ChaCha8Rng, max_n: usize) -> RefinementGraph {
    let n = rng.gen_range(2..=max_n);
    let mut set = std::collections::BTreeSet::new();
    let attempts = (3 * n).max(4);
    for _ in 0..attempts {
        let u = rng.gen_range(0..n);
        let v = rng.gen_range(0..n);
        if u != v {
            set.insert((u.min(v), u.max(v)));
        }
    }
    let edges = set
        .into_iter()
        .map(|(u, v)| GraphEdge {
            u,
            v,
            weight: rng.gen_range(0.05..2.0),
        })
        .collect();
    RefinementGraph {
        node_indices: (0..n).collect(),
        edges,
        unary_init: (0..n).map(|_| rng.gen_bool(0.4)).collect(),
    }
}

/// Criterion 5: (a) non-increasing energy trace on 100 random graphs of up
/// to 200 nodes, (b) 0.5-rounded solutions within 5% of the exhaustive
/// binary optimum on 50 instances of up to 16 nodes, (c) bitwise
/// determinism across 3 repeated runs.
#[test]
fn criterion_5_refinement_solver_contracts() {
    let cfg = RefineConfig::default();

    // (a) descent within 1e-9 relative tolerance.
    let mut rng = ChaCha8Rng::seed_from_u64(0x50A);
    for trial in 0..100 {
        let g = random_refinement_graph(&mut rng, 200);
        let out = solve(&g, &cfg).unwrap();
        for (k, w) in out.trace.windows(2).enumerate() {
            assert!(
                w[1] <= w[0] + 1e-9 * w[0].abs().max(1.0),
                "trial {trial}: trace rose at step {k}: {} -> {}",
                w[0],
                w[1]
            );
        }
    }

    // (b) rounded energy vs exhaustive enumeration.
    let mut rng = ChaCha8Rng::seed_from_u64(0x50B);
    let mut worst_gap = 0.0f64;
    for trial in 0..50 {
        let g = random_refinement_graph(&mut rng, 16);
        let out = solve(&g, &cfg).unwrap();
        let rounded: Vec<[f64; 2]> = out
            .probabilities
            .iter()
            .map(|&p| if p >= 0.5 { [0.0, 1.0] } else { [1.0, 0.0] })
            .collect();
        let e_rounded = energy(&g, &rounded, &cfg).unwrap();

        let n = g.node_count();
        let mut e_best = f64::INFINITY;
        for bits in 0u32..(1u32 << n) {
            let x: Vec<[f64; 2]> = (0..n)
                .map(|v| {
                    if bits >> v & 1 == 1 {
                        [0.0, 1.0]
                    } else {
                        [1.0, 0.0]
                    }
                })
                .collect();
            let e = energy(&g, &x, &cfg).unwrap();
            if e < e_best {
                e_best = e;
            }
        }
        let gap = e_rounded - e_best;
        worst_gap = worst_gap.max(gap / e_best.abs().max(1e-12));
        assert!(
            gap <= 0.05 * e_best.abs(),
            "trial {trial}: rounded {e_rounded} vs optimum {e_best}"
        );
    }

    // (c) bitwise determinism.
    let mut rng = ChaCha8Rng::seed_from_u64(0x50C);
    for _ in 0..5 {
        let g = random_refinement_graph(&mut rng, 60);
        let runs: Vec<Vec<u64>> = (0..3)
            .map(|_| {
                solve(&g, &cfg)
                    .unwrap()
                    .probabilities
                    .iter()
                    .map(|p| p.to_bits())
                    .collect()
            })
            .collect();
        assert_eq!(runs[0], runs[1]);
        assert_eq!(runs[1], runs[2]);
    }

    pass(
        5,
        &format!("descent on 100 graphs, enumeration gap (worst {worst_gap:.2e}) within 5% on 50, bitwise-stable"),
    );
}

/// Criterion 6: the dumbbell fixture (20% residual splats sharing the object
/// feature, distinct background features, K=10, delta=0.8) refines to 100%
/// of the residuals removed and 0% of the background.
#[test]
fn criterion_6_planted_residual_refinement() {
    let dir = tempfile::tempdir().unwrap();
    let expected = gen_fixture(
        &FixtureSpec {
            removal: RemovalMode::Residual { rho: 0.2 },
            gaussians: Some(GaussianFixtureSpec::default()),
            ..FixtureSpec::default()
        },
        dir.path(),
    )
    .unwrap();

    let cloud = load_ply(dir.path().join("scene.ply")).unwrap();
    let seed = load_removal(dir.path().join("removal.txt"), cloud.len()).unwrap();
    let cfg: RefineConfig =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("refine.json")).unwrap())
            .unwrap();
    assert_eq!(cfg.k_neighbors, 10);
    assert_eq!(cfg.delta, 0.8);

    let result = refine(&cloud, &seed, &cfg).unwrap();
    assert_ne!(result.status, RefinementStatus::GraphEmpty);
    assert!(result.refined_set.is_superset_of(&seed));

    let missed: Vec<usize> = expected
        .residual_splats
        .iter()
        .copied()
        .filter(|&i| !result.refined_set.contains(i))
        .collect();
    assert!(missed.is_empty(), "residual splats not removed: {missed:?}");

    let background: Vec<usize> = expected
        .bridge_splats
        .iter()
        .chain(&expected.far_splats)
        .copied()
        .filter(|&i| result.refined_set.contains(i))
        .collect();
    assert!(background.is_empty(), "background splats removed: {background:?}");

    pass(
        6,
        &format!(
            "{}/{} residuals removed, 0/{} background removed",
            expected.residual_splats.len(),
            expected.residual_splats.len(),
            expected.bridge_splats.len() + expected.far_splats.len()
        ),
    );
}

/// Criterion 7: end-to-end sanity on the no-op and perfect-removal fixtures.
#[test]
fn criterion_7_end_to_end_sanity() {
    let dir = tempfile::tempdir().unwrap();
    gen_fixture(
        &FixtureSpec {
            removal: RemovalMode::None,
            ..FixtureSpec::default()
        },
        dir.path(),
    )
    .unwrap();
    let manifest_path = dir.path().join("manifest.json");
    let (manifest, _) = validate_manifest(&manifest_path).unwrap();
    let noop = run_eval(&manifest, &manifest_path, &EvalConfig::default()).unwrap();
    let sem = noop.summary.semantic.as_ref().unwrap();
    assert_eq!(sem.iou_drop, 0.0);
    assert_eq!(noop.summary.mean_acc_depth, Some(0.0));
    assert_eq!(noop.summary.mean_sim_sam, Some(1.0));

    let dir2 = tempfile::tempdir().unwrap();
    gen_fixture(
        &FixtureSpec {
            removal: RemovalMode::Perfect,
            ..FixtureSpec::default()
        },
        dir2.path(),
    )
    .unwrap();
    let manifest_path2 = dir2.path().join("manifest.json");
    let (manifest2, _) = validate_manifest(&manifest_path2).unwrap();
    let perfect = run_eval(&manifest2, &manifest_path2, &EvalConfig::default()).unwrap();
    let sem2 = perfect.summary.semantic.as_ref().unwrap();
    assert_eq!(sem2.iou_drop, sem2.miou_pre, "drop equals iou_pre");
    assert_eq!(perfect.summary.mean_acc_depth, Some(1.0));
    let sim = perfect.summary.mean_sim_sam.unwrap();
    assert!(sim <= 0.2, "sim_sam {sim}");

    pass(
        7,
        &format!(
            "no-op (0, 0, 1) exact; perfect (drop {}, acc 1.0, sim {sim})",
            sem2.iou_drop
        ),
    );
}

/// Criterion 8 (conditional): per-cell reproduction of the published
/// evaluation requires the released per-view masks/depths, which cannot be
/// derived at desk scale (they come from large segmentation models). When
/// `SPLATEVAL_PAPER_DATA` points at that data (one directory per
/// scene-object-method with `manifest.json` + `expected.json`), every cell
/// must reproduce within +/-0.01; otherwise criteria 1-7 are the acceptance
/// and this prints SKIP.
#[test]
fn criterion_8_paper_table_reproduction_when_data_present() {
    let root = match std::env::var("SPLATEVAL_PAPER_DATA") {
        Ok(v) if !v.is_empty() => std::path::PathBuf::from(v),
        _ => {
            println!(
                "[criterion 8] SKIP - external evaluation data not present; criteria 1-7 constitute acceptance"
            );
            return;
        }
    };

    #[derive(serde::Deserialize)]
    struct Cell {
        iou_drop: f64,
        acc_depth: f64,
        sim_sam: f64,
    }

    let mut checked = 0;
    for entry in std::fs::read_dir(&root).expect("data root readable") {
        let dir = entry.expect("dir entry").path();
        if !dir.is_dir() {
            continue;
        }
        let manifest_path = dir.join("manifest.json");
        let expected_path = dir.join("expected.json");
        if !manifest_path.exists() || !expected_path.exists() {
            continue;
        }
        let (manifest, _) = validate_manifest(&manifest_path).unwrap();
        let report = run_eval(&manifest, &manifest_path, &EvalConfig::default()).unwrap();
        let expected: Cell =
            serde_json::from_str(&std::fs::read_to_string(&expected_path).unwrap()).unwrap();
        let sem = report.summary.semantic.as_ref().expect("semantic summary");
        assert!(
            (sem.iou_drop - expected.iou_drop).abs() <= 0.01,
            "{}: iou_drop {} vs {}",
            dir.display(),
            sem.iou_drop,
            expected.iou_drop
        );
        let acc = report.summary.mean_acc_depth.unwrap();
        assert!(
            (acc - expected.acc_depth).abs() <= 0.01,
            "{}: acc_depth {acc} vs {}",
            dir.display(),
            expected.acc_depth
        );
        let sim = report.summary.mean_sim_sam.unwrap();
        assert!(
            (sim - expected.sim_sam).abs() <= 0.01,
            "{}: sim_sam {sim} vs {}",
            dir.display(),
            expected.sim_sam
        );
        checked += 1;
    }
    assert!(checked > 0, "data root {} had no scene directories", root.display());
    pass(8, &format!("{checked} scene cells reproduced within 0.01"));
}
