//! Metric results checked against brute-force oracles: plain counting for
//! accuracy and MSE, exhaustive nearest-cell search for the similarity
//! score. The oracles share no code with the BFS distance transform used
//! by the library.

use occlugrid_core::grid::{GridSpec, MaskOgm, Ogm};
use occlugrid_core::metrics::{
    aggregate, class_counts, image_similarity, threshold_occupied, Support,
};
use occlugrid_core::rng::{scene_rng, uniform, uniform_index, SceneRng};

#[derive(Default, PartialEq, Debug)]
struct Counted {
    count: u64,
    correct: u64,
    sq: f64,
}

/// Row-major counting pass, one bucket per class.
fn oracle_counts(pred: &Ogm, gt: &Ogm, mask: &MaskOgm, support: Support) -> (Counted, Counted) {
    let mut occ = Counted::default();
    let mut free = Counted::default();
    for i in 0..gt.cells.len() {
        if support == Support::MaskedOnly && mask.cells[i] != 1 {
            continue;
        }
        let (p, g) = (pred.cells[i], gt.cells[i]);
        let bucket = if g == 1.0 { &mut occ } else { &mut free };
        bucket.count += 1;
        bucket.correct += (threshold_occupied(p) == (g == 1.0)) as u64;
        bucket.sq += (p - g) * (p - g);
    }
    (occ, free)
}

/// Cells of one class as coordinate pairs, restricted to the support.
fn class_cells<F: Fn(usize) -> bool>(
    h: usize,
    w: usize,
    mask: &MaskOgm,
    support: Support,
    member: F,
) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            let in_support = support == Support::AllCells || mask.cells[i] == 1;
            if in_support && member(i) {
                out.push((r, c));
            }
        }
    }
    out
}

/// Symmetric mean nearest-cell distance by exhaustive pairwise search.
fn oracle_similarity(
    h: usize,
    w: usize,
    a: &[(usize, usize)],
    b: &[(usize, usize)],
) -> Option<f64> {
    if a.is_empty() && b.is_empty() {
        return None;
    }
    if a.is_empty() || b.is_empty() {
        return Some(2.0 * (h + w) as f64);
    }
    let dir = |from: &[(usize, usize)], to: &[(usize, usize)]| {
        let mut sum = 0.0;
        for &(r, c) in from {
            let d = to.iter().map(|&(rr, cc)| rr.abs_diff(r) + cc.abs_diff(c)).min().unwrap();
            sum += d as f64;
        }
        sum / from.len() as f64
    };
    Some(dir(a, b) + dir(b, a))
}

fn oracle_is(pred: &Ogm, gt: &Ogm, mask: &MaskOgm, support: Support) -> (Option<f64>, Option<f64>) {
    let (h, w) = (gt.height, gt.width);
    let p_occ = class_cells(h, w, mask, support, |i| threshold_occupied(pred.cells[i]));
    let g_occ = class_cells(h, w, mask, support, |i| gt.cells[i] == 1.0);
    let p_free = class_cells(h, w, mask, support, |i| !threshold_occupied(pred.cells[i]));
    let g_free = class_cells(h, w, mask, support, |i| gt.cells[i] != 1.0);
    (oracle_similarity(h, w, &p_occ, &g_occ), oracle_similarity(h, w, &p_free, &g_free))
}

/// Random (pred, gt, mask) triple on a small grid. A quarter of the draws
/// are degenerate on purpose: constant predictions, full occupancy, empty
/// or saturated masks, so the absent-class and capped branches get hit.
fn random_triple(rng: &mut SceneRng) -> (Ogm, Ogm, MaskOgm) {
    let h = 2 + uniform_index(rng, 8);
    let w = 2 + uniform_index(rng, 8);
    let spec = GridSpec::new(h, w, 1.0);
    let style = uniform_index(rng, 8);
    let mut pred = Vec::with_capacity(h * w);
    let mut gt = Vec::with_capacity(h * w);
    let mut mask = Vec::with_capacity(h * w);
    for _ in 0..h * w {
        pred.push(match (style, uniform_index(rng, 8)) {
            (0, _) => 0.3,
            (_, 0) => 0.0,
            (_, 1) => 1.0,
            (_, 2) => 0.5,
            _ => uniform(rng, 0.0, 1.0),
        });
        gt.push(if style == 1 || uniform_index(rng, 2) == 0 { 1.0 } else { 0.0 });
        mask.push(match style {
            2 => 0,
            3 => 1,
            _ => (uniform(rng, 0.0, 1.0) < 0.6) as u8,
        });
    }
    (
        Ogm::new(spec, pred).unwrap(),
        Ogm::new(spec, gt).unwrap(),
        MaskOgm::new(spec, mask).unwrap(),
    )
}

fn assert_is_close(got: Option<f64>, want: Option<f64>, what: &str) {
    match (got, want) {
        (None, None) => {}
        (Some(a), Some(b)) => {
            assert!((a - b).abs() <= 1e-9, "{what}: {a} vs oracle {b}");
        }
        _ => panic!("{what}: {got:?} vs oracle {want:?}"),
    }
}

#[test]
fn fifty_random_grids_match_the_counting_oracle() {
    let mut rng = scene_rng(0x6d65_7472);
    for round in 0..50 {
        let (pred, gt, mask) = random_triple(&mut rng);
        for support in [Support::MaskedOnly, Support::AllCells] {
            let m = class_counts(&pred, &gt, &mask, support);
            let (occ, free) = oracle_counts(&pred, &gt, &mask, support);
            assert_eq!(m.occ.count, occ.count, "round {round} occ count");
            assert_eq!(m.occ.correct, occ.correct, "round {round} occ correct");
            assert_eq!(m.free.count, free.count, "round {round} free count");
            assert_eq!(m.free.correct, free.correct, "round {round} free correct");
            assert_eq!(m.overall.count, occ.count + free.count, "round {round} total");
            assert_eq!(m.overall.correct, occ.correct + free.correct, "round {round}");
            assert!((m.occ.sq_err_sum - occ.sq).abs() <= 1e-12, "round {round} occ mse");
            assert!((m.free.sq_err_sum - free.sq).abs() <= 1e-12, "round {round} free mse");
            let (is_occ, is_free) = oracle_is(&pred, &gt, &mask, support);
            assert_is_close(m.is_occ, is_occ, "is_occ");
            assert_is_close(m.is_free, is_free, "is_free");
        }
    }
}

#[test]
fn identical_maps_score_zero_similarity_and_full_accuracy() {
    let mut rng = scene_rng(0x1d31);
    for _ in 0..20 {
        let (_, gt, mask) = random_triple(&mut rng);
        let m = class_counts(&gt, &gt, &mask, Support::AllCells);
        assert_eq!(m.overall.accuracy(), Some(1.0));
        assert_eq!(m.overall.mse(), Some(0.0));
        for v in [m.is_occ, m.is_free] {
            if let Some(x) = v {
                assert_eq!(x, 0.0);
            }
        }
    }
}

#[test]
fn similarity_is_symmetric_for_binary_maps() {
    let mut rng = scene_rng(0x5b3);
    for _ in 0..20 {
        let (_, a, mask) = random_triple(&mut rng);
        let (_, b, _) = random_triple(&mut rng);
        if a.cells.len() != b.cells.len() || a.width != b.width {
            continue;
        }
        let b = Ogm::new(GridSpec::new(a.height, a.width, 1.0), b.cells.clone()).unwrap();
        let ab = image_similarity(&a, &b, &mask, Support::MaskedOnly);
        let ba = image_similarity(&b, &a, &mask, Support::MaskedOnly);
        assert_eq!(ab, ba);
    }
}

#[test]
fn cells_outside_the_mask_never_influence_scores() {
    let mut rng = scene_rng(0xc0ff);
    for _ in 0..20 {
        let (pred, gt, mask) = random_triple(&mut rng);
        let before = class_counts(&pred, &gt, &mask, Support::MaskedOnly);
        let mut pred2 = pred.clone();
        let mut gt2 = gt.clone();
        for i in 0..mask.cells.len() {
            if mask.cells[i] == 0 {
                pred2.cells[i] = uniform(&mut rng, 0.0, 1.0);
                gt2.cells[i] = uniform_index(&mut rng, 2) as f64;
            }
        }
        let after = class_counts(&pred2, &gt2, &mask, Support::MaskedOnly);
        assert_eq!(before, after);
    }
}

#[test]
fn all_cells_support_equals_a_saturated_mask() {
    let mut rng = scene_rng(0xa11);
    for _ in 0..10 {
        let (pred, gt, mask) = random_triple(&mut rng);
        let ones = MaskOgm::new(
            GridSpec::new(gt.height, gt.width, 1.0),
            vec![1; gt.cells.len()],
        )
        .unwrap();
        assert_eq!(
            class_counts(&pred, &gt, &mask, Support::AllCells),
            class_counts(&pred, &gt, &ones, Support::MaskedOnly),
        );
    }
}

#[test]
fn pooled_accuracy_and_mse_match_one_concatenated_grid() {
    // Stack four same-width grids; pooling per-sample counts must agree
    // with scoring the stack as a single sample.
    let mut rng = scene_rng(0x9001);
    let w = 5;
    let mut samples = Vec::new();
    let mut pred_all = Vec::new();
    let mut gt_all = Vec::new();
    for _ in 0..4 {
        let h = 2 + uniform_index(&mut rng, 4);
        let spec = GridSpec::new(h, w, 1.0);
        let pred: Vec<f64> = (0..h * w).map(|_| uniform(&mut rng, 0.0, 1.0)).collect();
        let gt: Vec<f64> = (0..h * w).map(|_| uniform_index(&mut rng, 2) as f64).collect();
        let mask = MaskOgm::new(spec, vec![1; h * w]).unwrap();
        samples.push(class_counts(
            &Ogm::new(spec, pred.clone()).unwrap(),
            &Ogm::new(spec, gt.clone()).unwrap(),
            &mask,
            Support::MaskedOnly,
        ));
        pred_all.extend(pred);
        gt_all.extend(gt);
    }
    let rep = aggregate(&samples).unwrap();
    let h_total = pred_all.len() / w;
    let spec = GridSpec::new(h_total, w, 1.0);
    let whole = class_counts(
        &Ogm::new(spec, pred_all).unwrap(),
        &Ogm::new(spec, gt_all).unwrap(),
        &MaskOgm::new(spec, vec![1; h_total * w]).unwrap(),
        Support::MaskedOnly,
    );
    assert_eq!(rep.n_samples, 4);
    for (got, want, label) in [
        (rep.occ, whole.occ, "occ"),
        (rep.free, whole.free, "free"),
        (rep.overall, whole.overall, "overall"),
    ] {
        assert_eq!(got.count, want.count, "{label} count");
        assert_eq!(got.accuracy, want.accuracy(), "{label} accuracy");
        let (a, b) = (got.mse.unwrap(), want.mse().unwrap());
        assert!((a - b).abs() <= 1e-12, "{label} mse {a} vs {b}");
    }
}

#[test]
fn similarity_aggregates_as_an_unweighted_mean_over_present_samples() {
    let spec = GridSpec::new(2, 2, 1.0);
    let grid = |cells: [f64; 4]| Ogm::new(spec, cells.to_vec()).unwrap();
    let mask = |cells: [u8; 4]| MaskOgm::new(spec, cells.to_vec()).unwrap();
    // Both classes present; only the occupied class present; empty support.
    let s_both = class_counts(
        &grid([1.0, 0.0, 0.0, 1.0]),
        &grid([1.0, 1.0, 0.0, 0.0]),
        &mask([1, 1, 1, 1]),
        Support::MaskedOnly,
    );
    let s_occ_only = class_counts(
        &grid([1.0, 1.0, 1.0, 1.0]),
        &grid([1.0, 1.0, 1.0, 1.0]),
        &mask([1, 1, 0, 0]),
        Support::MaskedOnly,
    );
    let s_empty = class_counts(
        &grid([1.0, 0.0, 1.0, 0.0]),
        &grid([0.0, 1.0, 0.0, 1.0]),
        &mask([0, 0, 0, 0]),
        Support::MaskedOnly,
    );
    assert!(s_both.is_occ.is_some() && s_both.is_free.is_some());
    assert!(s_occ_only.is_occ.is_some() && s_occ_only.is_free.is_none());
    assert!(s_empty.is_occ.is_none() && s_empty.is_free.is_none());

    let rep = aggregate(&[s_both.clone(), s_occ_only.clone(), s_empty]).unwrap();
    let occ_mean = (s_both.is_occ.unwrap() + s_occ_only.is_occ.unwrap()) / 2.0;
    assert_eq!(rep.occ.is_score, Some(occ_mean));
    assert_eq!(rep.free.is_score, s_both.is_free);
    let overall_mean =
        (s_both.is_overall().unwrap() + s_occ_only.is_overall().unwrap()) / 2.0;
    assert_eq!(rep.overall.is_score, Some(overall_mean));
}

#[test]
fn aggregate_of_nothing_is_none() {
    assert_eq!(aggregate(&[]), None);
}
