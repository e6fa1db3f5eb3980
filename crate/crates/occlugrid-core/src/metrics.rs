//! Per-class evaluation: accuracy, MSE, and the symmetric nearest-cell
//! image-similarity score, all restricted to the occlusion support.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use crate::grid::{MaskOgm, Ogm};

/// Which cells metrics are computed over.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Support {
    /// Occluded cells only (mask = 1); the standard evaluation.
    MaskedOnly,
    /// Every cell; debugging aid.
    AllCells,
}

/// Accumulated counts for one cell class; pools across samples.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ClassCounts {
    pub count: u64,
    pub correct: u64,
    pub sq_err_sum: f64,
}

impl ClassCounts {
    pub fn accuracy(&self) -> Option<f64> {
        (self.count > 0).then(|| self.correct as f64 / self.count as f64)
    }

    pub fn mse(&self) -> Option<f64> {
        (self.count > 0).then(|| self.sq_err_sum / self.count as f64)
    }

    fn merge(&mut self, o: &ClassCounts) {
        self.count += o.count;
        self.correct += o.correct;
        self.sq_err_sum += o.sq_err_sum;
    }
}

/// Metrics of a single sample. `is_*` are `None` when the class is absent
/// from both maps.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleMetrics {
    pub occ: ClassCounts,
    pub free: ClassCounts,
    pub overall: ClassCounts,
    pub is_occ: Option<f64>,
    pub is_free: Option<f64>,
}

impl SampleMetrics {
    pub fn is_overall(&self) -> Option<f64> {
        match (self.is_occ, self.is_free) {
            (Some(a), Some(b)) => Some((a + b) / 2.0),
            (Some(a), None) | (None, Some(a)) => Some(a),
            (None, None) => None,
        }
    }
}

/// One class's aggregate row in a report.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ClassReport {
    pub count: u64,
    pub accuracy: Option<f64>,
    pub mse: Option<f64>,
    /// Mean per-sample image similarity; `None` when the class never
    /// appeared.
    pub is_score: Option<f64>,
}

/// Dataset-level metrics: pooled counts for accuracy and MSE, unweighted
/// per-sample mean for image similarity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricReport {
    pub occ: ClassReport,
    pub free: ClassReport,
    pub overall: ClassReport,
    pub n_samples: u64,
}

/// Threshold at 0.5; exactly 0.5 counts occupied.
pub fn threshold_occupied(p: f64) -> bool {
    p >= 0.5
}

fn support_cells(mask: &MaskOgm, support: Support) -> impl Iterator<Item = usize> + '_ {
    (0..mask.cells.len()).filter(move |&i| match support {
        Support::MaskedOnly => mask.cells[i] == 1,
        Support::AllCells => true,
    })
}

/// Per-class accuracy and squared-error sums over the support.
pub fn class_counts(pred: &Ogm, gt: &Ogm, mask: &MaskOgm, support: Support) -> SampleMetrics {
    assert_eq!(pred.cells.len(), gt.cells.len(), "pred/gt dims differ");
    assert_eq!(pred.cells.len(), mask.cells.len(), "pred/mask dims differ");
    let mut occ = ClassCounts::default();
    let mut free = ClassCounts::default();
    for i in support_cells(mask, support) {
        let g = gt.cells[i];
        let p = pred.cells[i];
        let correct = threshold_occupied(p) == (g == 1.0);
        let err = (p - g) * (p - g);
        let bucket = if g == 1.0 { &mut occ } else { &mut free };
        bucket.count += 1;
        bucket.correct += correct as u64;
        bucket.sq_err_sum += err;
    }
    let mut overall = occ;
    overall.merge(&free);
    let (is_occ, is_free) = image_similarity(pred, gt, mask, support);
    SampleMetrics { occ, free, overall, is_occ, is_free }
}

/// Manhattan distance transform to the nearest set cell; `usize::MAX`
/// when no cell is set. Multi-source BFS on the 4-connected lattice.
fn distance_transform(h: usize, w: usize, set: &[bool]) -> Vec<usize> {
    let mut dist = vec![usize::MAX; h * w];
    let mut q = VecDeque::new();
    for i in 0..set.len() {
        if set[i] {
            dist[i] = 0;
            q.push_back(i);
        }
    }
    while let Some(i) = q.pop_front() {
        let (r, c) = (i / w, i % w);
        let d = dist[i] + 1;
        let mut push = |j: usize| {
            if dist[j] == usize::MAX {
                dist[j] = d;
                q.push_back(j);
            }
        };
        if r > 0 {
            push(i - w);
        }
        if r + 1 < h {
            push(i + w);
        }
        if c > 0 {
            push(i - 1);
        }
        if c + 1 < w {
            push(i + 1);
        }
    }
    dist
}

/// Symmetric mean nearest-cell distance per class between the thresholded
/// prediction and the ground truth, both restricted to the support.
///
/// Each direction averages, over one map's class cells, the Manhattan
/// distance to the other map's nearest class cell, capped at `H + W`
/// when the other map has none. A class absent from both maps scores
/// `None`. Lower is better.
pub fn image_similarity(
    pred: &Ogm,
    gt: &Ogm,
    mask: &MaskOgm,
    support: Support,
) -> (Option<f64>, Option<f64>) {
    let (h, w) = (gt.height, gt.width);
    let cap = (h + w) as f64;
    let in_support: Vec<bool> = (0..h * w)
        .map(|i| support == Support::AllCells || mask.cells[i] == 1)
        .collect();
    let pred_occ: Vec<bool> = (0..h * w)
        .map(|i| in_support[i] && threshold_occupied(pred.cells[i]))
        .collect();
    let gt_occ: Vec<bool> = (0..h * w).map(|i| in_support[i] && gt.cells[i] == 1.0).collect();
    let pred_free: Vec<bool> = (0..h * w)
        .map(|i| in_support[i] && !threshold_occupied(pred.cells[i]))
        .collect();
    let gt_free: Vec<bool> = (0..h * w).map(|i| in_support[i] && gt.cells[i] != 1.0).collect();

    let class_score = |a: &[bool], b: &[bool]| -> Option<f64> {
        let a_any = a.iter().any(|&x| x);
        let b_any = b.iter().any(|&x| x);
        if !a_any && !b_any {
            return None;
        }
        if !a_any || !b_any {
            // One side empty: both directions hit the cap.
            return Some(2.0 * cap);
        }
        let da = distance_transform(h, w, a);
        let db = distance_transform(h, w, b);
        let dir = |cells: &[bool], dist_other: &[usize]| {
            let mut sum = 0.0;
            let mut n = 0u64;
            for i in 0..cells.len() {
                if cells[i] {
                    sum += dist_other[i] as f64;
                    n += 1;
                }
            }
            sum / n as f64
        };
        Some(dir(a, &db) + dir(b, &da))
    };

    (class_score(&pred_occ, &gt_occ), class_score(&pred_free, &gt_free))
}

/// Pools per-sample metrics into a dataset report.
pub fn aggregate(samples: &[SampleMetrics]) -> Option<MetricReport> {
    if samples.is_empty() {
        return None;
    }
    let mut occ = ClassCounts::default();
    let mut free = ClassCounts::default();
    let mut overall = ClassCounts::default();
    let mut is_sums = [0.0f64; 3];
    let mut is_ns = [0u64; 3];
    for s in samples {
        occ.merge(&s.occ);
        free.merge(&s.free);
        overall.merge(&s.overall);
        for (slot, v) in [s.is_occ, s.is_free, s.is_overall()].iter().enumerate() {
            if let Some(x) = v {
                is_sums[slot] += x;
                is_ns[slot] += 1;
            }
        }
    }
    let mean = |slot: usize| (is_ns[slot] > 0).then(|| is_sums[slot] / is_ns[slot] as f64);
    let row = |c: &ClassCounts, slot: usize| ClassReport {
        count: c.count,
        accuracy: c.accuracy(),
        mse: c.mse(),
        is_score: mean(slot),
    };
    Some(MetricReport {
        occ: row(&occ, 0),
        free: row(&free, 1),
        overall: row(&overall, 2),
        n_samples: samples.len() as u64,
    })
}
