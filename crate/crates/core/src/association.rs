//! Frame-level bipartite matching between detections and tracklet
//! predictions: build the similarity matrix, solve the assignment, gate weak
//! matches, and partition the inputs into matched and unmatched sets.

use crate::geometry::{giou3d, iou3d, Box3D};
use nalgebra::DMatrix;

/// Overlap metric used for association.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimilarityMetric {
    Iou3d,
    Giou3d,
}

impl SimilarityMetric {
    pub fn eval(&self, a: &Box3D, b: &Box3D) -> f64 {
        match self {
            SimilarityMetric::Iou3d => iou3d(a, b),
            SimilarityMetric::Giou3d => giou3d(a, b),
        }
    }

    /// The conventional gate for each metric: IoU 0.1, GIoU -0.5.
    pub fn default_gate(&self) -> f64 {
        match self {
            SimilarityMetric::Iou3d => 0.1,
            SimilarityMetric::Giou3d => -0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssocConfig {
    pub metric: SimilarityMetric,
    /// Matched pairs below this similarity are discarded.
    pub gate: f64,
}

impl Default for AssocConfig {
    fn default() -> Self {
        Self {
            metric: SimilarityMetric::Iou3d,
            gate: SimilarityMetric::Iou3d.default_gate(),
        }
    }
}

/// The four output sets of one association round. `matched` holds
/// (detection index, tracklet index) pairs sorted by detection index; the
/// three sets partition both inputs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssociationResult {
    pub matched: Vec<(usize, usize)>,
    pub unmatched_detections: Vec<usize>,
    pub unmatched_tracklets: Vec<usize>,
}

/// Pairwise similarity of detections (rows) against predictions (columns).
pub fn similarity_matrix(
    dets: &[Box3D],
    preds: &[Box3D],
    metric: SimilarityMetric,
) -> DMatrix<f64> {
    DMatrix::from_fn(dets.len(), preds.len(), |i, j| {
        metric.eval(&dets[i], &preds[j])
    })
}

/// Minimum-total-cost maximal matching on a rectangular cost matrix,
/// returned as (row, column) pairs sorted by row.
///
/// Kuhn-Munkres with row/column potentials, O(n^2 m) for n rows and m >= n
/// columns; a matrix with more rows than columns is solved transposed.
pub fn hungarian(cost: &DMatrix<f64>) -> Vec<(usize, usize)> {
    let (rows, cols) = (cost.nrows(), cost.ncols());
    if rows == 0 || cols == 0 {
        return Vec::new();
    }
    if rows > cols {
        let mut pairs: Vec<(usize, usize)> = hungarian(&cost.transpose())
            .into_iter()
            .map(|(c, r)| (r, c))
            .collect();
        pairs.sort_unstable();
        return pairs;
    }

    let n = rows;
    let m = cols;
    // 1-based arrays; column 0 is the virtual root of each augmenting path.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut matched_row = vec![0usize; m + 1]; // row assigned to each column
    let mut way = vec![0usize; m + 1];

    for row in 1..=n {
        matched_row[0] = row;
        let mut j0 = 0usize;
        let mut min_slack = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = matched_row[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let slack = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                if slack < min_slack[j] {
                    min_slack[j] = slack;
                    way[j] = j0;
                }
                if min_slack[j] < delta {
                    delta = min_slack[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[matched_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_slack[j] -= delta;
                }
            }
            j0 = j1;
            if matched_row[j0] == 0 {
                break;
            }
        }
        // Augment along the alternating path back to the root.
        while j0 != 0 {
            let j1 = way[j0];
            matched_row[j0] = matched_row[j1];
            j0 = j1;
        }
    }

    let mut pairs: Vec<(usize, usize)> = (1..=m)
        .filter(|&j| matched_row[j] != 0)
        .map(|j| (matched_row[j] - 1, j - 1))
        .collect();
    pairs.sort_unstable();
    pairs
}

/// Associate detections with predictions: Hungarian assignment on a cost
/// derived from the similarity, then post-hoc gating. Gated-out pairs return
/// their members to the unmatched sets, so the result always partitions both
/// inputs.
pub fn associate(dets: &[Box3D], preds: &[Box3D], cfg: &AssocConfig) -> AssociationResult {
    let sim = similarity_matrix(dets, preds, cfg.metric);
    associate_by_similarity(&sim, cfg.gate)
}

/// Same as [`associate`] but on a precomputed similarity matrix (rows are
/// detections, columns tracklets).
pub fn associate_by_similarity(sim: &DMatrix<f64>, gate: f64) -> AssociationResult {
    let (p, q) = (sim.nrows(), sim.ncols());
    if p == 0 || q == 0 {
        return AssociationResult {
            matched: Vec::new(),
            unmatched_detections: (0..p).collect(),
            unmatched_tracklets: (0..q).collect(),
        };
    }

    // Any strictly decreasing transform yields the same optimum ordering;
    // this one maps both metrics onto [0, 1] so logged costs are stable.
    let cost = sim.map(|s| 1.0 - (s + 1.0) / 2.0);
    let assignment = hungarian(&cost);

    let mut det_matched = vec![false; p];
    let mut trk_matched = vec![false; q];
    let mut matched = Vec::with_capacity(assignment.len());
    for (di, ti) in assignment {
        if sim[(di, ti)] >= gate {
            det_matched[di] = true;
            trk_matched[ti] = true;
            matched.push((di, ti));
        }
    }
    AssociationResult {
        matched,
        unmatched_detections: (0..p).filter(|&i| !det_matched[i]).collect(),
        unmatched_tracklets: (0..q).filter(|&j| !trk_matched[j]).collect(),
    }
}
