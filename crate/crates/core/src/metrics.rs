//! CLEAR-MOT evaluation of track outputs against ground truth, plus a
//! taxonomy that splits every identity switch into either an early
//! termination (one object's trajectory broke into two track ids) or a wrong
//! association (two objects' ids got confused).
//!
//! Ground truth carries a per-frame visibility flag: a box that is present
//! in the scene but occluded (visible = false) is excluded from matching and
//! from the ground-truth count, while the object's last correspondence is
//! kept. Re-acquiring the same id after a gap is therefore not a mismatch.

use crate::association::{associate, AssocConfig, SimilarityMetric};
use crate::geometry::Box3D;
use std::collections::{BTreeMap, HashMap, HashSet};
use thiserror::Error;

/// One ground-truth box: object id, frame, visibility, geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GtRecord {
    pub frame: u64,
    pub object_id: u64,
    pub visible: bool,
    pub bbox: Box3D,
}

/// One hypothesis box as written to a track file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackRecord {
    pub frame: u64,
    pub track_id: u64,
    pub score: f64,
    pub bbox: Box3D,
}

/// Aggregate CLEAR-MOT counts and ratios. `mota` is
/// 1 - (fp + miss + mismatch) / num_gt and may be negative; the two
/// taxonomy counts always sum to `mismatch`.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub num_gt: u64,
    pub fp: u64,
    pub miss: u64,
    pub mismatch: u64,
    pub mota: f64,
    pub fp_pct: f64,
    pub miss_pct: f64,
    pub mismatch_pct: f64,
    pub ids_early_termination: u64,
    pub ids_wrong_association: u64,
}

/// A recorded identity switch: ground-truth object `gt_id` changed from
/// hypothesis `prev_hyp` to `new_hyp` at `frame`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MismatchEvent {
    pub frame: u64,
    pub gt_id: u64,
    pub prev_hyp: u64,
    pub new_hyp: u64,
}

/// Which ground-truth objects each hypothesis id corresponded to, per frame.
#[derive(Debug, Clone, Default)]
pub struct HypHistory {
    matches: HashMap<u64, Vec<(u64, u64)>>,
}

impl HypHistory {
    fn record(&mut self, hyp: u64, frame: u64, gt: u64) {
        self.matches.entry(hyp).or_default().push((frame, gt));
    }

    /// True if `hyp` corresponded to a ground-truth object other than `gt`
    /// at any frame strictly before `frame`.
    pub fn matched_other_gt_before(&self, hyp: u64, gt: u64, frame: u64) -> bool {
        self.matches
            .get(&hyp)
            .map(|v| v.iter().any(|&(f, g)| f < frame && g != gt))
            .unwrap_or(false)
    }
}

/// Full evaluation outcome: the report plus the raw mismatch events and the
/// correspondence history they were classified against.
#[derive(Debug, Clone)]
pub struct MotResult {
    pub report: EvalReport,
    pub events: Vec<MismatchEvent>,
    pub history: HypHistory,
}

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("ground truth contains no visible boxes")]
    EmptyGroundTruth,
    #[error("hypothesis frame {frame} outside ground-truth range {min}..={max}")]
    HypFrameOutOfRange { frame: u64, min: u64, max: u64 },
    #[error("duplicate ground-truth record for frame {frame}, object {object_id}")]
    DuplicateGt { frame: u64, object_id: u64 },
    #[error("duplicate hypothesis record for frame {frame}, track {track_id}")]
    DuplicateHyp { frame: u64, track_id: u64 },
}

/// Split recorded mismatch events into (early terminations, wrong
/// associations): a switch to a hypothesis that previously corresponded to a
/// different object is a wrong association; a switch to a fresh hypothesis
/// means the trajectory broke in two.
pub fn classify_ids(events: &[MismatchEvent], history: &HypHistory) -> (u64, u64) {
    let mut early = 0;
    let mut wrong = 0;
    for e in events {
        if history.matched_other_gt_before(e.new_hyp, e.gt_id, e.frame) {
            wrong += 1;
        } else {
            early += 1;
        }
    }
    (early, wrong)
}

/// Run the CLEAR-MOT procedure over the ground-truth frame range.
///
/// Per frame: correspondences from the previous frames that still hold
/// (IoU >= `match_iou`) persist; the remaining boxes are matched by a
/// maximum-IoU assignment gated at `match_iou`; unmatched hypotheses count
/// as false positives, unmatched visible ground truth as misses, and a
/// ground-truth object whose matched id changed counts one mismatch.
pub fn clear_mot(
    gt: &[GtRecord],
    hyp: &[TrackRecord],
    match_iou: f64,
) -> Result<MotResult, MetricsError> {
    let mut gt_by_frame: BTreeMap<u64, Vec<&GtRecord>> = BTreeMap::new();
    let mut seen_gt = HashSet::new();
    for g in gt {
        if !seen_gt.insert((g.frame, g.object_id)) {
            return Err(MetricsError::DuplicateGt {
                frame: g.frame,
                object_id: g.object_id,
            });
        }
        gt_by_frame.entry(g.frame).or_default().push(g);
    }
    if !gt.iter().any(|g| g.visible) {
        return Err(MetricsError::EmptyGroundTruth);
    }
    let min_frame = *gt_by_frame.keys().next().expect("nonempty");
    let max_frame = *gt_by_frame.keys().next_back().expect("nonempty");

    let mut hyp_by_frame: BTreeMap<u64, Vec<&TrackRecord>> = BTreeMap::new();
    let mut seen_hyp = HashSet::new();
    for h in hyp {
        if h.frame < min_frame || h.frame > max_frame {
            return Err(MetricsError::HypFrameOutOfRange {
                frame: h.frame,
                min: min_frame,
                max: max_frame,
            });
        }
        if !seen_hyp.insert((h.frame, h.track_id)) {
            return Err(MetricsError::DuplicateHyp {
                frame: h.frame,
                track_id: h.track_id,
            });
        }
        hyp_by_frame.entry(h.frame).or_default().push(h);
    }

    let mut correspondence: BTreeMap<u64, u64> = BTreeMap::new();
    let mut history = HypHistory::default();
    let mut events = Vec::new();
    let (mut num_gt, mut fp, mut miss, mut mismatch) = (0u64, 0u64, 0u64, 0u64);

    let empty_gt = Vec::new();
    let empty_hyp = Vec::new();
    for frame in min_frame..=max_frame {
        let mut gts: Vec<&GtRecord> = gt_by_frame
            .get(&frame)
            .unwrap_or(&empty_gt)
            .iter()
            .copied()
            .filter(|g| g.visible)
            .collect();
        gts.sort_by_key(|g| g.object_id);
        let mut hyps: Vec<&TrackRecord> = hyp_by_frame
            .get(&frame)
            .unwrap_or(&empty_hyp)
            .to_vec();
        hyps.sort_by_key(|h| h.track_id);

        let hyp_index: HashMap<u64, usize> =
            hyps.iter().enumerate().map(|(i, h)| (h.track_id, i)).collect();

        // Step 1: persist still-valid correspondences.
        let mut gt_matched = vec![false; gts.len()];
        let mut hyp_matched = vec![false; hyps.len()];
        let mut frame_matches: Vec<(u64, u64)> = Vec::new();
        for (gi, g) in gts.iter().enumerate() {
            let Some(&prev) = correspondence.get(&g.object_id) else {
                continue;
            };
            let Some(&hi) = hyp_index.get(&prev) else {
                continue;
            };
            if !hyp_matched[hi] && crate::geometry::iou3d(&g.bbox, &hyps[hi].bbox) >= match_iou {
                gt_matched[gi] = true;
                hyp_matched[hi] = true;
                frame_matches.push((g.object_id, prev));
            }
        }

        // Step 2: maximum-IoU assignment over the remainder.
        let free_gt: Vec<usize> = (0..gts.len()).filter(|&i| !gt_matched[i]).collect();
        let free_hyp: Vec<usize> = (0..hyps.len()).filter(|&i| !hyp_matched[i]).collect();
        let gt_boxes: Vec<Box3D> = free_gt.iter().map(|&i| gts[i].bbox).collect();
        let hyp_boxes: Vec<Box3D> = free_hyp.iter().map(|&i| hyps[i].bbox).collect();
        let assoc = associate(
            &gt_boxes,
            &hyp_boxes,
            &AssocConfig {
                metric: SimilarityMetric::Iou3d,
                gate: match_iou,
            },
        );
        for (gi_local, hi_local) in assoc.matched {
            let g = gts[free_gt[gi_local]];
            let h = hyps[free_hyp[hi_local]];
            if let Some(&prev) = correspondence.get(&g.object_id) {
                if prev != h.track_id {
                    mismatch += 1;
                    events.push(MismatchEvent {
                        frame,
                        gt_id: g.object_id,
                        prev_hyp: prev,
                        new_hyp: h.track_id,
                    });
                }
            }
            correspondence.insert(g.object_id, h.track_id);
            frame_matches.push((g.object_id, h.track_id));
        }

        let matches = frame_matches.len() as u64;
        num_gt += gts.len() as u64;
        miss += gts.len() as u64 - matches;
        fp += hyps.len() as u64 - matches;
        for &(g, h) in &frame_matches {
            history.record(h, frame, g);
        }
    }

    let n = num_gt as f64;
    let (early, wrong) = classify_ids(&events, &history);
    let report = EvalReport {
        num_gt,
        fp,
        miss,
        mismatch,
        mota: 1.0 - (fp + miss + mismatch) as f64 / n,
        fp_pct: fp as f64 / n,
        miss_pct: miss as f64 / n,
        mismatch_pct: mismatch as f64 / n,
        ids_early_termination: early,
        ids_wrong_association: wrong,
    };
    Ok(MotResult {
        report,
        events,
        history,
    })
}
