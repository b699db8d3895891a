//! Detection-stream conditioning before tracking: confidence filtering and
//! strict 3D-IoU non-maximum suppression. Overlapping 3D detections of rigid
//! objects are very likely duplicates of one object, so the NMS threshold is
//! deliberately low.

use crate::geometry::{iou3d, Box3D};

/// One detector output: a box, its confidence in [0, 1], and the frame it
/// belongs to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub bbox: Box3D,
    pub score: f64,
    pub frame: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessConfig {
    /// Detections scoring below this are dropped (boundary inclusive).
    pub score_min: f64,
    /// Suppress a box whose IoU with a kept box strictly exceeds this.
    pub nms_iou: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            score_min: 0.5,
            nms_iou: 0.25,
        }
    }
}

/// Keep exactly the detections with score >= `score_min`, in input order.
pub fn score_filter(dets: &[Detection], score_min: f64) -> Vec<Detection> {
    dets.iter()
        .copied()
        .filter(|d| d.score >= score_min)
        .collect()
}

/// Greedy non-maximum suppression over one frame of detections.
///
/// Boxes are visited by descending score (ties keep input order); each kept
/// box suppresses the remaining boxes whose IoU with it strictly exceeds
/// `nms_iou`, so boxes exactly at the threshold survive. Output is sorted by
/// descending score.
pub fn nms3d(dets: &[Detection], nms_iou: f64) -> Vec<Detection> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.partial_cmp(&dets[a].score).expect("finite"));

    let mut suppressed = vec![false; dets.len()];
    let mut kept = Vec::new();
    for (rank, &i) in order.iter().enumerate() {
        if suppressed[i] {
            continue;
        }
        kept.push(dets[i]);
        for &j in &order[rank + 1..] {
            if !suppressed[j] && iou3d(&dets[i].bbox, &dets[j].bbox) > nms_iou {
                suppressed[j] = true;
            }
        }
    }
    kept
}

/// Apply score filtering then per-frame NMS to a whole detection stream.
/// Output is ordered by frame, then by descending score within each frame.
pub fn preprocess_stream(dets: &[Detection], cfg: &PreprocessConfig) -> Vec<Detection> {
    let mut filtered = score_filter(dets, cfg.score_min);
    filtered.sort_by_key(|d| d.frame);
    let mut out = Vec::with_capacity(filtered.len());
    let mut start = 0;
    while start < filtered.len() {
        let frame = filtered[start].frame;
        let end = filtered[start..]
            .iter()
            .position(|d| d.frame != frame)
            .map(|off| start + off)
            .unwrap_or(filtered.len());
        out.extend(nms3d(&filtered[start..end], cfg.nms_iou));
        start = end;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(x: f64, score: f64) -> Detection {
        Detection {
            bbox: Box3D::new(x, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0).unwrap(),
            score,
            frame: 0,
        }
    }

    #[test]
    fn score_filter_boundary_is_inclusive() {
        let dets = [det(0.0, 0.9), det(2.0, 0.5), det(4.0, 0.49)];
        let kept = score_filter(&dets, 0.5);
        assert_eq!(kept.len(), 2);
        assert_eq!(kept[0].score, 0.9);
        assert_eq!(kept[1].score, 0.5);
    }

    #[test]
    fn score_filter_zero_threshold_is_identity() {
        let dets = [det(0.0, 0.3), det(2.0, 0.1)];
        assert_eq!(score_filter(&dets, 0.0), dets.to_vec());
    }

    #[test]
    fn score_filter_unreachable_threshold_empties() {
        let dets = [det(0.0, 0.99), det(2.0, 0.8)];
        assert!(score_filter(&dets, 1.0).is_empty());
    }

    #[test]
    fn nms_suppresses_duplicate_box() {
        let dets = [det(0.0, 0.9), det(0.0, 0.8)];
        let kept = nms3d(&dets, 0.25);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].score, 0.9);
    }

    #[test]
    fn nms_keeps_disjoint_boxes() {
        let dets = [det(0.0, 0.8), det(10.0, 0.9)];
        let kept = nms3d(&dets, 0.0);
        assert_eq!(kept.len(), 2);
        assert_eq!(kept[0].score, 0.9);
        assert_eq!(kept[1].score, 0.8);
    }

    #[test]
    fn nms_revives_box_suppressor_removed() {
        // A overlaps B (IoU 1/3), B overlaps C (IoU 1/3), A and C disjoint.
        // B is suppressed by A, so C survives: {A, C}.
        let a = det(0.0, 0.9);
        let b = det(0.5, 0.8);
        let c = det(1.0, 0.7);
        assert!((iou3d(&a.bbox, &b.bbox) - 1.0 / 3.0).abs() < 1e-9);
        assert!((iou3d(&b.bbox, &c.bbox) - 1.0 / 3.0).abs() < 1e-9);
        assert_eq!(iou3d(&a.bbox, &c.bbox), 0.0);
        let kept = nms3d(&[a, b, c], 0.25);
        assert_eq!(kept.len(), 2);
        assert_eq!(kept[0].bbox.x(), 0.0);
        assert_eq!(kept[1].bbox.x(), 1.0);
    }

    #[test]
    fn nms_at_exact_threshold_survives() {
        // IoU exactly 1/3 with threshold 1/3: strict comparison keeps both.
        let kept = nms3d(&[det(0.0, 0.9), det(0.5, 0.8)], 1.0 / 3.0);
        assert_eq!(kept.len(), 2);
    }

    #[test]
    fn preprocess_stream_handles_multiple_frames() {
        let mut dets = vec![det(0.0, 0.9), det(0.0, 0.8)];
        dets.push(Detection {
            frame: 1,
            ..det(0.0, 0.7)
        });
        let out = preprocess_stream(&dets, &PreprocessConfig::default());
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].frame, 0);
        assert_eq!(out[1].frame, 1);
    }
}
