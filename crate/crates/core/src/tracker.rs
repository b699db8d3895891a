//! The tracklet life-cycle engine: per frame, predict every tracklet
//! forward, associate predictions with detections, update matched tracklets,
//! coast unmatched ones, spawn tracklets for unmatched detections, and emit
//! only tracklets that are alive and matched this frame.
//!
//! Two modes differ in one rule only. `Immortal` never removes a tracklet:
//! an object that goes dark keeps coasting on its prediction and can be
//! re-associated after arbitrarily many missed frames. `Baseline` terminates
//! a tracklet once it has missed more than `a_max` consecutive frames, the
//! conventional count-based life cycle.
//!
//! Immortal-mode storage is unbounded: memory grows with the number of
//! objects ever observed. Sequences of benchmark length (minutes) are no
//! concern; for much longer streams consider pruning tracklets that have
//! left the sensing range, at the cost of reintroducing termination.

use crate::association::{associate, AssocConfig};
use crate::geometry::Box3D;
use crate::kalman::{KfConfig, KfState};
use crate::preprocess::Detection;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackerMode {
    /// Tracklets are never terminated.
    Immortal,
    /// Tracklets die after more than `a_max` consecutive missed frames.
    Baseline,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerConfig {
    pub mode: TrackerMode,
    /// Hits required before a tracklet leaves the birth stage. The spawning
    /// detection counts as the first hit, so 0 and 1 both mean "alive from
    /// creation".
    pub m_hits: u32,
    /// Baseline mode only: maximum missed frames before termination.
    pub a_max: u32,
    pub assoc: AssocConfig,
    pub kf: KfConfig,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            mode: TrackerMode::Immortal,
            m_hits: 1,
            a_max: 2,
            assoc: AssocConfig::default(),
            kf: KfConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackletStatus {
    Birth,
    Alive,
}

/// One persistent object hypothesis.
#[derive(Debug, Clone)]
pub struct Tracklet {
    pub id: u64,
    pub kf: KfState,
    pub status: TrackletStatus,
    /// Successful associations since birth (the spawning detection counts).
    pub hits: u32,
    /// 0 iff matched in the current frame.
    pub frames_since_match: u32,
    pub born_frame: u64,
    pub last_matched_frame: u64,
    /// Confidence of the most recent matched detection; carried unchanged
    /// while coasting (coasting frames never produce output).
    pub latest_score: f64,
}

/// Per-frame output: (track id, box, score) for every tracklet that is alive
/// and was matched this frame. Ids within a frame are unique.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameResult {
    pub frame: u64,
    pub outputs: Vec<TrackOutput>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackOutput {
    pub track_id: u64,
    pub bbox: Box3D,
    pub score: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum TrackerError {
    #[error("frame {got} not after previously processed frame {last}")]
    OutOfOrderFrame { last: u64, got: u64 },
    #[error("detection carries frame {det_frame} but step is for frame {step_frame}")]
    FrameMismatch { det_frame: u64, step_frame: u64 },
}

/// Sequential tracker over one stream. Frames must be presented in strictly
/// increasing order; each sequence gets its own instance.
#[derive(Debug, Clone)]
pub struct Tracker {
    config: TrackerConfig,
    tracklets: Vec<Tracklet>,
    next_id: u64,
    last_frame: Option<u64>,
    total_matches: u64,
    frames_processed: u64,
}

impl Tracker {
    pub fn new(config: TrackerConfig) -> Self {
        Self {
            config,
            tracklets: Vec::new(),
            next_id: 1,
            last_frame: None,
            total_matches: 0,
            frames_processed: 0,
        }
    }

    pub fn tracklets(&self) -> &[Tracklet] {
        &self.tracklets
    }

    /// Ids issued so far (monotone; never reused within a sequence).
    pub fn tracklets_created(&self) -> u64 {
        self.next_id - 1
    }

    pub fn total_matches(&self) -> u64 {
        self.total_matches
    }

    pub fn frames_processed(&self) -> u64 {
        self.frames_processed
    }

    /// Advance one frame. All tracklets participate in association,
    /// including birth-stage ones; only their output is suppressed.
    pub fn step(&mut self, frame: u64, detections: &[Detection]) -> Result<FrameResult, TrackerError> {
        if let Some(last) = self.last_frame {
            if frame <= last {
                return Err(TrackerError::OutOfOrderFrame { last, got: frame });
            }
        }
        for d in detections {
            if d.frame != frame {
                return Err(TrackerError::FrameMismatch {
                    det_frame: d.frame,
                    step_frame: frame,
                });
            }
        }
        self.last_frame = Some(frame);
        self.frames_processed += 1;

        // Predict every tracklet one frame forward.
        let predictions: Vec<Box3D> = self
            .tracklets
            .iter_mut()
            .map(|t| {
                t.kf = t.kf.predict(&self.config.kf);
                t.kf.pose()
            })
            .collect();

        let det_boxes: Vec<Box3D> = detections.iter().map(|d| d.bbox).collect();
        let assoc = associate(&det_boxes, &predictions, &self.config.assoc);

        // Matched tracklets absorb their detection.
        for &(di, ti) in &assoc.matched {
            let t = &mut self.tracklets[ti];
            t.kf = t.kf.update(&det_boxes[di], &self.config.kf);
            t.hits += 1;
            t.frames_since_match = 0;
            t.last_matched_frame = frame;
            t.latest_score = detections[di].score;
            if t.status == TrackletStatus::Birth && t.hits >= self.config.m_hits {
                t.status = TrackletStatus::Alive;
            }
        }
        self.total_matches += assoc.matched.len() as u64;

        // Unmatched tracklets keep their prediction.
        for &ti in &assoc.unmatched_tracklets {
            let t = &mut self.tracklets[ti];
            t.kf = t.kf.coast();
            t.frames_since_match += 1;
        }
        if self.config.mode == TrackerMode::Baseline {
            let a_max = self.config.a_max;
            self.tracklets.retain(|t| t.frames_since_match <= a_max);
        }

        // Unmatched detections become new tracklets; the spawning detection
        // is their first hit.
        for &di in &assoc.unmatched_detections {
            let status = if 1 >= self.config.m_hits {
                TrackletStatus::Alive
            } else {
                TrackletStatus::Birth
            };
            self.tracklets.push(Tracklet {
                id: self.next_id,
                kf: KfState::init(&det_boxes[di], &self.config.kf),
                status,
                hits: 1,
                frames_since_match: 0,
                born_frame: frame,
                last_matched_frame: frame,
                latest_score: detections[di].score,
            });
            self.next_id += 1;
        }

        let outputs = self
            .tracklets
            .iter()
            .filter(|t| t.status == TrackletStatus::Alive && t.frames_since_match == 0)
            .map(|t| TrackOutput {
                track_id: t.id,
                bbox: t.kf.pose(),
                score: t.latest_score,
            })
            .collect();
        Ok(FrameResult { frame, outputs })
    }

    /// Drive the tracker over a whole detection stream, one step per frame
    /// from the first detection's frame through the last, including
    /// detection-free frames in between.
    pub fn run(&mut self, detections: &[Detection]) -> Result<Vec<FrameResult>, TrackerError> {
        let mut by_frame: BTreeMap<u64, Vec<Detection>> = BTreeMap::new();
        for d in detections {
            by_frame.entry(d.frame).or_default().push(*d);
        }
        let (Some(&first), Some(&last)) = (
            by_frame.keys().next(),
            by_frame.keys().next_back(),
        ) else {
            return Ok(Vec::new());
        };
        let empty = Vec::new();
        let mut results = Vec::with_capacity((last - first + 1) as usize);
        for frame in first..=last {
            let dets = by_frame.get(&frame).unwrap_or(&empty);
            results.push(self.step(frame, dets)?);
        }
        Ok(results)
    }
}

/// One-shot driver: fresh tracker, one result per frame, deterministic for
/// identical input and configuration.
pub fn run_sequence(
    detections: &[Detection],
    config: &TrackerConfig,
) -> Result<Vec<FrameResult>, TrackerError> {
    Tracker::new(config.clone()).run(detections)
}
