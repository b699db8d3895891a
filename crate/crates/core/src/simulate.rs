//! Deterministic synthetic scenario generator: ground-truth trajectories
//! with occlusion windows plus a box-noise detector model. A fixed seed
//! fully determines both outputs, down to the byte once serialized.
//!
//! The random stream comes from ChaCha8 seeded with the configured seed, and
//! the two non-uniform samplers (Box-Muller normal, Knuth poisson) are
//! implemented here so the generation algorithm is pinned by this crate
//! rather than by a dependency's internals. Draw order is part of the
//! contract: object spawns first (in id order), then occlusion windows (in
//! id order), then per frame: per-object detections in id order followed by
//! false positives.

use crate::geometry::{normalize_angle, Box3D};
use crate::metrics::GtRecord;
use crate::preprocess::Detection;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

/// Identifier of the generator algorithm, written into output file headers.
pub const GENERATOR_ID: &str = "chacha8";

/// Objects never get occluded earlier than this many frames after the
/// sequence starts, so a tracker has a short observation window first.
const OCCLUSION_LEAD_IN: u64 = 10;

/// Minimum spawn separation between object centers, meters.
const MIN_SPAWN_SEPARATION: f64 = 12.0;

#[derive(Debug, Clone, PartialEq)]
pub struct OcclusionConfig {
    /// Chance that an object gets one occlusion window.
    pub probability: f64,
    /// Window duration drawn uniformly from min..=max frames.
    pub min_duration: u64,
    pub max_duration: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorConfig {
    /// Gaussian noise on the horizontal position x, y (meters). Boxes stay
    /// ground-supported: z is always h/2 in this flat world, and vertical
    /// detection noise would feed the tracker a phantom vertical velocity
    /// that structurally breaks vertical overlap on long coasts.
    pub pos_sigma: f64,
    /// Gaussian noise on yaw (radians).
    pub yaw_sigma: f64,
    /// Gaussian noise on each dimension (meters).
    pub size_sigma: f64,
    /// Chance a visible object produces no detection in a frame.
    pub dropout: f64,
    /// Expected false positives per frame (poisson).
    pub fp_rate: f64,
    /// Scores of true detections, uniform in this range.
    pub tp_score_range: (f64, f64),
    /// Scores of false positives, uniform in this range.
    pub fp_score_range: (f64, f64),
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            pos_sigma: 0.1,
            yaw_sigma: 0.02,
            size_sigma: 0.05,
            dropout: 0.05,
            fp_rate: 0.5,
            tp_score_range: (0.6, 1.0),
            fp_score_range: (0.3, 0.7),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub num_objects: u64,
    pub num_frames: u64,
    /// Side of the square world, meters; spawns stay inside it.
    pub world_extent: f64,
    /// Object speed, meters per frame, uniform in this range.
    pub speed_range: (f64, f64),
    /// Turn rate, radians per frame, uniform in this range. Zero keeps
    /// trajectories straight; nonzero stresses the constant-velocity
    /// assumption.
    pub turn_rate_range: (f64, f64),
    pub occlusion: OcclusionConfig,
    pub detector: DetectorConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            num_objects: 10,
            num_frames: 100,
            world_extent: 200.0,
            speed_range: (0.3, 0.9),
            turn_rate_range: (0.0, 0.0),
            occlusion: OcclusionConfig {
                probability: 0.0,
                min_duration: 10,
                max_duration: 30,
            },
            detector: DetectorConfig::default(),
        }
    }
}

struct ObjectState {
    x: f64,
    y: f64,
    yaw: f64,
    speed: f64,
    turn_rate: f64,
    l: f64,
    w: f64,
    h: f64,
    occlusion: Option<(u64, u64)>, // inclusive frame window
}

fn sample_normal(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    // Box-Muller, cosine branch.
    let u1: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.gen();
    sigma * (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn sample_poisson(rng: &mut ChaCha8Rng, lambda: f64) -> u64 {
    // Knuth's product-of-uniforms method; fine for small rates.
    if lambda <= 0.0 {
        return 0;
    }
    let limit = (-lambda).exp();
    let mut k = 0;
    let mut p: f64 = rng.gen();
    while p > limit {
        k += 1;
        p *= rng.gen::<f64>();
    }
    k
}

fn uniform(rng: &mut ChaCha8Rng, range: (f64, f64)) -> f64 {
    if range.0 == range.1 {
        range.0
    } else {
        rng.gen_range(range.0..range.1)
    }
}

fn spawn_objects(rng: &mut ChaCha8Rng, cfg: &ScenarioConfig) -> Vec<ObjectState> {
    let half = cfg.world_extent / 2.0;
    let mut objects: Vec<ObjectState> = Vec::with_capacity(cfg.num_objects as usize);
    for _ in 0..cfg.num_objects {
        let (mut x, mut y) = (0.0, 0.0);
        for attempt in 0..1000 {
            x = rng.gen_range(-half..half);
            y = rng.gen_range(-half..half);
            let clear = objects
                .iter()
                .all(|o| (o.x - x).hypot(o.y - y) >= MIN_SPAWN_SEPARATION);
            if clear || attempt == 999 {
                break;
            }
        }
        let h = rng.gen_range(1.4..1.8);
        objects.push(ObjectState {
            x,
            y,
            yaw: rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
            speed: uniform(rng, cfg.speed_range),
            turn_rate: uniform(rng, cfg.turn_rate_range),
            l: rng.gen_range(3.8..5.2),
            w: rng.gen_range(1.7..2.1),
            h,
            occlusion: None,
        });
    }
    for obj in objects.iter_mut() {
        if rng.gen::<f64>() >= cfg.occlusion.probability {
            continue;
        }
        let max_dur = cfg.occlusion.max_duration.min(cfg.num_frames.max(1) - 1);
        let duration = rng.gen_range(cfg.occlusion.min_duration.min(max_dur)..=max_dur);
        if duration == 0 {
            continue;
        }
        let latest_start = cfg.num_frames - duration;
        let earliest_start = OCCLUSION_LEAD_IN.min(latest_start);
        let start = rng.gen_range(earliest_start..=latest_start);
        obj.occlusion = Some((start, start + duration - 1));
    }
    objects
}

fn gt_box(obj: &ObjectState) -> Box3D {
    Box3D::new(obj.x, obj.y, obj.h / 2.0, obj.yaw, obj.l, obj.w, obj.h)
        .expect("generated boxes are valid")
}

/// Generate the paired ground truth and detection stream for a scenario.
/// Objects follow constant-velocity (optionally constant-turn) motion for
/// the whole clip; during an occlusion window the object stays in the
/// ground truth with visible = false and emits no detection.
pub fn generate(cfg: &ScenarioConfig) -> (Vec<GtRecord>, Vec<Detection>) {
    if cfg.num_objects == 0 || cfg.num_frames == 0 {
        return (Vec::new(), Vec::new());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut objects = spawn_objects(&mut rng, cfg);
    let mut gt = Vec::new();
    let mut dets = Vec::new();

    for frame in 0..cfg.num_frames {
        for (idx, obj) in objects.iter_mut().enumerate() {
            let occluded = obj
                .occlusion
                .map(|(s, e)| frame >= s && frame <= e)
                .unwrap_or(false);
            gt.push(GtRecord {
                frame,
                object_id: idx as u64 + 1,
                visible: !occluded,
                bbox: gt_box(obj),
            });
            if !occluded && rng.gen::<f64>() >= cfg.detector.dropout {
                let d = &cfg.detector;
                let h = (obj.h + sample_normal(&mut rng, d.size_sigma)).max(0.2);
                let bbox = Box3D::new(
                    obj.x + sample_normal(&mut rng, d.pos_sigma),
                    obj.y + sample_normal(&mut rng, d.pos_sigma),
                    h / 2.0,
                    obj.yaw + sample_normal(&mut rng, d.yaw_sigma),
                    (obj.l + sample_normal(&mut rng, d.size_sigma)).max(0.2),
                    (obj.w + sample_normal(&mut rng, d.size_sigma)).max(0.2),
                    h,
                )
                .expect("noisy boxes stay valid");
                dets.push(Detection {
                    bbox,
                    score: uniform(&mut rng, d.tp_score_range),
                    frame,
                });
            }
            obj.x += obj.speed * obj.yaw.cos();
            obj.y += obj.speed * obj.yaw.sin();
            obj.yaw = normalize_angle(obj.yaw + obj.turn_rate);
        }

        let half = cfg.world_extent / 2.0;
        for _ in 0..sample_poisson(&mut rng, cfg.detector.fp_rate) {
            let h = rng.gen_range(1.4..1.8);
            let bbox = Box3D::new(
                rng.gen_range(-half..half),
                rng.gen_range(-half..half),
                h / 2.0,
                rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
                rng.gen_range(3.8..5.2),
                rng.gen_range(1.7..2.1),
                h,
            )
            .expect("false-positive boxes are valid");
            dets.push(Detection {
                bbox,
                score: uniform(&mut rng, cfg.detector.fp_score_range),
                frame,
            });
        }
    }
    (gt, dets)
}

/// For each object, the maximal frame intervals (inclusive) where ground
/// truth exists but no detection overlaps it. A detection is attributed to
/// an object when their IoU exceeds 0.1.
pub fn occlusion_report(
    gt: &[GtRecord],
    dets: &[Detection],
) -> BTreeMap<u64, Vec<(u64, u64)>> {
    let mut dets_by_frame: BTreeMap<u64, Vec<&Detection>> = BTreeMap::new();
    for d in dets {
        dets_by_frame.entry(d.frame).or_default().push(d);
    }
    let mut by_object: BTreeMap<u64, Vec<&GtRecord>> = BTreeMap::new();
    for g in gt {
        by_object.entry(g.object_id).or_default().push(g);
    }

    let mut report = BTreeMap::new();
    for (&object_id, records) in &by_object {
        let mut gaps: Vec<(u64, u64)> = Vec::new();
        let mut open: Option<(u64, u64)> = None;
        for g in records {
            let detected = dets_by_frame
                .get(&g.frame)
                .map(|ds| ds.iter().any(|d| crate::geometry::iou3d(&d.bbox, &g.bbox) > 0.1))
                .unwrap_or(false);
            match (detected, open) {
                (false, None) => open = Some((g.frame, g.frame)),
                (false, Some((s, _))) => open = Some((s, g.frame)),
                (true, Some(gap)) => {
                    gaps.push(gap);
                    open = None;
                }
                (true, None) => {}
            }
        }
        if let Some(gap) = open {
            gaps.push(gap);
        }
        report.insert(object_id, gaps);
    }
    report
}
