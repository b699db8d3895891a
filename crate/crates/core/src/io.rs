//! Line-oriented text formats for detection streams, track outputs, and
//! ground truth, plus the `key = value` configuration file.
//!
//! Every data file starts with an exact header line; after it, blank lines
//! and lines starting with `#` are ignored. Floating-point values are
//! written in shortest round-trip form, so parse-then-write preserves every
//! value bit-exactly and identical inputs produce byte-identical files.

use crate::association::SimilarityMetric;
use crate::geometry::Box3D;
use crate::kalman::{OBS_DIM, STATE_DIM};
use crate::metrics::{GtRecord, TrackRecord};
use crate::preprocess::{Detection, PreprocessConfig};
use crate::simulate::ScenarioConfig;
use crate::tracker::{FrameResult, TrackerConfig, TrackerMode};
use std::collections::HashSet;
use std::fmt::Write as _;
use thiserror::Error;

pub const DETS_HEADER: &str = "#immortal-dets v1";
pub const TRACKS_HEADER: &str = "#immortal-tracks v1";
pub const GT_HEADER: &str = "#immortal-gt v1";

#[derive(Debug, Error, PartialEq)]
pub enum ParseError {
    #[error("line 1: expected header '{expected}', found '{found}'")]
    BadHeader { expected: &'static str, found: String },
    #[error("line {line}: {message}")]
    Record { line: usize, message: String },
    /// A well-formed line that breaks a cross-record invariant (frame
    /// ordering, duplicate keys); a data-consistency error rather than a
    /// parse error.
    #[error("line {line}: {message}")]
    Consistency { line: usize, message: String },
    #[error("{0}")]
    Invalid(String),
}

fn record_err(line: usize, message: impl Into<String>) -> ParseError {
    ParseError::Record {
        line,
        message: message.into(),
    }
}

fn consistency_err(line: usize, message: impl Into<String>) -> ParseError {
    ParseError::Consistency {
        line,
        message: message.into(),
    }
}

/// Iterate data lines (1-based line numbers), validating the header first.
fn data_lines<'a>(
    text: &'a str,
    header: &'static str,
) -> Result<impl Iterator<Item = (usize, &'a str)>, ParseError> {
    let mut lines = text.lines();
    let first = lines.next().unwrap_or("");
    if first.trim_end() != header {
        return Err(ParseError::BadHeader {
            expected: header,
            found: first.to_string(),
        });
    }
    Ok(lines.enumerate().filter_map(|(i, raw)| {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            None
        } else {
            Some((i + 2, line))
        }
    }))
}

fn parse_f64(line: usize, field: &str, token: &str) -> Result<f64, ParseError> {
    let v: f64 = token
        .parse()
        .map_err(|_| record_err(line, format!("invalid {field} '{token}'")))?;
    if !v.is_finite() {
        return Err(record_err(line, format!("{field} must be finite")));
    }
    Ok(v)
}

fn parse_u64(line: usize, field: &str, token: &str) -> Result<u64, ParseError> {
    token
        .parse()
        .map_err(|_| record_err(line, format!("invalid {field} '{token}'")))
}

fn parse_box(line: usize, fields: &[&str]) -> Result<Box3D, ParseError> {
    let names = ["x", "y", "z", "yaw", "l", "w", "h"];
    let mut vals = [0.0f64; 7];
    for (i, name) in names.iter().enumerate() {
        vals[i] = parse_f64(line, name, fields[i])?;
    }
    Box3D::new(
        vals[0], vals[1], vals[2], vals[3], vals[4], vals[5], vals[6],
    )
    .map_err(|e| record_err(line, e.to_string()))
}

fn parse_score(line: usize, token: &str) -> Result<f64, ParseError> {
    let score = parse_f64(line, "score", token)?;
    if !(0.0..=1.0).contains(&score) {
        return Err(record_err(line, format!("score {score} outside [0, 1]")));
    }
    Ok(score)
}

/// Parse a detection file: records `frame score x y z yaw l w h`, frames
/// non-decreasing.
pub fn parse_detections(text: &str) -> Result<Vec<Detection>, ParseError> {
    let mut out = Vec::new();
    let mut last_frame = None;
    for (line, content) in data_lines(text, DETS_HEADER)? {
        let fields: Vec<&str> = content.split_whitespace().collect();
        if fields.len() < 9 {
            return Err(record_err(
                line,
                format!("expected at least 9 fields, found {}", fields.len()),
            ));
        }
        let frame = parse_u64(line, "frame", fields[0])?;
        if let Some(last) = last_frame {
            if frame < last {
                return Err(consistency_err(
                    line,
                    format!("frame {frame} descends below previous frame {last}"),
                ));
            }
        }
        last_frame = Some(frame);
        out.push(Detection {
            frame,
            score: parse_score(line, fields[1])?,
            bbox: parse_box(line, &fields[2..9])?,
        });
    }
    Ok(out)
}

/// Parse a track file: records `frame track_id score x y z yaw l w h`,
/// (frame, id) unique, ids positive.
pub fn parse_tracks(text: &str) -> Result<Vec<TrackRecord>, ParseError> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (line, content) in data_lines(text, TRACKS_HEADER)? {
        let fields: Vec<&str> = content.split_whitespace().collect();
        if fields.len() < 10 {
            return Err(record_err(
                line,
                format!("expected at least 10 fields, found {}", fields.len()),
            ));
        }
        let frame = parse_u64(line, "frame", fields[0])?;
        let track_id = parse_u64(line, "track_id", fields[1])?;
        if track_id == 0 {
            return Err(record_err(line, "track_id must be positive"));
        }
        if !seen.insert((frame, track_id)) {
            return Err(consistency_err(
                line,
                format!("duplicate (frame, track_id) = ({frame}, {track_id})"),
            ));
        }
        out.push(TrackRecord {
            frame,
            track_id,
            score: parse_score(line, fields[2])?,
            bbox: parse_box(line, &fields[3..10])?,
        });
    }
    Ok(out)
}

/// Parse a ground-truth file: records
/// `frame object_id visible x y z yaw l w h`, visible in {0, 1},
/// (frame, object_id) unique.
pub fn parse_gt(text: &str) -> Result<Vec<GtRecord>, ParseError> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (line, content) in data_lines(text, GT_HEADER)? {
        let fields: Vec<&str> = content.split_whitespace().collect();
        if fields.len() < 10 {
            return Err(record_err(
                line,
                format!("expected at least 10 fields, found {}", fields.len()),
            ));
        }
        let frame = parse_u64(line, "frame", fields[0])?;
        let object_id = parse_u64(line, "object_id", fields[1])?;
        if !seen.insert((frame, object_id)) {
            return Err(consistency_err(
                line,
                format!("duplicate (frame, object_id) = ({frame}, {object_id})"),
            ));
        }
        let visible = match fields[2] {
            "0" => false,
            "1" => true,
            other => {
                return Err(record_err(
                    line,
                    format!("visible must be 0 or 1, found '{other}'"),
                ))
            }
        };
        out.push(GtRecord {
            frame,
            object_id,
            visible,
            bbox: parse_box(line, &fields[3..10])?,
        });
    }
    Ok(out)
}

fn push_box(line: &mut String, b: &Box3D) {
    write!(
        line,
        "{} {} {} {} {} {} {}",
        b.x(),
        b.y(),
        b.z(),
        b.yaw(),
        b.l(),
        b.w(),
        b.h()
    )
    .expect("writing to string");
}

/// Render a detection file; `comments` become `# ...` lines after the header.
pub fn render_detections(dets: &[Detection], comments: &[String]) -> String {
    let mut out = String::new();
    out.push_str(DETS_HEADER);
    out.push('\n');
    for c in comments {
        out.push_str("# ");
        out.push_str(c);
        out.push('\n');
    }
    for d in dets {
        let mut line = format!("{} {} ", d.frame, d.score);
        push_box(&mut line, &d.bbox);
        out.push_str(&line);
        out.push('\n');
    }
    out
}

pub fn render_tracks(records: &[TrackRecord], comments: &[String]) -> String {
    let mut out = String::new();
    out.push_str(TRACKS_HEADER);
    out.push('\n');
    for c in comments {
        out.push_str("# ");
        out.push_str(c);
        out.push('\n');
    }
    for r in records {
        let mut line = format!("{} {} {} ", r.frame, r.track_id, r.score);
        push_box(&mut line, &r.bbox);
        out.push_str(&line);
        out.push('\n');
    }
    out
}

pub fn render_gt(records: &[GtRecord], comments: &[String]) -> String {
    let mut out = String::new();
    out.push_str(GT_HEADER);
    out.push('\n');
    for c in comments {
        out.push_str("# ");
        out.push_str(c);
        out.push('\n');
    }
    for r in records {
        let mut line = format!(
            "{} {} {} ",
            r.frame,
            r.object_id,
            if r.visible { 1 } else { 0 }
        );
        push_box(&mut line, &r.bbox);
        out.push_str(&line);
        out.push('\n');
    }
    out
}

/// Flatten tracker frame results into track-file records.
pub fn track_records(results: &[FrameResult]) -> Vec<TrackRecord> {
    results
        .iter()
        .flat_map(|r| {
            r.outputs.iter().map(|o| TrackRecord {
                frame: r.frame,
                track_id: o.track_id,
                score: o.score,
                bbox: o.bbox,
            })
        })
        .collect()
}

/// Everything the command-line workflows need, with defaults for anything
/// the file leaves unset.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigSet {
    pub preprocess: PreprocessConfig,
    pub tracker: TrackerConfig,
    pub eval_match_iou: f64,
    pub scenario: ScenarioConfig,
}

impl Default for ConfigSet {
    fn default() -> Self {
        Self {
            preprocess: PreprocessConfig::default(),
            tracker: TrackerConfig::default(),
            eval_match_iou: 0.5,
            scenario: ScenarioConfig::default(),
        }
    }
}

fn parse_comma_list<const N: usize>(
    line: usize,
    key: &str,
    value: &str,
) -> Result<[f64; N], ParseError> {
    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
    if parts.len() != N {
        return Err(record_err(
            line,
            format!("{key} needs {N} comma-separated values, found {}", parts.len()),
        ));
    }
    let mut out = [0.0; N];
    for (i, p) in parts.iter().enumerate() {
        out[i] = parse_f64(line, key, p)?;
        if out[i] <= 0.0 {
            return Err(record_err(line, format!("{key} entries must be > 0")));
        }
    }
    Ok(out)
}

/// Parse a configuration file: `[section]` headers and `key = value` lines.
/// Unknown sections and keys are rejected with their line number. If the
/// association gate is not set explicitly it follows the metric's default
/// (0.1 for IoU, -0.5 for GIoU).
pub fn parse_config(text: &str) -> Result<ConfigSet, ParseError> {
    let mut cfg = ConfigSet::default();
    let mut section = String::new();
    let mut gate_explicit = false;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        // Strip trailing comments; a line that is all comment is skipped.
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(name) = content.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| record_err(line, "unterminated section header"))?
                .trim();
            match name {
                "preprocess" | "association" | "kalman" | "tracker" | "eval" | "simulate" => {
                    section = name.to_string();
                }
                other => return Err(record_err(line, format!("unknown section '[{other}]'"))),
            }
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(record_err(line, "expected 'key = value'"));
        };
        let key = key.trim();
        let value = value.trim();
        let unknown =
            |line: usize| record_err(line, format!("unknown key '{key}' in section '[{section}]'"));

        match section.as_str() {
            "preprocess" => match key {
                "score_min" => cfg.preprocess.score_min = parse_unit(line, key, value)?,
                "nms_iou" => cfg.preprocess.nms_iou = parse_unit(line, key, value)?,
                _ => return Err(unknown(line)),
            },
            "association" => match key {
                "metric" => {
                    cfg.tracker.assoc.metric = match value {
                        "iou" | "iou3d" => SimilarityMetric::Iou3d,
                        "giou" | "giou3d" => SimilarityMetric::Giou3d,
                        other => {
                            return Err(record_err(
                                line,
                                format!("metric must be 'iou' or 'giou', found '{other}'"),
                            ))
                        }
                    }
                }
                "gate" => {
                    cfg.tracker.assoc.gate = parse_f64(line, key, value)?;
                    gate_explicit = true;
                }
                _ => return Err(unknown(line)),
            },
            "kalman" => match key {
                "p0" => cfg.tracker.kf.p0_diag = parse_comma_list::<STATE_DIM>(line, key, value)?,
                "q" => cfg.tracker.kf.q_diag = parse_comma_list::<STATE_DIM>(line, key, value)?,
                "r" => cfg.tracker.kf.r_diag = parse_comma_list::<OBS_DIM>(line, key, value)?,
                _ => return Err(unknown(line)),
            },
            "tracker" => match key {
                "mode" => {
                    cfg.tracker.mode = match value {
                        "immortal" => TrackerMode::Immortal,
                        "baseline" => TrackerMode::Baseline,
                        other => {
                            return Err(record_err(
                                line,
                                format!("mode must be 'immortal' or 'baseline', found '{other}'"),
                            ))
                        }
                    }
                }
                "m_hits" => cfg.tracker.m_hits = parse_u64(line, key, value)? as u32,
                "a_max" => {
                    let v = parse_u64(line, key, value)? as u32;
                    if v == 0 {
                        return Err(record_err(line, "a_max must be >= 1"));
                    }
                    cfg.tracker.a_max = v;
                }
                _ => return Err(unknown(line)),
            },
            "eval" => match key {
                "match_iou" => cfg.eval_match_iou = parse_unit(line, key, value)?,
                _ => return Err(unknown(line)),
            },
            "simulate" => {
                let s = &mut cfg.scenario;
                match key {
                    "seed" => s.seed = parse_u64(line, key, value)?,
                    "num_objects" => s.num_objects = parse_u64(line, key, value)?,
                    "num_frames" => s.num_frames = parse_u64(line, key, value)?,
                    "world_extent" => s.world_extent = parse_positive(line, key, value)?,
                    "speed_min" => s.speed_range.0 = parse_f64(line, key, value)?,
                    "speed_max" => s.speed_range.1 = parse_f64(line, key, value)?,
                    "turn_rate_min" => s.turn_rate_range.0 = parse_f64(line, key, value)?,
                    "turn_rate_max" => s.turn_rate_range.1 = parse_f64(line, key, value)?,
                    "occlusion_probability" => {
                        s.occlusion.probability = parse_unit(line, key, value)?
                    }
                    "occlusion_min" => {
                        let v = parse_u64(line, key, value)?;
                        if v == 0 {
                            return Err(record_err(line, "occlusion_min must be >= 1"));
                        }
                        s.occlusion.min_duration = v;
                    }
                    "occlusion_max" => s.occlusion.max_duration = parse_u64(line, key, value)?,
                    "pos_noise" => s.detector.pos_sigma = parse_f64(line, key, value)?,
                    "yaw_noise" => s.detector.yaw_sigma = parse_f64(line, key, value)?,
                    "size_noise" => s.detector.size_sigma = parse_f64(line, key, value)?,
                    "dropout" => s.detector.dropout = parse_unit(line, key, value)?,
                    "fp_rate" => s.detector.fp_rate = parse_f64(line, key, value)?,
                    "tp_score_min" => s.detector.tp_score_range.0 = parse_unit(line, key, value)?,
                    "tp_score_max" => s.detector.tp_score_range.1 = parse_unit(line, key, value)?,
                    "fp_score_min" => s.detector.fp_score_range.0 = parse_unit(line, key, value)?,
                    "fp_score_max" => s.detector.fp_score_range.1 = parse_unit(line, key, value)?,
                    _ => return Err(unknown(line)),
                }
            }
            "" => return Err(record_err(line, "key before any [section] header")),
            _ => unreachable!("sections validated on entry"),
        }
    }

    if !gate_explicit {
        cfg.tracker.assoc.gate = cfg.tracker.assoc.metric.default_gate();
    }
    let gate = cfg.tracker.assoc.gate;
    let gate_ok = match cfg.tracker.assoc.metric {
        SimilarityMetric::Iou3d => (0.0..=1.0).contains(&gate),
        SimilarityMetric::Giou3d => gate > -1.0 && gate <= 1.0,
    };
    if !gate_ok {
        return Err(ParseError::Invalid(format!(
            "association gate {gate} outside the metric's range"
        )));
    }
    if cfg.scenario.occlusion.min_duration > cfg.scenario.occlusion.max_duration {
        return Err(ParseError::Invalid(
            "occlusion_min must not exceed occlusion_max".into(),
        ));
    }
    if cfg.scenario.speed_range.0 > cfg.scenario.speed_range.1
        || cfg.scenario.turn_rate_range.0 > cfg.scenario.turn_rate_range.1
    {
        return Err(ParseError::Invalid(
            "range minimums must not exceed maximums".into(),
        ));
    }
    Ok(cfg)
}

fn parse_unit(line: usize, key: &str, value: &str) -> Result<f64, ParseError> {
    let v = parse_f64(line, key, value)?;
    if !(0.0..=1.0).contains(&v) {
        return Err(record_err(line, format!("{key} must lie in [0, 1]")));
    }
    Ok(v)
}

fn parse_positive(line: usize, key: &str, value: &str) -> Result<f64, ParseError> {
    let v = parse_f64(line, key, value)?;
    if v <= 0.0 {
        return Err(record_err(line, format!("{key} must be > 0")));
    }
    Ok(v)
}

/// Render a configuration back out with every key explicit.
pub fn render_config(cfg: &ConfigSet) -> String {
    let metric = match cfg.tracker.assoc.metric {
        SimilarityMetric::Iou3d => "iou",
        SimilarityMetric::Giou3d => "giou",
    };
    let mode = match cfg.tracker.mode {
        TrackerMode::Immortal => "immortal",
        TrackerMode::Baseline => "baseline",
    };
    let list = |v: &[f64]| {
        v.iter()
            .map(|x| x.to_string())
            .collect::<Vec<_>>()
            .join(",")
    };
    let s = &cfg.scenario;
    format!(
        "[preprocess]\nscore_min = {}\nnms_iou = {}\n\n\
         [association]\nmetric = {}\ngate = {}\n\n\
         [kalman]\np0 = {}\nq = {}\nr = {}\n\n\
         [tracker]\nmode = {}\nm_hits = {}\na_max = {}\n\n\
         [eval]\nmatch_iou = {}\n\n\
         [simulate]\nseed = {}\nnum_objects = {}\nnum_frames = {}\nworld_extent = {}\n\
         speed_min = {}\nspeed_max = {}\nturn_rate_min = {}\nturn_rate_max = {}\n\
         occlusion_probability = {}\nocclusion_min = {}\nocclusion_max = {}\n\
         pos_noise = {}\nyaw_noise = {}\nsize_noise = {}\ndropout = {}\nfp_rate = {}\n\
         tp_score_min = {}\ntp_score_max = {}\nfp_score_min = {}\nfp_score_max = {}\n",
        cfg.preprocess.score_min,
        cfg.preprocess.nms_iou,
        metric,
        cfg.tracker.assoc.gate,
        list(&cfg.tracker.kf.p0_diag),
        list(&cfg.tracker.kf.q_diag),
        list(&cfg.tracker.kf.r_diag),
        mode,
        cfg.tracker.m_hits,
        cfg.tracker.a_max,
        cfg.eval_match_iou,
        s.seed,
        s.num_objects,
        s.num_frames,
        s.world_extent,
        s.speed_range.0,
        s.speed_range.1,
        s.turn_rate_range.0,
        s.turn_rate_range.1,
        s.occlusion.probability,
        s.occlusion.min_duration,
        s.occlusion.max_duration,
        s.detector.pos_sigma,
        s.detector.yaw_sigma,
        s.detector.size_sigma,
        s.detector.dropout,
        s.detector.fp_rate,
        s.detector.tp_score_range.0,
        s.detector.tp_score_range.1,
        s.detector.fp_score_range.0,
        s.detector.fp_score_range.1,
    )
}


#[cfg(test)]
mod prop_tests {
    use super::*;
    use proptest::prelude::*;

    fn arb_box() -> impl Strategy<Value = Box3D> {
        (
            -500.0f64..500.0,
            -500.0f64..500.0,
            -10.0f64..10.0,
            -10.0f64..10.0,
            0.01f64..50.0,
            0.01f64..50.0,
            0.01f64..50.0,
        )
            .prop_map(|(x, y, z, yaw, l, w, h)| Box3D::new(x, y, z, yaw, l, w, h).unwrap())
    }

    proptest! {
        /// parse(render(x)) is the identity for all three record shapes;
        /// shortest round-trip float formatting makes this exact.
        #[test]
        fn formats_round_trip_exactly(
            boxes in proptest::collection::vec((arb_box(), 0.0f64..1.0), 0..20),
        ) {
            let dets: Vec<Detection> = boxes
                .iter()
                .enumerate()
                .map(|(i, (bbox, score))| Detection { bbox: *bbox, score: *score, frame: i as u64 / 3 })
                .collect();
            prop_assert_eq!(&parse_detections(&render_detections(&dets, &[])).unwrap(), &dets);

            let tracks: Vec<TrackRecord> = boxes
                .iter()
                .enumerate()
                .map(|(i, (bbox, score))| TrackRecord {
                    frame: i as u64 / 3,
                    track_id: i as u64 + 1,
                    score: *score,
                    bbox: *bbox,
                })
                .collect();
            prop_assert_eq!(&parse_tracks(&render_tracks(&tracks, &[])).unwrap(), &tracks);

            let gts: Vec<GtRecord> = boxes
                .iter()
                .enumerate()
                .map(|(i, (bbox, score))| GtRecord {
                    frame: i as u64 / 3,
                    object_id: i as u64 + 1,
                    visible: *score > 0.5,
                    bbox: *bbox,
                })
                .collect();
            prop_assert_eq!(&parse_gt(&render_gt(&gts, &[])).unwrap(), &gts);
        }
    }
}
