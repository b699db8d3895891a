//! Command-line frontend binding the tracking engine into four workflows:
//! `track` a detection file, `eval` tracks against ground truth, `simulate`
//! a synthetic scenario, and `ablate` one parameter across a value sweep.
//!
//! Exit codes: 0 success, 1 usage or parse error, 2 data-consistency error.

use clap::{Parser, Subcommand};
use immortal_core::association::SimilarityMetric;
use immortal_core::io::{self, ConfigSet, ParseError};
use immortal_core::metrics::{clear_mot, EvalReport, GtRecord, MetricsError, TrackRecord};
use immortal_core::preprocess::{preprocess_stream, Detection, PreprocessConfig};
use immortal_core::simulate::{generate, GENERATOR_ID};
use immortal_core::tracker::{Tracker, TrackerConfig, TrackerError, TrackerMode};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "immortal", version, about = "3D multi-object tracking engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Track a detection stream and write the resulting track file.
    Track {
        /// Detection file (#immortal-dets v1).
        #[arg(long)]
        dets: PathBuf,
        /// Configuration file.
        #[arg(long)]
        config: PathBuf,
        /// Output track file (#immortal-tracks v1).
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a track file against ground truth and print the report.
    Eval {
        /// Ground-truth file (#immortal-gt v1).
        #[arg(long)]
        gt: PathBuf,
        /// Track file to score.
        #[arg(long)]
        tracks: PathBuf,
        #[arg(long)]
        config: PathBuf,
    },
    /// Generate a synthetic scenario: paired ground-truth and detections.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "out-dets")]
        out_dets: PathBuf,
        #[arg(long = "out-gt")]
        out_gt: PathBuf,
    },
    /// Run track + eval across a parameter sweep and tabulate the reports.
    Ablate {
        #[arg(long)]
        dets: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Sweep spec KEY=v1,v2,... with KEY one of a_max, m_hits, gate,
        /// nms_iou. Sweep values override the config file.
        #[arg(long)]
        sweep: String,
        /// Optional plot-data file: one `x mismatch_pct mota` line per value.
        #[arg(long = "plot-out")]
        plot_out: Option<PathBuf>,
    },
}

enum CliError {
    Usage(String),
    Data(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) => m,
        }
    }
}

fn parse_error(path: &Path, err: ParseError) -> CliError {
    let msg = format!("{}: {err}", path.display());
    match err {
        ParseError::Consistency { .. } => CliError::Data(msg),
        _ => CliError::Usage(msg),
    }
}

fn tracker_error(err: TrackerError) -> CliError {
    CliError::Data(err.to_string())
}

fn metrics_error(err: MetricsError) -> CliError {
    CliError::Data(err.to_string())
}

fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn load_config(path: &Path) -> Result<ConfigSet, CliError> {
    io::parse_config(&read_file(path)?).map_err(|e| parse_error(path, e))
}

fn load_detections(path: &Path) -> Result<Vec<Detection>, CliError> {
    io::parse_detections(&read_file(path)?).map_err(|e| parse_error(path, e))
}

fn load_gt(path: &Path) -> Result<Vec<GtRecord>, CliError> {
    io::parse_gt(&read_file(path)?).map_err(|e| parse_error(path, e))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Help and version requests are not errors.
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message());
            ExitCode::from(err.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Track { dets, config, out } => cmd_track(&dets, &config, &out),
        Command::Eval { gt, tracks, config } => cmd_eval(&gt, &tracks, &config),
        Command::Simulate {
            config,
            out_dets,
            out_gt,
        } => cmd_simulate(&config, &out_dets, &out_gt),
        Command::Ablate {
            dets,
            gt,
            config,
            sweep,
            plot_out,
        } => cmd_ablate(&dets, &gt, &config, &sweep, plot_out.as_deref()),
    }
}

/// Preprocess, track, and flatten one detection stream.
fn track_stream(
    dets: &[Detection],
    preprocess: &PreprocessConfig,
    tracker_cfg: &TrackerConfig,
) -> Result<(Vec<TrackRecord>, Tracker), CliError> {
    let conditioned = preprocess_stream(dets, preprocess);
    let mut tracker = Tracker::new(tracker_cfg.clone());
    let results = tracker.run(&conditioned).map_err(tracker_error)?;
    Ok((io::track_records(&results), tracker))
}

fn cmd_track(dets_path: &Path, config_path: &Path, out_path: &Path) -> Result<(), CliError> {
    let cfg = load_config(config_path)?;
    let dets = load_detections(dets_path)?;
    let (records, tracker) = track_stream(&dets, &cfg.preprocess, &cfg.tracker)?;
    write_file(out_path, &io::render_tracks(&records, &[]))?;
    eprintln!(
        "tracklets={} frames={} matches={}",
        tracker.tracklets_created(),
        tracker.frames_processed(),
        tracker.total_matches()
    );
    Ok(())
}

fn print_report(report: &EvalReport) {
    println!("mota={:.6}", report.mota);
    println!("fp_pct={:.6}", report.fp_pct);
    println!("miss_pct={:.6}", report.miss_pct);
    println!("mismatch_pct={:.6}", report.mismatch_pct);
    println!("ids={:.6}", report.mismatch as f64);
    println!("ids_early_termination={:.6}", report.ids_early_termination as f64);
    println!("ids_wrong_association={:.6}", report.ids_wrong_association as f64);
    println!("num_gt={}", report.num_gt);
    println!("fp={}", report.fp);
    println!("miss={}", report.miss);
    println!("mismatch={}", report.mismatch);
}

fn cmd_eval(gt_path: &Path, tracks_path: &Path, config_path: &Path) -> Result<(), CliError> {
    let cfg = load_config(config_path)?;
    let gt = load_gt(gt_path)?;
    let tracks =
        io::parse_tracks(&read_file(tracks_path)?).map_err(|e| parse_error(tracks_path, e))?;
    let result = clear_mot(&gt, &tracks, cfg.eval_match_iou).map_err(metrics_error)?;
    print_report(&result.report);
    Ok(())
}

fn cmd_simulate(config_path: &Path, out_dets: &Path, out_gt: &Path) -> Result<(), CliError> {
    let cfg = load_config(config_path)?;
    let (gt, dets) = generate(&cfg.scenario);
    let comments = vec![format!(
        "generator {GENERATOR_ID} seed={}",
        cfg.scenario.seed
    )];
    write_file(out_dets, &io::render_detections(&dets, &comments))?;
    write_file(out_gt, &io::render_gt(&gt, &comments))?;
    eprintln!(
        "objects={} frames={} gt_records={} detections={}",
        cfg.scenario.num_objects,
        cfg.scenario.num_frames,
        gt.len(),
        dets.len()
    );
    Ok(())
}

const SWEEP_KEYS: [&str; 4] = ["a_max", "m_hits", "gate", "nms_iou"];

/// Apply one sweep value on top of the base configuration. Sweeping a_max
/// only makes sense with termination enabled, so it forces baseline mode.
fn apply_sweep(cfg: &ConfigSet, key: &str, raw: &str) -> Result<ConfigSet, CliError> {
    let mut out = cfg.clone();
    let usage = |msg: String| CliError::Usage(msg);
    match key {
        "a_max" => {
            let v: u32 = raw
                .parse()
                .map_err(|_| usage(format!("invalid a_max value '{raw}'")))?;
            if v == 0 {
                return Err(usage("a_max must be >= 1".into()));
            }
            out.tracker.a_max = v;
            out.tracker.mode = TrackerMode::Baseline;
        }
        "m_hits" => {
            out.tracker.m_hits = raw
                .parse()
                .map_err(|_| usage(format!("invalid m_hits value '{raw}'")))?;
        }
        "gate" => {
            let v: f64 = raw
                .parse()
                .map_err(|_| usage(format!("invalid gate value '{raw}'")))?;
            let ok = match out.tracker.assoc.metric {
                SimilarityMetric::Iou3d => (0.0..=1.0).contains(&v),
                SimilarityMetric::Giou3d => v > -1.0 && v <= 1.0,
            };
            if !ok {
                return Err(usage(format!("gate {v} outside the metric's range")));
            }
            out.tracker.assoc.gate = v;
        }
        "nms_iou" => {
            let v: f64 = raw
                .parse()
                .map_err(|_| usage(format!("invalid nms_iou value '{raw}'")))?;
            if !(0.0..=1.0).contains(&v) {
                return Err(usage("nms_iou must lie in [0, 1]".into()));
            }
            out.preprocess.nms_iou = v;
        }
        _ => unreachable!("validated before"),
    }
    Ok(out)
}

fn cmd_ablate(
    dets_path: &Path,
    gt_path: &Path,
    config_path: &Path,
    sweep: &str,
    plot_out: Option<&Path>,
) -> Result<(), CliError> {
    let Some((key, values)) = sweep.split_once('=') else {
        return Err(CliError::Usage(format!(
            "sweep must look like KEY=v1,v2,...; valid keys: {}",
            SWEEP_KEYS.join(", ")
        )));
    };
    let key = key.trim();
    if !SWEEP_KEYS.contains(&key) {
        return Err(CliError::Usage(format!(
            "unknown sweep key '{key}'; valid keys: {}",
            SWEEP_KEYS.join(", ")
        )));
    }
    let values: Vec<&str> = values.split(',').map(str::trim).collect();
    if values.is_empty() || values.iter().any(|v| v.is_empty()) {
        return Err(CliError::Usage("sweep needs at least one value".into()));
    }

    let base = load_config(config_path)?;
    let dets = load_detections(dets_path)?;
    let gt = load_gt(gt_path)?;
    let runs: Vec<(&str, ConfigSet)> = values
        .into_iter()
        .map(|raw| apply_sweep(&base, key, raw).map(|cfg| (raw, cfg)))
        .collect::<Result<_, _>>()?;

    println!(
        "{:<14} {:>10} {:>10} {:>10} {:>14} {:>8} {:>8} {:>8}",
        "value", "mota", "fp_pct", "miss_pct", "mismatch_pct", "ids", "ids_et", "ids_wa"
    );
    let mut plot = String::new();
    for (raw, cfg) in runs {
        let (records, _) = track_stream(&dets, &cfg.preprocess, &cfg.tracker)?;
        let report = clear_mot(&gt, &records, cfg.eval_match_iou)
            .map_err(metrics_error)?
            .report;
        println!(
            "{:<14} {:>10.6} {:>10.6} {:>10.6} {:>14.6} {:>8} {:>8} {:>8}",
            format!("{key}={raw}"),
            report.mota,
            report.fp_pct,
            report.miss_pct,
            report.mismatch_pct,
            report.mismatch,
            report.ids_early_termination,
            report.ids_wrong_association
        );
        writeln!(plot, "{raw} {:.6} {:.6}", report.mismatch_pct, report.mota)
            .expect("writing to string");
    }
    if let Some(path) = plot_out {
        write_file(path, &plot)?;
    }
    Ok(())
}
