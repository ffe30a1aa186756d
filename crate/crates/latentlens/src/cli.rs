//! Command-line pipeline wiring: JSON configs, the two end-to-end
//! pipelines, deterministic artifacts and provenance for replay.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::amplify::{
    dif_filter, sign_split_normalize, wallcam_amplify, DifAmplifySpec, WallcamAmplifySpec,
};
use crate::detect::{analyze, noise_floor, DetectionReport, DetectionSpec, NoiseFloor};
use crate::error::{LensError, Result};
use crate::flicker::{global_median_curve, project_out};
use crate::reference::{
    build_reference, log_space, subtract_reference, ReferenceMode, ReferenceSpec, Space,
    DEFAULT_LOG_EPSILON,
};
use crate::spacetime::{render_plot, spacetime_project, PlotAxis, Reduction};
use crate::synth::{corpus, Base, FlickerSpec, SceneSpec, SubjectSpec, SwayAxis, Trajectory};
use crate::video::{load_clip, save_clip, Clip, ClipFormat, Frame};

/// Which of the two named pipelines a config drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineKind {
    Dif,
    Wallcam,
}

/// Rectangular region-of-interest crop, applied before any processing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Roi {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

/// Spatio-temporal filter the detector runs on, independent of which
/// pipeline produced the residual.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionFilter {
    pub gaussian_sigma: f32,
    pub temporal_window: usize,
}

/// One pipeline run, fully described.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub input: PathBuf,
    pub pipeline: PipelineKind,
    pub reference: ReferenceSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dif: Option<DifAmplifySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wallcam: Option<WallcamAmplifySpec>,
    #[serde(default)]
    pub flicker_correction: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_epsilon: Option<f32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub roi: Option<Roi>,
    #[serde(default)]
    pub detection: DetectionSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detection_filter: Option<DetectionFilter>,
    /// Known-empty frame range `[t0, t1)` for noise calibration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub empty_interval: Option<[usize; 2]>,
    pub output: PathBuf,
}

impl PipelineConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<PipelineConfig> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| LensError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: PipelineConfig = serde_json::from_str(&text)
            .map_err(|e| LensError::Config(format!("bad config {}: {e}", path.display())))?;
        cfg.validated()
    }

    /// Check cross-field consistency and fill derived defaults.
    pub fn validated(mut self) -> Result<PipelineConfig> {
        match self.pipeline {
            PipelineKind::Dif => {
                if self.dif.is_none() {
                    return Err(LensError::Config(
                        "pipeline `dif` requires the `dif` amplify spec".into(),
                    ));
                }
                if self.wallcam.is_some() {
                    return Err(LensError::Config(
                        "pipeline `dif` forbids the `wallcam` gain/base spec".into(),
                    ));
                }
                if self.reference.space != Space::Linear {
                    return Err(LensError::Config(
                        "the dif pipeline works in linear space; set reference.space = linear"
                            .into(),
                    ));
                }
                if self.reference.mode != ReferenceMode::SubInterval {
                    return Err(LensError::Config(
                        "the dif pipeline uses a sub-interval reference".into(),
                    ));
                }
                if self.flicker_correction {
                    return Err(LensError::Config(
                        "flicker correction belongs to the wallcam pipeline".into(),
                    ));
                }
                if self.log_epsilon.is_some() {
                    return Err(LensError::Config(
                        "log_epsilon only applies to the wallcam pipeline".into(),
                    ));
                }
                let spec = self.dif.as_ref().unwrap();
                if spec.temporal_window % 2 == 0 {
                    return Err(LensError::Config(
                        "dif.temporal_window must be odd".into(),
                    ));
                }
                if self.empty_interval.is_none() {
                    self.empty_interval = self.reference.interval;
                }
                if self.detection_filter.is_none() {
                    self.detection_filter = Some(DetectionFilter {
                        gaussian_sigma: spec.gaussian_sigma,
                        temporal_window: spec.temporal_window,
                    });
                }
            }
            PipelineKind::Wallcam => {
                if self.wallcam.is_none() {
                    return Err(LensError::Config(
                        "pipeline `wallcam` requires the `wallcam` amplify spec".into(),
                    ));
                }
                if self.dif.is_some() {
                    return Err(LensError::Config(
                        "pipeline `wallcam` forbids the `dif` sign-split spec".into(),
                    ));
                }
                if self.reference.space != Space::Log {
                    return Err(LensError::Config(
                        "the wallcam pipeline works in log space; set reference.space = log"
                            .into(),
                    ));
                }
                if self.reference.mode != ReferenceMode::WholeVideo {
                    return Err(LensError::Config(
                        "the wallcam pipeline uses the whole-video reference".into(),
                    ));
                }
                if self.log_epsilon.is_none() {
                    self.log_epsilon = Some(DEFAULT_LOG_EPSILON);
                }
                if self.detection_filter.is_none() {
                    self.detection_filter = Some(DetectionFilter {
                        gaussian_sigma: 3.0,
                        temporal_window: 25,
                    });
                }
            }
        }
        if let Some(roi) = &self.roi {
            if roi.width == 0 || roi.height == 0 {
                return Err(LensError::Config("roi must have positive size".into()));
            }
        }
        self.detection
            .validate()
            .map_err(|e| LensError::Config(format!("detection spec: {e}")))?;
        Ok(self)
    }
}

/// Post-reference (and post-flicker) residual plus what happened on the way.
pub struct ResidualStage {
    pub residual: Clip,
    pub flicker_applied: bool,
    pub flicker_skipped_zero_norm: bool,
    /// The global curve that was projected out, for CSV export.
    pub flicker_curve: Option<crate::flicker::GlobalCurve>,
}

/// Load the configured input and apply the ROI crop.
pub fn load_input(config: &PipelineConfig) -> Result<Clip> {
    let clip = load_clip(&config.input)?;
    match &config.roi {
        Some(r) => clip.crop(r.x, r.y, r.width, r.height),
        None => Ok(clip),
    }
}

/// Run the extraction stage of the configured pipeline.
pub fn residual_stage(config: &PipelineConfig, clip: &Clip) -> Result<ResidualStage> {
    match config.pipeline {
        PipelineKind::Dif => {
            let reference = build_reference(clip, config.reference)?;
            let residual = subtract_reference(clip, &reference)?;
            Ok(ResidualStage {
                residual,
                flicker_applied: false,
                flicker_skipped_zero_norm: false,
                flicker_curve: None,
            })
        }
        PipelineKind::Wallcam => {
            let log = log_space(clip, config.log_epsilon.unwrap_or(DEFAULT_LOG_EPSILON))?;
            let reference = build_reference(&log, config.reference)?;
            let mut residual = subtract_reference(&log, &reference)?;
            let mut skipped = false;
            let mut curve_out = None;
            if config.flicker_correction {
                let curve = global_median_curve(&residual);
                let outcome = project_out(&residual, &curve)?;
                residual = outcome.clip;
                skipped = outcome.skipped_zero_norm;
                curve_out = Some(curve);
            }
            Ok(ResidualStage {
                residual,
                flicker_applied: config.flicker_correction,
                flicker_skipped_zero_norm: skipped,
                flicker_curve: curve_out,
            })
        }
    }
}

/// Filtered residual in the domain the detector thresholds.
pub fn detection_domain(config: &PipelineConfig, stage: &ResidualStage) -> Result<Clip> {
    let filter = config.detection_filter.expect("filled during validation");
    dif_filter(
        &stage.residual,
        &DifAmplifySpec {
            gaussian_sigma: filter.gaussian_sigma,
            temporal_window: filter.temporal_window,
            sign: crate::amplify::SignSplit::Positive,
        },
    )
}

fn empty_interval_for(
    config: &PipelineConfig,
    truth: Option<&crate::synth::GroundTruth>,
) -> Result<[usize; 2]> {
    if let Some(iv) = config.empty_interval {
        return Ok(iv);
    }
    if let Some(truth) = truth {
        if let Some(run) = truth.longest_absent_run() {
            return Ok(run);
        }
    }
    Err(LensError::Config(
        "no empty_interval in the config and no ground truth to derive one from".into(),
    ))
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| LensError::io(parent, e))?;
        }
    }
    let text = serde_json::to_string_pretty(value).expect("json prints");
    fs::write(path, text).map_err(|e| LensError::io(path, e))
}

fn write_provenance(
    out_dir: &Path,
    command: &str,
    config: &PipelineConfig,
    effective: Value,
) -> Result<()> {
    let mut root = serde_json::to_value(config).expect("config serializes");
    root.as_object_mut().expect("config is an object").insert(
        "provenance".into(),
        json!({ "command": command, "effective": effective }),
    );
    write_json(&out_dir.join("provenance.json"), &root)
}

fn round6(v: f64) -> f64 {
    if v == 0.0 || !v.is_finite() {
        return 0.0;
    }
    let d = v.abs().log10().floor() as i32;
    let scale = 10f64.powi(5 - d);
    (v * scale).round() / scale
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

/// Named deterministic demo scenes. `seed` overrides the preset default.
pub fn preset_scene(name: &str, seed: Option<u64>) -> Result<(String, SceneSpec)> {
    let standard = |seed_default: u64| SceneSpec {
        width: 64,
        height: 64,
        frames: 300,
        fps: 30.0,
        channels: 1,
        base: Base::Flat { level: 0.5 },
        noise_sigma: 0.002,
        flicker: None,
        seed: seed_default,
        subject: None,
    };
    let subject = |trajectory: Trajectory| SubjectSpec {
        amplitude: 0.001,
        tint: [1.0, 1.0, 1.0],
        sigma_x: 10.0,
        sigma_y: 10.0,
        trajectory,
    };
    let mut spec = match name {
        "empty-room" => standard(10),
        "walk-demo" => {
            let mut s = standard(7);
            s.subject = Some(subject(Trajectory::Linear {
                from: [12.0, 32.0],
                to: [52.0, 32.0],
                t0: 100,
                t1: 199,
            }));
            s
        }
        "sway-demo" => {
            let mut s = standard(8);
            s.subject = Some(subject(Trajectory::Sinusoidal {
                center: [32.0, 32.0],
                axis: SwayAxis::Horizontal,
                amp_px: 12.0,
                cycles: 4.0,
                t0: 100,
                t1: 199,
            }));
            s
        }
        "static-demo" => {
            let mut s = standard(9);
            s.subject = Some(subject(Trajectory::Static {
                x: 30.0,
                y: 34.0,
                t0: 100,
                t1: 199,
            }));
            s
        }
        "tinted-demo" => {
            let mut s = standard(12);
            s.channels = 3;
            s.subject = Some(SubjectSpec {
                amplitude: 0.001,
                tint: [1.0, 0.0, 0.0],
                sigma_x: 12.0,
                sigma_y: 12.0,
                trajectory: Trajectory::Static {
                    x: 32.0,
                    y: 32.0,
                    t0: 100,
                    t1: 199,
                },
            });
            s
        }
        "flicker-demo" => {
            let mut s = standard(13);
            s.flicker = Some(FlickerSpec {
                epsilon: 0.01,
                freq_hz: 60.5,
                phase_rad: 0.0,
            });
            s.subject = Some(subject(Trajectory::Static {
                x: 30.0,
                y: 34.0,
                t0: 100,
                t1: 199,
            }));
            s
        }
        other => {
            return Err(LensError::Config(format!(
                "unknown preset `{other}`; available: empty-room, walk-demo, sway-demo, \
                 static-demo, tinted-demo, flicker-demo"
            )))
        }
    };
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    Ok((name.to_string(), spec))
}

fn cmd_synth(
    preset: Option<String>,
    spec_path: Option<PathBuf>,
    seed: Option<u64>,
    out: PathBuf,
) -> Result<()> {
    let (name, mut scene) = match (preset, spec_path) {
        (Some(p), None) => preset_scene(&p, seed)?,
        (None, Some(path)) => {
            let text = fs::read_to_string(&path).map_err(|e| {
                LensError::Config(format!("cannot read scene spec {}: {e}", path.display()))
            })?;
            let scene: SceneSpec = serde_json::from_str(&text).map_err(|e| {
                LensError::Config(format!("bad scene spec {}: {e}", path.display()))
            })?;
            let name = path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("scene")
                .to_string();
            (name, scene)
        }
        _ => {
            return Err(LensError::Config(
                "pass exactly one of --preset or --spec".into(),
            ))
        }
    };
    if let Some(seed) = seed {
        scene.seed = seed;
    }
    scene
        .validate()
        .map_err(|e| LensError::Config(e.to_string()))?;
    let manifest = corpus(&[(name, scene)], &out)?;
    println!("{}", manifest.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// amplify
// ---------------------------------------------------------------------------

fn cmd_amplify(config: &PipelineConfig, out_dir: &Path) -> Result<()> {
    let clip = load_input(config)?;
    let stage = residual_stage(config, &clip)?;
    let mut effective = json!({
        "input_frames": clip.len(),
        "width": clip.width(),
        "height": clip.height(),
        "channels": clip.channels(),
    });
    let amplified = match config.pipeline {
        PipelineKind::Dif => {
            let spec = config.dif.as_ref().unwrap();
            let filtered = dif_filter(&stage.residual, spec)?;
            save_clip(&filtered, out_dir.join("residual.diff1"), ClipFormat::Diff1)?;
            sign_split_normalize(&filtered, spec.sign)
        }
        PipelineKind::Wallcam => {
            let spec = config.wallcam.as_ref().unwrap();
            let (cw, ch) = crate::amplify::divisible_crop(
                stage.residual.width(),
                stage.residual.height(),
                spec.downsample_factor,
            )?;
            let obj = effective.as_object_mut().unwrap();
            obj.insert("log_epsilon".into(), json!(config.log_epsilon));
            obj.insert("cropped_width".into(), json!(cw));
            obj.insert("cropped_height".into(), json!(ch));
            obj.insert("flicker_applied".into(), json!(stage.flicker_applied));
            obj.insert(
                "flicker_skipped_zero_norm".into(),
                json!(stage.flicker_skipped_zero_norm),
            );
            if let Some(curve) = &stage.flicker_curve {
                fs::create_dir_all(out_dir).map_err(|e| LensError::io(out_dir, e))?;
                curve.write_csv(out_dir.join("flicker_curve.csv"))?;
            }
            wallcam_amplify(&stage.residual, spec)?
        }
    };
    save_clip(&amplified, out_dir.join("frames"), ClipFormat::PngSeq)?;
    write_provenance(out_dir, "amplify", config, effective)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// stplot
// ---------------------------------------------------------------------------

/// The clip space-time plots are computed from: the post-flicker,
/// pre-normalization residual (filtered for dif, full-resolution for
/// wallcam).
fn plot_domain(config: &PipelineConfig, stage: &ResidualStage) -> Result<Clip> {
    match config.pipeline {
        PipelineKind::Dif => dif_filter(&stage.residual, config.dif.as_ref().unwrap()),
        PipelineKind::Wallcam => Ok(stage.residual.clone()),
    }
}

fn cmd_stplot(config: &PipelineConfig, out_dir: &Path) -> Result<()> {
    let clip = load_input(config)?;
    let stage = residual_stage(config, &clip)?;
    let domain = plot_domain(config, &stage)?;
    for (axis, name) in [
        (PlotAxis::Horizontal, "stplot_horizontal"),
        (PlotAxis::Vertical, "stplot_vertical"),
    ] {
        let plot = spacetime_project(&domain, axis, Reduction::AbsMean);
        render_plot(&plot, out_dir.join(name))?;
    }
    write_provenance(
        out_dir,
        "stplot",
        config,
        json!({
            "reduction": "abs_mean",
            "flicker_applied": stage.flicker_applied,
        }),
    )?;
    Ok(())
}

// ---------------------------------------------------------------------------
// detect
// ---------------------------------------------------------------------------

fn load_truth(path: &Path) -> Result<crate::synth::GroundTruth> {
    let text = fs::read_to_string(path)
        .map_err(|e| LensError::Config(format!("cannot read truth {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| LensError::Config(format!("bad truth {}: {e}", path.display())))
}

struct DetectRun {
    report: DetectionReport,
    noise: NoiseFloor,
    filtered: Clip,
}

fn run_detect(
    config: &PipelineConfig,
    clip: &Clip,
    truth: Option<&crate::synth::GroundTruth>,
) -> Result<DetectRun> {
    let stage = residual_stage(config, clip)?;
    let filtered = detection_domain(config, &stage)?;
    let interval = empty_interval_for(config, truth)?;
    let noise = noise_floor(&filtered, interval)?;
    let report = analyze(&filtered, &config.detection, &noise)?;
    Ok(DetectRun {
        report,
        noise,
        filtered,
    })
}

/// Presence/localization/activity metrics against ground truth.
pub fn evaluation_metrics(
    report: &DetectionReport,
    truth: &crate::synth::GroundTruth,
) -> Value {
    let detected: Vec<bool> = report.frames.iter().map(|f| f.present).collect();
    let actual = truth.present_flags();
    let n = detected.len().min(actual.len());
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for t in 0..n {
        match (detected[t], actual[t]) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    let precision = if tp + fp == 0 {
        1.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let recall = if tp + fn_ == 0 {
        1.0
    } else {
        tp as f64 / (tp + fn_) as f64
    };

    let interval_of = |flags: &[bool]| -> Option<(usize, usize)> {
        let first = flags.iter().position(|&b| b)?;
        let last = flags.iter().rposition(|&b| b)?;
        Some((first, last))
    };
    let det_iv = interval_of(&detected);
    let act_iv = interval_of(&actual);
    let (iou, start_err, end_err) = match (det_iv, act_iv) {
        (Some((d0, d1)), Some((a0, a1))) => {
            let overlap = (d1.min(a1) + 1).saturating_sub(d0.max(a0));
            let union = (d1.max(a1) + 1) - d0.min(a0);
            (
                overlap as f64 / union as f64,
                Some((d0 as i64 - a0 as i64).unsigned_abs()),
                Some((d1 as i64 - a1 as i64).unsigned_abs()),
            )
        }
        (None, None) => (1.0, None, None),
        _ => (0.0, None, None),
    };

    // Centroid RMSE over frames present in both tracks.
    let mut se = 0.0f64;
    let mut count = 0usize;
    for t in 0..n {
        if let (Some(c), Some(truth_c)) = (
            report.frames[t].centroid,
            truth.per_frame[t].center.filter(|_| actual[t]),
        ) {
            let dx = c[0] - truth_c[0];
            let dy = c[1] - truth_c[1];
            se += dx * dx + dy * dy;
            count += 1;
        }
    }
    let rmse = if count > 0 {
        Some((se / count as f64).sqrt())
    } else {
        None
    };

    let truth_extent = truth.per_frame.iter().find_map(|f| f.extent);
    let extent_err = match (truth_extent, report.body_width_px, report.body_height_px) {
        (Some([tw, th]), Some(w), Some(h)) => Some((
            (w - tw).abs() / tw,
            (h - th).abs() / th,
        )),
        _ => None,
    };

    json!({
        "activity": {
            "expected": truth.activity,
            "detected": report.activity.as_str(),
            "correct": truth.activity == report.activity.as_str(),
        },
        "presence": {
            "precision": round6(precision),
            "recall": round6(recall),
            "interval_iou": round6(iou),
            "boundary_error_start": start_err,
            "boundary_error_end": end_err,
            "detected_interval": det_iv.map(|(a, b)| json!([a, b])),
            "true_interval": act_iv.map(|(a, b)| json!([a, b])),
        },
        "centroid_rmse_px": rmse.map(round6),
        "extent_rel_error": extent_err.map(|(w, h)| json!({
            "width": round6(w),
            "height": round6(h),
        })),
    })
}

fn cmd_detect(config: &PipelineConfig, out_dir: &Path, truth_path: Option<&Path>) -> Result<()> {
    let truth = truth_path.map(load_truth).transpose()?;
    let clip = load_input(config)?;
    let run = run_detect(config, &clip, truth.as_ref())?;
    fs::create_dir_all(out_dir).map_err(|e| LensError::io(out_dir, e))?;
    let report_path = out_dir.join("report.json");
    fs::write(&report_path, run.report.to_json())
        .map_err(|e| LensError::io(&report_path, e))?;
    if let Some(truth) = &truth {
        let metrics = evaluation_metrics(&run.report, truth);
        write_json(&out_dir.join("metrics.json"), &metrics)?;
    }
    write_provenance(
        out_dir,
        "detect",
        config,
        json!({
            "noise_sigma": run.noise.sigma,
            "noise_floor_suspect": run.noise.suspect,
            "filtered_frames": run.filtered.len(),
        }),
    )?;
    Ok(())
}

// ---------------------------------------------------------------------------
// compare
// ---------------------------------------------------------------------------

fn max_abs(clip: &Clip) -> f64 {
    clip.frames()
        .iter()
        .flat_map(|f| f.data().iter())
        .fold(0.0f64, |m, &v| m.max((v as f64).abs()))
}

struct CompareSide {
    label: &'static str,
    config: PipelineConfig,
}

fn compare_metrics_side(config: &PipelineConfig, clip: &Clip) -> Result<(Value, Clip, f64)> {
    let started = Instant::now();
    let stage = residual_stage(config, clip)?;
    let filtered = detection_domain(config, &stage)?;
    let interval = empty_interval_for(config, None)?;
    let raw_noise = noise_floor(&stage.residual, interval)?;
    let noise = noise_floor(&filtered, interval)?;
    let report = analyze(&filtered, &config.detection, &noise)?;
    let amplified = match config.pipeline {
        PipelineKind::Dif => {
            let spec = config.dif.as_ref().unwrap();
            sign_split_normalize(&dif_filter(&stage.residual, spec)?, spec.sign)
        }
        PipelineKind::Wallcam => wallcam_amplify(&stage.residual, config.wallcam.as_ref().unwrap())?,
    };
    let elapsed_ms = started.elapsed().as_secs_f64() * 1e3;

    let snr_raw = if raw_noise.sigma > 0.0 {
        max_abs(&stage.residual) / raw_noise.sigma
    } else {
        0.0
    };
    let snr_filtered = if noise.sigma > 0.0 {
        max_abs(&filtered) / noise.sigma
    } else {
        0.0
    };
    let gain = if snr_raw > 0.0 { snr_filtered / snr_raw } else { 0.0 };
    let present = report.frames.iter().filter(|f| f.present).count();
    let metrics = json!({
        "pipeline": config.pipeline,
        "snr_raw": round6(snr_raw),
        "snr_filtered": round6(snr_filtered),
        "snr_gain": round6(gain),
        "noise_rms_raw": round6(raw_noise.sigma),
        "noise_rms_filtered": round6(noise.sigma),
        "present_frames": present,
        "activity": report.activity.as_str(),
        "body_width_px": report.body_width_px.map(round6),
        "body_height_px": report.body_height_px.map(round6),
    });
    Ok((metrics, amplified, elapsed_ms))
}

/// Nearest-neighbor resample of one gray/RGB frame to a target cell size,
/// returning 8-bit RGB rows.
fn frame_to_rgb_cell(frame: &Frame, tw: usize, th: usize) -> Vec<u8> {
    let (w, h) = (frame.width(), frame.height());
    let mut out = Vec::with_capacity(tw * th * 3);
    for ty in 0..th {
        let sy = ty * h / th;
        for tx in 0..tw {
            let sx = tx * w / tw;
            let quant = |v: f32| (v as f64 * 255.0).round().clamp(0.0, 255.0) as u8;
            if frame.channels() == 1 {
                let g = quant(frame.get(0, sx, sy));
                out.extend_from_slice(&[g, g, g]);
            } else {
                out.extend_from_slice(&[
                    quant(frame.get(0, sx, sy)),
                    quant(frame.get(1, sx, sy)),
                    quant(frame.get(2, sx, sy)),
                ]);
            }
        }
    }
    out
}

const SHEET_COLUMNS: usize = 4;

fn contact_sheet(a: &Clip, b: &Clip, path: &Path) -> Result<()> {
    let tw = a.width().max(b.width());
    let th = a.height().max(b.height());
    let cols = SHEET_COLUMNS;
    let mut pixels = vec![0u8; tw * cols * th * 2 * 3];
    for (row, clip) in [a, b].iter().enumerate() {
        for col in 0..cols {
            let t = if clip.len() == 1 {
                0
            } else {
                col * (clip.len() - 1) / (cols - 1)
            };
            let cell = frame_to_rgb_cell(clip.frame(t), tw, th);
            for y in 0..th {
                let dst = ((row * th + y) * tw * cols + col * tw) * 3;
                let src = y * tw * 3;
                pixels[dst..dst + tw * 3].copy_from_slice(&cell[src..src + tw * 3]);
            }
        }
    }
    let img = image::RgbImage::from_raw((tw * cols) as u32, (th * 2) as u32, pixels)
        .expect("sized buffer");
    img.save(path).map_err(|e| LensError::Image {
        path: path.to_path_buf(),
        source: e,
    })
}

fn cmd_compare(sides: [CompareSide; 2], out_dir: &Path) -> Result<()> {
    let [a, b] = sides;
    if a.config.input != b.config.input {
        return Err(LensError::Config(
            "compare requires both configs to target the same input".into(),
        ));
    }
    let clip_a = load_input(&a.config)?;
    let clip_b = load_input(&b.config)?;
    if clip_a.width() != clip_b.width()
        || clip_a.height() != clip_b.height()
        || clip_a.len() != clip_b.len()
    {
        return Err(LensError::Config(format!(
            "geometry mismatch between runs: {}x{}x{} vs {}x{}x{}",
            clip_a.width(),
            clip_a.height(),
            clip_a.len(),
            clip_b.width(),
            clip_b.height(),
            clip_b.len()
        )));
    }
    let (metrics_a, amp_a, ms_a) = compare_metrics_side(&a.config, &clip_a)?;
    let (metrics_b, amp_b, ms_b) = compare_metrics_side(&b.config, &clip_b)?;
    fs::create_dir_all(out_dir).map_err(|e| LensError::io(out_dir, e))?;
    write_json(
        &out_dir.join("metrics.json"),
        &json!({
            "input": a.config.input,
            "a": metrics_a,
            "b": metrics_b,
        }),
    )?;
    // Wall-clock timings are inherently run-dependent; they live in their
    // own file, outside the deterministic replay contract.
    write_json(
        &out_dir.join("timings.json"),
        &json!({
            "a": { "total_ms": ms_a, "ms_per_frame": ms_a / clip_a.len() as f64 },
            "b": { "total_ms": ms_b, "ms_per_frame": ms_b / clip_b.len() as f64 },
        }),
    )?;
    contact_sheet(&amp_a, &amp_b, &out_dir.join("contact_sheet.png"))?;
    let provenance = json!({
        "provenance": { "command": "compare" },
        "config_a": serde_json::to_value(&a.config).unwrap(),
        "config_b": serde_json::to_value(&b.config).unwrap(),
    });
    write_json(&out_dir.join("provenance.json"), &provenance)?;
    let _ = (a.label, b.label);
    Ok(())
}

// ---------------------------------------------------------------------------
// argument surface
// ---------------------------------------------------------------------------

#[derive(Debug, Parser)]
#[command(
    name = "latentlens",
    version,
    about = "Extract, amplify and analyze faint reflection signals in wall-facing video"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic scene with ground truth.
    Synth {
        /// Named demo scene (empty-room, walk-demo, sway-demo, static-demo,
        /// tinted-demo, flicker-demo).
        #[arg(long, conflicts_with = "spec")]
        preset: Option<String>,
        /// Scene spec JSON file.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Override the scene seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long, short = 'o')]
        out: PathBuf,
    },
    /// Run a pipeline and write the amplified clip.
    Amplify {
        #[arg(long)]
        config: PathBuf,
        /// Override the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write horizontal and vertical space-time plots.
    Stplot {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate scene parameters and write a detection report.
    Detect {
        #[arg(long)]
        config: PathBuf,
        /// Ground-truth JSON for evaluation mode.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run two configs on the same input and compare them.
    Compare {
        #[arg(long, requires = "config_b")]
        config_a: Option<PathBuf>,
        #[arg(long)]
        config_b: Option<PathBuf>,
        /// A compare provenance JSON holding both configs.
        #[arg(long, conflicts_with_all = ["config_a", "config_b"])]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Execute a parsed command. Errors map onto the exit-code contract in
/// `main`.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth {
            preset,
            spec,
            seed,
            out,
        } => cmd_synth(preset, spec, seed, out),
        Command::Amplify { config, out } => {
            let cfg = PipelineConfig::load(&config)?;
            let out_dir = out.unwrap_or_else(|| cfg.output.clone());
            cmd_amplify(&cfg, &out_dir)
        }
        Command::Stplot { config, out } => {
            let cfg = PipelineConfig::load(&config)?;
            let out_dir = out.unwrap_or_else(|| cfg.output.clone());
            cmd_stplot(&cfg, &out_dir)
        }
        Command::Detect { config, truth, out } => {
            let cfg = PipelineConfig::load(&config)?;
            let out_dir = out.unwrap_or_else(|| cfg.output.clone());
            cmd_detect(&cfg, &out_dir, truth.as_deref())
        }
        Command::Compare {
            config_a,
            config_b,
            config,
            out,
        } => {
            let (cfg_a, cfg_b) = match (config_a, config_b, config) {
                (Some(a), Some(b), None) => {
                    (PipelineConfig::load(&a)?, PipelineConfig::load(&b)?)
                }
                (None, None, Some(path)) => {
                    let text = fs::read_to_string(&path).map_err(|e| {
                        LensError::Config(format!(
                            "cannot read compare config {}: {e}",
                            path.display()
                        ))
                    })?;
                    let value: Value = serde_json::from_str(&text).map_err(|e| {
                        LensError::Config(format!("bad compare config {}: {e}", path.display()))
                    })?;
                    let side = |key: &str| -> Result<PipelineConfig> {
                        let sub = value.get(key).ok_or_else(|| {
                            LensError::Config(format!(
                                "{}: missing `{key}`",
                                path.display()
                            ))
                        })?;
                        let cfg: PipelineConfig =
                            serde_json::from_value(sub.clone()).map_err(|e| {
                                LensError::Config(format!("{}: bad `{key}`: {e}", path.display()))
                            })?;
                        cfg.validated()
                    };
                    (side("config_a")?, side("config_b")?)
                }
                _ => {
                    return Err(LensError::Config(
                        "pass --config-a with --config-b, or a single --config".into(),
                    ))
                }
            };
            let out_dir = out.ok_or_else(|| {
                LensError::Config("compare requires --out <dir>".into())
            })?;
            cmd_compare(
                [
                    CompareSide {
                        label: "a",
                        config: cfg_a,
                    },
                    CompareSide {
                        label: "b",
                        config: cfg_b,
                    },
                ],
                &out_dir,
            )
        }
    }
}
