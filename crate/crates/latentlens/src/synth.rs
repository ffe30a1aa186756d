//! Synthetic scene generator with exact ground truth.
//!
//! Scenes are a static wall base, an optional faint Gaussian impact moving
//! along a known trajectory, i.i.d. sensor noise and an optional
//! multiplicative lighting sway. Noise is a pure function of
//! `(seed, frame, channel, y, x)`, so identical specs produce byte-identical
//! clips regardless of evaluation order.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{LensError, Result};
use crate::video::{Clip, ClipFormat, ClipMeta, Frame, Signedness};

/// Half-width factor of the analytic 20 %-level set of a unit-peak
/// Gaussian: `sqrt(2 ln 5)`.
pub const LEVEL20_FACTOR: f64 = 1.7941225779941015;

/// Wall appearance before any subject or lighting effect.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Base {
    Flat { level: f32 },
    HorizontalGradient { lo: f32, hi: f32 },
}

impl Base {
    fn value(&self, x: usize, width: usize) -> f64 {
        match *self {
            Base::Flat { level } => level as f64,
            Base::HorizontalGradient { lo, hi } => {
                if width == 1 {
                    lo as f64
                } else {
                    lo as f64 + (hi as f64 - lo as f64) * x as f64 / (width - 1) as f64
                }
            }
        }
    }

    fn range(&self) -> (f64, f64) {
        match *self {
            Base::Flat { level } => (level as f64, level as f64),
            Base::HorizontalGradient { lo, hi } => {
                (lo.min(hi) as f64, lo.max(hi) as f64)
            }
        }
    }
}

/// Multiplicative AC-style lighting sway.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlickerSpec {
    /// Relative amplitude; must stay in `[0, 0.1]`.
    pub epsilon: f32,
    pub freq_hz: f32,
    pub phase_rad: f32,
}

/// Axis of a sinusoidal sway.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwayAxis {
    Horizontal,
    Vertical,
}

/// Where the subject is over time. Frame intervals `[t0, t1]` are
/// inclusive; the subject is absent outside them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Trajectory {
    /// Subject never enters the scene.
    Absent,
    Static {
        x: f32,
        y: f32,
        t0: usize,
        t1: usize,
    },
    Linear {
        from: [f32; 2],
        to: [f32; 2],
        t0: usize,
        t1: usize,
    },
    Sinusoidal {
        center: [f32; 2],
        axis: SwayAxis,
        amp_px: f32,
        cycles: f32,
        t0: usize,
        t1: usize,
    },
}

impl Trajectory {
    pub fn label(&self) -> &'static str {
        match self {
            Trajectory::Absent => "absent",
            Trajectory::Static { .. } => "static_presence",
            Trajectory::Linear { .. } => "walking",
            Trajectory::Sinusoidal { .. } => "oscillatory",
        }
    }

    fn interval(&self) -> Option<(usize, usize)> {
        match *self {
            Trajectory::Absent => None,
            Trajectory::Static { t0, t1, .. }
            | Trajectory::Linear { t0, t1, .. }
            | Trajectory::Sinusoidal { t0, t1, .. } => Some((t0, t1)),
        }
    }

    /// Subject center at frame `t`, or None when absent.
    pub fn center_at(&self, t: usize) -> Option<(f64, f64)> {
        let (t0, t1) = self.interval()?;
        if t < t0 || t > t1 {
            return None;
        }
        match *self {
            Trajectory::Absent => None,
            Trajectory::Static { x, y, .. } => Some((x as f64, y as f64)),
            Trajectory::Linear { from, to, .. } => {
                let span = (t1 - t0).max(1) as f64;
                let a = (t - t0) as f64 / span;
                Some((
                    from[0] as f64 + (to[0] as f64 - from[0] as f64) * a,
                    from[1] as f64 + (to[1] as f64 - from[1] as f64) * a,
                ))
            }
            Trajectory::Sinusoidal {
                center,
                axis,
                amp_px,
                cycles,
                ..
            } => {
                let span = (t1 - t0).max(1) as f64;
                let phase = 2.0 * std::f64::consts::PI * cycles as f64 * (t - t0) as f64 / span;
                let offset = amp_px as f64 * phase.sin();
                match axis {
                    SwayAxis::Horizontal => Some((center[0] as f64 + offset, center[1] as f64)),
                    SwayAxis::Vertical => Some((center[0] as f64, center[1] as f64 + offset)),
                }
            }
        }
    }
}

/// The faint impact a hidden subject leaves on the wall.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubjectSpec {
    /// Signed peak intensity of the impact.
    pub amplitude: f32,
    /// Per-channel weights for RGB scenes; must be `[1,1,1]` for gray.
    pub tint: [f32; 3],
    pub sigma_x: f32,
    pub sigma_y: f32,
    pub trajectory: Trajectory,
}

fn default_channels() -> usize {
    1
}

/// Complete description of a synthetic scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub fps: f32,
    #[serde(default = "default_channels")]
    pub channels: usize,
    pub base: Base,
    pub noise_sigma: f32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flicker: Option<FlickerSpec>,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject: Option<SubjectSpec>,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let err = |field: &str, msg: String| {
            Err(LensError::Parameter(format!("scene spec field `{field}`: {msg}")))
        };
        if self.width == 0 || self.height == 0 {
            return err("width/height", "must be >= 1".into());
        }
        if self.frames == 0 {
            return err("frames", "must be >= 1".into());
        }
        if !(self.fps > 0.0) {
            return err("fps", format!("must be > 0, got {}", self.fps));
        }
        if self.channels != 1 && self.channels != 3 {
            return err("channels", format!("must be 1 or 3, got {}", self.channels));
        }
        if !(self.noise_sigma >= 0.0) {
            return err("noise_sigma", format!("must be >= 0, got {}", self.noise_sigma));
        }
        let mut eps = 0.0f64;
        if let Some(f) = &self.flicker {
            if !(0.0..=0.1).contains(&f.epsilon) {
                return err("flicker.epsilon", format!("must be in [0, 0.1], got {}", f.epsilon));
            }
            eps = f.epsilon as f64;
        }
        let (b_lo, b_hi) = self.base.range();
        let (mut lo, mut hi) = (b_lo, b_hi);
        if let Some(s) = &self.subject {
            if !(s.sigma_x > 0.0) || !(s.sigma_y > 0.0) {
                return err("subject.sigma_x/sigma_y", "must be > 0".into());
            }
            if self.channels == 1 && s.tint != [1.0, 1.0, 1.0] {
                return err("subject.tint", "gray scenes require tint [1,1,1]".into());
            }
            if s.tint.iter().any(|t| !(0.0..=1.0).contains(t)) {
                return err("subject.tint", "weights must be in [0,1]".into());
            }
            if s.tint.iter().all(|&t| t == 0.0) {
                return err("subject.tint", "at least one weight must be nonzero".into());
            }
            if let Some((t0, t1)) = s.trajectory.interval() {
                if t0 > t1 {
                    return err("subject.trajectory", format!("t0 {t0} > t1 {t1}"));
                }
                if t1 >= self.frames {
                    return err(
                        "subject.trajectory",
                        format!("t1 {t1} outside clip of {} frames", self.frames),
                    );
                }
                for t in t0..=t1 {
                    let (cx, cy) = s.trajectory.center_at(t).expect("inside interval");
                    let sx = s.sigma_x as f64;
                    let sy = s.sigma_y as f64;
                    if cx < sx
                        || cx > (self.width - 1) as f64 - sx
                        || cy < sy
                        || cy > (self.height - 1) as f64 - sy
                    {
                        return err(
                            "subject.trajectory",
                            format!("center ({cx:.1},{cy:.1}) at frame {t} closer than 1 sigma to the frame edge"),
                        );
                    }
                }
            }
            lo += (s.amplitude as f64).min(0.0);
            hi += (s.amplitude as f64).max(0.0);
        }
        if hi * (1.0 + eps) > 1.0 || lo * (1.0 - eps) < 0.0 {
            return err(
                "base",
                format!("values [{lo:.3}, {hi:.3}] can leave [0,1] under the configured effects"),
            );
        }
        Ok(())
    }
}

/// Per-frame truth record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameTruth {
    pub present: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<[f64; 2]>,
    /// Analytic 20 %-level dims of the injected Gaussian, in px.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extent: Option<[f64; 2]>,
}

/// Exact description of what [`generate`] injected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub spec: SceneSpec,
    pub activity: String,
    pub per_frame: Vec<FrameTruth>,
}

impl GroundTruth {
    pub fn present_flags(&self) -> Vec<bool> {
        self.per_frame.iter().map(|f| f.present).collect()
    }

    /// Longest run of absent frames, as `[t0, t1)`; the whole clip when no
    /// subject ever appears.
    pub fn longest_absent_run(&self) -> Option<[usize; 2]> {
        let mut best: Option<[usize; 2]> = None;
        let mut run_start = None;
        for (t, f) in self.per_frame.iter().enumerate() {
            if !f.present {
                run_start.get_or_insert(t);
            }
            if f.present || t + 1 == self.per_frame.len() {
                if let Some(s) = run_start.take() {
                    let end = if f.present { t } else { t + 1 };
                    if best.map_or(true, |b| end - s > b[1] - b[0]) {
                        best = Some([s, end]);
                    }
                }
            }
        }
        best
    }
}

const GOLDEN: u64 = 0x9E3779B97F4A7C15;

#[inline]
fn splitmix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

#[inline]
fn unit_f64(z: u64) -> f64 {
    (z >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Standard-normal deviate for one sample site, built from twelve uniform
/// draws (Irwin-Hall). Uses only IEEE add/mul, so the result is pinned
/// across platforms; the approximation error is irrelevant at the sub-1 %
/// level the statistical oracles check.
#[inline]
fn site_normal(seed: u64, t: usize, c: usize, y: usize, x: usize) -> f64 {
    let mut key = seed
        ^ (t as u64 + 1).wrapping_mul(0xA24BAED4963EE407)
        ^ (c as u64 + 1).wrapping_mul(0x9FB21C651E98DF25)
        ^ (y as u64 + 1).wrapping_mul(0xD6E8FEB86659FD93)
        ^ (x as u64 + 1).wrapping_mul(0xC2B2AE3D27D4EB4F);
    let mut sum = 0.0f64;
    for _ in 0..12 {
        key = key.wrapping_add(GOLDEN);
        sum += unit_f64(splitmix(key));
    }
    sum - 6.0
}

/// Render the scene and its exact ground truth.
pub fn generate(spec: &SceneSpec) -> Result<(Clip, GroundTruth)> {
    spec.validate()?;
    let (w, h, c_len) = (spec.width, spec.height, spec.channels);
    let n = w * h;
    let mut frames = Vec::with_capacity(spec.frames);
    let mut per_frame = Vec::with_capacity(spec.frames);

    let mut base_row = Vec::with_capacity(w);
    for x in 0..w {
        base_row.push(spec.base.value(x, w));
    }

    let extent = spec.subject.map(|s| {
        [
            2.0 * s.sigma_x as f64 * LEVEL20_FACTOR,
            2.0 * s.sigma_y as f64 * LEVEL20_FACTOR,
        ]
    });

    for t in 0..spec.frames {
        let factor = match &spec.flicker {
            Some(f) => {
                let theta = 2.0 * std::f64::consts::PI * f.freq_hz as f64 * t as f64
                    / spec.fps as f64
                    + f.phase_rad as f64;
                1.0 + f.epsilon as f64 * theta.sin()
            }
            None => 1.0,
        };
        let center = spec
            .subject
            .as_ref()
            .and_then(|s| s.trajectory.center_at(t));
        let mut data = Vec::with_capacity(n * c_len);
        for c in 0..c_len {
            let tint_amp = spec.subject.as_ref().map(|s| {
                let weight = if c_len == 1 { 1.0 } else { s.tint[c] as f64 };
                (s.amplitude as f64 * weight, s.sigma_x as f64, s.sigma_y as f64)
            });
            for y in 0..h {
                for x in 0..w {
                    let mut v = base_row[x];
                    if let (Some((cx, cy)), Some((amp, sx, sy))) = (center, tint_amp) {
                        let dx = x as f64 - cx;
                        let dy = y as f64 - cy;
                        let g = (-(dx * dx) / (2.0 * sx * sx) - (dy * dy) / (2.0 * sy * sy)).exp();
                        v += amp * g;
                    }
                    v *= factor;
                    if spec.noise_sigma > 0.0 {
                        v += spec.noise_sigma as f64 * site_normal(spec.seed, t, c, y, x);
                    }
                    data.push(v.clamp(0.0, 1.0) as f32);
                }
            }
        }
        frames.push(Frame::from_parts(w, h, c_len, Signedness::Source, data));
        per_frame.push(FrameTruth {
            present: center.is_some(),
            center: center.map(|(x, y)| [x, y]),
            extent: if center.is_some() { extent } else { None },
        });
    }
    let activity = spec
        .subject
        .as_ref()
        .map(|s| s.trajectory.label())
        .unwrap_or("absent")
        .to_string();
    let clip = Clip::from_parts(frames, spec.fps);
    Ok((
        clip,
        GroundTruth {
            spec: spec.clone(),
            activity,
            per_frame,
        },
    ))
}

/// One corpus entry: the stored clip's descriptor and the spec that made it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    /// Paths inside `meta` are relative to the manifest's directory.
    pub meta: ClipMeta,
    pub spec: SceneSpec,
}

/// Index of a generated corpus; sufficient to regenerate it bit-exactly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Manifest> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| LensError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| LensError::Json {
            path: path.to_path_buf(),
            source: e,
        })
    }
}

/// Generate every scene in the grid and write clips, truths and the
/// manifest under `out_dir`. Returns the manifest path.
pub fn corpus(grid: &[(String, SceneSpec)], out_dir: impl AsRef<Path>) -> Result<PathBuf> {
    let out_dir = out_dir.as_ref();
    let mut names = BTreeSet::new();
    for (name, _) in grid {
        if !names.insert(name.as_str()) {
            return Err(LensError::Parameter(format!(
                "duplicate corpus entry name `{name}`"
            )));
        }
    }
    fs::create_dir_all(out_dir).map_err(|e| LensError::io(out_dir, e))?;
    let mut entries = Vec::with_capacity(grid.len());
    for (name, spec) in grid {
        let (clip, truth) = generate(spec)?;
        let clip_rel = PathBuf::from(format!("{name}.diff1"));
        let truth_rel = PathBuf::from(format!("{name}.truth.json"));
        crate::video::save_clip(&clip, out_dir.join(&clip_rel), ClipFormat::Diff1)?;
        let truth_path = out_dir.join(&truth_rel);
        let text = serde_json::to_string_pretty(&truth).expect("truth serializes");
        fs::write(&truth_path, text).map_err(|e| LensError::io(&truth_path, e))?;
        let mut meta = ClipMeta::describe(&clip, &clip_rel);
        meta.ground_truth = Some(truth_rel);
        entries.push(ManifestEntry {
            name: name.clone(),
            meta,
            spec: spec.clone(),
        });
    }
    let manifest_path = out_dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&Manifest { entries }).expect("manifest serializes");
    fs::write(&manifest_path, text).map_err(|e| LensError::io(&manifest_path, e))?;
    Ok(manifest_path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat_spec() -> SceneSpec {
        SceneSpec {
            width: 16,
            height: 16,
            frames: 8,
            fps: 30.0,
            channels: 1,
            base: Base::Flat { level: 0.5 },
            noise_sigma: 0.0,
            flicker: None,
            seed: 7,
            subject: None,
        }
    }

    #[test]
    fn degenerate_scene_is_constant() {
        let (clip, truth) = generate(&flat_spec()).unwrap();
        assert!(clip
            .frames()
            .iter()
            .all(|f| f.data().iter().all(|&v| v == 0.5)));
        assert_eq!(truth.activity, "absent");
        assert!(truth.per_frame.iter().all(|f| !f.present));
    }

    #[test]
    fn unit_peak_gaussian_amplitude() {
        let mut spec = flat_spec();
        spec.subject = Some(SubjectSpec {
            amplitude: 0.004,
            tint: [1.0, 1.0, 1.0],
            sigma_x: 2.0,
            sigma_y: 2.0,
            trajectory: Trajectory::Static {
                x: 8.0,
                y: 8.0,
                t0: 0,
                t1: 7,
            },
        });
        let (clip, _) = generate(&spec).unwrap();
        let max_dev = clip
            .frames()
            .iter()
            .flat_map(|f| f.data().iter())
            .map(|&v| (v - 0.5).abs())
            .fold(0.0f32, f32::max);
        assert!((max_dev - 0.004).abs() < 1e-6, "{max_dev}");
    }

    #[test]
    fn generation_is_deterministic() {
        let mut spec = flat_spec();
        spec.noise_sigma = 0.002;
        spec.flicker = Some(FlickerSpec {
            epsilon: 0.01,
            freq_hz: 60.5,
            phase_rad: 0.3,
        });
        let (a, _) = generate(&spec).unwrap();
        let (b, _) = generate(&spec).unwrap();
        assert_eq!(a, b);
        spec.seed = 8;
        let (c, _) = generate(&spec).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn superposition_with_shared_seed() {
        let mut with = flat_spec();
        with.noise_sigma = 0.002;
        with.subject = Some(SubjectSpec {
            amplitude: 0.003,
            tint: [1.0, 1.0, 1.0],
            sigma_x: 2.5,
            sigma_y: 2.0,
            trajectory: Trajectory::Static {
                x: 7.0,
                y: 9.0,
                t0: 2,
                t1: 5,
            },
        });
        let mut without = with.clone();
        without.subject = None;
        let (cw, _) = generate(&with).unwrap();
        let (c0, _) = generate(&without).unwrap();
        for t in 0..with.frames {
            let present = (2..=5).contains(&t);
            for y in 0..16 {
                for x in 0..16 {
                    let diff = cw.frame(t).get(0, x, y) as f64 - c0.frame(t).get(0, x, y) as f64;
                    let expect = if present {
                        let dx = x as f64 - 7.0;
                        let dy = y as f64 - 9.0;
                        0.003
                            * (-(dx * dx) / (2.0 * 2.5 * 2.5) - (dy * dy) / (2.0 * 2.0 * 2.0))
                                .exp()
                    } else {
                        0.0
                    };
                    assert!((diff - expect).abs() < 1e-6, "t={t} ({x},{y})");
                }
            }
        }
    }

    #[test]
    fn noise_statistics_are_plausible() {
        let mut spec = flat_spec();
        spec.width = 64;
        spec.height = 64;
        spec.frames = 10;
        spec.noise_sigma = 0.002;
        let (clip, _) = generate(&spec).unwrap();
        let values: Vec<f64> = clip
            .frames()
            .iter()
            .flat_map(|f| f.data().iter().map(|&v| v as f64 - 0.5))
            .collect();
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
            / values.len() as f64;
        assert!(mean.abs() < 1e-4, "{mean}");
        assert!((var.sqrt() - 0.002).abs() / 0.002 < 0.02, "{}", var.sqrt());
    }

    #[test]
    fn flicker_median_curve_matches_injected_sinusoid() {
        let mut spec = flat_spec();
        spec.frames = 120;
        spec.flicker = Some(FlickerSpec {
            epsilon: 0.01,
            freq_hz: 60.5,
            phase_rad: 0.0,
        });
        let (clip, _) = generate(&spec).unwrap();
        let curve = crate::flicker::global_median_curve(&clip);
        // Expected: 0.5 * epsilon * centered sin series.
        let sins: Vec<f64> = (0..120)
            .map(|t| {
                (2.0 * std::f64::consts::PI * 60.5 * t as f64 / 30.0).sin()
            })
            .collect();
        let sin_mean = sins.iter().sum::<f64>() / sins.len() as f64;
        let expect: Vec<f64> = sins.iter().map(|s| 0.5 * 0.01 * (s - sin_mean)).collect();
        let num: f64 = curve
            .values()
            .iter()
            .zip(&expect)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let den: f64 = expect.iter().map(|b| b * b).sum();
        assert!((num / den).sqrt() < 0.01, "relative error {}", (num / den).sqrt());
    }

    #[test]
    fn trajectory_validation() {
        let mut spec = flat_spec();
        spec.subject = Some(SubjectSpec {
            amplitude: 0.004,
            tint: [1.0, 1.0, 1.0],
            sigma_x: 2.0,
            sigma_y: 2.0,
            trajectory: Trajectory::Static {
                x: 1.0, // closer than 1 sigma to the edge
                y: 8.0,
                t0: 0,
                t1: 7,
            },
        });
        match generate(&spec) {
            Err(LensError::Parameter(msg)) => assert!(msg.contains("trajectory"), "{msg}"),
            other => panic!("expected parameter error, got {other:?}"),
        }
        spec.subject.as_mut().unwrap().trajectory = Trajectory::Static {
            x: 8.0,
            y: 8.0,
            t0: 0,
            t1: 99,
        };
        assert!(generate(&spec).is_err());
    }

    #[test]
    fn faint_blob_is_framewise_undetectable() {
        // The premise of the whole pipeline: in the amplitude << noise
        // regime a single frame carries no usable evidence. Frame-energy
        // classification without temporal filtering must stay near chance
        // (AUC < 0.6).
        let spec = SceneSpec {
            width: 64,
            height: 64,
            frames: 600,
            fps: 30.0,
            channels: 1,
            base: Base::Flat { level: 0.5 },
            noise_sigma: 0.002,
            flicker: None,
            seed: 40,
            subject: Some(SubjectSpec {
                amplitude: 0.001,
                tint: [1.0, 1.0, 1.0],
                sigma_x: 4.0,
                sigma_y: 4.0,
                trajectory: Trajectory::Static {
                    x: 32.0,
                    y: 32.0,
                    t0: 200,
                    t1: 399,
                },
            }),
        };
        let (clip, truth) = generate(&spec).unwrap();
        let energies: Vec<f64> = clip
            .frames()
            .iter()
            .map(|f| {
                let ss: f64 = f
                    .data()
                    .iter()
                    .map(|&v| (v as f64 - 0.5) * (v as f64 - 0.5))
                    .sum();
                (ss / f.data().len() as f64).sqrt()
            })
            .collect();
        let mut pairs = 0u64;
        let mut wins = 0u64;
        for (t1, f1) in truth.per_frame.iter().enumerate() {
            if !f1.present {
                continue;
            }
            for (t0, f0) in truth.per_frame.iter().enumerate() {
                if f0.present {
                    continue;
                }
                pairs += 1;
                if energies[t1] > energies[t0] {
                    wins += 1;
                }
            }
        }
        let auc = wins as f64 / pairs as f64;
        assert!(auc < 0.6, "frame-wise AUC {auc} should be near chance");
    }

    #[test]
    fn corpus_writes_manifest_and_regenerates() {
        let dir = tempfile::tempdir().unwrap();
        let grid: Vec<(String, SceneSpec)> = (0..3)
            .map(|i| {
                let mut s = flat_spec();
                s.seed = i;
                s.noise_sigma = 0.002;
                (format!("case{i}"), s)
            })
            .collect();
        let manifest_path = corpus(&grid, dir.path()).unwrap();
        let manifest = Manifest::load(&manifest_path).unwrap();
        assert_eq!(manifest.entries.len(), 3);
        for entry in &manifest.entries {
            let bytes = std::fs::read(dir.path().join(&entry.meta.source_path)).unwrap();
            let (clip, _) = generate(&entry.spec).unwrap();
            assert_eq!(entry.meta.frame_count, clip.len());
            assert_eq!(entry.meta.width, clip.width());
            let rt = tempfile::tempdir().unwrap();
            let p = rt.path().join("re.diff1");
            crate::video::save_clip(&clip, &p, ClipFormat::Diff1).unwrap();
            assert_eq!(bytes, std::fs::read(&p).unwrap(), "{}", entry.name);
        }
    }

    #[test]
    fn corpus_rejects_duplicate_names() {
        let dir = tempfile::tempdir().unwrap();
        let grid = vec![
            ("a".to_string(), flat_spec()),
            ("a".to_string(), flat_spec()),
        ];
        assert!(matches!(
            corpus(&grid, dir.path()),
            Err(LensError::Parameter(_))
        ));
    }

    #[test]
    fn empty_corpus_is_empty_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let manifest_path = corpus(&[], dir.path()).unwrap();
        let manifest = Manifest::load(&manifest_path).unwrap();
        assert!(manifest.entries.is_empty());
    }

    #[test]
    fn longest_absent_run() {
        let mut spec = flat_spec();
        spec.frames = 10;
        spec.subject = Some(SubjectSpec {
            amplitude: 0.004,
            tint: [1.0, 1.0, 1.0],
            sigma_x: 2.0,
            sigma_y: 2.0,
            trajectory: Trajectory::Static {
                x: 8.0,
                y: 8.0,
                t0: 2,
                t1: 4,
            },
        });
        let (_, truth) = generate(&spec).unwrap();
        assert_eq!(truth.longest_absent_run(), Some([5, 10]));
    }
}
