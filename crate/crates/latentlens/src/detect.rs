//! Scene-parameter estimation from filtered residuals.
//!
//! Everything here is threshold-relative: detection decisions compare frame
//! statistics against a noise floor estimated from a known-empty interval
//! of the same clip, never against absolute intensities. That makes every
//! reported quantity invariant under rescaling of the residual.

use serde::{Deserialize, Serialize};

use crate::error::{LensError, Result};
use crate::spacetime::{spacetime_project, PlotAxis, Reduction, SpaceTimePlot};
use crate::video::{Clip, Frame};

fn default_presence_k() -> f64 {
    4.0
}

fn default_extent_fraction() -> f64 {
    0.2
}

fn default_min_event_frames() -> usize {
    5
}

fn default_walk_speed() -> f64 {
    0.3
}

fn default_osc_cycles() -> usize {
    2
}

/// Detector thresholds. All of them are relative quantities (noise-sigma
/// multiples, fractions of maxima, px/frame), so a report never contains an
/// absolute intensity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionSpec {
    #[serde(default = "default_presence_k")]
    pub presence_k: f64,
    #[serde(default = "default_extent_fraction")]
    pub extent_fraction: f64,
    #[serde(default = "default_min_event_frames")]
    pub min_event_frames: usize,
    #[serde(default = "default_walk_speed")]
    pub walk_speed_threshold: f64,
    #[serde(default = "default_osc_cycles")]
    pub oscillation_min_cycles: usize,
}

impl Default for DetectionSpec {
    fn default() -> Self {
        DetectionSpec {
            presence_k: default_presence_k(),
            extent_fraction: default_extent_fraction(),
            min_event_frames: default_min_event_frames(),
            walk_speed_threshold: default_walk_speed(),
            oscillation_min_cycles: default_osc_cycles(),
        }
    }
}

impl DetectionSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.presence_k > 0.0) {
            return Err(LensError::Parameter("presence_k must be > 0".into()));
        }
        if !(self.extent_fraction > 0.0 && self.extent_fraction < 1.0) {
            return Err(LensError::Parameter(
                "extent_fraction must be in (0,1)".into(),
            ));
        }
        if self.min_event_frames == 0 || self.oscillation_min_cycles == 0 {
            return Err(LensError::Parameter(
                "min_event_frames and oscillation_min_cycles must be > 0".into(),
            ));
        }
        if !(self.walk_speed_threshold > 0.0) {
            return Err(LensError::Parameter(
                "walk_speed_threshold must be > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Robust noise estimate from a known-empty interval.
#[derive(Debug, Clone, Copy)]
pub struct NoiseFloor {
    /// 1.4826 x median absolute deviation over every sample in the interval.
    pub sigma: f64,
    /// Set when the interval MAD exceeds twice the first-quartile per-frame
    /// MAD, which suggests the "empty" interval was not actually empty.
    pub suspect: bool,
}

fn median_f64(values: &mut [f64]) -> f64 {
    let n = values.len();
    let mid = n / 2;
    let (_, m, _) = values.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
    let hi = *m;
    if n % 2 == 1 {
        hi
    } else {
        let (_, m2, _) = values[..mid].select_nth_unstable_by(mid - 1, |a, b| a.total_cmp(b));
        (hi + *m2) / 2.0
    }
}

fn mad_of(values: &[f64]) -> f64 {
    let mut scratch: Vec<f64> = values.to_vec();
    let med = median_f64(&mut scratch);
    let mut dev: Vec<f64> = values.iter().map(|v| (v - med).abs()).collect();
    median_f64(&mut dev)
}

/// Estimate the noise floor of a residual clip over `[t0, t1)`.
pub fn noise_floor(residual: &Clip, empty_interval: [usize; 2]) -> Result<NoiseFloor> {
    let [t0, t1] = empty_interval;
    if t1 > residual.len() || t0 >= t1 {
        return Err(LensError::Parameter(format!(
            "empty interval [{t0}, {t1}) invalid for {} frames",
            residual.len()
        )));
    }
    if t1 - t0 < 3 {
        return Err(LensError::Parameter(format!(
            "empty interval [{t0}, {t1}) too short; need >= 3 frames"
        )));
    }
    let mut all = Vec::with_capacity((t1 - t0) * residual.frame(0).data().len());
    let mut frame_mads = Vec::with_capacity(t1 - t0);
    for t in t0..t1 {
        let values: Vec<f64> = residual.frame(t).data().iter().map(|&v| v as f64).collect();
        frame_mads.push(mad_of(&values));
        all.extend_from_slice(&values);
    }
    let interval_mad = mad_of(&all);
    frame_mads.sort_by(|a, b| a.total_cmp(b));
    let q1 = frame_mads[(frame_mads.len() - 1) / 4];
    let suspect = interval_mad > 2.0 * q1 && q1 > 0.0;
    Ok(NoiseFloor {
        sigma: 1.4826 * interval_mad,
        suspect,
    })
}

/// Per-frame energies and hysteresis-cleaned presence flags.
#[derive(Debug, Clone)]
pub struct PresenceTrack {
    /// Spatial RMS of each frame.
    pub energy: Vec<f64>,
    pub present: Vec<bool>,
}

const MAJORITY_WINDOW: usize = 5;

/// Threshold frame energy against the noise floor, then clean the flags:
/// majority vote over a 5-frame window and removal of runs shorter than
/// `min_event_frames`.
///
/// A noise-only frame's spatial RMS equals the per-pixel noise sigma in
/// expectation, so `sigma` doubles as the expected noise RMS.
pub fn presence_track(residual: &Clip, spec: &DetectionSpec, sigma: f64) -> PresenceTrack {
    let n = residual.frame(0).data().len() as f64;
    let energy: Vec<f64> = residual
        .frames()
        .iter()
        .map(|f| {
            let ss: f64 = f.data().iter().map(|&v| v as f64 * v as f64).sum();
            (ss / n).sqrt()
        })
        .collect();
    let raw: Vec<bool> = energy
        .iter()
        .map(|&e| {
            if sigma > 0.0 {
                e > spec.presence_k * sigma
            } else {
                e > 0.0
            }
        })
        .collect();

    let t_len = raw.len();
    let half = MAJORITY_WINDOW / 2;
    let mut smooth = vec![false; t_len];
    for t in 0..t_len {
        let lo = t.saturating_sub(half);
        let hi = (t + half + 1).min(t_len);
        let count = raw[lo..hi].iter().filter(|&&b| b).count();
        smooth[t] = count * 2 > hi - lo;
    }

    // Drop runs shorter than the minimum event length.
    let mut present = smooth.clone();
    let mut t = 0;
    while t < t_len {
        if smooth[t] {
            let start = t;
            while t < t_len && smooth[t] {
                t += 1;
            }
            if t - start < spec.min_event_frames {
                for flag in present.iter_mut().take(t).skip(start) {
                    *flag = false;
                }
            }
        } else {
            t += 1;
        }
    }
    PresenceTrack { energy, present }
}

/// Inclusive pixel bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BBox {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl BBox {
    pub fn width(&self) -> usize {
        self.x1 - self.x0 + 1
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0 + 1
    }
}

/// Centroid and extent of the residual energy in one frame.
#[derive(Debug, Clone, Copy)]
pub struct Location {
    pub centroid: (f64, f64),
    pub bbox: BBox,
    pub degenerate: bool,
}

/// Locate the subject in a present frame: |value|-weighted centroid over
/// the whole frame, plus the tight bounding box of pixels whose weight
/// reaches `extent_fraction` of the frame maximum.
///
/// The box is expanded minimally when heavy off-blob weight pulls the
/// centroid outside it, so the reported box always contains the centroid.
pub fn locate(frame: &Frame, spec: &DetectionSpec) -> Location {
    let (w, h, c_len) = (frame.width(), frame.height(), frame.channels());
    let n = w * h;
    let inv_c = 1.0 / c_len as f64;
    let mut weights = vec![0.0f64; n];
    for c in 0..c_len {
        let plane = frame.plane(c);
        for (wv, &v) in weights.iter_mut().zip(plane) {
            *wv += (v as f64).abs() * inv_c;
        }
    }
    let max = weights.iter().copied().fold(0.0f64, f64::max);
    let min = weights.iter().copied().fold(f64::INFINITY, f64::min);
    if max == min {
        // No structure at all; report frame center and the full frame.
        return Location {
            centroid: ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0),
            bbox: BBox {
                x0: 0,
                y0: 0,
                x1: w - 1,
                y1: h - 1,
            },
            degenerate: true,
        };
    }
    let mut sum = 0.0f64;
    let mut sx = 0.0f64;
    let mut sy = 0.0f64;
    let threshold = spec.extent_fraction * max;
    let (mut x0, mut y0, mut x1, mut y1) = (w, h, 0usize, 0usize);
    for y in 0..h {
        for x in 0..w {
            let wv = weights[y * w + x];
            sum += wv;
            sx += wv * x as f64;
            sy += wv * y as f64;
            if wv >= threshold {
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x);
                y1 = y1.max(y);
            }
        }
    }
    let centroid = (sx / sum, sy / sum);
    let cx = centroid.0.round().clamp(0.0, (w - 1) as f64) as usize;
    let cy = centroid.1.round().clamp(0.0, (h - 1) as f64) as usize;
    let bbox = BBox {
        x0: x0.min(cx),
        y0: y0.min(cy),
        x1: x1.max(cx),
        y1: y1.max(cy),
    };
    Location {
        centroid,
        bbox,
        degenerate: false,
    }
}

/// Clothing color estimate: a unit-max tint of the signed residual.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ColorEstimate {
    /// Input clip had no color channels.
    Gray,
    Tint { rgb: [f64; 3] },
}

/// Mean signed residual per channel inside the extent boxes of present
/// frames, normalized so the dominant channel has magnitude 1.
pub fn color_estimate(
    residual: &Clip,
    present: &[bool],
    boxes: &[Option<BBox>],
) -> Result<ColorEstimate> {
    if present.len() != residual.len() || boxes.len() != residual.len() {
        return Err(LensError::Contract(
            "presence/box tracks must match the clip length".into(),
        ));
    }
    if residual.channels() != 3 {
        return Ok(ColorEstimate::Gray);
    }
    let mut sums = [0.0f64; 3];
    let mut count = 0u64;
    for (t, frame) in residual.frames().iter().enumerate() {
        if !present[t] {
            continue;
        }
        let Some(b) = boxes[t] else { continue };
        let w = frame.width();
        for c in 0..3 {
            let plane = frame.plane(c);
            for y in b.y0..=b.y1 {
                for x in b.x0..=b.x1 {
                    sums[c] += plane[y * w + x] as f64;
                }
            }
        }
        count += (b.width() * b.height()) as u64;
    }
    if count == 0 {
        return Err(LensError::Parameter(
            "color estimate requires at least one present frame".into(),
        ));
    }
    let means = sums.map(|s| s / count as f64);
    let max = means.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max == 0.0 {
        return Ok(ColorEstimate::Tint { rgb: [0.0; 3] });
    }
    Ok(ColorEstimate::Tint {
        rgb: means.map(|m| m / max),
    })
}

/// Coarse activity category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activity {
    Absent,
    StaticPresence,
    Walking,
    Oscillatory,
}

impl Activity {
    pub fn as_str(&self) -> &'static str {
        match self {
            Activity::Absent => "absent",
            Activity::StaticPresence => "static_presence",
            Activity::Walking => "walking",
            Activity::Oscillatory => "oscillatory",
        }
    }
}

/// Sub-pixel ridge position in one plot column: weighted centroid of the
/// spatial bins at or above half the column maximum. Argmax alone is too
/// quantized to resolve walking speeds below 1 px/frame.
fn ridge_position(plot: &SpaceTimePlot, t: usize) -> f64 {
    let col = plot.column(t);
    let max = col.iter().copied().fold(f32::MIN, f32::max);
    if max <= 0.0 {
        return (col.len() as f64 - 1.0) / 2.0;
    }
    let thr = 0.5 * max;
    let mut sum = 0.0f64;
    let mut sx = 0.0f64;
    for (x, &v) in col.iter().enumerate() {
        if v >= thr {
            sum += v as f64;
            sx += v as f64 * x as f64;
        }
    }
    sx / sum
}

/// Stride used for ridge speed estimates; averages out sub-pixel jitter.
const SPEED_STRIDE: usize = 5;

/// Hysteresis band (px) for mean-crossing counting.
const CROSSING_BAND: f64 = 1.0;

/// Classify the activity from ridge motion on the horizontal plot.
///
/// The vertical plot is accepted for interface symmetry (it backs extent
/// cross-checks elsewhere) but does not enter the decision.
pub fn classify_activity(
    horizontal: &SpaceTimePlot,
    vertical: &SpaceTimePlot,
    present: &[bool],
    spec: &DetectionSpec,
) -> Result<Activity> {
    if horizontal.reduction != Reduction::AbsMean {
        return Err(LensError::Contract(
            "activity classification requires an abs_mean horizontal plot".into(),
        ));
    }
    if horizontal.axis != PlotAxis::Horizontal || vertical.axis != PlotAxis::Vertical {
        return Err(LensError::Contract(
            "plots passed with swapped axes".into(),
        ));
    }
    if horizontal.frame_count() != present.len() || vertical.frame_count() != present.len() {
        return Err(LensError::Contract(
            "plot frame count must match the presence track".into(),
        ));
    }
    let track: Vec<(usize, f64)> = (0..present.len())
        .filter(|&t| present[t])
        .map(|t| (t, ridge_position(horizontal, t)))
        .collect();
    if track.is_empty() {
        return Ok(Activity::Absent);
    }
    let width = horizontal.space_len() as f64;

    // Strided position deltas; the stride averages out sub-pixel jitter.
    let stride = SPEED_STRIDE.min(track.len().saturating_sub(1)).max(1);
    let deltas: Vec<f64> = track
        .windows(stride + 1)
        .filter(|w| w[stride].0 - w[0].0 == stride)
        .map(|w| w[stride].1 - w[0].1)
        .collect();
    let mut abs_deltas: Vec<f64> = deltas.iter().map(|d| d.abs() / stride as f64).collect();
    let speed = if abs_deltas.is_empty() {
        0.0
    } else {
        median_f64(&mut abs_deltas)
    };

    // A walk moves one way; a sway reverses. Fraction of strided steps in
    // the dominant direction separates the two.
    let moving: Vec<&f64> = deltas.iter().filter(|d| d.abs() > 1e-12).collect();
    let forward = moving.iter().filter(|d| ***d > 0.0).count();
    let monotone_fraction = if moving.is_empty() {
        0.0
    } else {
        forward.max(moving.len() - forward) as f64 / moving.len() as f64
    };

    // Net displacement as the least-squares trend times the track span;
    // unlike endpoint differences this is insensitive to the phase an
    // oscillation happens to stop at.
    let net = {
        let len = track.len() as f64;
        let mean_t = track.iter().map(|&(t, _)| t as f64).sum::<f64>() / len;
        let mean_p = track.iter().map(|&(_, p)| p).sum::<f64>() / len;
        let mut num = 0.0f64;
        let mut den = 0.0f64;
        for &(t, p) in &track {
            let dt = t as f64 - mean_t;
            num += dt * (p - mean_p);
            den += dt * dt;
        }
        let span = (track[track.len() - 1].0 - track[0].0) as f64;
        if den > 0.0 {
            (num / den).abs() * span
        } else {
            0.0
        }
    };

    if speed > spec.walk_speed_threshold && monotone_fraction >= 0.75 && net > 0.25 * width {
        return Ok(Activity::Walking);
    }

    // Mean crossings with a +-1 px hysteresis band.
    let mean = track.iter().map(|&(_, p)| p).sum::<f64>() / track.len() as f64;
    let mut state: Option<bool> = None; // true = above band
    let mut crossings = 0usize;
    for &(_, p) in &track {
        let above = if p > mean + CROSSING_BAND {
            Some(true)
        } else if p < mean - CROSSING_BAND {
            Some(false)
        } else {
            None
        };
        if let Some(a) = above {
            if let Some(prev) = state {
                if prev != a {
                    crossings += 1;
                }
            }
            state = Some(a);
        }
    }
    if crossings >= 2 * spec.oscillation_min_cycles && net <= 0.25 * width {
        return Ok(Activity::Oscillatory);
    }
    Ok(Activity::StaticPresence)
}

/// Per-frame detection record.
#[derive(Debug, Clone, Serialize)]
pub struct FrameDetection {
    pub present: bool,
    /// Frame RMS relative to the noise floor; absent when the floor is zero.
    pub energy: Option<f64>,
    pub centroid: Option<[f64; 2]>,
    pub extent: Option<BBox>,
    pub degenerate: bool,
}

/// Full detection output for one clip.
#[derive(Debug, Clone, Serialize)]
pub struct DetectionReport {
    pub activity: Activity,
    pub body_width_px: Option<f64>,
    pub body_height_px: Option<f64>,
    pub clothing_color: Option<ColorEstimate>,
    pub noise_floor_suspect: bool,
    pub thresholds: DetectionSpec,
    pub frames: Vec<FrameDetection>,
}

fn round_sig(v: f64, digits: i32) -> f64 {
    if v == 0.0 || !v.is_finite() {
        return 0.0;
    }
    let d = v.abs().log10().floor() as i32;
    let p = digits - 1 - d;
    let scale = 10f64.powi(p);
    (v * scale).round() / scale
}

fn median_usize(values: &[usize]) -> f64 {
    let mut v: Vec<f64> = values.iter().map(|&x| x as f64).collect();
    median_f64(&mut v)
}

/// Run the full detector on a filtered residual clip.
pub fn analyze(
    filtered: &Clip,
    spec: &DetectionSpec,
    noise: &NoiseFloor,
) -> Result<DetectionReport> {
    spec.validate()?;
    let track = presence_track(filtered, spec, noise.sigma);
    let mut frames = Vec::with_capacity(filtered.len());
    let mut boxes: Vec<Option<BBox>> = Vec::with_capacity(filtered.len());
    let mut widths = Vec::new();
    let mut heights = Vec::new();
    for (t, frame) in filtered.frames().iter().enumerate() {
        if track.present[t] {
            let loc = locate(frame, spec);
            widths.push(loc.bbox.width());
            heights.push(loc.bbox.height());
            boxes.push(Some(loc.bbox));
            frames.push(FrameDetection {
                present: true,
                energy: energy_field(track.energy[t], noise.sigma),
                centroid: Some([
                    round_sig(loc.centroid.0, 6),
                    round_sig(loc.centroid.1, 6),
                ]),
                extent: Some(loc.bbox),
                degenerate: loc.degenerate,
            });
        } else {
            boxes.push(None);
            frames.push(FrameDetection {
                present: false,
                energy: energy_field(track.energy[t], noise.sigma),
                centroid: None,
                extent: None,
                degenerate: false,
            });
        }
    }
    let any_present = track.present.iter().any(|&b| b);
    let clothing_color = if any_present && filtered.channels() == 3 {
        match color_estimate(filtered, &track.present, &boxes)? {
            ColorEstimate::Tint { rgb } => Some(ColorEstimate::Tint {
                rgb: rgb.map(|v| round_sig(v, 6)),
            }),
            g => Some(g),
        }
    } else if any_present {
        Some(ColorEstimate::Gray)
    } else {
        None
    };
    let h_plot = spacetime_project(filtered, PlotAxis::Horizontal, Reduction::AbsMean);
    let v_plot = spacetime_project(filtered, PlotAxis::Vertical, Reduction::AbsMean);
    let activity = classify_activity(&h_plot, &v_plot, &track.present, spec)?;
    Ok(DetectionReport {
        activity,
        body_width_px: if widths.is_empty() {
            None
        } else {
            Some(round_sig(median_usize(&widths), 6))
        },
        body_height_px: if heights.is_empty() {
            None
        } else {
            Some(round_sig(median_usize(&heights), 6))
        },
        clothing_color,
        noise_floor_suspect: noise.suspect,
        thresholds: *spec,
        frames,
    })
}

/// Energy is a measured ratio; 4 significant digits keep the report stable
/// under exact rescaling of the input while still being informative.
fn energy_field(energy: f64, sigma: f64) -> Option<f64> {
    if sigma > 0.0 {
        Some(round_sig(energy / sigma, 4))
    } else {
        None
    }
}

impl DetectionReport {
    /// Deterministic JSON: keys sorted, floats pre-rounded to fixed
    /// significant digits, no whitespace variation.
    pub fn to_json(&self) -> String {
        let value = serde_json::to_value(self).expect("report serializes");
        // serde_json's default map is a BTreeMap, so key order is sorted.
        serde_json::to_string_pretty(&value).expect("value prints")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::video::Signedness;

    fn residual_clip(series: Vec<Vec<f32>>, w: usize, h: usize) -> Clip {
        let frames = series
            .into_iter()
            .map(|d| Frame::new(w, h, 1, Signedness::Residual, d).unwrap())
            .collect();
        Clip::new(frames, 30.0).unwrap()
    }

    fn spec() -> DetectionSpec {
        DetectionSpec::default()
    }

    #[test]
    fn noise_floor_zero_for_zero_clip() {
        let clip = residual_clip(vec![vec![0.0; 16]; 5], 4, 4);
        let nf = noise_floor(&clip, [0, 5]).unwrap();
        assert_eq!(nf.sigma, 0.0);
        assert!(!nf.suspect);
    }

    #[test]
    fn noise_floor_matches_known_sigma() {
        let scene = crate::synth::SceneSpec {
            width: 64,
            height: 64,
            frames: 50,
            fps: 30.0,
            channels: 1,
            base: crate::synth::Base::Flat { level: 0.5 },
            noise_sigma: 0.002,
            flicker: None,
            seed: 11,
            subject: None,
        };
        let (clip, _) = crate::synth::generate(&scene).unwrap();
        let frames: Vec<Frame> = clip
            .frames()
            .iter()
            .map(|f| {
                let data = f.data().iter().map(|&v| v - 0.5).collect();
                Frame::new(64, 64, 1, Signedness::Residual, data).unwrap()
            })
            .collect();
        let residual = Clip::new(frames, 30.0).unwrap();
        let nf = noise_floor(&residual, [0, 50]).unwrap();
        assert!(
            (nf.sigma - 0.002).abs() / 0.002 < 0.05,
            "sigma {} not within 5% of 0.002",
            nf.sigma
        );
        assert!(!nf.suspect);
    }

    #[test]
    fn noise_floor_rejects_short_interval() {
        let clip = residual_clip(vec![vec![0.0; 4]; 5], 2, 2);
        assert!(matches!(
            noise_floor(&clip, [0, 2]),
            Err(LensError::Parameter(_))
        ));
        assert!(matches!(
            noise_floor(&clip, [3, 9]),
            Err(LensError::Parameter(_))
        ));
    }

    #[test]
    fn noise_floor_flags_contaminated_interval() {
        // 10 quiet frames, then 20 frames with a strong wide blob: the
        // interval MAD runs far above the first-quartile frame MAD.
        let w = 16;
        let mut series = Vec::new();
        for t in 0..30 {
            let mut data = vec![0.0f32; w * w];
            for (i, v) in data.iter_mut().enumerate() {
                // Small deterministic dither so MADs are nonzero.
                *v = 1e-4 * ((i * 37 + t * 101) % 13) as f32 - 6e-4;
            }
            if t >= 10 {
                for y in 0..w {
                    for x in 0..w {
                        let dx = x as f64 - 8.0;
                        let dy = y as f64 - 8.0;
                        data[y * w + x] +=
                            (0.05 * (-(dx * dx + dy * dy) / 64.0).exp()) as f32;
                    }
                }
            }
            series.push(data);
        }
        let clip = residual_clip(series, w, w);
        let nf = noise_floor(&clip, [0, 30]).unwrap();
        assert!(nf.suspect, "sigma {} should be flagged", nf.sigma);
        let clean = noise_floor(&clip, [0, 10]).unwrap();
        assert!(!clean.suspect);
    }

    #[test]
    fn presence_all_absent_on_zero_clip() {
        let clip = residual_clip(vec![vec![0.0; 16]; 10], 4, 4);
        let track = presence_track(&clip, &spec(), 0.0);
        assert!(track.present.iter().all(|&p| !p));
    }

    #[test]
    fn single_frame_spike_is_suppressed() {
        let mut series = vec![vec![0.001f32; 16]; 20];
        series[10] = vec![1.0; 16];
        let clip = residual_clip(series, 4, 4);
        let track = presence_track(&clip, &spec(), 0.001);
        assert!(track.present.iter().all(|&p| !p), "{:?}", track.present);
    }

    #[test]
    fn sustained_event_is_kept_with_tight_boundaries() {
        let mut series = vec![vec![0.001f32; 16]; 30];
        for s in series.iter_mut().take(25).skip(10) {
            *s = vec![0.02; 16];
        }
        let clip = residual_clip(series, 4, 4);
        let track = presence_track(&clip, &spec(), 0.001);
        let first = track.present.iter().position(|&p| p);
        let last = track.present.iter().rposition(|&p| p);
        assert_eq!(first, Some(10));
        assert_eq!(last, Some(24));
    }

    #[test]
    fn presence_monotone_in_k() {
        let mut series = vec![vec![0.001f32; 16]; 40];
        for (t, s) in series.iter_mut().enumerate() {
            let level = 0.001 + 0.001 * (t % 7) as f32;
            *s = vec![level; 16];
        }
        let clip = residual_clip(series, 4, 4);
        let mut prev: Option<Vec<bool>> = None;
        for k in [1.0, 2.0, 3.0, 5.0] {
            let track = presence_track(
                &clip,
                &DetectionSpec {
                    presence_k: k,
                    ..spec()
                },
                0.001,
            );
            if let Some(prev) = prev {
                for (hi, lo) in track.present.iter().zip(&prev) {
                    assert!(!hi | lo, "present set grew when k increased");
                }
            }
            prev = Some(track.present);
        }
    }

    #[test]
    fn locate_point_mass() {
        let mut data = vec![0.0f32; 32 * 32];
        data[20 * 32 + 10] = 0.5;
        let frame = Frame::new(32, 32, 1, Signedness::Residual, data).unwrap();
        let loc = locate(&frame, &spec());
        assert!((loc.centroid.0 - 10.0).abs() < 1e-9);
        assert!((loc.centroid.1 - 20.0).abs() < 1e-9);
        assert_eq!(loc.bbox, BBox { x0: 10, y0: 20, x1: 10, y1: 20 });
        assert!(!loc.degenerate);
    }

    #[test]
    fn locate_symmetric_blob() {
        let w = 33;
        let mut data = vec![0.0f32; w * w];
        for y in 0..w {
            for x in 0..w {
                let dx = x as f64 - 16.0;
                let dy = y as f64 - 16.0;
                data[y * w + x] = (0.01 * (-(dx * dx + dy * dy) / 18.0).exp()) as f32;
            }
        }
        let frame = Frame::new(w, w, 1, Signedness::Residual, data).unwrap();
        let loc = locate(&frame, &spec());
        assert!((loc.centroid.0 - 16.0).abs() < 0.1);
        assert!((loc.centroid.1 - 16.0).abs() < 0.1);
        assert!(loc.bbox.x0 < 16 && loc.bbox.x1 > 16);
    }

    #[test]
    fn locate_elliptical_blob_matches_level_set() {
        // Noiseless elliptical Gaussian: the 20%-threshold box must match
        // the analytic level-set dims 2*sigma*sqrt(2 ln 5) within 15%.
        let (w, h) = (64usize, 64usize);
        let (sx, sy) = (8.0f64, 5.0f64);
        let mut data = vec![0.0f32; w * h];
        for y in 0..h {
            for x in 0..w {
                let dx = x as f64 - 32.0;
                let dy = y as f64 - 30.0;
                data[y * w + x] =
                    (0.01 * (-(dx * dx) / (2.0 * sx * sx) - (dy * dy) / (2.0 * sy * sy)).exp())
                        as f32;
            }
        }
        let frame = Frame::new(w, h, 1, Signedness::Residual, data).unwrap();
        let loc = locate(&frame, &spec());
        let expect_w = 2.0 * sx * (2.0 * 5.0f64.ln()).sqrt();
        let expect_h = 2.0 * sy * (2.0 * 5.0f64.ln()).sqrt();
        let err_w = (loc.bbox.width() as f64 - expect_w).abs() / expect_w;
        let err_h = (loc.bbox.height() as f64 - expect_h).abs() / expect_h;
        assert!(err_w < 0.15, "width {} vs {expect_w}", loc.bbox.width());
        assert!(err_h < 0.15, "height {} vs {expect_h}", loc.bbox.height());
    }

    #[test]
    fn locate_degenerate_frame() {
        let frame = Frame::new(4, 4, 1, Signedness::Residual, vec![0.3; 16]).unwrap();
        let loc = locate(&frame, &spec());
        assert!(loc.degenerate);
        assert_eq!(loc.bbox, BBox { x0: 0, y0: 0, x1: 3, y1: 3 });
        assert!((loc.centroid.0 - 1.5).abs() < 1e-9);
    }

    #[test]
    fn color_gray_marker_and_precondition() {
        let clip = residual_clip(vec![vec![0.1; 16]; 3], 4, 4);
        let boxes = vec![Some(BBox { x0: 0, y0: 0, x1: 3, y1: 3 }); 3];
        assert_eq!(
            color_estimate(&clip, &[true, true, true], &boxes).unwrap(),
            ColorEstimate::Gray
        );
        let rgb_frames: Vec<Frame> = (0..3)
            .map(|_| Frame::new(4, 4, 3, Signedness::Residual, vec![0.1; 48]).unwrap())
            .collect();
        let rgb = Clip::new(rgb_frames, 30.0).unwrap();
        assert!(matches!(
            color_estimate(&rgb, &[false, false, false], &vec![None; 3]),
            Err(LensError::Parameter(_))
        ));
    }

    #[test]
    fn color_recovers_red_tint() {
        let n = 16;
        let mut data = vec![0.0f32; 3 * n];
        for i in 0..n {
            data[i] = 0.01; // R plane
        }
        let frame = Frame::new(4, 4, 3, Signedness::Residual, data).unwrap();
        let clip = Clip::new(vec![frame], 30.0).unwrap();
        let boxes = vec![Some(BBox { x0: 0, y0: 0, x1: 3, y1: 3 })];
        match color_estimate(&clip, &[true], &boxes).unwrap() {
            ColorEstimate::Tint { rgb } => {
                assert!((rgb[0] - 1.0).abs() < 1e-9);
                assert!(rgb[1].abs() < 1e-9 && rgb[2].abs() < 1e-9);
            }
            other => panic!("{other:?}"),
        }
    }

    fn moving_column_clip(positions: &[Option<usize>], w: usize, h: usize) -> Clip {
        let series: Vec<Vec<f32>> = positions
            .iter()
            .map(|pos| {
                let mut data = vec![0.0f32; w * h];
                if let Some(x) = pos {
                    for y in 0..h {
                        data[y * w + x] = 0.5;
                    }
                }
                data
            })
            .collect();
        residual_clip(series, w, h)
    }

    #[test]
    fn activity_gates_and_classes() {
        let w = 40;
        let spec = spec();

        // No present frames -> absent.
        let clip = moving_column_clip(&vec![None; 10], w, 4);
        let h = spacetime_project(&clip, PlotAxis::Horizontal, Reduction::AbsMean);
        let v = spacetime_project(&clip, PlotAxis::Vertical, Reduction::AbsMean);
        assert_eq!(
            classify_activity(&h, &v, &vec![false; 10], &spec).unwrap(),
            Activity::Absent
        );

        // Constant-velocity walk across most of the frame.
        let positions: Vec<Option<usize>> = (0..30).map(|t| Some(4 + t)).collect();
        let clip = moving_column_clip(&positions, w, 4);
        let h = spacetime_project(&clip, PlotAxis::Horizontal, Reduction::AbsMean);
        let v = spacetime_project(&clip, PlotAxis::Vertical, Reduction::AbsMean);
        assert_eq!(
            classify_activity(&h, &v, &vec![true; 30], &spec).unwrap(),
            Activity::Walking
        );

        // Sinusoidal sway: 4 cycles, zero net displacement.
        let positions: Vec<Option<usize>> = (0..60)
            .map(|t| {
                let phase = 2.0 * std::f64::consts::PI * 4.0 * t as f64 / 60.0;
                Some((20.0 + 10.0 * phase.sin()).round() as usize)
            })
            .collect();
        let clip = moving_column_clip(&positions, w, 4);
        let h = spacetime_project(&clip, PlotAxis::Horizontal, Reduction::AbsMean);
        let v = spacetime_project(&clip, PlotAxis::Vertical, Reduction::AbsMean);
        assert_eq!(
            classify_activity(&h, &v, &vec![true; 60], &spec).unwrap(),
            Activity::Oscillatory
        );

        // Static column.
        let clip = moving_column_clip(&vec![Some(20); 30], w, 4);
        let h = spacetime_project(&clip, PlotAxis::Horizontal, Reduction::AbsMean);
        let v = spacetime_project(&clip, PlotAxis::Vertical, Reduction::AbsMean);
        assert_eq!(
            classify_activity(&h, &v, &vec![true; 30], &spec).unwrap(),
            Activity::StaticPresence
        );
    }

    #[test]
    fn classify_requires_abs_mean_horizontal() {
        let clip = moving_column_clip(&vec![Some(5); 10], 20, 4);
        let h = spacetime_project(&clip, PlotAxis::Horizontal, Reduction::SignedMean);
        let v = spacetime_project(&clip, PlotAxis::Vertical, Reduction::AbsMean);
        assert!(matches!(
            classify_activity(&h, &v, &vec![true; 10], &spec()),
            Err(LensError::Contract(_))
        ));
    }

    #[test]
    fn report_json_is_sorted_and_deterministic() {
        let mut series = vec![vec![0.001f32; 64]; 30];
        for s in series.iter_mut().take(25).skip(10) {
            let mut data = vec![0.001f32; 64];
            data[27] = 0.05;
            data[28] = 0.06;
            *s = data;
        }
        let clip = residual_clip(series, 8, 8);
        let nf = NoiseFloor { sigma: 0.001, suspect: false };
        let report = analyze(&clip, &spec(), &nf).unwrap();
        let a = report.to_json();
        let b = analyze(&clip, &spec(), &nf).unwrap().to_json();
        assert_eq!(a, b);
        let idx_activity = a.find("\"activity\"").unwrap();
        let idx_frames = a.find("\"frames\"").unwrap();
        assert!(idx_activity < idx_frames);
    }

    #[test]
    fn report_invariant_under_exact_rescaling() {
        // Powers of two rescale f32 values exactly, so the whole report
        // must be byte-identical.
        let mut series = vec![vec![0.001f32; 256]; 40];
        for (t, s) in series.iter_mut().enumerate().take(35).skip(12) {
            let mut data = vec![0.001f32; 256];
            for y in 6..10 {
                for x in 6..10 {
                    data[y * 16 + x] = 0.04 + 0.001 * (t % 3) as f32;
                }
            }
            *s = data;
        }
        let clip = residual_clip(series.clone(), 16, 16);
        let scaled = residual_clip(
            series
                .iter()
                .map(|d| d.iter().map(|v| v * 4.0).collect())
                .collect(),
            16,
            16,
        );
        let nf = noise_floor(&clip, [0, 10]).unwrap();
        let nf_scaled = noise_floor(&scaled, [0, 10]).unwrap();
        let a = analyze(&clip, &spec(), &nf).unwrap().to_json();
        let b = analyze(&scaled, &spec(), &nf_scaled).unwrap().to_json();
        assert_eq!(a, b);
    }
}
