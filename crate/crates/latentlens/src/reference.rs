//! Reference baselines and difference clips.
//!
//! The two pipelines differ in how the subtrahend is built: a temporal mean
//! over an operator-chosen empty sub-interval (linear space), or the mean of
//! the whole video (log space). Subtraction itself is shared.

use serde::{Deserialize, Serialize};

use crate::error::{LensError, Result};
use crate::video::{Clip, Frame, Signedness};

/// Default offset for [`log_space`]: one 8-bit quantization step, so a zero
/// pixel maps to ln(1/255) instead of -inf while bright pixels are barely
/// biased.
pub const DEFAULT_LOG_EPSILON: f32 = 1.0 / 255.0;

/// Value space a reference (and the clip it is subtracted from) lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Space {
    Linear,
    Log,
}

/// Which frames the baseline averages over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceMode {
    SubInterval,
    WholeVideo,
}

/// Recipe for building a reference frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSpec {
    pub mode: ReferenceMode,
    /// `[t0, t1)` frame range; required iff `mode == SubInterval`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interval: Option<[usize; 2]>,
    pub space: Space,
}

impl ReferenceSpec {
    pub fn whole_video(space: Space) -> ReferenceSpec {
        ReferenceSpec {
            mode: ReferenceMode::WholeVideo,
            interval: None,
            space,
        }
    }

    pub fn sub_interval(t0: usize, t1: usize, space: Space) -> ReferenceSpec {
        ReferenceSpec {
            mode: ReferenceMode::SubInterval,
            interval: Some([t0, t1]),
            space,
        }
    }

    /// Frame range the mean runs over, validated against the clip length.
    fn resolve_range(&self, frame_count: usize) -> Result<(usize, usize)> {
        match (self.mode, self.interval) {
            (ReferenceMode::WholeVideo, None) => Ok((0, frame_count)),
            (ReferenceMode::WholeVideo, Some(_)) => Err(LensError::Parameter(
                "whole_video reference must not carry an interval".into(),
            )),
            (ReferenceMode::SubInterval, None) => Err(LensError::Parameter(
                "sub_interval reference requires an interval".into(),
            )),
            (ReferenceMode::SubInterval, Some([t0, t1])) => {
                if t0 >= t1 {
                    return Err(LensError::Parameter(format!(
                        "reference interval [{t0}, {t1}) must be non-empty"
                    )));
                }
                if t1 > frame_count {
                    return Err(LensError::Range(format!(
                        "reference interval [{t0}, {t1}) out of bounds for {frame_count} frames"
                    )));
                }
                Ok((t0, t1))
            }
        }
    }
}

/// A per-pixel temporal mean plus the spec that produced it.
#[derive(Debug, Clone)]
pub struct ReferenceFrame {
    frame: Frame,
    spec: ReferenceSpec,
}

impl ReferenceFrame {
    pub fn frame(&self) -> &Frame {
        &self.frame
    }

    pub fn spec(&self) -> &ReferenceSpec {
        &self.spec
    }
}

fn expect_space(clip: &Clip, space: Space, what: &str) -> Result<()> {
    let want = match space {
        Space::Linear => Signedness::Source,
        Space::Log => Signedness::Residual,
    };
    if clip.signedness() != want {
        return Err(LensError::Contract(format!(
            "{what}: {:?}-space operation on a {:?} clip",
            space,
            clip.signedness()
        )));
    }
    Ok(())
}

/// Map every value to `ln(v + epsilon)`.
///
/// The output is tagged residual since log values are negative for any
/// input below `1 - epsilon`.
pub fn log_space(clip: &Clip, epsilon: f32) -> Result<Clip> {
    if !(epsilon > 0.0) {
        return Err(LensError::Parameter(format!(
            "log epsilon must be > 0, got {epsilon}"
        )));
    }
    expect_space(clip, Space::Linear, "log_space")?;
    let frames = clip
        .frames()
        .iter()
        .map(|f| {
            let data = f
                .data()
                .iter()
                .map(|&v| ((v as f64 + epsilon as f64).ln()) as f32)
                .collect();
            Frame::from_parts(f.width(), f.height(), f.channels(), Signedness::Residual, data)
        })
        .collect();
    Ok(Clip::from_parts(frames, clip.fps()))
}

/// Per-pixel arithmetic mean over the frames the spec selects.
///
/// Accumulation is two-pass in f64 (sum, then divide) so the mean-zero
/// property of whole-video residuals holds to 1e-5 even on long clips.
pub fn build_reference(clip: &Clip, spec: ReferenceSpec) -> Result<ReferenceFrame> {
    expect_space(clip, spec.space, "build_reference")?;
    let (t0, t1) = spec.resolve_range(clip.len())?;
    let n = clip.frame(0).data().len();
    let mut acc = vec![0.0f64; n];
    for t in t0..t1 {
        for (a, v) in acc.iter_mut().zip(clip.frame(t).data()) {
            *a += *v as f64;
        }
    }
    let count = (t1 - t0) as f64;
    let data: Vec<f32> = acc.into_iter().map(|a| (a / count) as f32).collect();
    let frame = Frame::from_parts(
        clip.width(),
        clip.height(),
        clip.channels(),
        clip.signedness(),
        data,
    );
    Ok(ReferenceFrame { frame, spec })
}

/// Pixel-wise `frame - reference` over the whole clip.
pub fn subtract_reference(clip: &Clip, reference: &ReferenceFrame) -> Result<Clip> {
    let rf = reference.frame();
    if clip.width() != rf.width()
        || clip.height() != rf.height()
        || clip.channels() != rf.channels()
    {
        return Err(LensError::Contract(format!(
            "subtract_reference: clip {}x{}x{} vs reference {}x{}x{}",
            clip.width(),
            clip.height(),
            clip.channels(),
            rf.width(),
            rf.height(),
            rf.channels()
        )));
    }
    expect_space(clip, reference.spec().space, "subtract_reference")?;
    let frames = clip
        .frames()
        .iter()
        .map(|f| {
            let data = f
                .data()
                .iter()
                .zip(rf.data())
                .map(|(v, r)| v - r)
                .collect();
            Frame::from_parts(f.width(), f.height(), f.channels(), Signedness::Residual, data)
        })
        .collect();
    Ok(Clip::from_parts(frames, clip.fps()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn clip_from_pixel_series(series: &[f32]) -> Clip {
        let frames = series
            .iter()
            .map(|&v| Frame::new(1, 1, 1, Signedness::Source, vec![v]).unwrap())
            .collect();
        Clip::new(frames, 30.0).unwrap()
    }

    #[test]
    fn log_space_values() {
        let clip = clip_from_pixel_series(&[1.0, 0.0]);
        let log = log_space(&clip, 1e-3).unwrap();
        assert!((log.frame(0).get(0, 0, 0) - 1.0010_f32.ln()).abs() < 1e-6);
        assert!((log.frame(1).get(0, 0, 0) - 1e-3_f32.ln()).abs() < 1e-3);
        assert_eq!(log.signedness(), Signedness::Residual);
    }

    #[test]
    fn log_space_rejects_bad_epsilon() {
        let clip = clip_from_pixel_series(&[0.5]);
        assert!(matches!(
            log_space(&clip, 0.0),
            Err(LensError::Parameter(_))
        ));
        assert!(matches!(
            log_space(&clip, -1.0),
            Err(LensError::Parameter(_))
        ));
    }

    #[test]
    fn log_space_preserves_constancy() {
        let clip = clip_from_pixel_series(&[0.3, 0.3, 0.3]);
        let log = log_space(&clip, DEFAULT_LOG_EPSILON).unwrap();
        let v0 = log.frame(0).get(0, 0, 0);
        assert!(log.frames().iter().all(|f| f.get(0, 0, 0) == v0));
    }

    #[test]
    fn whole_video_mean_of_two_frames() {
        let clip = clip_from_pixel_series(&[0.2, 0.4]);
        let r = build_reference(&clip, ReferenceSpec::whole_video(Space::Linear)).unwrap();
        assert!((r.frame().get(0, 0, 0) - 0.3).abs() < 1e-7);
    }

    #[test]
    fn sub_interval_single_frame_mean() {
        let clip = clip_from_pixel_series(&[0.2, 0.4]);
        let r = build_reference(&clip, ReferenceSpec::sub_interval(0, 1, Space::Linear)).unwrap();
        assert_eq!(r.frame().get(0, 0, 0), 0.2);
    }

    #[test]
    fn interval_bounds_checked() {
        let clip = clip_from_pixel_series(&[0.2, 0.4]);
        assert!(matches!(
            build_reference(&clip, ReferenceSpec::sub_interval(0, 3, Space::Linear)),
            Err(LensError::Range(_))
        ));
        assert!(matches!(
            build_reference(&clip, ReferenceSpec::sub_interval(1, 1, Space::Linear)),
            Err(LensError::Parameter(_))
        ));
    }

    #[test]
    fn subtract_self_is_zero() {
        let clip = clip_from_pixel_series(&[0.25, 0.25]);
        let r = build_reference(&clip, ReferenceSpec::whole_video(Space::Linear)).unwrap();
        let res = subtract_reference(&clip, &r).unwrap();
        assert!(res
            .frames()
            .iter()
            .all(|f| f.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn subtract_additive_shift() {
        let base = Frame::new(2, 2, 1, Signedness::Source, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let shifted = Frame::new(
            2,
            2,
            1,
            Signedness::Source,
            base.data().iter().map(|v| v + 0.004).collect(),
        )
        .unwrap();
        let base_clip = Clip::new(vec![base], 30.0).unwrap();
        let r = build_reference(&base_clip, ReferenceSpec::whole_video(Space::Linear)).unwrap();
        let shifted_clip = Clip::new(vec![shifted], 30.0).unwrap();
        let res = subtract_reference(&shifted_clip, &r).unwrap();
        for &v in res.frame(0).data() {
            assert!((v - 0.004).abs() < 1e-6, "{v}");
        }
    }

    #[test]
    fn space_mismatch_is_contract_error() {
        let clip = clip_from_pixel_series(&[0.2, 0.4]);
        let log_clip = log_space(&clip, DEFAULT_LOG_EPSILON).unwrap();
        // Log reference cannot be built from a linear clip and vice versa.
        assert!(matches!(
            build_reference(&clip, ReferenceSpec::whole_video(Space::Log)),
            Err(LensError::Contract(_))
        ));
        let lin_ref = build_reference(&clip, ReferenceSpec::whole_video(Space::Linear)).unwrap();
        assert!(matches!(
            subtract_reference(&log_clip, &lin_ref),
            Err(LensError::Contract(_))
        ));
    }

    #[test]
    fn geometry_mismatch_is_contract_error() {
        let clip = clip_from_pixel_series(&[0.2]);
        let wide = Clip::new(
            vec![Frame::new(2, 1, 1, Signedness::Source, vec![0.1, 0.2]).unwrap()],
            30.0,
        )
        .unwrap();
        let r = build_reference(&wide, ReferenceSpec::whole_video(Space::Linear)).unwrap();
        assert!(matches!(
            subtract_reference(&clip, &r),
            Err(LensError::Contract(_))
        ));
    }

    #[test]
    fn constant_clip_reference_is_exact() {
        let clip = clip_from_pixel_series(&[0.37; 17]);
        let r = build_reference(&clip, ReferenceSpec::whole_video(Space::Linear)).unwrap();
        assert_eq!(r.frame().get(0, 0, 0), 0.37);
    }

    #[test]
    fn sub_interval_reference_matches_clean_base() {
        // Impact only in frames 50..=99; the [0,50) reference must equal
        // the clean base to within the averaged noise, 5 sigma/sqrt(50).
        let scene = crate::synth::SceneSpec {
            width: 64,
            height: 64,
            frames: 100,
            fps: 30.0,
            channels: 1,
            base: crate::synth::Base::Flat { level: 0.5 },
            noise_sigma: 0.002,
            flicker: None,
            seed: 21,
            subject: Some(crate::synth::SubjectSpec {
                amplitude: 0.01,
                tint: [1.0, 1.0, 1.0],
                sigma_x: 8.0,
                sigma_y: 8.0,
                trajectory: crate::synth::Trajectory::Static {
                    x: 32.0,
                    y: 32.0,
                    t0: 50,
                    t1: 99,
                },
            }),
        };
        let (clip, _) = crate::synth::generate(&scene).unwrap();
        let r = build_reference(&clip, ReferenceSpec::sub_interval(0, 50, Space::Linear)).unwrap();
        let bound = 5.0 * 0.002 / (50.0f32).sqrt();
        let worst = r
            .frame()
            .data()
            .iter()
            .map(|v| (v - 0.5).abs())
            .fold(0.0f32, f32::max);
        assert!(worst < bound, "reference deviates {worst} > {bound}");
    }

    #[test]
    fn residual_recovers_injected_blob() {
        let scene = crate::synth::SceneSpec {
            width: 32,
            height: 32,
            frames: 80,
            fps: 30.0,
            channels: 1,
            base: crate::synth::Base::Flat { level: 0.5 },
            noise_sigma: 0.002,
            flicker: None,
            seed: 22,
            subject: Some(crate::synth::SubjectSpec {
                amplitude: 0.01,
                tint: [1.0, 1.0, 1.0],
                sigma_x: 4.0,
                sigma_y: 4.0,
                trajectory: crate::synth::Trajectory::Static {
                    x: 16.0,
                    y: 16.0,
                    t0: 40,
                    t1: 79,
                },
            }),
        };
        let (clip, _) = crate::synth::generate(&scene).unwrap();
        let r = build_reference(&clip, ReferenceSpec::sub_interval(0, 40, Space::Linear)).unwrap();
        let residual = subtract_reference(&clip, &r).unwrap();
        // Mean residual at the blob center over impact frames recovers the
        // injected amplitude within the averaged noise.
        let mean: f64 = (40..80)
            .map(|t| residual.frame(t).get(0, 16, 16) as f64)
            .sum::<f64>()
            / 40.0;
        let tol = 5.0 * 0.002 * (1.0f64 / 40.0 + 1.0 / 40.0).sqrt();
        assert!((mean - 0.01).abs() < tol, "blob amplitude {mean} vs 0.01");
        // An empty corner stays at zero.
        let corner: f64 = (40..80)
            .map(|t| residual.frame(t).get(0, 2, 2) as f64)
            .sum::<f64>()
            / 40.0;
        assert!(corner.abs() < tol, "corner {corner}");
    }

    proptest! {
        /// Whole-video residuals average to zero per pixel.
        #[test]
        fn mean_property(seed in 0u64..500, frames in 2usize..40) {
            let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15) | 1;
            let mut next = || {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                ((state >> 11) as f64 / (1u64 << 53) as f64) as f32
            };
            let frames: Vec<Frame> = (0..frames)
                .map(|_| {
                    let data: Vec<f32> = (0..9).map(|_| next()).collect();
                    Frame::new(3, 3, 1, Signedness::Source, data).unwrap()
                })
                .collect();
            let clip = Clip::new(frames, 30.0).unwrap();
            let r = build_reference(&clip, ReferenceSpec::whole_video(Space::Linear)).unwrap();
            let res = subtract_reference(&clip, &r).unwrap();
            for i in 0..9 {
                let mean: f64 = res.frames().iter().map(|f| f.data()[i] as f64).sum::<f64>()
                    / res.len() as f64;
                prop_assert!(mean.abs() < 1e-5, "pixel {i} mean {mean}");
            }
        }

        /// subtract_reference(a*clip + b, a*ref + b) == a*subtract_reference(clip, ref).
        #[test]
        fn linearity(seed in 0u64..500, a in 0.3f32..0.9, b in 0.0f32..0.1) {
            let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15) | 1;
            let mut next = || {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                (((state >> 11) as f64 / (1u64 << 53) as f64) * 0.5) as f32
            };
            let frames: Vec<Frame> = (0..5)
                .map(|_| {
                    let data: Vec<f32> = (0..4).map(|_| next()).collect();
                    Frame::new(2, 2, 1, Signedness::Source, data).unwrap()
                })
                .collect();
            let clip = Clip::new(frames, 30.0).unwrap();
            let scaled_frames: Vec<Frame> = clip
                .frames()
                .iter()
                .map(|f| {
                    let data: Vec<f32> = f.data().iter().map(|v| a * v + b).collect();
                    Frame::new(2, 2, 1, Signedness::Source, data).unwrap()
                })
                .collect();
            let scaled = Clip::new(scaled_frames, 30.0).unwrap();

            let r = build_reference(&clip, ReferenceSpec::whole_video(Space::Linear)).unwrap();
            let rs = build_reference(&scaled, ReferenceSpec::whole_video(Space::Linear)).unwrap();
            let res = subtract_reference(&clip, &r).unwrap();
            let res_s = subtract_reference(&scaled, &rs).unwrap();
            for (fs, f) in res_s.frames().iter().zip(res.frames()) {
                for (vs, v) in fs.data().iter().zip(f.data()) {
                    prop_assert!((vs - a * v).abs() < 1e-5, "{vs} vs {}", a * v);
                }
            }
        }
    }
}
