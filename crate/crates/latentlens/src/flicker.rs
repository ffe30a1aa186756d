//! Periodic lighting-sway removal.
//!
//! AC-driven intensity sways show up as a global multiplicative curve. After
//! log conversion and mean subtraction they are (to first order) a single
//! temporal direction shared by every pixel, so projecting each pixel's
//! series onto the orthogonal complement of the global median-intensity
//! curve cancels them without touching spatially localized signals.

use std::fs;
use std::path::Path;

use crate::error::{LensError, Result};
use crate::video::{Clip, Frame};

/// Mean-centered per-frame median intensity curve.
#[derive(Debug, Clone)]
pub struct GlobalCurve {
    values: Vec<f64>,
    centered: bool,
    norm: f64,
}

impl GlobalCurve {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_centered(&self) -> bool {
        self.centered
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    /// CSV export: `frame_index,median_value` per row.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = String::from("frame_index,median_value\n");
        for (t, v) in self.values.iter().enumerate() {
            text.push_str(&format!("{t},{v}\n"));
        }
        fs::write(path, text).map_err(|e| LensError::io(path, e))
    }
}

/// Result of [`project_out`]: the corrected clip plus a flag for the
/// degenerate zero-norm case where nothing could be projected out.
#[derive(Debug, Clone)]
pub struct ProjectionOutcome {
    pub clip: Clip,
    /// True when the curve norm was zero and the clip passed through
    /// unchanged; callers surface this in their provenance.
    pub skipped_zero_norm: bool,
}

fn median_of(sorted_scratch: &mut [f32]) -> f64 {
    let n = sorted_scratch.len();
    let mid = n / 2;
    let (_, m, _) = sorted_scratch.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
    let hi = *m as f64;
    if n % 2 == 1 {
        hi
    } else {
        let (_, m2, _) = sorted_scratch[..mid].select_nth_unstable_by(mid - 1, |a, b| a.total_cmp(b));
        (hi + *m2 as f64) / 2.0
    }
}

/// Per-frame median intensity (luma for RGB clips), mean-centered.
pub fn global_median_curve(clip: &Clip) -> GlobalCurve {
    let gray = clip.to_gray();
    let mut scratch = Vec::new();
    let mut values: Vec<f64> = gray
        .frames()
        .iter()
        .map(|f| {
            scratch.clear();
            scratch.extend_from_slice(f.plane(0));
            median_of(&mut scratch)
        })
        .collect();
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    for v in values.iter_mut() {
        *v -= mean;
    }
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    GlobalCurve {
        values,
        centered: true,
        norm,
    }
}

/// Project every pixel's time series onto the orthogonal complement of the
/// global curve.
///
/// Each series is mean-centered before projecting and its mean is restored
/// afterwards, so DC content unrelated to the sway is untouched.
pub fn project_out(clip: &Clip, curve: &GlobalCurve) -> Result<ProjectionOutcome> {
    if curve.len() != clip.len() {
        return Err(LensError::Contract(format!(
            "curve length {} != clip length {}",
            curve.len(),
            clip.len()
        )));
    }
    if !curve.is_centered() {
        return Err(LensError::Contract("curve must be mean-centered".into()));
    }
    if curve.norm() == 0.0 {
        return Ok(ProjectionOutcome {
            clip: clip.clone(),
            skipped_zero_norm: true,
        });
    }
    let g = curve.values();
    let gg: f64 = g.iter().map(|v| v * v).sum();
    let t_len = clip.len();
    let n = clip.frame(0).data().len();
    let inv_t = 1.0 / t_len as f64;

    // Time series live across frames; gather per pixel.
    let mut out: Vec<Vec<f32>> = clip.frames().iter().map(|f| f.data().to_vec()).collect();
    let mut series = vec![0.0f64; t_len];
    for i in 0..n {
        let mut mean = 0.0f64;
        for (t, frame) in clip.frames().iter().enumerate() {
            let v = frame.data()[i] as f64;
            series[t] = v;
            mean += v;
        }
        mean *= inv_t;
        let mut dot = 0.0f64;
        for t in 0..t_len {
            dot += (series[t] - mean) * g[t];
        }
        let alpha = dot / gg;
        for t in 0..t_len {
            out[t][i] = (series[t] - alpha * g[t]) as f32;
        }
    }
    let frames = out
        .into_iter()
        .map(|data| {
            Frame::from_parts(
                clip.width(),
                clip.height(),
                clip.channels(),
                clip.signedness(),
                data,
            )
        })
        .collect();
    Ok(ProjectionOutcome {
        clip: Clip::from_parts(frames, clip.fps()),
        skipped_zero_norm: false,
    })
}
