//! Space-time plots: a residual clip reduced over one spatial axis, leaving
//! the other spatial axis against time.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{LensError, Result};
use crate::video::Clip;

/// Spatial axis kept in the plot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlotAxis {
    /// Keep columns: reduce over rows; the plot has `width` rows.
    Horizontal,
    /// Keep rows: reduce over columns; the plot has `height` rows.
    Vertical,
}

/// How values along the reduced axis are collapsed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    SignedMean,
    AbsMean,
}

/// `space x time` matrix of reduced residual values.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimePlot {
    pub axis: PlotAxis,
    pub reduction: Reduction,
    space_len: usize,
    frame_count: usize,
    /// Row-major: `data[s * frame_count + t]`.
    data: Vec<f32>,
}

impl SpaceTimePlot {
    pub fn space_len(&self) -> usize {
        self.space_len
    }

    pub fn frame_count(&self) -> usize {
        self.frame_count
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, space: usize, t: usize) -> f32 {
        self.data[space * self.frame_count + t]
    }

    /// Values of one frame column, over the spatial axis.
    pub fn column(&self, t: usize) -> Vec<f32> {
        (0..self.space_len).map(|s| self.get(s, t)).collect()
    }
}

/// Reduce a clip to a space-time plot. RGB clips are luma-converted first.
pub fn spacetime_project(clip: &Clip, axis: PlotAxis, reduction: Reduction) -> SpaceTimePlot {
    let gray = clip.to_gray();
    let (w, h) = (gray.width(), gray.height());
    let t_len = gray.len();
    let space_len = match axis {
        PlotAxis::Horizontal => w,
        PlotAxis::Vertical => h,
    };
    let mut data = vec![0.0f32; space_len * t_len];
    for (t, frame) in gray.frames().iter().enumerate() {
        let plane = frame.plane(0);
        match axis {
            PlotAxis::Horizontal => {
                let inv = 1.0 / h as f64;
                for x in 0..w {
                    let mut acc = 0.0f64;
                    for y in 0..h {
                        let v = plane[y * w + x] as f64;
                        acc += match reduction {
                            Reduction::SignedMean => v,
                            Reduction::AbsMean => v.abs(),
                        };
                    }
                    data[x * t_len + t] = (acc * inv) as f32;
                }
            }
            PlotAxis::Vertical => {
                let inv = 1.0 / w as f64;
                for y in 0..h {
                    let mut acc = 0.0f64;
                    for x in 0..w {
                        let v = plane[y * w + x] as f64;
                        acc += match reduction {
                            Reduction::SignedMean => v,
                            Reduction::AbsMean => v.abs(),
                        };
                    }
                    data[y * t_len + t] = (acc * inv) as f32;
                }
            }
        }
    }
    SpaceTimePlot {
        axis,
        reduction,
        space_len,
        frame_count: t_len,
        data,
    }
}

/// Diverging color map: negative blue, zero mid-gray, positive red,
/// normalized by the maximum absolute value.
fn heat_color(v: f32, max_abs: f32) -> [u8; 3] {
    if max_abs == 0.0 {
        return [128, 128, 128];
    }
    let t = (v / max_abs).clamp(-1.0, 1.0) as f64;
    let round = |x: f64| x.round().clamp(0.0, 255.0) as u8;
    if t >= 0.0 {
        [
            round(128.0 + t * 127.0),
            round(128.0 - t * 128.0),
            round(128.0 - t * 128.0),
        ]
    } else {
        let a = -t;
        [
            round(128.0 - a * 128.0),
            round(128.0 - a * 128.0),
            round(128.0 + a * 127.0),
        ]
    }
}

/// Write the plot as a PNG heatmap plus a CSV of the raw values.
///
/// `base_path` gets `.png`/`.csv` extensions appended. The CSV opens with a
/// `t0..tN` header row and holds one row per spatial index; values are
/// printed in shortest round-trip form, so parsing them back is exact.
pub fn render_plot(plot: &SpaceTimePlot, base_path: impl AsRef<Path>) -> Result<(PathBuf, PathBuf)> {
    let base = base_path.as_ref();
    if let Some(parent) = base.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| LensError::io(parent, e))?;
        }
    }
    let png_path = base.with_extension("png");
    let csv_path = base.with_extension("csv");

    let max_abs = plot.data.iter().fold(0.0f32, |m, v| m.max(v.abs()));
    let (w, h) = (plot.frame_count, plot.space_len);
    let mut pixels = Vec::with_capacity(w * h * 3);
    for s in 0..h {
        for t in 0..w {
            pixels.extend_from_slice(&heat_color(plot.get(s, t), max_abs));
        }
    }
    let img = image::RgbImage::from_raw(w as u32, h as u32, pixels).expect("sized buffer");
    img.save(&png_path).map_err(|e| LensError::Image {
        path: png_path.clone(),
        source: e,
    })?;

    let mut csv = String::new();
    for t in 0..w {
        if t > 0 {
            csv.push(',');
        }
        csv.push('t');
        csv.push_str(&t.to_string());
    }
    csv.push('\n');
    for s in 0..h {
        for t in 0..w {
            if t > 0 {
                csv.push(',');
            }
            csv.push_str(&plot.get(s, t).to_string());
        }
        csv.push('\n');
    }
    fs::write(&csv_path, csv).map_err(|e| LensError::io(&csv_path, e))?;
    Ok((png_path, csv_path))
}

/// Parse a CSV written by [`render_plot`] back into its value matrix.
pub fn read_plot_csv(path: impl AsRef<Path>) -> Result<Vec<Vec<f32>>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| LensError::io(path, e))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| LensError::Format(format!("{}: empty plot CSV", path.display())))?;
    let cols = header.split(',').count();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let row: Vec<f32> = line
            .split(',')
            .map(|v| {
                v.parse::<f32>().map_err(|_| {
                    LensError::Format(format!("{}: bad value `{v}` in row {i}", path.display()))
                })
            })
            .collect::<Result<_>>()?;
        if row.len() != cols {
            return Err(LensError::Format(format!(
                "{}: row {i} has {} values, header has {cols}",
                path.display(),
                row.len()
            )));
        }
        rows.push(row);
    }
    Ok(rows)
}
