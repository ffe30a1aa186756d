//! Frame/clip data model and bit-exact file I/O.
//!
//! Frames hold channel-planar, row-major `f32` intensities. Source frames
//! live in `[0,1]`; residual frames are signed and unbounded. Two on-disk
//! forms are supported: a lossless raw-float container (`DIFF1`) and a
//! numbered PNG/PPM/PGM frame sequence with a `meta.json` sidecar.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{LensError, Result};

/// Rec. 709 luma weights used for every gray conversion in the toolkit.
pub const LUMA_WEIGHTS: [f32; 3] = [0.2126, 0.7152, 0.0722];

const DIFF1_MAGIC: [u8; 6] = *b"DIFF1\0";

/// Whether a frame carries `[0,1]` source intensities or signed residuals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Signedness {
    Source,
    Residual,
}

/// One video frame: `channels` planes of `height x width` values.
///
/// Plane `c` starts at `c * width * height`; within a plane the layout is
/// row-major. Frames are immutable once constructed; every operation
/// produces a new frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    width: usize,
    height: usize,
    channels: usize,
    signedness: Signedness,
    data: Vec<f32>,
}

impl Frame {
    pub fn new(
        width: usize,
        height: usize,
        channels: usize,
        signedness: Signedness,
        data: Vec<f32>,
    ) -> Result<Frame> {
        if width == 0 || height == 0 {
            return Err(LensError::Geometry(format!(
                "frame dimensions must be >= 1, got {width}x{height}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(LensError::Geometry(format!(
                "channels must be 1 (gray) or 3 (RGB), got {channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(LensError::Geometry(format!(
                "data length {} != {width}x{height}x{channels}",
                data.len()
            )));
        }
        if signedness == Signedness::Source {
            if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(LensError::Range(format!(
                    "source frame value {v} outside [0,1]"
                )));
            }
        } else if let Some(v) = data.iter().find(|v| !v.is_finite()) {
            return Err(LensError::Range(format!(
                "residual frame value {v} is not finite"
            )));
        }
        Ok(Frame {
            width,
            height,
            channels,
            signedness,
            data,
        })
    }

    /// Constant-valued source frame; handy for tests and synthetic bases.
    pub fn constant(width: usize, height: usize, channels: usize, value: f32) -> Result<Frame> {
        Frame::new(
            width,
            height,
            channels,
            Signedness::Source,
            vec![value; width * height * channels],
        )
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn signedness(&self) -> Signedness {
        self.signedness
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// One channel plane, row-major.
    pub fn plane(&self, channel: usize) -> &[f32] {
        let n = self.width * self.height;
        &self.data[channel * n..(channel + 1) * n]
    }

    #[inline]
    pub fn get(&self, channel: usize, x: usize, y: usize) -> f32 {
        self.data[channel * self.width * self.height + y * self.width + x]
    }

    /// Rec. 709 luma conversion. Gray frames pass through unchanged.
    pub fn to_gray(&self) -> Frame {
        if self.channels == 1 {
            return self.clone();
        }
        let n = self.width * self.height;
        let (r, g, b) = (self.plane(0), self.plane(1), self.plane(2));
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let y = LUMA_WEIGHTS[0] as f64 * r[i] as f64
                + LUMA_WEIGHTS[1] as f64 * g[i] as f64
                + LUMA_WEIGHTS[2] as f64 * b[i] as f64;
            out.push(y as f32);
        }
        Frame {
            width: self.width,
            height: self.height,
            channels: 1,
            signedness: self.signedness,
            data: out,
        }
    }

    /// Crop to a `w x h` window whose top-left corner is `(x, y)`.
    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> Result<Frame> {
        if w == 0 || h == 0 || x + w > self.width || y + h > self.height {
            return Err(LensError::Geometry(format!(
                "crop {w}x{h}+{x}+{y} outside {}x{} frame",
                self.width, self.height
            )));
        }
        let mut data = Vec::with_capacity(w * h * self.channels);
        for c in 0..self.channels {
            let plane = self.plane(c);
            for row in y..y + h {
                let start = row * self.width + x;
                data.extend_from_slice(&plane[start..start + w]);
            }
        }
        Ok(Frame {
            width: w,
            height: h,
            channels: self.channels,
            signedness: self.signedness,
            data,
        })
    }

    /// Internal constructor for operations whose outputs are valid by
    /// construction; skips the per-value range scan.
    pub(crate) fn from_parts(
        width: usize,
        height: usize,
        channels: usize,
        signedness: Signedness,
        data: Vec<f32>,
    ) -> Frame {
        debug_assert_eq!(data.len(), width * height * channels);
        Frame {
            width,
            height,
            channels,
            signedness,
            data,
        }
    }
}

/// An ordered frame sequence with homogeneous geometry and a frame rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Clip {
    frames: Vec<Frame>,
    fps: f32,
}

impl Clip {
    pub fn new(frames: Vec<Frame>, fps: f32) -> Result<Clip> {
        if frames.is_empty() {
            return Err(LensError::EmptyInput("clip must have >= 1 frame".into()));
        }
        if !(fps > 0.0) {
            return Err(LensError::Parameter(format!("fps must be > 0, got {fps}")));
        }
        let first = &frames[0];
        for (i, f) in frames.iter().enumerate() {
            if f.width != first.width
                || f.height != first.height
                || f.channels != first.channels
                || f.signedness != first.signedness
            {
                return Err(LensError::Geometry(format!(
                    "frame {i} is {}x{}x{} ({:?}), clip is {}x{}x{} ({:?})",
                    f.width,
                    f.height,
                    f.channels,
                    f.signedness,
                    first.width,
                    first.height,
                    first.channels,
                    first.signedness
                )));
            }
        }
        Ok(Clip { frames, fps })
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn frame(&self, t: usize) -> &Frame {
        &self.frames[t]
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn fps(&self) -> f32 {
        self.fps
    }

    pub fn width(&self) -> usize {
        self.frames[0].width
    }

    pub fn height(&self) -> usize {
        self.frames[0].height
    }

    pub fn channels(&self) -> usize {
        self.frames[0].channels
    }

    pub fn signedness(&self) -> Signedness {
        self.frames[0].signedness
    }

    /// Luma-converted copy; no-op for gray clips.
    pub fn to_gray(&self) -> Clip {
        if self.channels() == 1 {
            return self.clone();
        }
        Clip {
            frames: self.frames.iter().map(Frame::to_gray).collect(),
            fps: self.fps,
        }
    }

    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> Result<Clip> {
        let frames = self
            .frames
            .iter()
            .map(|f| f.crop(x, y, w, h))
            .collect::<Result<Vec<_>>>()?;
        Ok(Clip {
            frames,
            fps: self.fps,
        })
    }

    pub(crate) fn from_parts(frames: Vec<Frame>, fps: f32) -> Clip {
        debug_assert!(!frames.is_empty());
        Clip { frames, fps }
    }
}

/// Descriptor of a stored clip, as written into corpus manifests.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClipMeta {
    pub source_path: PathBuf,
    pub fps: f32,
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub frame_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<PathBuf>,
}

impl ClipMeta {
    pub fn describe(clip: &Clip, source_path: impl Into<PathBuf>) -> ClipMeta {
        ClipMeta {
            source_path: source_path.into(),
            fps: clip.fps(),
            width: clip.width(),
            height: clip.height(),
            channels: clip.channels(),
            frame_count: clip.len(),
            ground_truth: None,
        }
    }
}

/// Sidecar for PNG/PPM/PGM frame sequences.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct SeqMeta {
    fps: f32,
    channels: usize,
    frame_count: usize,
}

/// On-disk clip format selector for [`save_clip`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClipFormat {
    /// 8-bit PNG frame sequence plus `meta.json`.
    PngSeq,
    /// Lossless raw-float container.
    Diff1,
}

/// Load a clip from a DIFF1 file or a numbered frame-sequence directory.
///
/// Integer sources are normalized to `[0,1]` (8-bit by 255, 16-bit by
/// 65535). Sequence order is the ascending numeric filename index.
pub fn load_clip(path: impl AsRef<Path>) -> Result<Clip> {
    let path = path.as_ref();
    if path.is_dir() {
        load_png_seq(path)
    } else {
        load_diff1(path)
    }
}

/// Save a clip in the requested format.
///
/// `png-seq` requires a source-signedness clip (residuals must be
/// normalized first); `diff1` is value-exact for either signedness.
pub fn save_clip(clip: &Clip, path: impl AsRef<Path>, format: ClipFormat) -> Result<()> {
    match format {
        ClipFormat::Diff1 => save_diff1(clip, path.as_ref()),
        ClipFormat::PngSeq => save_png_seq(clip, path.as_ref()),
    }
}

fn load_diff1(path: &Path) -> Result<Clip> {
    let mut file = fs::File::open(path).map_err(|e| LensError::io(path, e))?;
    let mut header = [0u8; 6 + 4 * 4 + 1 + 4];
    file.read_exact(&mut header)
        .map_err(|e| LensError::io(path, e))?;
    if header[0..6] != DIFF1_MAGIC {
        return Err(LensError::Format(format!(
            "{}: bad magic, not a DIFF1 container",
            path.display()
        )));
    }
    let u32_at = |o: usize| u32::from_le_bytes(header[o..o + 4].try_into().unwrap()) as usize;
    let width = u32_at(6);
    let height = u32_at(10);
    let channels = u32_at(14);
    let frame_count = u32_at(18);
    let signedness = match header[22] {
        0 => Signedness::Source,
        1 => Signedness::Residual,
        v => {
            return Err(LensError::Format(format!(
                "{}: bad signedness byte {v}",
                path.display()
            )))
        }
    };
    let fps = f32::from_le_bytes(header[23..27].try_into().unwrap());
    if frame_count == 0 {
        return Err(LensError::EmptyInput(format!(
            "{}: container holds zero frames",
            path.display()
        )));
    }
    let per_frame = width * height * channels;
    let mut payload = vec![0u8; per_frame * frame_count * 4];
    file.read_exact(&mut payload)
        .map_err(|e| LensError::io(path, e))?;
    let mut frames = Vec::with_capacity(frame_count);
    for t in 0..frame_count {
        let mut data = Vec::with_capacity(per_frame);
        let base = t * per_frame * 4;
        for i in 0..per_frame {
            let o = base + i * 4;
            data.push(f32::from_le_bytes(payload[o..o + 4].try_into().unwrap()));
        }
        frames.push(Frame::new(width, height, channels, signedness, data).map_err(|e| {
            LensError::Format(format!("{}: frame {t}: {e}", path.display()))
        })?);
    }
    Clip::new(frames, fps)
}

fn save_diff1(clip: &Clip, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| LensError::io(parent, e))?;
        }
    }
    let mut buf = Vec::with_capacity(27 + clip.len() * clip.frame(0).data().len() * 4);
    buf.extend_from_slice(&DIFF1_MAGIC);
    buf.extend_from_slice(&(clip.width() as u32).to_le_bytes());
    buf.extend_from_slice(&(clip.height() as u32).to_le_bytes());
    buf.extend_from_slice(&(clip.channels() as u32).to_le_bytes());
    buf.extend_from_slice(&(clip.len() as u32).to_le_bytes());
    buf.push(match clip.signedness() {
        Signedness::Source => 0,
        Signedness::Residual => 1,
    });
    buf.extend_from_slice(&clip.fps().to_le_bytes());
    for frame in clip.frames() {
        for v in frame.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut file = fs::File::create(path).map_err(|e| LensError::io(path, e))?;
    file.write_all(&buf).map_err(|e| LensError::io(path, e))?;
    Ok(())
}

fn frame_file_stem_index(path: &Path) -> Option<u64> {
    let stem = path.file_stem()?.to_str()?;
    let digits: String = stem.chars().rev().take_while(|c| c.is_ascii_digit()).collect();
    if digits.is_empty() {
        return None;
    }
    digits.chars().rev().collect::<String>().parse().ok()
}

fn load_png_seq(dir: &Path) -> Result<Clip> {
    let meta_path = dir.join("meta.json");
    let meta_text = fs::read_to_string(&meta_path).map_err(|_| {
        LensError::Format(format!(
            "{}: missing or unreadable meta.json sidecar",
            dir.display()
        ))
    })?;
    let meta: SeqMeta = serde_json::from_str(&meta_text).map_err(|e| LensError::Json {
        path: meta_path.clone(),
        source: e,
    })?;

    let mut entries: Vec<(u64, PathBuf)> = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| LensError::io(dir, e))? {
        let entry = entry.map_err(|e| LensError::io(dir, e))?;
        let path = entry.path();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase());
        if !matches!(ext.as_deref(), Some("png" | "ppm" | "pgm")) {
            continue;
        }
        match frame_file_stem_index(&path) {
            Some(idx) => entries.push((idx, path)),
            None => {
                return Err(LensError::Format(format!(
                    "{}: frame file has no numeric index",
                    path.display()
                )))
            }
        }
    }
    entries.sort();
    if entries.is_empty() {
        return Err(LensError::EmptyInput(format!(
            "{}: no frame files found",
            dir.display()
        )));
    }
    if entries.len() != meta.frame_count {
        return Err(LensError::Format(format!(
            "{}: meta.json declares {} frames but {} frame files are present",
            dir.display(),
            meta.frame_count,
            entries.len()
        )));
    }

    let mut frames = Vec::with_capacity(entries.len());
    for (i, (_, path)) in entries.iter().enumerate() {
        let frame = load_frame_image(path, meta.channels)?;
        if let Some(first) = frames.first() {
            let first: &Frame = first;
            if frame.width != first.width || frame.height != first.height {
                return Err(LensError::Geometry(format!(
                    "frame {i} ({}) is {}x{}, sequence is {}x{}",
                    path.display(),
                    frame.width,
                    frame.height,
                    first.width,
                    first.height
                )));
            }
        }
        frames.push(frame);
    }
    Clip::new(frames, meta.fps)
}

fn load_frame_image(path: &Path, channels: usize) -> Result<Frame> {
    let img = image::open(path).map_err(|e| LensError::Image {
        path: path.to_path_buf(),
        source: e,
    })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let n = w * h;
    let data = match channels {
        1 => match img {
            image::DynamicImage::ImageLuma16(buf) => {
                buf.pixels().map(|p| p.0[0] as f32 / 65535.0).collect()
            }
            other => other
                .to_luma8()
                .pixels()
                .map(|p| p.0[0] as f32 / 255.0)
                .collect(),
        },
        3 => {
            // Planar layout: gather per channel.
            let mut data = vec![0.0f32; 3 * n];
            match img {
                image::DynamicImage::ImageRgb16(buf) => {
                    for (i, p) in buf.pixels().enumerate() {
                        for c in 0..3 {
                            data[c * n + i] = p.0[c] as f32 / 65535.0;
                        }
                    }
                }
                other => {
                    for (i, p) in other.to_rgb8().pixels().enumerate() {
                        for c in 0..3 {
                            data[c * n + i] = p.0[c] as f32 / 255.0;
                        }
                    }
                }
            }
            data
        }
        c => {
            return Err(LensError::Format(format!(
                "meta.json channels must be 1 or 3, got {c}"
            )))
        }
    };
    Frame::new(w, h, channels, Signedness::Source, data)
}

fn save_png_seq(clip: &Clip, dir: &Path) -> Result<()> {
    if clip.signedness() != Signedness::Source {
        return Err(LensError::Range(
            "png-seq requires a source clip in [0,1]; normalize residuals first".into(),
        ));
    }
    fs::create_dir_all(dir).map_err(|e| LensError::io(dir, e))?;
    let (w, h) = (clip.width(), clip.height());
    let n = w * h;
    for (t, frame) in clip.frames().iter().enumerate() {
        let path = dir.join(format!("frame_{t:06}.png"));
        let quant = |v: f32| (v as f64 * 255.0).round().clamp(0.0, 255.0) as u8;
        match clip.channels() {
            1 => {
                let pixels: Vec<u8> = frame.plane(0).iter().copied().map(quant).collect();
                let buf =
                    image::GrayImage::from_raw(w as u32, h as u32, pixels).expect("sized buffer");
                buf.save(&path).map_err(|e| LensError::Image {
                    path: path.clone(),
                    source: e,
                })?;
            }
            _ => {
                let (r, g, b) = (frame.plane(0), frame.plane(1), frame.plane(2));
                let mut pixels = Vec::with_capacity(3 * n);
                for i in 0..n {
                    pixels.push(quant(r[i]));
                    pixels.push(quant(g[i]));
                    pixels.push(quant(b[i]));
                }
                let buf =
                    image::RgbImage::from_raw(w as u32, h as u32, pixels).expect("sized buffer");
                buf.save(&path).map_err(|e| LensError::Image {
                    path: path.clone(),
                    source: e,
                })?;
            }
        }
    }
    let meta = SeqMeta {
        fps: clip.fps(),
        channels: clip.channels(),
        frame_count: clip.len(),
    };
    let meta_path = dir.join("meta.json");
    let text = serde_json::to_string_pretty(&meta).expect("sidecar serializes");
    fs::write(&meta_path, text).map_err(|e| LensError::io(&meta_path, e))?;
    Ok(())
}
