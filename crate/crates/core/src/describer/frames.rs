//! Frame sampling and image encoding for model input.

use std::io::Cursor;
use std::path::{Path, PathBuf};

use image::codecs::jpeg::JpegEncoder;
use image::imageops::FilterType;
use image::DynamicImage;
use serde::{Deserialize, Serialize};

use crate::digest::sha256_parts;
use crate::manifest::{MediaKind, SampleRecord, Span};

pub const JPEG_QUALITY: u8 = 90;
pub const MAX_SIDE: u32 = 1024;

/// Upper bound on candidate timestamps, guarding against absurd fps values.
const MAX_CANDIDATES: usize = 100_000;

#[derive(Debug, thiserror::Error)]
pub enum MediaError {
    #[error("cannot read media for `{sample}`: {reason}")]
    Unreadable { sample: String, reason: String },
    #[error("invalid sampling request: {0}")]
    InvalidRequest(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputKind {
    Image,
    FrameSequence,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedFrame {
    /// Seconds on the sample's time axis.
    pub timestamp: f64,
    pub jpeg: Vec<u8>,
}

/// Visual input for one model call; at least one frame, timestamps non-decreasing.
#[derive(Debug, Clone, PartialEq)]
pub struct MediaInput {
    pub kind: InputKind,
    pub frames: Vec<EncodedFrame>,
}

impl MediaInput {
    pub fn fingerprint(&self) -> String {
        let mut parts: Vec<Vec<u8>> = vec![format!("{:?}", self.kind).into_bytes()];
        for f in &self.frames {
            parts.push(f.timestamp.to_le_bytes().to_vec());
            parts.push(sha256_parts(&[&f.jpeg]).to_vec());
        }
        let refs: Vec<&[u8]> = parts.iter().map(Vec::as_slice).collect();
        hex::encode(sha256_parts(&refs))
    }
}

/// Timestamps `start + k/fps` strictly below `end`; never fewer than one, and
/// thinned uniformly to at most `max_frames`.
pub fn frame_timestamps(span: Span, fps: f64, max_frames: usize) -> Result<Vec<f64>, MediaError> {
    if !(fps.is_finite() && fps > 0.0) {
        return Err(MediaError::InvalidRequest(format!("fps must be positive, got {fps}")));
    }
    if !(span.start.is_finite() && span.end.is_finite() && span.start < span.end) {
        return Err(MediaError::InvalidRequest(format!("empty span [{}, {}]", span.start, span.end)));
    }
    if max_frames == 0 {
        return Err(MediaError::InvalidRequest("max_frames must be at least 1".into()));
    }
    let mut candidates = vec![span.start];
    for k in 1..MAX_CANDIDATES {
        let t = span.start + k as f64 / fps;
        if t >= span.end {
            break;
        }
        candidates.push(t);
    }
    Ok(uniform_subsample(candidates.len(), max_frames).into_iter().map(|i| candidates[i]).collect())
}

/// Indices `floor(k·n/m)` for `k < m`, or all of `0..n` when `n ≤ m`.
pub fn uniform_subsample(n: usize, m: usize) -> Vec<usize> {
    if n <= m {
        return (0..n).collect();
    }
    (0..m).map(|k| k * n / m).collect()
}

/// Resize so the longest side is at most [`MAX_SIDE`] and encode as JPEG.
pub fn encode_frame(img: &DynamicImage) -> Result<Vec<u8>, image::ImageError> {
    let (w, h) = (img.width(), img.height());
    let img = if w.max(h) > MAX_SIDE {
        let scale = f64::from(MAX_SIDE) / f64::from(w.max(h));
        let nw = ((f64::from(w) * scale).round() as u32).max(1);
        let nh = ((f64::from(h) * scale).round() as u32).max(1);
        img.resize_exact(nw, nh, FilterType::Triangle)
    } else {
        img.clone()
    };
    let rgb = img.to_rgb8();
    let mut out = Vec::new();
    JpegEncoder::new_with_quality(Cursor::new(&mut out), JPEG_QUALITY).encode_image(&rgb)?;
    Ok(out)
}

/// Supplies decoded pixels for a sample at given times.
pub trait FrameSource: Send + Sync {
    /// Time span of the sample when the manifest does not record one.
    fn duration(&self, sample: &SampleRecord) -> Result<f64, MediaError>;

    fn frame_at(&self, sample: &SampleRecord, t: f64) -> Result<DynamicImage, MediaError>;
}

/// Sample a video at `fps` (or load a still image) into model input.
pub fn sample_frames(
    source: &dyn FrameSource,
    sample: &SampleRecord,
    fps: f64,
    max_frames: usize,
) -> Result<MediaInput, MediaError> {
    let encode = |img: DynamicImage, t: f64| {
        encode_frame(&img)
            .map(|jpeg| EncodedFrame { timestamp: t, jpeg })
            .map_err(|e| MediaError::Unreadable { sample: sample.sample_id.clone(), reason: e.to_string() })
    };
    match sample.kind {
        MediaKind::Image => {
            let img = source.frame_at(sample, 0.0)?;
            Ok(MediaInput { kind: InputKind::Image, frames: vec![encode(img, 0.0)?] })
        }
        MediaKind::Video => {
            let span = match sample.span {
                Some(s) => s,
                None => Span::new(0.0, source.duration(sample)?),
            };
            let frames = frame_timestamps(span, fps, max_frames)?
                .into_iter()
                .map(|t| encode(source.frame_at(sample, t)?, t))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(MediaInput { kind: InputKind::FrameSequence, frames })
        }
    }
}

fn open_image(sample: &str, path: &Path) -> Result<DynamicImage, MediaError> {
    image::open(path)
        .map_err(|e| MediaError::Unreadable { sample: sample.to_string(), reason: format!("{}: {e}", path.display()) })
}

/// Image samples read from `root/<media>`; the media path may also be absolute.
#[derive(Debug, Clone)]
pub struct StillImages {
    pub root: PathBuf,
}

impl FrameSource for StillImages {
    fn duration(&self, _sample: &SampleRecord) -> Result<f64, MediaError> {
        Ok(0.0)
    }

    fn frame_at(&self, sample: &SampleRecord, _t: f64) -> Result<DynamicImage, MediaError> {
        open_image(&sample.sample_id, &self.root.join(&sample.media))
    }
}

/// Pre-extracted, pre-cropped clip frames: `root/<sample_id>/<ms>.<png|jpg>`,
/// where `<ms>` is milliseconds since the clip start. A request for time `t`
/// gets the latest frame at or before it. Image samples fall back to
/// [`StillImages`] semantics.
#[derive(Debug, Clone)]
pub struct FrameDirectory {
    pub root: PathBuf,
}

impl FrameDirectory {
    fn frames(&self, sample: &SampleRecord) -> Result<Vec<(u64, PathBuf)>, MediaError> {
        let dir = self.root.join(&sample.sample_id);
        let unreadable = |reason: String| MediaError::Unreadable { sample: sample.sample_id.clone(), reason };
        let entries = std::fs::read_dir(&dir).map_err(|e| unreadable(format!("{}: {e}", dir.display())))?;
        let mut frames = Vec::new();
        for entry in entries {
            let path = entry.map_err(|e| unreadable(e.to_string()))?.path();
            let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
            if !matches!(ext.as_deref(), Some("png" | "jpg" | "jpeg")) {
                continue;
            }
            if let Some(ms) = path.file_stem().and_then(|s| s.to_str()).and_then(|s| s.parse::<u64>().ok()) {
                frames.push((ms, path));
            }
        }
        if frames.is_empty() {
            return Err(unreadable(format!("no frames in {}", dir.display())));
        }
        frames.sort();
        Ok(frames)
    }
}

impl FrameSource for FrameDirectory {
    /// Last frame time plus the smallest frame gap (one second for a single frame).
    fn duration(&self, sample: &SampleRecord) -> Result<f64, MediaError> {
        let frames = self.frames(sample)?;
        let gap = frames.windows(2).map(|w| w[1].0 - w[0].0).filter(|&g| g > 0).min().unwrap_or(1000);
        Ok((frames.last().unwrap().0 + gap) as f64 / 1000.0)
    }

    fn frame_at(&self, sample: &SampleRecord, t: f64) -> Result<DynamicImage, MediaError> {
        if sample.kind == MediaKind::Image {
            return open_image(&sample.sample_id, &self.root.join(&sample.media));
        }
        let offset = t - sample.span.map_or(0.0, |s| s.start);
        let ms = (offset * 1000.0).round().max(0.0) as u64;
        let frames = self.frames(sample)?;
        let pick = frames.iter().rev().find(|(f, _)| *f <= ms).unwrap_or(&frames[0]);
        open_image(&sample.sample_id, &pick.1)
    }
}
