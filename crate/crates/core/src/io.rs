//! Directory-of-frames I/O.
//!
//! Frames are ordered by filename (lexicographic), which defines time.
//! Decoding runs in parallel but results keep filename order.

use std::path::{Path, PathBuf};

use image::{DynamicImage, GenericImageView, ImageBuffer, Luma, Rgb};
use rayon::prelude::*;

use crate::error::{NumodError, Result};
use crate::sequence::{Frame, Mask, MaskSequence, Sequence};

/// CDnet ground-truth shades.
pub mod cdnet {
    pub const STATIC: u8 = 0;
    pub const HARD_SHADOW: u8 = 50;
    pub const OUTSIDE_ROI: u8 = 85;
    pub const UNKNOWN: u8 = 170;
    pub const MOTION: u8 = 255;
}

pub const MASK_THRESHOLD: u8 = 128;

#[derive(Debug, Clone, Copy, Default)]
pub struct MaskOptions {
    pub max_side: Option<u32>,
    /// Drop CDnet "unknown" (170) and "outside ROI" (85) pixels from evaluation.
    pub exclude_unknown: bool,
}

fn matching_files(dir: &Path, pattern: &str) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(NumodError::MissingDirectory(dir.to_path_buf()));
    }
    let pat = glob::Pattern::new(pattern).map_err(|_| NumodError::BadPattern(pattern.into()))?;
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_file())
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| pat.matches(n))
        })
        .collect();
    if files.is_empty() {
        return Err(NumodError::NoMatches {
            dir: dir.to_path_buf(),
            pattern: pattern.into(),
        });
    }
    files.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    Ok(files)
}

fn frame_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Output size after nearest-neighbour downsampling so the longer side is at most `max_side`.
pub fn downsampled_dims(width: u32, height: u32, max_side: Option<u32>) -> (u32, u32) {
    match max_side {
        Some(s) if s > 0 && width.max(height) > s => {
            let longest = width.max(height) as u64;
            let w = ((width as u64 * s as u64) / longest).max(1) as u32;
            let h = ((height as u64 * s as u64) / longest).max(1) as u32;
            (w, h)
        }
        _ => (width, height),
    }
}

/// Nearest-neighbour resample of an interleaved buffer.
fn resample_nearest<T: Copy>(
    src: &[T],
    width: u32,
    height: u32,
    channels: usize,
    new_w: u32,
    new_h: u32,
) -> Vec<T> {
    if (new_w, new_h) == (width, height) {
        return src.to_vec();
    }
    let mut out = Vec::with_capacity(new_w as usize * new_h as usize * channels);
    for y in 0..new_h as usize {
        let sy = ((2 * y + 1) * height as usize / (2 * new_h as usize)).min(height as usize - 1);
        for x in 0..new_w as usize {
            let sx = ((2 * x + 1) * width as usize / (2 * new_w as usize)).min(width as usize - 1);
            let base = (sy * width as usize + sx) * channels;
            out.extend_from_slice(&src[base..base + channels]);
        }
    }
    out
}

fn decode_frame(path: &Path, max_side: Option<u32>) -> Result<Frame> {
    let img = image::open(path).map_err(|e| NumodError::Decode {
        file: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let (width, height) = img.dimensions();
    let color = img.color();
    let sixteen = color.bytes_per_pixel() / color.channel_count() >= 2;
    let gray = !color.has_color();
    let (raw, channels): (Vec<f64>, usize) = match (gray, sixteen) {
        (true, false) => (
            img.to_luma8()
                .into_raw()
                .into_iter()
                .map(|v| v as f64 / 255.0)
                .collect(),
            1,
        ),
        (true, true) => (
            img.to_luma16()
                .into_raw()
                .into_iter()
                .map(|v| v as f64 / 65535.0)
                .collect(),
            1,
        ),
        (false, false) => (
            img.to_rgb8()
                .into_raw()
                .into_iter()
                .map(|v| v as f64 / 255.0)
                .collect(),
            3,
        ),
        (false, true) => (
            img.to_rgb16()
                .into_raw()
                .into_iter()
                .map(|v| v as f64 / 65535.0)
                .collect(),
            3,
        ),
    };
    let (w, h) = downsampled_dims(width, height, max_side);
    let data = resample_nearest(&raw, width, height, channels, w, h);
    Frame::new(data, w, h, channels).map_err(|e| NumodError::Decode {
        file: path.to_path_buf(),
        reason: e.to_string(),
    })
}

/// Loads every file in `dir` matching `pattern` as one frame, normalised to `[0, 1]`.
pub fn load_sequence(dir: &Path, pattern: &str, max_side: Option<u32>) -> Result<Sequence> {
    let files = matching_files(dir, pattern)?;
    let frames: Vec<Frame> = files
        .par_iter()
        .map(|p| decode_frame(p, max_side))
        .collect::<Result<_>>()?;
    let first = frames[0].dims();
    for (f, p) in frames.iter().zip(&files) {
        if f.dims() != first {
            return Err(NumodError::InconsistentDimensions {
                file: p.clone(),
                expected: first,
                found: f.dims(),
            });
        }
    }
    let ids = files.iter().map(|p| frame_id(p)).collect();
    Sequence::new(frames, ids)
}

/// Maps one ground-truth shade to (label, evaluated).
pub fn classify_mask_shade(v: u8, exclude_unknown: bool) -> (u8, bool) {
    match v {
        cdnet::HARD_SHADOW => (0, true),
        cdnet::OUTSIDE_ROI | cdnet::UNKNOWN => (0, !exclude_unknown),
        v => ((v >= MASK_THRESHOLD) as u8, true),
    }
}

fn decode_mask(path: &Path, opts: &MaskOptions) -> Result<(Mask, Option<Mask>)> {
    let img = image::open(path).map_err(|e| NumodError::Decode {
        file: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let (width, height) = img.dimensions();
    let gray = img.to_luma8().into_raw();
    let (w, h) = downsampled_dims(width, height, opts.max_side);
    let gray = resample_nearest(&gray, width, height, 1, w, h);
    let mut labels = Vec::with_capacity(gray.len());
    let mut roi = Vec::with_capacity(gray.len());
    for &v in &gray {
        let (l, keep) = classify_mask_shade(v, opts.exclude_unknown);
        labels.push(l);
        roi.push(keep as u8);
    }
    let mask = Mask {
        data: labels,
        width: w,
        height: h,
    };
    let roi = if roi.iter().all(|&r| r == 1) {
        None
    } else {
        Some(Mask {
            data: roi,
            width: w,
            height: h,
        })
    };
    Ok((mask, roi))
}

/// Loads binary ground-truth masks (threshold 128, CDnet shades handled explicitly).
pub fn load_masks(dir: &Path, pattern: &str, opts: &MaskOptions) -> Result<MaskSequence> {
    let files = matching_files(dir, pattern)?;
    let decoded: Vec<(Mask, Option<Mask>)> = files
        .par_iter()
        .map(|p| decode_mask(p, opts))
        .collect::<Result<_>>()?;
    let first = (decoded[0].0.width, decoded[0].0.height, 1);
    for ((m, _), p) in decoded.iter().zip(&files) {
        if (m.width, m.height, 1) != first {
            return Err(NumodError::InconsistentDimensions {
                file: p.clone(),
                expected: first,
                found: (m.width, m.height, 1),
            });
        }
    }
    let (masks, roi) = decoded.into_iter().unzip();
    Ok(MaskSequence {
        masks,
        frame_ids: files.iter().map(|p| frame_id(p)).collect(),
        roi,
    })
}

/// Quantises a value to a byte. Signed values are mapped through `0.5 + v / 2`
/// first. Rounding is half-up, so signed 0.0 stores as 128.
pub fn to_byte(v: f64, signed: bool) -> u8 {
    let v = if signed { 0.5 + v / 2.0 } else { v };
    let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
    (v * 255.0 + 0.5).floor() as u8
}

/// Writes an 8-bit PNG (grayscale or RGB according to `channels`).
pub fn save_image(
    data: &[f64],
    width: u32,
    height: u32,
    channels: usize,
    signed: bool,
    path: &Path,
) -> Result<()> {
    let expected = width as usize * height as usize * channels;
    if data.len() != expected {
        return Err(NumodError::DimensionMismatch(format!(
            "image vector has {} elements, expected {expected}",
            data.len()
        )));
    }
    let bytes: Vec<u8> = data.iter().map(|&v| to_byte(v, signed)).collect();
    let img = match channels {
        1 => DynamicImage::ImageLuma8(
            ImageBuffer::<Luma<u8>, _>::from_raw(width, height, bytes).expect("sized above"),
        ),
        3 => DynamicImage::ImageRgb8(
            ImageBuffer::<Rgb<u8>, _>::from_raw(width, height, bytes).expect("sized above"),
        ),
        c => {
            return Err(NumodError::DimensionMismatch(format!(
                "cannot save {c}-channel image"
            )))
        }
    };
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| NumodError::Write {
            file: path.to_path_buf(),
            reason: e.to_string(),
        })
}

pub fn save_frame(frame: &Frame, path: &Path) -> Result<()> {
    save_image(
        &frame.data,
        frame.width,
        frame.height,
        frame.channels,
        false,
        path,
    )
}

/// Writes a binary mask as 0/255 grayscale PNG.
pub fn save_mask(mask: &Mask, path: &Path) -> Result<()> {
    let data: Vec<f64> = mask
        .data
        .iter()
        .map(|&v| if v != 0 { 1.0 } else { 0.0 })
        .collect();
    save_image(&data, mask.width, mask.height, 1, false, path)
}
