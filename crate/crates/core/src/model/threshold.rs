//! Binary foreground masks from `|F| >= factor * t`, where `t` is the
//! standard deviation of all foreground values.

use serde::{Deserialize, Serialize};

use crate::error::{NumodError, Result};
use crate::sequence::Mask;

/// Lower bound on `t`, so an all-zero foreground yields empty masks.
pub const T_FLOOR: f64 = 1e-6;

/// Streaming mean/variance (Welford, merged per batch with Chan's formula).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
}

impl RunningStats {
    pub fn from_values(values: &[f64]) -> Self {
        let mut s = Self::default();
        for &v in values {
            s.count += 1;
            let d = v - s.mean;
            s.mean += d / s.count as f64;
            s.m2 += d * (v - s.mean);
        }
        s
    }

    pub fn merge(&mut self, other: &RunningStats) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = (self.count + other.count) as f64;
        let d = other.mean - self.mean;
        self.mean += d * other.count as f64 / n;
        self.m2 += other.m2 + d * d * self.count as f64 * other.count as f64 / n;
        self.count += other.count;
    }

    pub fn update<T: AsRef<[f64]>>(&mut self, images: &[T]) {
        for img in images {
            self.merge(&RunningStats::from_values(img.as_ref()));
        }
    }

    /// Population standard deviation.
    pub fn std_dev(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.m2 / self.count as f64).max(0.0).sqrt()
        }
    }
}

/// Population standard deviation of every element of every image.
pub fn foreground_std<T: AsRef<[f64]>>(f_list: &[T]) -> f64 {
    let mut s = RunningStats::default();
    s.update(f_list);
    s.std_dev()
}

/// Mask of one foreground image: a pixel is set when any channel reaches `factor * t`.
pub fn mask_from_foreground(
    f: &[f64],
    width: u32,
    height: u32,
    channels: usize,
    t: f64,
    factor: f64,
) -> Result<Mask> {
    if f.len() != width as usize * height as usize * channels {
        return Err(NumodError::DimensionMismatch(format!(
            "foreground of length {} is not {width}x{height}x{channels}",
            f.len()
        )));
    }
    let level = factor * t.max(T_FLOOR);
    let data = f
        .chunks_exact(channels)
        .map(|px| px.iter().fold(0.0f64, |a, v| a.max(v.abs())) >= level)
        .map(u8::from)
        .collect();
    Ok(Mask {
        data,
        width,
        height,
    })
}

/// Batch thresholding; returns the masks and `t`.
pub fn threshold_batch<T: AsRef<[f64]>>(
    f_list: &[T],
    width: u32,
    height: u32,
    channels: usize,
    factor: f64,
) -> Result<(Vec<Mask>, f64)> {
    if f_list.is_empty() {
        return Err(NumodError::DimensionMismatch(
            "no foreground images to threshold".into(),
        ));
    }
    let t = foreground_std(f_list);
    let masks = f_list
        .iter()
        .map(|f| mask_from_foreground(f.as_ref(), width, height, channels, t, factor))
        .collect::<Result<_>>()?;
    Ok((masks, t))
}

/// Online thresholding: folds the stream into `stats` first, then thresholds it.
pub fn threshold_online<T: AsRef<[f64]>>(
    f_list: &[T],
    stats: &mut RunningStats,
    width: u32,
    height: u32,
    channels: usize,
    factor: f64,
) -> Result<(Vec<Mask>, f64)> {
    if f_list.is_empty() {
        return Err(NumodError::DimensionMismatch(
            "no foreground images to threshold".into(),
        ));
    }
    stats.update(f_list);
    let t = stats.std_dev();
    let masks = f_list
        .iter()
        .map(|f| mask_from_foreground(f.as_ref(), width, height, channels, t, factor))
        .collect::<Result<_>>()?;
    Ok((masks, t))
}
