//! Illumination-invariant grayscale representation.
//!
//! Two branches are computed per frame and averaged:
//!
//! * the log-chromaticity image projected orthogonally to the illumination
//!   direction `e` (channel-uniform gains cancel in the ratios),
//! * a homomorphic reflectance image: log-luminance minus a locally adaptive
//!   Wiener estimate of the illumination.
//!
//! Each branch is min-max normalised per frame before averaging, so the
//! result lies in `[0, 1]`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{NumodError, Result};
use crate::sequence::{Frame, Sequence};

pub const DEFAULT_ANGLES: usize = 180;
pub const DEFAULT_WINDOW: usize = 7;
pub const DEFAULT_EPSILON: f64 = 1e-4;
const HISTOGRAM_BINS: usize = 64;
const CALIBRATION_FRAMES: usize = 10;
const CALIBRATION_PIXELS: usize = 200_000;
const TINY_VARIANCE: f64 = 1e-12;
/// Spans below this (relative) count as a constant image.
const FLAT_SPAN: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantModel {
    /// Angle of the illumination direction `e` in the log-chromaticity plane, in `[0, pi)`.
    pub theta: f64,
    /// Odd Wiener window side, at least 3.
    pub wiener_window: usize,
    /// Noise variance; `None` estimates it per frame as the median local variance.
    pub wiener_noise: Option<f64>,
    /// Channel values are floored at this before taking logarithms.
    pub epsilon_log: f64,
}

impl Default for InvariantModel {
    fn default() -> Self {
        Self {
            theta: 0.0,
            wiener_window: DEFAULT_WINDOW,
            wiener_noise: None,
            epsilon_log: DEFAULT_EPSILON,
        }
    }
}

impl InvariantModel {
    pub fn with_theta(theta: f64) -> Self {
        Self {
            theta,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..PI).contains(&self.theta) {
            return Err(NumodError::InvalidConfig(format!(
                "theta {} outside [0, pi)",
                self.theta
            )));
        }
        if self.wiener_window < 3 || self.wiener_window.is_multiple_of(2) {
            return Err(NumodError::InvalidConfig(format!(
                "wiener window must be odd and >= 3, got {}",
                self.wiener_window
            )));
        }
        if let Some(n) = self.wiener_noise {
            if !(n >= 0.0) {
                return Err(NumodError::InvalidConfig(format!(
                    "negative wiener noise {n}"
                )));
            }
        }
        if !(self.epsilon_log > 0.0) {
            return Err(NumodError::InvalidConfig("epsilon_log must be > 0".into()));
        }
        Ok(())
    }

    /// Unit vector orthogonal to `e`.
    fn normal(&self) -> (f64, f64) {
        (-self.theta.sin(), self.theta.cos())
    }
}

/// Single-channel image in `[0, 1]` with the source frame's spatial dims.
#[derive(Debug, Clone, PartialEq)]
pub struct InvariantFrame {
    pub data: Vec<f64>,
    pub width: u32,
    pub height: u32,
}

impl InvariantFrame {
    /// Population standard deviation of the pixels.
    pub fn std_dev(&self) -> f64 {
        std_dev(&self.data)
    }
}

pub(crate) fn std_dev(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
}

fn require_rgb(frame: &Frame) -> Result<()> {
    if frame.is_rgb() {
        Ok(())
    } else {
        Err(NumodError::NotRgb(frame.channels))
    }
}

/// Per-pixel `(log(R/G), log(B/G))` with channels floored at `epsilon`.
pub fn log_chromaticity(frame: &Frame, epsilon: f64) -> Result<Vec<[f64; 2]>> {
    require_rgb(frame)?;
    Ok(frame
        .data
        .chunks_exact(3)
        .map(|p| {
            let r = p[0].max(epsilon).ln();
            let g = p[1].max(epsilon).ln();
            let b = p[2].max(epsilon).ln();
            [r - g, b - g]
        })
        .collect())
}

/// Maps values to `[0, 1]`; a constant input maps to 0.5 everywhere.
pub fn min_max_normalize(values: &[f64]) -> Vec<f64> {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let span = hi - lo;
    if values.is_empty() || !(span > FLAT_SPAN * hi.abs().max(lo.abs()).max(1.0)) {
        return vec![0.5; values.len()];
    }
    values
        .iter()
        .map(|v| ((v - lo) / span).clamp(0.0, 1.0))
        .collect()
}

fn entropy(projections: &[f64]) -> f64 {
    let (lo, hi) = projections
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if !(hi > lo) {
        return 0.0;
    }
    let mut hist = [0usize; HISTOGRAM_BINS];
    let scale = HISTOGRAM_BINS as f64 / (hi - lo);
    for &p in projections {
        let bin = (((p - lo) * scale) as usize).min(HISTOGRAM_BINS - 1);
        hist[bin] += 1;
    }
    let n = projections.len() as f64;
    hist.iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let q = c as f64 / n;
            -q * q.ln()
        })
        .sum()
}

/// Angle (from a uniform grid of `n_angles` over `[0, pi)`) whose orthogonal
/// projection of pooled chromaticities has minimum histogram entropy.
/// Ties resolve to the smallest angle.
pub fn calibrate_direction_from_chromaticities(chroma: &[[f64; 2]], n_angles: usize) -> f64 {
    let n_angles = n_angles.max(1);
    let mut best = (0.0, f64::INFINITY);
    let mut proj = vec![0.0; chroma.len()];
    for k in 0..n_angles {
        let theta = k as f64 * PI / n_angles as f64;
        let (nx, ny) = (-theta.sin(), theta.cos());
        for (p, c) in proj.iter_mut().zip(chroma) {
            *p = c[0] * nx + c[1] * ny;
        }
        let h = entropy(&proj);
        if h < best.1 {
            best = (theta, h);
        }
    }
    best.0
}

/// Estimates the illumination direction from a subsample of the sequence's frames.
pub fn calibrate_direction(sequence: &Sequence, n_angles: usize, epsilon: f64) -> Result<f64> {
    let first = sequence
        .frames
        .first()
        .ok_or_else(|| NumodError::InvalidConfig("cannot calibrate on an empty sequence".into()))?;
    require_rgb(first)?;
    let n = sequence.len();
    let picks = CALIBRATION_FRAMES.min(n);
    let stride = (picks * first.pixels()).div_ceil(CALIBRATION_PIXELS).max(1);
    let mut chroma = Vec::new();
    for j in 0..picks {
        let frame = &sequence.frames[j * n / picks];
        let c = log_chromaticity(frame, epsilon)?;
        chroma.extend(c.into_iter().step_by(stride));
    }
    Ok(calibrate_direction_from_chromaticities(&chroma, n_angles))
}

/// Projection of log-chromaticities orthogonal to `e`, min-max normalised.
pub fn project_invariant(frame: &Frame, model: &InvariantModel) -> Result<InvariantFrame> {
    let (nx, ny) = model.normal();
    let raw: Vec<f64> = log_chromaticity(frame, model.epsilon_log)?
        .into_iter()
        .map(|c| c[0] * nx + c[1] * ny)
        .collect();
    Ok(InvariantFrame {
        data: min_max_normalize(&raw),
        width: frame.width,
        height: frame.height,
    })
}

/// Local mean and variance over a `window x window` box, truncated at the borders.
fn local_moments(
    values: &[f64],
    width: usize,
    height: usize,
    window: usize,
) -> (Vec<f64>, Vec<f64>) {
    let stride = width + 1;
    let mut sum = vec![0.0; stride * (height + 1)];
    let mut sum_sq = vec![0.0; stride * (height + 1)];
    for y in 0..height {
        let mut row = 0.0;
        let mut row_sq = 0.0;
        for x in 0..width {
            let v = values[y * width + x];
            row += v;
            row_sq += v * v;
            sum[(y + 1) * stride + x + 1] = sum[y * stride + x + 1] + row;
            sum_sq[(y + 1) * stride + x + 1] = sum_sq[y * stride + x + 1] + row_sq;
        }
    }
    let r = window / 2;
    let mut mean = vec![0.0; values.len()];
    let mut var = vec![0.0; values.len()];
    for y in 0..height {
        let (y0, y1) = (y.saturating_sub(r), (y + r + 1).min(height));
        for x in 0..width {
            let (x0, x1) = (x.saturating_sub(r), (x + r + 1).min(width));
            let area = ((y1 - y0) * (x1 - x0)) as f64;
            let rect = |t: &[f64]| {
                t[y1 * stride + x1] - t[y0 * stride + x1] - t[y1 * stride + x0]
                    + t[y0 * stride + x0]
            };
            let m = rect(&sum) / area;
            let v = (rect(&sum_sq) / area - m * m).max(0.0);
            mean[y * width + x] = m;
            var[y * width + x] = v;
        }
    }
    (mean, var)
}

fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Locally adaptive Wiener smoothing: `mu + max(v - noise, 0) / max(v, tiny) * (x - mu)`.
pub fn wiener_smooth(
    values: &[f64],
    width: usize,
    height: usize,
    window: usize,
    noise: Option<f64>,
) -> Vec<f64> {
    let (mean, var) = local_moments(values, width, height, window);
    let noise = noise.unwrap_or_else(|| median(&var));
    values
        .iter()
        .zip(mean.iter().zip(&var))
        .map(|(&x, (&mu, &v))| mu + (v - noise).max(0.0) / v.max(TINY_VARIANCE) * (x - mu))
        .collect()
}

/// Homomorphic reflectance: log-luminance minus its Wiener-smoothed illumination, normalised.
pub fn wiener_reflectance(frame: &Frame, model: &InvariantModel) -> InvariantFrame {
    let log_lum: Vec<f64> = frame
        .luminance()
        .into_iter()
        .map(|l| l.max(model.epsilon_log).ln())
        .collect();
    let smooth = wiener_smooth(
        &log_lum,
        frame.width as usize,
        frame.height as usize,
        model.wiener_window,
        model.wiener_noise,
    );
    let reflectance: Vec<f64> = log_lum.iter().zip(&smooth).map(|(x, s)| x - s).collect();
    InvariantFrame {
        data: min_max_normalize(&reflectance),
        width: frame.width,
        height: frame.height,
    }
}

/// Invariant image: mean of the projection and reflectance branches.
/// Single-channel frames have no chromaticity and use the reflectance branch alone.
pub fn psi(frame: &Frame, model: &InvariantModel) -> Result<InvariantFrame> {
    if frame.channels == 1 {
        return Ok(wiener_reflectance(frame, model));
    }
    let projected = project_invariant(frame, model)?;
    let reflect = wiener_reflectance(frame, model);
    let data = projected
        .data
        .iter()
        .zip(&reflect.data)
        .map(|(a, b)| 0.5 * (a + b))
        .collect();
    Ok(InvariantFrame {
        data,
        width: frame.width,
        height: frame.height,
    })
}

/// `psi` over every frame, in parallel, order preserved.
pub fn psi_sequence(sequence: &Sequence, model: &InvariantModel) -> Result<Vec<InvariantFrame>> {
    use rayon::prelude::*;
    sequence.frames.par_iter().map(|f| psi(f, model)).collect()
}
