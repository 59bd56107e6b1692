//! Objective terms.
//!
//! The prior map `M` is single-channel; wherever it meets the (possibly
//! multi-channel) images `C` and `F`, pixel `j` of an interleaved image uses
//! `M[j / channels]`.

use serde::{Deserialize, Serialize};

use super::config::PriorKind;
use crate::error::{NumodError, Result};
use crate::nn::{sigmoid, GfcnParams};

/// Sign with `sgn(0) = 0`.
#[inline]
pub(crate) fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriorMap {
    pub values: Vec<f64>,
    pub sigma: f64,
}

/// Prior value for one invariant residual.
#[inline]
pub(crate) fn prior_value(kind: PriorKind, s: f64, sigma: f64, offset: f64) -> f64 {
    match kind {
        PriorKind::Logistic => sigmoid((s - sigma).abs()),
        PriorKind::Scaled => sigmoid(s.abs() / sigma.max(1e-12) - offset),
    }
}

/// `dM / ds` for one invariant residual, given `M` itself.
#[inline]
pub(crate) fn prior_slope(kind: PriorKind, s: f64, sigma: f64, m: f64) -> f64 {
    match kind {
        PriorKind::Logistic => m * (1.0 - m) * sgn(s - sigma),
        PriorKind::Scaled => m * (1.0 - m) * sgn(s) / sigma.max(1e-12),
    }
}

/// `M = 1 / (1 + exp(-|s_inv - sigma|))`, elementwise.
pub fn compute_prior_map(s_inv: &[f64], sigma: f64) -> PriorMap {
    compute_prior_map_with(PriorKind::Logistic, s_inv, sigma, 0.0)
}

/// `offset` only affects [`PriorKind::Scaled`].
pub fn compute_prior_map_with(kind: PriorKind, s_inv: &[f64], sigma: f64, offset: f64) -> PriorMap {
    PriorMap {
        values: s_inv
            .iter()
            .map(|&s| prior_value(kind, s, sigma, offset))
            .collect(),
        sigma,
    }
}

fn l1_diff(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(NumodError::DimensionMismatch(format!(
            "images of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum())
}

/// `sum_i |I_i - B_i|_1 + sum_i |Iinv_i - Binv_i|_1`.
pub fn loss_reconst<T: AsRef<[f64]>>(
    frames: &[T],
    invariant_frames: &[T],
    backgrounds: &[T],
    invariant_backgrounds: &[T],
) -> Result<f64> {
    let n = frames.len();
    if invariant_frames.len() != n || backgrounds.len() != n || invariant_backgrounds.len() != n {
        return Err(NumodError::DimensionMismatch(
            "reconstruction loss needs equally many frames in every list".into(),
        ));
    }
    let mut total = 0.0;
    for i in 0..n {
        total += l1_diff(frames[i].as_ref(), backgrounds[i].as_ref())?;
        total += l1_diff(
            invariant_frames[i].as_ref(),
            invariant_backgrounds[i].as_ref(),
        )?;
    }
    Ok(total)
}

/// `sum_i M_i^T |C_i| + sum_i (1 - M_i)^T |F_i|` with `M` broadcast over channels.
pub fn loss_decomp<T: AsRef<[f64]>>(
    prior_maps: &[PriorMap],
    c_list: &[T],
    f_list: &[T],
    channels: usize,
) -> Result<f64> {
    if c_list.len() != prior_maps.len() || f_list.len() != prior_maps.len() {
        return Err(NumodError::DimensionMismatch(
            "decomposition loss needs one prior map per frame".into(),
        ));
    }
    let mut total = 0.0;
    for ((m, c), f) in prior_maps.iter().zip(c_list).zip(f_list) {
        let (c, f) = (c.as_ref(), f.as_ref());
        if c.len() != m.values.len() * channels || f.len() != c.len() {
            return Err(NumodError::DimensionMismatch(format!(
                "prior map of {} pixels cannot broadcast to {} x {channels}",
                m.values.len(),
                c.len()
            )));
        }
        for (j, (cj, fj)) in c.iter().zip(f).enumerate() {
            let mj = m.values[j / channels];
            total += mj * cj.abs() + (1.0 - mj) * fj.abs();
        }
    }
    Ok(total)
}

/// `lambda * (|W1|^2 / 2 + |W2|^2 / 2)`, biases excluded.
pub fn loss_reg(net1: &GfcnParams, net2: &GfcnParams, lambda: f64) -> f64 {
    lambda * 0.5 * (net1.weight_norm_sq() + net2.weight_norm_sq())
}

/// Objective components on a common frame set.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub reconst: f64,
    pub decomp: f64,
    pub reg: f64,
}

impl LossTerms {
    /// Batch objective.
    pub fn total(&self) -> f64 {
        self.reconst + self.decomp + self.reg
    }

    /// Online objective: the weight decay term is dropped.
    pub fn online_total(&self) -> f64 {
        self.reconst + self.decomp
    }
}

impl std::ops::AddAssign for LossTerms {
    fn add_assign(&mut self, o: Self) {
        self.reconst += o.reconst;
        self.decomp += o.decomp;
        self.reg += o.reg;
    }
}
