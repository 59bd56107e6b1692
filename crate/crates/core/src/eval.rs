//! Per-frame confusion counts and the sequence F-measure.
//!
//! The sequence score is the uniform mean of per-frame F-measures. Frames
//! with neither ground-truth nor predicted positives have no defined score
//! and are skipped; a prediction on an empty ground-truth frame scores 0.

use serde::{Deserialize, Serialize};

use crate::error::{NumodError, Result};
use crate::sequence::{Mask, MaskSequence};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameScore {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl FrameScore {
    pub fn evaluated(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn precision(&self) -> Option<f64> {
        let d = self.tp + self.fp;
        (d > 0).then(|| self.tp as f64 / d as f64)
    }

    pub fn recall(&self) -> Option<f64> {
        let d = self.tp + self.fn_;
        (d > 0).then(|| self.tp as f64 / d as f64)
    }

    /// `2PR / (P + R)`, computed as `2tp / (2tp + fp + fn)`; `None` when the
    /// frame has no positives in either mask.
    pub fn f_measure(&self) -> Option<f64> {
        let d = 2 * self.tp + self.fp + self.fn_;
        (self.tp + self.fp + self.fn_ > 0).then(|| 2.0 * self.tp as f64 / d as f64)
    }
}

/// Counts over the pixels selected by `roi` (all pixels when `None`).
pub fn confusion(pred: &Mask, gt: &Mask, roi: Option<&Mask>) -> Result<FrameScore> {
    if (pred.width, pred.height) != (gt.width, gt.height) || pred.len() != gt.len() {
        return Err(NumodError::DimensionMismatch(format!(
            "prediction {}x{} vs ground truth {}x{}",
            pred.width, pred.height, gt.width, gt.height
        )));
    }
    if let Some(r) = roi {
        if r.len() != gt.len() {
            return Err(NumodError::DimensionMismatch(
                "roi size differs from masks".into(),
            ));
        }
    }
    let mut s = FrameScore::default();
    for (i, (&p, &g)) in pred.data.iter().zip(&gt.data).enumerate() {
        if roi.is_some_and(|r| r.data[i] == 0) {
            continue;
        }
        match (p != 0, g != 0) {
            (true, true) => s.tp += 1,
            (true, false) => s.fp += 1,
            (false, true) => s.fn_ += 1,
            (false, false) => s.tn += 1,
        }
    }
    Ok(s)
}

/// Mean per-frame F-measure over frames where it is defined.
pub fn f_measure_sequence(scores: &[FrameScore]) -> Result<f64> {
    let defined: Vec<f64> = scores.iter().filter_map(FrameScore::f_measure).collect();
    if defined.is_empty() {
        return Err(NumodError::NoEvaluableFrames);
    }
    Ok(defined.iter().sum::<f64>() / defined.len() as f64)
}

/// Scores `pred[i]` against `gt.masks[i]` with the matching roi.
pub fn evaluate_masks(pred: &[Mask], gt: &MaskSequence) -> Result<Vec<FrameScore>> {
    if pred.len() != gt.len() {
        return Err(NumodError::DimensionMismatch(format!(
            "{} predicted masks for {} ground-truth frames",
            pred.len(),
            gt.len()
        )));
    }
    pred.iter()
        .zip(&gt.masks)
        .zip(&gt.roi)
        .map(|((p, g), r)| confusion(p, g, r.as_ref()))
        .collect()
}
