use serde::{Deserialize, Serialize};

use crate::error::{NumodError, Result};
use crate::nn::DEFAULT_HIDDEN;

/// How the prior map is computed from the invariant residual.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriorKind {
    /// `1 / (1 + exp(-|s - sigma|))`.
    Logistic,
    /// `1 / (1 + exp(-(|s| / sigma - offset)))`: below 0.5 where the invariant
    /// residual is small relative to the invariant image's spread.
    #[default]
    Scaled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub latent: usize,
    pub hidden: [usize; 2],
    /// Weight decay on network weights (biases excluded).
    pub lambda: f64,
    pub lr: f64,
    pub epochs: usize,
    /// Frames per minibatch; `None` uses the whole sequence up to 256 frames, else 64.
    pub minibatch_frames: Option<usize>,
    pub seed: u64,
    pub online_stream: usize,
    /// Adam iterations spent on each online stream.
    pub online_iterations: usize,
    pub pretrain_fraction: f64,
    /// Masks keep pixels with `|F| >= threshold_factor * t`.
    pub threshold_factor: f64,
    /// Standard deviation of the initial latent codes.
    pub latent_init_std: f64,
    pub prior: PriorKind,
    /// Residual, in units of `sigma`, at which the scaled prior crosses 0.5.
    pub prior_offset: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            latent: 5,
            hidden: DEFAULT_HIDDEN,
            lambda: 0.005,
            lr: 0.001,
            epochs: 300,
            minibatch_frames: Some(10),
            seed: 0,
            online_stream: 10,
            online_iterations: 200,
            pretrain_fraction: 0.5,
            threshold_factor: 2.0,
            latent_init_std: 0.1,
            prior: PriorKind::Scaled,
            prior_offset: 2.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(NumodError::InvalidConfig(msg.into()));
        if self.latent == 0 || self.hidden.contains(&0) {
            return bad("layer sizes must be positive");
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return bad("lambda must be finite and >= 0");
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return bad("learning rate must be positive");
        }
        if self.minibatch_frames == Some(0) {
            return bad("minibatch must hold at least one frame");
        }
        if self.online_stream == 0 {
            return bad("online stream must hold at least one frame");
        }
        if !(self.pretrain_fraction > 0.0 && self.pretrain_fraction < 1.0) {
            return bad("pretrain fraction must lie in (0, 1)");
        }
        if !(self.threshold_factor > 0.0) {
            return bad("threshold factor must be positive");
        }
        if !self.prior_offset.is_finite() {
            return bad("prior offset must be finite");
        }
        if !(self.latent_init_std >= 0.0) {
            return bad("latent init std must be >= 0");
        }
        Ok(())
    }

    pub fn minibatch_for(&self, n_frames: usize) -> usize {
        let mb = self
            .minibatch_frames
            .unwrap_or(if n_frames <= 256 { n_frames } else { 64 });
        mb.clamp(1, n_frames.max(1))
    }

    /// Number of leading frames used for pretraining in online mode.
    pub fn pretrain_frames(&self, n_frames: usize) -> usize {
        ((n_frames as f64 * self.pretrain_fraction).round() as usize).clamp(1, n_frames.max(1))
    }
}
