//! Three-way decomposition `I = B + C + F` driven by two generative networks.
//!
//! Net1 generates the background `B` of the input frame from a per-frame
//! latent code, Net2 the background of the invariant image. The invariant
//! residual feeds a prior map that splits the sparse residual `S = I - B`
//! into an illumination part `C` (a free per-frame variable) and the
//! foreground `F = S - C`.

mod config;
mod frame;
pub mod loss;
mod online;
pub mod threshold;
mod train;

pub use config::{PriorKind, TrainConfig};
pub use frame::{evaluate_frame, FrameGradients, FrameInput};
pub use loss::{
    compute_prior_map, compute_prior_map_with, loss_decomp, loss_reconst, loss_reg, LossTerms,
    PriorMap,
};
pub use online::{OnlineDetector, StreamOutput};
pub use threshold::{threshold_batch, threshold_online, RunningStats, T_FLOOR};
pub use train::{
    run_online, train_batch, train_online, BatchOutput, EpochRecord, OnlineOutput, OnlineRun,
};

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{NumodError, Result};
use crate::nn::{AdamState, GfcnParams};
use crate::sequence::Mask;

/// Per-frame optimisable state, stored flat as `u1 | u2 | c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameVariables {
    pub latent: usize,
    pub values: Vec<f64>,
}

impl FrameVariables {
    pub fn zeros(latent: usize, image_len: usize) -> Self {
        Self {
            latent,
            values: vec![0.0; 2 * latent + image_len],
        }
    }

    /// Latents drawn from `N(0, std^2)`, illumination image zero.
    pub fn random(latent: usize, image_len: usize, std: f64, rng: &mut ChaCha8Rng) -> Self {
        let mut v = Self::zeros(latent, image_len);
        if std > 0.0 {
            let normal = Normal::new(0.0, std).expect("std checked positive");
            for x in &mut v.values[..2 * latent] {
                *x = normal.sample(rng);
            }
        }
        v
    }

    /// Copies the latents of `prev`, with a zero illumination image.
    pub fn warm_start(prev: &FrameVariables, image_len: usize) -> Self {
        let mut v = Self::zeros(prev.latent, image_len);
        v.values[..2 * prev.latent].copy_from_slice(&prev.values[..2 * prev.latent]);
        v
    }

    pub fn u1(&self) -> &[f64] {
        &self.values[..self.latent]
    }

    pub fn u2(&self) -> &[f64] {
        &self.values[self.latent..2 * self.latent]
    }

    pub fn c(&self) -> &[f64] {
        &self.values[2 * self.latent..]
    }

    pub fn c_mut(&mut self) -> &mut [f64] {
        &mut self.values[2 * self.latent..]
    }

    pub fn u1_mut(&mut self) -> &mut [f64] {
        &mut self.values[..self.latent]
    }

    pub fn u2_mut(&mut self) -> &mut [f64] {
        let d = self.latent;
        &mut self.values[d..2 * d]
    }
}

/// Per-frame outputs. `s_img = input - b_img` and `f_img = s_img - c_img`.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub b_img: Vec<f64>,
    pub c_img: Vec<f64>,
    pub f_img: Vec<f64>,
    pub s_img: Vec<f64>,
    /// Net2 output for the invariant image.
    pub b_inv: Vec<f64>,
    pub prior: PriorMap,
    pub mask: Mask,
}

/// The two generative networks with their optimiser states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Numod {
    pub config: TrainConfig,
    pub width: u32,
    pub height: u32,
    pub channels: usize,
    pub net1: GfcnParams,
    pub net2: GfcnParams,
    pub adam1: AdamState,
    pub adam2: AdamState,
    /// Number of completed batch epochs; zero means untrained.
    pub epochs_trained: usize,
}

/// Seeds for the independent random streams derived from one run seed.
pub(crate) fn derived_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 finaliser
    let mut z = seed.wrapping_add(stream.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Every seed a run draws from, for the record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DerivedSeeds {
    pub base: u64,
    pub net1: u64,
    pub net2: u64,
    pub latents: u64,
    pub shuffle: u64,
    pub online: u64,
}

impl DerivedSeeds {
    pub fn new(base: u64) -> Self {
        Self {
            base,
            net1: derived_seed(base, SEED_NET1),
            net2: derived_seed(base, SEED_NET2),
            latents: derived_seed(base, SEED_LATENTS),
            shuffle: derived_seed(base, SEED_SHUFFLE),
            online: derived_seed(base, SEED_ONLINE),
        }
    }
}

pub(crate) const SEED_NET1: u64 = 1;
pub(crate) const SEED_NET2: u64 = 2;
pub(crate) const SEED_LATENTS: u64 = 3;
pub(crate) const SEED_SHUFFLE: u64 = 4;
pub(crate) const SEED_ONLINE: u64 = 5;

impl Numod {
    /// Freshly initialised networks for frames of the given dims.
    pub fn new(config: TrainConfig, width: u32, height: u32, channels: usize) -> Result<Self> {
        config.validate()?;
        if width == 0 || height == 0 || !(channels == 1 || channels == 3) {
            return Err(NumodError::DimensionMismatch(format!(
                "unsupported frame dims {width}x{height}x{channels}"
            )));
        }
        let pixels = width as usize * height as usize;
        let net1 = GfcnParams::init(
            config.latent,
            config.hidden,
            pixels * channels,
            derived_seed(config.seed, SEED_NET1),
        )?;
        let net2 = GfcnParams::init(
            config.latent,
            config.hidden,
            pixels,
            derived_seed(config.seed, SEED_NET2),
        )?;
        Ok(Self {
            adam1: AdamState::new(net1.len(), config.lr),
            adam2: AdamState::new(net2.len(), config.lr),
            net1,
            net2,
            config,
            width,
            height,
            channels,
            epochs_trained: 0,
        })
    }

    pub fn image_len(&self) -> usize {
        self.pixels() * self.channels
    }

    pub fn pixels(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn is_pretrained(&self) -> bool {
        self.epochs_trained > 0
    }

    pub fn loss_reg(&self) -> f64 {
        loss_reg(&self.net1, &self.net2, self.config.lambda)
    }

    /// Decomposes one frame with the current networks and variables (mask left empty).
    pub fn decompose(
        &self,
        input: &FrameInput<'_>,
        vars: &FrameVariables,
    ) -> Result<Decomposition> {
        frame::decompose(self, input, vars)
    }
}
