//! Moving object detection under illumination changes.
//!
//! Each frame `I` is decomposed as `I = B + C + F`: a background `B` produced
//! by a small generative network from a per-frame latent code, an
//! illumination change `C`, and the moving foreground `F`. A second network
//! models the background of an illumination-invariant version of the frame;
//! its residual steers the split between `C` and `F`. Everything is fitted
//! without supervision by Adam, either over a whole sequence (batch) or
//! stream by stream with the networks frozen (online).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checkpoint;
pub mod error;
pub mod eval;
pub mod invariant;
pub mod io;
pub mod model;
pub mod nn;
pub mod pipeline;
pub mod sequence;
pub mod synth;

pub use checkpoint::Checkpoint;
pub use error::{NumodError, Result};
pub use eval::{confusion, f_measure_sequence, FrameScore};
pub use invariant::{psi, psi_sequence, InvariantFrame, InvariantModel};
pub use model::{
    run_online, train_batch, train_online, Decomposition, FrameVariables, Numod, OnlineDetector,
    OnlineRun, PriorKind, TrainConfig,
};
pub use nn::{AdamState, GfcnParams};
pub use pipeline::{RunManifest, RunMode, RunResult};
pub use sequence::{Frame, Mask, MaskSequence, Sequence};
