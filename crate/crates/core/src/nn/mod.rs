//! Minimal dense-network engine for the generative decoders.
//!
//! Each network maps a free latent code through two ReLU layers to a sigmoid
//! output image. Gradients are written by hand; there is no autograd.

mod adam;
mod gfcn;

pub use adam::AdamState;
pub use gfcn::{ForwardCache, GfcnParams};

pub const DEFAULT_HIDDEN: [usize; 2] = [10, 20];

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
