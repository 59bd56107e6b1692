use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Uniform;
use serde::{Deserialize, Serialize};

use super::sigmoid;
use crate::error::{NumodError, Result};

/// Weights and biases of one generative network `latent -> h1 -> h2 -> output`,
/// stored in a single flat buffer so the optimiser can treat it as one vector.
///
/// Layout: `W1 (h1 x latent) | b1 | W2 (h2 x h1) | b2 | W3 (output x h2) | b3`,
/// weights row-major with one row per output unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GfcnParams {
    pub latent: usize,
    pub hidden: [usize; 2],
    pub output: usize,
    pub values: Vec<f64>,
}

/// Activations kept from a forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub input: Vec<f64>,
    pub pre1: Vec<f64>,
    pub act1: Vec<f64>,
    pub pre2: Vec<f64>,
    pub act2: Vec<f64>,
    /// Sigmoid output.
    pub output: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
struct Offsets {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    w3: usize,
    b3: usize,
    end: usize,
}

fn dense_forward(weights: &[f64], bias: &[f64], input: &[f64], out: &mut [f64]) {
    let n_in = input.len();
    for (j, o) in out.iter_mut().enumerate() {
        let row = &weights[j * n_in..(j + 1) * n_in];
        *o = bias[j] + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>();
    }
}

impl GfcnParams {
    pub fn zeros(latent: usize, hidden: [usize; 2], output: usize) -> Self {
        let mut p = Self {
            latent,
            hidden,
            output,
            values: Vec::new(),
        };
        p.values = vec![0.0; p.offsets().end];
        p
    }

    /// Glorot-uniform weights, zero biases; deterministic in `seed`.
    pub fn init(latent: usize, hidden: [usize; 2], output: usize, seed: u64) -> Result<Self> {
        if latent == 0 || output == 0 || hidden.contains(&0) {
            return Err(NumodError::InvalidConfig(
                "network layer sizes must be >= 1".into(),
            ));
        }
        let mut p = Self::zeros(latent, hidden, output);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let o = p.offsets();
        let layers = [
            (o.w1, o.b1, latent, hidden[0]),
            (o.w2, o.b2, hidden[0], hidden[1]),
            (o.w3, o.b3, hidden[1], output),
        ];
        for (start, end, fan_in, fan_out) in layers {
            let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let dist = Uniform::new(-s, s).expect("finite bound");
            for w in &mut p.values[start..end] {
                *w = rng.sample(dist);
            }
        }
        Ok(p)
    }

    fn offsets(&self) -> Offsets {
        let [h1, h2] = self.hidden;
        let w1 = 0;
        let b1 = w1 + h1 * self.latent;
        let w2 = b1 + h1;
        let b2 = w2 + h2 * h1;
        let w3 = b2 + h2;
        let b3 = w3 + self.output * h2;
        Offsets {
            w1,
            b1,
            w2,
            b2,
            w3,
            b3,
            end: b3 + self.output,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn same_shape(&self, other: &GfcnParams) -> bool {
        self.latent == other.latent && self.hidden == other.hidden && self.output == other.output
    }

    /// `(weights, bias)` slices of layer `k` (0-based).
    pub fn layer(&self, k: usize) -> (&[f64], &[f64]) {
        let o = self.offsets();
        let (w, b, e) = match k {
            0 => (o.w1, o.b1, o.w2),
            1 => (o.w2, o.b2, o.w3),
            2 => (o.w3, o.b3, o.end),
            _ => panic!("layer index {k} out of range"),
        };
        (&self.values[w..b], &self.values[b..e])
    }

    /// Index ranges of the weight matrices (biases excluded).
    pub fn weight_ranges(&self) -> [std::ops::Range<usize>; 3] {
        let o = self.offsets();
        [o.w1..o.b1, o.w2..o.b2, o.w3..o.b3]
    }

    /// Squared L2 norm of the weights, biases excluded.
    pub fn weight_norm_sq(&self) -> f64 {
        self.weight_ranges()
            .into_iter()
            .map(|r| self.values[r].iter().map(|w| w * w).sum::<f64>())
            .sum()
    }

    pub fn fill_zero(&mut self) {
        self.values.iter_mut().for_each(|v| *v = 0.0);
    }

    pub fn add_assign(&mut self, other: &GfcnParams) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
    }

    /// FNV-1a over the bit patterns of every parameter.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in &self.values {
            for b in v.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }

    pub fn forward(&self, latent: &[f64]) -> Result<ForwardCache> {
        if latent.len() != self.latent {
            return Err(NumodError::DimensionMismatch(format!(
                "latent has {} elements, network expects {}",
                latent.len(),
                self.latent
            )));
        }
        let [h1, h2] = self.hidden;
        let mut pre1 = vec![0.0; h1];
        let (w, b) = self.layer(0);
        dense_forward(w, b, latent, &mut pre1);
        let act1: Vec<f64> = pre1.iter().map(|&z| z.max(0.0)).collect();
        let mut pre2 = vec![0.0; h2];
        let (w, b) = self.layer(1);
        dense_forward(w, b, &act1, &mut pre2);
        let act2: Vec<f64> = pre2.iter().map(|&z| z.max(0.0)).collect();
        let mut output = vec![0.0; self.output];
        let (w, b) = self.layer(2);
        dense_forward(w, b, &act2, &mut output);
        output.iter_mut().for_each(|z| *z = sigmoid(*z));
        Ok(ForwardCache {
            input: latent.to_vec(),
            pre1,
            act1,
            pre2,
            act2,
            output,
        })
    }

    /// Backpropagates `grad_output` (dL/d output) through the network.
    ///
    /// Parameter gradients are accumulated into `grads` when given; the
    /// gradient with respect to the latent code is returned. ReLU'(0) = 0.
    pub fn backward_into(
        &self,
        cache: &ForwardCache,
        grad_output: &[f64],
        mut grads: Option<&mut GfcnParams>,
    ) -> Result<Vec<f64>> {
        if grad_output.len() != self.output || cache.output.len() != self.output {
            return Err(NumodError::DimensionMismatch(format!(
                "output gradient has {} elements, network output is {}",
                grad_output.len(),
                self.output
            )));
        }
        if let Some(g) = grads.as_deref() {
            if !g.same_shape(self) {
                return Err(NumodError::DimensionMismatch(
                    "gradient buffer shape differs from network".into(),
                ));
            }
        }
        let [h1, h2] = self.hidden;
        let o = self.offsets();

        let delta3: Vec<f64> = cache
            .output
            .iter()
            .zip(grad_output)
            .map(|(&y, &g)| g * y * (1.0 - y))
            .collect();
        let (w3, _) = self.layer(2);
        let mut grad_act2 = vec![0.0; h2];
        for (j, &d) in delta3.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            let row = &w3[j * h2..(j + 1) * h2];
            for (ga, w) in grad_act2.iter_mut().zip(row) {
                *ga += w * d;
            }
        }
        if let Some(g) = grads.as_deref_mut() {
            let (gw, gb) = g.values[o.w3..o.end].split_at_mut(o.b3 - o.w3);
            for (j, &d) in delta3.iter().enumerate() {
                gb[j] += d;
                if d == 0.0 {
                    continue;
                }
                for (gw, a) in gw[j * h2..(j + 1) * h2].iter_mut().zip(&cache.act2) {
                    *gw += d * a;
                }
            }
        }

        let delta2: Vec<f64> = grad_act2
            .iter()
            .zip(&cache.pre2)
            .map(|(&g, &z)| if z > 0.0 { g } else { 0.0 })
            .collect();
        let (w2, _) = self.layer(1);
        let mut grad_act1 = vec![0.0; h1];
        for (j, &d) in delta2.iter().enumerate() {
            for (ga, w) in grad_act1.iter_mut().zip(&w2[j * h1..(j + 1) * h1]) {
                *ga += w * d;
            }
        }
        if let Some(g) = grads.as_deref_mut() {
            for (j, &d) in delta2.iter().enumerate() {
                g.values[o.b2 + j] += d;
                for (k, a) in cache.act1.iter().enumerate() {
                    g.values[o.w2 + j * h1 + k] += d * a;
                }
            }
        }

        let delta1: Vec<f64> = grad_act1
            .iter()
            .zip(&cache.pre1)
            .map(|(&g, &z)| if z > 0.0 { g } else { 0.0 })
            .collect();
        let (w1, _) = self.layer(0);
        let d = self.latent;
        let mut grad_latent = vec![0.0; d];
        for (j, &dj) in delta1.iter().enumerate() {
            for (gl, w) in grad_latent.iter_mut().zip(&w1[j * d..(j + 1) * d]) {
                *gl += w * dj;
            }
        }
        if let Some(g) = grads {
            for (j, &dj) in delta1.iter().enumerate() {
                g.values[o.b1 + j] += dj;
                for (k, u) in cache.input.iter().enumerate() {
                    g.values[o.w1 + j * d + k] += dj * u;
                }
            }
        }
        Ok(grad_latent)
    }

    /// Fresh-buffer variant of [`backward_into`](Self::backward_into).
    pub fn backward(
        &self,
        cache: &ForwardCache,
        grad_output: &[f64],
    ) -> Result<(GfcnParams, Vec<f64>)> {
        let mut grads = GfcnParams::zeros(self.latent, self.hidden, self.output);
        let gu = self.backward_into(cache, grad_output, Some(&mut grads))?;
        Ok((grads, gu))
    }
}
