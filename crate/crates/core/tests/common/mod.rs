#![allow(dead_code)]

use numod::eval::FrameScore;
use numod::model::{FrameInput, FrameVariables, Numod, PriorKind, TrainConfig};
use numod::{GfcnParams, Mask};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Dense layers unpacked from the flat parameter vector.
pub struct NaiveNet {
    pub layers: Vec<(Vec<Vec<f64>>, Vec<f64>)>,
}

impl NaiveNet {
    pub fn from_flat(p: &GfcnParams) -> Self {
        let sizes = [p.latent, p.hidden[0], p.hidden[1], p.output];
        let mut at = 0;
        let mut layers = Vec::new();
        for k in 0..3 {
            let (n_in, n_out) = (sizes[k], sizes[k + 1]);
            let mut w = vec![vec![0.0; n_in]; n_out];
            for row in w.iter_mut() {
                for x in row.iter_mut() {
                    *x = p.values[at];
                    at += 1;
                }
            }
            let b = p.values[at..at + n_out].to_vec();
            at += n_out;
            layers.push((w, b));
        }
        assert_eq!(at, p.values.len());
        Self { layers }
    }

    pub fn forward(&self, u: &[f64]) -> Vec<f64> {
        let mut x = u.to_vec();
        for (k, (w, b)) in self.layers.iter().enumerate() {
            let mut y = Vec::with_capacity(b.len());
            for (row, bias) in w.iter().zip(b) {
                let mut z = *bias;
                for (wi, xi) in row.iter().zip(&x) {
                    z += wi * xi;
                }
                y.push(if k < 2 {
                    if z > 0.0 {
                        z
                    } else {
                        0.0
                    }
                } else {
                    1.0 / (1.0 + (-z).exp())
                });
            }
            x = y;
        }
        x
    }

    pub fn pre_activations(&self, u: &[f64]) -> Vec<f64> {
        let mut out = Vec::new();
        let mut x = u.to_vec();
        for (w, b) in &self.layers[..2] {
            let z: Vec<f64> = w
                .iter()
                .zip(b)
                .map(|(row, bias)| bias + row.iter().zip(&x).map(|(a, c)| a * c).sum::<f64>())
                .collect();
            out.extend_from_slice(&z);
            x = z.iter().map(|v| v.max(0.0)).collect();
        }
        out
    }

    pub fn weight_sq(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|(w, _)| w.iter().flatten())
            .map(|v| v * v)
            .sum()
    }
}

pub struct Instance {
    pub model: Numod,
    pub frames: Vec<Vec<f64>>,
    pub invariant: Vec<Vec<f64>>,
    pub sigmas: Vec<f64>,
    pub vars: Vec<FrameVariables>,
}

impl Instance {
    pub fn inputs(&self) -> Vec<FrameInput<'_>> {
        self.frames
            .iter()
            .zip(&self.invariant)
            .zip(&self.sigmas)
            .map(|((f, i), &sigma)| FrameInput {
                input: f,
                invariant: i,
                sigma,
            })
            .collect()
    }
}

fn prior(kind: PriorKind, s: f64, sigma: f64, offset: f64) -> f64 {
    let z = match kind {
        PriorKind::Logistic => (s - sigma).abs(),
        PriorKind::Scaled => s.abs() / sigma - offset,
    };
    1.0 / (1.0 + (-z).exp())
}

/// Batch objective written out term by term.
pub fn naive_objective(
    cfg: &TrainConfig,
    net1: &GfcnParams,
    net2: &GfcnParams,
    channels: usize,
    inst: &Instance,
    vars: &[FrameVariables],
) -> f64 {
    naive_objective_terms(cfg, net1, net2, channels, inst, vars)
        .iter()
        .sum()
}

/// Every summand of the batch objective, in a fixed order.
pub fn naive_objective_terms(
    cfg: &TrainConfig,
    net1: &GfcnParams,
    net2: &GfcnParams,
    channels: usize,
    inst: &Instance,
    vars: &[FrameVariables],
) -> Vec<f64> {
    let (n1, n2) = (NaiveNet::from_flat(net1), NaiveNet::from_flat(net2));
    let d = cfg.latent;
    let mut terms = Vec::new();
    for ((img, inv), (v, &sigma)) in inst
        .frames
        .iter()
        .zip(&inst.invariant)
        .zip(vars.iter().zip(&inst.sigmas))
    {
        let u1 = &v.values[..d];
        let u2 = &v.values[d..2 * d];
        let c = &v.values[2 * d..];
        let b = n1.forward(u1);
        let b_inv = n2.forward(u2);
        for p in 0..inv.len() {
            let s_inv = inv[p] - b_inv[p];
            terms.push(s_inv.abs());
            let m = prior(cfg.prior, s_inv, sigma, cfg.prior_offset);
            for ch in 0..channels {
                let j = p * channels + ch;
                let s = img[j] - b[j];
                terms.push(s.abs());
                terms.push(m * c[j].abs());
                terms.push((1.0 - m) * (s - c[j]).abs());
            }
        }
    }
    for net in [&n1, &n2] {
        for (w, _) in &net.layers {
            terms.extend(w.iter().flatten().map(|v| cfg.lambda / 2.0 * v * v));
        }
    }
    terms
}

/// Smallest distance of any non-smooth point's argument from its kink.
pub fn kink_margin(cfg: &TrainConfig, inst: &Instance, channels: usize) -> f64 {
    let (n1, n2) = (
        NaiveNet::from_flat(&inst.model.net1),
        NaiveNet::from_flat(&inst.model.net2),
    );
    let d = cfg.latent;
    let mut margin = f64::INFINITY;
    for ((img, inv), (v, &sigma)) in inst
        .frames
        .iter()
        .zip(&inst.invariant)
        .zip(inst.vars.iter().zip(&inst.sigmas))
    {
        let u1 = &v.values[..d];
        let u2 = &v.values[d..2 * d];
        let c = &v.values[2 * d..];
        for z in n1
            .pre_activations(u1)
            .into_iter()
            .chain(n2.pre_activations(u2))
        {
            margin = margin.min(z.abs());
        }
        let b = n1.forward(u1);
        let b_inv = n2.forward(u2);
        for p in 0..inv.len() {
            let s_inv = inv[p] - b_inv[p];
            margin = margin.min(s_inv.abs());
            if cfg.prior == PriorKind::Logistic {
                margin = margin.min((s_inv - sigma).abs());
            }
            for ch in 0..channels {
                let j = p * channels + ch;
                let s = img[j] - b[j];
                margin = margin.min(s.abs()).min(c[j].abs()).min((s - c[j]).abs());
            }
        }
    }
    margin
}

pub fn std_dev(v: &[f64]) -> f64 {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
}

/// Random model, frames and variables of the given size.
pub fn random_instance(
    rng: &mut ChaCha8Rng,
    width: u32,
    height: u32,
    channels: usize,
    n_frames: usize,
    prior: PriorKind,
) -> Instance {
    let cfg = TrainConfig {
        prior,
        seed: rng.random(),
        ..TrainConfig::default()
    };
    let mut model = Numod::new(cfg.clone(), width, height, channels).unwrap();
    for net in [&mut model.net1, &mut model.net2] {
        for w in &mut net.values {
            *w = rng.random_range(-0.8..0.8);
        }
    }
    let m = model.image_len();
    let p = model.pixels();
    let frames: Vec<Vec<f64>> = (0..n_frames)
        .map(|_| (0..m).map(|_| rng.random_range(0.0..1.0)).collect())
        .collect();
    let invariant: Vec<Vec<f64>> = (0..n_frames)
        .map(|_| (0..p).map(|_| rng.random_range(0.0..1.0)).collect())
        .collect();
    let sigmas = invariant.iter().map(|i| std_dev(i)).collect();
    let vars = (0..n_frames)
        .map(|_| {
            let mut v = FrameVariables::zeros(cfg.latent, m);
            for x in &mut v.values {
                *x = rng.random_range(-1.0..1.0);
            }
            v
        })
        .collect();
    Instance {
        model,
        frames,
        invariant,
        sigmas,
        vars,
    }
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Per-pixel loop over the evaluated pixels.
pub fn brute_confusion(pred: &Mask, gt: &Mask, roi: Option<&Mask>) -> (u64, u64, u64, u64) {
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for i in 0..pred.data.len() {
        if let Some(r) = roi {
            if r.data[i] == 0 {
                continue;
            }
        }
        match (pred.data[i] != 0, gt.data[i] != 0) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    (tp, fp, fn_, tn)
}

/// Mean per-frame F over frames with any positive pixel, with per-frame F
/// taken from precision and recall when both exist.
pub fn brute_f_measure(counts: &[(u64, u64, u64, u64)]) -> Option<f64> {
    let per_frame: Vec<f64> = counts.iter().filter_map(|&c| brute_frame_f(c)).collect();
    (!per_frame.is_empty()).then(|| per_frame.iter().sum::<f64>() / per_frame.len() as f64)
}

pub fn brute_frame_f((tp, fp, fn_, _): (u64, u64, u64, u64)) -> Option<f64> {
    if tp + fp + fn_ == 0 {
        return None;
    }
    if tp == 0 {
        return Some(0.0);
    }
    let p = tp as f64 / (tp + fp) as f64;
    let r = tp as f64 / (tp + fn_) as f64;
    Some(2.0 * p * r / (p + r))
}

pub fn random_mask(rng: &mut ChaCha8Rng, width: u32, height: u32, density: f64) -> Mask {
    let mut m = Mask::zeros(width, height);
    for v in &mut m.data {
        *v = rng.random_bool(density) as u8;
    }
    m
}

pub fn score_tuple(s: &FrameScore) -> (u64, u64, u64, u64) {
    (s.tp, s.fp, s.fn_, s.tn)
}

const H: f64 = 1e-5;
const MARGIN: f64 = 1e-3;

pub fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < 1e-6 {
        (a - b).abs()
    } else {
        (a - b).abs() / scale
    }
}

/// Worst relative error of analytic against central-difference gradients
/// over every network weight and frame variable.
pub fn worst_gradient_error(seed: u64, prior: PriorKind) -> f64 {
    let mut rng = seeded(seed);
    let inst = loop {
        let (w, h, ch) =
            [(4, 4, 3), (3, 2, 3), (4, 3, 1), (2, 2, 3), (6, 8, 1)][rng.random_range(0..5)];
        let inst = random_instance(&mut rng, w, h, ch, 2, prior);
        if kink_margin(&inst.model.config, &inst, ch) > MARGIN {
            break inst;
        }
    };
    let model = &inst.model;
    let cfg = &model.config;
    let ch = model.channels;
    let inputs = inst.inputs();
    let (terms, g1, g2, gv) = model.objective_gradients(&inputs, &inst.vars).unwrap();
    let f0 = naive_objective(cfg, &model.net1, &model.net2, ch, &inst, &inst.vars);
    assert!(
        (terms.total() - f0).abs() < 1e-9 * f0.max(1.0),
        "{} vs {f0}",
        terms.total()
    );

    let mut worst: f64 = 0.0;
    let terms_at = |n1: &GfcnParams, n2: &GfcnParams, vars: &[FrameVariables]| {
        naive_objective_terms(cfg, n1, n2, ch, &inst, vars)
    };
    let central = |plus: Vec<f64>, minus: Vec<f64>| -> f64 {
        plus.iter().zip(&minus).map(|(a, b)| a - b).sum::<f64>() / (2.0 * H)
    };
    for which in 0..2 {
        let analytic = if which == 0 { &g1 } else { &g2 };
        for k in 0..analytic.values.len() {
            let (mut p1, mut p2) = (model.net1.clone(), model.net2.clone());
            let (mut m1, mut m2) = (model.net1.clone(), model.net2.clone());
            if which == 0 {
                p1.values[k] += H;
                m1.values[k] -= H;
            } else {
                p2.values[k] += H;
                m2.values[k] -= H;
            }
            let fd = central(
                terms_at(&p1, &p2, &inst.vars),
                terms_at(&m1, &m2, &inst.vars),
            );
            worst = worst.max(rel_err(analytic.values[k], fd));
        }
    }
    for (i, g) in gv.iter().enumerate() {
        for (k, &gk) in g.iter().enumerate() {
            let mut plus = inst.vars.clone();
            let mut minus = inst.vars.clone();
            plus[i].values[k] += H;
            minus[i].values[k] -= H;
            let fd = central(
                terms_at(&model.net1, &model.net2, &plus),
                terms_at(&model.net1, &model.net2, &minus),
            );
            worst = worst.max(rel_err(gk, fd));
        }
    }
    worst
}
