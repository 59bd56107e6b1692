use std::borrow::Borrow;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::frame::{evaluate_frame, FrameInput};
use super::loss::LossTerms;
use super::online::OnlineDetector;
use super::threshold::{threshold_batch, RunningStats};
use super::{derived_seed, Decomposition, FrameVariables, Numod, TrainConfig};
use super::{SEED_LATENTS, SEED_SHUFFLE};
use crate::error::{NumodError, Result};
use crate::invariant::InvariantFrame;
use crate::nn::{AdamState, GfcnParams};
use crate::sequence::{Frame, Sequence};

/// Frames per parallel work unit. Fixed, so the reduction order (and hence
/// every floating-point sum) does not depend on the thread count.
const CHUNK_FRAMES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Data terms summed over the frames seen in the epoch; `reg` at epoch start.
    pub terms: LossTerms,
}

#[derive(Debug, Clone)]
pub struct BatchOutput {
    pub model: Numod,
    pub variables: Vec<FrameVariables>,
    pub decompositions: Vec<Decomposition>,
    pub history: Vec<EpochRecord>,
    pub initial_loss: LossTerms,
    pub final_loss: LossTerms,
    pub sigmas: Vec<f64>,
    pub threshold: f64,
}

#[derive(Debug, Clone)]
pub struct OnlineOutput {
    pub variables: Vec<FrameVariables>,
    pub decompositions: Vec<Decomposition>,
    /// `t` after each stream.
    pub thresholds: Vec<f64>,
    pub stats: RunningStats,
}

pub(crate) struct FrameState {
    pub vars: FrameVariables,
    pub adam: AdamState,
}

struct ChunkResult {
    terms: LossTerms,
    grad1: GfcnParams,
    grad2: GfcnParams,
    var_grads: Vec<Vec<f64>>,
}

pub(crate) fn frame_inputs<'a>(
    sequence: &'a Sequence,
    invariant: &'a [InvariantFrame],
) -> Result<(Vec<FrameInput<'a>>, Vec<f64>)> {
    frame_inputs_from(&sequence.frames, invariant)
}

pub(crate) fn frame_inputs_from<'a>(
    frames: &'a [Frame],
    invariant: &'a [InvariantFrame],
) -> Result<(Vec<FrameInput<'a>>, Vec<f64>)> {
    if frames.len() != invariant.len() {
        return Err(NumodError::DimensionMismatch(format!(
            "{} frames but {} invariant frames",
            frames.len(),
            invariant.len()
        )));
    }
    let sigmas: Vec<f64> = invariant.iter().map(InvariantFrame::std_dev).collect();
    let inputs = frames
        .iter()
        .zip(invariant)
        .zip(&sigmas)
        .map(|((f, inv), &sigma)| FrameInput {
            input: &f.data,
            invariant: &inv.data,
            sigma,
        })
        .collect();
    Ok((inputs, sigmas))
}

impl Numod {
    fn zero_grads(&self) -> (GfcnParams, GfcnParams) {
        (
            GfcnParams::zeros(self.net1.latent, self.net1.hidden, self.net1.output),
            GfcnParams::zeros(self.net2.latent, self.net2.hidden, self.net2.output),
        )
    }

    /// Batch objective over `inputs` at the current state.
    pub fn objective(
        &self,
        inputs: &[FrameInput<'_>],
        vars: &[FrameVariables],
    ) -> Result<LossTerms> {
        let per_frame: Vec<LossTerms> = inputs
            .par_iter()
            .zip(vars.par_iter())
            .map(|(x, v)| evaluate_frame(self, x, v, None, false).map(|(t, _)| t))
            .collect::<Result<_>>()?;
        let mut total = LossTerms::default();
        for t in per_frame {
            total += t;
        }
        total.reg = self.loss_reg();
        Ok(total)
    }

    /// Full gradient of the batch objective (data terms plus weight decay)
    /// with respect to both networks and every frame's variables.
    pub fn objective_gradients(
        &self,
        inputs: &[FrameInput<'_>],
        vars: &[FrameVariables],
    ) -> Result<(LossTerms, GfcnParams, GfcnParams, Vec<Vec<f64>>)> {
        let idx: Vec<usize> = (0..inputs.len()).collect();
        let r = self.batch_gradients(&idx, inputs, vars)?;
        let mut terms = r.terms;
        terms.reg = self.loss_reg();
        Ok((terms, r.grad1, r.grad2, r.var_grads))
    }

    fn batch_gradients<V: Borrow<FrameVariables> + Sync>(
        &self,
        batch: &[usize],
        inputs: &[FrameInput<'_>],
        vars: &[V],
    ) -> Result<ChunkResult> {
        let chunks: Vec<ChunkResult> = batch
            .par_chunks(CHUNK_FRAMES)
            .map(|idxs| {
                let (mut g1, mut g2) = self.zero_grads();
                let mut terms = LossTerms::default();
                let mut var_grads = Vec::with_capacity(idxs.len());
                for &i in idxs {
                    let (t, g) = evaluate_frame(
                        self,
                        &inputs[i],
                        vars[i].borrow(),
                        Some((&mut g1, &mut g2)),
                        true,
                    )?;
                    terms += t;
                    var_grads.push(g.expect("requested").vars);
                }
                Ok(ChunkResult {
                    terms,
                    grad1: g1,
                    grad2: g2,
                    var_grads,
                })
            })
            .collect::<Result<_>>()?;
        let mut iter = chunks.into_iter();
        let mut acc = iter
            .next()
            .ok_or_else(|| NumodError::DimensionMismatch("empty minibatch".into()))?;
        for c in iter {
            acc.terms += c.terms;
            acc.grad1.add_assign(&c.grad1);
            acc.grad2.add_assign(&c.grad2);
            acc.var_grads.extend(c.var_grads);
        }
        // weight decay, biases excluded
        let lambda = self.config.lambda;
        for (net, grad) in [(&self.net1, &mut acc.grad1), (&self.net2, &mut acc.grad2)] {
            for r in net.weight_ranges() {
                for (g, w) in grad.values[r.clone()].iter_mut().zip(&net.values[r]) {
                    *g += lambda * w;
                }
            }
        }
        Ok(acc)
    }

    /// Runs `epochs` passes of minibatch Adam over networks and frame variables.
    pub(crate) fn fit(
        &mut self,
        inputs: &[FrameInput<'_>],
        states: &mut [FrameState],
        epochs: usize,
    ) -> Result<Vec<EpochRecord>> {
        let n = inputs.len();
        let mb = self.config.minibatch_for(n);
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(derived_seed(self.config.seed, SEED_SHUFFLE));
        let mut history = Vec::with_capacity(epochs);
        for epoch in 0..epochs {
            if mb < n {
                order.shuffle(&mut rng);
            }
            let mut terms = LossTerms {
                reg: self.loss_reg(),
                ..LossTerms::default()
            };
            for batch in order.chunks(mb) {
                let snapshot: Vec<&FrameVariables> = states.iter().map(|s| &s.vars).collect();
                let r = self.batch_gradients(batch, inputs, &snapshot)?;
                terms.reconst += r.terms.reconst;
                terms.decomp += r.terms.decomp;
                self.adam1.step(&mut self.net1.values, &r.grad1.values)?;
                self.adam2.step(&mut self.net2.values, &r.grad2.values)?;
                for (&i, g) in batch.iter().zip(&r.var_grads) {
                    let s = &mut states[i];
                    s.adam.step(&mut s.vars.values, g)?;
                }
            }
            if !terms.total().is_finite() {
                return Err(NumodError::NonFiniteLoss {
                    epoch,
                    detail: format!(
                        "reconst={} decomp={} reg={} (check learning rate and input data)",
                        terms.reconst, terms.decomp, terms.reg
                    ),
                });
            }
            self.epochs_trained += 1;
            history.push(EpochRecord { epoch, terms });
        }
        Ok(history)
    }

    /// Decomposes every frame at the current state; masks left empty.
    pub fn decompose_all(
        &self,
        inputs: &[FrameInput<'_>],
        vars: &[FrameVariables],
    ) -> Result<Vec<Decomposition>> {
        inputs
            .par_iter()
            .zip(vars.par_iter())
            .map(|(x, v)| self.decompose(x, v))
            .collect()
    }
}

pub(crate) fn init_states(model: &Numod, n: usize) -> Vec<FrameState> {
    let cfg = &model.config;
    let mut rng = ChaCha8Rng::seed_from_u64(derived_seed(cfg.seed, SEED_LATENTS));
    (0..n)
        .map(|_| {
            let vars = FrameVariables::random(
                cfg.latent,
                model.image_len(),
                cfg.latent_init_std,
                &mut rng,
            );
            let adam = AdamState::new(vars.values.len(), cfg.lr);
            FrameState { vars, adam }
        })
        .collect()
}

/// Trains both networks and all frame variables on the whole sequence, then
/// decomposes and thresholds every frame.
pub fn train_batch(
    sequence: &Sequence,
    invariant: &[InvariantFrame],
    config: &TrainConfig,
) -> Result<BatchOutput> {
    let (w, h, ch) = sequence
        .dims()
        .ok_or_else(|| NumodError::InvalidConfig("cannot train on an empty sequence".into()))?;
    let (inputs, sigmas) = frame_inputs(sequence, invariant)?;
    let mut model = Numod::new(config.clone(), w, h, ch)?;
    let mut states = init_states(&model, inputs.len());

    let vars_of = |states: &[FrameState]| -> Vec<FrameVariables> {
        states.iter().map(|s| s.vars.clone()).collect()
    };
    let initial_loss = model.objective(&inputs, &vars_of(&states))?;
    let history = model.fit(&inputs, &mut states, config.epochs)?;
    let variables = vars_of(&states);
    let final_loss = model.objective(&inputs, &variables)?;

    let mut decompositions = model.decompose_all(&inputs, &variables)?;
    let f_list: Vec<&[f64]> = decompositions.iter().map(|d| d.f_img.as_slice()).collect();
    let (masks, threshold) = threshold_batch(&f_list, w, h, ch, config.threshold_factor)?;
    for (d, m) in decompositions.iter_mut().zip(masks) {
        d.mask = m;
    }
    Ok(BatchOutput {
        model,
        variables,
        decompositions,
        history,
        initial_loss,
        final_loss,
        sigmas,
        threshold,
    })
}

/// Streams `frames` through frozen networks in chunks of `online_stream`.
///
/// `last` warm-starts the first stream's latents and `stats` carries the
/// running foreground statistics (pass the pretraining foregrounds' stats to
/// include them in `t`).
pub fn train_online(
    model: &Numod,
    sequence: &Sequence,
    invariant: &[InvariantFrame],
    last: Option<FrameVariables>,
    stats: RunningStats,
) -> Result<OnlineOutput> {
    let (inputs, _) = frame_inputs(sequence, invariant)?;
    let mut detector = OnlineDetector::new(model)?.with_history(last, stats);
    let mut out = OnlineOutput {
        variables: Vec::with_capacity(inputs.len()),
        decompositions: Vec::with_capacity(inputs.len()),
        thresholds: Vec::new(),
        stats,
    };
    for stream in inputs.chunks(model.config.online_stream) {
        let r = detector.process_stream(stream)?;
        out.variables.extend(r.variables);
        out.decompositions.extend(r.decompositions);
        out.thresholds.push(r.threshold);
    }
    out.stats = detector.stats();
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct OnlineRun {
    /// Batch fit of the leading `pretrain_fraction` of the sequence.
    pub pretrain: BatchOutput,
    /// Streamed remainder, in order.
    pub online: OnlineOutput,
    pub net1_checksum_before: u64,
    pub net2_checksum_before: u64,
}

impl OnlineRun {
    pub fn pretrain_len(&self) -> usize {
        self.pretrain.decompositions.len()
    }

    /// All decompositions in frame order.
    pub fn decompositions(&self) -> impl Iterator<Item = &Decomposition> {
        self.pretrain
            .decompositions
            .iter()
            .chain(&self.online.decompositions)
    }

    pub fn weights_unchanged(&self) -> bool {
        self.pretrain.model.net1.checksum() == self.net1_checksum_before
            && self.pretrain.model.net2.checksum() == self.net2_checksum_before
    }
}

/// Pretrains on the leading `pretrain_fraction` of `sequence` and streams the
/// rest through the frozen networks. The running threshold statistics start
/// from the pretraining foregrounds.
pub fn run_online(
    sequence: &Sequence,
    invariant: &[InvariantFrame],
    config: &TrainConfig,
) -> Result<OnlineRun> {
    let n = sequence.len();
    if n < 2 {
        return Err(NumodError::InvalidConfig(
            "online mode needs at least two frames".into(),
        ));
    }
    if invariant.len() != n {
        return Err(NumodError::DimensionMismatch(format!(
            "{n} frames but {} invariant frames",
            invariant.len()
        )));
    }
    let k = config.pretrain_frames(n).min(n - 1);
    let pretrain = train_batch(&sequence.slice(0..k), &invariant[..k], config)?;
    let f_list: Vec<&[f64]> = pretrain
        .decompositions
        .iter()
        .map(|d| d.f_img.as_slice())
        .collect();
    let mut stats = RunningStats::default();
    stats.update(&f_list);
    let net1_checksum_before = pretrain.model.net1.checksum();
    let net2_checksum_before = pretrain.model.net2.checksum();
    let online = train_online(
        &pretrain.model,
        &sequence.slice(k..n),
        &invariant[k..],
        pretrain.variables.last().cloned(),
        stats,
    )?;
    Ok(OnlineRun {
        pretrain,
        online,
        net1_checksum_before,
        net2_checksum_before,
    })
}
