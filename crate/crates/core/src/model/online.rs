use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::frame::{evaluate_frame, FrameInput};
use super::threshold::{threshold_online, RunningStats};
use super::{derived_seed, Decomposition, FrameVariables, Numod, SEED_ONLINE};
use crate::error::{NumodError, Result};
use crate::nn::AdamState;

/// Processes incoming frame streams with the networks frozen: only each
/// frame's latents and illumination image are optimised, against the
/// objective without weight decay.
pub struct OnlineDetector<'a> {
    model: &'a Numod,
    last: Option<FrameVariables>,
    stats: RunningStats,
    rng: ChaCha8Rng,
}

#[derive(Debug, Clone)]
pub struct StreamOutput {
    pub variables: Vec<FrameVariables>,
    /// Decompositions with masks thresholded at the running `t`.
    pub decompositions: Vec<Decomposition>,
    pub threshold: f64,
    /// Final online objective of each frame.
    pub losses: Vec<f64>,
}

impl<'a> OnlineDetector<'a> {
    pub fn new(model: &'a Numod) -> Result<Self> {
        if !model.is_pretrained() {
            return Err(NumodError::NotPretrained);
        }
        Ok(Self {
            model,
            last: None,
            stats: RunningStats::default(),
            rng: ChaCha8Rng::seed_from_u64(derived_seed(model.config.seed, SEED_ONLINE)),
        })
    }

    pub fn with_history(mut self, last: Option<FrameVariables>, stats: RunningStats) -> Self {
        self.last = last;
        self.stats = stats;
        self
    }

    pub fn stats(&self) -> RunningStats {
        self.stats
    }

    pub fn last_variables(&self) -> Option<&FrameVariables> {
        self.last.as_ref()
    }

    fn initial_variables(&mut self) -> FrameVariables {
        let cfg = &self.model.config;
        match &self.last {
            Some(prev) => FrameVariables::warm_start(prev, self.model.image_len()),
            None => FrameVariables::random(
                cfg.latent,
                self.model.image_len(),
                cfg.latent_init_std,
                &mut self.rng,
            ),
        }
    }

    fn fit_frame(
        &self,
        input: &FrameInput<'_>,
        mut vars: FrameVariables,
    ) -> Result<(FrameVariables, f64)> {
        let mut adam = AdamState::new(vars.values.len(), self.model.config.lr);
        for _ in 0..self.model.config.online_iterations {
            let (_, g) = evaluate_frame(self.model, input, &vars, None, true)?;
            adam.step(&mut vars.values, &g.expect("requested").vars)?;
        }
        let (terms, _) = evaluate_frame(self.model, input, &vars, None, false)?;
        let loss = terms.online_total();
        if !loss.is_finite() {
            return Err(NumodError::NonFiniteLoss {
                epoch: 0,
                detail: "online frame objective is not finite".into(),
            });
        }
        Ok((vars, loss))
    }

    /// Fits one stream of frames and thresholds it.
    pub fn process_stream(&mut self, stream: &[FrameInput<'_>]) -> Result<StreamOutput> {
        if stream.is_empty() {
            return Ok(StreamOutput {
                variables: Vec::new(),
                decompositions: Vec::new(),
                threshold: self.stats.std_dev(),
                losses: Vec::new(),
            });
        }
        let inits: Vec<FrameVariables> = stream.iter().map(|_| self.initial_variables()).collect();
        let fitted: Vec<(FrameVariables, f64)> = stream
            .par_iter()
            .zip(inits)
            .map(|(x, v)| self.fit_frame(x, v))
            .collect::<Result<_>>()?;
        let (variables, losses): (Vec<_>, Vec<_>) = fitted.into_iter().unzip();
        let mut decompositions = self.model.decompose_all(stream, &variables)?;
        let f_list: Vec<&[f64]> = decompositions.iter().map(|d| d.f_img.as_slice()).collect();
        let m = self.model;
        let (masks, threshold) = threshold_online(
            &f_list,
            &mut self.stats,
            m.width,
            m.height,
            m.channels,
            m.config.threshold_factor,
        )?;
        for (d, mask) in decompositions.iter_mut().zip(masks) {
            d.mask = mask;
        }
        self.last = variables.last().cloned();
        Ok(StreamOutput {
            variables,
            decompositions,
            threshold,
            losses,
        })
    }
}
