//! End-to-end runs and their on-disk outputs.
//!
//! Output layout:
//!
//! ```text
//! <out>/masks/<id>.png          binary mask, 0/255
//! <out>/background/<id>.png     B
//! <out>/illumination/<id>.png   C, stored as 0.5 + C/2
//! <out>/foreground/<id>.png     F, stored as 0.5 + F/2
//! <out>/manifest.json
//! <out>/checkpoint.json
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::error::{NumodError, Result};
use crate::invariant::{psi_sequence, InvariantFrame, InvariantModel};
use crate::io::{save_image, save_mask};
use crate::model::{
    run_online, train_batch, Decomposition, DerivedSeeds, EpochRecord, LossTerms, OnlineDetector,
    TrainConfig,
};
use crate::sequence::Sequence;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunMode {
    Batch,
    Online,
    /// Online fitting of new frames against a checkpoint.
    Decompose,
}

/// Where the frames came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputRecord {
    pub dir: String,
    pub pattern: String,
    pub max_side: Option<u32>,
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub mode: RunMode,
    pub input: Option<InputRecord>,
    pub config: TrainConfig,
    pub invariant: InvariantModel,
    pub seeds: DerivedSeeds,
    pub width: u32,
    pub height: u32,
    pub channels: usize,
    pub frame_ids: Vec<String>,
    /// Leading frames fitted in batch before streaming (online mode).
    pub pretrain_frames: Option<usize>,
    pub epochs: Vec<EpochRecord>,
    pub initial_loss: Option<LossTerms>,
    pub final_loss: Option<LossTerms>,
    /// Standard deviation of each frame's invariant image.
    pub sigma: Vec<f64>,
    /// `t` used for the masks: one value in batch mode, then one per stream.
    pub thresholds: Vec<f64>,
    pub net1_checksum: String,
    pub net2_checksum: String,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub manifest: RunManifest,
    pub decompositions: Vec<Decomposition>,
    pub checkpoint: Checkpoint,
}

fn hex(v: u64) -> String {
    format!("{v:016x}")
}

fn sigmas(invariant: &[InvariantFrame]) -> Vec<f64> {
    invariant.iter().map(InvariantFrame::std_dev).collect()
}

fn dims(sequence: &Sequence) -> Result<(u32, u32, usize)> {
    sequence
        .dims()
        .ok_or_else(|| NumodError::InvalidConfig("the sequence has no frames".into()))
}

/// Computes invariant images, trains in `mode` and thresholds every frame.
pub fn run(
    sequence: &Sequence,
    invariant_model: &InvariantModel,
    config: &TrainConfig,
    mode: RunMode,
) -> Result<RunResult> {
    config.validate()?;
    invariant_model.validate()?;
    let (width, height, channels) = dims(sequence)?;
    let invariant = psi_sequence(sequence, invariant_model)?;
    let mut manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").into(),
        mode,
        input: None,
        config: config.clone(),
        invariant: invariant_model.clone(),
        seeds: DerivedSeeds::new(config.seed),
        width,
        height,
        channels,
        frame_ids: sequence.frame_ids.clone(),
        pretrain_frames: None,
        epochs: Vec::new(),
        initial_loss: None,
        final_loss: None,
        sigma: sigmas(&invariant),
        thresholds: Vec::new(),
        net1_checksum: String::new(),
        net2_checksum: String::new(),
    };
    let (decompositions, checkpoint) = match mode {
        RunMode::Batch => {
            let out = train_batch(sequence, &invariant, config)?;
            manifest.epochs = out.history;
            manifest.initial_loss = Some(out.initial_loss);
            manifest.final_loss = Some(out.final_loss);
            manifest.thresholds = vec![out.threshold];
            let f_list: Vec<&[f64]> = out
                .decompositions
                .iter()
                .map(|d| d.f_img.as_slice())
                .collect();
            let mut stats = crate::model::RunningStats::default();
            stats.update(&f_list);
            let ck = Checkpoint::new(
                out.model,
                invariant_model.clone(),
                out.variables.last().cloned(),
                stats,
            );
            (out.decompositions, ck)
        }
        RunMode::Online => {
            let out = run_online(sequence, &invariant, config)?;
            if !out.weights_unchanged() {
                return Err(NumodError::InvalidConfig(
                    "network weights changed while streaming".into(),
                ));
            }
            manifest.pretrain_frames = Some(out.pretrain_len());
            manifest.epochs = out.pretrain.history.clone();
            manifest.initial_loss = Some(out.pretrain.initial_loss);
            manifest.final_loss = Some(out.pretrain.final_loss);
            manifest.thresholds = std::iter::once(out.pretrain.threshold)
                .chain(out.online.thresholds.iter().copied())
                .collect();
            let decompositions = out.decompositions().cloned().collect();
            let ck = Checkpoint::new(
                out.pretrain.model,
                invariant_model.clone(),
                out.online.variables.last().cloned(),
                out.online.stats,
            );
            (decompositions, ck)
        }
        RunMode::Decompose => {
            return Err(NumodError::InvalidConfig(
                "decompose runs need a checkpoint".into(),
            ))
        }
    };
    manifest.net1_checksum = hex(checkpoint.model.net1.checksum());
    manifest.net2_checksum = hex(checkpoint.model.net2.checksum());
    Ok(RunResult {
        manifest,
        decompositions,
        checkpoint,
    })
}

/// Fits new frames against a trained checkpoint with the networks frozen,
/// continuing its latent warm start and threshold statistics.
pub fn decompose_with(sequence: &Sequence, checkpoint: &Checkpoint) -> Result<RunResult> {
    let model = &checkpoint.model;
    let (width, height, channels) = dims(sequence)?;
    if (width, height, channels) != (model.width, model.height, model.channels) {
        return Err(NumodError::DimensionMismatch(format!(
            "frames are {width}x{height}x{channels}, checkpoint expects {}x{}x{}",
            model.width, model.height, model.channels
        )));
    }
    let invariant = psi_sequence(sequence, &checkpoint.invariant)?;
    let sigma = sigmas(&invariant);
    let mut detector = OnlineDetector::new(model)?.with_history(
        checkpoint.last_variables.clone(),
        checkpoint.threshold_stats,
    );
    let inputs: Vec<crate::model::FrameInput<'_>> = sequence
        .frames
        .iter()
        .zip(&invariant)
        .zip(&sigma)
        .map(|((f, inv), &s)| crate::model::FrameInput {
            input: &f.data,
            invariant: &inv.data,
            sigma: s,
        })
        .collect();
    let mut decompositions = Vec::with_capacity(inputs.len());
    let mut thresholds = Vec::new();
    for stream in inputs.chunks(model.config.online_stream) {
        let out = detector.process_stream(stream)?;
        decompositions.extend(out.decompositions);
        thresholds.push(out.threshold);
    }
    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").into(),
        mode: RunMode::Decompose,
        input: None,
        config: model.config.clone(),
        invariant: checkpoint.invariant.clone(),
        seeds: DerivedSeeds::new(model.config.seed),
        width,
        height,
        channels,
        frame_ids: sequence.frame_ids.clone(),
        pretrain_frames: None,
        epochs: Vec::new(),
        initial_loss: None,
        final_loss: None,
        sigma,
        thresholds,
        net1_checksum: hex(model.net1.checksum()),
        net2_checksum: hex(model.net2.checksum()),
    };
    let updated = Checkpoint::new(
        model.clone(),
        checkpoint.invariant.clone(),
        detector.last_variables().cloned(),
        detector.stats(),
    );
    Ok(RunResult {
        manifest,
        decompositions,
        checkpoint: updated,
    })
}

/// Writes masks, decomposition images, the manifest and the checkpoint under `dir`.
pub fn write_outputs(dir: &Path, result: &RunResult) -> Result<()> {
    let m = &result.manifest;
    for sub in ["masks", "background", "illumination", "foreground"] {
        std::fs::create_dir_all(dir.join(sub))?;
    }
    for (id, d) in m.frame_ids.iter().zip(&result.decompositions) {
        let name = format!("{id}.png");
        save_mask(&d.mask, &dir.join("masks").join(&name))?;
        let (w, h, c) = (m.width, m.height, m.channels);
        save_image(
            &d.b_img,
            w,
            h,
            c,
            false,
            &dir.join("background").join(&name),
        )?;
        save_image(
            &d.c_img,
            w,
            h,
            c,
            true,
            &dir.join("illumination").join(&name),
        )?;
        save_image(&d.f_img, w, h, c, true, &dir.join("foreground").join(&name))?;
    }
    std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(m)?)?;
    result.checkpoint.save(&dir.join("checkpoint.json"))?;
    Ok(())
}
