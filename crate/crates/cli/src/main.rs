//! `numod` command-line driver.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error or bad input path.
//! Commands that write a directory build it next to the target first and
//! move it into place only when everything succeeded.

mod config;
mod eval_cmd;
mod staging;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use numod::invariant::{calibrate_direction, psi_sequence, DEFAULT_ANGLES};
use numod::io::{load_sequence, save_frame, save_image, save_mask};
use numod::pipeline::{decompose_with, run, write_outputs, InputRecord, RunMode};
use numod::synth::{generate, SynthConfig};
use numod::{Checkpoint, NumodError, Sequence};
use serde::Serialize;

use config::{InvariantArgs, Mode, TrainArgs};

#[derive(Debug)]
pub enum CliError {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<NumodError> for CliError {
    fn from(e: NumodError) -> Self {
        match e {
            NumodError::MissingDirectory(_)
            | NumodError::NoMatches { .. }
            | NumodError::BadPattern(_)
            | NumodError::InvalidConfig(_) => CliError::Usage(e.into()),
            e => CliError::Runtime(e.into()),
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Runtime(e.into())
    }
}

#[derive(Parser)]
#[command(
    name = "numod",
    version,
    about = "Moving object detection under illumination changes"
)]
struct Cli {
    /// Worker threads (default: all cores); results do not depend on it
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Write a synthetic sequence with ground truth and an event log
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Number of frames (at most 100)
        #[arg(long, default_value_t = 100)]
        frames: usize,
    },
    /// Write the illumination-invariant image of every frame
    Invariant {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "*.png")]
        pattern: String,
        #[arg(long)]
        out: PathBuf,
        /// Downsample so the longer side is at most this many pixels
        #[arg(long)]
        max_side: Option<u32>,
        #[command(flatten)]
        inv: InvariantArgs,
    },
    /// Fit the model to a sequence and write masks and decompositions
    Train {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "*.png")]
        pattern: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        /// Stream every frame through this trained checkpoint instead of pretraining
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        max_side: Option<u32>,
        #[command(flatten)]
        inv: InvariantArgs,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Fit new frames against a trained checkpoint with the networks frozen
    Decompose {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "*.png")]
        pattern: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        max_side: Option<u32>,
    },
    /// Score predicted masks against ground truth
    Eval(eval_cmd::EvalArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage(anyhow::anyhow!(
                "--threads must be at least 1"
            )));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("cannot start the thread pool")?;
    }
    match cli.command {
        Command::Synth { out, seed, frames } => synth(&out, seed, frames),
        Command::Invariant {
            input,
            pattern,
            out,
            max_side,
            inv,
        } => invariant(&input, &pattern, &out, max_side, &inv),
        Command::Train {
            input,
            pattern,
            out,
            mode,
            checkpoint,
            max_side,
            inv,
            train,
        } => train_cmd(
            &input,
            &pattern,
            &out,
            mode,
            checkpoint.as_deref(),
            max_side,
            &inv,
            &train,
        ),
        Command::Decompose {
            checkpoint,
            input,
            pattern,
            out,
            max_side,
        } => decompose(&checkpoint, &input, &pattern, &out, max_side),
        Command::Eval(args) => eval_cmd::run(&args),
    }
}

fn require_dir(path: &Path, what: &str) -> Result<(), CliError> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(CliError::Usage(anyhow::anyhow!(
            "{what} directory {} does not exist",
            path.display()
        )))
    }
}

#[derive(Serialize)]
struct EventsFile<'a> {
    config: &'a SynthConfig,
    log: &'a numod::synth::EventLog,
}

fn synth(out: &Path, seed: u64, frames: usize) -> Result<(), CliError> {
    let mut cfg = SynthConfig::standard_fixture(seed);
    if frames == 0 || frames > cfg.n_frames {
        return Err(CliError::Usage(anyhow::anyhow!(
            "--frames must lie in 1..={}",
            cfg.n_frames
        )));
    }
    cfg.n_frames = frames;
    cfg.events.retain(|e| e.start < frames);
    for e in &mut cfg.events {
        e.end = e.end.min(frames - 1);
    }
    let (seq, gt, log) = generate(&cfg)?;
    staging::write_dir(out, |dir| {
        std::fs::create_dir_all(dir.join("input"))?;
        std::fs::create_dir_all(dir.join("groundtruth"))?;
        for (i, (f, m)) in seq.frames.iter().zip(&gt.masks).enumerate() {
            save_frame(f, &dir.join("input").join(format!("in{:06}.png", i + 1)))?;
            save_mask(
                m,
                &dir.join("groundtruth").join(format!("gt{:06}.png", i + 1)),
            )?;
        }
        let events = EventsFile {
            config: &cfg,
            log: &log,
        };
        std::fs::write(
            dir.join("events.json"),
            serde_json::to_string_pretty(&events)?,
        )?;
        Ok(())
    })
}

fn load(input: &Path, pattern: &str, max_side: Option<u32>) -> Result<Sequence, CliError> {
    require_dir(input, "input")?;
    Ok(load_sequence(input, pattern, max_side)?)
}

fn resolve_angle(seq: &Sequence, angle: Option<f64>, epsilon: f64) -> Result<f64, CliError> {
    match angle {
        Some(a) => Ok(a),
        None if seq.frames[0].is_rgb() => Ok(calibrate_direction(seq, DEFAULT_ANGLES, epsilon)?),
        None => Ok(0.0),
    }
}

#[derive(Serialize)]
struct InvariantReport<'a> {
    invariant: &'a numod::InvariantModel,
    frame_ids: &'a [String],
    sigma: Vec<f64>,
}

fn invariant(
    input: &Path,
    pattern: &str,
    out: &Path,
    max_side: Option<u32>,
    args: &InvariantArgs,
) -> Result<(), CliError> {
    let mut settings = config::from_file(None)?;
    args.apply(&mut settings);
    let seq = load(input, pattern, max_side)?;
    let mut model = settings.invariant.clone();
    model.theta = resolve_angle(&seq, settings.angle, model.epsilon_log)?;
    model.validate()?;
    let frames = psi_sequence(&seq, &model)?;
    staging::write_dir(out, |dir| {
        for (id, f) in seq.frame_ids.iter().zip(&frames) {
            save_image(
                &f.data,
                f.width,
                f.height,
                1,
                false,
                &dir.join(format!("{id}.png")),
            )?;
        }
        let report = InvariantReport {
            invariant: &model,
            frame_ids: &seq.frame_ids,
            sigma: frames.iter().map(|f| f.std_dev()).collect(),
        };
        std::fs::write(
            dir.join("invariant.json"),
            serde_json::to_string_pretty(&report)?,
        )?;
        Ok(())
    })
}

#[allow(clippy::too_many_arguments)]
fn train_cmd(
    input: &Path,
    pattern: &str,
    out: &Path,
    mode: Option<Mode>,
    checkpoint: Option<&Path>,
    max_side: Option<u32>,
    inv: &InvariantArgs,
    flags: &TrainArgs,
) -> Result<(), CliError> {
    let mut settings = config::from_file(flags.config.as_deref())?;
    flags.apply(&mut settings.train);
    inv.apply(&mut settings);
    if let Some(m) = mode {
        settings.mode = m;
    }
    if max_side.is_some() {
        settings.max_side = max_side;
    }
    settings.train.validate()?;
    if let Some(ck) = checkpoint {
        if settings.mode != Mode::Online {
            return Err(CliError::Usage(anyhow::anyhow!(
                "--checkpoint is only used with --mode online"
            )));
        }
        return decompose(ck, input, pattern, out, settings.max_side);
    }
    let seq = load(input, pattern, settings.max_side)?;
    let mut model = settings.invariant.clone();
    model.theta = resolve_angle(&seq, settings.angle, model.epsilon_log)?;
    model.validate()?;
    let run_mode = match settings.mode {
        Mode::Batch => RunMode::Batch,
        Mode::Online => RunMode::Online,
    };
    let mut result = run(&seq, &model, &settings.train, run_mode)?;
    result.manifest.input = Some(InputRecord {
        dir: input.display().to_string(),
        pattern: pattern.into(),
        max_side: settings.max_side,
    });
    staging::write_dir(out, |dir| Ok(write_outputs(dir, &result)?))
}

fn decompose(
    checkpoint: &Path,
    input: &Path,
    pattern: &str,
    out: &Path,
    max_side: Option<u32>,
) -> Result<(), CliError> {
    if !checkpoint.is_file() {
        return Err(CliError::Usage(anyhow::anyhow!(
            "checkpoint {} does not exist",
            checkpoint.display()
        )));
    }
    let ck = Checkpoint::load(checkpoint)
        .with_context(|| format!("cannot read checkpoint {}", checkpoint.display()))?;
    let seq = load(input, pattern, max_side)?;
    let mut result = decompose_with(&seq, &ck)?;
    result.manifest.input = Some(InputRecord {
        dir: input.display().to_string(),
        pattern: pattern.into(),
        max_side,
    });
    staging::write_dir(out, |dir| Ok(write_outputs(dir, &result)?))
}
