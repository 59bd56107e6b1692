//! Run settings: defaults, then the config file, then flags.
//!
//! The config file holds `key = value` lines (TOML syntax), e.g.
//!
//! ```text
//! # training
//! epochs = 200
//! hidden = [10, 20]
//! prior = "scaled"
//! angle = 0.6
//! ```
//!
//! Keys are the [`TrainConfig`] field names plus `angle`, `wiener_window`,
//! `wiener_noise`, `epsilon_log`, `max_side` and `mode`.

use std::path::Path;

use anyhow::{anyhow, bail, Context};
use clap::{Args, ValueEnum};
use numod::model::{PriorKind, TrainConfig};
use numod::InvariantModel;
use serde::{Deserialize, Serialize};

use crate::CliError;

const EXTRA_KEYS: [&str; 6] = [
    "angle",
    "wiener_window",
    "wiener_noise",
    "epsilon_log",
    "max_side",
    "mode",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Batch,
    Online,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PriorArg {
    Scaled,
    Logistic,
}

/// Model and invariant-image flags shared by `train` and `invariant`.
#[derive(Debug, Clone, Default, Args)]
pub struct InvariantArgs {
    /// Illumination direction in radians, in [0, pi); calibrated from the frames when absent
    #[arg(long)]
    pub angle: Option<f64>,
    /// Wiener window side (odd, >= 3)
    #[arg(long)]
    pub window: Option<usize>,
    /// Wiener noise variance; estimated per frame when absent
    #[arg(long)]
    pub noise: Option<f64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct TrainArgs {
    /// Config file of `key = value` lines
    #[arg(long)]
    pub config: Option<std::path::PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Weight decay
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Latent code size
    #[arg(long)]
    pub latent: Option<usize>,
    /// Frames per minibatch
    #[arg(long)]
    pub minibatch: Option<usize>,
    /// Frames per online stream
    #[arg(long)]
    pub stream: Option<usize>,
    /// Adam iterations per online stream
    #[arg(long)]
    pub online_iterations: Option<usize>,
    /// Fraction of frames used for pretraining in online mode
    #[arg(long)]
    pub pretrain_fraction: Option<f64>,
    /// Masks keep |F| >= factor * t
    #[arg(long)]
    pub threshold_factor: Option<f64>,
    #[arg(long, value_enum)]
    pub prior: Option<PriorArg>,
    /// Residual, in units of sigma, where the scaled prior crosses 0.5
    #[arg(long)]
    pub prior_offset: Option<f64>,
}

/// Fully resolved settings.
#[derive(Debug, Clone)]
pub struct Settings {
    pub train: TrainConfig,
    pub angle: Option<f64>,
    pub invariant: InvariantModel,
    pub max_side: Option<u32>,
    pub mode: Mode,
}

/// Settings from the config file alone (defaults for absent keys).
pub fn from_file(path: Option<&Path>) -> Result<Settings, CliError> {
    let mut settings = Settings {
        train: TrainConfig::default(),
        angle: None,
        invariant: InvariantModel::default(),
        max_side: None,
        mode: Mode::Batch,
    };
    let Some(path) = path else {
        return Ok(settings);
    };
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config file {}", path.display()))
        .map_err(CliError::Usage)?;
    apply_file(&mut settings, &text)
        .with_context(|| format!("invalid config file {}", path.display()))
        .map_err(CliError::Usage)?;
    Ok(settings)
}

fn apply_file(settings: &mut Settings, text: &str) -> anyhow::Result<()> {
    let table: toml::Table = text.parse()?;
    let train_keys = match serde_json::to_value(TrainConfig::default())? {
        serde_json::Value::Object(m) => m.into_iter().map(|(k, _)| k).collect::<Vec<_>>(),
        _ => unreachable!("struct serialises to an object"),
    };
    let mut train = toml::Table::new();
    for (key, value) in table {
        if train_keys.contains(&key) {
            train.insert(key, value);
            continue;
        }
        if !EXTRA_KEYS.contains(&key.as_str()) {
            bail!("unknown key `{key}`");
        }
        match key.as_str() {
            "angle" => settings.angle = Some(number(&key, &value)?),
            "wiener_window" => settings.invariant.wiener_window = count(&key, &value)? as usize,
            "wiener_noise" => settings.invariant.wiener_noise = Some(number(&key, &value)?),
            "epsilon_log" => settings.invariant.epsilon_log = number(&key, &value)?,
            "max_side" => settings.max_side = Some(count(&key, &value)? as u32),
            "mode" => {
                settings.mode = match value.as_str() {
                    Some("batch") => Mode::Batch,
                    Some("online") => Mode::Online,
                    _ => bail!("`mode` must be \"batch\" or \"online\""),
                }
            }
            _ => unreachable!("checked against EXTRA_KEYS"),
        }
    }
    settings.train = toml::Value::Table(train).try_into()?;
    Ok(())
}

fn number(key: &str, v: &toml::Value) -> anyhow::Result<f64> {
    match v {
        toml::Value::Float(f) => Ok(*f),
        toml::Value::Integer(i) => Ok(*i as f64),
        _ => Err(anyhow!("`{key}` must be a number")),
    }
}

fn count(key: &str, v: &toml::Value) -> anyhow::Result<u64> {
    match v {
        toml::Value::Integer(i) if *i >= 0 => Ok(*i as u64),
        _ => Err(anyhow!("`{key}` must be a non-negative integer")),
    }
}

impl TrainArgs {
    pub fn apply(&self, t: &mut TrainConfig) {
        macro_rules! set {
            ($flag:ident => $field:ident) => {
                if let Some(v) = self.$flag {
                    t.$field = v;
                }
            };
        }
        set!(epochs => epochs);
        set!(seed => seed);
        set!(lr => lr);
        set!(lambda => lambda);
        set!(latent => latent);
        set!(stream => online_stream);
        set!(online_iterations => online_iterations);
        set!(pretrain_fraction => pretrain_fraction);
        set!(threshold_factor => threshold_factor);
        set!(prior_offset => prior_offset);
        if let Some(m) = self.minibatch {
            t.minibatch_frames = Some(m);
        }
        if let Some(p) = self.prior {
            t.prior = match p {
                PriorArg::Scaled => PriorKind::Scaled,
                PriorArg::Logistic => PriorKind::Logistic,
            };
        }
    }
}

impl InvariantArgs {
    pub fn apply(&self, s: &mut Settings) {
        if let Some(a) = self.angle {
            s.angle = Some(a);
        }
        if let Some(w) = self.window {
            s.invariant.wiener_window = w;
        }
        if let Some(n) = self.noise {
            s.invariant.wiener_noise = Some(n);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parsed(text: &str) -> anyhow::Result<Settings> {
        let mut s = from_file(None).unwrap();
        apply_file(&mut s, text)?;
        Ok(s)
    }

    #[test]
    fn file_overrides_defaults() {
        let s = parsed(
            "epochs = 12\nhidden = [4, 6]\nprior = \"logistic\"\nangle = 1\nmode = \"online\"\n",
        )
        .unwrap();
        assert_eq!(s.train.epochs, 12);
        assert_eq!(s.train.hidden, [4, 6]);
        assert_eq!(s.train.prior, PriorKind::Logistic);
        assert_eq!(s.train.lr, TrainConfig::default().lr);
        assert_eq!(s.angle, Some(1.0));
        assert_eq!(s.mode, Mode::Online);
    }

    #[test]
    fn flags_override_file() {
        let mut s = parsed("epochs = 12\nseed = 4").unwrap();
        let flags = TrainArgs {
            epochs: Some(3),
            ..TrainArgs::default()
        };
        flags.apply(&mut s.train);
        assert_eq!((s.train.epochs, s.train.seed), (3, 4));
    }

    #[test]
    fn unknown_and_mistyped_keys_fail() {
        assert!(parsed("epoch = 3").is_err());
        assert!(parsed("epochs = \"many\"").is_err());
        assert!(parsed("mode = \"sideways\"").is_err());
        assert!(parsed("max_side = -3").is_err());
    }
}
