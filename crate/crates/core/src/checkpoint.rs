//! Versioned JSON checkpoint.
//!
//! Fields (version 1):
//!
//! * `format_version`: `1`
//! * `model.config`: training configuration
//! * `model.width`, `model.height`, `model.channels`: frame dims
//! * `model.net1`, `model.net2`: `latent`, `hidden` (two sizes), `output`,
//!   `values` (flat `W1 | b1 | W2 | b2 | W3 | b3`, weights row-major)
//! * `model.adam1`, `model.adam2`: `step_count`, `first_moment`,
//!   `second_moment`, `lr`, `beta1`, `beta2`, `eps`
//! * `model.epochs_trained`
//! * `invariant`: invariant-image settings
//! * `last_variables`: latents of the most recent frame (warm start), optional
//! * `threshold_stats`: running foreground `count`, `mean`, `m2`

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{NumodError, Result};
use crate::invariant::InvariantModel;
use crate::model::{FrameVariables, Numod, RunningStats};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub model: Numod,
    pub invariant: InvariantModel,
    pub last_variables: Option<FrameVariables>,
    pub threshold_stats: RunningStats,
}

impl Checkpoint {
    pub fn new(
        model: Numod,
        invariant: InvariantModel,
        last_variables: Option<FrameVariables>,
        threshold_stats: RunningStats,
    ) -> Self {
        Self {
            format_version: CHECKPOINT_VERSION,
            model,
            invariant,
            last_variables,
            threshold_stats,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Version {
            format_version: u32,
        }
        let v: Version = serde_json::from_str(s)?;
        if v.format_version != CHECKPOINT_VERSION {
            return Err(NumodError::CheckpointVersion {
                found: v.format_version,
                expected: CHECKPOINT_VERSION,
            });
        }
        Ok(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
