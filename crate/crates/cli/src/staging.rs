use std::path::{Path, PathBuf};

use anyhow::Context;

use crate::CliError;

fn staging_path(target: &Path) -> PathBuf {
    let name = target
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    let parent = target
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    parent.join(format!(".{name}.partial-{}", std::process::id()))
}

/// Runs `fill` on a fresh sibling directory of `target`, then moves its
/// entries into `target` (replacing same-named ones). On failure nothing
/// is left behind.
pub fn write_dir(
    target: &Path,
    fill: impl FnOnce(&Path) -> Result<(), CliError>,
) -> Result<(), CliError> {
    if target.exists() && !target.is_dir() {
        return Err(CliError::Usage(anyhow::anyhow!(
            "output {} exists and is not a directory",
            target.display()
        )));
    }
    let parent = target
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    if !parent.is_dir() {
        return Err(CliError::Usage(anyhow::anyhow!(
            "parent of output {} does not exist",
            target.display()
        )));
    }
    let stage = staging_path(target);
    std::fs::create_dir_all(&stage)
        .with_context(|| format!("cannot create {}", stage.display()))?;
    let result = fill(&stage).and_then(|()| publish(&stage, target));
    if stage.exists() {
        let _ = std::fs::remove_dir_all(&stage);
    }
    result
}

fn publish(stage: &Path, target: &Path) -> Result<(), CliError> {
    if !target.exists() {
        std::fs::rename(stage, target)
            .with_context(|| format!("cannot move outputs to {}", target.display()))?;
        return Ok(());
    }
    for entry in std::fs::read_dir(stage)? {
        let entry = entry?;
        let dest = target.join(entry.file_name());
        if dest.is_dir() {
            std::fs::remove_dir_all(&dest)?;
        } else if dest.exists() {
            std::fs::remove_file(&dest)?;
        }
        std::fs::rename(entry.path(), &dest)
            .with_context(|| format!("cannot move outputs to {}", dest.display()))?;
    }
    Ok(())
}
