//! `numod eval`: per-frame confusion counts and the sequence F-measure.
//!
//! Prediction and ground-truth files are paired by frame key: the file stem
//! with leading non-digits removed, so `in000012.png`, `gt000012.png` and
//! `000012.png` all pair up.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::anyhow;
use clap::Args;
use numod::io::{load_masks, MaskOptions};
use numod::{confusion, f_measure_sequence, FrameScore};
use serde::Serialize;

use crate::{require_dir, staging, CliError};

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Directory of predicted masks
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long, default_value = "*.png")]
    pub pred_pattern: String,
    /// Directory of ground-truth masks
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long, default_value = "*.png")]
    pub gt_pattern: String,
    #[arg(long)]
    pub out: PathBuf,
    /// Score CDnet unknown (170) and outside-ROI (85) pixels as background
    #[arg(long)]
    pub keep_unknown: bool,
    #[arg(long)]
    pub max_side: Option<u32>,
}

pub fn frame_key(id: &str) -> &str {
    let k = id.trim_start_matches(|c: char| !c.is_ascii_digit());
    if k.is_empty() {
        id
    } else {
        k
    }
}

#[derive(Serialize)]
struct Row<'a> {
    frame_id: &'a str,
    tp: u64,
    fp: u64,
    #[serde(rename = "fn")]
    fn_: u64,
    tn: u64,
    precision: Option<f64>,
    recall: Option<f64>,
    f_measure: Option<f64>,
}

#[derive(Serialize)]
struct Summary {
    f_measure: f64,
    frames: usize,
    evaluated: usize,
    skipped: usize,
}

fn keyed(ids: &[String], what: &str) -> Result<BTreeMap<String, usize>, CliError> {
    let mut map = BTreeMap::new();
    for (i, id) in ids.iter().enumerate() {
        if map.insert(frame_key(id).to_owned(), i).is_some() {
            return Err(CliError::Usage(anyhow!(
                "{what} has two files with frame key {}",
                frame_key(id)
            )));
        }
    }
    Ok(map)
}

fn listed(keys: &[&String]) -> String {
    const SHOWN: usize = 10;
    let mut s = keys
        .iter()
        .take(SHOWN)
        .map(|k| k.as_str())
        .collect::<Vec<_>>()
        .join(", ");
    if keys.len() > SHOWN {
        s.push_str(&format!(" and {} more", keys.len() - SHOWN));
    }
    s
}

pub fn run(args: &EvalArgs) -> Result<(), CliError> {
    require_dir(&args.pred, "prediction")?;
    require_dir(&args.gt, "ground-truth")?;
    let plain = MaskOptions {
        max_side: args.max_side,
        exclude_unknown: false,
    };
    let pred = load_masks(&args.pred, &args.pred_pattern, &plain)?;
    let gt = load_masks(
        &args.gt,
        &args.gt_pattern,
        &MaskOptions {
            exclude_unknown: !args.keep_unknown,
            ..plain
        },
    )?;
    let pred_keys = keyed(&pred.frame_ids, "prediction")?;
    let gt_keys = keyed(&gt.frame_ids, "ground truth")?;
    let only_pred: Vec<&String> = pred_keys
        .keys()
        .filter(|k| !gt_keys.contains_key(*k))
        .collect();
    let only_gt: Vec<&String> = gt_keys
        .keys()
        .filter(|k| !pred_keys.contains_key(*k))
        .collect();
    if !only_pred.is_empty() || !only_gt.is_empty() {
        let mut msg = String::from("prediction and ground-truth frames differ");
        if !only_pred.is_empty() {
            msg.push_str(&format!("; only predicted: {}", listed(&only_pred)));
        }
        if !only_gt.is_empty() {
            msg.push_str(&format!("; only in ground truth: {}", listed(&only_gt)));
        }
        return Err(CliError::Usage(anyhow!(msg)));
    }

    let mut scores: Vec<(&str, FrameScore)> = Vec::with_capacity(gt.len());
    for (gi, id) in gt.frame_ids.iter().enumerate() {
        let pi = pred_keys[frame_key(id)];
        let s = confusion(&pred.masks[pi], &gt.masks[gi], gt.roi[gi].as_ref())
            .map_err(|e| CliError::Usage(anyhow!("frame {id}: {e}")))?;
        scores.push((id.as_str(), s));
    }
    let plain_scores: Vec<FrameScore> = scores.iter().map(|(_, s)| *s).collect();
    let f = f_measure_sequence(&plain_scores)?;
    let evaluated = plain_scores
        .iter()
        .filter(|s| s.f_measure().is_some())
        .count();
    let summary = Summary {
        f_measure: f,
        frames: scores.len(),
        evaluated,
        skipped: scores.len() - evaluated,
    };

    staging::write_dir(&args.out, |dir| {
        write_scores(&dir.join("scores.csv"), &scores)?;
        std::fs::write(
            dir.join("summary.json"),
            serde_json::to_string_pretty(&summary)?,
        )?;
        Ok(())
    })?;
    println!(
        "F-measure {f:.6} over {evaluated} of {} frames",
        scores.len()
    );
    Ok(())
}

fn write_scores(path: &Path, scores: &[(&str, FrameScore)]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Runtime(e.into()))?;
    for (id, s) in scores {
        w.serialize(Row {
            frame_id: id,
            tp: s.tp,
            fp: s.fp,
            fn_: s.fn_,
            tn: s.tn,
            precision: s.precision(),
            recall: s.recall(),
            f_measure: s.f_measure(),
        })
        .map_err(|e| CliError::Runtime(e.into()))?;
    }
    w.flush()?;
    Ok(())
}
