use std::path::{Path, PathBuf};

use anyhow::Result;
use clap::Args;
use sceneseg_core::gate::{calibrate_thresholds, CalibrationSample};
use serde_json::json;

use crate::records::read_jsonl;
use crate::{provenance, Global};

#[derive(Args, Debug, Clone)]
pub struct CalibrateArgs {
    /// JSONL of `{"logits": [...], "silence": bool}`.
    #[arg(long)]
    pub scores: PathBuf,
    /// Threshold JSON `{class_name: threshold}`.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(global: &Global, args: CalibrateArgs) -> Result<()> {
    let scores = provenance::resolve(&args.scores)?;
    let out = provenance::resolve(&args.out)?;
    let samples: Vec<CalibrationSample> = read_jsonl(&scores)?;
    let cal = calibrate_thresholds(&samples, global.vocab.len())?;
    let mut text = serde_json::to_string_pretty(&cal.table.to_json(&global.vocab)?)?;
    text.push('\n');
    sceneseg_core::io::write_atomic(&out, text.as_bytes())?;
    let per_class: serde_json::Map<String, serde_json::Value> = global
        .vocab
        .names()
        .iter()
        .zip(&cal.classes)
        .map(|(n, c)| Ok((n.clone(), serde_json::to_value(c)?)))
        .collect::<Result<_>>()?;
    log::info!(
        "calibrated {} classes from {} samples",
        cal.classes.len(),
        samples.len()
    );
    let dir = out
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    provenance::write(
        &dir,
        global,
        "calibrate",
        json!({
            "scores": scores,
            "out": out,
            "samples": samples.len(),
            "global": cal.global,
            "classes": per_class,
        }),
    )
}
