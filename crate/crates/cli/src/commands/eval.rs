use std::collections::HashMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use rayon::prelude::*;
use sceneseg_core::audio::wav::read_wav;
use sceneseg_core::manifest::{manifest_base_dir, read_manifests};
use sceneseg_core::metrics::{aggregate_report, evaluate_scene, PredictedSource, ScenePrediction, SceneTruth};
use sceneseg_core::pipeline::NUM_SLOTS;
use sceneseg_core::{ClassVocabulary, EvalReport, SceneManifest};
use serde_json::json;

use crate::records::{read_jsonl, stem_name, SceneDecisions, DECISIONS_FILE};
use crate::{provenance, Global};

#[derive(Args, Debug, Clone)]
pub struct EvalArgs {
    /// Ground-truth scene manifest (JSONL).
    #[arg(long)]
    pub truth: PathBuf,
    /// Directory written by `run`.
    #[arg(long)]
    pub pred: PathBuf,
    /// Report JSON path.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-scene CSV path (default: the report path with a `.csv` extension).
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

fn prediction(pred_dir: &Path, d: &SceneDecisions, vocab: &ClassVocabulary) -> Result<ScenePrediction> {
    if d.slots.len() != NUM_SLOTS {
        bail!("scene {}: {} decision slots, expected 3", d.scene_id, d.slots.len());
    }
    let mut slots = Vec::with_capacity(NUM_SLOTS);
    for (i, s) in d.slots.iter().enumerate() {
        if s.slot != i + 1 {
            bail!("scene {}: slot {} listed at position {}", d.scene_id, s.slot, i + 1);
        }
        if let Some(k) = s.class_id {
            vocab.check(k)?;
        }
        let path = pred_dir.join(&d.scene_id).join(stem_name(s.slot));
        slots.push(PredictedSource {
            waveform: read_wav(&path).with_context(|| format!("scene {}", d.scene_id))?,
            label: s.label(),
        });
    }
    ScenePrediction::new(slots).with_context(|| format!("scene {}", d.scene_id))
}

/// Evaluates every manifest scene against the outputs in `pred_dir`.
pub fn evaluate(
    manifests: &[SceneManifest],
    base_dir: &Path,
    pred_dir: &Path,
    vocab: &ClassVocabulary,
    pool: &rayon::ThreadPool,
) -> Result<EvalReport> {
    let decisions: Vec<SceneDecisions> = read_jsonl(&pred_dir.join(DECISIONS_FILE))?;
    let by_id: HashMap<&str, &SceneDecisions> = decisions.iter().map(|d| (d.scene_id.as_str(), d)).collect();
    if by_id.len() != decisions.len() {
        bail!("{DECISIONS_FILE} lists a scene more than once");
    }
    let rows = pool.install(|| {
        manifests
            .par_iter()
            .map(|m| {
                let d = by_id
                    .get(m.scene_id.as_str())
                    .ok_or_else(|| anyhow!("scene {}: no predictions in {}", m.scene_id, pred_dir.display()))?;
                let scene = m.load(base_dir)?;
                let truth = SceneTruth::from_scene(&scene)?;
                let pred = prediction(pred_dir, d, vocab)?;
                Ok(evaluate_scene(&m.scene_id, &truth, &pred, &scene.mixture)?)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(aggregate_report(rows)?)
}

pub fn write_report(report: &EvalReport, json_path: &Path, csv_path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    sceneseg_core::io::write_atomic(json_path, text.as_bytes())?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["scene_id", "ca_sdri", "snri", "exact_match", "src_correct_count"])?;
    for r in &report.scenes {
        w.write_record([
            r.scene_id.clone(),
            r.ca_sdri.to_string(),
            r.snri.map(|v| v.to_string()).unwrap_or_default(),
            r.exact_match.to_string(),
            r.src_correct_count().to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| anyhow!("csv: {e}"))?;
    sceneseg_core::io::write_atomic(csv_path, &bytes)?;
    Ok(())
}

pub fn run(global: &Global, args: EvalArgs) -> Result<()> {
    let truth = provenance::resolve(&args.truth)?;
    let pred = provenance::resolve(&args.pred)?;
    let out = provenance::resolve(&args.out)?;
    let csv_path = provenance::resolve(&args.csv.clone().unwrap_or_else(|| args.out.with_extension("csv")))?;
    let manifests = read_manifests(&truth)?;
    let report = evaluate(
        &manifests,
        &manifest_base_dir(&truth),
        &pred,
        &global.vocab,
        &global.pool()?,
    )?;
    write_report(&report, &out, &csv_path)?;
    log::info!(
        "{} scenes: CA-SDRi {:.3} dB, Acc_mix {:.4}, Acc_src {:.4}",
        report.n_scenes,
        report.mean_ca_sdri,
        report.acc_mix,
        report.acc_src
    );
    let dir = out
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    provenance::write(
        &dir,
        global,
        "eval",
        json!({ "truth": truth, "pred": pred, "out": out, "csv": csv_path }),
    )
}
