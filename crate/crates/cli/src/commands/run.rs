use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use rayon::prelude::*;
use sceneseg_core::audio::wav::write_wav;
use sceneseg_core::gate::{ThresholdTable, DEFAULT_THRESHOLD};
use sceneseg_core::manifest::{manifest_base_dir, read_manifests};
use sceneseg_core::pipeline::{
    run_pipeline, BackendSpec, GateMode, PipelineConfig, PipelineMode, Recorder, Stage1Labels,
};
use sceneseg_core::{ClassVocabulary, SceneManifest};
use serde_json::json;

use super::ensure_dir;
use crate::records::{stem_name, write_jsonl, SceneDecisions, DECISIONS_FILE};
use crate::{provenance, Global};

#[derive(ValueEnum, Debug, Clone, Copy)]
pub enum GateArg {
    Energy,
    Binary,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
pub enum LabelsArg {
    Separator,
    Classifier,
}

#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    /// Scene manifest (JSONL); stem paths are relative to its directory.
    #[arg(long)]
    pub manifest: PathBuf,
    /// `oracle`, `oracle-degraded:SNR` or `files:DIR`.
    #[arg(long, default_value = "oracle")]
    pub backend: String,
    /// Preset stage/label configuration, e.g. `fss3-cp3` or `fss1-cp1-1`.
    #[arg(long)]
    pub mode: Option<String>,
    /// Extraction rounds after stage 1 (overrides the mode).
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Threshold JSON `{class_name: threshold | null}`.
    #[arg(long)]
    pub thresholds: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub gate: Option<GateArg>,
    #[arg(long, value_enum)]
    pub stage1_labels: Option<LabelsArg>,
    /// Keep the incoming labels in extraction stages.
    #[arg(long)]
    pub reuse_classifier: bool,
    /// Seed for degraded oracle noise.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write every backend output in the file-backend layout here.
    #[arg(long)]
    pub dump: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn load_thresholds(path: Option<&Path>, vocab: &ClassVocabulary) -> Result<ThresholdTable> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let value: serde_json::Value = serde_json::from_str(&text)?;
            Ok(ThresholdTable::from_json(&value, vocab).with_context(|| format!("thresholds {}", p.display()))?)
        }
        None => Ok(ThresholdTable::uniform(vocab.len(), DEFAULT_THRESHOLD)?),
    }
}

impl RunArgs {
    pub fn config(&self, vocab: &ClassVocabulary) -> Result<PipelineConfig> {
        let thresholds = load_thresholds(self.thresholds.as_deref(), vocab)?;
        let mut cfg = match &self.mode {
            Some(m) => PipelineConfig::for_mode(m.parse::<PipelineMode>()?, thresholds),
            None => PipelineConfig {
                thresholds,
                ..PipelineConfig::default()
            },
        };
        if let Some(n) = self.iterations {
            cfg.tse_iterations = n;
        }
        if let Some(g) = self.gate {
            cfg.gate_mode = match g {
                GateArg::Energy => GateMode::Energy,
                GateArg::Binary => GateMode::Binary,
            };
        }
        if let Some(l) = self.stage1_labels {
            cfg.stage1_labels = match l {
                LabelsArg::Separator => Stage1Labels::Separator,
                LabelsArg::Classifier => Stage1Labels::Classifier,
            };
        }
        cfg.classifier_stage_reuse |= self.reuse_classifier;
        cfg.validate()?;
        Ok(cfg)
    }
}

pub struct RunPlan<'a> {
    pub manifests: &'a [SceneManifest],
    pub base_dir: &'a Path,
    pub backend: &'a BackendSpec,
    pub config: &'a PipelineConfig,
    pub seed: u64,
    pub out: &'a Path,
    pub dump: Option<&'a Path>,
}

/// Runs every scene and writes `out/<scene>/fg{1..3}.wav` plus
/// `out/decisions.jsonl` in manifest order.
pub fn run_scenes(
    plan: &RunPlan<'_>,
    vocab: &ClassVocabulary,
    pool: &rayon::ThreadPool,
) -> Result<Vec<SceneDecisions>> {
    ensure_dir(plan.out)?;
    let decisions = pool.install(|| {
        plan.manifests
            .par_iter()
            .map(|m| -> Result<SceneDecisions> {
                let scene = m.load(plan.base_dir)?;
                let backends = plan.backend.build(&scene, vocab.len(), plan.seed)?;
                let result = match plan.dump {
                    Some(dir) => {
                        let rec = Recorder::new(backends);
                        let r = run_pipeline(&scene.mixture, &rec.backends(), plan.config);
                        if r.is_ok() {
                            rec.write(dir, &m.scene_id)?;
                        }
                        r
                    }
                    None => run_pipeline(&scene.mixture, &backends, plan.config),
                }
                .with_context(|| format!("scene {}", m.scene_id))?;
                let scene_dir = plan.out.join(&m.scene_id);
                for (i, slot) in result.final_slots.iter().enumerate() {
                    write_wav(scene_dir.join(stem_name(i + 1)), &slot.stem)?;
                }
                log::debug!("ran {}", m.scene_id);
                Ok(SceneDecisions::from_result(&m.scene_id, &result, vocab))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    write_jsonl(&plan.out.join(DECISIONS_FILE), &decisions)?;
    Ok(decisions)
}

pub fn config_json(cfg: &PipelineConfig, vocab: &ClassVocabulary) -> Result<serde_json::Value> {
    Ok(json!({
        "tse_iterations": cfg.tse_iterations,
        "gate_mode": cfg.gate_mode,
        "stage1_labels": cfg.stage1_labels,
        "classifier_stage_reuse": cfg.classifier_stage_reuse,
        "thresholds": cfg.thresholds.to_json(vocab)?,
    }))
}

pub fn run(global: &Global, args: RunArgs) -> Result<()> {
    let cfg = args.config(&global.vocab)?;
    let backend: BackendSpec = args.backend.parse()?;
    let backend = match backend {
        BackendSpec::Files(dir) => BackendSpec::Files(provenance::resolve(&dir)?),
        other => other,
    };
    let manifest = provenance::resolve(&args.manifest)?;
    let manifests = read_manifests(&manifest)?;
    let base_dir = manifest_base_dir(&manifest);
    let out = provenance::resolve(&args.out)?;
    let dump = args.dump.as_deref().map(provenance::resolve).transpose()?;
    let plan = RunPlan {
        manifests: &manifests,
        base_dir: &base_dir,
        backend: &backend,
        config: &cfg,
        seed: args.seed,
        out: &out,
        dump: dump.as_deref(),
    };
    let decisions = run_scenes(&plan, &global.vocab, &global.pool()?)?;
    log::info!("ran {} scenes into {}", decisions.len(), out.display());
    provenance::write(
        &out,
        global,
        "run",
        json!({
            "manifest": manifest,
            "backend": backend.to_string(),
            "seed": args.seed,
            "mode": args.mode,
            "pipeline": config_json(&cfg, &global.vocab)?,
            "dump": dump,
            "out": out,
        }),
    )
}
