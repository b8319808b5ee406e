use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use rayon::prelude::*;
use sceneseg_core::manifest::write_manifests;
use sceneseg_core::mixer::{scene_id, synthesize_scene, SceneSpec, SourceBank};
use sceneseg_core::{ClassVocabulary, SceneManifest};
use serde_json::json;

use super::{ensure_dir, load_bank, parse_count};
use crate::{provenance, Global};

pub const MANIFEST_FILE: &str = "scenes.jsonl";

#[derive(Args, Debug, Clone)]
pub struct MixArgs {
    /// Output directory for stems, mixtures and `scenes.jsonl`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub count: usize,
    /// Base seed; scene `i` uses a seed derived from it and `i`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Scene spec JSON; explicit flags override its fields.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Seconds per scene.
    #[arg(long)]
    pub duration: Option<f64>,
    #[arg(long)]
    pub sample_rate: Option<u32>,
    /// Foreground count, `N` or `LO-HI`.
    #[arg(long)]
    pub n_foreground: Option<String>,
    /// Interference count, `N` or `LO-HI`.
    #[arg(long)]
    pub n_interference: Option<String>,
    /// Source bank JSON; without it a procedural bank is generated.
    #[arg(long, env = "SCENESEG_BANK")]
    pub bank: Option<PathBuf>,
}

impl MixArgs {
    pub fn scene_spec(&self) -> Result<SceneSpec> {
        let mut spec = match &self.spec {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
            }
            None => SceneSpec::default(),
        };
        if let Some(s) = self.seed {
            spec.seed = s;
        }
        if let Some(d) = self.duration {
            spec.duration = d;
        }
        if let Some(sr) = self.sample_rate {
            spec.sample_rate = sr;
        }
        if let Some(n) = &self.n_foreground {
            spec.n_foreground = parse_count(n)?;
        }
        if let Some(n) = &self.n_interference {
            spec.n_interference = parse_count(n)?;
        }
        spec.validate()?;
        Ok(spec)
    }
}

/// Synthesizes `count` scenes into `out` and returns their manifests.
pub fn mix_into(
    out: &Path,
    spec: &SceneSpec,
    bank: &SourceBank,
    vocab: &ClassVocabulary,
    count: usize,
    pool: &rayon::ThreadPool,
) -> Result<Vec<SceneManifest>> {
    ensure_dir(out)?;
    let manifests = pool.install(|| {
        (0..count)
            .into_par_iter()
            .map(|i| -> Result<SceneManifest> {
                let scene = synthesize_scene(&spec.for_index(i as u64), bank, vocab, &scene_id(i))?;
                scene.write(out)?;
                log::debug!("mixed {}", scene.manifest.scene_id);
                Ok(scene.manifest)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let path = out.join(MANIFEST_FILE);
    sceneseg_core::io::write_atomic_with(&path, |w| write_manifests(w, &manifests))?;
    Ok(manifests)
}

pub fn run(global: &Global, args: MixArgs) -> Result<()> {
    let spec = args.scene_spec()?;
    let bank = load_bank(args.bank.as_deref(), &spec, &global.vocab)?;
    let out = provenance::resolve(&args.out)?;
    let manifests = mix_into(&out, &spec, &bank, &global.vocab, args.count, &global.pool()?)?;
    log::info!("wrote {} scenes to {}", manifests.len(), out.display());
    provenance::write(
        &out,
        global,
        "mix",
        json!({
            "out": out,
            "count": args.count,
            "spec": spec,
            "bank": args.bank.as_deref().map(provenance::resolve).transpose()?,
        }),
    )
}
