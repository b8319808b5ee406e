pub mod calibrate;
pub mod demo;
pub mod eval;
pub mod losses;
pub mod mix;
pub mod run;

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use sceneseg_core::mixer::{CountSpec, SceneSpec, SourceBank};
use sceneseg_core::seed::derive_seed;
use sceneseg_core::ClassVocabulary;

/// Stream index for the procedural bank's seed, kept apart from scene seeds.
const BANK_STREAM: u64 = 0xBA4C;
const BANK_ENTRIES_PER_CLASS: usize = 2;

/// `"2"` or `"1-3"`.
pub fn parse_count(s: &str) -> Result<CountSpec> {
    let parse = |t: &str| t.trim().parse::<usize>().with_context(|| format!("bad count {s:?}"));
    Ok(match s.split_once('-') {
        Some((lo, hi)) => CountSpec::Range([parse(lo)?, parse(hi)?]),
        None => CountSpec::Fixed(parse(s)?),
    })
}

/// The bank at `path`, or a procedural bank matched to `spec`.
pub fn load_bank(path: Option<&Path>, spec: &SceneSpec, vocab: &ClassVocabulary) -> Result<SourceBank> {
    match path {
        Some(p) => {
            log::info!("loading source bank {}", p.display());
            Ok(SourceBank::load(p, vocab).with_context(|| format!("loading bank {}", p.display()))?)
        }
        None => Ok(SourceBank::procedural(
            vocab.len(),
            spec.sample_rate,
            spec.duration,
            BANK_ENTRIES_PER_CLASS,
            derive_seed(spec.seed, BANK_STREAM),
        )?),
    }
}

/// Creates `dir`, refusing to reuse a path that is an existing file.
pub fn ensure_dir(dir: &Path) -> Result<PathBuf> {
    if dir.is_file() {
        bail!("{} exists and is not a directory", dir.display());
    }
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir.to_path_buf())
}
