//! `run.json`: what was run, with which resolved inputs, by which tool version.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;

use crate::Global;

pub const RUN_FILE: &str = "run.json";

#[derive(Serialize)]
struct Record<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    argv: Vec<String>,
    workers: usize,
    vocab: Option<PathBuf>,
    config: Value,
}

/// Absolute form of `p` without touching the filesystem.
pub fn resolve(p: &Path) -> Result<PathBuf> {
    std::path::absolute(p).with_context(|| format!("resolving {}", p.display()))
}

/// Writes `dir/run.json` atomically.
pub fn write(dir: &Path, global: &Global, command: &str, config: Value) -> Result<()> {
    let record = Record {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command,
        argv: std::env::args().collect(),
        workers: global.workers,
        vocab: global.vocab_path.as_deref().map(resolve).transpose()?,
        config,
    };
    let mut text = serde_json::to_string_pretty(&record)?;
    text.push('\n');
    sceneseg_core::io::write_atomic(&dir.join(RUN_FILE), text.as_bytes())?;
    Ok(())
}
