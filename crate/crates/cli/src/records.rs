//! Line formats shared by `run` and `eval`.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use anyhow::{Context, Result};
use sceneseg_core::pipeline::PipelineResult;
use sceneseg_core::{ClassId, ClassVocabulary, Label, LogitVector};
use serde::{Deserialize, Serialize};

pub const DECISIONS_FILE: &str = "decisions.jsonl";

/// Final decision for one slot; `slot` is 1-based and matches `fg{slot}.wav`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub slot: usize,
    pub class_id: Option<ClassId>,
    pub label: Option<String>,
    pub energy: f64,
    pub threshold: Option<f64>,
    pub logits: LogitVector,
}

impl SlotRecord {
    pub fn label(&self) -> Label {
        self.class_id.map_or(Label::Silence, Label::Class)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneDecisions {
    pub scene_id: String,
    pub slots: Vec<SlotRecord>,
    /// 1-based slots silenced because an earlier-ranked slot had the same label.
    pub demoted: Vec<usize>,
    /// Labels per stage and slot, for inspection.
    pub stages: Vec<Vec<Option<ClassId>>>,
}

impl SceneDecisions {
    pub fn from_result(scene_id: &str, r: &PipelineResult, vocab: &ClassVocabulary) -> Self {
        let slots = r
            .final_slots
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let class_id = f.decision.label.class();
                SlotRecord {
                    slot: i + 1,
                    class_id,
                    label: class_id.and_then(|k| vocab.name(k)).map(str::to_string),
                    energy: f.decision.energy,
                    threshold: f.decision.threshold_used,
                    logits: f.decision.logits.clone(),
                }
            })
            .collect();
        Self {
            scene_id: scene_id.to_string(),
            slots,
            demoted: r.demoted.iter().map(|i| i + 1).collect(),
            stages: r
                .stages
                .iter()
                .map(|s| s.decisions().map(|d| d.label.class()).collect())
                .collect(),
        }
    }
}

pub fn stem_name(slot: usize) -> String {
    format!("fg{slot}.wav")
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    sceneseg_core::io::write_atomic_with(path, |w| {
        for r in rows {
            serde_json::to_writer(&mut *w, r)?;
            w.write_all(b"\n").map_err(|e| sceneseg_core::Error::Io {
                path: path.into(),
                source: e,
            })?;
        }
        Ok(())
    })?;
    Ok(())
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let f = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.with_context(|| format!("reading {}", path.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), i + 1))?);
    }
    Ok(out)
}
