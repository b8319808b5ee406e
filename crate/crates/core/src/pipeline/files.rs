//! Replay of precomputed backend outputs, and the recorder that writes them.
//!
//! Layout per scene, under `DIR/<scene_id>/`:
//!
//! ```text
//! fg1.wav fg2.wav fg3.wav       separated foreground stems
//! intf1.wav intf2.wav noise.wav separated interference and noise stems
//! logits.json                   {"separator": [l1, l2, l3],
//!                                "activity": [p1, p2, p3],
//!                                "classifier": [[stage 1 slot logits or null] ...]}
//! tse/stage{t}_fg{j}.wav        optional extractor output, stage t >= 2, slot j
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{
    Backends, ClassifierBackend, ClueSet, ExtractorBackend, Separation, SeparatorBackend, SlotContext, NUM_SLOTS,
};
use crate::audio::wav::{read_wav, write_wav};
use crate::audio::AudioBuffer;
use crate::error::{Error, Result};
use crate::losses::LogitVector;
use crate::manifest::MAX_INTERFERENCE;

pub const LOGITS_FILE: &str = "logits.json";
const TSE_DIR: &str = "tse";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LogitsFile {
    separator: Vec<LogitVector>,
    activity: Vec<f64>,
    #[serde(default)]
    classifier: Vec<Vec<Option<LogitVector>>>,
}

fn stem_names() -> Vec<String> {
    (1..=NUM_SLOTS)
        .map(|j| format!("fg{j}.wav"))
        .chain((1..=MAX_INTERFERENCE).map(|j| format!("intf{j}.wav")))
        .chain(["noise.wav".to_string()])
        .collect()
}

fn tse_name(ctx: SlotContext) -> String {
    format!("stage{}_fg{}.wav", ctx.stage, ctx.slot + 1)
}

fn parse_tse_name(name: &str) -> Option<SlotContext> {
    let rest = name.strip_prefix("stage")?.strip_suffix(".wav")?;
    let (stage, slot) = rest.split_once("_fg")?;
    let stage: usize = stage.parse().ok()?;
    let slot: usize = slot.parse().ok()?;
    (stage >= 2 && (1..=NUM_SLOTS).contains(&slot)).then_some(SlotContext { stage, slot: slot - 1 })
}

fn list_dir(dir: &Path) -> Result<Vec<(String, bool)>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let is_dir = entry.file_type().map_err(|e| Error::io(entry.path(), e))?.is_dir();
        out.push((entry.file_name().to_string_lossy().into_owned(), is_dir));
    }
    out.sort();
    Ok(out)
}

/// Separator, classifier and extractor replaying one scene's stored outputs.
#[derive(Debug, Clone)]
pub struct FileBackend {
    scene_id: String,
    separation: Separation,
    classifier: Vec<Vec<Option<LogitVector>>>,
    extracted: BTreeMap<SlotContext, AudioBuffer>,
}

impl FileBackend {
    /// Loads and validates `dir/<scene_id>/`. Every stem must be at
    /// `sample_rate`; missing or unexpected files are errors.
    pub fn open(dir: &Path, scene_id: &str, sample_rate: u32) -> Result<Self> {
        Self::load(&dir.join(scene_id), sample_rate)
            .map_err(|e| match e {
                Error::Scene { .. } => e,
                other => Error::scene(scene_id, other.to_string()),
            })
            .map(|mut b| {
                b.scene_id = scene_id.to_string();
                b
            })
    }

    fn load(root: &Path, sample_rate: u32) -> Result<Self> {
        if !root.is_dir() {
            return Err(Error::Backend(format!("missing directory {}", root.display())));
        }
        let names = stem_names();
        let mut expected: BTreeSet<String> = names.iter().cloned().collect();
        expected.insert(LOGITS_FILE.into());
        let present = list_dir(root)?;
        let extra: Vec<&str> = present
            .iter()
            .filter(|(n, is_dir)| !(expected.contains(n) && !is_dir) && !(n == TSE_DIR && *is_dir))
            .map(|(n, _)| n.as_str())
            .collect();
        if !extra.is_empty() {
            return Err(Error::Backend(format!("unexpected files: {}", extra.join(", "))));
        }
        let missing: Vec<&String> = expected
            .iter()
            .filter(|n| !present.iter().any(|(p, _)| p == *n))
            .collect();
        if !missing.is_empty() {
            let list: Vec<&str> = missing.iter().map(|s| s.as_str()).collect();
            return Err(Error::Backend(format!("missing files: {}", list.join(", "))));
        }

        let read = |path: PathBuf| -> Result<AudioBuffer> {
            let buf = read_wav(&path)?;
            if buf.sample_rate() != sample_rate {
                return Err(Error::SampleRateMismatch {
                    expected: sample_rate,
                    found: buf.sample_rate(),
                });
            }
            Ok(buf)
        };
        let mut stems = names.iter().map(|n| read(root.join(n))).collect::<Result<Vec<_>>>()?;
        let noise = stems.pop().expect("noise");
        let interference = stems.split_off(NUM_SLOTS);
        let logits_path = root.join(LOGITS_FILE);
        let text = std::fs::read_to_string(&logits_path).map_err(|e| Error::io(&logits_path, e))?;
        let logits: LogitsFile = serde_json::from_str(&text)?;
        if logits.separator.len() != NUM_SLOTS || logits.activity.len() != NUM_SLOTS {
            return Err(Error::Backend(format!(
                "{LOGITS_FILE} needs 3 separator logit vectors and 3 activities"
            )));
        }
        if logits.classifier.iter().any(|stage| stage.len() != NUM_SLOTS) {
            return Err(Error::Backend(format!(
                "{LOGITS_FILE}: every classifier stage needs 3 slots"
            )));
        }

        let mut extracted = BTreeMap::new();
        let tse = root.join(TSE_DIR);
        if tse.is_dir() {
            for (name, is_dir) in list_dir(&tse)? {
                let ctx = parse_tse_name(&name)
                    .filter(|_| !is_dir)
                    .ok_or_else(|| Error::Backend(format!("unexpected file {TSE_DIR}/{name}")))?;
                extracted.insert(ctx, read(tse.join(&name))?);
            }
        }
        Ok(Self {
            scene_id: String::new(),
            separation: Separation {
                foreground: stems,
                interference,
                noise,
                foreground_logits: logits.separator,
                foreground_activity: logits.activity,
            },
            classifier: logits.classifier,
            extracted,
        })
    }

    pub fn scene_id(&self) -> &str {
        &self.scene_id
    }

    fn missing(&self, what: String) -> Error {
        Error::scene(&self.scene_id, format!("no stored {what}"))
    }
}

impl SeparatorBackend for FileBackend {
    fn separate(&self, mixture: &AudioBuffer) -> Result<Separation> {
        for stem in self.separation.foreground.iter().chain(&self.separation.interference) {
            mixture
                .check_compatible(stem)
                .map_err(|e| Error::scene(&self.scene_id, e.to_string()))?;
        }
        Ok(self.separation.clone())
    }
}

impl ClassifierBackend for FileBackend {
    fn classify(&self, _waveform: &AudioBuffer, ctx: SlotContext) -> Result<LogitVector> {
        self.classifier
            .get(ctx.stage.wrapping_sub(1))
            .and_then(|stage| stage.get(ctx.slot))
            .and_then(Clone::clone)
            .ok_or_else(|| {
                self.missing(format!(
                    "classifier logits for stage {} slot {}",
                    ctx.stage,
                    ctx.slot + 1
                ))
            })
    }
}

impl ExtractorBackend for FileBackend {
    fn extract(&self, _mixture: &AudioBuffer, _clue: &ClueSet, ctx: SlotContext) -> Result<AudioBuffer> {
        self.extracted
            .get(&ctx)
            .cloned()
            .ok_or_else(|| self.missing(format!("extractor output {TSE_DIR}/{}", tse_name(ctx))))
    }
}

#[derive(Default)]
struct Recording {
    separation: Option<Separation>,
    classifier: BTreeMap<SlotContext, LogitVector>,
    extracted: BTreeMap<SlotContext, AudioBuffer>,
}

/// Wraps a set of backends and keeps every output they produce, so a run
/// can later be replayed through [`FileBackend`].
pub struct Recorder {
    inner: Backends,
    log: Mutex<Recording>,
}

impl Recorder {
    pub fn new(inner: Backends) -> std::sync::Arc<Self> {
        std::sync::Arc::new(Self {
            inner,
            log: Mutex::new(Recording::default()),
        })
    }

    /// Backends routed through `self`.
    pub fn backends(self: &std::sync::Arc<Self>) -> Backends {
        Backends {
            separator: self.clone(),
            classifier: self.clone(),
            extractor: self.clone(),
        }
    }

    /// Writes the recorded outputs as `dir/<scene_id>/`.
    pub fn write(&self, dir: &Path, scene_id: &str) -> Result<()> {
        let log = self.log.lock().expect("recorder lock");
        let sep = log
            .separation
            .as_ref()
            .ok_or_else(|| Error::scene(scene_id, "nothing recorded"))?;
        let root = dir.join(scene_id);
        std::fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        let stems = sep.foreground.iter().chain(&sep.interference).chain([&sep.noise]);
        for (name, stem) in stem_names().iter().zip(stems) {
            write_wav(root.join(name), stem)?;
        }
        let stages = log.classifier.keys().map(|c| c.stage).max().unwrap_or(0);
        let classifier = (1..=stages)
            .map(|stage| {
                (0..NUM_SLOTS)
                    .map(|slot| log.classifier.get(&SlotContext { stage, slot }).cloned())
                    .collect()
            })
            .collect();
        let file = LogitsFile {
            separator: sep.foreground_logits.clone(),
            activity: sep.foreground_activity.clone(),
            classifier,
        };
        let json = serde_json::to_string_pretty(&file)?;
        crate::io::write_atomic(&root.join(LOGITS_FILE), json.as_bytes())?;
        if !log.extracted.is_empty() {
            let tse = root.join(TSE_DIR);
            std::fs::create_dir_all(&tse).map_err(|e| Error::io(&tse, e))?;
            for (ctx, buf) in &log.extracted {
                write_wav(tse.join(tse_name(*ctx)), buf)?;
            }
        }
        Ok(())
    }
}

impl SeparatorBackend for Recorder {
    fn separate(&self, mixture: &AudioBuffer) -> Result<Separation> {
        let out = self.inner.separator.separate(mixture)?;
        self.log.lock().expect("recorder lock").separation = Some(out.clone());
        Ok(out)
    }
}

impl ClassifierBackend for Recorder {
    fn classify(&self, waveform: &AudioBuffer, ctx: SlotContext) -> Result<LogitVector> {
        let out = self.inner.classifier.classify(waveform, ctx)?;
        self.log
            .lock()
            .expect("recorder lock")
            .classifier
            .insert(ctx, out.clone());
        Ok(out)
    }
}

impl ExtractorBackend for Recorder {
    fn extract(&self, mixture: &AudioBuffer, clue: &ClueSet, ctx: SlotContext) -> Result<AudioBuffer> {
        let out = self.inner.extractor.extract(mixture, clue, ctx)?;
        self.log
            .lock()
            .expect("recorder lock")
            .extracted
            .insert(ctx, out.clone());
        Ok(out)
    }
}
