//! Multi-stage orchestrator.
//!
//! Stage 1 separates the mixture into three foreground, two interference and
//! one noise stem, then labels each foreground stem through the silence gate.
//! Every later stage re-extracts each non-silent foreground with the previous
//! stage's waveform and label as clues, and re-labels the result. Clues are
//! only ever produced by earlier stages; nothing here accepts external labels.

mod conditioning;
mod files;
mod oracle;
mod spec;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::audio::AudioBuffer;
use crate::error::{Error, Result};
use crate::gate::{decide, decide_binary, ClassDecision, ThresholdTable, DEFAULT_THRESHOLD};
use crate::losses::LogitVector;
use crate::manifest::{MAX_FOREGROUND, MAX_INTERFERENCE};
use crate::vocab::{ClassId, Label, DEFAULT_NUM_CLASSES};

pub use conditioning::{clue_concat, res_film};
pub use files::{FileBackend, Recorder, LOGITS_FILE};
pub use oracle::{
    ErrorHalvingExtractor, IdentityExtractor, MixtureSeparator, OracleClassifier, OracleExtractor, OracleSeparator,
    OracleTruth, ORACLE_LOGIT_SCALE,
};
pub use spec::BackendSpec;

/// Foreground slots per scene.
pub const NUM_SLOTS: usize = MAX_FOREGROUND;
pub const MAX_TSE_ITERATIONS: usize = 8;
pub const DEFAULT_TSE_ITERATIONS: usize = 2;

/// Output of a separator: stems in role order plus the per-foreground class
/// decoder outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Separation {
    pub foreground: Vec<AudioBuffer>,
    pub interference: Vec<AudioBuffer>,
    pub noise: AudioBuffer,
    pub foreground_logits: Vec<LogitVector>,
    /// Probability that each foreground slot is active.
    pub foreground_activity: Vec<f64>,
}

impl Separation {
    /// Checks slot counts, shapes against `mixture` and logit lengths.
    pub fn validate(&self, mixture: &AudioBuffer, num_classes: usize) -> Result<()> {
        if self.foreground.len() != NUM_SLOTS
            || self.interference.len() != MAX_INTERFERENCE
            || self.foreground_logits.len() != NUM_SLOTS
            || self.foreground_activity.len() != NUM_SLOTS
        {
            return Err(Error::Backend(format!(
                "separator must return 3 foreground, 2 interference and 1 noise stem with 3 logit vectors \
                 and 3 activities; got {}/{}/1 with {} and {}",
                self.foreground.len(),
                self.interference.len(),
                self.foreground_logits.len(),
                self.foreground_activity.len()
            )));
        }
        for stem in self.foreground.iter().chain(&self.interference).chain([&self.noise]) {
            mixture.check_compatible(stem)?;
        }
        if let Some(l) = self.foreground_logits.iter().find(|l| l.len() != num_classes) {
            return Err(Error::ShapeMismatch(format!(
                "separator logits have {} classes, expected {num_classes}",
                l.len()
            )));
        }
        Ok(())
    }
}

/// Where a backend call sits in the run: 1-based stage, 0-based slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SlotContext {
    pub stage: usize,
    pub slot: usize,
}

pub trait SeparatorBackend: Send + Sync {
    fn separate(&self, mixture: &AudioBuffer) -> Result<Separation>;
}

pub trait ClassifierBackend: Send + Sync {
    fn classify(&self, waveform: &AudioBuffer, ctx: SlotContext) -> Result<LogitVector>;
}

pub trait ExtractorBackend: Send + Sync {
    /// One refined waveform for the clue's source, shaped like `mixture`.
    fn extract(&self, mixture: &AudioBuffer, clue: &ClueSet, ctx: SlotContext) -> Result<AudioBuffer>;
}

#[derive(Clone)]
pub struct Backends {
    pub separator: Arc<dyn SeparatorBackend>,
    pub classifier: Arc<dyn ClassifierBackend>,
    pub extractor: Arc<dyn ExtractorBackend>,
}

/// One-hot class vector, or the silence marker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassClue {
    OneHot(Vec<f64>),
    Silence,
}

impl ClassClue {
    pub fn from_label(label: Label, num_classes: usize) -> Result<Self> {
        match label {
            Label::Silence => Ok(ClassClue::Silence),
            Label::Class(ClassId(k)) if k < num_classes => {
                let mut v = vec![0.0; num_classes];
                v[k] = 1.0;
                Ok(ClassClue::OneHot(v))
            }
            Label::Class(k) => Err(Error::InvalidArgument(format!(
                "class {k} out of range for {num_classes} classes"
            ))),
        }
    }

    pub fn class(&self) -> Option<ClassId> {
        match self {
            ClassClue::OneHot(v) => v.iter().position(|&x| x == 1.0).map(ClassId),
            ClassClue::Silence => None,
        }
    }

    pub fn is_silence(&self) -> bool {
        matches!(self, ClassClue::Silence)
    }
}

/// Clues handed from one stage to the next for one foreground slot.
#[derive(Debug, Clone, PartialEq)]
pub struct ClueSet {
    pub enrollment: AudioBuffer,
    pub class_clue: ClassClue,
    pub decision: ClassDecision,
}

impl ClueSet {
    pub fn new(enrollment: AudioBuffer, decision: ClassDecision) -> Result<Self> {
        let class_clue = ClassClue::from_label(decision.label, decision.logits.len())?;
        Ok(Self {
            enrollment,
            class_clue,
            decision,
        })
    }

    pub fn is_silence(&self) -> bool {
        self.class_clue.is_silence()
    }

    pub fn label(&self) -> Label {
        self.decision.label
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateMode {
    /// Energy score against the per-class threshold table.
    #[default]
    Energy,
    /// The separator's activity probability (stage 1 only).
    Binary,
}

/// Which logits label the stage-1 stems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage1Labels {
    /// The separator's own class decoder.
    Separator,
    /// Re-classification of each stem by the classifier backend.
    #[default]
    Classifier,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Extraction rounds after stage 1.
    pub tse_iterations: usize,
    pub gate_mode: GateMode,
    pub thresholds: ThresholdTable,
    /// Extraction stages keep the incoming decision instead of re-classifying.
    pub classifier_stage_reuse: bool,
    pub stage1_labels: Stage1Labels,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            tse_iterations: DEFAULT_TSE_ITERATIONS,
            gate_mode: GateMode::Energy,
            thresholds: ThresholdTable::uniform(DEFAULT_NUM_CLASSES, DEFAULT_THRESHOLD).expect("finite default"),
            classifier_stage_reuse: false,
            stage1_labels: Stage1Labels::Classifier,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tse_iterations > MAX_TSE_ITERATIONS {
            return Err(Error::InvalidArgument(format!(
                "tse_iterations = {} exceeds the guard of {MAX_TSE_ITERATIONS}",
                self.tse_iterations
            )));
        }
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        self.thresholds.len()
    }

    pub fn for_mode(mode: PipelineMode, thresholds: ThresholdTable) -> Self {
        let (tse_iterations, stage1_labels, classifier_stage_reuse) = match mode {
            PipelineMode::Fss1Cp1 => (0, Stage1Labels::Separator, false),
            PipelineMode::Fss1Cp1_1 => (0, Stage1Labels::Classifier, false),
            PipelineMode::Fss2Cp1_1 => (1, Stage1Labels::Classifier, true),
            PipelineMode::Fss2Cp2 => (1, Stage1Labels::Classifier, false),
            PipelineMode::Fss3Cp3 => (2, Stage1Labels::Classifier, false),
        };
        Self {
            tse_iterations,
            gate_mode: GateMode::Energy,
            thresholds,
            classifier_stage_reuse,
            stage1_labels,
        }
    }
}

/// Named stage/label configurations: `FSS n` is the stage whose waveforms
/// are reported, `CP m` the stage whose classifier labels them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PipelineMode {
    Fss1Cp1,
    Fss1Cp1_1,
    Fss2Cp1_1,
    Fss2Cp2,
    Fss3Cp3,
}

impl PipelineMode {
    pub const ALL: [PipelineMode; 5] = [
        PipelineMode::Fss1Cp1,
        PipelineMode::Fss1Cp1_1,
        PipelineMode::Fss2Cp1_1,
        PipelineMode::Fss2Cp2,
        PipelineMode::Fss3Cp3,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PipelineMode::Fss1Cp1 => "fss1-cp1",
            PipelineMode::Fss1Cp1_1 => "fss1-cp1-1",
            PipelineMode::Fss2Cp1_1 => "fss2-cp1-1",
            PipelineMode::Fss2Cp2 => "fss2-cp2",
            PipelineMode::Fss3Cp3 => "fss3-cp3",
        }
    }
}

impl fmt::Display for PipelineMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PipelineMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s
            .chars()
            .filter(|c| !c.is_whitespace())
            .map(|c| {
                if c == '+' || c == '_' {
                    '-'
                } else {
                    c.to_ascii_lowercase()
                }
            })
            .collect();
        Self::ALL
            .into_iter()
            .find(|m| m.name() == norm)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown pipeline mode {s:?}")))
    }
}

/// Everything one stage produced, slot by slot.
#[derive(Debug, Clone, PartialEq)]
pub struct StageRecord {
    pub stage: usize,
    pub clues: Vec<ClueSet>,
}

impl StageRecord {
    pub fn stems(&self) -> impl Iterator<Item = &AudioBuffer> {
        self.clues.iter().map(|c| &c.enrollment)
    }

    pub fn decisions(&self) -> impl Iterator<Item = &ClassDecision> {
        self.clues.iter().map(|c| &c.decision)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinalSlot {
    pub stem: AudioBuffer,
    pub decision: ClassDecision,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineResult {
    pub stages: Vec<StageRecord>,
    /// Three slots from the last stage with distinct non-silence labels.
    pub final_slots: Vec<FinalSlot>,
    /// Slots whose label duplicated a lower-energy slot and became silence.
    pub demoted: Vec<usize>,
}

impl PipelineResult {
    pub fn labels(&self) -> Vec<Label> {
        self.final_slots.iter().map(|s| s.decision.label).collect()
    }
}

fn stage_name(stage: usize) -> String {
    format!("stage {stage}")
}

/// Separation plus gated labelling of the three foreground stems.
pub fn run_stage1(
    mixture: &AudioBuffer,
    separator: &dyn SeparatorBackend,
    classifier: &dyn ClassifierBackend,
    cfg: &PipelineConfig,
) -> Result<Vec<ClueSet>> {
    let inner = || -> Result<Vec<ClueSet>> {
        let sep = separator.separate(mixture)?;
        sep.validate(mixture, cfg.num_classes())?;
        let mut clues = Vec::with_capacity(NUM_SLOTS);
        for (slot, stem) in sep.foreground.into_iter().enumerate() {
            let logits = match cfg.stage1_labels {
                Stage1Labels::Separator => sep.foreground_logits[slot].clone(),
                Stage1Labels::Classifier => classifier.classify(&stem, SlotContext { stage: 1, slot })?,
            };
            let decision = match cfg.gate_mode {
                GateMode::Energy => decide(&logits, &cfg.thresholds)?,
                GateMode::Binary => decide_binary(&logits, sep.foreground_activity[slot])?,
            };
            clues.push(ClueSet::new(stem, decision)?);
        }
        Ok(clues)
    };
    inner().map_err(|e| e.in_stage(stage_name(1)))
}

/// One extraction round. Silence clues pass through untouched and never
/// reach the extractor.
pub fn run_tse_stage(
    mixture: &AudioBuffer,
    clues: &[ClueSet],
    extractor: &dyn ExtractorBackend,
    classifier: &dyn ClassifierBackend,
    cfg: &PipelineConfig,
    stage: usize,
) -> Result<Vec<ClueSet>> {
    let inner = || -> Result<Vec<ClueSet>> {
        let mut out = Vec::with_capacity(clues.len());
        for (slot, clue) in clues.iter().enumerate() {
            if clue.is_silence() {
                out.push(clue.clone());
                continue;
            }
            let ctx = SlotContext { stage, slot };
            let refined = extractor.extract(mixture, clue, ctx)?;
            mixture.check_compatible(&refined)?;
            let decision = if cfg.classifier_stage_reuse {
                clue.decision.clone()
            } else {
                decide(&classifier.classify(&refined, ctx)?, &cfg.thresholds)?
            };
            out.push(ClueSet::new(refined, decision)?);
        }
        Ok(out)
    };
    inner().map_err(|e| e.in_stage(stage_name(stage)))
}

/// Keeps the lowest-energy slot for each repeated label and turns the others
/// into silence. Returns the demoted slot indices.
fn dedup_labels(slots: &mut [FinalSlot]) -> Vec<usize> {
    let mut demoted = Vec::new();
    for i in 0..slots.len() {
        let Label::Class(k) = slots[i].decision.label else {
            continue;
        };
        let winner = (0..slots.len())
            .filter(|&j| slots[j].decision.label == Label::Class(k))
            .min_by(|&a, &b| {
                slots[a]
                    .decision
                    .energy
                    .total_cmp(&slots[b].decision.energy)
                    .then(a.cmp(&b))
            })
            .expect("i itself matches");
        if winner != i {
            demoted.push(i);
        }
    }
    for &i in &demoted {
        slots[i].decision = slots[i].decision.silenced();
    }
    demoted
}

/// Stage 1 followed by `cfg.tse_iterations` extraction rounds.
pub fn run_pipeline(mixture: &AudioBuffer, backends: &Backends, cfg: &PipelineConfig) -> Result<PipelineResult> {
    cfg.validate()?;
    let mut clues = run_stage1(mixture, backends.separator.as_ref(), backends.classifier.as_ref(), cfg)?;
    let mut stages = vec![StageRecord {
        stage: 1,
        clues: clues.clone(),
    }];
    for t in 0..cfg.tse_iterations {
        let stage = t + 2;
        clues = run_tse_stage(
            mixture,
            &clues,
            backends.extractor.as_ref(),
            backends.classifier.as_ref(),
            cfg,
            stage,
        )?;
        stages.push(StageRecord {
            stage,
            clues: clues.clone(),
        });
    }
    let mut final_slots: Vec<FinalSlot> = clues
        .into_iter()
        .map(|c| FinalSlot {
            stem: c.enrollment,
            decision: c.decision,
        })
        .collect();
    let demoted = dedup_labels(&mut final_slots);
    Ok(PipelineResult {
        stages,
        final_slots,
        demoted,
    })
}
