//! Ground-truth and constructed backends for testing the orchestrator.

use std::f64::consts::FRAC_1_SQRT_2;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{ClassifierBackend, ClueSet, ExtractorBackend, Separation, SeparatorBackend, SlotContext, NUM_SLOTS};
use crate::audio::AudioBuffer;
use crate::error::{Error, Result};
use crate::losses::LogitVector;
use crate::manifest::{LoadedScene, MAX_INTERFERENCE};
use crate::mixer::gain_for_snr;
use crate::seed::{derive_seed, key_hash};
use crate::vocab::ClassId;

/// Peak logit the oracle backends assign to a perfectly matching class.
pub const ORACLE_LOGIT_SCALE: f64 = 10.0;

/// Ground-truth stems of one scene.
#[derive(Debug, Clone)]
pub struct OracleTruth {
    scene_id: String,
    num_classes: usize,
    foreground: Vec<(ClassId, AudioBuffer)>,
    interference: Vec<AudioBuffer>,
    noise: AudioBuffer,
    mixture: AudioBuffer,
}

impl OracleTruth {
    pub fn new(scene: &LoadedScene, num_classes: usize) -> Result<Self> {
        let foreground = scene.foreground();
        if let Some((k, _)) = foreground.iter().find(|(k, _)| k.0 >= num_classes) {
            return Err(Error::scene(
                scene.scene_id(),
                format!("class {k} out of range for {num_classes} classes"),
            ));
        }
        Ok(Self {
            scene_id: scene.scene_id().to_string(),
            num_classes,
            foreground,
            interference: scene.interference(),
            noise: scene.noise(),
            mixture: scene.mixture.clone(),
        })
    }

    pub fn scene_id(&self) -> &str {
        &self.scene_id
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn stem_for(&self, class: ClassId) -> Option<&AudioBuffer> {
        self.foreground.iter().find(|(k, _)| *k == class).map(|(_, s)| s)
    }

    fn seed(&self, base: u64) -> u64 {
        derive_seed(base, key_hash(&self.scene_id))
    }
}

/// Adds seeded white noise scaled so that `10 log10(|s|^2 / |n|^2) = snr_db`.
/// Silent stems are returned unchanged.
fn degrade(stem: &AudioBuffer, snr_db: f64, seed: u64) -> Result<AudioBuffer> {
    if stem.is_silent() {
        return Ok(stem.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise: Vec<f64> = (0..stem.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
    let noise = AudioBuffer::from_flat(noise, stem.channels(), stem.sample_rate())?;
    let g = gain_for_snr(&noise, stem, -snr_db)?;
    let out = stem
        .samples()
        .iter()
        .zip(noise.samples())
        .map(|(s, n)| s + g * n)
        .collect();
    AudioBuffer::from_flat(out, stem.channels(), stem.sample_rate())
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Degradation {
    snr_db: f64,
    seed: u64,
}

fn one_hot_logits(class: Option<ClassId>, num_classes: usize) -> Result<LogitVector> {
    let mut v = vec![0.0; num_classes];
    if let Some(k) = class {
        v[k.0] = ORACLE_LOGIT_SCALE;
    }
    LogitVector::new(v)
}

/// Returns the ground-truth stems, optionally degraded. Empty foreground and
/// interference slots are silent.
pub struct OracleSeparator {
    truth: Arc<OracleTruth>,
    degradation: Option<Degradation>,
}

impl OracleSeparator {
    pub fn new(truth: Arc<OracleTruth>) -> Self {
        Self {
            truth,
            degradation: None,
        }
    }

    /// Every non-silent stem gets independent white noise at `snr_db`.
    pub fn degraded(truth: Arc<OracleTruth>, snr_db: f64, seed: u64) -> Result<Self> {
        if !snr_db.is_finite() {
            return Err(Error::NonFinite("degradation SNR".into()));
        }
        Ok(Self {
            truth,
            degradation: Some(Degradation { snr_db, seed }),
        })
    }
}

impl SeparatorBackend for OracleSeparator {
    fn separate(&self, mixture: &AudioBuffer) -> Result<Separation> {
        let t = &self.truth;
        mixture.check_compatible(&t.mixture)?;
        let silent = AudioBuffer::zeros_like(mixture);
        let mut stems = Vec::with_capacity(NUM_SLOTS + MAX_INTERFERENCE + 1);
        let mut classes = Vec::with_capacity(NUM_SLOTS);
        for slot in 0..NUM_SLOTS {
            match t.foreground.get(slot) {
                Some((k, s)) => {
                    stems.push(s.clone());
                    classes.push(Some(*k));
                }
                None => {
                    stems.push(silent.clone());
                    classes.push(None);
                }
            }
        }
        for slot in 0..MAX_INTERFERENCE {
            stems.push(t.interference.get(slot).cloned().unwrap_or_else(|| silent.clone()));
        }
        stems.push(t.noise.clone());
        if let Some(d) = self.degradation {
            let base = t.seed(d.seed);
            stems = stems
                .iter()
                .enumerate()
                .map(|(i, s)| degrade(s, d.snr_db, derive_seed(base, i as u64)))
                .collect::<Result<_>>()?;
        }
        let noise = stems.pop().expect("noise stem");
        let interference = stems.split_off(NUM_SLOTS);
        Ok(Separation {
            foreground: stems,
            interference,
            noise,
            foreground_logits: classes
                .iter()
                .map(|&k| one_hot_logits(k, t.num_classes))
                .collect::<Result<_>>()?,
            foreground_activity: classes.iter().map(|k| if k.is_some() { 1.0 } else { 0.0 }).collect(),
        })
    }
}

/// Scores each true foreground class by its normalized correlation with the
/// input: `logit_k = 10 max(0, cos(x, s_k))` for classes in the scene, zero for
/// all others. A silent input gets all-zero logits.
pub struct OracleClassifier {
    truth: Arc<OracleTruth>,
}

impl OracleClassifier {
    pub fn new(truth: Arc<OracleTruth>) -> Self {
        Self { truth }
    }
}

impl ClassifierBackend for OracleClassifier {
    fn classify(&self, waveform: &AudioBuffer, _ctx: SlotContext) -> Result<LogitVector> {
        let mut logits = vec![0.0; self.truth.num_classes];
        let e = waveform.energy();
        if e > 0.0 {
            for (k, s) in &self.truth.foreground {
                waveform.check_compatible(s)?;
                let dot: f64 = waveform.samples().iter().zip(s.samples()).map(|(a, b)| a * b).sum();
                let cos = dot / (e * s.energy()).sqrt();
                logits[k.0] = ORACLE_LOGIT_SCALE * cos.max(0.0);
            }
        }
        LogitVector::new(logits)
    }
}

/// Returns the ground-truth stem of the clue's class (silence if the class
/// is not in the scene), optionally degraded.
pub struct OracleExtractor {
    truth: Arc<OracleTruth>,
    degradation: Option<Degradation>,
}

impl OracleExtractor {
    pub fn new(truth: Arc<OracleTruth>) -> Self {
        Self {
            truth,
            degradation: None,
        }
    }

    /// Independent white noise at `snr_db` for every call site.
    pub fn degraded(truth: Arc<OracleTruth>, snr_db: f64, seed: u64) -> Result<Self> {
        if !snr_db.is_finite() {
            return Err(Error::NonFinite("degradation SNR".into()));
        }
        Ok(Self {
            truth,
            degradation: Some(Degradation { snr_db, seed }),
        })
    }
}

impl ExtractorBackend for OracleExtractor {
    fn extract(&self, mixture: &AudioBuffer, clue: &ClueSet, ctx: SlotContext) -> Result<AudioBuffer> {
        let target = clue
            .class_clue
            .class()
            .and_then(|k| self.truth.stem_for(k))
            .cloned()
            .unwrap_or_else(|| AudioBuffer::zeros_like(mixture));
        match self.degradation {
            None => Ok(target),
            Some(d) => {
                let site = (ctx.stage * NUM_SLOTS + ctx.slot) as u64;
                let seed = derive_seed(self.truth.seed(d.seed ^ 0x0054_5345), site);
                degrade(&target, d.snr_db, seed)
            }
        }
    }
}

/// Moves the enrollment towards the true stem of its class so that the error
/// energy halves on every call: `s + (x - s) / sqrt(2)`.
pub struct ErrorHalvingExtractor {
    truth: Arc<OracleTruth>,
}

impl ErrorHalvingExtractor {
    pub fn new(truth: Arc<OracleTruth>) -> Self {
        Self { truth }
    }
}

impl ExtractorBackend for ErrorHalvingExtractor {
    fn extract(&self, mixture: &AudioBuffer, clue: &ClueSet, _ctx: SlotContext) -> Result<AudioBuffer> {
        let silent = AudioBuffer::zeros_like(mixture);
        let target = clue
            .class_clue
            .class()
            .and_then(|k| self.truth.stem_for(k))
            .unwrap_or(&silent);
        target.check_compatible(&clue.enrollment)?;
        let out = target
            .samples()
            .iter()
            .zip(clue.enrollment.samples())
            .map(|(s, x)| s + (x - s) * FRAC_1_SQRT_2)
            .collect();
        AudioBuffer::from_flat(out, target.channels(), target.sample_rate())
    }
}

/// Returns the enrollment unchanged.
pub struct IdentityExtractor;

impl ExtractorBackend for IdentityExtractor {
    fn extract(&self, _mixture: &AudioBuffer, clue: &ClueSet, _ctx: SlotContext) -> Result<AudioBuffer> {
        Ok(clue.enrollment.clone())
    }
}

/// Puts the whole mixture in every foreground slot.
pub struct MixtureSeparator {
    num_classes: usize,
}

impl MixtureSeparator {
    pub fn new(num_classes: usize) -> Self {
        Self { num_classes }
    }
}

impl SeparatorBackend for MixtureSeparator {
    fn separate(&self, mixture: &AudioBuffer) -> Result<Separation> {
        let silent = AudioBuffer::zeros_like(mixture);
        Ok(Separation {
            foreground: vec![mixture.clone(); NUM_SLOTS],
            interference: vec![silent.clone(); MAX_INTERFERENCE],
            noise: silent,
            foreground_logits: vec![LogitVector::new(vec![0.0; self.num_classes])?; NUM_SLOTS],
            foreground_activity: vec![1.0; NUM_SLOTS],
        })
    }
}
