//! Single-label decisions with an energy-based silence override, the binary
//! activity branch, and per-class threshold calibration.
//!
//! The decision rule: take `k = argmax(logits)` (ties to the lowest index);
//! if `energy_score(logits) > threshold[k]` the source is silence regardless
//! of `k`, otherwise the label is `k`. Equality keeps the class.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{energy_score, LogitVector, ENERGY_MARGIN_IN, ENERGY_MARGIN_OUT};
use crate::vocab::{ClassId, ClassVocabulary, Label};

/// Default per-class threshold: midway between the training energy margins.
pub const DEFAULT_THRESHOLD: f64 = 0.5 * (ENERGY_MARGIN_IN + ENERGY_MARGIN_OUT);

/// Activity probability above which the binary branch reports an active source.
pub const BINARY_ACTIVITY_THRESHOLD: f64 = 0.5;

/// Outcome of classifying one waveform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDecision {
    pub label: Label,
    pub logits: LogitVector,
    pub energy: f64,
    /// Threshold compared against `energy`, when the energy gate decided.
    pub threshold_used: Option<f64>,
}

impl ClassDecision {
    pub fn is_silence(&self) -> bool {
        self.label.is_silence()
    }

    /// Same decision relabelled as silence.
    pub fn silenced(&self) -> Self {
        Self {
            label: Label::Silence,
            ..self.clone()
        }
    }
}

/// Per-class energy thresholds. `+inf` disables the gate for that class.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdTable(Vec<f64>);

impl ThresholdTable {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("empty threshold table".into()));
        }
        if values.iter().any(|v| v.is_nan() || *v == f64::NEG_INFINITY) {
            return Err(Error::NonFinite("threshold table".into()));
        }
        Ok(Self(values))
    }

    pub fn uniform(num_classes: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; num_classes])
    }

    /// Table that never reports silence.
    pub fn disabled(num_classes: usize) -> Self {
        Self(vec![f64::INFINITY; num_classes])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, class: ClassId) -> Option<f64> {
        self.0.get(class.0).copied()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    /// JSON object `{class_name: threshold}`; a disabled class maps to `null`.
    pub fn to_json(&self, vocab: &ClassVocabulary) -> Result<serde_json::Value> {
        if vocab.len() != self.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} thresholds for a vocabulary of {}",
                self.len(),
                vocab.len()
            )));
        }
        let map: serde_json::Map<String, serde_json::Value> = vocab
            .names()
            .iter()
            .zip(&self.0)
            .map(|(n, &t)| {
                let v = if t.is_finite() {
                    serde_json::json!(t)
                } else {
                    serde_json::Value::Null
                };
                (n.clone(), v)
            })
            .collect();
        Ok(serde_json::Value::Object(map))
    }

    pub fn from_json(value: &serde_json::Value, vocab: &ClassVocabulary) -> Result<Self> {
        let map: BTreeMap<String, Option<f64>> = serde_json::from_value(value.clone())?;
        let mut out = vec![None; vocab.len()];
        for (name, t) in map {
            let id = vocab
                .id(&name)
                .ok_or_else(|| Error::InvalidArgument(format!("unknown class {name:?} in thresholds")))?;
            out[id.0] = Some(t.unwrap_or(f64::INFINITY));
        }
        let missing: Vec<&str> = vocab
            .names()
            .iter()
            .zip(&out)
            .filter(|(_, t)| t.is_none())
            .map(|(n, _)| n.as_str())
            .collect();
        if !missing.is_empty() {
            return Err(Error::InvalidArgument(format!("thresholds missing for {missing:?}")));
        }
        Self::new(out.into_iter().map(Option::unwrap).collect())
    }
}

/// Energy-gated single-label decision.
pub fn decide(logits: &LogitVector, thresholds: &ThresholdTable) -> Result<ClassDecision> {
    if logits.len() != thresholds.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} logits for {} thresholds",
            logits.len(),
            thresholds.len()
        )));
    }
    let k = logits.argmax();
    let energy = energy_score(logits);
    let threshold = thresholds.0[k];
    let label = if energy > threshold {
        Label::Silence
    } else {
        Label::Class(ClassId(k))
    };
    Ok(ClassDecision {
        label,
        logits: logits.clone(),
        energy,
        threshold_used: Some(threshold),
    })
}

/// Binary activity branch: returns `true` when the source is silent, i.e.
/// `p_active <= 0.5`.
pub fn binary_silence(p_active: f64) -> Result<bool> {
    if !(0.0..=1.0).contains(&p_active) {
        return Err(Error::InvalidArgument(format!(
            "activity probability {p_active} outside [0, 1]"
        )));
    }
    Ok(p_active <= BINARY_ACTIVITY_THRESHOLD)
}

/// Decision governed by the binary branch: argmax label unless silent.
pub fn decide_binary(logits: &LogitVector, p_active: f64) -> Result<ClassDecision> {
    let silent = binary_silence(p_active)?;
    Ok(ClassDecision {
        label: if silent {
            Label::Silence
        } else {
            Label::Class(ClassId(logits.argmax()))
        },
        logits: logits.clone(),
        energy: energy_score(logits),
        threshold_used: None,
    })
}

/// One labelled sample for threshold calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSample {
    pub logits: LogitVector,
    /// Ground truth: the waveform is silence.
    pub silence: bool,
}

/// How a class threshold was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdSource {
    Fitted,
    Global,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassCalibration {
    pub threshold: f64,
    pub balanced_accuracy: f64,
    pub n_silent: usize,
    pub n_active: usize,
    pub source: ThresholdSource,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub table: ThresholdTable,
    pub classes: Vec<ClassCalibration>,
    pub global: ClassCalibration,
}

/// Result of a threshold sweep over one group of samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepResult {
    pub threshold: f64,
    pub balanced_accuracy: f64,
    /// Silent samples flagged silent at `threshold`.
    pub true_silent: usize,
    /// Active samples kept active at `threshold`.
    pub true_active: usize,
    pub n_silent: usize,
    pub n_active: usize,
}

/// Integer score that orders thresholds by balanced accuracy exactly.
///
/// With both kinds present, `BA = (ts/S + ta/A) / 2`, ordered by
/// `ts*A + ta*S`. With one kind missing only the defined rate counts.
pub fn balanced_score(true_silent: usize, true_active: usize, n_silent: usize, n_active: usize) -> u128 {
    match (n_silent, n_active) {
        (0, _) => true_active as u128,
        (_, 0) => true_silent as u128,
        (s, a) => true_silent as u128 * a as u128 + true_active as u128 * s as u128,
    }
}

/// Balanced accuracy of the rule `E > threshold => silence`, averaging only
/// the rates whose denominators are non-zero.
pub fn balanced_accuracy(true_silent: usize, true_active: usize, n_silent: usize, n_active: usize) -> f64 {
    match (n_silent, n_active) {
        (0, 0) => 0.0,
        (0, a) => true_active as f64 / a as f64,
        (s, 0) => true_silent as f64 / s as f64,
        (s, a) => 0.5 * (true_silent as f64 / s as f64 + true_active as f64 / a as f64),
    }
}

/// Exhaustive threshold sweep over `(energy, is_silence)` pairs.
///
/// Candidates, in ascending order: `min - 1`, the midpoints between
/// consecutive distinct energies, and `max + 1`. Together they realize every
/// distinct partition a scalar threshold can induce. The first (lowest)
/// candidate attaining the best balanced accuracy wins.
pub fn sweep_thresholds(points: &[(f64, bool)]) -> Result<SweepResult> {
    if points.is_empty() {
        return Err(Error::DegenerateCalibration("no samples".into()));
    }
    if points.iter().any(|(e, _)| !e.is_finite()) {
        return Err(Error::NonFinite("calibration energies".into()));
    }
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n_silent = sorted.iter().filter(|p| p.1).count();
    let n_active = sorted.len() - n_silent;

    // Start below every energy: all flagged silent.
    let mut true_silent = n_silent;
    let mut true_active = 0;
    let first = sorted[0].0 - 1.0;
    let mut best = (
        balanced_score(true_silent, true_active, n_silent, n_active),
        first,
        true_silent,
        true_active,
    );

    let mut i = 0;
    while i < sorted.len() {
        let e = sorted[i].0;
        // Move the threshold past every sample with energy `e`.
        while i < sorted.len() && sorted[i].0 == e {
            if sorted[i].1 {
                true_silent -= 1;
            } else {
                true_active += 1;
            }
            i += 1;
        }
        let candidate = match sorted.get(i) {
            Some(&(next, _)) => {
                let mid = e + 0.5 * (next - e);
                if mid < next {
                    mid
                } else {
                    e
                }
            }
            None => e + 1.0,
        };
        let score = balanced_score(true_silent, true_active, n_silent, n_active);
        if score > best.0 {
            best = (score, candidate, true_silent, true_active);
        }
    }
    let (_, threshold, ts, ta) = best;
    Ok(SweepResult {
        threshold,
        balanced_accuracy: balanced_accuracy(ts, ta, n_silent, n_active),
        true_silent: ts,
        true_active: ta,
        n_silent,
        n_active,
    })
}

/// Fits one threshold per class (grouping samples by argmax class), falling
/// back to the pooled global threshold for classes without samples.
pub fn calibrate_thresholds(samples: &[CalibrationSample], num_classes: usize) -> Result<Calibration> {
    let n_silent = samples.iter().filter(|s| s.silence).count();
    if n_silent == 0 || n_silent == samples.len() {
        return Err(Error::DegenerateCalibration(format!(
            "{n_silent} silent of {} samples; need both kinds",
            samples.len()
        )));
    }
    let mut groups: Vec<Vec<(f64, bool)>> = vec![Vec::new(); num_classes];
    let mut pooled = Vec::with_capacity(samples.len());
    for s in samples {
        if s.logits.len() != num_classes {
            return Err(Error::ShapeMismatch(format!(
                "{} logits for {num_classes} classes",
                s.logits.len()
            )));
        }
        let point = (energy_score(&s.logits), s.silence);
        groups[s.logits.argmax()].push(point);
        pooled.push(point);
    }
    let to_cal = |r: SweepResult, source| ClassCalibration {
        threshold: r.threshold,
        balanced_accuracy: r.balanced_accuracy,
        n_silent: r.n_silent,
        n_active: r.n_active,
        source,
    };
    let global = to_cal(sweep_thresholds(&pooled)?, ThresholdSource::Global);
    let classes = groups
        .iter()
        .map(|g| {
            if g.is_empty() {
                Ok(ClassCalibration {
                    n_silent: 0,
                    n_active: 0,
                    ..global.clone()
                })
            } else {
                sweep_thresholds(g).map(|r| to_cal(r, ThresholdSource::Fitted))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let table = ThresholdTable::new(classes.iter().map(|c| c.threshold).collect())?;
    Ok(Calibration { table, classes, global })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn logits_with_energy(c: usize, k: usize, energy: f64) -> LogitVector {
        // one dominant logit at k, others 0; solve for the dominant value
        // e^{x} + (c-1) = e^{-energy}
        let x = ((-energy).exp() - (c as f64 - 1.0)).ln();
        let mut v = vec![0.0; c];
        v[k] = x;
        LogitVector::new(v).unwrap()
    }

    #[test]
    fn energy_gate_examples() {
        let l = logits_with_energy(4, 2, -3.0);
        assert!((energy_score(&l) - -3.0).abs() < 1e-12);
        let mut t = vec![0.0; 4];
        t[2] = -2.5;
        let d = decide(&l, &ThresholdTable::new(t.clone()).unwrap()).unwrap();
        assert_eq!(d.label, Label::Class(ClassId(2)));
        assert_eq!(d.threshold_used, Some(-2.5));
        t[2] = -3.5;
        let d = decide(&l, &ThresholdTable::new(t).unwrap()).unwrap();
        assert_eq!(d.label, Label::Silence);
        let d = decide(&l, &ThresholdTable::disabled(4)).unwrap();
        assert_eq!(d.label, Label::Class(ClassId(2)));
        assert!(decide(&l, &ThresholdTable::disabled(3)).is_err());
    }

    #[test]
    fn boundary_keeps_class() {
        let l = LogitVector::new(vec![0.0, 0.0]).unwrap();
        let e = energy_score(&l);
        let d = decide(&l, &ThresholdTable::uniform(2, e).unwrap()).unwrap();
        assert_eq!(d.label, Label::Class(ClassId(0)));
    }

    #[test]
    fn binary_branch() {
        assert!(!binary_silence(0.7).unwrap());
        assert!(binary_silence(0.5).unwrap());
        assert!(binary_silence(0.0).unwrap());
        assert!(binary_silence(1.2).is_err());
        assert!(binary_silence(f64::NAN).is_err());
        let l = LogitVector::new(vec![0.0, 4.0]).unwrap();
        assert_eq!(decide_binary(&l, 0.9).unwrap().label, Label::Class(ClassId(1)));
        assert_eq!(decide_binary(&l, 0.1).unwrap().label, Label::Silence);
    }

    #[test]
    fn separable_pair_gets_midpoint() {
        let r = sweep_thresholds(&[(-1.0, true), (-5.0, false)]).unwrap();
        assert_eq!(r.threshold, -3.0);
        assert_eq!(r.balanced_accuracy, 1.0);
    }

    #[test]
    fn mixed_energies_take_lowest_candidate() {
        let r = sweep_thresholds(&[(-3.0, true), (-1.0, true), (-3.0, false), (-1.0, false)]).unwrap();
        assert_eq!(r.balanced_accuracy, 0.5);
        assert_eq!(r.threshold, -4.0);
    }

    #[test]
    fn calibration_classifies_training_set() {
        let c = 3;
        let samples: Vec<CalibrationSample> = [(-8.0, false), (-7.0, false), (-2.0, true), (-1.5, true)]
            .iter()
            .map(|&(e, s)| CalibrationSample {
                logits: logits_with_energy(c, 1, e),
                silence: s,
            })
            .collect();
        let cal = calibrate_thresholds(&samples, c).unwrap();
        assert_eq!(cal.classes[1].source, ThresholdSource::Fitted);
        assert_eq!(cal.classes[1].balanced_accuracy, 1.0);
        assert_eq!(cal.classes[0].source, ThresholdSource::Global);
        for s in &samples {
            let d = decide(&s.logits, &cal.table).unwrap();
            assert_eq!(d.is_silence(), s.silence);
        }
    }

    #[test]
    fn calibration_rejects_one_kind() {
        let s = vec![CalibrationSample {
            logits: logits_with_energy(2, 0, -5.0),
            silence: false,
        }];
        assert!(matches!(
            calibrate_thresholds(&s, 2),
            Err(Error::DegenerateCalibration(_))
        ));
    }

    #[test]
    fn threshold_json_round_trip() {
        let vocab = ClassVocabulary::placeholder(3).unwrap();
        let t = ThresholdTable::new(vec![-3.5, f64::INFINITY, -2.0]).unwrap();
        let j = t.to_json(&vocab).unwrap();
        assert_eq!(j["class_01"], serde_json::Value::Null);
        assert_eq!(ThresholdTable::from_json(&j, &vocab).unwrap(), t);
        let partial = serde_json::json!({"class_00": -1.0});
        assert!(ThresholdTable::from_json(&partial, &vocab).is_err());
    }

    proptest! {
        #[test]
        fn shift_invariance(v in prop::collection::vec(-10.0f64..10.0, 2..10), c in -5.0f64..5.0, t in -12.0f64..0.0) {
            let l = LogitVector::new(v).unwrap();
            let table = ThresholdTable::uniform(l.len(), t).unwrap();
            let a = decide(&l, &table).unwrap();
            let b = decide(&l.shifted(c).unwrap(), &table).unwrap();
            prop_assert_eq!(l.argmax(), l.shifted(c).unwrap().argmax());
            prop_assert!((b.energy - (a.energy - c)).abs() < 1e-9);
            let shifted_table = ThresholdTable::uniform(l.len(), t - c).unwrap();
            let b2 = decide(&l.shifted(c).unwrap(), &shifted_table).unwrap();
            if (a.energy - t).abs() > 1e-9 {
                prop_assert_eq!(a.label, b2.label);
            }
        }

        #[test]
        fn disabled_gate_never_silences(v in prop::collection::vec(-1e3f64..1e3, 2..20)) {
            let l = LogitVector::new(v).unwrap();
            prop_assert!(!decide(&l, &ThresholdTable::disabled(l.len())).unwrap().is_silence());
        }
    }
}
