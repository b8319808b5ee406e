//! Class-aware evaluation: CA-SDRi, SNRi, mixture- and source-level label
//! accuracy, and report aggregation.
//!
//! Predicted stems are matched to ground truth by class label only. For a
//! scene with true classes `C` and predicted non-silence classes `Ĉ`,
//! `P_k = sdri(s_k, ŝ_k, x)` for `k ∈ C ∩ Ĉ`, `P_k = 0` for every other
//! `k ∈ C ∪ Ĉ`, and CA-SDRi is the mean of `P_k` over `C ∪ Ĉ`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::audio::{sdr, AudioBuffer};
use crate::error::{Error, Result};
use crate::manifest::LoadedScene;
use crate::pipeline::{PipelineResult, NUM_SLOTS};
use crate::vocab::{ClassId, Label, LabelSet};

/// `sdr(ref, est) - sdr(ref, mixture)`, both terms clamped.
pub fn sdri(reference: &AudioBuffer, estimate: &AudioBuffer, mixture: &AudioBuffer) -> Result<f64> {
    Ok(sdr(reference, estimate)? - sdr(reference, mixture)?)
}

/// Ground-truth foreground stems of one scene, classes distinct.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneTruth {
    stems: Vec<(ClassId, AudioBuffer)>,
}

impl SceneTruth {
    pub fn new(stems: Vec<(ClassId, AudioBuffer)>) -> Result<Self> {
        if stems.len() > NUM_SLOTS {
            return Err(Error::InvalidArgument(format!(
                "{} foreground stems, at most 3",
                stems.len()
            )));
        }
        for (i, (k, _)) in stems.iter().enumerate() {
            if stems[..i].iter().any(|(j, _)| j == k) {
                return Err(Error::DuplicateLabel(k.0));
            }
        }
        Ok(Self { stems })
    }

    pub fn from_scene(scene: &LoadedScene) -> Result<Self> {
        Self::new(scene.foreground())
    }

    pub fn labels(&self) -> LabelSet {
        self.stems.iter().map(|(k, _)| *k).collect()
    }

    pub fn stem(&self, class: ClassId) -> Option<&AudioBuffer> {
        self.stems.iter().find(|(k, _)| *k == class).map(|(_, s)| s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictedSource {
    pub waveform: AudioBuffer,
    pub label: Label,
}

/// Exactly three predicted sources with mutually distinct non-silence labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenePrediction {
    slots: Vec<PredictedSource>,
}

impl ScenePrediction {
    pub fn new(slots: Vec<PredictedSource>) -> Result<Self> {
        if slots.len() != NUM_SLOTS {
            return Err(Error::ShapeMismatch(format!(
                "prediction has {} slots, expected 3",
                slots.len()
            )));
        }
        let mut seen = LabelSet::default();
        for s in &slots {
            if let Label::Class(k) = s.label {
                if seen.contains(k) {
                    return Err(Error::DuplicateLabel(k.0));
                }
                seen.0.insert(k);
            }
        }
        Ok(Self { slots })
    }

    pub fn from_result(result: &PipelineResult) -> Result<Self> {
        Self::new(
            result
                .final_slots
                .iter()
                .map(|f| PredictedSource {
                    waveform: f.stem.clone(),
                    label: f.decision.label,
                })
                .collect(),
        )
    }

    pub fn slots(&self) -> &[PredictedSource] {
        &self.slots
    }

    pub fn labels(&self) -> LabelSet {
        self.slots.iter().filter_map(|s| s.label.class()).collect()
    }

    pub fn tracks(&self) -> Vec<Label> {
        self.slots.iter().map(|s| s.label).collect()
    }

    pub fn stem(&self, class: ClassId) -> Option<&AudioBuffer> {
        self.slots
            .iter()
            .find(|s| s.label == Label::Class(class))
            .map(|s| &s.waveform)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaSdri {
    pub value: f64,
    /// Neither truth nor prediction contains any class.
    pub empty: bool,
    /// `P_k` for every class in the union.
    pub per_class: BTreeMap<ClassId, f64>,
}

pub fn ca_sdri(truth: &SceneTruth, pred: &ScenePrediction, mixture: &AudioBuffer) -> Result<CaSdri> {
    let c = truth.labels();
    let c_hat = pred.labels();
    let union = c.union(&c_hat);
    let mut per_class = BTreeMap::new();
    for k in union.iter() {
        let p = match (truth.stem(k), pred.stem(k)) {
            (Some(s), Some(est)) => sdri(s, est, mixture)?,
            _ => 0.0,
        };
        per_class.insert(k, p);
    }
    if union.is_empty() {
        return Ok(CaSdri {
            value: 0.0,
            empty: true,
            per_class,
        });
    }
    let value = per_class.values().sum::<f64>() / union.len() as f64;
    Ok(CaSdri {
        value,
        empty: false,
        per_class,
    })
}

/// Mean non-scale-invariant SNR improvement over the classes present in
/// both truth and prediction.
pub fn snri(truth: &SceneTruth, pred: &ScenePrediction, mixture: &AudioBuffer) -> Result<f64> {
    let matched = truth.labels().intersection(&pred.labels());
    if matched.is_empty() {
        return Err(Error::InvalidArgument(
            "snri: no class matched between truth and prediction".into(),
        ));
    }
    let mut sum = 0.0;
    for k in matched.iter() {
        let s = truth.stem(k).expect("matched");
        sum += sdr(s, pred.stem(k).expect("matched"))? - sdr(s, mixture)?;
    }
    Ok(sum / matched.len() as f64)
}

/// Fraction of scenes whose predicted label set equals the true one.
pub fn acc_mix(truth: &[LabelSet], pred: &[LabelSet]) -> Result<f64> {
    if truth.len() != pred.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} truth vs {} predicted scenes",
            truth.len(),
            pred.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::InvalidArgument("acc_mix over zero scenes".into()));
    }
    let hits = truth.iter().zip(pred).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Fraction of tracks whose predicted label (silence included) equals the
/// true one. Every scene has exactly three tracks.
pub fn acc_src(truth: &[Vec<Label>], pred: &[Vec<Label>]) -> Result<f64> {
    if truth.len() != pred.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} truth vs {} predicted scenes",
            truth.len(),
            pred.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::InvalidArgument("acc_src over zero scenes".into()));
    }
    let mut hits = 0usize;
    for (t, p) in truth.iter().zip(pred) {
        if t.len() != NUM_SLOTS || p.len() != NUM_SLOTS {
            return Err(Error::ShapeMismatch(format!(
                "scene tracks {} vs {}, expected 3 each",
                t.len(),
                p.len()
            )));
        }
        hits += t.iter().zip(p).filter(|(a, b)| a == b).count();
    }
    Ok(hits as f64 / (NUM_SLOTS * truth.len()) as f64)
}

/// Orders the true labels (padded with silence to three) against predicted
/// tracks: a slot predicting a true class gets that class; remaining silent
/// truths go to slots predicting silence first; everything else fills the
/// rest in ascending class order.
pub fn align_tracks(truth: &LabelSet, pred: &[Label]) -> Result<Vec<Label>> {
    if pred.len() != NUM_SLOTS || truth.len() > NUM_SLOTS {
        return Err(Error::ShapeMismatch(
            "track alignment needs 3 slots and at most 3 classes".into(),
        ));
    }
    let mut out: Vec<Option<Label>> = pred
        .iter()
        .map(|p| match p {
            Label::Class(k) if truth.contains(*k) => Some(*p),
            _ => None,
        })
        .collect();
    let predicted: LabelSet = pred.iter().filter_map(|l| l.class()).collect();
    let mut missing = truth.iter().filter(|k| !predicted.contains(*k)).map(Label::Class);
    let mut silences = NUM_SLOTS - truth.len();
    for (slot, p) in out.iter_mut().zip(pred) {
        if slot.is_none() && p.is_silence() && silences > 0 {
            *slot = Some(Label::Silence);
            silences -= 1;
        }
    }
    for slot in out.iter_mut().filter(|s| s.is_none()) {
        *slot = Some(missing.next().unwrap_or_else(|| {
            silences -= 1;
            Label::Silence
        }));
    }
    Ok(out.into_iter().map(|l| l.expect("filled")).collect())
}

/// Per-scene evaluation row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneRow {
    pub scene_id: String,
    pub ca_sdri: f64,
    pub ca_sdri_empty: bool,
    /// `None` when no class matched.
    pub snri: Option<f64>,
    pub exact_match: bool,
    pub truth_labels: LabelSet,
    pub pred_labels: LabelSet,
    pub truth_tracks: Vec<Label>,
    pub pred_tracks: Vec<Label>,
    pub src_correct: Vec<bool>,
    pub per_class: BTreeMap<ClassId, f64>,
}

impl SceneRow {
    pub fn src_correct_count(&self) -> usize {
        self.src_correct.iter().filter(|&&c| c).count()
    }
}

pub fn evaluate_scene(
    scene_id: &str,
    truth: &SceneTruth,
    pred: &ScenePrediction,
    mixture: &AudioBuffer,
) -> Result<SceneRow> {
    let ca = ca_sdri(truth, pred, mixture).map_err(|e| Error::scene(scene_id, e.to_string()))?;
    let truth_labels = truth.labels();
    let pred_labels = pred.labels();
    let snri = if truth_labels.intersection(&pred_labels).is_empty() {
        None
    } else {
        Some(snri(truth, pred, mixture)?)
    };
    let pred_tracks = pred.tracks();
    let truth_tracks = align_tracks(&truth_labels, &pred_tracks)?;
    let src_correct = truth_tracks.iter().zip(&pred_tracks).map(|(a, b)| a == b).collect();
    Ok(SceneRow {
        scene_id: scene_id.to_string(),
        ca_sdri: ca.value,
        ca_sdri_empty: ca.empty,
        snri,
        exact_match: truth_labels == pred_labels,
        truth_labels,
        pred_labels,
        truth_tracks,
        pred_tracks,
        src_correct,
        per_class: ca.per_class,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSummary {
    pub class: ClassId,
    /// Mean `P_k` over the scenes where `k` is true or predicted.
    pub mean_p: f64,
    pub scenes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_scenes: usize,
    pub mean_ca_sdri: f64,
    pub mean_snri: Option<f64>,
    pub snri_scenes: usize,
    pub acc_mix: f64,
    pub acc_src: f64,
    pub empty_scenes: usize,
    pub per_class: Vec<ClassSummary>,
    pub scenes: Vec<SceneRow>,
}

/// Unweighted means over rows, computed as plain sequential folds in row order.
pub fn aggregate_report(rows: Vec<SceneRow>) -> Result<EvalReport> {
    if rows.is_empty() {
        return Err(Error::InvalidArgument("cannot aggregate zero scenes".into()));
    }
    let n = rows.len();
    let mut ca_sum = 0.0;
    let mut snri_sum = 0.0;
    let mut snri_n = 0usize;
    let mut exact = 0usize;
    let mut correct = 0usize;
    let mut empty = 0usize;
    let mut per_class: BTreeMap<ClassId, (f64, usize)> = BTreeMap::new();
    for r in &rows {
        if r.src_correct.len() != NUM_SLOTS {
            return Err(Error::ShapeMismatch(format!(
                "scene {} has {} tracks",
                r.scene_id,
                r.src_correct.len()
            )));
        }
        ca_sum += r.ca_sdri;
        if let Some(s) = r.snri {
            snri_sum += s;
            snri_n += 1;
        }
        exact += r.exact_match as usize;
        correct += r.src_correct_count();
        empty += r.ca_sdri_empty as usize;
        for (&k, &p) in &r.per_class {
            let e = per_class.entry(k).or_insert((0.0, 0));
            e.0 += p;
            e.1 += 1;
        }
    }
    Ok(EvalReport {
        n_scenes: n,
        mean_ca_sdri: ca_sum / n as f64,
        mean_snri: (snri_n > 0).then(|| snri_sum / snri_n as f64),
        snri_scenes: snri_n,
        acc_mix: exact as f64 / n as f64,
        acc_src: correct as f64 / (NUM_SLOTS * n) as f64,
        empty_scenes: empty,
        per_class: per_class
            .into_iter()
            .map(|(class, (sum, count))| ClassSummary {
                class,
                mean_p: sum / count as f64,
                scenes: count,
            })
            .collect(),
        scenes: rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(x: &[f64]) -> AudioBuffer {
        AudioBuffer::mono(x.to_vec(), 8000).unwrap()
    }

    fn cls(k: usize) -> Label {
        Label::Class(ClassId(k))
    }

    fn set(ks: &[usize]) -> LabelSet {
        ks.iter().map(|&k| ClassId(k)).collect()
    }

    #[test]
    fn sdri_examples() {
        let r = m(&[1.0, 0.0]);
        let x = m(&[1.0, 1.0]);
        assert_eq!(sdri(&r, &x, &x).unwrap(), 0.0);
        let v = sdri(&r, &m(&[1.0, 0.5]), &x).unwrap();
        assert!((v - 6.020_599_913_279_624).abs() < 1e-9);
        assert_eq!(sdri(&r, &r, &x).unwrap(), 60.0);
        assert!(sdri(&m(&[0.0, 0.0]), &x, &x).is_err());
    }

    /// Builds a scene whose per-class SDRi values are the given `P_k`:
    /// reference `[1, 0]`, mixture `[1, 1]`, estimate `[1, 10^(-P/20)]`.
    fn with_p(truth: &[usize], pred: &[(usize, f64)]) -> (SceneTruth, ScenePrediction, AudioBuffer) {
        let r = m(&[1.0, 0.0]);
        let t = SceneTruth::new(truth.iter().map(|&k| (ClassId(k), r.clone())).collect()).unwrap();
        let mut slots: Vec<PredictedSource> = pred
            .iter()
            .map(|&(k, p)| PredictedSource {
                waveform: m(&[1.0, 10f64.powf(-p / 20.0)]),
                label: cls(k),
            })
            .collect();
        while slots.len() < 3 {
            slots.push(PredictedSource {
                waveform: m(&[0.0, 0.0]),
                label: Label::Silence,
            });
        }
        (t, ScenePrediction::new(slots).unwrap(), m(&[1.0, 1.0]))
    }

    #[test]
    fn ca_sdri_examples() {
        let (t, p, x) = with_p(&[1, 2], &[(1, 10.0), (2, 6.0)]);
        assert!((ca_sdri(&t, &p, &x).unwrap().value - 8.0).abs() < 1e-9);
        let (t, p, x) = with_p(&[1], &[(1, 6.0), (2, 6.0)]);
        assert!((ca_sdri(&t, &p, &x).unwrap().value - 3.0).abs() < 1e-9);
        let (t, p, x) = with_p(&[1, 2], &[]);
        let r = ca_sdri(&t, &p, &x).unwrap();
        assert_eq!(r.value, 0.0);
        assert!(!r.empty);
        let (t, p, x) = with_p(&[], &[]);
        let r = ca_sdri(&t, &p, &x).unwrap();
        assert!(r.empty && r.value == 0.0);
    }

    #[test]
    fn duplicate_predictions_rejected() {
        let s = PredictedSource {
            waveform: m(&[1.0]),
            label: cls(3),
        };
        let silence = PredictedSource {
            waveform: m(&[1.0]),
            label: Label::Silence,
        };
        assert!(matches!(
            ScenePrediction::new(vec![s.clone(), s, silence]),
            Err(Error::DuplicateLabel(3))
        ));
    }

    #[test]
    fn snri_examples() {
        let (t, p, x) = with_p(&[1], &[(1, 3.010_299_956_639_812)]);
        assert!((snri(&t, &p, &x).unwrap() - 3.010_299_956_639_812).abs() < 1e-9);
        let (t, p, x) = with_p(&[1], &[(2, 3.0)]);
        assert!(snri(&t, &p, &x).is_err());
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(
            acc_mix(&[set(&[1]), set(&[1, 2])], &[set(&[1]), set(&[1])]).unwrap(),
            0.5
        );
        assert_eq!(acc_mix(&[set(&[1])], &[set(&[1, 2])]).unwrap(), 0.0);
        assert!(acc_mix(&[set(&[1])], &[]).is_err());
        let s = Label::Silence;
        let t = vec![vec![cls(1), s, s], vec![cls(2), cls(3), s]];
        let p = vec![vec![cls(1), cls(4), s], vec![cls(2), cls(3), s]];
        assert!((acc_src(&t, &p).unwrap() - 5.0 / 6.0).abs() < 1e-15);
        assert_eq!(acc_src(&[vec![s, s, s]], &[vec![s, s, s]]).unwrap(), 1.0);
        assert!(acc_src(&[vec![s, s]], &[vec![s, s]]).is_err());
    }

    #[test]
    fn alignment_examples() {
        let s = Label::Silence;
        assert_eq!(
            align_tracks(&set(&[1]), &[cls(1), cls(2), s]).unwrap(),
            vec![cls(1), s, s]
        );
        assert_eq!(
            align_tracks(&set(&[1, 2]), &[s, cls(2), s]).unwrap(),
            vec![s, cls(2), cls(1)]
        );
        assert_eq!(
            align_tracks(&set(&[5, 6, 7]), &[s, s, s]).unwrap(),
            vec![cls(5), cls(6), cls(7)]
        );
    }

    #[test]
    fn aggregates() {
        let (t, p, x) = with_p(&[1], &[(1, 10.0)]);
        let a = evaluate_scene("a", &t, &p, &x).unwrap();
        let single = aggregate_report(vec![a.clone()]).unwrap();
        assert_eq!(single.mean_ca_sdri, a.ca_sdri);
        assert_eq!(single.acc_src, 1.0);
        let (t, p, x) = with_p(&[1], &[(1, 6.0)]);
        let b = evaluate_scene("b", &t, &p, &x).unwrap();
        let two = aggregate_report(vec![a, b]).unwrap();
        assert!((two.mean_ca_sdri - 8.0).abs() < 1e-9);
        assert_eq!(two.per_class[0].scenes, 2);
        let json = serde_json::to_string(&two).unwrap();
        let back: EvalReport = serde_json::from_str(&json).unwrap();
        assert_eq!(aggregate_report(back.scenes.clone()).unwrap(), two);
        assert_eq!(back, two);
        assert!(aggregate_report(vec![]).is_err());
    }

    fn arb_scene() -> impl Strategy<Value = (Vec<usize>, Vec<(usize, f64)>)> {
        (
            prop::sample::subsequence((0..6).collect::<Vec<_>>(), 0..=3),
            prop::sample::subsequence((0..6).collect::<Vec<_>>(), 0..=3),
            prop::collection::vec(0.0f64..30.0, 3),
        )
            .prop_map(|(t, p, ps)| (t, p.into_iter().zip(ps).collect()))
    }

    proptest! {
        #[test]
        fn false_positive_never_helps((t, p) in arb_scene(), extra in 0usize..6) {
            prop_assume!(p.len() < 3 && !p.iter().any(|(k, _)| *k == extra) && !t.contains(&extra));
            let (tr, pr, x) = with_p(&t, &p);
            let base = ca_sdri(&tr, &pr, &x).unwrap().value;
            let mut more = p.clone();
            more.push((extra, 20.0));
            let (tr, pr, x) = with_p(&t, &more);
            prop_assert!(ca_sdri(&tr, &pr, &x).unwrap().value <= base + 1e-12);
        }

        #[test]
        fn dropping_true_positive_never_helps((t, p) in arb_scene(), which in 0usize..3) {
            let hits: Vec<usize> = p.iter().enumerate().filter(|(_, (k, _))| t.contains(k)).map(|(i, _)| i).collect();
            prop_assume!(!hits.is_empty());
            let (tr, pr, x) = with_p(&t, &p);
            let base = ca_sdri(&tr, &pr, &x).unwrap().value;
            let mut fewer = p.clone();
            fewer.remove(hits[which % hits.len()]);
            let (tr, pr, x) = with_p(&t, &fewer);
            prop_assert!(ca_sdri(&tr, &pr, &x).unwrap().value <= base + 1e-12);
        }

        #[test]
        fn relabelling_is_invariant((t, p) in arb_scene(), shift in 1usize..12) {
            let (tr, pr, x) = with_p(&t, &p);
            let base = ca_sdri(&tr, &pr, &x).unwrap().value;
            let perm = |k: usize| (k + shift) % 12;
            let t2: Vec<usize> = t.iter().map(|&k| perm(k)).collect();
            let p2: Vec<(usize, f64)> = p.iter().map(|&(k, v)| (perm(k), v)).collect();
            let (tr, pr, x) = with_p(&t2, &p2);
            prop_assert!((ca_sdri(&tr, &pr, &x).unwrap().value - base).abs() < 1e-12);
        }

        #[test]
        fn aligned_count_matches_closed_form((t, p) in arb_scene()) {
            let (tr, pr, _) = with_p(&t, &p);
            let tracks = pr.tracks();
            let aligned = align_tracks(&tr.labels(), &tracks).unwrap();
            let correct = aligned.iter().zip(&tracks).filter(|(a, b)| a == b).count();
            let inter = tr.labels().intersection(&pr.labels()).len();
            prop_assert_eq!(correct, inter + (3 - t.len()).min(3 - p.len()));
            let mut sorted_truth: Vec<Label> = aligned.clone();
            sorted_truth.sort_by_key(|l| l.class());
            let mut expect: Vec<Label> = t.iter().map(|&k| cls(k)).collect();
            expect.resize(3, Label::Silence);
            expect.sort_by_key(|l| l.class());
            prop_assert_eq!(sorted_truth, expect);
        }
    }
}
