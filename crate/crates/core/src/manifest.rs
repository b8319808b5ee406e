//! Scene ground truth: JSONL manifests and loading of the referenced audio.
//!
//! Each manifest line describes one mixture. Stem files hold the unscaled
//! source; the mixture is the sum of every stem multiplied by its `gain`.
//! Paths are relative to the directory containing the manifest file.

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::audio::wav::read_wav;
use crate::audio::{apply_gain, AudioBuffer};
use crate::error::{Error, Result};
use crate::vocab::{ClassId, LabelSet};

/// Maximum number of foreground stems per scene.
pub const MAX_FOREGROUND: usize = 3;
/// Maximum number of interference stems per scene.
pub const MAX_INTERFERENCE: usize = 2;
/// Relative tolerance for the mixture == sum-of-scaled-stems check on load.
pub const MIXTURE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StemRole {
    Foreground,
    Interference,
    Noise,
}

/// What per-stem SNRs in a manifest are measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SnrReference {
    #[default]
    Noise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StemEntry {
    pub path: PathBuf,
    pub role: StemRole,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_id: Option<ClassId>,
    pub gain: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr_db: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneManifest {
    pub scene_id: String,
    pub mixture_path: PathBuf,
    pub stems: Vec<StemEntry>,
    pub sample_rate: u32,
    #[serde(default)]
    pub snr_reference: SnrReference,
}

impl SceneManifest {
    /// Checks the structural invariants (role counts, distinct classes, gains).
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Error::Manifest(format!("{}: {m}", self.scene_id));
        let count = |r| self.stems.iter().filter(|s| s.role == r).count();
        let (fg, intf, noise) = (
            count(StemRole::Foreground),
            count(StemRole::Interference),
            count(StemRole::Noise),
        );
        if !(1..=MAX_FOREGROUND).contains(&fg) {
            return Err(bad(format!("{fg} foreground stems (need 1..=3)")));
        }
        if intf > MAX_INTERFERENCE {
            return Err(bad(format!("{intf} interference stems (need 0..=2)")));
        }
        if noise != 1 {
            return Err(bad(format!("{noise} noise stems (need exactly 1)")));
        }
        if self.sample_rate == 0 {
            return Err(bad("sample rate must be positive".into()));
        }
        let mut seen = Vec::new();
        for s in &self.stems {
            if !s.gain.is_finite() {
                return Err(bad(format!("non-finite gain for {}", s.path.display())));
            }
            match (s.role, s.class_id) {
                (StemRole::Foreground, Some(c)) => {
                    if seen.contains(&c) {
                        return Err(bad(format!("foreground class {c} repeated")));
                    }
                    seen.push(c);
                }
                (StemRole::Foreground, None) => {
                    return Err(bad(format!("foreground {} lacks class_id", s.path.display())))
                }
                (_, Some(_)) => return Err(bad(format!("class_id on non-foreground {}", s.path.display()))),
                _ => {}
            }
        }
        Ok(())
    }

    /// Ground-truth foreground label set.
    pub fn labels(&self) -> LabelSet {
        self.stems.iter().filter_map(|s| s.class_id).collect()
    }

    /// Loads the mixture and gain-scaled stems, validating that the mixture
    /// equals their sum within [`MIXTURE_TOLERANCE`] (relative).
    pub fn load(&self, base_dir: &Path) -> Result<LoadedScene> {
        self.validate()?;
        let scene_err = |e: Error| Error::scene(&self.scene_id, e.to_string());
        let check_rate = |b: &AudioBuffer| {
            if b.sample_rate() != self.sample_rate {
                Err(Error::SampleRateMismatch {
                    expected: self.sample_rate,
                    found: b.sample_rate(),
                })
            } else {
                Ok(())
            }
        };
        let mixture = read_wav(base_dir.join(&self.mixture_path)).map_err(scene_err)?;
        check_rate(&mixture).map_err(scene_err)?;
        let mut stems = Vec::with_capacity(self.stems.len());
        for s in &self.stems {
            let raw = read_wav(base_dir.join(&s.path)).map_err(scene_err)?;
            check_rate(&raw).map_err(scene_err)?;
            mixture.check_compatible(&raw).map_err(scene_err)?;
            stems.push(apply_gain(&raw, s.gain)?);
        }
        let err = relative_mixture_error(&mixture, &stems)?;
        if err > MIXTURE_TOLERANCE {
            return Err(Error::scene(
                &self.scene_id,
                format!("mixture deviates from stem sum by {err:.3e} (relative)"),
            ));
        }
        Ok(LoadedScene {
            manifest: self.clone(),
            mixture,
            stems,
        })
    }
}

/// `|mixture - sum(stems)| / |sum(stems)|`, Euclidean norms.
pub fn relative_mixture_error(mixture: &AudioBuffer, stems: &[AudioBuffer]) -> Result<f64> {
    let sum = crate::audio::mixdown(stems)?;
    mixture.check_compatible(&sum)?;
    let diff: f64 = mixture
        .samples()
        .iter()
        .zip(sum.samples())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let norm = sum.energy().sqrt();
    Ok(if norm == 0.0 { diff } else { diff / norm })
}

/// A manifest with its audio in memory. `stems[i]` is the gain-scaled
/// version of `manifest.stems[i]`.
#[derive(Debug, Clone)]
pub struct LoadedScene {
    pub manifest: SceneManifest,
    pub mixture: AudioBuffer,
    pub stems: Vec<AudioBuffer>,
}

impl LoadedScene {
    pub fn scene_id(&self) -> &str {
        &self.manifest.scene_id
    }

    fn by_role(&self, role: StemRole) -> impl Iterator<Item = (&StemEntry, &AudioBuffer)> {
        self.manifest
            .stems
            .iter()
            .zip(&self.stems)
            .filter(move |(e, _)| e.role == role)
    }

    /// Foreground stems in manifest order with their classes.
    pub fn foreground(&self) -> Vec<(ClassId, AudioBuffer)> {
        self.by_role(StemRole::Foreground)
            .map(|(e, b)| (e.class_id.expect("validated"), b.clone()))
            .collect()
    }

    pub fn interference(&self) -> Vec<AudioBuffer> {
        self.by_role(StemRole::Interference).map(|(_, b)| b.clone()).collect()
    }

    pub fn noise(&self) -> AudioBuffer {
        self.by_role(StemRole::Noise)
            .map(|(_, b)| b.clone())
            .next()
            .expect("validated: exactly one noise stem")
    }
}

pub fn read_manifests(path: impl AsRef<Path>) -> Result<Vec<SceneManifest>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let m: SceneManifest =
            serde_json::from_str(&line).map_err(|e| Error::Manifest(format!("{}:{}: {e}", path.display(), n + 1)))?;
        m.validate()?;
        out.push(m);
    }
    Ok(out)
}

/// Serializes manifests as JSONL (one object per line).
pub fn write_manifests(mut w: impl Write, manifests: &[SceneManifest]) -> Result<()> {
    for m in manifests {
        serde_json::to_writer(&mut w, m)?;
        w.write_all(b"\n").map_err(|e| Error::io("<manifest>", e))?;
    }
    Ok(())
}

/// Directory that relative manifest paths resolve against.
pub fn manifest_base_dir(manifest_path: &Path) -> PathBuf {
    manifest_path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}
