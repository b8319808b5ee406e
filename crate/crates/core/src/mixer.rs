//! Seeded scene synthesis.
//!
//! A scene is 1–3 foreground events drawn from distinct classes, up to two
//! interference events and one background noise. Foreground SNRs are drawn
//! uniformly from `fg_snr_range`, interference SNRs from `intf_snr_range`,
//! both measured against the noise stem power over the full clip. The noise
//! stem has unit gain.

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::audio::wav::{read_wav, write_wav};
use crate::audio::{apply_gain, mixdown, power, AudioBuffer, DEFAULT_SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::manifest::{SceneManifest, SnrReference, StemEntry, StemRole, MAX_FOREGROUND, MAX_INTERFERENCE};
use crate::seed::derive_seed;
use crate::vocab::{ClassId, ClassVocabulary};

/// A fixed count or an inclusive `[lo, hi]` range drawn uniformly per scene.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CountSpec {
    Fixed(usize),
    Range([usize; 2]),
}

impl CountSpec {
    fn bounds(self) -> (usize, usize) {
        match self {
            CountSpec::Fixed(n) => (n, n),
            CountSpec::Range([lo, hi]) => (lo, hi),
        }
    }

    fn draw(self, rng: &mut impl Rng) -> usize {
        let (lo, hi) = self.bounds();
        rng.random_range(lo..=hi)
    }
}

fn default_fg_snr() -> [f64; 2] {
    [5.0, 20.0]
}

fn default_intf_snr() -> [f64; 2] {
    [0.0, 15.0]
}

fn default_sample_rate() -> u32 {
    DEFAULT_SAMPLE_RATE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub n_foreground: CountSpec,
    pub n_interference: CountSpec,
    #[serde(default = "default_fg_snr")]
    pub fg_snr_range: [f64; 2],
    #[serde(default = "default_intf_snr")]
    pub intf_snr_range: [f64; 2],
    /// Seconds.
    pub duration: f64,
    pub seed: u64,
    #[serde(default = "default_sample_rate")]
    pub sample_rate: u32,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            n_foreground: CountSpec::Range([1, MAX_FOREGROUND]),
            n_interference: CountSpec::Range([0, MAX_INTERFERENCE]),
            fg_snr_range: default_fg_snr(),
            intf_snr_range: default_intf_snr(),
            duration: 1.0,
            seed: 0,
            sample_rate: DEFAULT_SAMPLE_RATE,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(format!("scene spec: {m}")));
        let (flo, fhi) = self.n_foreground.bounds();
        if flo < 1 || fhi > MAX_FOREGROUND || flo > fhi {
            return bad(format!("n_foreground must lie in 1..=3, got {flo}..={fhi}"));
        }
        let (ilo, ihi) = self.n_interference.bounds();
        if ihi > MAX_INTERFERENCE || ilo > ihi {
            return bad(format!("n_interference must lie in 0..=2, got {ilo}..={ihi}"));
        }
        for (name, [lo, hi]) in [
            ("fg_snr_range", self.fg_snr_range),
            ("intf_snr_range", self.intf_snr_range),
        ] {
            if !lo.is_finite() || !hi.is_finite() || lo > hi {
                return bad(format!("{name} must be an ordered finite range, got [{lo}, {hi}]"));
            }
        }
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return bad(format!("duration must be positive, got {}", self.duration));
        }
        if self.sample_rate == 0 {
            return bad("sample_rate must be positive".into());
        }
        if self.frames() == 0 {
            return bad("duration shorter than one sample".into());
        }
        Ok(())
    }

    pub fn frames(&self) -> usize {
        (self.duration * self.sample_rate as f64).round() as usize
    }

    /// Spec for the `index`-th scene of a batch: same parameters, derived seed.
    pub fn for_index(&self, index: u64) -> SceneSpec {
        SceneSpec {
            seed: derive_seed(self.seed, index),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone)]
pub struct TargetEntry {
    pub class: ClassId,
    pub audio: AudioBuffer,
}

#[derive(Debug, Clone)]
pub struct InterferenceEntry {
    pub tag: String,
    pub audio: AudioBuffer,
}

/// Source material for scene synthesis. Every entry is mono at `sample_rate`.
#[derive(Debug, Clone)]
pub struct SourceBank {
    pub sample_rate: u32,
    pub targets: Vec<TargetEntry>,
    pub interference: Vec<InterferenceEntry>,
    pub noise: Vec<AudioBuffer>,
}

#[derive(Debug, Deserialize)]
struct BankFile {
    targets: Vec<BankFileTarget>,
    #[serde(default)]
    interference: Vec<BankFileInterference>,
    noise: Vec<PathBuf>,
}

#[derive(Debug, Deserialize)]
struct BankFileTarget {
    class: String,
    path: PathBuf,
}

#[derive(Debug, Deserialize)]
struct BankFileInterference {
    tag: String,
    path: PathBuf,
}

impl SourceBank {
    /// Loads a bank description:
    /// `{"targets":[{"class","path"}], "interference":[{"tag","path"}], "noise":[path]}`
    /// with paths relative to the bank file.
    pub fn load(path: impl AsRef<Path>, vocab: &ClassVocabulary) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: BankFile = serde_json::from_str(&text)?;
        let base = crate::manifest::manifest_base_dir(path);
        let mut sample_rate = None;
        let mut load = |p: &Path| -> Result<AudioBuffer> {
            let buf = read_wav(base.join(p))?;
            if buf.channels() != 1 {
                return Err(Error::InvalidArgument(format!(
                    "{}: bank sources must be mono",
                    p.display()
                )));
            }
            match sample_rate {
                None => sample_rate = Some(buf.sample_rate()),
                Some(sr) if sr != buf.sample_rate() => {
                    return Err(Error::SampleRateMismatch {
                        expected: sr,
                        found: buf.sample_rate(),
                    })
                }
                _ => {}
            }
            Ok(buf)
        };
        let mut targets = Vec::new();
        for t in &file.targets {
            let class = vocab
                .id(&t.class)
                .ok_or_else(|| Error::InvalidArgument(format!("bank class {:?} not in vocabulary", t.class)))?;
            targets.push(TargetEntry {
                class,
                audio: load(&t.path)?,
            });
        }
        let mut interference = Vec::new();
        for i in &file.interference {
            interference.push(InterferenceEntry {
                tag: i.tag.clone(),
                audio: load(&i.path)?,
            });
        }
        let noise = file.noise.iter().map(|p| load(p)).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            sample_rate: sample_rate.unwrap_or(DEFAULT_SAMPLE_RATE),
            targets,
            interference,
            noise,
        })
    }

    /// Self-contained bank of synthetic sources: each class gets its own tone
    /// family (harmonic stack, chirp, amplitude-modulated tone or pulse
    /// train) on a log-spaced base frequency. Interference entries are
    /// inharmonic partial clusters; noise entries are white and low-passed
    /// Gaussian noise. All samples are `f32`-representable.
    pub fn procedural(
        num_classes: usize,
        sample_rate: u32,
        duration: f64,
        entries_per_class: usize,
        seed: u64,
    ) -> Result<Self> {
        if num_classes == 0 || entries_per_class == 0 {
            return Err(Error::InvalidArgument(
                "procedural bank needs classes and entries".into(),
            ));
        }
        let frames = (duration * sample_rate as f64).round() as usize;
        if frames == 0 {
            return Err(Error::InvalidArgument("procedural bank duration too short".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sr = sample_rate as f64;
        let nyquist = 0.45 * sr;
        let mut targets = Vec::with_capacity(num_classes * entries_per_class);
        for k in 0..num_classes {
            let base = 160.0 * 2f64.powf(5.0 * k as f64 / num_classes as f64);
            for j in 0..entries_per_class {
                let detune = 1.0 + 0.02 * (j as f64 - (entries_per_class as f64 - 1.0) / 2.0);
                let f = (base * detune).min(nyquist / 3.0);
                let phase: f64 = rng.random_range(0.0..TAU);
                let samples: Vec<f64> = (0..frames)
                    .map(|i| {
                        let t = i as f64 / sr;
                        match k % 4 {
                            0 => (1..=3)
                                .map(|h| (TAU * h as f64 * f * t + phase * h as f64).sin() / h as f64)
                                .sum(),
                            1 => {
                                let sweep = 0.5 * f / duration;
                                (TAU * (f * t + 0.5 * sweep * t * t) + phase).sin()
                            }
                            2 => {
                                let rate = 3.0 + (k % 5) as f64;
                                (0.6 + 0.4 * (TAU * rate * t).sin()) * (TAU * f * t + phase).sin()
                            }
                            _ => {
                                let period = 0.125 + 0.02 * (k % 4) as f64;
                                let env = (-(t % period) / 0.03).exp();
                                (0.05 + env) * (TAU * f * t + phase).sin()
                            }
                        }
                    })
                    .collect();
                targets.push(TargetEntry {
                    class: ClassId(k),
                    audio: normalized(samples, sample_rate)?,
                });
            }
        }
        let interference = (0..4)
            .map(|i| {
                let partials: Vec<(f64, f64, f64)> = (0..5)
                    .map(|_| {
                        (
                            rng.random_range(200.0..nyquist.min(6000.0)),
                            rng.random_range(0.0..TAU),
                            rng.random_range(0.3..1.0),
                        )
                    })
                    .collect();
                let wobble = rng.random_range(0.5..2.0);
                let samples = (0..frames)
                    .map(|n| {
                        let t = n as f64 / sr;
                        let env = 0.5 + 0.5 * (TAU * wobble * t).sin().abs();
                        env * partials
                            .iter()
                            .map(|(f, p, a)| a * (TAU * f * t + p).sin())
                            .sum::<f64>()
                    })
                    .collect();
                Ok(InterferenceEntry {
                    tag: format!("intf_{i}"),
                    audio: normalized(samples, sample_rate)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let white: Vec<f64> = (0..frames).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let mut low = Vec::with_capacity(frames);
        let mut state = 0.0;
        for _ in 0..frames {
            state = 0.95 * state + rng.sample::<f64, _>(StandardNormal);
            low.push(state);
        }
        let noise = vec![normalized(white, sample_rate)?, normalized(low, sample_rate)?];
        Ok(Self {
            sample_rate,
            targets,
            interference,
            noise,
        })
    }

    /// Classes with at least one target entry, ascending.
    pub fn classes(&self) -> Vec<ClassId> {
        let mut c: Vec<ClassId> = self.targets.iter().map(|t| t.class).collect();
        c.sort();
        c.dedup();
        c
    }

    /// Checks the bank can serve `spec` over `vocab`: every class has an
    /// entry, there is noise, and interference exists if the spec asks for it.
    pub fn check(&self, spec: &SceneSpec, vocab: &ClassVocabulary) -> Result<()> {
        let have = self.classes();
        let mut missing: Vec<String> = vocab
            .ids()
            .filter(|c| !have.contains(c))
            .map(|c| vocab.name(c).unwrap_or("?").to_string())
            .collect();
        if self.noise.is_empty() {
            missing.push("<noise>".into());
        }
        if spec.n_interference.bounds().1 > 0 && self.interference.is_empty() {
            missing.push("<interference>".into());
        }
        if !missing.is_empty() {
            return Err(Error::InsufficientBank(missing));
        }
        if spec.sample_rate != self.sample_rate {
            return Err(Error::SampleRateMismatch {
                expected: spec.sample_rate,
                found: self.sample_rate,
            });
        }
        Ok(())
    }
}

fn normalized(samples: Vec<f64>, sample_rate: u32) -> Result<AudioBuffer> {
    let peak = samples.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let scale = if peak > 0.0 { 0.5 / peak } else { 1.0 };
    AudioBuffer::mono(
        samples.into_iter().map(|x| (x * scale) as f32 as f64).collect(),
        sample_rate,
    )
}

/// Linear gain `g` with `10 log10(power(g * src) / power(noise)) = target_db`.
pub fn gain_for_snr(src: &AudioBuffer, noise: &AudioBuffer, target_db: f64) -> Result<f64> {
    if !target_db.is_finite() {
        return Err(Error::NonFinite("target SNR".into()));
    }
    let ps = power(src)?;
    let pn = power(noise)?;
    if ps == 0.0 {
        return Err(Error::SilentSignal("source for SNR scaling".into()));
    }
    if pn == 0.0 {
        return Err(Error::SilentSignal("noise for SNR scaling".into()));
    }
    Ok((pn / ps * 10f64.powf(target_db / 10.0)).sqrt())
}

/// Realized `10 log10(power(stem) / power(noise))`.
pub fn realized_snr_db(stem: &AudioBuffer, noise: &AudioBuffer) -> Result<f64> {
    Ok(10.0 * (power(stem)? / power(noise)?).log10())
}

/// One synthesized scene.
#[derive(Debug, Clone)]
pub struct SynthesizedScene {
    pub manifest: SceneManifest,
    /// `f32`-quantized sum of `stems`.
    pub mixture: AudioBuffer,
    /// Gain-scaled stems in manifest order.
    pub stems: Vec<AudioBuffer>,
    /// Unscaled sources in manifest order (what the stem files hold).
    pub sources: Vec<AudioBuffer>,
}

impl SynthesizedScene {
    /// Writes the mixture and unscaled stem files under `root`, at the
    /// relative paths recorded in the manifest.
    pub fn write(&self, root: &Path) -> Result<()> {
        write_wav(root.join(&self.manifest.mixture_path), &self.mixture)?;
        for (entry, src) in self.manifest.stems.iter().zip(&self.sources) {
            write_wav(root.join(&entry.path), src)?;
        }
        Ok(())
    }
}

fn fit_length(src: &AudioBuffer, frames: usize, rng: &mut impl Rng) -> Result<AudioBuffer> {
    let x = src.samples();
    let out = match x.len().cmp(&frames) {
        std::cmp::Ordering::Equal => x.to_vec(),
        std::cmp::Ordering::Greater => {
            let off = rng.random_range(0..=x.len() - frames);
            x[off..off + frames].to_vec()
        }
        std::cmp::Ordering::Less => {
            let off = rng.random_range(0..=frames - x.len());
            let mut v = vec![0.0; frames];
            v[off..off + x.len()].copy_from_slice(x);
            v
        }
    };
    AudioBuffer::mono(out, src.sample_rate())
}

/// Draws one scene from `bank` under `spec`. Deterministic for a fixed spec
/// (including its seed), bank and scene id.
pub fn synthesize_scene(
    spec: &SceneSpec,
    bank: &SourceBank,
    vocab: &ClassVocabulary,
    scene_id: &str,
) -> Result<SynthesizedScene> {
    spec.validate()?;
    bank.check(spec, vocab)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let frames = spec.frames();
    let n_fg = spec.n_foreground.draw(&mut rng);
    let n_intf = spec.n_interference.draw(&mut rng);
    let classes = bank.classes();
    if classes.len() < n_fg {
        return Err(Error::InsufficientBank(vec![format!(
            "{n_fg} distinct classes requested, bank has {}",
            classes.len()
        )]));
    }
    let picked: Vec<ClassId> = rand::seq::index::sample(&mut rng, classes.len(), n_fg)
        .into_iter()
        .map(|i| classes[i])
        .collect();

    let mut draws: Vec<(StemRole, Option<ClassId>, AudioBuffer, f64)> = Vec::new();
    for &class in &picked {
        let options: Vec<&TargetEntry> = bank.targets.iter().filter(|t| t.class == class).collect();
        let entry = options.choose(&mut rng).expect("class present");
        let src = fit_length(&entry.audio, frames, &mut rng)?;
        let snr = rng.random_range(spec.fg_snr_range[0]..=spec.fg_snr_range[1]);
        draws.push((StemRole::Foreground, Some(class), src, snr));
    }
    for _ in 0..n_intf {
        let entry = bank.interference.choose(&mut rng).expect("checked non-empty");
        let src = fit_length(&entry.audio, frames, &mut rng)?;
        let snr = rng.random_range(spec.intf_snr_range[0]..=spec.intf_snr_range[1]);
        draws.push((StemRole::Interference, None, src, snr));
    }
    let noise_src = bank.noise.choose(&mut rng).expect("checked non-empty");
    let noise = fit_length(noise_src, frames, &mut rng)?;
    if noise.is_silent() {
        return Err(Error::scene(scene_id, "drawn noise segment is silent"));
    }

    let mut entries = Vec::with_capacity(draws.len() + 1);
    let mut stems = Vec::with_capacity(draws.len() + 1);
    let mut sources = Vec::with_capacity(draws.len() + 1);
    let (mut n_f, mut n_i) = (0, 0);
    for (role, class, src, snr) in draws {
        let gain = gain_for_snr(&src, &noise, snr).map_err(|e| Error::scene(scene_id, e.to_string()))?;
        let name = match role {
            StemRole::Foreground => {
                n_f += 1;
                format!("fg{n_f}.wav")
            }
            _ => {
                n_i += 1;
                format!("intf{n_i}.wav")
            }
        };
        entries.push(StemEntry {
            path: Path::new(scene_id).join(name),
            role,
            class_id: class,
            gain,
            snr_db: Some(snr),
        });
        stems.push(apply_gain(&src, gain)?);
        sources.push(src);
    }
    entries.push(StemEntry {
        path: Path::new(scene_id).join("noise.wav"),
        role: StemRole::Noise,
        class_id: None,
        gain: 1.0,
        snr_db: None,
    });
    stems.push(noise.clone());
    sources.push(noise);

    let mixture = mixdown(&stems)?.quantized_f32();
    let manifest = SceneManifest {
        scene_id: scene_id.to_string(),
        mixture_path: Path::new(scene_id).join("mixture.wav"),
        stems: entries,
        sample_rate: spec.sample_rate,
        snr_reference: SnrReference::Noise,
    };
    manifest.validate()?;
    Ok(SynthesizedScene {
        manifest,
        mixture,
        stems,
        sources,
    })
}

/// Scene id used for the `index`-th scene of a batch.
pub fn scene_id(index: usize) -> String {
    format!("scene_{index:05}")
}

/// Synthesizes `count` scenes; scene `i` uses `spec.for_index(i)`.
pub fn synthesize_batch(
    spec: &SceneSpec,
    bank: &SourceBank,
    vocab: &ClassVocabulary,
    count: usize,
) -> Result<Vec<SynthesizedScene>> {
    (0..count)
        .map(|i| synthesize_scene(&spec.for_index(i as u64), bank, vocab, &scene_id(i)))
        .collect()
}
