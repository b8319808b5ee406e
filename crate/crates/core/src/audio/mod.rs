//! Signal containers and the power/gain/SDR arithmetic shared by every stage.
//!
//! Samples are held as `f64` in channel-major order. Files on disk are 32-bit
//! float WAV (see [`wav`]), so every value read from disk is exactly
//! representable here and writes back bit-exactly.

pub mod wav;

use crate::error::{Error, Result};

/// Default corpus sample rate in Hz.
pub const DEFAULT_SAMPLE_RATE: u32 = 32_000;

/// Metric-side SDR values are clamped to `[-SDR_CLAMP_DB, SDR_CLAMP_DB]`.
pub const SDR_CLAMP_DB: f64 = 60.0;

/// A multichannel sampled waveform.
///
/// Invariants: `channels >= 1`, every channel has the same frame count,
/// `sample_rate > 0`, and every sample is finite.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    data: Vec<f64>,
    channels: usize,
    sample_rate: u32,
}

impl AudioBuffer {
    /// Single-channel buffer.
    pub fn mono(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        Self::from_flat(samples, 1, sample_rate)
    }

    /// Builds a buffer from one vector per channel.
    pub fn from_channels(channels: Vec<Vec<f64>>, sample_rate: u32) -> Result<Self> {
        let n = channels.len();
        if n == 0 {
            return Err(Error::InvalidArgument("buffer needs at least one channel".into()));
        }
        let frames = channels[0].len();
        if let Some(bad) = channels.iter().position(|c| c.len() != frames) {
            return Err(Error::ShapeMismatch(format!(
                "channel {bad} has {} frames, channel 0 has {frames}",
                channels[bad].len()
            )));
        }
        Self::from_flat(channels.concat(), n, sample_rate)
    }

    /// Channel-major flat samples: channel `c` occupies `[c * frames, (c + 1) * frames)`.
    pub fn from_flat(data: Vec<f64>, channels: usize, sample_rate: u32) -> Result<Self> {
        if channels == 0 {
            return Err(Error::InvalidArgument("buffer needs at least one channel".into()));
        }
        if sample_rate == 0 {
            return Err(Error::InvalidArgument("sample rate must be positive".into()));
        }
        if !data.len().is_multiple_of(channels) {
            return Err(Error::ShapeMismatch(format!(
                "{} samples do not divide into {channels} channels",
                data.len()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("audio samples".into()));
        }
        Ok(Self {
            data,
            channels,
            sample_rate,
        })
    }

    pub fn zeros(channels: usize, frames: usize, sample_rate: u32) -> Result<Self> {
        Self::from_flat(vec![0.0; channels * frames], channels, sample_rate)
    }

    /// Silent buffer shaped like `other`.
    pub fn zeros_like(other: &AudioBuffer) -> Self {
        Self {
            data: vec![0.0; other.data.len()],
            channels: other.channels,
            sample_rate: other.sample_rate,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn frames(&self) -> usize {
        self.data.len() / self.channels
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// All samples, channel-major.
    pub fn samples(&self) -> &[f64] {
        &self.data
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let f = self.frames();
        &self.data[c * f..(c + 1) * f]
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.data
    }

    /// Sum of squared samples.
    pub fn energy(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    /// True when every sample is exactly zero.
    pub fn is_silent(&self) -> bool {
        self.data.iter().all(|&x| x == 0.0)
    }

    /// Same buffer with every sample rounded through `f32`, i.e. exactly what
    /// a float WAV round trip yields.
    pub fn quantized_f32(&self) -> Self {
        Self {
            data: self.data.iter().map(|&x| x as f32 as f64).collect(),
            channels: self.channels,
            sample_rate: self.sample_rate,
        }
    }

    /// Replaces the samples, keeping shape and rate. Output must stay finite.
    pub(crate) fn with_samples(&self, data: Vec<f64>) -> Result<Self> {
        debug_assert_eq!(data.len(), self.data.len());
        Self::from_flat(data, self.channels, self.sample_rate)
    }

    /// Errors unless `other` has the same channel count, frame count and rate.
    pub fn check_compatible(&self, other: &AudioBuffer) -> Result<()> {
        if self.sample_rate != other.sample_rate {
            return Err(Error::SampleRateMismatch {
                expected: self.sample_rate,
                found: other.sample_rate,
            });
        }
        if self.channels != other.channels || self.data.len() != other.data.len() {
            return Err(Error::ShapeMismatch(format!(
                "{}x{} vs {}x{}",
                self.channels,
                self.frames(),
                other.channels,
                other.frames()
            )));
        }
        Ok(())
    }
}

/// Mean-square power over all channels and frames.
pub fn power(buf: &AudioBuffer) -> Result<f64> {
    if buf.is_empty() {
        return Err(Error::EmptySignal);
    }
    Ok(buf.energy() / buf.len() as f64)
}

/// Multiplies every sample by `gain`.
pub fn apply_gain(buf: &AudioBuffer, gain: f64) -> Result<AudioBuffer> {
    if !gain.is_finite() {
        return Err(Error::NonFinite("gain".into()));
    }
    buf.with_samples(buf.data.iter().map(|x| x * gain).collect())
}

/// Elementwise sum of equally shaped buffers.
pub fn mixdown(bufs: &[AudioBuffer]) -> Result<AudioBuffer> {
    let (first, rest) = bufs
        .split_first()
        .ok_or_else(|| Error::InvalidArgument("mixdown of zero buffers".into()))?;
    let mut acc = first.data.clone();
    for b in rest {
        first.check_compatible(b)?;
        for (a, x) in acc.iter_mut().zip(&b.data) {
            *a += x;
        }
    }
    first.with_samples(acc)
}

/// Signal-to-distortion ratio `10 log10(|s|^2 / |s - s_hat|^2)` in dB, clamped
/// to `[-60, 60]`. A perfect estimate lands on the upper clamp.
pub fn sdr(reference: &AudioBuffer, estimate: &AudioBuffer) -> Result<f64> {
    reference.check_compatible(estimate)?;
    let signal = reference.energy();
    if signal == 0.0 {
        return Err(Error::UndefinedSdr);
    }
    let residual: f64 = reference
        .data
        .iter()
        .zip(&estimate.data)
        .map(|(s, e)| (s - e) * (s - e))
        .sum();
    Ok(clamped_ratio_db(signal, residual))
}

pub(crate) fn clamped_ratio_db(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        return SDR_CLAMP_DB;
    }
    (10.0 * (num / den).log10()).clamp(-SDR_CLAMP_DB, SDR_CLAMP_DB)
}

/// Converts a dB power ratio to a linear amplitude factor.
pub fn db_to_amplitude(db: f64) -> f64 {
    10f64.powf(db / 20.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(x: &[f64]) -> AudioBuffer {
        AudioBuffer::mono(x.to_vec(), DEFAULT_SAMPLE_RATE).unwrap()
    }

    #[test]
    fn power_cases() {
        assert_eq!(power(&m(&[1.0; 8])).unwrap(), 1.0);
        assert_eq!(power(&m(&[0.0; 8])).unwrap(), 0.0);
        assert_eq!(power(&m(&[3.0, 4.0])).unwrap(), 12.5);
        assert!(matches!(power(&m(&[])), Err(Error::EmptySignal)));
    }

    #[test]
    fn gain_cases() {
        let s = m(&[0.5, -1.0, 2.0]);
        assert_eq!(apply_gain(&s, 1.0).unwrap(), s);
        assert!(apply_gain(&s, 0.0).unwrap().is_silent());
        let unit = m(&[1.0, -1.0, 1.0, -1.0]);
        assert_eq!(power(&apply_gain(&unit, 2.0).unwrap()).unwrap(), 4.0);
        assert!(apply_gain(&s, f64::NAN).is_err());
        assert!(apply_gain(&s, f64::INFINITY).is_err());
    }

    #[test]
    fn mixdown_cases() {
        let s = m(&[0.25, -0.5, 1.0]);
        let z = AudioBuffer::zeros_like(&s);
        assert_eq!(mixdown(&[s.clone(), z]).unwrap(), s);
        let neg = apply_gain(&s, -1.0).unwrap();
        assert!(mixdown(&[s.clone(), neg]).unwrap().is_silent());
        assert_eq!(
            mixdown(&[m(&[1.0, 0.0]), m(&[0.0, 1.0])]).unwrap().samples(),
            &[1.0, 1.0]
        );
        assert!(mixdown(&[m(&[1.0]), m(&[1.0, 2.0])]).is_err());
        let other_rate = AudioBuffer::mono(vec![1.0], 16_000).unwrap();
        assert!(matches!(
            mixdown(&[m(&[1.0]), other_rate]),
            Err(Error::SampleRateMismatch { .. })
        ));
    }

    #[test]
    fn sdr_cases() {
        let s = m(&[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(sdr(&s, &s).unwrap(), 60.0);
        let half = m(&[0.5, 0.0, 0.0, 0.0]);
        assert!((sdr(&s, &half).unwrap() - 6.020_599_913_279_624).abs() < 1e-12);
        assert_eq!(sdr(&s, &m(&[0.0; 4])).unwrap(), 0.0);
        assert!(matches!(sdr(&m(&[0.0; 4]), &s), Err(Error::UndefinedSdr)));
    }

    #[test]
    fn rejects_bad_buffers() {
        assert!(AudioBuffer::mono(vec![f64::NAN], 8000).is_err());
        assert!(AudioBuffer::mono(vec![1.0], 0).is_err());
        assert!(AudioBuffer::from_channels(vec![vec![1.0], vec![1.0, 2.0]], 8000).is_err());
    }

    #[test]
    fn sdr_monotone_in_relative_error() {
        let s = m(&[0.3, -0.7, 0.1, 0.9, -0.2]);
        let mut prev = f64::INFINITY;
        for i in 0..=60 {
            let eps = 1e-6 * 10f64.powf(i as f64 / 10.0);
            let est = apply_gain(&s, 1.0 + eps).unwrap();
            let v = sdr(&s, &est).unwrap();
            assert!(v <= prev, "sdr rose at eps={eps}");
            if v < SDR_CLAMP_DB && prev < SDR_CLAMP_DB {
                assert!(v < prev);
            }
            prev = v;
        }
    }

    proptest! {
        #[test]
        fn sdr_bounded(
            s in prop::collection::vec(-10.0f64..10.0, 1..32),
            noise in prop::collection::vec(-10.0f64..10.0, 32),
        ) {
            prop_assume!(s.iter().any(|&x| x != 0.0));
            let e: Vec<f64> = s.iter().zip(&noise).map(|(a, b)| a + b * 100.0).collect();
            let v = sdr(&m(&s), &m(&e)).unwrap();
            prop_assert!(v.is_finite() && (-60.0..=60.0).contains(&v));
        }

        #[test]
        fn mixdown_commutes_and_associates(
            a in prop::collection::vec(-1.0f64..1.0, 16),
            b in prop::collection::vec(-1.0f64..1.0, 16),
            c in prop::collection::vec(-1.0f64..1.0, 16),
        ) {
            let (a, b, c) = (m(&a), m(&b), m(&c));
            let abc = mixdown(&[a.clone(), b.clone(), c.clone()]).unwrap();
            let cba = mixdown(&[c.clone(), b.clone(), a.clone()]).unwrap();
            let nested = mixdown(&[a, mixdown(&[b, c]).unwrap()]).unwrap();
            let scale = abc.energy().sqrt().max(1e-300);
            for other in [&cba, &nested] {
                let diff: f64 = abc.samples().iter().zip(other.samples())
                    .map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
                prop_assert!(diff <= 1e-12 * scale.max(1.0));
            }
        }
    }
}
