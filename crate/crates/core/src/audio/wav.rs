//! WAV I/O. Writes are 32-bit float little-endian; reads accept float or
//! integer PCM.

use std::fs;
use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::AudioBuffer;
use crate::error::{Error, Result};

pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioBuffer> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = WavReader::new(std::io::BufReader::new(file))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    let interleaved: Vec<f64> = match spec.sample_format {
        SampleFormat::Float => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()?,
        SampleFormat::Int => {
            let scale = 1.0 / (1u64 << (spec.bits_per_sample - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 * scale))
                .collect::<std::result::Result<_, _>>()?
        }
    };
    let frames = interleaved.len() / channels.max(1);
    let mut data = vec![0.0; interleaved.len()];
    for (i, x) in interleaved.into_iter().enumerate() {
        data[(i % channels) * frames + i / channels] = x;
    }
    AudioBuffer::from_flat(data, channels, spec.sample_rate)
}

/// Writes `buf` as float32 WAV. The file appears atomically (temp + rename).
pub fn write_wav(path: impl AsRef<Path>, buf: &AudioBuffer) -> Result<()> {
    let path = path.as_ref();
    if buf.samples().iter().any(|x| x.abs() > f32::MAX as f64) {
        return Err(Error::NonFinite(format!("{} (exceeds f32 range)", path.display())));
    }
    let spec = WavSpec {
        channels: buf.channels() as u16,
        sample_rate: buf.sample_rate(),
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    crate::io::write_atomic_with(path, |w| {
        let mut writer = WavWriter::new(w, spec)?;
        let frames = buf.frames();
        for i in 0..frames {
            for c in 0..buf.channels() {
                writer.write_sample(buf.channel(c)[i] as f32)?;
            }
        }
        writer.finalize()?;
        Ok(())
    })
}
