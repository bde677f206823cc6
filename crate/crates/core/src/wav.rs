//! RIFF WAV read/write: PCM 16-bit and IEEE float32, mono or multi-channel.

use std::path::Path;

use crate::dsp::Waveform;
use crate::error::{Error, Result};

const ACCEPTED_RATES: [u32; 2] = [8000, 16000];

pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    let mut reader = hound::WavReader::open(path)
        .map_err(|e| Error::Format(format!("{}: {}", path.display(), e)))?;
    let spec = reader.spec();
    if !ACCEPTED_RATES.contains(&spec.sample_rate) {
        return Err(Error::Format(format!(
            "{}: unsupported sample rate {} (accepted: {:?})",
            path.display(),
            spec.sample_rate,
            ACCEPTED_RATES
        )));
    }
    let channels = spec.channels as usize;
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Format(format!("{}: {}", path.display(), e)))?,
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Format(format!("{}: {}", path.display(), e)))?,
        (fmt, bits) => {
            return Err(Error::Format(format!(
                "{}: unsupported sample format {:?}/{} bits",
                path.display(),
                fmt,
                bits
            )))
        }
    };
    if interleaved.is_empty() {
        return Err(Error::Format(format!("{}: empty WAV file", path.display())));
    }
    let frames = interleaved.len() / channels;
    let mut samples = vec![Vec::with_capacity(frames); channels];
    for (i, v) in interleaved.into_iter().enumerate() {
        samples[i % channels].push(v);
    }
    Waveform::new(samples, spec.sample_rate)
}

/// Writes IEEE float32 samples.
pub fn write_wav_f32(path: impl AsRef<Path>, w: &Waveform) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: w.channels() as u16,
        sample_rate: w.sample_rate,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut writer = hound::WavWriter::create(path, spec)
        .map_err(|e| Error::Format(format!("{}: {}", path.display(), e)))?;
    for i in 0..w.len() {
        for ch in &w.samples {
            writer
                .write_sample(ch[i] as f32)
                .map_err(|e| Error::Format(format!("{}: {}", path.display(), e)))?;
        }
    }
    writer
        .finalize()
        .map_err(|e| Error::Format(format!("{}: {}", path.display(), e)))?;
    Ok(())
}

/// Writes PCM 16-bit samples, clipping to [-1, 1).
pub fn write_wav_pcm16(path: impl AsRef<Path>, w: &Waveform) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: w.channels() as u16,
        sample_rate: w.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec)
        .map_err(|e| Error::Format(format!("{}: {}", path.display(), e)))?;
    for i in 0..w.len() {
        for ch in &w.samples {
            let v = (ch[i] * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
            writer
                .write_sample(v)
                .map_err(|e| Error::Format(format!("{}: {}", path.display(), e)))?;
        }
    }
    writer
        .finalize()
        .map_err(|e| Error::Format(format!("{}: {}", path.display(), e)))?;
    Ok(())
}
