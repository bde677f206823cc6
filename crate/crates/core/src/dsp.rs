//! Waveform <-> spectrogram conversion, variance normalization, and
//! real/imaginary stacking for the separation front end and back end.
//!
//! Conventions: no center padding (frames start at sample 0, so
//! T = 1 + floor((N - frame_len) / hop)), periodic Hann analysis window,
//! weighted overlap-add synthesis with squared-window normalization.

use crate::dft::{frame_count, hann_window, DftBasis};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DEFAULT_FRAME_LEN: usize = 256;
pub const DEFAULT_HOP: usize = 128;

/// Multi-channel time-domain signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    /// channels x time
    pub samples: Vec<Vec<f64>>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<Vec<f64>>, sample_rate: u32) -> Result<Self> {
        if samples.is_empty() || samples[0].is_empty() {
            return Err(Error::Contract("waveform must have at least one channel and one sample".into()));
        }
        let n = samples[0].len();
        if samples.iter().any(|ch| ch.len() != n) {
            return Err(Error::Shape("waveform channels have unequal lengths".into()));
        }
        if samples.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Contract("waveform contains non-finite samples".into()));
        }
        Ok(Waveform { samples, sample_rate })
    }

    pub fn mono(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        Waveform::new(vec![samples], sample_rate)
    }

    pub fn channels(&self) -> usize {
        self.samples.len()
    }

    pub fn len(&self) -> usize {
        self.samples[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples[0].is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.len() as f64 / self.sample_rate as f64
    }
}

/// Complex time-frequency representation, channels x F x T.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    /// both indexed ((ch * F) + f) * T + t
    pub re: Vec<f64>,
    pub im: Vec<f64>,
    pub channels: usize,
    pub bins: usize,
    pub frames: usize,
    pub frame_len: usize,
    pub hop: usize,
}

impl Spectrogram {
    pub fn zeros(channels: usize, frame_len: usize, hop: usize, frames: usize) -> Self {
        let bins = frame_len / 2 + 1;
        Spectrogram {
            re: vec![0.0; channels * bins * frames],
            im: vec![0.0; channels * bins * frames],
            channels,
            bins,
            frames,
            frame_len,
            hop,
        }
    }

    #[inline]
    pub fn idx(&self, ch: usize, f: usize, t: usize) -> usize {
        (ch * self.bins + f) * self.frames + t
    }
}

/// Scale state captured by `normalize`, used to restore output level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationState {
    pub sigma: f64,
}

/// Divides all channels by the standard deviation of the reference channel.
pub fn normalize(w: &Waveform, ref_channel: usize) -> Result<(Waveform, NormalizationState)> {
    if ref_channel >= w.channels() {
        return Err(Error::Contract(format!(
            "reference channel {} out of range for {} channels",
            ref_channel,
            w.channels()
        )));
    }
    let sigma = channel_std(&w.samples[ref_channel]);
    if sigma <= 0.0 {
        return Err(Error::Degenerate(
            "reference channel has zero energy; cannot normalize".into(),
        ));
    }
    let samples = w
        .samples
        .iter()
        .map(|ch| ch.iter().map(|&v| v / sigma).collect())
        .collect();
    Ok((
        Waveform {
            samples,
            sample_rate: w.sample_rate,
        },
        NormalizationState { sigma },
    ))
}

/// Inverse of `normalize`.
pub fn denormalize(w: &Waveform, state: &NormalizationState) -> Waveform {
    Waveform {
        samples: w
            .samples
            .iter()
            .map(|ch| ch.iter().map(|&v| v * state.sigma).collect())
            .collect(),
        sample_rate: w.sample_rate,
    }
}

fn channel_std(ch: &[f64]) -> f64 {
    let n = ch.len() as f64;
    let mean = ch.iter().sum::<f64>() / n;
    (ch.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}

/// One-sided STFT of every channel.
pub fn stft(w: &Waveform, frame_len: usize, hop: usize) -> Result<Spectrogram> {
    if w.len() < frame_len {
        return Err(Error::Contract(format!(
            "signal length {} shorter than frame length {}",
            w.len(),
            frame_len
        )));
    }
    let basis = DftBasis::new(frame_len);
    let window = hann_window(frame_len);
    let frames = frame_count(w.len(), frame_len, hop);
    let mut out = Spectrogram::zeros(w.channels(), frame_len, hop, frames);
    let mut buf = vec![0.0; frame_len];
    let mut re = vec![0.0; basis.bins];
    let mut im = vec![0.0; basis.bins];
    for (ch, samples) in w.samples.iter().enumerate() {
        for t in 0..frames {
            let start = t * hop;
            for i in 0..frame_len {
                buf[i] = samples[start + i] * window[i];
            }
            basis.forward(&buf, &mut re, &mut im);
            for f in 0..basis.bins {
                let i = out.idx(ch, f, t);
                out.re[i] = re[f];
                out.im[i] = im[f];
            }
        }
    }
    Ok(out)
}

/// Weighted overlap-add inverse STFT; output truncated or zero-padded to
/// `target_len` samples.
pub fn istft(s: &Spectrogram, target_len: usize, sample_rate: u32) -> Waveform {
    let basis = DftBasis::new(s.frame_len);
    let window = hann_window(s.frame_len);
    let covered = (s.frames - 1) * s.hop + s.frame_len;
    let mut re = vec![0.0; s.bins];
    let mut im = vec![0.0; s.bins];
    let mut frame = vec![0.0; s.frame_len];
    let mut samples = Vec::with_capacity(s.channels);
    for ch in 0..s.channels {
        let mut num = vec![0.0; covered];
        let mut denom = vec![0.0; covered];
        for t in 0..s.frames {
            for f in 0..s.bins {
                let i = s.idx(ch, f, t);
                re[f] = s.re[i];
                im[f] = s.im[i];
            }
            basis.inverse(&re, &im, &mut frame);
            let start = t * s.hop;
            for i in 0..s.frame_len {
                num[start + i] += window[i] * frame[i];
                denom[start + i] += window[i] * window[i];
            }
        }
        let mut out = vec![0.0; target_len];
        for m in 0..target_len.min(covered) {
            if denom[m] > 1e-12 {
                out[m] = num[m] / denom[m];
            }
        }
        samples.push(out);
    }
    Waveform {
        samples,
        sample_rate,
    }
}

/// Stacks real and imaginary parts into a [2M, F, T] tensor with channel
/// layout [Re(mic 0), Im(mic 0), Re(mic 1), ...].
pub fn stack_ri(s: &Spectrogram) -> Tensor {
    let (m, f_bins, frames) = (s.channels, s.bins, s.frames);
    let plane = f_bins * frames;
    let mut data = vec![0.0; 2 * m * plane];
    for ch in 0..m {
        data[2 * ch * plane..(2 * ch + 1) * plane]
            .copy_from_slice(&s.re[ch * plane..(ch + 1) * plane]);
        data[(2 * ch + 1) * plane..(2 * ch + 2) * plane]
            .copy_from_slice(&s.im[ch * plane..(ch + 1) * plane]);
    }
    Tensor::new(vec![2 * m, f_bins, frames], data).unwrap()
}

/// Inverse of `stack_ri`: a [2C, F, T] tensor becomes C single-channel
/// spectrograms.
pub fn unstack_ri(t: &Tensor, frame_len: usize, hop: usize) -> Result<Vec<Spectrogram>> {
    let shape = t.shape();
    if shape.len() != 3 {
        return Err(Error::Shape(format!(
            "unstack_ri: expected rank-3 tensor, got {:?}",
            shape
        )));
    }
    if shape[0] % 2 != 0 {
        return Err(Error::Contract(format!(
            "unstack_ri: odd channel count {}",
            shape[0]
        )));
    }
    let bins = frame_len / 2 + 1;
    if shape[1] != bins {
        return Err(Error::Shape(format!(
            "unstack_ri: {} frequency bins inconsistent with frame length {}",
            shape[1], frame_len
        )));
    }
    let c = shape[0] / 2;
    let frames = shape[2];
    let plane = bins * frames;
    let data = t.data();
    let mut out = Vec::with_capacity(c);
    for i in 0..c {
        let mut s = Spectrogram::zeros(1, frame_len, hop, frames);
        s.re.copy_from_slice(&data[2 * i * plane..(2 * i + 1) * plane]);
        s.im.copy_from_slice(&data[(2 * i + 1) * plane..(2 * i + 2) * plane]);
        out.push(s);
    }
    Ok(out)
}
