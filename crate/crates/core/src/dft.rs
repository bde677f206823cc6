//! Real one-sided DFT basis shared by the waveform pipeline and the
//! differentiable STFT/iSTFT tape operations.
//!
//! Frames are short (<= 256 samples), so a precomputed dense basis is
//! plenty fast and keeps forward and adjoint bit-consistent.

/// Cos/sin tables for a one-sided DFT of length `frame_len`.
///
/// `cos[f * frame_len + n] = cos(2*pi*f*n / frame_len)`, same layout for sin.
pub struct DftBasis {
    pub frame_len: usize,
    pub bins: usize,
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl DftBasis {
    pub fn new(frame_len: usize) -> Self {
        assert!(frame_len >= 2 && frame_len % 2 == 0, "frame_len must be even");
        let bins = frame_len / 2 + 1;
        let mut cos = vec![0.0; bins * frame_len];
        let mut sin = vec![0.0; bins * frame_len];
        for f in 0..bins {
            for n in 0..frame_len {
                let arg = 2.0 * std::f64::consts::PI * (f * n) as f64 / frame_len as f64;
                cos[f * frame_len + n] = arg.cos();
                sin[f * frame_len + n] = arg.sin();
            }
        }
        DftBasis {
            frame_len,
            bins,
            cos,
            sin,
        }
    }

    /// Forward one-sided DFT of a real frame: X[f] = sum_n x[n] e^{-i 2 pi f n / L}.
    pub fn forward(&self, frame: &[f64], re: &mut [f64], im: &mut [f64]) {
        let l = self.frame_len;
        debug_assert_eq!(frame.len(), l);
        for f in 0..self.bins {
            let (c, s) = (&self.cos[f * l..(f + 1) * l], &self.sin[f * l..(f + 1) * l]);
            let mut acc_re = 0.0;
            let mut acc_im = 0.0;
            for n in 0..l {
                acc_re += frame[n] * c[n];
                acc_im -= frame[n] * s[n];
            }
            re[f] = acc_re;
            im[f] = acc_im;
        }
    }

    /// Inverse of `forward` assuming conjugate symmetry of the full spectrum.
    pub fn inverse(&self, re: &[f64], im: &[f64], frame: &mut [f64]) {
        let l = self.frame_len;
        let nyq = self.bins - 1;
        for n in 0..l {
            let mut acc = re[0];
            for f in 1..nyq {
                acc += 2.0 * (re[f] * self.cos[f * l + n] - im[f] * self.sin[f * l + n]);
            }
            acc += re[nyq] * self.cos[nyq * l + n];
            frame[n] = acc / l as f64;
        }
    }

    /// Adjoint of `inverse`: accumulates spectral gradients from a frame-domain
    /// gradient. Transpose of the linear map in `inverse`.
    pub fn inverse_adjoint(
        &self,
        frame_grad: &[f64],
        re_grad: &mut [f64],
        im_grad: &mut [f64],
    ) {
        let l = self.frame_len;
        let nyq = self.bins - 1;
        let inv_l = 1.0 / l as f64;
        for n in 0..l {
            let g = frame_grad[n] * inv_l;
            if g == 0.0 {
                continue;
            }
            re_grad[0] += g;
            for f in 1..nyq {
                re_grad[f] += 2.0 * g * self.cos[f * l + n];
                im_grad[f] -= 2.0 * g * self.sin[f * l + n];
            }
            re_grad[nyq] += g * self.cos[nyq * l + n];
        }
    }

    /// Adjoint of `forward`: accumulates a frame-domain gradient from spectral
    /// gradients.
    pub fn forward_adjoint(&self, re_grad: &[f64], im_grad: &[f64], frame_grad: &mut [f64]) {
        let l = self.frame_len;
        for f in 0..self.bins {
            let (c, s) = (&self.cos[f * l..(f + 1) * l], &self.sin[f * l..(f + 1) * l]);
            let (gr, gi) = (re_grad[f], im_grad[f]);
            if gr == 0.0 && gi == 0.0 {
                continue;
            }
            for n in 0..l {
                frame_grad[n] += gr * c[n] - gi * s[n];
            }
        }
    }
}

/// Periodic Hann window: w[i] = 0.5 - 0.5 cos(2 pi i / len).
pub fn hann_window(len: usize) -> Vec<f64> {
    (0..len)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / len as f64).cos())
        .collect()
}

/// Frame count for the no-center-padding framing convention.
pub fn frame_count(n: usize, frame_len: usize, hop: usize) -> usize {
    debug_assert!(n >= frame_len);
    1 + (n - frame_len) / hop
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forward_inverse_roundtrip() {
        let basis = DftBasis::new(16);
        let frame: Vec<f64> = (0..16).map(|i| ((i * 7 + 3) % 11) as f64 - 5.0).collect();
        let mut re = vec![0.0; basis.bins];
        let mut im = vec![0.0; basis.bins];
        basis.forward(&frame, &mut re, &mut im);
        let mut back = vec![0.0; 16];
        basis.inverse(&re, &im, &mut back);
        for (a, b) in frame.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn parseval_energy() {
        let basis = DftBasis::new(32);
        let frame: Vec<f64> = (0..32).map(|i| (i as f64 * 0.7).sin()).collect();
        let mut re = vec![0.0; basis.bins];
        let mut im = vec![0.0; basis.bins];
        basis.forward(&frame, &mut re, &mut im);
        let time_energy: f64 = frame.iter().map(|x| x * x).sum();
        // one-sided spectrum: double interior bins
        let mut spec_energy = re[0] * re[0] + im[0] * im[0];
        for f in 1..basis.bins - 1 {
            spec_energy += 2.0 * (re[f] * re[f] + im[f] * im[f]);
        }
        let nyq = basis.bins - 1;
        spec_energy += re[nyq] * re[nyq] + im[nyq] * im[nyq];
        spec_energy /= 32.0;
        assert!((time_energy - spec_energy).abs() < 1e-10 * time_energy.max(1.0));
    }

    #[test]
    fn adjoints_are_transposes() {
        // <A x, y> == <x, A^T y> for random x, y
        let basis = DftBasis::new(8);
        let x_re: Vec<f64> = (0..basis.bins).map(|i| (i as f64 + 1.0).sin()).collect();
        let x_im: Vec<f64> = (0..basis.bins).map(|i| (i as f64 * 2.0).cos()).collect();
        let y: Vec<f64> = (0..8).map(|i| (i as f64 * 1.3).sin()).collect();

        let mut ax = vec![0.0; 8];
        basis.inverse(&x_re, &x_im, &mut ax);
        let lhs: f64 = ax.iter().zip(&y).map(|(a, b)| a * b).sum();

        let mut aty_re = vec![0.0; basis.bins];
        let mut aty_im = vec![0.0; basis.bins];
        basis.inverse_adjoint(&y, &mut aty_re, &mut aty_im);
        let rhs: f64 = x_re.iter().zip(&aty_re).map(|(a, b)| a * b).sum::<f64>()
            + x_im.iter().zip(&aty_im).map(|(a, b)| a * b).sum::<f64>();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
