//! MDCT analysis/synthesis with a sine window (time-domain alias
//! cancellation at 50% overlap), used by the lossy-codec surrogate attacks.
//!
//! Frames are transformed via a length-N complex FFT with pre/post twiddles;
//! the direct O(N^2) form is kept in tests as the oracle.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

pub(crate) struct Mdct {
    n: usize,
    window: Vec<f64>,
    fft_fwd: Arc<dyn Fft<f64>>,
    fft_inv: Arc<dyn Fft<f64>>,
    pre_twiddle: Vec<Complex<f64>>,
    post_twiddle: Vec<Complex<f64>>,
    inv_pre: Vec<Complex<f64>>,
    inv_post: Vec<Complex<f64>>,
}

impl Mdct {
    pub fn new(n: usize) -> Self {
        assert!(n % 4 == 0, "MDCT frame length must be a multiple of 4");
        let mut planner = FftPlanner::new();
        let window: Vec<f64> = (0..n).map(|i| (PI * (i as f64 + 0.5) / n as f64).sin()).collect();
        let n0 = 0.5 + n as f64 / 4.0;
        let pre_twiddle = (0..n)
            .map(|i| Complex::from_polar(1.0, -PI * i as f64 / n as f64))
            .collect();
        let post_twiddle = (0..n / 2)
            .map(|m| Complex::from_polar(1.0, -2.0 * PI * n0 * (m as f64 + 0.5) / n as f64))
            .collect();
        let inv_pre = (0..n / 2)
            .map(|m| Complex::from_polar(1.0, 2.0 * PI * n0 * m as f64 / n as f64))
            .collect();
        let inv_post = (0..n)
            .map(|i| Complex::from_polar(1.0, PI * (i as f64 + n0) / n as f64))
            .collect();
        Self {
            n,
            window,
            fft_fwd: planner.plan_fft_forward(n),
            fft_inv: planner.plan_fft_inverse(n),
            pre_twiddle,
            post_twiddle,
            inv_pre,
            inv_post,
        }
    }

    pub fn hop(&self) -> usize {
        self.n / 2
    }

    /// Windowed MDCT of one frame: N samples to N/2 coefficients.
    pub fn forward_frame(&self, x: &[f64], out: &mut [f64]) {
        let n = self.n;
        debug_assert_eq!(x.len(), n);
        debug_assert_eq!(out.len(), n / 2);
        let mut buf: Vec<Complex<f64>> = (0..n)
            .map(|i| self.pre_twiddle[i] * (x[i] * self.window[i]))
            .collect();
        self.fft_fwd.process(&mut buf);
        for m in 0..n / 2 {
            out[m] = (self.post_twiddle[m] * buf[m]).re;
        }
    }

    /// Windowed inverse MDCT of one frame: N/2 coefficients to N samples
    /// ready for 50%-overlap-add.
    pub fn inverse_frame(&self, coeffs: &[f64], out: &mut [f64]) {
        let n = self.n;
        debug_assert_eq!(coeffs.len(), n / 2);
        debug_assert_eq!(out.len(), n);
        let mut buf = vec![Complex::new(0.0, 0.0); n];
        for m in 0..n / 2 {
            buf[m] = self.inv_pre[m] * coeffs[m];
        }
        self.fft_inv.process(&mut buf);
        let scale = 4.0 / n as f64;
        for i in 0..n {
            out[i] = scale * self.window[i] * (self.inv_post[i] * buf[i]).re;
        }
    }

    /// Analyze a full signal into per-frame coefficients over a zero-padded
    /// framing whose overlap-add reconstructs the interior exactly.
    pub fn analyze(&self, x: &[f64]) -> MdctFrames {
        let hop = self.hop();
        let lead = hop;
        // pad so every retained sample is covered by two frames
        let padded_len = {
            let base = lead + x.len();
            let rounded = base.div_ceil(hop) * hop;
            rounded + hop
        };
        let mut padded = vec![0.0; padded_len];
        padded[lead..lead + x.len()].copy_from_slice(x);
        let frames = (padded_len - self.n) / hop + 1;
        let mut coeffs = vec![0.0; frames * hop];
        let mut frame_out = vec![0.0; hop];
        for t in 0..frames {
            self.forward_frame(&padded[t * hop..t * hop + self.n], &mut frame_out);
            coeffs[t * hop..(t + 1) * hop].copy_from_slice(&frame_out);
        }
        MdctFrames {
            coeffs,
            frames,
            input_len: x.len(),
        }
    }

    /// Overlap-add synthesis back to the original length.
    pub fn synthesize(&self, frames: &MdctFrames) -> Vec<f64> {
        let hop = self.hop();
        let lead = hop;
        let padded_len = (frames.frames - 1) * hop + self.n;
        let mut acc = vec![0.0; padded_len];
        let mut frame_time = vec![0.0; self.n];
        for t in 0..frames.frames {
            self.inverse_frame(&frames.coeffs[t * hop..(t + 1) * hop], &mut frame_time);
            for (a, &v) in acc[t * hop..t * hop + self.n].iter_mut().zip(&frame_time) {
                *a += v;
            }
        }
        acc[lead..lead + frames.input_len].to_vec()
    }
}

pub(crate) struct MdctFrames {
    pub coeffs: Vec<f64>,
    pub frames: usize,
    pub input_len: usize,
}

impl MdctFrames {
    pub fn rms(&self) -> f64 {
        if self.coeffs.is_empty() {
            return 0.0;
        }
        (self.coeffs.iter().map(|c| c * c).sum::<f64>() / self.coeffs.len() as f64).sqrt()
    }

    /// Uniform quantization of every coefficient to multiples of `step`.
    pub fn quantize(&mut self, step: f64) {
        if step <= 0.0 {
            return;
        }
        for c in &mut self.coeffs {
            *c = (*c / step).round() * step;
        }
    }
}

/// Full codec-surrogate round trip for one channel: MDCT, uniform
/// quantization with a step calibrated to `bits_per_coeff` for a
/// Gaussian-like coefficient distribution, inverse MDCT.
pub(crate) fn codec_round_trip(x: &[f64], frame_len: usize, bits_per_coeff: f64) -> Vec<f64> {
    let mdct = Mdct::new(frame_len);
    let mut frames = mdct.analyze(x);
    let sigma = frames.rms();
    if sigma > 0.0 {
        // uniform-quantizer entropy ~ log2(sqrt(2*pi*e) * sigma / step)
        let step = (2.0 * PI * std::f64::consts::E).sqrt() * sigma * 2f64.powf(-bits_per_coeff);
        frames.quantize(step);
    }
    mdct.synthesize(&frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha20Rng;

    /// Direct O(N^2) MDCT/IMDCT, the oracle for the FFT fast path.
    fn direct_mdct(window: &[f64], x: &[f64], n: usize) -> Vec<f64> {
        let n0 = 0.5 + n as f64 / 4.0;
        (0..n / 2)
            .map(|m| {
                (0..n)
                    .map(|i| {
                        window[i]
                            * x[i]
                            * (2.0 * PI / n as f64 * (i as f64 + n0) * (m as f64 + 0.5)).cos()
                    })
                    .sum()
            })
            .collect()
    }

    fn direct_imdct(window: &[f64], coeffs: &[f64], n: usize) -> Vec<f64> {
        let n0 = 0.5 + n as f64 / 4.0;
        (0..n)
            .map(|i| {
                let s: f64 = (0..n / 2)
                    .map(|m| {
                        coeffs[m]
                            * (2.0 * PI / n as f64 * (i as f64 + n0) * (m as f64 + 0.5)).cos()
                    })
                    .sum();
                4.0 / n as f64 * window[i] * s
            })
            .collect()
    }

    #[test]
    fn fast_mdct_matches_direct_oracle() {
        let n = 64;
        let mdct = Mdct::new(n);
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut fast = vec![0.0; n / 2];
        mdct.forward_frame(&x, &mut fast);
        let direct = direct_mdct(&mdct.window, &x, n);
        for (f, d) in fast.iter().zip(&direct) {
            assert!((f - d).abs() < 1e-9, "{f} vs {d}");
        }

        let c: Vec<f64> = (0..n / 2).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut fast_inv = vec![0.0; n];
        mdct.inverse_frame(&c, &mut fast_inv);
        let direct_inv = direct_imdct(&mdct.window, &c, n);
        for (f, d) in fast_inv.iter().zip(&direct_inv) {
            assert!((f - d).abs() < 1e-9, "{f} vs {d}");
        }
    }

    #[test]
    fn unquantized_round_trip_is_exact() {
        let mdct = Mdct::new(256);
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        for len in [1000usize, 4096, 5001] {
            let x: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
            let frames = mdct.analyze(&x);
            let back = mdct.synthesize(&frames);
            assert_eq!(back.len(), len);
            let max_err = x
                .iter()
                .zip(&back)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(max_err < 1e-10, "len {len}: error {max_err}");
        }
    }

    #[test]
    fn quantization_coarsens_with_smaller_budget() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..8000).map(|_| rng.random_range(-1.0..1.0)).collect();
        let rich = codec_round_trip(&x, 1024, 8.0);
        let poor = codec_round_trip(&x, 1024, 0.36);
        let err = |y: &[f64]| -> f64 {
            x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
        };
        assert!(err(&rich) < err(&poor));
        assert!(err(&rich) < 1e-3 * x.iter().map(|a| a * a).sum::<f64>());
    }
}
