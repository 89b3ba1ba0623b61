//! Shared windowed-DFT analysis machinery: periodic Hann window, reflection
//! padding, one-sided spectrogram, and the exact adjoint of the analysis.
//!
//! Used by the latent transform, the feature extractor, and the multi-scale
//! perceptual loss; synthesis (overlap-add) lives in [`crate::transform`].

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Periodic Hann window: `0.5 * (1 - cos(2*pi*n/len))`, period `len`.
/// At 75% overlap the squared shifted copies sum to a constant 3/2.
pub(crate) fn periodic_hann(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * n as f64 / len as f64).cos()))
        .collect()
}

/// One-sided complex spectrogram with split real/imaginary planes,
/// `frames x bins` row-major.
#[derive(Debug, Clone)]
pub(crate) struct Spectrogram {
    pub frames: usize,
    pub bins: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl Spectrogram {
    pub fn zeros(frames: usize, bins: usize) -> Self {
        Self {
            frames,
            bins,
            re: vec![0.0; frames * bins],
            im: vec![0.0; frames * bins],
        }
    }

    #[cfg(test)]
    pub fn idx(&self, frame: usize, bin: usize) -> usize {
        frame * self.bins + bin
    }
}

/// Windowed-DFT analyzer over reflection-padded input.
pub(crate) struct Analyzer {
    pub window: Vec<f64>,
    pub hop: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Analyzer {
    pub fn new(window_length: usize, hop: usize) -> Self {
        Self::with_window(periodic_hann(window_length), hop)
    }

    pub fn with_window(window: Vec<f64>, hop: usize) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(window.len());
        let inverse = planner.plan_fft_inverse(window.len());
        Self {
            window,
            hop,
            forward,
            inverse,
        }
    }

    pub fn window_length(&self) -> usize {
        self.window.len()
    }

    pub fn bins(&self) -> usize {
        self.window.len() / 2 + 1
    }

    /// Shortest input that reflection padding of `window/2` supports.
    pub fn min_input_len(&self) -> usize {
        self.window.len() / 2 + 1
    }

    pub fn frames_for_len(&self, len: usize) -> usize {
        len / self.hop + 1
    }

    /// Reflect `window/2` samples at each end (edge sample not repeated).
    pub fn reflect_pad(&self, x: &[f64]) -> Result<Vec<f64>> {
        let half = self.window.len() / 2;
        if x.len() < half + 1 {
            return Err(Error::TooShort {
                got: x.len(),
                need: half + 1,
            });
        }
        let mut padded = Vec::with_capacity(x.len() + 2 * half);
        for i in 0..half {
            padded.push(x[half - i]);
        }
        padded.extend_from_slice(x);
        for j in 0..half {
            padded.push(x[x.len() - 2 - j]);
        }
        Ok(padded)
    }

    /// One-sided windowed DFT per frame. Linear in the input.
    pub fn analyze(&self, x: &[f64]) -> Result<Spectrogram> {
        let w = self.window.len();
        let bins = self.bins();
        let padded = self.reflect_pad(x)?;
        let frames = (padded.len() - w) / self.hop + 1;
        let mut spec = Spectrogram::zeros(frames, bins);
        let mut buf = vec![Complex::new(0.0, 0.0); w];
        for t in 0..frames {
            let seg = &padded[t * self.hop..t * self.hop + w];
            for (b, (&s, &win)) in buf.iter_mut().zip(seg.iter().zip(&self.window)) {
                *b = Complex::new(s * win, 0.0);
            }
            self.forward.process(&mut buf);
            let row = t * bins;
            for k in 0..bins {
                spec.re[row + k] = buf[k].re;
                spec.im[row + k] = buf[k].im;
            }
        }
        Ok(spec)
    }

    /// Exact adjoint of [`Self::analyze`]: maps a spectrogram cotangent back
    /// to an input-shaped gradient, folding the reflection padding.
    pub fn analyze_vjp(&self, input_len: usize, cot: &Spectrogram) -> Result<Vec<f64>> {
        let w = self.window.len();
        let half = w / 2;
        let bins = self.bins();
        if cot.bins != bins || cot.frames != self.frames_for_len(input_len) {
            return Err(Error::ShapeMismatch(format!(
                "spectrogram cotangent {}x{} does not match input length {}",
                cot.frames, cot.bins, input_len
            )));
        }
        let padded_len = input_len + 2 * half;
        let mut pad_cot = vec![0.0; padded_len];
        let mut buf = vec![Complex::new(0.0, 0.0); w];
        for t in 0..cot.frames {
            for b in buf.iter_mut() {
                *b = Complex::new(0.0, 0.0);
            }
            let row = t * bins;
            for k in 0..bins {
                buf[k] = Complex::new(cot.re[row + k], cot.im[row + k]);
            }
            // Adjoint of the forward DFT restricted to one-sided bins:
            // u[n] = sum_k (re_k cos(2 pi k n / W) - im_k sin(2 pi k n / W))
            //      = Re(unnormalized inverse DFT of the zero-extended bins).
            self.inverse.process(&mut buf);
            let dst = &mut pad_cot[t * self.hop..t * self.hop + w];
            for ((d, b), &win) in dst.iter_mut().zip(&buf).zip(&self.window) {
                *d += b.re * win;
            }
        }
        Ok(fold_reflection(&pad_cot, input_len, half))
    }

    /// Real part of the unnormalized inverse DFT of a Hermitian-extended
    /// one-sided row (`re/im` of length `bins`). The imaginary parts of the
    /// DC and Nyquist bins do not influence the result.
    pub fn synthesize_frame(&self, re: &[f64], im: &[f64], out: &mut [f64]) {
        let w = self.window.len();
        let bins = self.bins();
        debug_assert_eq!(re.len(), bins);
        let mut buf = vec![Complex::new(0.0, 0.0); w];
        for k in 0..bins {
            buf[k] = Complex::new(re[k], im[k]);
        }
        for k in 1..w / 2 {
            buf[w - k] = Complex::new(re[k], -im[k]);
        }
        self.inverse.process(&mut buf);
        let inv_w = 1.0 / w as f64;
        for (o, b) in out.iter_mut().zip(&buf) {
            *o = b.re * inv_w;
        }
    }

    /// Adjoint of [`Self::synthesize_frame`]: forward DFT of the frame
    /// cotangent with the one-sided scaling (interior bins doubled, DC and
    /// Nyquist imaginary parts zero).
    pub fn synthesize_frame_vjp(&self, frame_cot: &[f64], re: &mut [f64], im: &mut [f64]) {
        let w = self.window.len();
        let bins = self.bins();
        let mut buf: Vec<Complex<f64>> = frame_cot
            .iter()
            .map(|&u| Complex::new(u, 0.0))
            .collect();
        self.forward.process(&mut buf);
        let inv_w = 1.0 / w as f64;
        re[0] = buf[0].re * inv_w;
        im[0] = 0.0;
        for k in 1..bins - 1 {
            re[k] = 2.0 * buf[k].re * inv_w;
            im[k] = 2.0 * buf[k].im * inv_w;
        }
        re[bins - 1] = buf[w / 2].re * inv_w;
        im[bins - 1] = 0.0;
    }
}

/// Adjoint of reflection padding: fold padded-buffer gradients back onto the
/// source positions they were copied from.
pub(crate) fn fold_reflection(pad_cot: &[f64], input_len: usize, half: usize) -> Vec<f64> {
    let mut out = vec![0.0; input_len];
    out.copy_from_slice(&pad_cot[half..half + input_len]);
    for i in 0..half {
        out[half - i] += pad_cot[i];
    }
    for j in 0..half {
        out[input_len - 2 - j] += pad_cot[half + input_len + j];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha20Rng;

    fn rand_vec(seed: u64, len: usize) -> Vec<f64> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn periodic_hann_cola_constant() {
        let w = periodic_hann(1024);
        let hop = 256;
        let first: f64 = (0..4).map(|j| w[j * hop] * w[j * hop]).sum();
        for n in 0..hop {
            let s: f64 = (0..4).map(|j| w[n + j * hop] * w[n + j * hop]).sum();
            assert!((s - first).abs() < 1e-12);
            assert!((s - 1.5).abs() < 1e-12);
        }
    }

    #[test]
    fn reflect_pad_shape_and_symmetry() {
        let a = Analyzer::new(8, 2);
        let x: Vec<f64> = (0..6).map(|i| i as f64).collect();
        let padded = a.reflect_pad(&x).unwrap();
        assert_eq!(padded.len(), 6 + 8);
        assert_eq!(&padded[..4], &[4.0, 3.0, 2.0, 1.0]);
        assert_eq!(&padded[4..10], &x[..]);
        assert_eq!(&padded[10..], &[4.0, 3.0, 2.0, 1.0]);
    }

    #[test]
    fn analyze_rejects_short_input() {
        let a = Analyzer::new(1024, 256);
        assert!(matches!(
            a.analyze(&vec![0.0; 512]),
            Err(Error::TooShort { .. })
        ));
        assert!(a.analyze(&vec![0.0; 513]).is_ok());
    }

    #[test]
    fn analyze_matches_naive_dft() {
        let a = Analyzer::new(32, 8);
        let x = rand_vec(3, 100);
        let spec = a.analyze(&x).unwrap();
        let padded = a.reflect_pad(&x).unwrap();
        for t in [0usize, 5, spec.frames - 1] {
            for k in [0usize, 1, 7, 16] {
                let mut re = 0.0;
                let mut im = 0.0;
                for n in 0..32 {
                    let theta = 2.0 * std::f64::consts::PI * (k * n) as f64 / 32.0;
                    let v = a.window[n] * padded[t * 8 + n];
                    re += v * theta.cos();
                    im -= v * theta.sin();
                }
                assert!((spec.re[spec.idx(t, k)] - re).abs() < 1e-10);
                assert!((spec.im[spec.idx(t, k)] - im).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn analyze_vjp_is_exact_adjoint() {
        // <analyze(x), g> == <x, analyze_vjp(g)> for random x, g.
        let a = Analyzer::new(64, 16);
        for seed in 0..5 {
            let x = rand_vec(100 + seed, 300);
            let spec = a.analyze(&x).unwrap();
            let mut g = Spectrogram::zeros(spec.frames, spec.bins);
            let mut rng = ChaCha20Rng::seed_from_u64(200 + seed);
            for v in g.re.iter_mut().chain(g.im.iter_mut()) {
                *v = rng.random_range(-1.0..1.0);
            }
            let lhs: f64 = spec
                .re
                .iter()
                .zip(&g.re)
                .chain(spec.im.iter().zip(&g.im))
                .map(|(a, b)| a * b)
                .sum();
            let xbar = a.analyze_vjp(x.len(), &g).unwrap();
            let rhs: f64 = x.iter().zip(&xbar).map(|(a, b)| a * b).sum();
            assert!(
                (lhs - rhs).abs() <= 1e-9 * lhs.abs().max(rhs.abs()).max(1.0),
                "adjoint identity violated: {lhs} vs {rhs}"
            );
        }
    }

    #[test]
    fn synthesize_frame_vjp_is_exact_adjoint() {
        let a = Analyzer::new(64, 16);
        let bins = a.bins();
        let mut rng = ChaCha20Rng::seed_from_u64(17);
        let re: Vec<f64> = (0..bins).map(|_| rng.random_range(-1.0..1.0)).collect();
        let im: Vec<f64> = (0..bins).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut y = vec![0.0; 64];
        a.synthesize_frame(&re, &im, &mut y);
        let u: Vec<f64> = (0..64).map(|_| rng.random_range(-1.0..1.0)).collect();
        let lhs: f64 = y.iter().zip(&u).map(|(a, b)| a * b).sum();
        let mut rbar = vec![0.0; bins];
        let mut ibar = vec![0.0; bins];
        a.synthesize_frame_vjp(&u, &mut rbar, &mut ibar);
        // Imaginary DC/Nyquist are dead inputs: zero them in the pairing.
        let rhs: f64 = re.iter().zip(&rbar).map(|(a, b)| a * b).sum::<f64>()
            + im.iter().zip(&ibar).map(|(a, b)| a * b).sum::<f64>();
        assert!((lhs - rhs).abs() < 1e-9 * lhs.abs().max(1.0));
    }
}
