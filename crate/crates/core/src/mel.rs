//! Mel filterbank and differentiable log-mel spectrogram with exact VJP.

use crate::error::Result;
use crate::stft::{Analyzer, Spectrogram};

/// HTK mel scale.
pub(crate) fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub(crate) fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters with unit peak, equally spaced on the mel scale over
/// `[fmin, fmax]`. Stored sparsely per band as `(first_bin, weights)`.
pub(crate) struct MelFilterbank {
    pub bands: usize,
    pub bins: usize,
    rows: Vec<(usize, Vec<f64>)>,
}

impl MelFilterbank {
    pub fn new(bands: usize, bins: usize, sample_rate: u32, fmin: f64, fmax: f64) -> Self {
        let window_length = (bins - 1) * 2;
        let bin_hz = sample_rate as f64 / window_length as f64;
        let mel_lo = hz_to_mel(fmin);
        let mel_hi = hz_to_mel(fmax);
        let step = (mel_hi - mel_lo) / (bands + 1) as f64;
        let edge = |i: usize| mel_to_hz(mel_lo + step * i as f64);

        let mut rows = Vec::with_capacity(bands);
        for b in 0..bands {
            let (f_lo, f_c, f_hi) = (edge(b), edge(b + 1), edge(b + 2));
            let k_lo = ((f_lo / bin_hz).ceil() as usize).min(bins - 1);
            let k_hi = ((f_hi / bin_hz).floor() as usize).min(bins - 1);
            let mut weights = Vec::new();
            let mut first = k_lo;
            let mut any = false;
            for k in k_lo..=k_hi {
                let f = k as f64 * bin_hz;
                let w = if f <= f_c {
                    (f - f_lo) / (f_c - f_lo)
                } else {
                    (f_hi - f) / (f_hi - f_c)
                };
                let w = w.max(0.0);
                if !any {
                    if w == 0.0 {
                        first = k + 1;
                        continue;
                    }
                    any = true;
                    first = k;
                }
                weights.push(w);
            }
            while let Some(&last) = weights.last() {
                if last == 0.0 {
                    weights.pop();
                } else {
                    break;
                }
            }
            rows.push((first, weights));
        }
        Self { bands, bins, rows }
    }

    /// `mel[b] = sum_k w[b][k] * power[k]` for one frame.
    pub fn apply(&self, power: &[f64], mel_out: &mut [f64]) {
        debug_assert_eq!(power.len(), self.bins);
        for (out, (first, weights)) in mel_out.iter_mut().zip(&self.rows) {
            *out = weights
                .iter()
                .zip(&power[*first..])
                .map(|(w, p)| w * p)
                .sum();
        }
    }

    /// Adjoint of [`Self::apply`], accumulating into `power_cot`.
    pub fn apply_adjoint(&self, mel_cot: &[f64], power_cot: &mut [f64]) {
        for (&g, (first, weights)) in mel_cot.iter().zip(&self.rows) {
            for (w, p) in weights.iter().zip(&mut power_cot[*first..]) {
                *p += w * g;
            }
        }
    }

    /// Band centers in Hz (test support).
    #[cfg(test)]
    pub fn centers(&self, fmin: f64, fmax: f64) -> Vec<f64> {
        let mel_lo = hz_to_mel(fmin);
        let mel_hi = hz_to_mel(fmax);
        let step = (mel_hi - mel_lo) / (self.bands + 1) as f64;
        (1..=self.bands)
            .map(|i| mel_to_hz(mel_lo + step * i as f64))
            .collect()
    }

    /// True if every filter's weights are nonnegative with peak <= 1.
    #[cfg(test)]
    fn weights_valid(&self) -> bool {
        self.rows.iter().all(|(_, w)| {
            w.iter().all(|&v| (0.0..=1.0 + 1e-12).contains(&v)) && !w.is_empty()
        })
    }
}

/// Differentiable `log(mel_power + floor)` spectrogram of a mono signal.
pub(crate) struct LogMel {
    pub analyzer: Analyzer,
    pub filterbank: MelFilterbank,
    pub floor: f64,
}

/// Forward state saved for the backward pass.
pub(crate) struct LogMelState {
    pub input_len: usize,
    pub frames: usize,
    pub bands: usize,
    /// `frames x bands`, the forward output.
    pub logmel: Vec<f64>,
    /// `frames x bands`, `mel + floor` (the log argument).
    floored: Vec<f64>,
    spec: Spectrogram,
}

impl LogMel {
    pub fn new(
        window_length: usize,
        hop: usize,
        bands: usize,
        sample_rate: u32,
        fmin: f64,
        fmax: f64,
        floor: f64,
    ) -> Self {
        let analyzer = Analyzer::new(window_length, hop);
        let filterbank = MelFilterbank::new(bands, analyzer.bins(), sample_rate, fmin, fmax);
        Self {
            analyzer,
            filterbank,
            floor,
        }
    }

    pub fn min_input_len(&self) -> usize {
        self.analyzer.window_length()
    }

    pub fn forward(&self, x: &[f64]) -> Result<LogMelState> {
        let spec = self.analyzer.analyze(x)?;
        let frames = spec.frames;
        let bands = self.filterbank.bands;
        let bins = spec.bins;
        let mut power = vec![0.0; bins];
        let mut mel = vec![0.0; bands];
        let mut logmel = Vec::with_capacity(frames * bands);
        let mut floored = Vec::with_capacity(frames * bands);
        for t in 0..frames {
            let row = t * bins;
            for k in 0..bins {
                let re = spec.re[row + k];
                let im = spec.im[row + k];
                power[k] = re * re + im * im;
            }
            self.filterbank.apply(&power, &mut mel);
            for &m in &mel {
                let f = m + self.floor;
                floored.push(f);
                logmel.push(f.ln());
            }
        }
        Ok(LogMelState {
            input_len: x.len(),
            frames,
            bands,
            logmel,
            floored,
            spec,
        })
    }

    /// Exact VJP: cotangent over `frames x bands` log-mel values back to an
    /// input-shaped gradient.
    pub fn vjp(&self, state: &LogMelState, cot: &[f64]) -> Vec<f64> {
        debug_assert_eq!(cot.len(), state.frames * state.bands);
        let bins = state.spec.bins;
        let bands = state.bands;
        let mut spec_cot = Spectrogram::zeros(state.frames, bins);
        let mut mel_cot = vec![0.0; bands];
        let mut power_cot = vec![0.0; bins];
        for t in 0..state.frames {
            let row_b = t * bands;
            for b in 0..bands {
                mel_cot[b] = cot[row_b + b] / state.floored[row_b + b];
            }
            for p in power_cot.iter_mut() {
                *p = 0.0;
            }
            self.filterbank.apply_adjoint(&mel_cot, &mut power_cot);
            let row_k = t * bins;
            for k in 0..bins {
                let g = power_cot[k];
                spec_cot.re[row_k + k] = 2.0 * state.spec.re[row_k + k] * g;
                spec_cot.im[row_k + k] = 2.0 * state.spec.im[row_k + k] * g;
            }
        }
        self.analyzer
            .analyze_vjp(state.input_len, &spec_cot)
            .expect("state shapes are consistent by construction")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn mel_scale_round_trip() {
        for hz in [20.0, 440.0, 1000.0, 8000.0, 20000.0] {
            assert!((mel_to_hz(hz_to_mel(hz)) - hz).abs() < 1e-9 * hz);
        }
    }

    #[test]
    fn filterbank_shapes_and_weights() {
        let fb = MelFilterbank::new(64, 513, 44100, 20.0, 20000.0);
        assert_eq!(fb.rows.len(), 64);
        assert!(fb.weights_valid());
        let centers = fb.centers(20.0, 20000.0);
        assert!(centers.windows(2).all(|w| w[0] < w[1]));
        assert!(centers[0] > 20.0 && centers[63] < 20000.0);
    }

    #[test]
    fn silence_maps_to_log_floor() {
        let lm = LogMel::new(256, 64, 16, 44100, 20.0, 20000.0, 1e-8);
        let state = lm.forward(&vec![0.0; 2000]).unwrap();
        let expect = (1e-8f64).ln();
        assert!(state.logmel.iter().all(|&v| (v - expect).abs() < 1e-12));
    }

    #[test]
    fn vjp_matches_finite_differences() {
        let lm = LogMel::new(128, 32, 12, 44100, 20.0, 20000.0, 1e-8);
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let x: Vec<f64> = (0..600).map(|_| rng.random_range(-0.5..0.5)).collect();
        let state = lm.forward(&x).unwrap();
        let cot: Vec<f64> = (0..state.frames * state.bands)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let grad = lm.vjp(&state, &cot);

        let loss = |x: &[f64]| -> f64 {
            let s = lm.forward(x).unwrap();
            s.logmel.iter().zip(&cot).map(|(a, b)| a * b).sum()
        };
        let h = 1e-6;
        for _ in 0..8 {
            let dir: Vec<f64> = (0..x.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut xp = x.clone();
            let mut xm = x.clone();
            for i in 0..x.len() {
                xp[i] += h * dir[i];
                xm[i] -= h * dir[i];
            }
            let fd = (loss(&xp) - loss(&xm)) / (2.0 * h);
            let analytic: f64 = grad.iter().zip(&dir).map(|(a, b)| a * b).sum();
            let rel = (fd - analytic).abs() / fd.abs().max(1e-12);
            assert!(rel < 1e-5, "relative error {rel}");
        }
    }
}
