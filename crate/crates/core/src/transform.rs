//! Invertible time-frequency latent transform with an exact adjoint.
//!
//! `encode` maps a waveform to a complex spectrogram latent; `decode` maps a
//! (possibly perturbed) latent back to a waveform by squared-window
//! overlap-add, reconstructing the input to float accuracy. Both directions
//! are linear, so `decode_vjp` is the exact adjoint of `decode` and carries
//! loss gradients from waveform space back into the latent.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::AudioClip;
use crate::error::{Error, Result};
use crate::stft::{periodic_hann, Analyzer};

/// Analysis/synthesis configuration: periodic Hann window at 75% overlap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransformConfig {
    pub window_length: usize,
    pub hop: usize,
}

impl Default for TransformConfig {
    fn default() -> Self {
        Self {
            window_length: 1024,
            hop: 256,
        }
    }
}

impl TransformConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_length < 8 || self.window_length % 2 != 0 {
            return Err(Error::Config(format!(
                "window_length must be even and >= 8, got {}",
                self.window_length
            )));
        }
        if self.hop == 0 || self.window_length % self.hop != 0 {
            return Err(Error::Config("hop must divide window_length".into()));
        }
        if self.window_length / self.hop != 4 {
            return Err(Error::Config(format!(
                "window_length/hop must be 4 for constant overlap-add, got {}",
                self.window_length / self.hop
            )));
        }
        Ok(())
    }

    pub fn bins(&self) -> usize {
        self.window_length / 2 + 1
    }

    pub(crate) fn analyzer(&self) -> Analyzer {
        Analyzer::new(self.window_length, self.hop)
    }
}

/// Complex time-frequency latent per channel, stored as split real and
/// imaginary planes so the optimizer can treat it as a plain real vector.
/// Both the encoded audio and the optimized perturbation use this type.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentGrid {
    channels: usize,
    frames: usize,
    bins: usize,
    sample_rate: u32,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl LatentGrid {
    pub fn zeros(channels: usize, frames: usize, bins: usize, sample_rate: u32) -> Self {
        Self {
            channels,
            frames,
            bins,
            sample_rate,
            re: vec![0.0; channels * frames * bins],
            im: vec![0.0; channels * frames * bins],
        }
    }

    pub fn zeros_like(other: &Self) -> Self {
        Self::zeros(other.channels, other.frames, other.bins, other.sample_rate)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    /// Real coefficients per plane (`channels * frames * bins`).
    pub fn plane_len(&self) -> usize {
        self.re.len()
    }

    #[inline]
    pub fn idx(&self, channel: usize, frame: usize, bin: usize) -> usize {
        (channel * self.frames + frame) * self.bins + bin
    }

    pub fn re(&self) -> &[f64] {
        &self.re
    }

    pub fn im(&self) -> &[f64] {
        &self.im
    }

    pub fn re_mut(&mut self) -> &mut [f64] {
        &mut self.re
    }

    pub fn im_mut(&mut self) -> &mut [f64] {
        &mut self.im
    }

    pub fn planes_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.re, &mut self.im)
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.channels == other.channels && self.frames == other.frames && self.bins == other.bins
    }

    /// Elementwise sum; shapes must match.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if !self.same_shape(other) {
            return Err(Error::ShapeMismatch("latent shapes differ in add".into()));
        }
        let mut out = self.clone();
        for (o, s) in out.re.iter_mut().zip(&other.re) {
            *o += s;
        }
        for (o, s) in out.im.iter_mut().zip(&other.im) {
            *o += s;
        }
        Ok(out)
    }

    pub fn is_finite(&self) -> bool {
        self.re.iter().chain(self.im.iter()).all(|v| v.is_finite())
    }

    /// Root-mean-square over both planes.
    pub fn rms(&self) -> f64 {
        let n = (2 * self.plane_len()) as f64;
        let ss: f64 = self
            .re
            .iter()
            .chain(self.im.iter())
            .map(|v| v * v)
            .sum();
        (ss / n).sqrt()
    }

    pub fn sq_norm(&self) -> f64 {
        self.re
            .iter()
            .chain(self.im.iter())
            .map(|v| v * v)
            .sum()
    }
}

/// Frames produced for a clip of `len` samples under `cfg`.
pub fn frames_for_len(len: usize, cfg: &TransformConfig) -> usize {
    len / cfg.hop + 1
}

/// Analyze a clip into its latent. Linear and deterministic.
pub fn encode(clip: &AudioClip, cfg: &TransformConfig) -> Result<LatentGrid> {
    cfg.validate()?;
    let analyzer = cfg.analyzer();
    if clip.len() < analyzer.min_input_len() {
        return Err(Error::TooShort {
            got: clip.len(),
            need: analyzer.min_input_len(),
        });
    }
    let specs: Vec<_> = clip
        .channels()
        .par_iter()
        .map(|ch| cfg.analyzer().analyze(ch))
        .collect::<Result<_>>()?;
    let frames = specs[0].frames;
    let bins = specs[0].bins;
    let mut latent = LatentGrid::zeros(clip.channel_count(), frames, bins, clip.sample_rate());
    for (c, spec) in specs.into_iter().enumerate() {
        let base = c * frames * bins;
        latent.re[base..base + frames * bins].copy_from_slice(&spec.re);
        latent.im[base..base + frames * bins].copy_from_slice(&spec.im);
    }
    Ok(latent)
}

/// Squared-window overlap-add weights for a padded buffer covered by
/// `frames` windows at the configured hop.
fn cola_weights(window: &[f64], hop: usize, padded_len: usize, frames: usize) -> Vec<f64> {
    let mut norm = vec![0.0; padded_len];
    for t in 0..frames {
        let dst = &mut norm[t * hop..t * hop + window.len()];
        for (d, &w) in dst.iter_mut().zip(window) {
            *d += w * w;
        }
    }
    norm
}

/// Synthesize a waveform of `output_length` samples from a latent by
/// windowed overlap-add with per-sample squared-window normalization,
/// trimming the reflection padding. Exact inverse of [`encode`] up to float
/// rounding; linear in the latent.
pub fn decode(latent: &LatentGrid, cfg: &TransformConfig, output_length: usize) -> Result<AudioClip> {
    cfg.validate()?;
    let expected_frames = frames_for_len(output_length, cfg);
    if latent.frames != expected_frames || latent.bins != cfg.bins() {
        return Err(Error::ShapeMismatch(format!(
            "latent {}x{} incompatible with output length {} (expected {}x{})",
            latent.frames,
            latent.bins,
            output_length,
            expected_frames,
            cfg.bins()
        )));
    }
    let channels: Vec<Vec<f64>> = (0..latent.channels)
        .into_par_iter()
        .map(|c| decode_channel(latent, cfg, output_length, c))
        .collect();
    AudioClip::new(channels, latent.sample_rate)
}

fn decode_channel(
    latent: &LatentGrid,
    cfg: &TransformConfig,
    output_length: usize,
    channel: usize,
) -> Vec<f64> {
    let analyzer = cfg.analyzer();
    let w = cfg.window_length;
    let hop = cfg.hop;
    let half = w / 2;
    let frames = latent.frames;
    let bins = latent.bins;
    let padded_len = output_length + w;

    let mut frame_time = vec![0.0; frames * w];
    for t in 0..frames {
        let base = latent.idx(channel, t, 0);
        analyzer.synthesize_frame(
            &latent.re[base..base + bins],
            &latent.im[base..base + bins],
            &mut frame_time[t * w..(t + 1) * w],
        );
    }

    let norm = cola_weights(&analyzer.window, hop, padded_len, frames);
    // Gather form keeps the per-sample summation order fixed.
    let mut out = vec![0.0; output_length];
    for (j, o) in out.iter_mut().enumerate() {
        let p = j + half;
        let t_lo = if p >= w { (p - w) / hop + 1 } else { 0 };
        let t_hi = (p / hop).min(frames - 1);
        let mut acc = 0.0;
        for t in t_lo..=t_hi {
            let n = p - t * hop;
            acc += analyzer.window[n] * frame_time[t * w + n];
        }
        *o = acc / norm[p];
    }
    out
}

/// Exact vector-Jacobian product of [`decode`]: maps a waveform-shaped
/// cotangent to a latent-shaped gradient. Because decode is linear this is
/// its adjoint applied to the cotangent.
pub fn decode_vjp(cotangent: &AudioClip, cfg: &TransformConfig) -> Result<LatentGrid> {
    cfg.validate()?;
    let len = cotangent.len();
    let frames = frames_for_len(len, cfg);
    let bins = cfg.bins();
    let grads: Vec<(Vec<f64>, Vec<f64>)> = cotangent
        .channels()
        .par_iter()
        .map(|ch| decode_vjp_channel(ch, cfg))
        .collect();
    let mut out = LatentGrid::zeros(
        cotangent.channel_count(),
        frames,
        bins,
        cotangent.sample_rate(),
    );
    for (c, (re, im)) in grads.into_iter().enumerate() {
        let base = c * frames * bins;
        out.re[base..base + frames * bins].copy_from_slice(&re);
        out.im[base..base + frames * bins].copy_from_slice(&im);
    }
    Ok(out)
}

fn decode_vjp_channel(cot: &[f64], cfg: &TransformConfig) -> (Vec<f64>, Vec<f64>) {
    let analyzer = cfg.analyzer();
    let w = cfg.window_length;
    let hop = cfg.hop;
    let half = w / 2;
    let len = cot.len();
    let frames = frames_for_len(len, cfg);
    let bins = cfg.bins();
    let padded_len = len + w;

    let norm = cola_weights(&analyzer.window, hop, padded_len, frames);
    let mut num_cot = vec![0.0; padded_len];
    for (j, &c) in cot.iter().enumerate() {
        num_cot[half + j] = c / norm[half + j];
    }

    let mut re = vec![0.0; frames * bins];
    let mut im = vec![0.0; frames * bins];
    let mut frame_cot = vec![0.0; w];
    for t in 0..frames {
        let src = &num_cot[t * hop..t * hop + w];
        for ((f, &s), &win) in frame_cot.iter_mut().zip(src).zip(&analyzer.window) {
            *f = s * win;
        }
        analyzer.synthesize_frame_vjp(
            &frame_cot,
            &mut re[t * bins..(t + 1) * bins],
            &mut im[t * bins..(t + 1) * bins],
        );
    }
    (re, im)
}

/// Maximum deviation of the squared-window overlap-add sum from constancy
/// over steady-state sample positions. Near zero for a valid configuration;
/// `corrupt` perturbs one window coefficient so self-checks can demonstrate
/// a detected failure.
pub fn cola_deviation(cfg: &TransformConfig, corrupt: bool) -> f64 {
    let mut window = periodic_hann(cfg.window_length);
    if corrupt {
        window[cfg.window_length / 3] += 1e-3;
    }
    let overlap = cfg.window_length / cfg.hop;
    let reference: f64 = (0..overlap)
        .map(|j| window[j * cfg.hop] * window[j * cfg.hop])
        .sum();
    let mut max_dev: f64 = 0.0;
    for n in 0..cfg.hop {
        let s: f64 = (0..overlap)
            .map(|j| window[n + j * cfg.hop] * window[n + j * cfg.hop])
            .sum();
        max_dev = max_dev.max((s - reference).abs());
    }
    max_dev
}
