//! Differentiable audio feature extractor, payload detection, and BER.
//!
//! Features are the time-mean of the log-mel spectrogram of the mono
//! downmix, lifted into the carrier space by a fixed public projection with
//! orthonormal columns. Only the carrier bank is secret; the extractor is
//! the same for every key. Payload bits are the signs of the feature
//! projections onto the carriers.

use rand::prelude::*;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::audio::{downmix, AudioClip};
use crate::carriers::{orthonormalize, CarrierBank, EMBEDDING_DIM};
use crate::error::{Error, Result};
use crate::mel::{LogMel, LogMelState};

/// Fixed public seed for the feature projection matrix. Key-independent by
/// design: changing it changes every embedding, so it is part of the
/// artifact's public parameters, not of any key.
pub const DEFAULT_PROJECTION_SEED: u64 = 0x6c61_746d_6172_6b00;

/// Mel-analysis front-end configuration for feature extraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MelConfig {
    pub mel_bands: usize,
    pub fmin: f64,
    pub fmax: f64,
    pub log_floor: f64,
    /// Analysis window/hop; defaults mirror the latent transform.
    pub window_length: usize,
    pub hop: usize,
}

impl Default for MelConfig {
    fn default() -> Self {
        Self {
            mel_bands: 64,
            fmin: 20.0,
            fmax: 20000.0,
            log_floor: 1e-8,
            window_length: 1024,
            hop: 256,
        }
    }
}

impl MelConfig {
    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        if self.mel_bands == 0 {
            return Err(Error::Config("mel_bands must be positive".into()));
        }
        if !(self.fmin >= 0.0 && self.fmin < self.fmax) {
            return Err(Error::Config("need 0 <= fmin < fmax".into()));
        }
        if self.fmax > sample_rate as f64 / 2.0 {
            return Err(Error::Config(format!(
                "fmax {} exceeds Nyquist of {} Hz audio",
                self.fmax, sample_rate
            )));
        }
        if self.log_floor <= 0.0 {
            return Err(Error::Config("log_floor must be positive".into()));
        }
        if self.window_length < 8 || self.hop == 0 || self.hop > self.window_length {
            return Err(Error::Config("invalid mel window/hop".into()));
        }
        Ok(())
    }
}

/// A k-bit message over {-1, +1}.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Payload {
    bits: Vec<i8>,
}

impl Payload {
    pub fn from_bits(bits: Vec<i8>) -> Result<Self> {
        if bits.is_empty() {
            return Err(Error::Config("payload must have at least one bit".into()));
        }
        if bits.iter().any(|&b| b != 1 && b != -1) {
            return Err(Error::Config("payload bits must be exactly +1 or -1".into()));
        }
        Ok(Self { bits })
    }

    /// Parse the CLI encoding: '0' maps to -1, '1' maps to +1.
    pub fn from_bit_string(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() || !s.chars().all(|c| c == '0' || c == '1') {
            return Err(Error::Config(
                "payload must be a non-empty string of 0s and 1s".into(),
            ));
        }
        Ok(Self {
            bits: s.chars().map(|c| if c == '1' { 1 } else { -1 }).collect(),
        })
    }

    pub fn to_bit_string(&self) -> String {
        self.bits
            .iter()
            .map(|&b| if b > 0 { '1' } else { '0' })
            .collect()
    }

    pub fn random(k: usize, rng: &mut impl Rng) -> Self {
        Self {
            bits: (0..k).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        false // length >= 1 by construction
    }

    pub fn bits(&self) -> &[i8] {
        &self.bits
    }

    pub fn bit(&self, i: usize) -> f64 {
        self.bits[i] as f64
    }
}

/// d-dimensional audio feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector(pub Vec<f64>);

impl EmbeddingVector {
    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

/// The public feature extractor: log-mel analysis plus a fixed projection.
pub struct FeatureExtractor {
    logmel: LogMel,
    mel: MelConfig,
    /// `d x bands`, row-major, orthonormal columns.
    projection: Vec<f64>,
    d: usize,
}

/// Saved forward state for [`FeatureExtractor::vjp`].
pub struct FeatureState {
    logmel_state: LogMelState,
    channel_count: usize,
    sample_rate: u32,
}

impl FeatureExtractor {
    pub fn new(mel: &MelConfig, sample_rate: u32, d: usize, proj_seed: u64) -> Result<Self> {
        mel.validate(sample_rate)?;
        if d < mel.mel_bands {
            return Err(Error::Config(format!(
                "embedding dimension {d} must be >= mel_bands {}",
                mel.mel_bands
            )));
        }
        let logmel = LogMel::new(
            mel.window_length,
            mel.hop,
            mel.mel_bands,
            sample_rate,
            mel.fmin,
            mel.fmax,
            mel.log_floor,
        );
        let projection = projection_matrix(d, mel.mel_bands, proj_seed)?;
        Ok(Self {
            logmel,
            mel: mel.clone(),
            projection,
            d,
        })
    }

    pub fn with_defaults(sample_rate: u32) -> Result<Self> {
        Self::new(
            &MelConfig::default(),
            sample_rate,
            EMBEDDING_DIM,
            DEFAULT_PROJECTION_SEED,
        )
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn mel_config(&self) -> &MelConfig {
        &self.mel
    }

    pub fn min_input_len(&self) -> usize {
        self.logmel.min_input_len()
    }

    pub fn extract(&self, clip: &AudioClip) -> Result<EmbeddingVector> {
        Ok(self.extract_with_state(clip)?.0)
    }

    /// Forward pass that also returns the state needed for the VJP.
    pub fn extract_with_state(&self, clip: &AudioClip) -> Result<(EmbeddingVector, FeatureState)> {
        if clip.len() < self.min_input_len() {
            return Err(Error::FeatureExtraction(format!(
                "clip of {} samples is shorter than one analysis frame ({})",
                clip.len(),
                self.min_input_len()
            )));
        }
        let mono = downmix(clip);
        let state = self.logmel.forward(&mono.samples)?;
        let bands = self.mel.mel_bands;
        let inv_frames = 1.0 / state.frames as f64;
        let mut mean = vec![0.0; bands];
        for t in 0..state.frames {
            for (m, &v) in mean.iter_mut().zip(&state.logmel[t * bands..(t + 1) * bands]) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m *= inv_frames;
        }
        let mut x = vec![0.0; self.d];
        for (r, xr) in x.iter_mut().enumerate() {
            *xr = self.projection[r * bands..(r + 1) * bands]
                .iter()
                .zip(&mean)
                .map(|(p, m)| p * m)
                .sum();
        }
        Ok((
            EmbeddingVector(x),
            FeatureState {
                logmel_state: state,
                channel_count: clip.channel_count(),
                sample_rate: clip.sample_rate(),
            },
        ))
    }

    /// Exact VJP of [`Self::extract`]: embedding-space cotangent back to an
    /// input-clip-shaped gradient.
    pub fn vjp(&self, state: &FeatureState, cotangent: &EmbeddingVector) -> Result<AudioClip> {
        if cotangent.dim() != self.d {
            return Err(Error::ShapeMismatch(format!(
                "cotangent dim {} != embedding dim {}",
                cotangent.dim(),
                self.d
            )));
        }
        let bands = self.mel.mel_bands;
        let frames = state.logmel_state.frames;
        // adjoint of projection: u = P^T cot
        let mut u = vec![0.0; bands];
        for (r, &c) in cotangent.0.iter().enumerate() {
            for (ub, p) in u.iter_mut().zip(&self.projection[r * bands..(r + 1) * bands]) {
                *ub += p * c;
            }
        }
        // adjoint of the time mean: spread over frames
        let inv_frames = 1.0 / frames as f64;
        let mut logmel_cot = vec![0.0; frames * bands];
        for t in 0..frames {
            for (dst, &ub) in logmel_cot[t * bands..(t + 1) * bands].iter_mut().zip(&u) {
                *dst = ub * inv_frames;
            }
        }
        let mono_grad = self.logmel.vjp(&state.logmel_state, &logmel_cot);
        // adjoint of the mean downmix: each channel receives grad / channels
        let scale = 1.0 / state.channel_count as f64;
        let channels =
            vec![mono_grad.iter().map(|g| g * scale).collect::<Vec<f64>>(); state.channel_count];
        AudioClip::new(channels, state.sample_rate)
            .map_err(|_| Error::InvalidAudio("non-finite feature gradient".into()))
    }
}

/// Fixed `d x bands` projection with orthonormal columns, derived from the
/// public seed.
fn projection_matrix(d: usize, bands: usize, proj_seed: u64) -> Result<Vec<f64>> {
    let mut rng = ChaCha20Rng::seed_from_u64(proj_seed);
    let mut columns: Vec<Vec<f64>> = (0..bands)
        .map(|_| (0..d).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    orthonormalize(&mut columns)?;
    // row-major d x bands
    let mut p = vec![0.0; d * bands];
    for (b, col) in columns.iter().enumerate() {
        for (r, &v) in col.iter().enumerate() {
            p[r * bands + b] = v;
        }
    }
    Ok(p)
}

/// Decode the payload from a clip: `bit_i = sign(features . carrier_i)`,
/// with `sign(0)` resolved to +1.
pub fn detect_payload(
    clip: &AudioClip,
    bank: &CarrierBank,
    fx: &FeatureExtractor,
) -> Result<Payload> {
    let x = fx.extract(clip)?;
    detect_from_features(&x, bank)
}

/// Detection at the feature-vector level.
pub fn detect_from_features(x: &EmbeddingVector, bank: &CarrierBank) -> Result<Payload> {
    if x.dim() != bank.d() {
        return Err(Error::ShapeMismatch(format!(
            "feature dim {} != carrier dim {}",
            x.dim(),
            bank.d()
        )));
    }
    let bits = (0..bank.k())
        .map(|i| if bank.project(&x.0, i) >= 0.0 { 1 } else { -1 })
        .collect();
    Payload::from_bits(bits)
}

/// Bit error rate. A decode failure (`None`) is scored as exactly 0.5.
pub fn ber(truth: &Payload, decoded: Option<&Payload>) -> Result<f64> {
    match decoded {
        None => Ok(0.5),
        Some(d) => {
            if d.len() != truth.len() {
                return Err(Error::PayloadLength {
                    expected: truth.len(),
                    got: d.len(),
                });
            }
            let wrong = truth
                .bits()
                .iter()
                .zip(d.bits())
                .filter(|(a, b)| a != b)
                .count();
            Ok(wrong as f64 / truth.len() as f64)
        }
    }
}
