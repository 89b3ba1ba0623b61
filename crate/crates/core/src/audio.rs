//! Waveform data model, channel utilities, and the SI-SNR quality metric.

use crate::error::{Error, Result};

/// SI-SNR is capped at this value when the error energy is negligible, so
/// reports never contain infinities. The cap is symmetric (a vanishing target
/// projection reports the negated cap).
pub const SI_SNR_CAP_DB: f64 = 100.0;

/// A mono or stereo waveform. Samples are dimensionless amplitudes with a
/// nominal range of [-1, 1]; float WAV I/O does not clip, so values outside
/// that range are representable and preserved.
///
/// Invariants enforced at construction: 1 or 2 channels, all channels the same
/// nonzero length, every sample finite, positive sample rate. Amplitudes are
/// held as `f64` end to end; conversion to 32-bit floats happens only at the
/// WAV boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    channels: Vec<Vec<f64>>,
    sample_rate: u32,
}

impl AudioClip {
    pub fn new(channels: Vec<Vec<f64>>, sample_rate: u32) -> Result<Self> {
        if channels.is_empty() || channels.len() > 2 {
            return Err(Error::InvalidAudio(format!(
                "channel count must be 1 or 2, got {}",
                channels.len()
            )));
        }
        let len = channels[0].len();
        if len == 0 {
            return Err(Error::InvalidAudio("channels must be non-empty".into()));
        }
        if channels.iter().any(|c| c.len() != len) {
            return Err(Error::InvalidAudio(
                "all channels must have equal length".into(),
            ));
        }
        if sample_rate == 0 {
            return Err(Error::InvalidAudio("sample rate must be positive".into()));
        }
        for (i, c) in channels.iter().enumerate() {
            if c.iter().any(|s| !s.is_finite()) {
                return Err(Error::InvalidAudio(format!(
                    "non-finite sample in channel {i}"
                )));
            }
        }
        Ok(Self {
            channels,
            sample_rate,
        })
    }

    /// All-zero clip, mostly useful in tests and as a gradient workspace.
    pub fn silence(channel_count: usize, len: usize, sample_rate: u32) -> Result<Self> {
        Self::new(vec![vec![0.0; len]; channel_count], sample_rate)
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    /// Samples per channel.
    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        false // length >= 1 by construction
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn duration_seconds(&self) -> f64 {
        self.len() as f64 / self.sample_rate as f64
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn channel(&self, idx: usize) -> &[f64] {
        &self.channels[idx]
    }

    pub fn into_channels(self) -> Vec<Vec<f64>> {
        self.channels
    }

    /// Same shape and rate as `self`, all samples zero.
    pub fn zeros_like(&self) -> Self {
        Self {
            channels: vec![vec![0.0; self.len()]; self.channel_count()],
            sample_rate: self.sample_rate,
        }
    }
}

/// A single-channel signal, the input shape for feature extraction.
#[derive(Debug, Clone, PartialEq)]
pub struct MonoSignal {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

/// Per-sample arithmetic mean across channels; mono input is passed through
/// unchanged. The unweighted mean keeps feature magnitudes invariant to the
/// channel count.
pub fn downmix(clip: &AudioClip) -> MonoSignal {
    let n = clip.len();
    let c = clip.channel_count();
    if c == 1 {
        return MonoSignal {
            samples: clip.channel(0).to_vec(),
            sample_rate: clip.sample_rate(),
        };
    }
    let inv = 1.0 / c as f64;
    let mut samples = vec![0.0; n];
    for ch in clip.channels() {
        for (acc, &s) in samples.iter_mut().zip(ch.iter()) {
            *acc += s;
        }
    }
    for s in &mut samples {
        *s *= inv;
    }
    MonoSignal {
        samples,
        sample_rate: clip.sample_rate(),
    }
}

/// Scale-invariant signal-to-noise ratio in dB, averaged over channels.
///
/// Per channel, the estimate is decomposed against the scaled reference
/// `s_t = (<est, ref>/<ref, ref>) * ref` and the value is
/// `10*log10(|s_t|^2 / |est - s_t|^2)`. A vanishing error term reports
/// [`SI_SNR_CAP_DB`]; a vanishing target term reports its negation.
pub fn si_snr(reference: &AudioClip, estimate: &AudioClip) -> Result<f64> {
    if reference.len() != estimate.len()
        || reference.channel_count() != estimate.channel_count()
        || reference.sample_rate() != estimate.sample_rate()
    {
        return Err(Error::ShapeMismatch(
            "SI-SNR requires equal lengths, channel counts and sample rates".into(),
        ));
    }
    let mut total = 0.0;
    for (r, e) in reference.channels().iter().zip(estimate.channels()) {
        total += si_snr_channel(r, e)?;
    }
    Ok(total / reference.channel_count() as f64)
}

fn si_snr_channel(reference: &[f64], estimate: &[f64]) -> Result<f64> {
    let ref_energy: f64 = reference.iter().map(|s| s * s).sum();
    if ref_energy == 0.0 {
        return Err(Error::SilentReference);
    }
    let dot: f64 = reference
        .iter()
        .zip(estimate.iter())
        .map(|(r, e)| r * e)
        .sum();
    let alpha = dot / ref_energy;
    let target_energy = alpha * alpha * ref_energy;
    let err_energy: f64 = reference
        .iter()
        .zip(estimate.iter())
        .map(|(r, e)| {
            let d = e - alpha * r;
            d * d
        })
        .sum();
    if err_energy < 1e-12 * target_energy {
        return Ok(SI_SNR_CAP_DB);
    }
    if target_energy < 1e-12 * err_energy {
        return Ok(-SI_SNR_CAP_DB);
    }
    Ok(10.0 * (target_energy / err_energy).log10())
}
