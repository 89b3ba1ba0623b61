//! Signal-level attack suite with differentiable (or straight-through)
//! backward contracts, evaluation-strength parameter defaults, and a
//! training-time sampler drawing from deliberately weaker ranges.

use rand::prelude::*;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::AudioClip;
use crate::error::{Error, Result};
use crate::fir::{
    bandpass_taps, convolve_same, convolve_same_adjoint, highpass_taps, lowpass_taps,
    moving_average_taps, SincResampler, FILTER_TAPS,
};
use crate::mdct::codec_round_trip;
use crate::transform::{decode, encode, TransformConfig};

/// Differentiability contract of an attack's backward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradMode {
    /// Backward is the exact vector-Jacobian product.
    Exact,
    /// Backward passes the cotangent through unchanged (straight-through
    /// estimator for non-differentiable forwards).
    StraightThrough,
    /// No backward; usable only outside the optimization loop.
    EvalOnly,
}

/// One parameterized attack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AttackSpec {
    Identity,
    Bandpass { low_hz: f64, high_hz: f64 },
    Lowpass { cutoff_hz: f64 },
    Highpass { cutoff_hz: f64 },
    Smooth { window: usize },
    Duck { gain: f64 },
    Boost { gain: f64 },
    Suppress { fraction: f64 },
    Crop { keep: f64 },
    Echo { delay_seconds: f64, volume: f64 },
    Speed { factor: f64 },
    Quantize { levels: u32 },
    Resample { target_hz: u32 },
    CodecSurrogateMp3 { bitrate_bps: f64 },
    CodecSurrogateAac { bitrate_bps: f64 },
    NoiseGaussian { sigma: f64 },
    NoisePink { sigma: f64 },
    RegenSurrogate,
}

impl AttackSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            AttackSpec::Identity => "identity",
            AttackSpec::Bandpass { .. } => "bandpass",
            AttackSpec::Lowpass { .. } => "lowpass",
            AttackSpec::Highpass { .. } => "highpass",
            AttackSpec::Smooth { .. } => "smooth",
            AttackSpec::Duck { .. } => "duck",
            AttackSpec::Boost { .. } => "boost",
            AttackSpec::Suppress { .. } => "suppress",
            AttackSpec::Crop { .. } => "crop",
            AttackSpec::Echo { .. } => "echo",
            AttackSpec::Speed { .. } => "speed",
            AttackSpec::Quantize { .. } => "quantize",
            AttackSpec::Resample { .. } => "resample",
            AttackSpec::CodecSurrogateMp3 { .. } => "codec_surrogate_mp3",
            AttackSpec::CodecSurrogateAac { .. } => "codec_surrogate_aac",
            AttackSpec::NoiseGaussian { .. } => "noise_gaussian",
            AttackSpec::NoisePink { .. } => "noise_pink",
            AttackSpec::RegenSurrogate => "regen_surrogate",
        }
    }

    pub fn grad_mode(&self) -> GradMode {
        match self {
            AttackSpec::Quantize { .. }
            | AttackSpec::CodecSurrogateMp3 { .. }
            | AttackSpec::CodecSurrogateAac { .. } => GradMode::StraightThrough,
            AttackSpec::RegenSurrogate => GradMode::EvalOnly,
            _ => GradMode::Exact,
        }
    }

    /// True for attacks whose output depends on the RNG stream.
    pub fn is_stochastic(&self) -> bool {
        matches!(
            self,
            AttackSpec::Suppress { .. }
                | AttackSpec::Crop { .. }
                | AttackSpec::NoiseGaussian { .. }
                | AttackSpec::NoisePink { .. }
                | AttackSpec::RegenSurrogate
        )
    }

    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        let nyquist = sample_rate as f64 / 2.0;
        let bad = |msg: String| Err(Error::Config(msg));
        match *self {
            AttackSpec::Identity | AttackSpec::RegenSurrogate => Ok(()),
            AttackSpec::Bandpass { low_hz, high_hz } => {
                if low_hz <= 0.0 || low_hz >= high_hz || high_hz >= nyquist {
                    bad(format!("bandpass needs 0 < low < high < {nyquist}"))
                } else {
                    Ok(())
                }
            }
            AttackSpec::Lowpass { cutoff_hz } | AttackSpec::Highpass { cutoff_hz } => {
                if cutoff_hz <= 0.0 || cutoff_hz >= nyquist {
                    bad(format!("cutoff must be in (0, {nyquist})"))
                } else {
                    Ok(())
                }
            }
            AttackSpec::Smooth { window } => {
                if window == 0 {
                    bad("smoothing window must be positive".into())
                } else {
                    Ok(())
                }
            }
            AttackSpec::Duck { gain } | AttackSpec::Boost { gain } => {
                if gain <= 0.0 {
                    bad("gain must be positive".into())
                } else {
                    Ok(())
                }
            }
            AttackSpec::Suppress { fraction } => {
                if !(0.0..1.0).contains(&fraction) {
                    bad("suppress fraction must be in [0, 1)".into())
                } else {
                    Ok(())
                }
            }
            AttackSpec::Crop { keep } => {
                if !(keep > 0.0 && keep <= 1.0) {
                    bad("crop keep fraction must be in (0, 1]".into())
                } else {
                    Ok(())
                }
            }
            AttackSpec::Echo {
                delay_seconds,
                volume,
            } => {
                if delay_seconds < 0.0 || volume < 0.0 {
                    bad("echo delay and volume must be nonnegative".into())
                } else {
                    Ok(())
                }
            }
            AttackSpec::Speed { factor } => {
                if factor <= 0.0 {
                    bad("speed factor must be positive".into())
                } else {
                    Ok(())
                }
            }
            AttackSpec::Quantize { levels } => {
                if levels < 2 {
                    bad("quantization needs at least 2 levels".into())
                } else {
                    Ok(())
                }
            }
            AttackSpec::Resample { target_hz } => {
                if target_hz == 0 || target_hz == sample_rate {
                    bad("resample target must differ from the source rate".into())
                } else {
                    Ok(())
                }
            }
            AttackSpec::CodecSurrogateMp3 { bitrate_bps }
            | AttackSpec::CodecSurrogateAac { bitrate_bps } => {
                if bitrate_bps <= 0.0 {
                    bad("codec bitrate budget must be positive".into())
                } else {
                    Ok(())
                }
            }
            AttackSpec::NoiseGaussian { sigma } | AttackSpec::NoisePink { sigma } => {
                if sigma < 0.0 {
                    bad("noise sigma must be nonnegative".into())
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Build a spec from a kind name and `key=value` parameters, filling the
    /// evaluation defaults for anything unspecified.
    pub fn from_name_params(name: &str, params: &[(String, f64)]) -> Result<Self> {
        let mut spec = evaluation_spec(name)?;
        let get = |key: &str, default: f64| -> f64 {
            params
                .iter()
                .rev()
                .find(|(k, _)| k == key)
                .map(|(_, v)| *v)
                .unwrap_or(default)
        };
        spec = match spec {
            AttackSpec::Bandpass { low_hz, high_hz } => AttackSpec::Bandpass {
                low_hz: get("low_hz", low_hz),
                high_hz: get("high_hz", high_hz),
            },
            AttackSpec::Lowpass { cutoff_hz } => AttackSpec::Lowpass {
                cutoff_hz: get("cutoff_hz", cutoff_hz),
            },
            AttackSpec::Highpass { cutoff_hz } => AttackSpec::Highpass {
                cutoff_hz: get("cutoff_hz", cutoff_hz),
            },
            AttackSpec::Smooth { window } => AttackSpec::Smooth {
                window: get("window", window as f64) as usize,
            },
            AttackSpec::Duck { gain } => AttackSpec::Duck {
                gain: get("gain", gain),
            },
            AttackSpec::Boost { gain } => AttackSpec::Boost {
                gain: get("gain", gain),
            },
            AttackSpec::Suppress { fraction } => AttackSpec::Suppress {
                fraction: get("fraction", fraction),
            },
            AttackSpec::Crop { keep } => AttackSpec::Crop {
                keep: get("keep", keep),
            },
            AttackSpec::Echo {
                delay_seconds,
                volume,
            } => AttackSpec::Echo {
                delay_seconds: get("delay_seconds", delay_seconds),
                volume: get("volume", volume),
            },
            AttackSpec::Speed { factor } => AttackSpec::Speed {
                factor: get("factor", factor),
            },
            AttackSpec::Quantize { levels } => AttackSpec::Quantize {
                levels: get("levels", levels as f64) as u32,
            },
            AttackSpec::Resample { target_hz } => AttackSpec::Resample {
                target_hz: get("target_hz", target_hz as f64) as u32,
            },
            AttackSpec::CodecSurrogateMp3 { bitrate_bps } => AttackSpec::CodecSurrogateMp3 {
                bitrate_bps: get("bitrate_bps", bitrate_bps),
            },
            AttackSpec::CodecSurrogateAac { bitrate_bps } => AttackSpec::CodecSurrogateAac {
                bitrate_bps: get("bitrate_bps", bitrate_bps),
            },
            AttackSpec::NoiseGaussian { sigma } => AttackSpec::NoiseGaussian {
                sigma: get("sigma", sigma),
            },
            AttackSpec::NoisePink { sigma } => AttackSpec::NoisePink {
                sigma: get("sigma", sigma),
            },
            other => other,
        };
        Ok(spec)
    }
}

/// The attack at its published evaluation strength.
pub fn evaluation_spec(name: &str) -> Result<AttackSpec> {
    Ok(match name {
        "identity" => AttackSpec::Identity,
        "bandpass" => AttackSpec::Bandpass {
            low_hz: 500.0,
            high_hz: 5000.0,
        },
        "lowpass" => AttackSpec::Lowpass { cutoff_hz: 500.0 },
        "highpass" => AttackSpec::Highpass { cutoff_hz: 1500.0 },
        "smooth" => AttackSpec::Smooth { window: 40 },
        "duck" => AttackSpec::Duck { gain: 10.0 },
        "boost" => AttackSpec::Boost { gain: 0.1 },
        "suppress" => AttackSpec::Suppress { fraction: 0.03 },
        "crop" => AttackSpec::Crop { keep: 0.5 },
        "echo" => AttackSpec::Echo {
            delay_seconds: 0.5,
            volume: 0.5,
        },
        "speed" => AttackSpec::Speed { factor: 1.25 },
        "quantize" => AttackSpec::Quantize { levels: 512 },
        "resample" => AttackSpec::Resample { target_hz: 32000 },
        "codec_surrogate_mp3" => AttackSpec::CodecSurrogateMp3 {
            bitrate_bps: 32_000.0,
        },
        "codec_surrogate_aac" => AttackSpec::CodecSurrogateAac {
            bitrate_bps: 64_000.0,
        },
        "noise_gaussian" => AttackSpec::NoiseGaussian { sigma: 0.05 },
        "noise_pink" => AttackSpec::NoisePink { sigma: 0.1 },
        "regen_surrogate" => AttackSpec::RegenSurrogate,
        other => return Err(Error::UnknownAttack(other.into())),
    })
}

/// All attack kind names, in the canonical evaluation order.
pub const ALL_KINDS: [&str; 18] = [
    "identity",
    "bandpass",
    "lowpass",
    "highpass",
    "smooth",
    "duck",
    "boost",
    "suppress",
    "crop",
    "echo",
    "speed",
    "quantize",
    "resample",
    "codec_surrogate_mp3",
    "codec_surrogate_aac",
    "noise_gaussian",
    "noise_pink",
    "regen_surrogate",
];

/// The full evaluation-strength suite, identity first.
pub fn evaluation_suite() -> Vec<AttackSpec> {
    ALL_KINDS
        .iter()
        .map(|n| evaluation_spec(n).expect("static names are valid"))
        .collect()
}

/// Saved forward state that the backward pass needs.
#[derive(Debug, Clone)]
enum BackwardPlan {
    Gain(f64),
    Fir { taps: Vec<f64>, center: usize },
    Mask(Vec<bool>),
    Crop { offset: usize, input_len: usize },
    Echo { delay: usize, volume: f64 },
    Speed { factor: f64, input_len: usize },
    Resample { source_hz: u32, target_hz: u32, input_len: usize },
    StraightThrough,
    EvalOnly,
}

/// Result of applying an attack: the attacked audio plus the backward
/// contract captured from the forward pass.
pub struct AttackOutcome {
    pub output: AudioClip,
    spec: AttackSpec,
    plan: BackwardPlan,
}

impl AttackOutcome {
    pub fn spec(&self) -> &AttackSpec {
        &self.spec
    }

    /// Map an output-shaped cotangent back to an input-shaped gradient:
    /// the exact VJP for exact-gradient kinds and the identity pass-through
    /// (resized to the input) for straight-through kinds.
    pub fn vjp(&self, cotangent: &AudioClip) -> Result<AudioClip> {
        if cotangent.len() != self.output.len()
            || cotangent.channel_count() != self.output.channel_count()
        {
            return Err(Error::ShapeMismatch(
                "attack cotangent must match the attack output shape".into(),
            ));
        }
        let channels: Vec<Vec<f64>> = match &self.plan {
            BackwardPlan::EvalOnly => {
                return Err(Error::AttackContract(format!(
                    "{} is evaluation-only and has no backward pass",
                    self.spec.kind_name()
                )))
            }
            BackwardPlan::Gain(g) => cotangent
                .channels()
                .iter()
                .map(|ch| ch.iter().map(|c| g * c).collect())
                .collect(),
            BackwardPlan::StraightThrough => cotangent.channels().to_vec(),
            BackwardPlan::Fir { taps, center } => cotangent
                .channels()
                .par_iter()
                .map(|ch| convolve_same_adjoint(ch, taps, *center))
                .collect(),
            BackwardPlan::Mask(mask) => cotangent
                .channels()
                .iter()
                .map(|ch| {
                    ch.iter()
                        .zip(mask)
                        .map(|(c, &keep)| if keep { *c } else { 0.0 })
                        .collect()
                })
                .collect(),
            BackwardPlan::Crop { offset, input_len } => cotangent
                .channels()
                .iter()
                .map(|ch| {
                    let mut g = vec![0.0; *input_len];
                    g[*offset..offset + ch.len()].copy_from_slice(ch);
                    g
                })
                .collect(),
            BackwardPlan::Echo { delay, volume } => cotangent
                .channels()
                .iter()
                .map(|ch| {
                    let n = ch.len();
                    (0..n)
                        .map(|i| {
                            let mut g = ch[i];
                            if i + delay < n {
                                g += volume * ch[i + delay];
                            }
                            g
                        })
                        .collect()
                })
                .collect(),
            BackwardPlan::Speed { factor, input_len } => cotangent
                .channels()
                .iter()
                .map(|ch| speed_adjoint(ch, *factor, *input_len))
                .collect(),
            BackwardPlan::Resample {
                source_hz,
                target_hz,
                input_len,
            } => cotangent
                .channels()
                .par_iter()
                .map(|ch| {
                    let down = SincResampler::new(*input_len, *source_hz, *target_hz);
                    let up = SincResampler::new(down.out_len(), *target_hz, *source_hz);
                    down.adjoint(&up.adjoint(ch))
                })
                .collect(),
        };
        // The input rate: resample and speed restore/keep the source rate.
        AudioClip::new(channels, cotangent.sample_rate())
            .map_err(|_| Error::InvalidAudio("non-finite attack gradient".into()))
    }
}

/// Apply `spec` to `clip`. Stochastic kinds draw from `rng`; a fixed seed
/// reproduces the attack exactly.
pub fn apply_attack(
    clip: &AudioClip,
    spec: &AttackSpec,
    rng: &mut impl Rng,
) -> Result<AttackOutcome> {
    let sr = clip.sample_rate();
    spec.validate(sr)?;
    let len = clip.len();
    let (channels, plan): (Vec<Vec<f64>>, BackwardPlan) = match *spec {
        AttackSpec::Identity => (clip.channels().to_vec(), BackwardPlan::Gain(1.0)),
        AttackSpec::Duck { gain } | AttackSpec::Boost { gain } => (
            clip.channels()
                .iter()
                .map(|ch| ch.iter().map(|s| gain * s).collect())
                .collect(),
            BackwardPlan::Gain(gain),
        ),
        AttackSpec::Bandpass { low_hz, high_hz } => {
            let taps = bandpass_taps(low_hz / sr as f64, high_hz / sr as f64, FILTER_TAPS);
            fir_apply(clip, taps)
        }
        AttackSpec::Lowpass { cutoff_hz } => {
            let taps = lowpass_taps(cutoff_hz / sr as f64, FILTER_TAPS);
            fir_apply(clip, taps)
        }
        AttackSpec::Highpass { cutoff_hz } => {
            let taps = highpass_taps(cutoff_hz / sr as f64, FILTER_TAPS);
            fir_apply(clip, taps)
        }
        AttackSpec::Smooth { window } => {
            let taps = moving_average_taps(window);
            let center = window / 2;
            let out = clip
                .channels()
                .par_iter()
                .map(|ch| convolve_same(ch, &taps, center))
                .collect();
            (out, BackwardPlan::Fir { taps, center })
        }
        AttackSpec::Suppress { fraction } => {
            let zeroed = ((fraction * len as f64).floor() as usize).min(len);
            let mut mask = vec![true; len];
            for idx in rand::seq::index::sample(rng, len, zeroed) {
                mask[idx] = false;
            }
            let out = clip
                .channels()
                .iter()
                .map(|ch| {
                    ch.iter()
                        .zip(&mask)
                        .map(|(s, &keep)| if keep { *s } else { 0.0 })
                        .collect()
                })
                .collect();
            (out, BackwardPlan::Mask(mask))
        }
        AttackSpec::Crop { keep } => {
            let keep_len = ((keep * len as f64).round() as usize).clamp(1, len);
            let offset = rng.random_range(0..=len - keep_len);
            let out = clip
                .channels()
                .iter()
                .map(|ch| ch[offset..offset + keep_len].to_vec())
                .collect();
            (
                out,
                BackwardPlan::Crop {
                    offset,
                    input_len: len,
                },
            )
        }
        AttackSpec::Echo {
            delay_seconds,
            volume,
        } => {
            let delay = (delay_seconds * sr as f64).round() as usize;
            let out = clip
                .channels()
                .iter()
                .map(|ch| {
                    (0..len)
                        .map(|i| {
                            let mut s = ch[i];
                            if i >= delay {
                                s += volume * ch[i - delay];
                            }
                            s
                        })
                        .collect()
                })
                .collect();
            (out, BackwardPlan::Echo { delay, volume })
        }
        AttackSpec::Speed { factor } => {
            let out = clip
                .channels()
                .iter()
                .map(|ch| speed_forward(ch, factor))
                .collect();
            (
                out,
                BackwardPlan::Speed {
                    factor,
                    input_len: len,
                },
            )
        }
        AttackSpec::Quantize { levels } => {
            let out = clip
                .channels()
                .iter()
                .map(|ch| ch.iter().map(|&s| quantize_sample(s, levels)).collect())
                .collect();
            (out, BackwardPlan::StraightThrough)
        }
        AttackSpec::Resample { target_hz } => {
            let out = clip
                .channels()
                .par_iter()
                .map(|ch| {
                    let down = SincResampler::new(len, sr, target_hz);
                    let up = SincResampler::new(down.out_len(), target_hz, sr);
                    up.forward(&down.forward(ch))
                })
                .collect();
            (
                out,
                BackwardPlan::Resample {
                    source_hz: sr,
                    target_hz,
                    input_len: len,
                },
            )
        }
        AttackSpec::CodecSurrogateMp3 { bitrate_bps } => {
            let bits = bitrate_bps / (sr as f64 * clip.channel_count() as f64);
            let out = clip
                .channels()
                .par_iter()
                .map(|ch| codec_round_trip(ch, 1152, bits))
                .collect();
            (out, BackwardPlan::StraightThrough)
        }
        AttackSpec::CodecSurrogateAac { bitrate_bps } => {
            let bits = bitrate_bps / (sr as f64 * clip.channel_count() as f64);
            let out = clip
                .channels()
                .par_iter()
                .map(|ch| codec_round_trip(ch, 1024, bits))
                .collect();
            (out, BackwardPlan::StraightThrough)
        }
        AttackSpec::NoiseGaussian { sigma } => {
            let out = clip
                .channels()
                .iter()
                .map(|ch| {
                    ch.iter()
                        .map(|s| s + sigma * rng.sample::<f64, _>(StandardNormal))
                        .collect()
                })
                .collect();
            (out, BackwardPlan::Gain(1.0))
        }
        AttackSpec::NoisePink { sigma } => {
            let out = clip
                .channels()
                .iter()
                .map(|ch| {
                    let pink = pink_noise(len, sigma, rng);
                    ch.iter().zip(pink).map(|(s, p)| s + p).collect()
                })
                .collect();
            (out, BackwardPlan::Gain(1.0))
        }
        AttackSpec::RegenSurrogate => {
            let out = regen_surrogate(clip, rng)?;
            (out.into_channels(), BackwardPlan::EvalOnly)
        }
    };
    let output = AudioClip::new(channels, sr)
        .map_err(|_| Error::InvalidAudio("attack produced invalid audio".into()))?;
    Ok(AttackOutcome {
        output,
        spec: spec.clone(),
        plan,
    })
}

/// [`apply_attack`] restricted to the optimization loop: evaluation-only
/// kinds are a contract violation here.
pub fn apply_attack_trainable(
    clip: &AudioClip,
    spec: &AttackSpec,
    rng: &mut impl Rng,
) -> Result<AttackOutcome> {
    if spec.grad_mode() == GradMode::EvalOnly {
        return Err(Error::AttackContract(format!(
            "{} cannot be used inside the training loop",
            spec.kind_name()
        )));
    }
    apply_attack(clip, spec, rng)
}

fn fir_apply(clip: &AudioClip, taps: Vec<f64>) -> (Vec<Vec<f64>>, BackwardPlan) {
    let center = taps.len() / 2;
    let out = clip
        .channels()
        .par_iter()
        .map(|ch| convolve_same(ch, &taps, center))
        .collect();
    (out, BackwardPlan::Fir { taps, center })
}

fn quantize_sample(s: f64, levels: u32) -> f64 {
    let clamped = s.clamp(-1.0, 1.0);
    let steps = (levels - 1) as f64;
    ((clamped + 1.0) / 2.0 * steps).round() / steps * 2.0 - 1.0
}

fn speed_forward(x: &[f64], factor: f64) -> Vec<f64> {
    let len = x.len();
    let out_len = (((len - 1) as f64 / factor).floor() as usize) + 1;
    (0..out_len)
        .map(|i| {
            let pos = i as f64 * factor;
            let j = pos.floor() as usize;
            let frac = pos - j as f64;
            if j + 1 < len {
                (1.0 - frac) * x[j] + frac * x[j + 1]
            } else {
                x[len - 1]
            }
        })
        .collect()
}

fn speed_adjoint(ybar: &[f64], factor: f64, input_len: usize) -> Vec<f64> {
    let mut xbar = vec![0.0; input_len];
    for (i, &g) in ybar.iter().enumerate() {
        let pos = i as f64 * factor;
        let j = pos.floor() as usize;
        let frac = pos - j as f64;
        if j + 1 < input_len {
            xbar[j] += (1.0 - frac) * g;
            xbar[j + 1] += frac * g;
        } else {
            xbar[input_len - 1] += g;
        }
    }
    xbar
}

/// 1/f-shaped noise via Kellet's pole-filter approximation, normalized to
/// RMS `sigma`.
fn pink_noise(len: usize, sigma: f64, rng: &mut impl Rng) -> Vec<f64> {
    let (mut b0, mut b1, mut b2, mut b3, mut b4, mut b5, mut b6) =
        (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    let mut pink: Vec<f64> = (0..len)
        .map(|_| {
            let white: f64 = rng.sample(StandardNormal);
            b0 = 0.99886 * b0 + white * 0.0555179;
            b1 = 0.99332 * b1 + white * 0.0750759;
            b2 = 0.96900 * b2 + white * 0.1538520;
            b3 = 0.86650 * b3 + white * 0.3104856;
            b4 = 0.55000 * b4 + white * 0.5329522;
            b5 = -0.7616 * b5 - white * 0.0168980;
            let out = b0 + b1 + b2 + b3 + b4 + b5 + b6 + white * 0.5362;
            b6 = white * 0.115926;
            out
        })
        .collect();
    let rms = (pink.iter().map(|p| p * p).sum::<f64>() / len as f64).sqrt();
    if rms > 0.0 {
        let scale = sigma / rms;
        for p in &mut pink {
            *p *= scale;
        }
    }
    pink
}

/// Latent round-trip regeneration surrogate: encode, quantize each latent
/// plane to 2^8 levels over its own range, add latent-domain Gaussian noise
/// at 1% of the latent RMS, decode.
fn regen_surrogate(clip: &AudioClip, rng: &mut impl Rng) -> Result<AudioClip> {
    let cfg = TransformConfig::default();
    let mut latent = encode(clip, &cfg)?;
    let sigma_z = 0.01 * latent.rms();
    let (re, im) = latent.planes_mut();
    for plane in [re, im] {
        let max_abs = plane.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if max_abs > 0.0 {
            let steps = 255.0 / 2.0; // 2^8 levels over [-max, max]
            for v in plane.iter_mut() {
                *v = (*v / max_abs * steps).round() / steps * max_abs;
            }
        }
        for v in plane.iter_mut() {
            let n: f64 = rng.sample(StandardNormal);
            *v += sigma_z * n;
        }
    }
    decode(&latent, &cfg, clip.len())
}

/// Training-time parameter ranges, strictly weaker than the evaluation
/// strengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingRanges {
    pub bandpass_low_hz: (f64, f64),
    pub bandpass_high_hz: (f64, f64),
    pub lowpass_cutoff_hz: (f64, f64),
    pub highpass_cutoff_hz: (f64, f64),
    pub smooth_window: (usize, usize),
    pub gain: (f64, f64),
    pub suppress_fraction: (f64, f64),
    pub crop_keep: (f64, f64),
    pub echo_delay_seconds: (f64, f64),
    pub echo_volume: (f64, f64),
    pub speed_factor: (f64, f64),
    pub quantize_levels: Vec<u32>,
    pub resample_targets_hz: Vec<u32>,
    /// Codec budgets are scaled up by this factor relative to evaluation.
    pub codec_budget_scale: f64,
    pub gaussian_sigma: (f64, f64),
    pub pink_sigma: (f64, f64),
}

impl Default for TrainingRanges {
    fn default() -> Self {
        Self {
            bandpass_low_hz: (300.0, 800.0),
            bandpass_high_hz: (4000.0, 8000.0),
            lowpass_cutoff_hz: (2000.0, 8000.0),
            highpass_cutoff_hz: (200.0, 1000.0),
            smooth_window: (8, 24),
            gain: (0.3, 3.0),
            suppress_fraction: (0.005, 0.02),
            crop_keep: (0.7, 0.95),
            echo_delay_seconds: (0.1, 0.3),
            echo_volume: (0.1, 0.4),
            speed_factor: (0.95, 1.1),
            quantize_levels: vec![1 << 12, 1 << 11, 1 << 10],
            resample_targets_hz: vec![40000, 36000],
            codec_budget_scale: 2.0,
            gaussian_sigma: (0.001, 0.03),
            pink_sigma: (0.01, 0.06),
        }
    }
}

/// Uniform sampler over the enabled kinds and their training ranges. The
/// evaluation-only regeneration surrogate is never sampled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttackSampler {
    pub kinds: Vec<String>,
    pub ranges: TrainingRanges,
}

impl Default for AttackSampler {
    fn default() -> Self {
        Self {
            kinds: ALL_KINDS
                .iter()
                .filter(|&&k| k != "regen_surrogate")
                .map(|&k| k.to_string())
                .collect(),
            ranges: TrainingRanges::default(),
        }
    }
}

impl AttackSampler {
    pub fn validate(&self) -> Result<()> {
        if self.kinds.is_empty() {
            return Err(Error::Config("attack sampler has no enabled kinds".into()));
        }
        for k in &self.kinds {
            let spec = evaluation_spec(k)?;
            if spec.grad_mode() == GradMode::EvalOnly {
                return Err(Error::Config(format!(
                    "evaluation-only attack {k} cannot be enabled for training"
                )));
            }
        }
        Ok(())
    }

    /// Draw one training attack: a uniform kind choice, then a uniform
    /// parameter draw from that kind's training range.
    pub fn sample(&self, rng: &mut impl Rng) -> Result<AttackSpec> {
        fn uni<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
            if lo == hi {
                lo
            } else {
                rng.random_range(lo..hi)
            }
        }
        self.validate()?;
        let kind = &self.kinds[rng.random_range(0..self.kinds.len())];
        let r = &self.ranges;
        Ok(match kind.as_str() {
            "identity" => AttackSpec::Identity,
            "bandpass" => AttackSpec::Bandpass {
                low_hz: uni(rng, r.bandpass_low_hz),
                high_hz: uni(rng, r.bandpass_high_hz),
            },
            "lowpass" => AttackSpec::Lowpass {
                cutoff_hz: uni(rng, r.lowpass_cutoff_hz),
            },
            "highpass" => AttackSpec::Highpass {
                cutoff_hz: uni(rng, r.highpass_cutoff_hz),
            },
            "smooth" => AttackSpec::Smooth {
                window: rng.random_range(r.smooth_window.0..=r.smooth_window.1),
            },
            "duck" => AttackSpec::Duck {
                gain: uni(rng, r.gain),
            },
            "boost" => AttackSpec::Boost {
                gain: uni(rng, r.gain),
            },
            "suppress" => AttackSpec::Suppress {
                fraction: uni(rng, r.suppress_fraction),
            },
            "crop" => AttackSpec::Crop {
                keep: uni(rng, r.crop_keep),
            },
            "echo" => AttackSpec::Echo {
                delay_seconds: uni(rng, r.echo_delay_seconds),
                volume: uni(rng, r.echo_volume),
            },
            "speed" => AttackSpec::Speed {
                factor: uni(rng, r.speed_factor),
            },
            "quantize" => AttackSpec::Quantize {
                levels: r.quantize_levels[rng.random_range(0..r.quantize_levels.len())],
            },
            "resample" => AttackSpec::Resample {
                target_hz: r.resample_targets_hz
                    [rng.random_range(0..r.resample_targets_hz.len())],
            },
            "codec_surrogate_mp3" => AttackSpec::CodecSurrogateMp3 {
                bitrate_bps: 32_000.0 * r.codec_budget_scale,
            },
            "codec_surrogate_aac" => AttackSpec::CodecSurrogateAac {
                bitrate_bps: 64_000.0 * r.codec_budget_scale,
            },
            "noise_gaussian" => AttackSpec::NoiseGaussian {
                sigma: uni(rng, r.gaussian_sigma),
            },
            "noise_pink" => AttackSpec::NoisePink {
                sigma: uni(rng, r.pink_sigma),
            },
            other => return Err(Error::UnknownAttack(other.into())),
        })
    }
}
