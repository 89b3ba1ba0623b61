//! The per-clip watermark optimization loop: decode the perturbed latent,
//! run one sampled training attack, extract features, combine message and
//! perceptual losses, and step the perturbation with Adam. A fixed probe
//! set of attacks measures running bit recovery, drives best-checkpoint
//! selection, and triggers the patience-based stopping rule.

use serde::{Deserialize, Serialize};

use crate::attacks::{apply_attack, apply_attack_trainable, AttackSampler, AttackSpec};
use crate::audio::{si_snr, AudioClip};
use crate::carriers::{derive_carriers, CarrierBank, SecretKey, EMBEDDING_DIM};
use crate::error::{Error, Result};
use crate::features::{ber, detect_from_features, detect_payload, FeatureExtractor, MelConfig, Payload};
use crate::grad::{adam_step, AdamConfig, AdamState};
use crate::losses::{message_loss, LossConfig, PerceptualLoss, ReferenceStates};
use crate::seeding::derive_rng;
use crate::transform::{decode, decode_vjp, encode, LatentGrid, TransformConfig};

const SEED_TAG_STEP: u64 = 1;
const SEED_TAG_PROBE: u64 = 2;

/// Default running-robustness probe set: one fixed instance per attack
/// family that the optimization is expected to survive, at
/// training-strength parameters. Fixed instances (and fixed per-probe noise
/// seeds) make the stopping rule deterministic.
pub fn default_probe_set() -> Vec<AttackSpec> {
    vec![
        AttackSpec::Identity,
        AttackSpec::Quantize { levels: 1 << 10 },
        AttackSpec::Resample { target_hz: 36000 },
        AttackSpec::NoiseGaussian { sigma: 0.03 },
        AttackSpec::Boost { gain: 0.3 },
        AttackSpec::Duck { gain: 3.0 },
        AttackSpec::Suppress { fraction: 0.02 },
        AttackSpec::Echo {
            delay_seconds: 0.3,
            volume: 0.4,
        },
    ]
}

/// Everything the embedding loop needs to know.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedConfig {
    /// Payload bits.
    pub k: usize,
    pub max_steps: usize,
    /// Steps without probe-BRR improvement before stopping.
    pub patience: usize,
    /// Steps between robustness probes.
    pub probe_interval: usize,
    /// Feature-space dimension the carriers live in.
    pub embedding_dim: usize,
    /// Public projection seed of the feature extractor.
    pub projection_seed: u64,
    /// Root seed for attack sampling and stochastic attack draws.
    pub attack_seed: u64,
    pub transform: TransformConfig,
    pub mel: MelConfig,
    pub loss: LossConfig,
    pub optimizer: AdamConfig,
    pub sampler: AttackSampler,
    pub probe_attacks: Vec<AttackSpec>,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        Self {
            k: 16,
            max_steps: 20_000,
            patience: 1_000,
            probe_interval: 50,
            embedding_dim: EMBEDDING_DIM,
            projection_seed: crate::features::DEFAULT_PROJECTION_SEED,
            attack_seed: 0,
            transform: TransformConfig::default(),
            mel: MelConfig::default(),
            loss: LossConfig::default(),
            optimizer: AdamConfig::default(),
            sampler: AttackSampler::default(),
            probe_attacks: default_probe_set(),
        }
    }
}

impl EmbedConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k > self.embedding_dim {
            return Err(Error::Capacity {
                k: self.k,
                d: self.embedding_dim,
            });
        }
        if self.probe_interval == 0 {
            return Err(Error::Config("probe_interval must be positive".into()));
        }
        if self.patience < self.probe_interval {
            return Err(Error::Config(
                "patience must be at least one probe interval".into(),
            ));
        }
        if self.probe_attacks.is_empty() {
            return Err(Error::Config("probe attack set is empty".into()));
        }
        for spec in &self.probe_attacks {
            if spec.grad_mode() == crate::attacks::GradMode::EvalOnly {
                return Err(Error::Config(
                    "evaluation-only attacks cannot be probes".into(),
                ));
            }
        }
        self.transform.validate()?;
        self.loss.validate()?;
        self.optimizer.validate()?;
        self.sampler.validate()?;
        Ok(())
    }
}

/// One probe snapshot in the optimization history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbePoint {
    pub step: usize,
    /// Mean bit recovery rate (1 - BER) over the probe attack set.
    pub probe_brr: f64,
    /// Running best of `probe_brr` up to this step.
    pub best_brr: f64,
    pub clean_ber: f64,
    pub message_loss: f64,
    pub perceptual_loss: f64,
    pub si_snr_db: f64,
}

/// Outcome summary of one embedding run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedReport {
    pub k: usize,
    pub steps_run: usize,
    pub best_step: usize,
    pub stopping_reason: String,
    pub best_probe_brr: f64,
    pub final_clean_ber: f64,
    /// SI-SNR(original, watermarked) at the returned checkpoint.
    pub si_snr_db: f64,
    /// Perceptual loss at the returned checkpoint.
    pub perceptual_loss: f64,
    pub attack_seed: u64,
    pub projection_seed: u64,
    pub history: Vec<ProbePoint>,
    /// Wall-clock time is environment-dependent and deliberately excluded
    /// from the serialized report so reruns are byte-identical; the CLI
    /// logs it separately.
    #[serde(skip)]
    pub wall_seconds: f64,
}

impl EmbedReport {
    /// Probe history as CSV (`step,brr,clean_ber,lm,lp,sisnr`).
    pub fn history_csv(&self) -> String {
        let mut out = String::from("step,brr,clean_ber,lm,lp,sisnr\n");
        for p in &self.history {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                p.step, p.probe_brr, p.clean_ber, p.message_loss, p.perceptual_loss, p.si_snr_db
            ));
        }
        out
    }
}

/// The differentiable embedding objective for a fixed clip/key/payload,
/// exposing one-step loss-and-gradient evaluation. The embed loop drives
/// it; gradient checks probe it directly.
pub struct EmbedProblem {
    cfg: EmbedConfig,
    clip: AudioClip,
    latent: LatentGrid,
    bank: CarrierBank,
    payload: Payload,
    extractor: FeatureExtractor,
    perceptual: PerceptualLoss,
    reference: ReferenceStates,
}

impl EmbedProblem {
    pub fn new(
        clip: &AudioClip,
        key: &SecretKey,
        payload: &Payload,
        cfg: &EmbedConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        if payload.len() != cfg.k {
            return Err(Error::PayloadLength {
                expected: cfg.k,
                got: payload.len(),
            });
        }
        let latent = encode(clip, &cfg.transform)?;
        let bank = derive_carriers(key, cfg.k, cfg.embedding_dim)?;
        let extractor = FeatureExtractor::new(
            &cfg.mel,
            clip.sample_rate(),
            cfg.embedding_dim,
            cfg.projection_seed,
        )?;
        let perceptual = PerceptualLoss::new(&cfg.loss, clip.sample_rate())?;
        let reference = perceptual.analyze_reference(clip)?;
        Ok(Self {
            cfg: cfg.clone(),
            clip: clip.clone(),
            latent,
            bank,
            payload: payload.clone(),
            extractor,
            perceptual,
            reference,
        })
    }

    pub fn latent(&self) -> &LatentGrid {
        &self.latent
    }

    pub fn zero_delta(&self) -> LatentGrid {
        LatentGrid::zeros_like(&self.latent)
    }

    /// Watermarked audio for a given perturbation.
    pub fn watermarked(&self, delta: &LatentGrid) -> Result<AudioClip> {
        let perturbed = self.latent.add(delta)?;
        decode(&perturbed, &self.cfg.transform, self.clip.len())
    }

    /// Full forward/backward through decode, one training attack, feature
    /// extraction, and the weighted losses. Returns the total loss and its
    /// gradient w.r.t. the perturbation.
    pub fn loss_and_grad(
        &self,
        delta: &LatentGrid,
        attack: &AttackSpec,
        step_index: u64,
    ) -> Result<(f64, LatentGrid)> {
        let watermarked = self.watermarked(delta)?;

        let mut attack_rng = derive_rng(self.cfg.attack_seed, &[SEED_TAG_STEP, step_index]);
        let outcome = apply_attack_trainable(&watermarked, attack, &mut attack_rng)?;

        let (x, feat_state) = self.extractor.extract_with_state(&outcome.output)?;
        let (l_m, g_x) = message_loss(&x, &self.bank, &self.payload, self.cfg.loss.margin)?;
        let g_attacked = self.extractor.vjp(&feat_state, &g_x)?;
        let g_wave_message = outcome.vjp(&g_attacked)?;

        let (l_p, g_wave_perceptual) = self
            .perceptual
            .eval_with_reference(&self.reference, &watermarked)?;

        let lm_w = self.cfg.loss.lambda_message;
        let lp_w = self.cfg.loss.lambda_perceptual;
        let total = lm_w * l_m + lp_w * l_p;
        if !total.is_finite() {
            return Err(Error::Aborted("non-finite loss".into()));
        }
        let combined = AudioClip::new(
            g_wave_message
                .channels()
                .iter()
                .zip(g_wave_perceptual.channels())
                .map(|(m, p)| {
                    m.iter()
                        .zip(p)
                        .map(|(gm, gp)| lm_w * gm + lp_w * gp)
                        .collect()
                })
                .collect(),
            watermarked.sample_rate(),
        )
        .map_err(|_| Error::Aborted("non-finite waveform gradient".into()))?;
        let grad = decode_vjp(&combined, &self.cfg.transform)?;
        Ok((total, grad))
    }

    /// Probe metrics at a given perturbation: mean BRR over the fixed probe
    /// set, clean BER, clean message loss, perceptual loss, and SI-SNR.
    pub fn probe(&self, delta: &LatentGrid) -> Result<ProbeMetrics> {
        let watermarked = self.watermarked(delta)?;
        let (x, _) = self.extractor.extract_with_state(&watermarked)?;
        let clean_ber = ber(
            &self.payload,
            Some(&detect_from_features(&x, &self.bank)?),
        )?;
        let (l_m, _) = message_loss(&x, &self.bank, &self.payload, self.cfg.loss.margin)?;
        let (l_p, _) = self
            .perceptual
            .eval_with_reference(&self.reference, &watermarked)?;
        let si = si_snr(&self.clip, &watermarked)?;

        let mut brr_sum = 0.0;
        for (i, spec) in self.cfg.probe_attacks.iter().enumerate() {
            let mut rng = derive_rng(self.cfg.attack_seed, &[SEED_TAG_PROBE, i as u64]);
            let attacked = apply_attack(&watermarked, spec, &mut rng)?;
            let b = match detect_payload(&attacked.output, &self.bank, &self.extractor) {
                Ok(decoded) => ber(&self.payload, Some(&decoded))?,
                Err(Error::FeatureExtraction(_)) | Err(Error::TooShort { .. }) => 0.5,
                Err(e) => return Err(e),
            };
            brr_sum += 1.0 - b;
        }
        Ok(ProbeMetrics {
            probe_brr: brr_sum / self.cfg.probe_attacks.len() as f64,
            clean_ber,
            message_loss: l_m,
            perceptual_loss: l_p,
            si_snr_db: si,
        })
    }

    pub fn config(&self) -> &EmbedConfig {
        &self.cfg
    }
}

/// Metrics from one probe evaluation.
#[derive(Debug, Clone, Copy)]
pub struct ProbeMetrics {
    pub probe_brr: f64,
    pub clean_ber: f64,
    pub message_loss: f64,
    pub perceptual_loss: f64,
    pub si_snr_db: f64,
}

/// Embed `payload` into `clip` under `key`, returning the watermarked clip
/// at the best probe checkpoint and the run report.
pub fn embed(
    clip: &AudioClip,
    key: &SecretKey,
    payload: &Payload,
    cfg: &EmbedConfig,
) -> Result<(AudioClip, EmbedReport)> {
    let start = std::time::Instant::now();
    let min_len = clip.sample_rate() as usize;
    if clip.len() < min_len {
        return Err(Error::TooShort {
            got: clip.len(),
            need: min_len,
        });
    }
    let problem = EmbedProblem::new(clip, key, payload, cfg)?;
    let mut delta = problem.zero_delta();
    let mut adam = AdamState::new(cfg.optimizer, delta.plane_len());
    let mut sample_rng = derive_rng(cfg.attack_seed, &[SEED_TAG_STEP, 0]);

    let mut history: Vec<ProbePoint> = Vec::new();
    let mut best_delta = delta.clone();
    let mut best_brr;
    let mut best_lp;
    let mut best_step = 0usize;
    let mut last_improvement = 0usize;

    let baseline = problem.probe(&delta)?;
    best_brr = baseline.probe_brr;
    best_lp = baseline.perceptual_loss;
    history.push(ProbePoint {
        step: 0,
        probe_brr: baseline.probe_brr,
        best_brr,
        clean_ber: baseline.clean_ber,
        message_loss: baseline.message_loss,
        perceptual_loss: baseline.perceptual_loss,
        si_snr_db: baseline.si_snr_db,
    });

    let mut steps_run = 0usize;
    let mut stopping_reason = if cfg.max_steps == 0 {
        "max steps reached".to_string()
    } else {
        String::new()
    };

    for t in 1..=cfg.max_steps {
        let attack = cfg.sampler.sample(&mut sample_rng)?;
        let step_result = problem
            .loss_and_grad(&delta, &attack, t as u64)
            .and_then(|(_, grad)| adam_step(&mut delta, &grad, &mut adam));
        match step_result {
            Ok(()) => {}
            Err(Error::Aborted(msg)) => {
                stopping_reason = format!("aborted at step {t}: {msg} (kept last good checkpoint)");
                steps_run = t;
                break;
            }
            Err(e) => return Err(e),
        }
        steps_run = t;

        if t % cfg.probe_interval == 0 {
            let m = problem.probe(&delta)?;
            let improved =
                m.probe_brr > best_brr || (m.probe_brr == best_brr && m.perceptual_loss < best_lp);
            if improved {
                best_brr = m.probe_brr;
                best_lp = m.perceptual_loss;
                best_delta = delta.clone();
                best_step = t;
                last_improvement = t;
            }
            history.push(ProbePoint {
                step: t,
                probe_brr: m.probe_brr,
                best_brr,
                clean_ber: m.clean_ber,
                message_loss: m.message_loss,
                perceptual_loss: m.perceptual_loss,
                si_snr_db: m.si_snr_db,
            });
            if t - last_improvement >= cfg.patience {
                stopping_reason = format!(
                    "converged: probe BRR did not improve for {} steps",
                    t - last_improvement
                );
                break;
            }
        }
    }
    if stopping_reason.is_empty() {
        stopping_reason = "max steps reached".to_string();
    }

    let watermarked = problem.watermarked(&best_delta)?;
    let final_metrics = problem.probe(&best_delta)?;
    let report = EmbedReport {
        k: cfg.k,
        steps_run,
        best_step,
        stopping_reason,
        best_probe_brr: best_brr,
        final_clean_ber: final_metrics.clean_ber,
        si_snr_db: final_metrics.si_snr_db,
        perceptual_loss: final_metrics.perceptual_loss,
        attack_seed: cfg.attack_seed,
        projection_seed: cfg.projection_seed,
        history,
        wall_seconds: start.elapsed().as_secs_f64(),
    };
    Ok((watermarked, report))
}

/// Payload check against a clip: derive carriers, detect, compare.
/// Detection failures are in-band results (BER 0.5, no match), not errors.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOutcome {
    pub decoded: Option<Payload>,
    pub ber: f64,
    pub matched: bool,
}

pub fn verify(clip: &AudioClip, key: &SecretKey, expected: &Payload) -> Result<VerifyOutcome> {
    verify_with(
        clip,
        key,
        expected,
        &MelConfig::default(),
        EMBEDDING_DIM,
        crate::features::DEFAULT_PROJECTION_SEED,
    )
}

pub fn verify_with(
    clip: &AudioClip,
    key: &SecretKey,
    expected: &Payload,
    mel: &MelConfig,
    embedding_dim: usize,
    projection_seed: u64,
) -> Result<VerifyOutcome> {
    let bank = derive_carriers(key, expected.len(), embedding_dim)?;
    let extractor = FeatureExtractor::new(mel, clip.sample_rate(), embedding_dim, projection_seed)?;
    match detect_payload(clip, &bank, &extractor) {
        Ok(decoded) => {
            let b = ber(expected, Some(&decoded))?;
            Ok(VerifyOutcome {
                matched: b == 0.0,
                decoded: Some(decoded),
                ber: b,
            })
        }
        Err(Error::FeatureExtraction(_)) | Err(Error::TooShort { .. }) => Ok(VerifyOutcome {
            decoded: None,
            ber: 0.5,
            matched: false,
        }),
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha20Rng;

    fn music_like_clip(seed: u64, seconds: f64) -> AudioClip {
        let sr = 44100u32;
        let len = (seconds * sr as f64) as usize;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let base_freqs: Vec<f64> = (0..4).map(|_| rng.random_range(80.0..2000.0)).collect();
        let channels = (0..2)
            .map(|_| {
                let mut x = vec![0.0; len];
                for &f in &base_freqs {
                    let amp = rng.random_range(0.05..0.2);
                    let phase = rng.random_range(0.0..std::f64::consts::TAU);
                    for (i, s) in x.iter_mut().enumerate() {
                        let t = i as f64 / sr as f64;
                        let env = 0.6 + 0.4 * (2.0 * std::f64::consts::PI * 0.5 * t).sin();
                        *s += amp
                            * env
                            * (std::f64::consts::TAU * f * t + phase).sin();
                    }
                }
                for s in x.iter_mut() {
                    *s += rng.random_range(-0.01..0.01);
                }
                x
            })
            .collect();
        AudioClip::new(channels, sr).unwrap()
    }

    fn key(byte: u8) -> SecretKey {
        SecretKey([byte; 32])
    }

    fn quick_cfg() -> EmbedConfig {
        EmbedConfig {
            max_steps: 120,
            patience: 60,
            probe_interval: 30,
            ..EmbedConfig::default()
        }
    }

    #[test]
    fn zero_steps_returns_the_input_to_transform_accuracy() {
        let clip = music_like_clip(1, 1.2);
        let payload = Payload::from_bit_string("0110100110010110").unwrap();
        let cfg = EmbedConfig {
            max_steps: 0,
            ..quick_cfg()
        };
        let (out, report) = embed(&clip, &key(1), &payload, &cfg).unwrap();
        let max_err: f64 = clip
            .channels()
            .iter()
            .zip(out.channels())
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max);
        assert!(max_err < 1e-6, "max err {max_err}");
        assert!(report.si_snr_db > 90.0, "SI-SNR {}", report.si_snr_db);
        assert_eq!(report.steps_run, 0);
        assert_eq!(report.history.len(), 1);
    }

    #[test]
    fn too_short_clip_is_a_precondition_error() {
        let clip = music_like_clip(2, 0.5);
        let payload = Payload::from_bit_string("0110100110010110").unwrap();
        assert!(matches!(
            embed(&clip, &key(1), &payload, &quick_cfg()),
            Err(Error::TooShort { .. })
        ));
    }

    #[test]
    fn payload_length_must_match_k() {
        let clip = music_like_clip(3, 1.1);
        let payload = Payload::from_bit_string("0101").unwrap();
        assert!(matches!(
            embed(&clip, &key(1), &payload, &quick_cfg()),
            Err(Error::PayloadLength { .. })
        ));
    }

    #[test]
    fn embedding_is_deterministic() {
        let clip = music_like_clip(4, 1.0);
        let payload = Payload::from_bit_string("1100101001101001").unwrap();
        let cfg = EmbedConfig {
            max_steps: 40,
            patience: 40,
            probe_interval: 20,
            ..EmbedConfig::default()
        };
        let (out1, rep1) = embed(&clip, &key(9), &payload, &cfg).unwrap();
        let (out2, rep2) = embed(&clip, &key(9), &payload, &cfg).unwrap();
        assert_eq!(out1, out2);
        assert_eq!(
            serde_json::to_string(&rep1).unwrap(),
            serde_json::to_string(&rep2).unwrap()
        );
    }

    #[test]
    fn running_best_brr_is_monotone() {
        let clip = music_like_clip(5, 1.0);
        let payload = Payload::from_bit_string("1001011010100101").unwrap();
        let (_, report) = embed(&clip, &key(3), &payload, &quick_cfg()).unwrap();
        let mut prev = f64::MIN;
        for p in &report.history {
            assert!(p.best_brr >= prev);
            assert!(p.best_brr >= p.probe_brr - 1e-15);
            prev = p.best_brr;
        }
    }

    #[test]
    fn composed_chain_gradient_matches_finite_differences() {
        // decode -> attack -> features -> losses, against central
        // differences over the scalar total loss, on a 0.2 s clip. The clip
        // carries a solid broadband floor so no mel band of the attacked
        // audio sits near the log floor, where central differences lose
        // accuracy to curvature.
        let mut rng = ChaCha20Rng::seed_from_u64(10);
        let clip = {
            let len = 8820;
            let channels = (0..2)
                .map(|_| {
                    (0..len)
                        .map(|i| {
                            let t = i as f64 / 44100.0;
                            0.3 * (std::f64::consts::TAU * 440.0 * t).sin()
                                + 0.2 * (std::f64::consts::TAU * 2300.0 * t).sin()
                                + rng.random_range(-0.1..0.1)
                        })
                        .collect()
                })
                .collect();
            AudioClip::new(channels, 44100).unwrap()
        };
        let payload = Payload::from_bit_string("0110100110010110").unwrap();
        let problem = EmbedProblem::new(&clip, &key(5), &payload, &quick_cfg()).unwrap();
        let mut delta = problem.zero_delta();
        {
            let (re, im) = delta.planes_mut();
            for v in re.iter_mut().chain(im.iter_mut()) {
                *v = rng.random_range(-0.05..0.05);
            }
        }

        for attack in [
            AttackSpec::Identity,
            AttackSpec::Lowpass { cutoff_hz: 5000.0 },
            AttackSpec::Echo {
                delay_seconds: 0.05,
                volume: 0.3,
            },
            AttackSpec::NoiseGaussian { sigma: 0.01 },
            AttackSpec::Speed { factor: 1.05 },
        ] {
            let (_, grad) = problem.loss_and_grad(&delta, &attack, 7).unwrap();
            let h = 1e-6;
            for trial in 0..5 {
                let mut dir = problem.zero_delta();
                {
                    let (re, im) = dir.planes_mut();
                    for v in re.iter_mut().chain(im.iter_mut()) {
                        *v = rng.random_range(-1.0..1.0);
                    }
                }
                let eval = |s: f64| -> f64 {
                    let mut d = delta.clone();
                    {
                        let (re, im) = d.planes_mut();
                        for (v, dv) in re.iter_mut().zip(dir.re()) {
                            *v += s * h * dv;
                        }
                        for (v, dv) in im.iter_mut().zip(dir.im()) {
                            *v += s * h * dv;
                        }
                    }
                    problem.loss_and_grad(&d, &attack, 7).unwrap().0
                };
                let fd = (eval(1.0) - eval(-1.0)) / (2.0 * h);
                let analytic: f64 = grad
                    .re()
                    .iter()
                    .zip(dir.re())
                    .chain(grad.im().iter().zip(dir.im()))
                    .map(|(a, b)| a * b)
                    .sum();
                let rel = (fd - analytic).abs() / fd.abs().max(1e-12);
                assert!(
                    rel < 1e-4,
                    "{} trial {trial}: relative error {rel}",
                    attack.kind_name()
                );
            }
        }
    }

    #[test]
    fn verify_short_clip_reports_half_ber_failure() {
        let clip = AudioClip::silence(1, 100, 44100).unwrap();
        let expected = Payload::from_bit_string("0110100110010110").unwrap();
        let out = verify(&clip, &key(2), &expected).unwrap();
        assert_eq!(out.ber, 0.5);
        assert!(!out.matched);
        assert!(out.decoded.is_none());
    }

    #[test]
    fn verify_unrelated_noise_is_near_chance() {
        let mut rng = ChaCha20Rng::seed_from_u64(20);
        let mut total = 0.0;
        let trials = 100;
        for t in 0..trials {
            let clip = AudioClip::new(
                (0..2)
                    .map(|_| (0..22050).map(|_| rng.random_range(-0.8..0.8)).collect())
                    .collect(),
                44100,
            )
            .unwrap();
            let expected = Payload::random(16, &mut rng);
            let mut kb = [0u8; 32];
            rng.fill(&mut kb);
            let out = verify(&clip, &SecretKey(kb), &expected).unwrap();
            total += out.ber;
            let _ = t;
        }
        let mean = total / trials as f64;
        assert!((0.45..=0.55).contains(&mean), "mean BER {mean}");
    }
}
