// Scratch driver for watching optimization dynamics on a synthetic clip.
use latentmark::*;
use rand::prelude::*;
use rand_chacha::ChaCha20Rng;

fn music_like_clip(seed: u64, seconds: f64) -> AudioClip {
    let sr = 44100u32;
    let len = (seconds * sr as f64) as usize;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let base_freqs: Vec<f64> = (0..5).map(|_| rng.random_range(80.0..4000.0)).collect();
    let channels = (0..2)
        .map(|_| {
            let mut x = vec![0.0; len];
            for &f in &base_freqs {
                let amp = rng.random_range(0.05..0.25);
                let phase = rng.random_range(0.0..std::f64::consts::TAU);
                for (i, s) in x.iter_mut().enumerate() {
                    let t = i as f64 / sr as f64;
                    let env = 0.6 + 0.4 * (std::f64::consts::TAU * 0.5 * t).sin();
                    *s += amp * env * (std::f64::consts::TAU * f * t + phase).sin();
                }
            }
            for s in x.iter_mut() {
                *s += rng.random_range(-0.02..0.02);
            }
            x
        })
        .collect();
    AudioClip::new(channels, sr).unwrap()
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let seconds: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(2.0);
    let max_steps: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1000);
    let clip = music_like_clip(42, seconds);
    let key = SecretKey([7; 32]);
    let payload = Payload::from_bit_string("0110100110010110").unwrap();
    let cfg = EmbedConfig {
        max_steps,
        ..EmbedConfig::default()
    };
    let t0 = std::time::Instant::now();
    let (out, report) = embed(&clip, &key, &payload, &cfg).unwrap();
    println!("steps={} best_step={} reason={:?}", report.steps_run, report.best_step, report.stopping_reason);
    println!("best_brr={:.4} clean_ber={:.4} sisnr={:.2} lp={:.4}", report.best_probe_brr, report.final_clean_ber, report.si_snr_db, report.perceptual_loss);
    for p in report.history.iter() {
        if p.step % 100 == 0 {
            println!("  step {:5}: brr={:.4} best={:.4} clean_ber={:.4} lm={:.3} lp={:.4} sisnr={:.2}", p.step, p.probe_brr, p.best_brr, p.clean_ber, p.message_loss, p.perceptual_loss, p.si_snr_db);
        }
    }
    println!("wall: {:.1}s ({:.0} ms/step)", t0.elapsed().as_secs_f64(), 1000.0 * t0.elapsed().as_secs_f64() / report.steps_run.max(1) as f64);
    // robustness at eval strengths for the criterion-6 attack list
    let bank = derive_carriers(&key, 16, 128).unwrap();
    let fx = FeatureExtractor::with_defaults(44100).unwrap();
    for name in ["quantize", "resample", "noise_gaussian", "boost", "duck", "suppress", "echo", "noise_pink", "codec_surrogate_mp3", "codec_surrogate_aac", "crop", "smooth", "regen_surrogate", "bandpass"] {
        let spec = attacks::evaluation_spec(name).unwrap();
        let mut total = 0.0;
        let trials = if spec.is_stochastic() { 5 } else { 1 };
        for t in 0..trials {
            let mut rng = seeding::derive_rng(99, &[t]);
            let attacked = attacks::apply_attack(&out, &spec, &mut rng).unwrap();
            let b = match detect_payload(&attacked.output, &bank, &fx) {
                Ok(d) => ber(&payload, Some(&d)).unwrap(),
                Err(_) => 0.5,
            };
            total += b;
        }
        println!("  eval {name}: BER={:.4}", total / trials as f64);
    }
}
