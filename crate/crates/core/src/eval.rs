//! Robustness grids over a clip corpus, plus payload-length and step-count
//! ablations.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attacks::{apply_attack, evaluation_suite, AttackSpec};
use crate::audio::{si_snr, AudioClip, SI_SNR_CAP_DB};
use crate::carriers::{derive_carriers, SecretKey};
use crate::embedder::{embed, EmbedConfig, EmbedReport};
use crate::error::{Error, Result};
use crate::features::{ber, detect_payload, FeatureExtractor, Payload};
use crate::seeding::derive_rng;
use crate::wav::load_wav;

const SEED_TAG_TRIAL: u64 = 3;
const SEED_TAG_PAYLOAD: u64 = 4;
const SEED_TAG_ABLATE: u64 = 5;

/// The attack columns of a robustness grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackGrid {
    pub cells: Vec<NamedAttack>,
    /// Trials averaged per stochastic attack cell (deterministic attacks
    /// run once).
    pub stochastic_trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedAttack {
    pub name: String,
    pub spec: AttackSpec,
}

impl Default for AttackGrid {
    fn default() -> Self {
        Self {
            cells: evaluation_suite()
                .into_iter()
                .map(|spec| NamedAttack {
                    name: spec.kind_name().to_string(),
                    spec,
                })
                .collect(),
            stochastic_trials: 5,
        }
    }
}

impl AttackGrid {
    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        if self.cells.is_empty() {
            return Err(Error::Config("attack grid has no cells".into()));
        }
        if self.stochastic_trials == 0 {
            return Err(Error::Config("stochastic_trials must be positive".into()));
        }
        for c in &self.cells {
            c.spec.validate(sample_rate)?;
        }
        Ok(())
    }
}

/// Payload assignment across the corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum PayloadPolicy {
    Fixed { bits: String },
    PerClipRandom { seed: u64 },
}

/// Grid run options beyond the embed configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridOptions {
    pub payload_policy: PayloadPolicy,
    /// Evaluate unwatermarked clips (null-hypothesis baseline).
    pub skip_embed: bool,
    /// Root seed for per-cell attack trials.
    pub trial_seed: u64,
    /// Clips longer than this are trimmed to their leading segment.
    pub max_clip_seconds: f64,
}

impl Default for GridOptions {
    fn default() -> Self {
        Self {
            payload_policy: PayloadPolicy::PerClipRandom { seed: 0 },
            skip_embed: false,
            trial_seed: 0,
            max_clip_seconds: 10.0,
        }
    }
}

/// One clip's row of the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipResult {
    pub name: String,
    pub payload_bits: String,
    pub clean_ber: f64,
    pub si_snr_db: f64,
    pub steps_run: usize,
    /// BER per attack, aligned with the grid's cells.
    pub cell_ber: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMetadata {
    pub config_hash: String,
    pub trial_seed: u64,
    pub attack_seed: u64,
    pub stochastic_trials: usize,
    pub skip_embed: bool,
    /// Attack cells run through the in-process surrogates (no external
    /// codec binaries are invoked by the grid).
    pub surrogate_codecs: bool,
    pub si_snr_cap_db: f64,
}

/// Full grid output: per-cell BERs, per-attack means, and the overall
/// average (the arithmetic mean of the per-attack means).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub attack_names: Vec<String>,
    pub clips: Vec<ClipResult>,
    pub skipped: Vec<String>,
    pub per_attack_mean_ber: Vec<f64>,
    pub overall_mean_ber: f64,
    pub metadata: GridMetadata,
}

impl GridReport {
    /// One row per (clip, attack) cell.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("clip,attack,ber\n");
        for clip in &self.clips {
            for (name, ber) in self.attack_names.iter().zip(&clip.cell_ber) {
                out.push_str(&format!("{},{},{}\n", clip.name, name, ber));
            }
        }
        out
    }

    /// Plain-text table: clips as rows, attacks as columns, means at the
    /// bottom.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("{:<24}", "clip"));
        for name in &self.attack_names {
            out.push_str(&format!(" {:>10}", truncate(name, 10)));
        }
        out.push_str(&format!(" {:>10}\n", "si_snr_db"));
        for clip in &self.clips {
            out.push_str(&format!("{:<24}", truncate(&clip.name, 24)));
            for ber in &clip.cell_ber {
                out.push_str(&format!(" {:>10.4}", ber));
            }
            out.push_str(&format!(" {:>10.2}\n", clip.si_snr_db));
        }
        out.push_str(&format!("{:<24}", "mean"));
        for m in &self.per_attack_mean_ber {
            out.push_str(&format!(" {:>10.4}", m));
        }
        out.push('\n');
        out.push_str(&format!("overall average BER: {:.4}\n", self.overall_mean_ber));
        out
    }
}

fn truncate(s: &str, n: usize) -> &str {
    &s[..s.len().min(n)]
}

/// WAV files of a directory, sorted by file name for determinism.
pub fn wav_files_in(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.extension()
                .map(|x| x.eq_ignore_ascii_case("wav"))
                .unwrap_or(false)
        })
        .collect();
    files.sort();
    Ok(files)
}

fn trim_clip(clip: AudioClip, max_seconds: f64) -> AudioClip {
    let max_len = (max_seconds * clip.sample_rate() as f64) as usize;
    if clip.len() <= max_len {
        return clip;
    }
    let sr = clip.sample_rate();
    AudioClip::new(
        clip.into_channels()
            .into_iter()
            .map(|mut ch| {
                ch.truncate(max_len);
                ch
            })
            .collect(),
        sr,
    )
    .expect("trimming preserves validity")
}

fn payload_for(policy: &PayloadPolicy, clip_index: u64, k: usize) -> Result<Payload> {
    match policy {
        PayloadPolicy::Fixed { bits } => {
            let p = Payload::from_bit_string(bits)?;
            if p.len() != k {
                return Err(Error::PayloadLength {
                    expected: k,
                    got: p.len(),
                });
            }
            Ok(p)
        }
        PayloadPolicy::PerClipRandom { seed } => {
            let mut rng = derive_rng(*seed, &[SEED_TAG_PAYLOAD, clip_index]);
            Ok(Payload::random(k, &mut rng))
        }
    }
}

/// BER of one attack cell: seeded trials averaged (one trial for
/// deterministic attacks). Detection failures score 0.5.
fn attack_cell_ber(
    watermarked: &AudioClip,
    payload: &Payload,
    bank: &crate::carriers::CarrierBank,
    extractor: &FeatureExtractor,
    spec: &AttackSpec,
    trial_seed: u64,
    clip_index: u64,
    attack_index: u64,
    stochastic_trials: usize,
) -> Result<f64> {
    let trials = if spec.is_stochastic() {
        stochastic_trials
    } else {
        1
    };
    let mut total = 0.0;
    for trial in 0..trials {
        let mut rng = derive_rng(
            trial_seed,
            &[SEED_TAG_TRIAL, clip_index, attack_index, trial as u64],
        );
        let attacked = apply_attack(watermarked, spec, &mut rng)?;
        let b = match detect_payload(&attacked.output, bank, extractor) {
            Ok(decoded) => ber(payload, Some(&decoded))?,
            Err(Error::FeatureExtraction(_)) | Err(Error::TooShort { .. }) => 0.5,
            Err(e) => return Err(e),
        };
        total += b;
    }
    Ok(total / trials as f64)
}

/// Embed (unless `skip_embed`) and evaluate every clip against every grid
/// cell. Unreadable clips are skipped with a note in the report.
pub fn run_grid(
    clip_paths: &[PathBuf],
    key: &SecretKey,
    grid: &AttackGrid,
    options: &GridOptions,
    embed_cfg: &EmbedConfig,
    config_hash: &str,
) -> Result<GridReport> {
    embed_cfg.validate()?;
    let mut clips: Vec<(String, AudioClip)> = Vec::new();
    let mut skipped = Vec::new();
    for path in clip_paths {
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        match load_wav(path) {
            Ok(clip) => clips.push((name, trim_clip(clip, options.max_clip_seconds))),
            Err(e) => skipped.push(format!("{name}: {e}")),
        }
    }
    if clips.is_empty() {
        return Err(Error::Config("no readable clips in the corpus".into()));
    }
    for (_, clip) in &clips {
        grid.validate(clip.sample_rate())?;
    }

    let results: Vec<ClipResult> = clips
        .par_iter()
        .enumerate()
        .map(|(ci, (name, clip))| -> Result<ClipResult> {
            let payload = payload_for(&options.payload_policy, ci as u64, embed_cfg.k)?;
            let (watermarked, report): (AudioClip, Option<EmbedReport>) = if options.skip_embed {
                (clip.clone(), None)
            } else {
                let (w, r) = embed(clip, key, &payload, embed_cfg)?;
                (w, Some(r))
            };
            let bank = derive_carriers(key, embed_cfg.k, embed_cfg.embedding_dim)?;
            let extractor = FeatureExtractor::new(
                &embed_cfg.mel,
                clip.sample_rate(),
                embed_cfg.embedding_dim,
                embed_cfg.projection_seed,
            )?;
            let mut cell_ber = Vec::with_capacity(grid.cells.len());
            for (ai, cell) in grid.cells.iter().enumerate() {
                cell_ber.push(attack_cell_ber(
                    &watermarked,
                    &payload,
                    &bank,
                    &extractor,
                    &cell.spec,
                    options.trial_seed,
                    ci as u64,
                    ai as u64,
                    grid.stochastic_trials,
                )?);
            }
            let clean_ber = match detect_payload(&watermarked, &bank, &extractor) {
                Ok(d) => ber(&payload, Some(&d))?,
                Err(_) => 0.5,
            };
            let si = if options.skip_embed {
                SI_SNR_CAP_DB
            } else {
                si_snr(clip, &watermarked)?
            };
            Ok(ClipResult {
                name: name.clone(),
                payload_bits: payload.to_bit_string(),
                clean_ber,
                si_snr_db: si,
                steps_run: report.map(|r| r.steps_run).unwrap_or(0),
                cell_ber,
            })
        })
        .collect::<Result<_>>()?;

    let n_attacks = grid.cells.len();
    let per_attack_mean_ber: Vec<f64> = (0..n_attacks)
        .map(|a| results.iter().map(|c| c.cell_ber[a]).sum::<f64>() / results.len() as f64)
        .collect();
    let overall_mean_ber = per_attack_mean_ber.iter().sum::<f64>() / n_attacks as f64;

    Ok(GridReport {
        attack_names: grid.cells.iter().map(|c| c.name.clone()).collect(),
        clips: results,
        skipped,
        per_attack_mean_ber,
        overall_mean_ber,
        metadata: GridMetadata {
            config_hash: config_hash.to_string(),
            trial_seed: options.trial_seed,
            attack_seed: embed_cfg.attack_seed,
            stochastic_trials: grid.stochastic_trials,
            skip_embed: options.skip_embed,
            surrogate_codecs: true,
            si_snr_cap_db: SI_SNR_CAP_DB,
        },
    })
}

/// One payload-length ablation row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayloadAblationRow {
    pub k: usize,
    /// Mean converged probe-set BRR over the clips.
    pub mean_brr: f64,
    pub mean_si_snr_db: f64,
}

/// Embed fresh random payloads at each `k` and aggregate converged
/// robustness over the corpus.
pub fn ablate_payload(
    clips: &[(String, AudioClip)],
    key: &SecretKey,
    k_values: &[usize],
    embed_cfg: &EmbedConfig,
) -> Result<Vec<PayloadAblationRow>> {
    if clips.is_empty() {
        return Err(Error::Config("no clips for the payload ablation".into()));
    }
    let mut rows = Vec::with_capacity(k_values.len());
    for &k in k_values {
        let cfg = EmbedConfig {
            k,
            ..embed_cfg.clone()
        };
        cfg.validate()?;
        let stats: Vec<(f64, f64)> = clips
            .par_iter()
            .enumerate()
            .map(|(ci, (_, clip))| -> Result<(f64, f64)> {
                let mut rng = derive_rng(cfg.attack_seed, &[SEED_TAG_ABLATE, k as u64, ci as u64]);
                let payload = Payload::random(k, &mut rng);
                let (_, report) = embed(clip, key, &payload, &cfg)?;
                Ok((report.best_probe_brr, report.si_snr_db))
            })
            .collect::<Result<_>>()?;
        let n = stats.len() as f64;
        rows.push(PayloadAblationRow {
            k,
            mean_brr: stats.iter().map(|s| s.0).sum::<f64>() / n,
            mean_si_snr_db: stats.iter().map(|s| s.1).sum::<f64>() / n,
        });
    }
    Ok(rows)
}

pub fn payload_ablation_csv(rows: &[PayloadAblationRow]) -> String {
    let mut out = String::from("k,mean_brr,mean_si_snr_db\n");
    for r in rows {
        out.push_str(&format!("{},{},{}\n", r.k, r.mean_brr, r.mean_si_snr_db));
    }
    out
}

/// One step-count ablation row (raw and running-best probe BRR).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepsAblationRow {
    pub step: usize,
    pub probe_brr: f64,
    pub best_brr: f64,
}

/// Single embed run; the probe history is sampled at the requested
/// checkpoints (each snapped to the nearest recorded probe at or before
/// it). Checkpoints beyond the stopping step are omitted.
pub fn ablate_steps(
    clip: &AudioClip,
    key: &SecretKey,
    payload: &Payload,
    checkpoints: &[usize],
    embed_cfg: &EmbedConfig,
) -> Result<(Vec<StepsAblationRow>, EmbedReport)> {
    if checkpoints.is_empty() || checkpoints.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(
            "checkpoints must be non-empty and strictly increasing".into(),
        ));
    }
    let cfg = EmbedConfig {
        max_steps: *checkpoints.last().expect("non-empty"),
        ..embed_cfg.clone()
    };
    let (_, report) = embed(clip, key, payload, &cfg)?;
    let mut rows = Vec::new();
    for &cp in checkpoints {
        let Some(point) = report.history.iter().rev().find(|p| p.step <= cp) else {
            continue;
        };
        rows.push(StepsAblationRow {
            step: cp,
            probe_brr: point.probe_brr,
            best_brr: point.best_brr,
        });
    }
    Ok((rows, report))
}

pub fn steps_ablation_csv(rows: &[StepsAblationRow]) -> String {
    let mut out = String::from("step,probe_brr,best_brr\n");
    for r in rows {
        out.push_str(&format!("{},{},{}\n", r.step, r.probe_brr, r.best_brr));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wav::save_wav;
    use rand::prelude::*;
    use rand_chacha::ChaCha20Rng;

    fn noise_clip(seed: u64, len: usize) -> AudioClip {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        AudioClip::new(
            (0..2)
                .map(|_| (0..len).map(|_| rng.random_range(-0.5..0.5)).collect())
                .collect(),
            44100,
        )
        .unwrap()
    }

    fn quick_cfg() -> EmbedConfig {
        EmbedConfig {
            max_steps: 0,
            patience: 50,
            probe_interval: 50,
            ..EmbedConfig::default()
        }
    }

    #[test]
    fn default_grid_matches_the_evaluation_suite() {
        let grid = AttackGrid::default();
        assert_eq!(grid.cells.len(), 18);
        assert_eq!(grid.cells[0].name, "identity");
        assert_eq!(grid.stochastic_trials, 5);
        assert!(grid.validate(44100).is_ok());
    }

    #[test]
    fn null_hypothesis_grid_is_near_chance() {
        // unwatermarked clips, random key: per-attack mean BER in [0.4, 0.6]
        let dir = tempfile::tempdir().unwrap();
        for i in 0..10 {
            save_wav(
                &noise_clip(100 + i, 44100),
                dir.path().join(format!("clip{i:02}.wav")),
            )
            .unwrap();
        }
        let paths = wav_files_in(dir.path()).unwrap();
        assert_eq!(paths.len(), 10);
        let grid = AttackGrid {
            cells: ["identity", "quantize", "boost", "echo"]
                .iter()
                .map(|n| NamedAttack {
                    name: n.to_string(),
                    spec: crate::attacks::evaluation_spec(n).unwrap(),
                })
                .collect(),
            stochastic_trials: 2,
        };
        let options = GridOptions {
            skip_embed: true,
            ..GridOptions::default()
        };
        let report = run_grid(
            &paths,
            &SecretKey([3; 32]),
            &grid,
            &options,
            &quick_cfg(),
            "testhash",
        )
        .unwrap();
        for (name, mean) in report.attack_names.iter().zip(&report.per_attack_mean_ber) {
            assert!(
                (0.4..=0.6).contains(mean),
                "{name}: mean BER {mean} out of the chance band"
            );
        }
    }

    #[test]
    fn averages_are_consistent_with_cells() {
        let dir = tempfile::tempdir().unwrap();
        for i in 0..3 {
            save_wav(
                &noise_clip(200 + i, 44100),
                dir.path().join(format!("c{i}.wav")),
            )
            .unwrap();
        }
        let paths = wav_files_in(dir.path()).unwrap();
        let grid = AttackGrid {
            cells: ["identity", "duck"]
                .iter()
                .map(|n| NamedAttack {
                    name: n.to_string(),
                    spec: crate::attacks::evaluation_spec(n).unwrap(),
                })
                .collect(),
            stochastic_trials: 1,
        };
        let report = run_grid(
            &paths,
            &SecretKey([4; 32]),
            &grid,
            &GridOptions {
                skip_embed: true,
                ..GridOptions::default()
            },
            &quick_cfg(),
            "h",
        )
        .unwrap();
        for a in 0..2 {
            let manual: f64 =
                report.clips.iter().map(|c| c.cell_ber[a]).sum::<f64>() / report.clips.len() as f64;
            assert!((manual - report.per_attack_mean_ber[a]).abs() < 1e-12);
        }
        let overall: f64 =
            report.per_attack_mean_ber.iter().sum::<f64>() / report.per_attack_mean_ber.len() as f64;
        assert!((overall - report.overall_mean_ber).abs() < 1e-12);
    }

    #[test]
    fn unreadable_clips_are_skipped_with_a_note() {
        let dir = tempfile::tempdir().unwrap();
        save_wav(&noise_clip(1, 44100), dir.path().join("good.wav")).unwrap();
        std::fs::write(dir.path().join("bad.wav"), b"not a wav").unwrap();
        let paths = wav_files_in(dir.path()).unwrap();
        let report = run_grid(
            &paths,
            &SecretKey([5; 32]),
            &AttackGrid {
                cells: vec![NamedAttack {
                    name: "identity".into(),
                    spec: AttackSpec::Identity,
                }],
                stochastic_trials: 1,
            },
            &GridOptions {
                skip_embed: true,
                ..GridOptions::default()
            },
            &quick_cfg(),
            "h",
        )
        .unwrap();
        assert_eq!(report.clips.len(), 1);
        assert_eq!(report.skipped.len(), 1);
        assert!(report.skipped[0].starts_with("bad.wav"));
    }

    #[test]
    fn empty_corpus_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let paths = wav_files_in(dir.path()).unwrap();
        assert!(run_grid(
            &paths,
            &SecretKey([6; 32]),
            &AttackGrid::default(),
            &GridOptions::default(),
            &quick_cfg(),
            "h",
        )
        .is_err());
    }

    #[test]
    fn grid_reruns_reproduce_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        for i in 0..2 {
            save_wav(
                &noise_clip(300 + i, 44100),
                dir.path().join(format!("c{i}.wav")),
            )
            .unwrap();
        }
        let paths = wav_files_in(dir.path()).unwrap();
        let grid = AttackGrid {
            cells: ["identity", "suppress", "noise_gaussian"]
                .iter()
                .map(|n| NamedAttack {
                    name: n.to_string(),
                    spec: crate::attacks::evaluation_spec(n).unwrap(),
                })
                .collect(),
            stochastic_trials: 3,
        };
        let run = || {
            run_grid(
                &paths,
                &SecretKey([7; 32]),
                &grid,
                &GridOptions::default(),
                &EmbedConfig {
                    max_steps: 20,
                    patience: 20,
                    probe_interval: 10,
                    ..EmbedConfig::default()
                },
                "h",
            )
            .unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        assert_eq!(a.to_csv(), b.to_csv());
    }

    #[test]
    fn trim_caps_duration() {
        let clip = noise_clip(9, 441000 + 5000);
        let trimmed = trim_clip(clip, 10.0);
        assert_eq!(trimmed.len(), 441000);
    }

    #[test]
    fn steps_ablation_rows_align_with_checkpoints() {
        let clip = noise_clip(10, 44100);
        let payload = Payload::from_bit_string("0110100110010110").unwrap();
        let cfg = EmbedConfig {
            max_steps: 60,
            patience: 60,
            probe_interval: 20,
            ..EmbedConfig::default()
        };
        let (rows, report) = ablate_steps(
            &clip,
            &SecretKey([8; 32]),
            &payload,
            &[20, 40, 60],
            &cfg,
        )
        .unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows.windows(2).all(|w| w[0].best_brr <= w[1].best_brr));
        assert_eq!(report.history[0].step, 0);
        // checkpoint rows carry the probe values recorded at those steps
        for r in &rows {
            let h = report.history.iter().find(|p| p.step == r.step).unwrap();
            assert_eq!(h.probe_brr, r.probe_brr);
        }
        assert!(ablate_steps(&clip, &SecretKey([8; 32]), &payload, &[30, 10], &cfg).is_err());
    }
}
