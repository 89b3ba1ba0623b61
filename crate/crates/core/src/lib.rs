//! Dataset-free, per-clip audio watermarking.
//!
//! A k-bit payload is embedded into a stereo clip by gradient-optimizing an
//! imperceptible perturbation in an invertible time-frequency latent,
//! trained against a configurable suite of signal-level attacks. Detection
//! projects log-mel audio features onto a secret-key-derived orthonormal
//! carrier bank and reads the payload from the projection signs.

pub mod attacks;
pub mod audio;
pub mod carriers;
pub mod config;
pub mod embedder;
pub mod error;
pub mod eval;
pub mod features;
pub mod grad;
pub mod losses;
pub mod transform;
pub mod wav;

mod fir;
mod mdct;
mod mel;
mod stft;

pub mod seeding;

pub use audio::{downmix, si_snr, AudioClip, MonoSignal, SI_SNR_CAP_DB};
pub use config::RunConfig;
pub use carriers::{derive_carriers, CarrierBank, SecretKey, EMBEDDING_DIM};
pub use embedder::{default_probe_set, embed, verify, EmbedConfig, EmbedProblem, EmbedReport, VerifyOutcome};
pub use error::{Error, Result};
pub use features::{
    ber, detect_from_features, detect_payload, EmbeddingVector, FeatureExtractor, MelConfig,
    Payload, DEFAULT_PROJECTION_SEED,
};
pub use grad::{adam_step, chain_forward_backward, fd_verify, AdamConfig, AdamState, FdReport, Stage};
pub use losses::{message_loss, total_loss, LossConfig, PerceptualLoss};
pub use transform::{decode, decode_vjp, encode, LatentGrid, TransformConfig};
pub use wav::{load_wav, save_wav};
