//! Secret-key-derived orthonormal carrier bank.
//!
//! Each payload bit is assigned one unit carrier vector; detection reads the
//! bit from the sign of the feature projection onto that carrier. The bank is
//! derived deterministically from the key: the 32-byte key seeds a ChaCha20
//! stream (a counter-based generator with a fixed algorithm and byte order),
//! a d-by-k standard-normal matrix is drawn column by column, and the columns
//! are orthonormalized by Gram-Schmidt QR, whose R diagonal is nonnegative by
//! construction.

use rand::prelude::*;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Default embedding dimension of the feature space the carriers live in.
pub const EMBEDDING_DIM: usize = 128;

/// 32-byte watermarking key. Any byte string is accepted; equal keys derive
/// identical carrier banks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SecretKey(pub [u8; 32]);

impl SecretKey {
    /// Parse a 64-hex-character string (the CLI encoding).
    pub fn from_hex(hex: &str) -> Result<Self> {
        let hex = hex.trim();
        if hex.len() != 64 || !hex.chars().all(|c| c.is_ascii_hexdigit()) {
            return Err(Error::Config(
                "key must be exactly 64 hex characters".into(),
            ));
        }
        let mut bytes = [0u8; 32];
        for (i, b) in bytes.iter_mut().enumerate() {
            *b = u8::from_str_radix(&hex[2 * i..2 * i + 2], 16).unwrap();
        }
        Ok(Self(bytes))
    }

    pub fn to_hex(&self) -> String {
        self.0.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// k orthonormal d-dimensional carriers, one per payload bit, stored as
/// columns.
#[derive(Debug, Clone, PartialEq)]
pub struct CarrierBank {
    k: usize,
    d: usize,
    /// Column-major: vector i occupies `[i*d, (i+1)*d)`.
    vectors: Vec<f64>,
}

impl CarrierBank {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn vector(&self, i: usize) -> &[f64] {
        &self.vectors[i * self.d..(i + 1) * self.d]
    }

    /// Projection of `x` onto carrier `i`.
    pub fn project(&self, x: &[f64], i: usize) -> f64 {
        self.vector(i).iter().zip(x).map(|(v, x)| v * x).sum()
    }

    /// Maximum absolute deviation of the Gram matrix from the identity.
    pub fn gram_deviation(&self) -> f64 {
        let mut max_dev: f64 = 0.0;
        for i in 0..self.k {
            for j in i..self.k {
                let dot = self.project(self.vector(j), i);
                let target = if i == j { 1.0 } else { 0.0 };
                max_dev = max_dev.max((dot - target).abs());
            }
        }
        max_dev
    }
}

/// Derive the k-carrier bank for `key` in dimension `d`.
pub fn derive_carriers(key: &SecretKey, k: usize, d: usize) -> Result<CarrierBank> {
    if k == 0 {
        return Err(Error::Config("payload length k must be positive".into()));
    }
    if k > d {
        return Err(Error::Capacity { k, d });
    }
    let mut rng = ChaCha20Rng::from_seed(key.0);
    let mut columns: Vec<Vec<f64>> = (0..k)
        .map(|_| (0..d).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    orthonormalize(&mut columns)?;
    let mut vectors = Vec::with_capacity(k * d);
    for col in &columns {
        vectors.extend_from_slice(col);
    }
    Ok(CarrierBank { k, d, vectors })
}

/// Modified Gram-Schmidt with a second re-orthogonalization pass.
pub(crate) fn orthonormalize(columns: &mut [Vec<f64>]) -> Result<()> {
    let k = columns.len();
    for i in 0..k {
        for _pass in 0..2 {
            for j in 0..i {
                let (head, tail) = columns.split_at_mut(i);
                let prev = &head[j];
                let cur = &mut tail[0];
                let dot: f64 = prev.iter().zip(cur.iter()).map(|(a, b)| a * b).sum();
                for (c, p) in cur.iter_mut().zip(prev) {
                    *c -= dot * p;
                }
            }
        }
        let norm = columns[i].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-12 {
            return Err(Error::Config(
                "degenerate random draw during carrier orthonormalization".into(),
            ));
        }
        for v in &mut columns[i] {
            *v /= norm;
        }
    }
    Ok(())
}
