//! Resolved run configuration: every tunable of the pipeline with its
//! default, plus a content hash for reproducibility metadata.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::embedder::EmbedConfig;
use crate::error::{Error, Result};
use crate::eval::{AttackGrid, GridOptions};

/// Top-level configuration consumed by the command-line tools and
/// bindings. All fields have documented defaults; files may specify any
/// subset.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub embed: EmbedConfig,
    pub grid: AttackGrid,
    pub grid_options: GridOptions,
}

impl RunConfig {
    /// Validate every sub-configuration before any run starts.
    pub fn validate(&self) -> Result<()> {
        self.embed.validate()?;
        self.grid.validate(44100)?;
        if self.grid_options.max_clip_seconds <= 0.0 {
            return Err(Error::Config("max_clip_seconds must be positive".into()));
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON serialization of the resolved
    /// configuration.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
