use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Mode;
use crate::error::{Error, Result};
use crate::gnn::{InferenceConfig, Variant};

/// Seed override read by [`RunConfig::apply_env`].
pub const SEED_ENV: &str = "EMGNN_SEED";

/// Training and inference settings. Every key is required and unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dim: usize,
    pub fc_dim: usize,
    pub outer_iters: usize,
    pub inner_steps: usize,
    pub variant: Variant,
    pub batch_size: usize,
    pub lr_base: f64,
    pub lr_floor: f64,
    pub epochs: usize,
    pub seed: u64,
    pub k_options: usize,
    pub mode: Mode,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dim: 32,
            fc_dim: 32,
            outer_iters: 3,
            inner_steps: 2,
            variant: Variant::Full,
            batch_size: 32,
            lr_base: 1e-3,
            lr_floor: 5e-5,
            epochs: 5,
            seed: 0,
            k_options: 20,
            mode: Mode::Visdial,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dim", self.dim),
            ("fc_dim", self.fc_dim),
            ("batch_size", self.batch_size),
            ("k_options", self.k_options),
        ];
        if let Some((key, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("`{key}` must be positive")));
        }
        for (key, v) in [("lr_base", self.lr_base), ("lr_floor", self.lr_floor)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!("`{key}` must be a finite non-negative number")));
            }
        }
        if self.lr_floor > self.lr_base {
            return Err(Error::Config("`lr_floor` exceeds `lr_base`".into()));
        }
        if self.seed >= 1 << 53 {
            return Err(Error::Config("`seed` must be below 2^53".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }

    /// Replaces the seed with `EMGNN_SEED` when that variable is set.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV}=`{v}` is not an unsigned integer")))?;
            self.validate()?;
        }
        Ok(())
    }

    pub fn inference(&self) -> InferenceConfig {
        InferenceConfig {
            outer_iters: self.outer_iters,
            inner_steps: self.inner_steps,
            variant: self.variant,
        }
    }
}
