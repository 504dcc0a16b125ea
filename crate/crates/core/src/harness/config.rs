//! Run configuration: a TOML file whose every key is optional.
//!
//! ```toml
//! seed = 0
//! [system]     # n_t, n_i, users, p_t_dbm, sigma2_dbm, realizations
//! [fading]     # c0_db, a_*, d_*, k_t_db, k_r_db, direct_link_blocked
//! [coupling]   # nx, spacing, frequency_hz, z0, strength, source
//! [lossy]      # r, l1, l2, c_min, c_max, omega
//! [optimizer]  # widths, layer counts, n_b, tau, freeze_codebook
//! [generator]  # layers, width
//! [schedule]   # inner_iters, outer_epochs, patience, lr_min, lr_max, batch_size, reinit
//! ```
//!
//! The resolved configuration (after command-line overrides) is hashed as the SHA-256
//! of its JSON form; the hash is embedded in every output.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::generator::GeneratorConfig;
use crate::optimizer::OptimizerConfig;
use crate::physics::{CouplingConfig, FadingConfig, LossyConfig, SystemConfig};
use crate::train::TrainSchedule;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Drives channel synthesis, network initialization and training streams.
    pub seed: u64,
    pub system: SystemConfig,
    pub fading: FadingConfig,
    pub coupling: CouplingConfig,
    pub lossy: LossyConfig,
    pub optimizer: OptimizerConfig,
    pub generator: GeneratorConfig,
    pub schedule: TrainSchedule,
}

/// Command-line overrides, applied on top of the file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub n_b: Option<u32>,
    pub tau: Option<f64>,
    pub r: Option<f64>,
    pub realizations: Option<usize>,
    pub epochs: Option<usize>,
    pub inner: Option<usize>,
    pub patience: Option<usize>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("bad config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.n_b {
            self.optimizer.n_b = v;
        }
        if let Some(v) = o.tau {
            self.optimizer.tau = v;
        }
        if let Some(v) = o.r {
            self.lossy.r = v;
        }
        if let Some(v) = o.realizations {
            self.system.realizations = v;
        }
        if let Some(v) = o.epochs {
            self.schedule.outer_epochs = v;
            self.schedule.patience = self.schedule.patience.min(v);
        }
        if let Some(v) = o.inner {
            self.schedule.inner_iters = v;
        }
        if let Some(v) = o.patience {
            self.schedule.patience = v;
        }
        self.schedule.seed = self.seed;
    }

    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        self.fading.validate()?;
        self.coupling.validate()?;
        self.lossy.validate()?;
        self.schedule.validate()?;
        if self.optimizer.n_b == 0 || self.optimizer.n_b > 16 {
            return Err(Error::Config(format!("N_b = {} must be in 1..=16", self.optimizer.n_b)));
        }
        if !(self.optimizer.tau > 0.0) {
            return Err(Error::Config("tau must be positive".into()));
        }
        Ok(())
    }

    /// Hex SHA-256 of the JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
