//! System, fading, coupling and lossy-circuit configuration.
//!
//! Powers and path-loss figures are stored in dB/dBm as written in configs; the
//! `*_linear` accessors are the single place they are converted.

use serde::{Deserialize, Serialize};

use super::{C_LIGHT, Z0};
use crate::error::{Error, Result};

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    db_to_linear(dbm - 30.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemConfig {
    pub n_t: usize,
    pub n_i: usize,
    /// Antennas per user; `K = users.len()`.
    pub users: Vec<usize>,
    pub p_t_dbm: f64,
    pub sigma2_dbm: f64,
    pub realizations: usize,
}

impl Default for SystemConfig {
    /// SU-SISO at the ideal-case powers with 8 elements.
    fn default() -> Self {
        Self {
            n_t: 1,
            n_i: 8,
            users: vec![1],
            p_t_dbm: 20.0,
            sigma2_dbm: -80.0,
            realizations: 100,
        }
    }
}

/// Linear-scale powers, resolved once from a [`SystemConfig`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Powers {
    pub p_t: f64,
    pub sigma2: f64,
}

impl SystemConfig {
    pub fn n_r(&self) -> usize {
        self.users.iter().sum()
    }

    pub fn k(&self) -> usize {
        self.users.len()
    }

    pub fn is_single_user(&self) -> bool {
        self.users.len() == 1
    }

    pub fn powers(&self) -> Powers {
        Powers {
            p_t: dbm_to_watts(self.p_t_dbm),
            sigma2: dbm_to_watts(self.sigma2_dbm),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_t == 0 || self.n_i == 0 || self.realizations == 0 {
            return Err(Error::Config(
                "n_t, n_i and realizations must be at least 1".into(),
            ));
        }
        if self.users.is_empty() || self.users.contains(&0) {
            return Err(Error::Config("every user needs at least one antenna".into()));
        }
        if !self.p_t_dbm.is_finite() || !self.sigma2_dbm.is_finite() {
            return Err(Error::Config("powers must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FadingConfig {
    pub c0_db: f64,
    pub a_it: f64,
    pub a_ri: f64,
    pub a_rt: f64,
    pub d_it: f64,
    pub d_ri: f64,
    pub d_rt: f64,
    /// Rician factors in dB; `inf` gives pure line-of-sight.
    pub k_t_db: f64,
    pub k_r_db: f64,
    pub direct_link_blocked: bool,
}

impl Default for FadingConfig {
    fn default() -> Self {
        Self {
            c0_db: -30.0,
            a_it: 2.0,
            a_ri: 2.8,
            a_rt: 3.5,
            d_it: 50.0,
            d_ri: 2.0,
            d_rt: 52.0,
            k_t_db: 1.0,
            k_r_db: 1.0,
            direct_link_blocked: true,
        }
    }
}

impl FadingConfig {
    /// Large-scale gain `c0 * (d / 1 m)^-a`.
    pub fn gain(&self, d: f64, a: f64) -> f64 {
        db_to_linear(self.c0_db) * d.powf(-a)
    }

    pub fn g_it(&self) -> f64 {
        self.gain(self.d_it, self.a_it)
    }

    pub fn g_ri(&self) -> f64 {
        self.gain(self.d_ri, self.a_ri)
    }

    pub fn g_rt(&self) -> f64 {
        self.gain(self.d_rt, self.a_rt)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, d) in [("d_it", self.d_it), ("d_ri", self.d_ri), ("d_rt", self.d_rt)] {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::Config(format!("{name} must be a positive distance")));
            }
        }
        if !self.c0_db.is_finite() {
            return Err(Error::Config("c0_db must be finite".into()));
        }
        for k in [self.k_t_db, self.k_r_db] {
            if k.is_nan() || k == f64::NEG_INFINITY {
                return Err(Error::Config("Rician factors must be a number or +inf".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum CouplingSource {
    Synthetic,
    /// Container holding a single `z_ii` matrix.
    File { path: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CouplingConfig {
    /// Elements along x; the planar array is `nx * (N_I / nx)`.
    pub nx: usize,
    /// Inter-element spacing in wavelengths.
    pub spacing: f64,
    pub frequency_hz: f64,
    pub z0: f64,
    /// Magnitude of the synthetic kernel relative to `Z0`, in `[0, 1)`.
    pub strength: f64,
    pub source: CouplingSource,
}

impl Default for CouplingConfig {
    fn default() -> Self {
        Self {
            nx: 8,
            spacing: 0.5,
            frequency_hz: 28e9,
            z0: Z0,
            strength: 0.8,
            source: CouplingSource::Synthetic,
        }
    }
}

impl CouplingConfig {
    pub fn wavelength(&self) -> f64 {
        C_LIGHT / self.frequency_hz
    }

    /// Columns of the planar array for `n_i` elements.
    pub fn grid(&self, n_i: usize) -> Result<(usize, usize)> {
        let nx = self.nx.min(n_i).max(1);
        if n_i % nx != 0 {
            return Err(Error::Config(format!(
                "N_I = {n_i} does not fill a planar array with {nx} columns"
            )));
        }
        Ok((nx, n_i / nx))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.spacing > 0.0) || !(self.frequency_hz > 0.0) || !(self.z0 > 0.0) {
            return Err(Error::Config(
                "coupling spacing, frequency and z0 must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.strength) {
            return Err(Error::Config("coupling strength must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossyConfig {
    /// Series resistance (ohm).
    pub r: f64,
    pub l1: f64,
    pub l2: f64,
    pub c_min: f64,
    pub c_max: f64,
    pub omega: f64,
}

impl Default for LossyConfig {
    fn default() -> Self {
        Self {
            r: 1.0,
            l1: 6e-9,
            l2: 0.7e-9,
            c_min: 0.35e-12,
            c_max: 3.20e-12,
            omega: 2.0 * std::f64::consts::PI * 28e9,
        }
    }
}

impl LossyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.r >= 0.0) || !self.r.is_finite() {
            return Err(Error::Config("R must be a finite value >= 0".into()));
        }
        if !(self.c_min > 0.0 && self.c_min < self.c_max) {
            return Err(Error::Config("need 0 < C_min < C_max".into()));
        }
        if !(self.l1 > 0.0 && self.l2 > 0.0 && self.omega > 0.0) {
            return Err(Error::Config("L1, L2 and omega must be positive".into()));
        }
        Ok(())
    }
}
