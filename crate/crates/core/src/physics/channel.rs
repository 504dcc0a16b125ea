//! Channel realizations and their synthesis.
//!
//! Transmitter-RIS and RIS-user links are Rician,
//! `H = sqrt(g) (sqrt(K/(1+K)) H_los + sqrt(1/(1+K)) H_nlos)`, with unit-variance
//! circularly symmetric NLoS entries. The LoS parts are outer products of uniform
//! linear array steering vectors `a_n(t) = exp(j pi n sin t)` at fixed angles:
//!
//! * transmitter departure [`TX_DEPARTURE_DEG`], RIS arrival [`RIS_ARRIVAL_DEG`];
//! * RIS departure towards user `k` of `K`: `-60 + 120 (k + 1/2) / K` degrees;
//! * user arrival [`USER_ARRIVAL_DEG`].
//!
//! The direct link is Rayleigh with gain `g_RT`, or zero when blocked. Draws happen in
//! the fixed order `H_IT`, `H_RI` (user by user), `H_RT`, row-major within each block.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::config::{db_to_linear, FadingConfig, SystemConfig};
use super::coupling::CoupledChannel;
use crate::autodiff::{CMat, Complex64, ComplexMatrix};
use crate::error::{Error, Result};

pub const TX_DEPARTURE_DEG: f64 = 30.0;
pub const RIS_ARRIVAL_DEG: f64 = -20.0;
pub const USER_ARRIVAL_DEG: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelKind {
    Ideal,
    Coupled,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IdealChannel {
    pub h_rt: ComplexMatrix,
    pub h_ri: ComplexMatrix,
    pub h_it: ComplexMatrix,
}

#[derive(Clone, Debug)]
pub enum ChannelRealization {
    Ideal(IdealChannel),
    Coupled(CoupledChannel),
}

impl ChannelRealization {
    pub fn kind(&self) -> ChannelKind {
        match self {
            Self::Ideal(_) => ChannelKind::Ideal,
            Self::Coupled(_) => ChannelKind::Coupled,
        }
    }

    /// `(N_R, N_I, N_T)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        let (ri, it) = self.input_blocks();
        (ri.rows(), it.rows(), it.cols())
    }

    /// The blocks the networks see: `(H_RI, H_IT)`, or `(S_RI, S_IT)` under coupling.
    pub fn input_blocks(&self) -> (&ComplexMatrix, &ComplexMatrix) {
        match self {
            Self::Ideal(c) => (&c.h_ri, &c.h_it),
            Self::Coupled(c) => (&c.s_ri, &c.s_it),
        }
    }

    pub fn as_ideal(&self) -> Result<&IdealChannel> {
        match self {
            Self::Ideal(c) => Ok(c),
            Self::Coupled(_) => Err(Error::Contract(
                "expected an ideal channel, found a coupled one".into(),
            )),
        }
    }

    pub fn as_coupled(&self) -> Result<&CoupledChannel> {
        match self {
            Self::Coupled(c) => Ok(c),
            Self::Ideal(_) => Err(Error::Contract(
                "expected a coupled channel, found an ideal one".into(),
            )),
        }
    }
}

pub fn steering(n: usize, angle_deg: f64) -> Vec<Complex64> {
    let s = angle_deg.to_radians().sin();
    (0..n)
        .map(|i| Complex64::from_polar(1.0, PI * i as f64 * s))
        .collect()
}

/// `a(rx) a(tx)^H`.
fn los(rx: &[Complex64], tx: &[Complex64]) -> CMat {
    DMatrix::from_fn(rx.len(), tx.len(), |i, j| rx[i] * tx[j].conj())
}

pub(crate) fn complex_normal<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> CMat {
    let mut m = CMat::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            m[(i, j)] = Complex64::new(re, im) * FRAC_1_SQRT_2;
        }
    }
    m
}

/// `(LoS weight, NLoS weight)` for a Rician factor in dB.
fn rician_weights(k_db: f64) -> (f64, f64) {
    if k_db == f64::INFINITY {
        return (1.0, 0.0);
    }
    let k = db_to_linear(k_db);
    ((k / (1.0 + k)).sqrt(), (1.0 / (1.0 + k)).sqrt())
}

pub fn user_departure_deg(k: usize, users: usize) -> f64 {
    -60.0 + 120.0 * (k as f64 + 0.5) / users as f64
}

/// Draws `sys.realizations` ideal channels from a ChaCha8 stream seeded with `seed`.
pub fn synth_realizations(
    sys: &SystemConfig,
    fade: &FadingConfig,
    seed: u64,
) -> Result<Vec<ChannelRealization>> {
    synth_with(sys, fade, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn synth_with<R: Rng>(
    sys: &SystemConfig,
    fade: &FadingConfig,
    rng: &mut R,
) -> Result<Vec<ChannelRealization>> {
    sys.validate()?;
    fade.validate()?;
    let (n_t, n_i, n_r) = (sys.n_t, sys.n_i, sys.n_r());
    let (los_t, nlos_t) = rician_weights(fade.k_t_db);
    let (los_r, nlos_r) = rician_weights(fade.k_r_db);
    let (g_it, g_ri, g_rt) = (fade.g_it().sqrt(), fade.g_ri().sqrt(), fade.g_rt().sqrt());

    let h_it_los = los(
        &steering(n_i, RIS_ARRIVAL_DEG),
        &steering(n_t, TX_DEPARTURE_DEG),
    );
    let user_los: Vec<CMat> = sys
        .users
        .iter()
        .enumerate()
        .map(|(k, &nk)| {
            los(
                &steering(nk, USER_ARRIVAL_DEG),
                &steering(n_i, user_departure_deg(k, sys.k())),
            )
        })
        .collect();

    let mut out = Vec::with_capacity(sys.realizations);
    for _ in 0..sys.realizations {
        let nlos = complex_normal(rng, n_i, n_t);
        let h_it = (&h_it_los * Complex64::from(los_t) + nlos * Complex64::from(nlos_t))
            * Complex64::from(g_it);
        let mut h_ri = CMat::zeros(n_r, n_i);
        let mut r0 = 0;
        for (k, &nk) in sys.users.iter().enumerate() {
            let nlos = complex_normal(rng, nk, n_i);
            let block = (&user_los[k] * Complex64::from(los_r)
                + nlos * Complex64::from(nlos_r))
                * Complex64::from(g_ri);
            h_ri.view_mut((r0, 0), (nk, n_i)).copy_from(&block);
            r0 += nk;
        }
        let h_rt = if fade.direct_link_blocked {
            CMat::zeros(n_r, n_t)
        } else {
            complex_normal(rng, n_r, n_t) * Complex64::from(g_rt)
        };
        out.push(ChannelRealization::Ideal(IdealChannel {
            h_rt: ComplexMatrix::from_cmat(&h_rt),
            h_ri: ComplexMatrix::from_cmat(&h_ri),
            h_it: ComplexMatrix::from_cmat(&h_it),
        }));
    }
    Ok(out)
}
