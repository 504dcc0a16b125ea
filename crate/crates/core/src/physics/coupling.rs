//! Mutual coupling at the surface.
//!
//! The surface self-impedance is `Z_II = Z0 I + off-diagonal z(d_mn)` with the
//! synthetic kernel
//!
//! ```text
//! z(d) = Z0 s (sin(kd) + j cos(kd)) / (kd),   k = 2 pi / lambda
//! ```
//!
//! Its magnitude `Z0 s / (kd)` decays as `1/d`, and for `s < 1` the real part
//! `Z0 ((1 - s) I + s sinc(kd))` is positive definite, so `Re{Y_II}` is too.
//! Elements sit on a planar grid `nx * ny` in the x-y plane, filled row by row.
//!
//! Transmission admittances are Rayleigh, `Y_xy = 2 Y0 sqrt(g_xy) CN(0, 1)`, which
//! makes the transformed blocks reduce to the ideal channel statistics when the
//! surface is decoupled.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::channel::{complex_normal, ChannelRealization};
use super::config::{CouplingConfig, CouplingSource, FadingConfig, SystemConfig};
use super::scattering::{cascade, susceptance_to_scattering};
use super::Y0;
use crate::autodiff::{CMat, Complex64, ComplexMatrix, Tape, Tensor};
use crate::container::Container;
use crate::error::{Error, Result};

pub const COUPLING_KIND: &str = "coupling";

/// Synthetic self-impedance matrix for `n_i` elements.
pub fn synthetic_impedance(n_i: usize, cfg: &CouplingConfig) -> Result<CMat> {
    cfg.validate()?;
    let (nx, _) = cfg.grid(n_i)?;
    let pos = |m: usize| ((m % nx) as f64, (m / nx) as f64);
    let k_spacing = 2.0 * std::f64::consts::PI * cfg.spacing;
    Ok(DMatrix::from_fn(n_i, n_i, |m, n| {
        if m == n {
            return Complex64::new(cfg.z0, 0.0);
        }
        let (xm, ym) = pos(m);
        let (xn, yn) = pos(n);
        let kd = k_spacing * ((xm - xn).powi(2) + (ym - yn).powi(2)).sqrt();
        Complex64::new(kd.sin(), kd.cos()) * (cfg.z0 * cfg.strength / kd)
    }))
}

pub fn write_impedance(path: &std::path::Path, z: &CMat) -> Result<()> {
    let mut c = Container::new(COUPLING_KIND, serde_json::json!({ "n_i": z.nrows() }));
    c.push_cmat("z_ii", z);
    c.write(path)
}

pub fn read_impedance(path: &std::path::Path) -> Result<CMat> {
    let c = Container::read(path)?;
    c.expect_kind(COUPLING_KIND, path)?;
    let z = c.cmat("z_ii").map_err(|e| Error::format(path, e.to_string()))?;
    if !z.is_square() {
        return Err(Error::format(path, "z_ii is not square"));
    }
    Ok(z)
}

pub fn self_impedance(n_i: usize, cfg: &CouplingConfig) -> Result<CMat> {
    let z = match &cfg.source {
        CouplingSource::Synthetic => synthetic_impedance(n_i, cfg)?,
        CouplingSource::File { path } => read_impedance(std::path::Path::new(path))?,
    };
    if z.nrows() != n_i {
        return Err(Error::Config(format!(
            "coupling matrix is {}x{}, system has N_I = {n_i}",
            z.nrows(),
            z.ncols()
        )));
    }
    Ok(z)
}

/// Inverse principal square root of a real symmetric positive definite matrix.
///
/// Diagonal inputs are handled entrywise so that exact identities stay exact.
pub fn inv_sqrt_spd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    let diagonal = (0..n).all(|i| (0..n).all(|j| i == j || m[(i, j)] == 0.0));
    if diagonal {
        if let Some(i) = (0..n).find(|&i| !(m[(i, i)] > 0.0)) {
            return Err(Error::Domain(format!(
                "matrix is not positive definite (diagonal entry {i})"
            )));
        }
        return Ok(DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                1.0 / m[(i, i)].sqrt()
            } else {
                0.0
            }
        }));
    }
    let eig = m.clone().symmetric_eigen();
    let scale = eig.eigenvalues.amax();
    if eig.eigenvalues.iter().any(|&l| !(l > 1e-12 * scale)) {
        return Err(Error::Domain(format!(
            "matrix is not positive definite (smallest eigenvalue {:e})",
            eig.eigenvalues.min()
        )));
    }
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
    let v = &eig.eigenvectors;
    let r = v * d * v.transpose();
    Ok((&r + r.transpose()) * 0.5)
}

/// Admittance blocks of one coupled realization plus the derived transformed channel.
#[derive(Clone, Debug)]
pub struct CoupledChannel {
    pub y_ii: Arc<CMat>,
    pub y_it: CMat,
    pub y_ri: CMat,
    pub y_rt: CMat,
    /// `sqrt(Y0) Re{Y_II}^-1/2`.
    pub t: Tensor,
    pub im_yii: Tensor,
    pub s_rt: ComplexMatrix,
    pub s_ri: ComplexMatrix,
    pub s_it: ComplexMatrix,
}

impl CoupledChannel {
    pub fn new(y_ii: Arc<CMat>, y_it: CMat, y_ri: CMat, y_rt: CMat) -> Result<Self> {
        let n = y_ii.nrows();
        if !y_ii.is_square() || y_it.nrows() != n || y_ri.ncols() != n {
            return Err(Error::Dimension {
                op: "coupled_channel",
                lhs: [y_ri.nrows(), y_ri.ncols()],
                rhs: [y_it.nrows(), y_it.ncols()],
            });
        }
        if y_rt.shape() != (y_ri.nrows(), y_it.ncols()) {
            return Err(Error::Dimension {
                op: "coupled_channel",
                lhs: [y_rt.nrows(), y_rt.ncols()],
                rhs: [y_ri.nrows(), y_it.ncols()],
            });
        }
        let re = y_ii.map(|z| z.re / Y0);
        let t = inv_sqrt_spd(&re)?.map(Complex64::from);
        let bar_ri = &y_ri * &t;
        let bar_it = &t * &y_it;
        let h = Complex64::from(-0.5 / Y0);
        let s_rt = (&y_rt - &bar_ri * &bar_it * Complex64::from(0.5 / Y0)) * h;
        let s_ri = &bar_ri * h;
        let s_it = &bar_it * h;
        let real = |m: &DMatrix<f64>| Tensor::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)]);
        Ok(Self {
            t: real(&t.map(|z| z.re)),
            im_yii: real(&y_ii.map(|z| z.im)),
            s_rt: ComplexMatrix::from_cmat(&s_rt),
            s_ri: ComplexMatrix::from_cmat(&s_ri),
            s_it: ComplexMatrix::from_cmat(&s_it),
            y_ii,
            y_it,
            y_ri,
            y_rt,
        })
    }
}

pub struct CoupledOutput {
    pub h: ComplexMatrix,
    pub theta: ComplexMatrix,
    pub b_prime: Tensor,
}

/// Effective channel for tunable susceptance `b_bar` (siemens).
///
/// `B' = Y0 R^-1/2 (B_bar + Im Y_II) R^-1/2` with `R = Re Y_II`, then
/// `Theta = (Y0 I + jB')^-1 (Y0 I - jB')` and `H = S_RT + S_RI Theta S_IT`.
pub fn effective_channel_mc(
    tape: &Tape,
    ch: &CoupledChannel,
    b_bar: &Tensor,
) -> Result<CoupledOutput> {
    let inner = tape.add(b_bar, &ch.im_yii)?;
    let b_prime = tape.matmul(&tape.matmul(&ch.t, &inner)?, &ch.t)?;
    let theta = susceptance_to_scattering(tape, &b_prime)?;
    let h = cascade(tape, &ch.s_rt, &ch.s_ri, &theta, &ch.s_it)?;
    Ok(CoupledOutput { h, theta, b_prime })
}

/// Coupled realizations: one shared `Y_II = Z_II^-1`, Rayleigh transmission blocks
/// drawn in the order `Y_IT`, `Y_RI`, `Y_RT` from a ChaCha8 stream seeded with `seed`.
pub fn synth_coupling(
    sys: &SystemConfig,
    fade: &FadingConfig,
    coupling: &CouplingConfig,
    seed: u64,
) -> Result<Vec<ChannelRealization>> {
    sys.validate()?;
    fade.validate()?;
    let z = self_impedance(sys.n_i, coupling)?;
    let y_ii = Arc::new(
        z.clone()
            .try_inverse()
            .ok_or_else(|| Error::Config("coupling impedance is singular".into()))?,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n_t, n_i, n_r) = (sys.n_t, sys.n_i, sys.n_r());
    let scale = |g: f64| Complex64::from(2.0 * Y0 * g.sqrt());
    let mut out = Vec::with_capacity(sys.realizations);
    for _ in 0..sys.realizations {
        let y_it = complex_normal(&mut rng, n_i, n_t) * scale(fade.g_it());
        let y_ri = complex_normal(&mut rng, n_r, n_i) * scale(fade.g_ri());
        let y_rt = if fade.direct_link_blocked {
            CMat::zeros(n_r, n_t)
        } else {
            complex_normal(&mut rng, n_r, n_t) * scale(fade.g_rt())
        };
        let ch = CoupledChannel::new(y_ii.clone(), y_it, y_ri, y_rt).map_err(|e| match e {
            Error::Domain(m) => Error::Config(format!("Re{{Y_II}} is not positive definite: {m}")),
            other => other,
        })?;
        out.push(ChannelRealization::Coupled(ch));
    }
    Ok(out)
}
