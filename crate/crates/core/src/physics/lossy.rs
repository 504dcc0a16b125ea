//! Lossy tunable branches: an inductor `L1` in parallel with a series `R`-`L2`-`C`.
//!
//! Per branch, with `X = w L2 - 1/(w C)`:
//!
//! ```text
//! Re Y = R / (R^2 + X^2)
//! Im Y = -1/(w L1) - X / (R^2 + X^2)
//! ```
//!
//! The network admittance has `-Y_ij` off the diagonal and `sum_k A_ik Y_ik` on it.

use super::config::LossyConfig;
use super::scattering::admittance_to_scattering;
use crate::autodiff::{ComplexMatrix, Tape, Tensor};
use crate::error::{Error, Result};

/// Per-entry branch admittance of a capacitance matrix (farads).
pub fn branch_admittance(tape: &Tape, c: &Tensor, cfg: &LossyConfig) -> Result<ComplexMatrix> {
    let w = cfg.omega;
    let inv_wc = tape.scale(&tape.pow(c, -1.0), 1.0 / w);
    let x = tape.offset(&tape.neg(&inv_wc), w * cfg.l2);
    let den = tape.offset(&tape.mul(&x, &x)?, cfg.r * cfg.r);
    if den.data().iter().any(|&d| !(d > 0.0)) {
        return Err(Error::Domain(
            "lossless branch at exact series resonance".into(),
        ));
    }
    let inv_den = tape.pow(&den, -1.0);
    let re = tape.scale(&inv_den, cfg.r);
    let im = tape.offset(&tape.neg(&tape.mul(&x, &inv_den)?), -1.0 / (w * cfg.l1));
    ComplexMatrix::new(re, im)
}

/// Network admittance and scattering matrix for capacitances `c` under architecture `a`.
///
/// Entries of `c` where `a` is zero are ignored; they are replaced by `C_min` before
/// the branch model so the reciprocal stays finite.
pub fn lossy_admittance(
    tape: &Tape,
    c: &Tensor,
    a: &Tensor,
    cfg: &LossyConfig,
) -> Result<(ComplexMatrix, ComplexMatrix)> {
    let n = c.rows();
    if c.shape() != [n, n] || a.shape() != [n, n] {
        return Err(Error::Dimension {
            op: "lossy_admittance",
            lhs: c.shape(),
            rhs: a.shape(),
        });
    }
    let fill = a.map(|v| if v == 0.0 { cfg.c_min } else { 0.0 });
    let c_eff = tape.add(c, &fill)?;
    let branch = branch_admittance(tape, &c_eff, cfg)?;
    let off = Tensor::from_fn(n, n, |i, j| if i == j { 0.0 } else { 1.0 });
    let diag_idx: Vec<Option<usize>> = (0..n * n)
        .map(|k| (k / n == k % n).then_some(k / n))
        .collect();
    let assemble = |part: &Tensor| -> Result<Tensor> {
        let w = tape.mul(a, part)?;
        let diag = tape.gather(&tape.row_sums(&w), n, n, diag_idx.clone())?;
        tape.sub(&diag, &tape.mul(&w, &off)?)
    };
    let y = ComplexMatrix::new(assemble(&branch.re)?, assemble(&branch.im)?)?;
    let theta = admittance_to_scattering(tape, &y)?;
    Ok((y, theta))
}
