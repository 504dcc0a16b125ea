//! Learnable sign-symmetric codebook and the hard/soft quantizer.
//!
//! Codewords are `[+B_1 .. +B_M, -B_1 .. -B_M]` with `M = 2^(N_b - 1)` and
//! `B_m = exp(theta_m)`, all in units of `Y0`. In training mode
//! `q = hard + soft - stopgrad(soft)`: the forward value is the nearest codeword and
//! the backward pass sees the soft assignment plus a unit surrogate for `hard`.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor};
use crate::error::{Error, Result};
use crate::nn::Params;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Codebook {
    /// Index of the `1 x M` log-magnitude parameter.
    pub log_mag: usize,
    pub n_b: u32,
    pub tau: f64,
}

/// Magnitudes log-spaced in `[0.1, 10]`; a single magnitude sits at 1.
pub fn initial_magnitudes(n_b: u32) -> Vec<f64> {
    let m = 1usize << (n_b - 1);
    if m == 1 {
        return vec![1.0];
    }
    (0..m)
        .map(|i| 10f64.powf(-1.0 + 2.0 * i as f64 / (m - 1) as f64))
        .collect()
}

impl Codebook {
    pub fn new(params: &mut Params, n_b: u32, tau: f64, frozen: bool) -> Result<Self> {
        Self::with_magnitudes(params, &initial_magnitudes(n_b.max(1)), n_b, tau, frozen)
    }

    pub fn with_magnitudes(
        params: &mut Params,
        magnitudes: &[f64],
        n_b: u32,
        tau: f64,
        frozen: bool,
    ) -> Result<Self> {
        if n_b == 0 || n_b > 16 {
            return Err(Error::Config(format!("N_b = {n_b} must be in 1..=16")));
        }
        if magnitudes.len() != 1usize << (n_b - 1) || magnitudes.iter().any(|&b| !(b > 0.0)) {
            return Err(Error::Config(
                "codebook needs 2^(N_b-1) positive magnitudes".into(),
            ));
        }
        if !(tau > 0.0) {
            return Err(Error::Config("temperature tau must be positive".into()));
        }
        let log_mag = params.add(
            "opt.codebook",
            Tensor::row(magnitudes.iter().map(|b| b.ln()).collect()),
        );
        params.set_frozen(log_mag, frozen);
        Ok(Self { log_mag, n_b, tau })
    }

    /// `1 x 2^N_b` codewords on `tape`.
    pub fn codewords(&self, tape: &Tape, bound: &[Tensor]) -> Result<Tensor> {
        let pos = tape.exp(&bound[self.log_mag]);
        tape.hcat(&[&pos, &tape.neg(&pos)])
    }

    pub fn values(&self, params: &Params) -> Vec<f64> {
        let pos: Vec<f64> = params.get(self.log_mag).data().iter().map(|t| t.exp()).collect();
        pos.iter().copied().chain(pos.iter().map(|b| -b)).collect()
    }
}

/// Index of the nearest codeword in L1 distance; ties go to the lowest index.
pub fn nearest(x: f64, codes: &[f64]) -> usize {
    let mut best = 0;
    for (k, c) in codes.iter().enumerate().skip(1) {
        if (x - c).abs() < (x - codes[best]).abs() {
            best = k;
        }
    }
    best
}

/// Quantizes an `n x 1` column against `1 x K` codewords.
pub fn quantize(tape: &Tape, x: &Tensor, codes: &Tensor, tau: f64, mode: Mode) -> Result<Tensor> {
    if codes.is_empty() {
        return Err(Error::Contract("empty codebook".into()));
    }
    if x.cols() != 1 || codes.rows() != 1 {
        return Err(Error::Dimension {
            op: "quantize",
            lhs: x.shape(),
            rhs: codes.shape(),
        });
    }
    let n = x.rows();
    let hard = Tensor::from_fn(n, 1, |i, _| codes.data()[nearest(x.get(i, 0), codes.data())]);
    if mode == Mode::Eval {
        return Ok(hard);
    }
    let k = codes.cols();
    let xs = tape.matmul(x, &Tensor::ones(1, k))?;
    let cs = tape.matmul(&Tensor::ones(n, 1), codes)?;
    let weights = soft_weights(tape, &xs, &cs, tau)?;
    let soft = tape.row_sums(&tape.mul(&weights, &cs)?);
    let straight = tape.surrogate(&hard, x)?;
    tape.add(&straight, &tape.sub(&soft, &soft.detach())?)
}

/// `softmax(-|x - c| / tau)` per row.
pub fn soft_weights(tape: &Tape, xs: &Tensor, cs: &Tensor, tau: f64) -> Result<Tensor> {
    let d = tape.abs(&tape.sub(xs, cs)?);
    Ok(tape.softmax_rows(&tape.scale(&d, -1.0 / tau)))
}
