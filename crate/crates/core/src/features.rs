//! Network inputs built from channel realizations.
//!
//! Node features are `X_N = [Re H_IT, Im H_IT, Re H_RI^T, Im H_RI^T]`
//! (`N_I x 2(N_T + N_R)`, transformed blocks under coupling). The generator and the
//! residual path read the same matrix flattened column-major, `vec(X_N)^T`.
//!
//! Raw gains are tiny (about 1e-4 to 1e-2 per entry), so each block is divided by a
//! dataset RMS held in [`FeatureScale`]; [`FeatureScale::identity`] gives raw values.

use serde::{Deserialize, Serialize};

use crate::autodiff::{ComplexMatrix, Tape, Tensor};
use crate::error::{Error, Result};
use crate::physics::ChannelRealization;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureScale {
    pub it: f64,
    pub ri: f64,
    /// Typical magnitude of an effective-channel entry, for the precoder input.
    pub heff: f64,
}

impl FeatureScale {
    pub fn identity() -> Self {
        Self {
            it: 1.0,
            ri: 1.0,
            heff: 1.0,
        }
    }

    pub fn from_realizations(data: &[ChannelRealization]) -> Self {
        let rms = |pick: fn(&ChannelRealization) -> &ComplexMatrix| {
            let (mut sum, mut count) = (0.0, 0usize);
            for r in data {
                let m = pick(r);
                sum += m.re.norm_sq() + m.im.norm_sq();
                count += m.re.len();
            }
            let v = (sum / count.max(1) as f64).sqrt();
            if v > 0.0 && v.is_finite() {
                v
            } else {
                1.0
            }
        };
        let it = rms(|r| r.input_blocks().1);
        let ri = rms(|r| r.input_blocks().0);
        let n_i = data.first().map_or(1, |r| r.dims().1) as f64;
        Self {
            it,
            ri,
            heff: it * ri * n_i.sqrt(),
        }
    }
}

/// `N_I x 2(N_T + N_R)` node feature matrix.
pub fn node_features(r: &ChannelRealization, scale: &FeatureScale) -> Tensor {
    let (ri, it) = r.input_blocks();
    let (n_r, n_i, n_t) = r.dims();
    Tensor::from_fn(n_i, 2 * (n_t + n_r), |i, c| {
        if c < n_t {
            it.re.get(i, c) / scale.it
        } else if c < 2 * n_t {
            it.im.get(i, c - n_t) / scale.it
        } else if c < 2 * n_t + n_r {
            ri.re.get(c - 2 * n_t, i) / scale.ri
        } else {
            ri.im.get(c - 2 * n_t - n_r, i) / scale.ri
        }
    })
}

/// Column-major flattening into a single row.
pub fn vec_row(m: &Tensor) -> Tensor {
    let (r, c) = (m.rows(), m.cols());
    Tensor::from_fn(1, r * c, |_, k| m.get(k % r, k / r))
}

/// Inverse of [`vec_row`].
pub fn unvec_row(v: &Tensor, rows: usize) -> Result<Tensor> {
    if rows == 0 || v.rows() != 1 || v.cols() % rows != 0 {
        return Err(Error::Contract("row length is not a multiple of rows".into()));
    }
    Ok(Tensor::from_fn(rows, v.cols() / rows, |i, j| v.get(0, j * rows + i)))
}

/// `N x 2 N_I (N_T + N_R)` generator input, one flattened node-feature matrix per row.
pub fn build_generator_input(data: &[ChannelRealization], scale: &FeatureScale) -> Result<Tensor> {
    let first = data
        .first()
        .ok_or_else(|| Error::Contract("generator input needs a realization".into()))?;
    let (kind, dims) = (first.kind(), first.dims());
    let mut rows = Vec::with_capacity(data.len());
    for r in data {
        if r.kind() != kind {
            return Err(Error::Contract(
                "generator input mixes channel variants".into(),
            ));
        }
        if r.dims() != dims {
            return Err(Error::Contract("generator input mixes shapes".into()));
        }
        rows.push(vec_row(&node_features(r, scale)));
    }
    let width = rows[0].cols();
    let data: Vec<f64> = rows.iter().flat_map(|r| r.data().iter().copied()).collect();
    Tensor::new(rows.len(), width, data)
}

/// `[vec(Re H), vec(Im H)] / heff` as a `1 x 2 N_R N_T` row on `tape`.
pub fn heff_input(tape: &Tape, h: &ComplexMatrix, scale: &FeatureScale) -> Result<Tensor> {
    let (r, c) = (h.rows(), h.cols());
    let idx: Vec<Option<usize>> = (0..r * c).map(|k| Some((k % r) * c + k / r)).collect();
    let re = tape.gather(&h.re, 1, r * c, idx.clone())?;
    let im = tape.gather(&h.im, 1, r * c, idx)?;
    Ok(tape.scale(&tape.hcat(&[&re, &im])?, 1.0 / scale.heff))
}
