//! Channel gain and multi-user sum rate.

use crate::autodiff::{ComplexMatrix, Tape, Tensor};
use crate::error::{Error, Result};

/// `||H||_F^2` as a `1 x 1` tensor.
pub fn channel_gain(tape: &Tape, h: &ComplexMatrix) -> Result<Tensor> {
    tape.cnorm_sq(h)
}

/// Sum rate in bit/s/Hz with `s_k = N_k` streams per user.
///
/// `users` lists the antenna count of each user; rows of `h` and columns of `p` are
/// split in that order. Each user's rate is `logdet(I + G_k G_k^H) - logdet(I + J_k J_k^H)`
/// with `G_k = H_k P / sigma` and `J_k` the same with user `k`'s own columns removed.
pub fn sum_rate(
    tape: &Tape,
    p: &ComplexMatrix,
    h: &ComplexMatrix,
    users: &[usize],
    sigma2: f64,
) -> Result<Tensor> {
    let n_r: usize = users.iter().sum();
    if h.rows() != n_r || p.cols() != n_r || h.cols() != p.rows() {
        return Err(Error::Dimension {
            op: "sum_rate",
            lhs: h.shape(),
            rhs: p.shape(),
        });
    }
    if !(sigma2 > 0.0) {
        return Err(Error::Domain("noise power must be positive".into()));
    }
    let g = tape.cscale(&tape.cmatmul(h, p)?, 1.0 / sigma2.sqrt());
    let mut total = Tensor::scalar(0.0);
    let mut r0 = 0;
    for &nk in users {
        let r1 = r0 + nk;
        let gk = tape.crows(&g, r0, r1)?;
        let eye = ComplexMatrix::eye(nk);
        let all = tape.cadd(&tape.cmatmul(&gk, &tape.cadjoint(&gk))?, &eye)?;
        let idx: Vec<Option<usize>> = (0..nk)
            .flat_map(|i| {
                (0..n_r).map(move |j| (j < r0 || j >= r1).then_some(i * n_r + j))
            })
            .collect();
        let jk = ComplexMatrix::new(
            tape.gather(&gk.re, nk, n_r, idx.clone())?,
            tape.gather(&gk.im, nk, n_r, idx)?,
        )?;
        let interference = tape.cadd(&tape.cmatmul(&jk, &tape.cadjoint(&jk))?, &eye)?;
        let rate = tape.sub(
            &tape.clogdet2_hpd(&all)?,
            &tape.clogdet2_hpd(&interference)?,
        )?;
        total = tape.add(&total, &rate)?;
        r0 = r1;
    }
    Ok(total)
}
