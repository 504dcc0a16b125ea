//! Central finite-difference checks of reverse-mode gradients.
//!
//! The numerical side only ever runs forward passes, so it stays independent of the
//! backward rules it checks.

use super::{Tape, Tensor};
use crate::error::Result;

#[derive(Clone, Copy, Debug)]
pub struct Tolerance {
    pub step: f64,
    pub rtol: f64,
    pub atol: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            step: 1e-6,
            rtol: 1e-4,
            atol: 1e-7,
        }
    }
}

/// Largest mismatch found by [`check`].
#[derive(Clone, Debug)]
pub struct Report {
    pub input: usize,
    pub entry: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub passed: bool,
    pub checked: usize,
}

/// Compares `backward` against central differences of the scalar function `f` at `inputs`.
///
/// Every entry of every input is perturbed. An entry passes when
/// `|analytic - numeric| <= atol + rtol * |numeric|`.
pub fn check<F>(f: F, inputs: &[Tensor], tol: Tolerance) -> Result<Report>
where
    F: Fn(&Tape, &[Tensor]) -> Result<Tensor>,
{
    let tape = Tape::new();
    let watched: Vec<Tensor> = inputs.iter().map(|t| tape.watch(t)).collect();
    let out = f(&tape, &watched)?;
    let grads = tape.backward(&out)?;
    let analytic: Vec<Tensor> = watched.iter().map(|t| grads.wrt(t)).collect();

    let eval = |xs: &[Tensor]| -> Result<f64> {
        let tape = Tape::new();
        Ok(f(&tape, xs)?.item())
    };

    let mut worst = Report {
        input: 0,
        entry: 0,
        analytic: 0.0,
        numeric: 0.0,
        passed: true,
        checked: 0,
    };
    let mut worst_excess = f64::NEG_INFINITY;
    for (k, input) in inputs.iter().enumerate() {
        for e in 0..input.len() {
            let mut xs: Vec<Tensor> = inputs.iter().map(Tensor::detach).collect();
            xs[k].data_mut()[e] = input.data()[e] + tol.step;
            let plus = eval(&xs)?;
            xs[k].data_mut()[e] = input.data()[e] - tol.step;
            let minus = eval(&xs)?;
            let numeric = (plus - minus) / (2.0 * tol.step);
            let a = analytic[k].data()[e];
            let excess = (a - numeric).abs() - (tol.atol + tol.rtol * numeric.abs());
            worst.checked += 1;
            if excess > worst_excess {
                worst_excess = excess;
                worst.input = k;
                worst.entry = e;
                worst.analytic = a;
                worst.numeric = numeric;
            }
        }
    }
    worst.passed = worst_excess <= 0.0;
    Ok(worst)
}
