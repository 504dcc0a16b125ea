//! Architecture generator: realizations to a binary architecture of fixed complexity.
//!
//! `X_F = ReLU-FC(X_0)`, `x_GF = mean over rows`, `p = sigmoid(x_GF W + b)`, then the
//! `K_cc - N_I` largest probabilities switch on lower-triangle entries. The selection
//! is passed straight through in the backward pass (`db/dp = 1`).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arch::{lower_index, lower_len, Architecture};
use crate::autodiff::{Tape, Tensor};
use crate::error::{Error, Result};
use crate::nn::{Linear, Mlp, Params};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorConfig {
    pub layers: usize,
    pub width: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            layers: 4,
            width: 768,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorNet {
    pub params: Params,
    fc: Mlp,
    head: Linear,
    n_i: usize,
}

#[derive(Clone, Debug)]
pub struct ArchitectureSample {
    /// `1 x L` probabilities.
    pub p_low: Tensor,
    /// `1 x L` selection, passed straight through to `p_low`.
    pub b_low: Tensor,
    /// Dense `N_I x N_I` matrix built from `b_low` on the tape.
    pub a: Tensor,
    pub arch: Architecture,
}

/// Off-diagonal budget `K_cc - N_I`.
pub fn off_diagonal_budget(n_i: usize, k_cc: usize) -> Result<usize> {
    let max = n_i * (n_i + 1) / 2;
    if k_cc < n_i || k_cc > max {
        return Err(Error::Config(format!(
            "K_cc = {k_cc} outside [{n_i}, {max}] for N_I = {n_i}"
        )));
    }
    Ok(k_cc - n_i)
}

/// Ones at the `k` largest entries; ties go to the lowest index.
pub fn topk_select(p: &[f64], k: usize) -> Result<Vec<bool>> {
    if k > p.len() {
        return Err(Error::Contract(format!(
            "cannot select {k} of {} entries",
            p.len()
        )));
    }
    let mut order: Vec<usize> = (0..p.len()).collect();
    order.sort_by(|&a, &b| p[b].total_cmp(&p[a]).then(a.cmp(&b)));
    let mut out = vec![false; p.len()];
    for &i in &order[..k] {
        out[i] = true;
    }
    Ok(out)
}

/// [`topk_select`] with a straight-through gradient into `p`.
pub fn topk_ste(tape: &Tape, p: &Tensor, k: usize) -> Result<Tensor> {
    let hard = topk_select(p.data(), k)?;
    let values = Tensor::new(
        p.rows(),
        p.cols(),
        hard.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
    )?;
    tape.surrogate(&values, p)
}

/// `I + ` symmetric scatter of a `1 x L` lower-triangle row.
pub fn assemble_adjacency(tape: &Tape, b_low: &Tensor, n: usize) -> Result<Tensor> {
    let idx = (0..n * n)
        .map(|k| {
            let (i, j) = (k / n, k % n);
            match i.cmp(&j) {
                std::cmp::Ordering::Equal => None,
                std::cmp::Ordering::Greater => Some(lower_index(i, j)),
                std::cmp::Ordering::Less => Some(lower_index(j, i)),
            }
        })
        .collect();
    tape.add(&tape.gather(b_low, n, n, idx)?, &Tensor::eye(n))
}

impl GeneratorNet {
    pub fn new(n_i: usize, input_width: usize, cfg: &GeneratorConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Params::new();
        let mut widths = vec![input_width];
        widths.extend(std::iter::repeat_n(cfg.width, cfg.layers));
        let fc = Mlp::new(&mut params, &mut rng, "gen.fc", &widths, true);
        let head = Linear::new(
            &mut params,
            &mut rng,
            "gen.prob",
            *widths.last().unwrap(),
            lower_len(n_i),
            true,
        );
        Self {
            params,
            fc,
            head,
            n_i,
        }
    }

    pub fn n_i(&self) -> usize {
        self.n_i
    }

    pub fn input_width(&self) -> usize {
        self.fc.layers.first().map_or(self.head.fan_in, |l| l.fan_in)
    }

    /// `1 x L` probabilities for input `x0` (`N x width`).
    pub fn probabilities(&self, tape: &Tape, bound: &[Tensor], x0: &Tensor) -> Result<Tensor> {
        if x0.cols() != self.input_width() {
            return Err(Error::Dimension {
                op: "generator_input",
                lhs: x0.shape(),
                rhs: [x0.rows(), self.input_width()],
            });
        }
        let xf = self.fc.forward(tape, bound, x0)?;
        let gf = tape.col_means(&xf);
        Ok(tape.sigmoid(&self.head.forward(tape, bound, &gf)?))
    }

    pub fn forward(
        &self,
        tape: &Tape,
        bound: &[Tensor],
        x0: &Tensor,
        k_cc: usize,
    ) -> Result<ArchitectureSample> {
        let budget = off_diagonal_budget(self.n_i, k_cc)?;
        let p_low = self.probabilities(tape, bound, x0)?;
        let b_low = topk_ste(tape, &p_low, budget)?;
        let a = assemble_adjacency(tape, &b_low, self.n_i)?;
        let arch = Architecture::from_lower(
            self.n_i,
            b_low.data().iter().map(|&v| v == 1.0).collect(),
        )?;
        Ok(ArchitectureSample {
            p_low,
            b_low,
            a,
            arch,
        })
    }

    /// Forward pass without gradient tracking.
    pub fn sample(&self, x0: &Tensor, k_cc: usize) -> Result<ArchitectureSample> {
        let tape = Tape::new();
        self.forward(&tape, self.params.values(), x0, k_cc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn topk_examples() {
        assert_eq!(topk_select(&[0.9, 0.1, 0.5], 2).unwrap(), [true, false, true]);
        assert_eq!(topk_select(&[0.9, 0.1, 0.5], 0).unwrap(), [false; 3]);
        assert_eq!(topk_select(&[0.5, 0.5], 1).unwrap(), [true, false]);
        assert!(topk_select(&[0.5], 2).is_err());
    }

    #[test]
    fn budget_bounds() {
        assert_eq!(off_diagonal_budget(4, 4).unwrap(), 0);
        assert_eq!(off_diagonal_budget(4, 10).unwrap(), 6);
        assert!(matches!(off_diagonal_budget(4, 3), Err(Error::Config(_))));
        assert!(matches!(off_diagonal_budget(4, 11), Err(Error::Config(_))));
    }

    #[test]
    fn zero_weights_fall_back_to_tie_rule() {
        let mut g = GeneratorNet::new(4, 6, &GeneratorConfig { layers: 1, width: 3 }, 0);
        for i in 0..g.params.len() {
            let z = g.params.get(i).map(|_| 0.0);
            g.params.set(i, z);
        }
        let s = g.sample(&Tensor::ones(2, 6), 6).unwrap();
        assert!(s.p_low.data().iter().all(|&p| p == 0.5));
        assert_eq!(
            s.b_low.data(),
            &[1.0, 1.0, 0.0, 0.0, 0.0, 0.0]
        );
        assert_eq!(s.arch.circuit_complexity(), 6);
    }

    #[test]
    fn ste_passes_upstream_gradient() {
        let tape = Tape::new();
        let p = tape.watch(&Tensor::row(vec![0.2, 0.7, 0.4]));
        let b = topk_ste(&tape, &p, 1).unwrap();
        assert_eq!(b.data(), &[0.0, 1.0, 0.0]);
        let w = Tensor::row(vec![3.0, -1.0, 2.0]);
        let loss = tape.sum_all(&tape.mul(&b, &w).unwrap());
        let g = tape.backward(&loss).unwrap();
        assert_eq!(g.wrt(&p), w);
    }
}
