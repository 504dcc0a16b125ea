//! Parameter storage and dense layers.
//!
//! Layers keep indices into a [`Params`] store. A forward pass binds the store to a
//! tape once ([`Params::bind`]) and every layer reads its tensors from the bound slice,
//! so gradients come back in store order.

use rand::Rng;

use crate::autodiff::{Gradients, Tape, Tensor};
use crate::container::Container;
use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Params {
    names: Vec<String>,
    values: Vec<Tensor>,
    frozen: Vec<bool>,
}

impl Params {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> usize {
        self.names.push(name.into());
        self.values.push(value.detach());
        self.frozen.push(false);
        self.values.len() - 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[Tensor] {
        &self.values
    }

    pub fn get(&self, idx: usize) -> &Tensor {
        &self.values[idx]
    }

    pub fn set(&mut self, idx: usize, value: Tensor) {
        assert_eq!(value.shape(), self.values[idx].shape(), "{}", self.names[idx]);
        self.values[idx] = value.detach();
    }

    pub fn set_frozen(&mut self, idx: usize, frozen: bool) {
        self.frozen[idx] = frozen;
    }

    pub fn is_frozen(&self, idx: usize) -> bool {
        self.frozen[idx]
    }

    pub fn count(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    /// Watches every parameter on `tape`.
    pub fn bind(&self, tape: &Tape) -> Vec<Tensor> {
        self.values.iter().map(|v| tape.watch(v)).collect()
    }

    /// Gradients of `bound` in store order; missing entries are zeros.
    pub fn collect(&self, grads: &Gradients, bound: &[Tensor]) -> Vec<Tensor> {
        bound.iter().map(|t| grads.wrt(t)).collect()
    }

    pub fn write_into(&self, c: &mut Container, prefix: &str) {
        for (n, v) in self.names.iter().zip(&self.values) {
            c.push_tensor(format!("{prefix}{n}"), v);
        }
    }

    /// Overwrites every parameter from `c`; shapes must match.
    pub fn read_from(&mut self, c: &Container, prefix: &str) -> Result<()> {
        for i in 0..self.values.len() {
            let name = format!("{prefix}{}", self.names[i]);
            let t = c.tensor(&name)?;
            if t.shape() != self.values[i].shape() {
                return Err(Error::Contract(format!(
                    "parameter `{name}` has shape {:?}, expected {:?}",
                    t.shape(),
                    self.values[i].shape()
                )));
            }
            self.values[i] = t;
        }
        Ok(())
    }
}

/// Uniform in `+-sqrt(6 / (fan_in + fan_out))`.
pub fn xavier<R: Rng>(rng: &mut R, fan_in: usize, fan_out: usize) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor::from_fn(fan_in, fan_out, |_, _| rng.random_range(-limit..limit))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub w: usize,
    pub b: Option<usize>,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    pub fn new<R: Rng>(
        params: &mut Params,
        rng: &mut R,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        bias: bool,
    ) -> Self {
        let w = params.add(format!("{name}.w"), xavier(rng, fan_in, fan_out));
        let b = bias.then(|| params.add(format!("{name}.b"), Tensor::zeros(1, fan_out)));
        Self {
            w,
            b,
            fan_in,
            fan_out,
        }
    }

    pub fn forward(&self, tape: &Tape, p: &[Tensor], x: &Tensor) -> Result<Tensor> {
        let y = tape.matmul(x, &p[self.w])?;
        match self.b {
            Some(b) => tape.add_row(&y, &p[b]),
            None => Ok(y),
        }
    }
}

/// Stack of biased dense layers with ReLU after each; the last activation is optional.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub relu_last: bool,
}

impl Mlp {
    /// `widths[0]` is the input width; one layer per following entry.
    pub fn new<R: Rng>(
        params: &mut Params,
        rng: &mut R,
        name: &str,
        widths: &[usize],
        relu_last: bool,
    ) -> Self {
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(params, rng, &format!("{name}.{i}"), w[0], w[1], true))
            .collect();
        Self { layers, relu_last }
    }

    pub fn forward(&self, tape: &Tape, p: &[Tensor], x: &Tensor) -> Result<Tensor> {
        let mut h = x.clone();
        let last = self.layers.len().saturating_sub(1);
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(tape, p, &h)?;
            if i < last || self.relu_last {
                h = tape.relu(&h);
            }
        }
        Ok(h)
    }

    pub fn out_width(&self) -> usize {
        self.layers.last().map_or(0, |l| l.fan_out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn xavier_bounds_and_zero_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut p = Params::new();
        let l = Linear::new(&mut p, &mut rng, "l", 10, 6, true);
        let limit = (6.0f64 / 16.0).sqrt();
        assert!(p.get(l.w).data().iter().all(|v| v.abs() <= limit));
        assert_eq!(p.get(l.b.unwrap()), &Tensor::zeros(1, 6));
        assert_eq!(p.names(), ["l.w", "l.b"]);
    }

    #[test]
    fn mlp_shapes_and_linear_tail() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = Params::new();
        let mlp = Mlp::new(&mut p, &mut rng, "m", &[3, 5, 2], false);
        assert_eq!(p.len(), 4);
        let tape = Tape::new();
        let bound = p.bind(&tape);
        let y = mlp.forward(&tape, &bound, &Tensor::full(4, 3, -1.0)).unwrap();
        assert_eq!(y.shape(), [4, 2]);
        assert_eq!(mlp.out_width(), 2);
    }

    #[test]
    fn container_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut p = Params::new();
        Mlp::new(&mut p, &mut rng, "m", &[3, 4, 2], true);
        let mut c = Container::new("params", serde_json::json!({}));
        p.write_into(&mut c, "x.");
        let mut q = p.clone();
        for i in 0..q.len() {
            q.set(i, q.get(i).map(|_| 0.0));
        }
        q.read_from(&c, "x.").unwrap();
        assert_eq!(p, q);
    }
}
