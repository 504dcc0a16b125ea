//! Graph performance optimizer.
//!
//! Per realization: node embeddings, `N_GC` normalized graph convolutions over the
//! architecture, pairwise edge features, a residual FC path on the flattened node
//! features, and per-entry regression heads producing the tunable matrix for the
//! chosen surface model. Multi-user rate objectives add a precoder head.
//!
//! Regressed values are dimensionless: susceptances are `Y0 * raw`, capacitances
//! `C_min + (C_max - C_min) sigmoid(raw)`, discrete values are codewords in units of
//! `Y0`.

pub mod quantize;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arch::{lower_index, lower_len};
use crate::autodiff::{ComplexMatrix, Tape, Tensor};
use crate::error::{Error, Result};
use crate::features::{heff_input, node_features, vec_row, FeatureScale};
use crate::nn::{xavier, Linear, Mlp, Params};
use crate::physics::{
    channel_gain, effective_channel_ideal, effective_channel_mc, lossy_admittance,
    susceptance_to_scattering, sum_rate, ChannelKind, ChannelRealization, LossyConfig, Powers,
    Y0,
};
pub use quantize::{Codebook, Mode};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Ideal,
    Mc,
    Lossy,
    Discrete,
}

impl Variant {
    pub fn channel_kind(self) -> ChannelKind {
        match self {
            Self::Mc => ChannelKind::Coupled,
            _ => ChannelKind::Ideal,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Ideal => "ideal",
            Self::Mc => "mc",
            Self::Lossy => "lossy",
            Self::Discrete => "discrete",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ideal" => Ok(Self::Ideal),
            "mc" => Ok(Self::Mc),
            "lossy" => Ok(Self::Lossy),
            "discrete" => Ok(Self::Discrete),
            _ => Err(Error::Config(format!(
                "unknown variant `{s}` (expected ideal, mc, lossy or discrete)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    /// `||H_eff||^2`.
    Gain,
    /// Sum rate in bit/s/Hz.
    Rate,
}

impl Metric {
    /// Gain for a single user, rate otherwise.
    pub fn default_for(users: &[usize]) -> Self {
        if users.len() == 1 {
            Self::Gain
        } else {
            Self::Rate
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Gain => "gain",
            Self::Rate => "rate",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub ne_width: usize,
    pub gc_layers: usize,
    pub gc_width: usize,
    pub rfc_layers: usize,
    pub rfc_width: usize,
    pub pfc_layers: usize,
    pub pfc_width: usize,
    pub n_b: u32,
    pub tau: f64,
    pub freeze_codebook: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            ne_width: 384,
            gc_layers: 3,
            gc_width: 384,
            rfc_layers: 4,
            rfc_width: 768,
            pfc_layers: 8,
            pfc_width: 512,
            n_b: 2,
            tau: 0.1,
            freeze_codebook: false,
        }
    }
}

/// Everything a forward pass needs besides parameters and the realization.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub users: Vec<usize>,
    pub powers: Powers,
    pub lossy: LossyConfig,
    pub scale: FeatureScale,
    pub metric: Metric,
    /// Training losses are `-objective / loss_scale`.
    pub loss_scale: f64,
}

impl Scenario {
    /// Typical objective magnitude used to normalize the loss: `N_I^2 s_IT^2 s_RI^2
    /// N_T N_R` for gains, 1 for rates.
    pub fn default_loss_scale(metric: Metric, scale: &FeatureScale, n_i: usize, n_t: usize, n_r: usize) -> f64 {
        match metric {
            Metric::Rate => 1.0,
            Metric::Gain => {
                let s = (n_i as f64) * scale.it * scale.ri;
                s * s * (n_t * n_r) as f64
            }
        }
    }
}

/// Per-entry linear regressors: entry `m` is `f_m . w_m + b_m`.
#[derive(Clone, Debug, PartialEq)]
struct EntryHead {
    w: usize,
    b: usize,
}

impl EntryHead {
    fn new(params: &mut Params, rng: &mut ChaCha8Rng, name: &str, features: usize, entries: usize) -> Self {
        let w = params.add(format!("{name}.w"), xavier(rng, features, entries));
        let b = params.add(format!("{name}.b"), Tensor::zeros(1, entries));
        Self { w, b }
    }

    /// `features` is `entries x f`; returns `entries x 1`.
    fn forward(&self, tape: &Tape, p: &[Tensor], features: &Tensor) -> Result<Tensor> {
        let prod = tape.mul(features, &tape.transpose(&p[self.w]))?;
        tape.add(&tape.row_sums(&prod), &tape.transpose(&p[self.b]))
    }
}

#[derive(Clone, Debug)]
pub struct Forward {
    /// Tunable matrix in physical units (siemens, or farads for the lossy model).
    pub matrix: Tensor,
    pub theta: ComplexMatrix,
    pub h: ComplexMatrix,
    pub precoder: Option<ComplexMatrix>,
    pub objective: Tensor,
    pub loss: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerNet {
    pub params: Params,
    pub variant: Variant,
    pub config: OptimizerConfig,
    n_i: usize,
    n_t: usize,
    n_r: usize,
    embed: Mlp,
    gc: Vec<usize>,
    rfc: Mlp,
    rc_diag: Linear,
    rc_low: Linear,
    head_diag: EntryHead,
    head_low: EntryHead,
    codebook: Option<Codebook>,
    precoder: Option<Mlp>,
}

impl OptimizerNet {
    pub fn new(
        variant: Variant,
        dims: (usize, usize, usize),
        metric: Metric,
        config: &OptimizerConfig,
        seed: u64,
    ) -> Result<Self> {
        let (n_r, n_i, n_t) = dims;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Params::new();
        let feat = 2 * (n_t + n_r);
        let embed = Mlp::new(
            &mut params,
            &mut rng,
            "opt.ne",
            &[feat, config.ne_width, config.ne_width],
            true,
        );
        let mut gc = Vec::with_capacity(config.gc_layers);
        let mut width = config.ne_width;
        for l in 0..config.gc_layers {
            gc.push(params.add(
                format!("opt.gc.{l}.w"),
                xavier(&mut rng, width, config.gc_width),
            ));
            width = config.gc_width;
        }
        let mut rfc_widths = vec![n_i * feat];
        rfc_widths.extend(std::iter::repeat_n(config.rfc_width, config.rfc_layers));
        let rfc = Mlp::new(&mut params, &mut rng, "opt.rfc", &rfc_widths, true);
        let inter = *rfc_widths.last().unwrap();
        let rc_diag = Linear::new(&mut params, &mut rng, "opt.rc_diag", inter, n_i, false);
        let rc_low = Linear::new(&mut params, &mut rng, "opt.rc_low", inter, lower_len(n_i), false);
        let head_diag = EntryHead::new(&mut params, &mut rng, "opt.head_diag", 2 * width + 1, n_i);
        let head_low =
            EntryHead::new(&mut params, &mut rng, "opt.head_low", 2 * width + 1, lower_len(n_i));
        let codebook = match variant {
            Variant::Discrete => Some(Codebook::new(
                &mut params,
                config.n_b,
                config.tau,
                config.freeze_codebook,
            )?),
            _ => None,
        };
        let precoder = (metric == Metric::Rate).then(|| {
            let io = 2 * n_t * n_r;
            let mut widths = vec![io];
            widths.extend(std::iter::repeat_n(config.pfc_width, config.pfc_layers.saturating_sub(1)));
            widths.push(io);
            Mlp::new(&mut params, &mut rng, "opt.pfc", &widths, false)
        });
        Ok(Self {
            params,
            variant,
            config: config.clone(),
            n_i,
            n_t,
            n_r,
            embed,
            gc,
            rfc,
            rc_diag,
            rc_low,
            head_diag,
            head_low,
            codebook,
            precoder,
        })
    }

    /// `(N_R, N_I, N_T)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.n_r, self.n_i, self.n_t)
    }

    pub fn codebook(&self) -> Option<&Codebook> {
        self.codebook.as_ref()
    }

    pub fn has_precoder(&self) -> bool {
        self.precoder.is_some()
    }

    /// Node embeddings followed by the graph convolutions.
    pub fn gcn_forward(&self, tape: &Tape, p: &[Tensor], a: &Tensor, x_n: &Tensor) -> Result<Tensor> {
        let x_ne = self.embed.forward(tape, p, x_n)?;
        gcn_layers(tape, a, &x_ne, self.gc.iter().map(|&w| &p[w]))
    }

    /// `(x_RC,diag, x_RC,low)` as columns.
    pub fn residual_path(&self, tape: &Tape, p: &[Tensor], x_n: &Tensor) -> Result<(Tensor, Tensor)> {
        let x0 = vec_row(x_n);
        let inter = self.rfc.forward(tape, p, &x0)?;
        Ok((
            tape.transpose(&self.rc_diag.forward(tape, p, &inter)?),
            tape.transpose(&self.rc_low.forward(tape, p, &inter)?),
        ))
    }

    /// Masked symmetric tunable matrix in physical units.
    #[allow(clippy::too_many_arguments)]
    pub fn regress_matrix(
        &self,
        tape: &Tape,
        p: &[Tensor],
        edges: (&Tensor, &Tensor),
        residual: (&Tensor, &Tensor),
        a: &Tensor,
        lossy: &LossyConfig,
        mode: Mode,
    ) -> Result<Tensor> {
        let n = self.n_i;
        let diag = self
            .head_diag
            .forward(tape, p, &tape.hcat(&[edges.0, residual.0])?)?;
        let low = self
            .head_low
            .forward(tape, p, &tape.hcat(&[edges.1, residual.1])?)?;
        let raw = tape.vcat(&[&diag, &low])?;
        let values = match self.variant {
            Variant::Ideal | Variant::Mc => tape.scale(&raw, Y0),
            Variant::Lossy => tape.offset(
                &tape.scale(&tape.sigmoid(&raw), lossy.c_max - lossy.c_min),
                lossy.c_min,
            ),
            Variant::Discrete => {
                let cb = self
                    .codebook
                    .as_ref()
                    .ok_or_else(|| Error::Contract("discrete variant without codebook".into()))?;
                let codes = cb.codewords(tape, p)?;
                tape.scale(&quantize::quantize(tape, &raw, &codes, cb.tau, mode)?, Y0)
            }
        };
        let sym = symmetric_from_parts(tape, &values, n)?;
        tape.mul(&sym, a)
    }

    /// Precoder scaled to `||P||_F^2 = P_T`; an all-zero raw output stays zero.
    pub fn precoder_head(
        &self,
        tape: &Tape,
        p: &[Tensor],
        h: &ComplexMatrix,
        scale: &FeatureScale,
        p_t: f64,
    ) -> Result<ComplexMatrix> {
        let mlp = self
            .precoder
            .as_ref()
            .ok_or_else(|| Error::Contract("network has no precoder head".into()))?;
        let raw = mlp.forward(tape, p, &heff_input(tape, h, scale)?)?;
        precoder_from_raw(tape, &raw, self.n_t, self.n_r, p_t)
    }

    pub fn forward(
        &self,
        tape: &Tape,
        p: &[Tensor],
        r: &ChannelRealization,
        a: &Tensor,
        sc: &Scenario,
        mode: Mode,
    ) -> Result<Forward> {
        if r.kind() != self.variant.channel_kind() {
            return Err(Error::Contract(format!(
                "variant {} cannot use {:?} channels",
                self.variant,
                r.kind()
            )));
        }
        if r.dims() != self.dims() {
            return Err(Error::Contract(format!(
                "channel dims {:?} do not match the network {:?}",
                r.dims(),
                self.dims()
            )));
        }
        let x_n = node_features(r, &sc.scale);
        let nodes = self.gcn_forward(tape, p, a, &x_n)?;
        let (e_diag, e_low) = edge_features(tape, &nodes)?;
        let (rc_diag, rc_low) = self.residual_path(tape, p, &x_n)?;
        let matrix = self.regress_matrix(
            tape,
            p,
            (&e_diag, &e_low),
            (&rc_diag, &rc_low),
            a,
            &sc.lossy,
            mode,
        )?;
        let (theta, h) = match (self.variant, r) {
            (Variant::Mc, ChannelRealization::Coupled(ch)) => {
                let out = effective_channel_mc(tape, ch, &matrix)?;
                (out.theta, out.h)
            }
            (Variant::Lossy, ChannelRealization::Ideal(ch)) => {
                let (_, theta) = lossy_admittance(tape, &matrix, a, &sc.lossy)?;
                let h = effective_channel_ideal(tape, ch, &theta)?;
                (theta, h)
            }
            (_, ChannelRealization::Ideal(ch)) => {
                let theta = susceptance_to_scattering(tape, &matrix)?;
                let h = effective_channel_ideal(tape, ch, &theta)?;
                (theta, h)
            }
            _ => unreachable!("kind checked above"),
        };
        let (objective, precoder) = match sc.metric {
            Metric::Gain => (channel_gain(tape, &h)?, None),
            Metric::Rate => {
                let pm = self.precoder_head(tape, p, &h, &sc.scale, sc.powers.p_t)?;
                (sum_rate(tape, &pm, &h, &sc.users, sc.powers.sigma2)?, Some(pm))
            }
        };
        let loss = tape.scale(&objective, -1.0 / sc.loss_scale);
        Ok(Forward {
            matrix,
            theta,
            h,
            precoder,
            objective,
            loss,
        })
    }
}

/// `ReLU(D^-1/2 A D^-1/2 X W)` per layer, with `D` the row sums of `a`.
pub fn gcn_layers<'a>(
    tape: &Tape,
    a: &Tensor,
    x: &Tensor,
    weights: impl IntoIterator<Item = &'a Tensor>,
) -> Result<Tensor> {
    let dinv = tape.pow(&tape.row_sums(a), -0.5);
    let norm = tape.mul(a, &tape.matmul(&dinv, &tape.transpose(&dinv))?)?;
    let mut h = x.clone();
    for w in weights {
        h = tape.relu(&tape.matmul(&norm, &tape.matmul(&h, w)?)?);
    }
    Ok(h)
}

/// `E_diag = [x_i, x_i]` and `E_low = [x_i, x_j]` for `i > j` in lower-index order.
pub fn edge_features(tape: &Tape, x: &Tensor) -> Result<(Tensor, Tensor)> {
    let (n, d) = (x.rows(), x.cols());
    let e_diag = tape.hcat(&[x, x])?;
    let rows = lower_len(n);
    let mut idx = Vec::with_capacity(rows * 2 * d);
    for i in 1..n {
        for j in 0..i {
            debug_assert_eq!(idx.len(), lower_index(i, j) * 2 * d);
            idx.extend((0..d).map(|c| Some(i * d + c)));
            idx.extend((0..d).map(|c| Some(j * d + c)));
        }
    }
    let e_low = tape.gather(x, rows, 2 * d, idx)?;
    Ok((e_diag, e_low))
}

/// Symmetric `n x n` matrix from a column `[diag; low]` of length `n + L`.
pub fn symmetric_from_parts(tape: &Tape, values: &Tensor, n: usize) -> Result<Tensor> {
    let idx = (0..n * n)
        .map(|k| {
            let (i, j) = (k / n, k % n);
            Some(match i.cmp(&j) {
                std::cmp::Ordering::Equal => i,
                std::cmp::Ordering::Greater => n + lower_index(i, j),
                std::cmp::Ordering::Less => n + lower_index(j, i),
            })
        })
        .collect();
    tape.gather(values, n, n, idx)
}

/// Reshapes a `1 x 2 N_T N_R` row (`[vec Re, vec Im]`, column-major) into `P` and
/// rescales it to `||P||_F^2 = p_t`.
pub fn precoder_from_raw(
    tape: &Tape,
    raw: &Tensor,
    n_t: usize,
    n_r: usize,
    p_t: f64,
) -> Result<ComplexMatrix> {
    let m = n_t * n_r;
    if raw.shape() != [1, 2 * m] {
        return Err(Error::Dimension {
            op: "precoder",
            lhs: raw.shape(),
            rhs: [1, 2 * m],
        });
    }
    let norm_sq = tape.sum_all(&tape.mul(raw, raw)?);
    if norm_sq.item() == 0.0 {
        return Ok(ComplexMatrix::zeros(n_t, n_r));
    }
    let scaled = tape.mul_scalar(raw, &tape.scale(&tape.pow(&norm_sq, -0.5), p_t.sqrt()))?;
    let part = |offset: usize| -> Result<Tensor> {
        let idx = (0..m).map(|k| Some(offset + (k % n_r) * n_t + k / n_r)).collect();
        tape.gather(&scaled, n_t, n_r, idx)
    };
    ComplexMatrix::new(part(0)?, part(m)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_strings() {
        for v in [Variant::Ideal, Variant::Mc, Variant::Lossy, Variant::Discrete] {
            assert_eq!(v.to_string().parse::<Variant>().unwrap(), v);
        }
        assert!(matches!("x".parse::<Variant>(), Err(Error::Config(_))));
    }

    #[test]
    fn edge_features_two_nodes() {
        let tape = Tape::new();
        let x = Tensor::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (d, l) = edge_features(&tape, &x).unwrap();
        assert_eq!(d.data(), &[1.0, 2.0, 1.0, 2.0, 3.0, 4.0, 3.0, 4.0]);
        assert_eq!(l.data(), &[3.0, 4.0, 1.0, 2.0]);
    }

    #[test]
    fn path_graph_layer_by_hand() {
        let tape = Tape::new();
        let a = Tensor::new(3, 3, vec![1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 0.0, 1.0, 1.0]).unwrap();
        let x = Tensor::column(vec![1.0, 2.0, 3.0]);
        let out = gcn_layers(&tape, &a, &x, [&Tensor::scalar(1.0)]).unwrap();
        // Degrees (2, 3, 2).
        let s6 = 6f64.sqrt();
        let expect = [1.0 / 2.0 + 2.0 / s6, 1.0 / s6 + 2.0 / 3.0 + 3.0 / s6, 2.0 / s6 + 3.0 / 2.0];
        for (g, e) in out.data().iter().zip(expect) {
            assert!((g - e).abs() < 1e-15);
        }
    }

    #[test]
    fn precoder_normalization() {
        let tape = Tape::new();
        let raw = Tensor::row(vec![3.0, 4.0]);
        let p = precoder_from_raw(&tape, &raw, 1, 1, 2.0).unwrap();
        let s = 2f64.sqrt() / 5.0;
        assert!((p.re.item() - 3.0 * s).abs() < 1e-15);
        assert!((p.im.item() - 4.0 * s).abs() < 1e-15);
        let zero = precoder_from_raw(&tape, &Tensor::zeros(1, 8), 2, 2, 1.0).unwrap();
        assert_eq!(zero, ComplexMatrix::zeros(2, 2));
        let raw = Tensor::row((0..8).map(|v| v as f64 - 3.5).collect());
        let p = precoder_from_raw(&tape, &raw, 2, 2, 0.1).unwrap();
        assert!((tape.cnorm_sq(&p).unwrap().item() - 0.1).abs() < 1e-15);
        // Column-major: raw[1] is P[1, 0].
        assert_eq!(p.re.get(1, 0) / p.re.get(0, 0), raw.get(0, 1) / raw.get(0, 0));
    }
}
