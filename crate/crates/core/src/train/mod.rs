//! Two-tier training: the optimizer net is trained under a fixed architecture for
//! `inner_iters` steps, then the generator takes one step along the gradient of the
//! final full-batch loss with respect to the architecture matrix.

pub mod adam;

use std::io::Write;
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adam::{cosine_lr, Adam};

use crate::arch::Architecture;
use crate::autodiff::{Tape, Tensor};
use crate::container::Container;
use crate::error::{Error, Result};
use crate::features::build_generator_input;
use crate::generator::GeneratorNet;
use crate::nn::Params;
use crate::optimizer::{Mode, OptimizerNet, Scenario};
use crate::physics::ChannelRealization;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSchedule {
    pub inner_iters: usize,
    pub outer_epochs: usize,
    pub patience: usize,
    pub lr_min: f64,
    pub lr_max: f64,
    /// Realizations per inner step; 0 means the full set.
    pub batch_size: usize,
    pub seed: u64,
    /// Reinitialize the optimizer net at every epoch instead of warm-starting.
    pub reinit: bool,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        Self {
            inner_iters: 1000,
            outer_epochs: 100,
            patience: 20,
            lr_min: 1e-5,
            lr_max: 1e-3,
            batch_size: 0,
            seed: 0,
            reinit: false,
        }
    }
}

impl TrainSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr_min > 0.0 && self.lr_min <= self.lr_max && self.lr_max.is_finite()) {
            return Err(Error::Config(format!(
                "need 0 < lr_min <= lr_max, got {} and {}",
                self.lr_min, self.lr_max
            )));
        }
        if self.outer_epochs == 0 {
            return Err(Error::Config("outer_epochs must be at least 1".into()));
        }
        if self.patience > self.outer_epochs {
            return Err(Error::Config(format!(
                "patience {} exceeds outer_epochs {}",
                self.patience, self.outer_epochs
            )));
        }
        Ok(())
    }

    /// Stream for epoch `epoch`; the RNG state is fully described by `(seed, epoch)`.
    pub fn rng(&self, epoch: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(epoch as u64);
        rng
    }
}

/// Mean objective (gain or rate) over `data` without gradient tracking.
pub fn evaluate(net: &OptimizerNet, a: &Tensor, data: &[ChannelRealization], sc: &Scenario) -> Result<f64> {
    Ok(per_realization(net, a, data, sc)?.iter().sum::<f64>() / data.len() as f64)
}

pub fn per_realization(
    net: &OptimizerNet,
    a: &Tensor,
    data: &[ChannelRealization],
    sc: &Scenario,
) -> Result<Vec<f64>> {
    data.iter()
        .map(|r| {
            let tape = Tape::new();
            Ok(net
                .forward(&tape, net.params.values(), r, a, sc, Mode::Eval)?
                .objective
                .item())
        })
        .collect()
}

/// Mean loss and objective over `batch`, with gradients for the parameters and
/// optionally for `a`.
fn batch_pass(
    net: &OptimizerNet,
    a: &Tensor,
    data: &[ChannelRealization],
    batch: &[usize],
    sc: &Scenario,
    want_a: bool,
) -> Result<(f64, f64, Vec<Tensor>, Option<Tensor>)> {
    let tape = Tape::new();
    let bound = net.params.bind(&tape);
    let a = if want_a { tape.watch(a) } else { a.clone() };
    let mut total: Option<Tensor> = None;
    let mut objective = 0.0;
    for &i in batch {
        let out = net.forward(&tape, &bound, &data[i], &a, sc, Mode::Train)?;
        objective += out.objective.item();
        total = Some(match total {
            None => out.loss,
            Some(t) => tape.add(&t, &out.loss)?,
        });
    }
    let n = batch.len() as f64;
    let loss = tape.scale(&total.expect("non-empty batch"), 1.0 / n);
    let grads = tape.backward(&loss)?;
    let g = net.params.collect(&grads, &bound);
    let ga = want_a.then(|| grads.wrt(&a));
    Ok((loss.item(), objective / n, g, ga))
}

fn grad_norm(grads: &[Tensor]) -> f64 {
    grads.iter().map(Tensor::norm_sq).sum::<f64>().sqrt()
}

/// `inner_iters` Adam steps under the fixed architecture `a`; returns the final
/// full-set mean objective.
pub fn inner_loop(
    net: &mut OptimizerNet,
    adam: &mut Adam,
    a: &Tensor,
    data: &[ChannelRealization],
    sc: &Scenario,
    schedule: &TrainSchedule,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Contract("training needs at least one realization".into()));
    }
    let full: Vec<usize> = (0..data.len()).collect();
    for step in 0..schedule.inner_iters {
        let lr = cosine_lr(step, schedule.inner_iters, schedule.lr_min, schedule.lr_max);
        let batch = if schedule.batch_size == 0 || schedule.batch_size >= data.len() {
            full.clone()
        } else {
            let mut b = sample(rng, data.len(), schedule.batch_size).into_vec();
            b.sort_unstable();
            b
        };
        let (loss, _, grads, _) = batch_pass(net, a, data, &batch, sc, false)?;
        let norm = grad_norm(&grads);
        if !loss.is_finite() || !norm.is_finite() {
            return Err(Error::NonFinite {
                step,
                lr,
                grad_norm: norm,
            });
        }
        adam.step(&mut net.params, &grads, lr);
    }
    evaluate(net, a, data, sc)
}

/// Where each epoch's architecture comes from.
#[derive(Clone, Debug)]
pub enum ArchitectureSource {
    Learned {
        generator: GeneratorNet,
        adam: Adam,
        k_cc: usize,
        input: Tensor,
    },
    Fixed(Architecture),
}

impl ArchitectureSource {
    pub fn learned(generator: GeneratorNet, k_cc: usize, data: &[ChannelRealization], sc: &Scenario) -> Result<Self> {
        crate::generator::off_diagonal_budget(generator.n_i(), k_cc)?;
        let input = build_generator_input(data, &sc.scale)?;
        let adam = Adam::new(&generator.params);
        Ok(Self::Learned {
            generator,
            adam,
            k_cc,
            input,
        })
    }

    pub fn k_cc(&self) -> usize {
        match self {
            Self::Learned { k_cc, .. } => *k_cc,
            Self::Fixed(a) => a.circuit_complexity(),
        }
    }

    pub fn generator(&self) -> Option<&GeneratorNet> {
        match self {
            Self::Learned { generator, .. } => Some(generator),
            Self::Fixed(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub epoch: usize,
    pub objective: f64,
    pub best_objective: f64,
    /// Complexity of the architecture used in this epoch.
    pub k_cc: usize,
    /// Generator learning rate used after this epoch (0 for fixed architectures).
    pub lr: f64,
}

#[derive(Clone, Debug)]
pub struct TrainResult {
    pub best_architecture: Architecture,
    pub best_objective: f64,
    pub best_epoch: usize,
    pub optimizer: OptimizerNet,
    pub generator: Option<GeneratorNet>,
    pub trace: Vec<TraceRow>,
    /// Seconds per epoch, kept apart from the trace so that traces are reproducible.
    pub wall_clock: Vec<f64>,
    pub inner_steps: usize,
}

/// Resumable two-tier training state.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub schedule: TrainSchedule,
    pub scenario: Scenario,
    pub net: OptimizerNet,
    pub adam: Adam,
    pub source: ArchitectureSource,
    pub epoch: usize,
    pub since_best: usize,
    pub best: Option<(f64, usize, Architecture, Params, Option<Params>)>,
    pub trace: Vec<TraceRow>,
    pub wall_clock: Vec<f64>,
    init_params: Params,
}

impl Trainer {
    pub fn new(net: OptimizerNet, source: ArchitectureSource, scenario: Scenario, schedule: TrainSchedule) -> Result<Self> {
        schedule.validate()?;
        let adam = Adam::new(&net.params);
        Ok(Self {
            init_params: net.params.clone(),
            schedule,
            scenario,
            net,
            adam,
            source,
            epoch: 0,
            since_best: 0,
            best: None,
            trace: Vec::new(),
            wall_clock: Vec::new(),
        })
    }

    pub fn is_done(&self) -> bool {
        self.epoch >= self.schedule.outer_epochs
            || (self.best.is_some() && self.since_best >= self.schedule.patience)
    }

    /// Runs one outer epoch.
    pub fn run_epoch(&mut self, data: &[ChannelRealization]) -> Result<&TraceRow> {
        let started = std::time::Instant::now();
        let epoch = self.epoch;
        let mut rng = self.schedule.rng(epoch);
        let n_i = self.net.dims().1;
        let gen_tape = Tape::new();
        let (arch, a_node, gen_bound) = match &self.source {
            ArchitectureSource::Learned {
                generator,
                k_cc,
                input,
                ..
            } => {
                let bound = generator.params.bind(&gen_tape);
                let s = generator.forward(&gen_tape, &bound, input, *k_cc)?;
                (s.arch, Some(s.a), bound)
            }
            ArchitectureSource::Fixed(a) => (a.clone(), None, Vec::new()),
        };
        debug_assert_eq!(arch.n(), n_i);
        let a = arch.as_tensor();
        if self.schedule.reinit && epoch > 0 {
            self.net.params = self.init_params.clone();
            self.adam = Adam::new(&self.net.params);
        }
        inner_loop(
            &mut self.net,
            &mut self.adam,
            &a,
            data,
            &self.scenario,
            &self.schedule,
            &mut rng,
        )?;
        let gen_lr = cosine_lr(
            epoch,
            self.schedule.outer_epochs,
            self.schedule.lr_min,
            self.schedule.lr_max,
        );
        let full: Vec<usize> = (0..data.len()).collect();
        let learned = a_node.is_some();
        let (_, objective, _, grad_a) = batch_pass(&self.net, &a, data, &full, &self.scenario, learned)?;
        if !objective.is_finite() {
            return Err(Error::NonFinite {
                step: self.schedule.inner_iters,
                lr: gen_lr,
                grad_norm: f64::NAN,
            });
        }
        if let (
            ArchitectureSource::Learned {
                generator, adam, ..
            },
            Some(a_node),
            Some(grad_a),
        ) = (&mut self.source, a_node, grad_a)
        {
            let grads = gen_tape.backward_with(&a_node, &grad_a)?;
            let g = generator.params.collect(&grads, &gen_bound);
            let norm = grad_norm(&g);
            if !norm.is_finite() {
                return Err(Error::NonFinite {
                    step: self.schedule.inner_iters,
                    lr: gen_lr,
                    grad_norm: norm,
                });
            }
            adam.step(&mut generator.params, &g, gen_lr);
        }

        let improved = match &self.best {
            None => true,
            Some((b, ..)) => objective > b + 1e-6 * b.abs(),
        };
        let k_cc = arch.circuit_complexity();
        if improved {
            self.since_best = 0;
            self.best = Some((
                objective,
                epoch,
                arch,
                self.net.params.clone(),
                self.source.generator().map(|g| g.params.clone()),
            ));
        } else {
            self.since_best += 1;
        }
        let best_objective = self.best.as_ref().map_or(objective, |b| b.0);
        self.trace.push(TraceRow {
            epoch,
            objective,
            best_objective,
            k_cc,
            lr: if learned { gen_lr } else { 0.0 },
        });
        self.wall_clock.push(started.elapsed().as_secs_f64());
        self.epoch += 1;
        Ok(self.trace.last().unwrap())
    }

    pub fn run(mut self, data: &[ChannelRealization]) -> Result<TrainResult> {
        while !self.is_done() {
            self.run_epoch(data)?;
        }
        self.finish()
    }

    pub fn finish(self) -> Result<TrainResult> {
        let (best_objective, best_epoch, best_architecture, opt_params, gen_params) = self
            .best
            .ok_or_else(|| Error::Contract("no epoch has run".into()))?;
        let mut optimizer = self.net;
        optimizer.params = opt_params;
        let generator = match (self.source, gen_params) {
            (ArchitectureSource::Learned { mut generator, .. }, Some(p)) => {
                generator.params = p;
                Some(generator)
            }
            _ => None,
        };
        Ok(TrainResult {
            best_architecture,
            best_objective,
            best_epoch,
            optimizer,
            generator,
            inner_steps: self.trace.len() * self.schedule.inner_iters,
            trace: self.trace,
            wall_clock: self.wall_clock,
        })
    }

    /// Everything needed to continue bit-exactly: parameters, moments, best snapshot,
    /// trace and counters. The RNG state is implied by `(seed, epoch)`.
    pub fn checkpoint(&self) -> Container {
        let best = self.best.as_ref();
        let meta = serde_json::json!({
            "epoch": self.epoch,
            "since_best": self.since_best,
            "adam_t": self.adam.t,
            "gen_adam_t": match &self.source {
                ArchitectureSource::Learned { adam, .. } => adam.t,
                ArchitectureSource::Fixed(_) => 0,
            },
            "best_objective": best.map(|b| b.0),
            "best_epoch": best.map(|b| b.1),
            "best_architecture": best.map(|b| b.2.to_text()),
            "trace": self.trace,
            "wall_clock": self.wall_clock,
        });
        let mut c = Container::new("checkpoint", meta);
        self.net.params.write_into(&mut c, "");
        self.init_params.write_into(&mut c, "init.");
        self.adam.write_into(&mut c, &self.net.params, "adam.");
        if let Some(b) = best {
            b.3.write_into(&mut c, "best.");
            if let Some(g) = &b.4 {
                g.write_into(&mut c, "best.");
            }
        }
        if let ArchitectureSource::Learned {
            generator, adam, ..
        } = &self.source
        {
            generator.params.write_into(&mut c, "");
            adam.write_into(&mut c, &generator.params, "gen_adam.");
        }
        c
    }

    /// Restores a checkpoint into a trainer built with the same configuration.
    pub fn restore(&mut self, c: &Container, path: &Path) -> Result<()> {
        c.expect_kind("checkpoint", path)?;
        let bad = |what: &str| Error::format(path, format!("checkpoint meta lacks `{what}`"));
        let get_u = |key: &str| c.meta.get(key).and_then(|v| v.as_u64()).ok_or_else(|| bad(key));
        self.epoch = get_u("epoch")? as usize;
        self.since_best = get_u("since_best")? as usize;
        self.net.params.read_from(c, "")?;
        self.init_params.read_from(c, "init.")?;
        self.adam.read_from(c, &self.net.params, "adam.", get_u("adam_t")?)?;
        self.trace = serde_json::from_value(c.meta["trace"].clone()).map_err(|_| bad("trace"))?;
        self.wall_clock =
            serde_json::from_value(c.meta["wall_clock"].clone()).map_err(|_| bad("wall_clock"))?;
        let gen_t = get_u("gen_adam_t")?;
        if let ArchitectureSource::Learned {
            generator, adam, ..
        } = &mut self.source
        {
            generator.params.read_from(c, "")?;
            adam.read_from(c, &generator.params, "gen_adam.", gen_t)?;
        }
        self.best = match c.meta.get("best_objective").and_then(|v| v.as_f64()) {
            None => None,
            Some(obj) => {
                let text = c.meta["best_architecture"].as_str().ok_or_else(|| bad("best_architecture"))?;
                let mut opt = self.net.params.clone();
                opt.read_from(c, "best.")?;
                let gen = match self.source.generator() {
                    Some(g) => {
                        let mut p = g.params.clone();
                        p.read_from(c, "best.")?;
                        Some(p)
                    }
                    None => None,
                };
                Some((obj, get_u("best_epoch")? as usize, Architecture::from_text(text)?, opt, gen))
            }
        };
        Ok(())
    }
}

/// Outer loop from scratch.
pub fn outer_loop(
    net: OptimizerNet,
    source: ArchitectureSource,
    data: &[ChannelRealization],
    scenario: Scenario,
    schedule: TrainSchedule,
) -> Result<TrainResult> {
    Trainer::new(net, source, scenario, schedule)?.run(data)
}

/// `epoch,objective,best_objective,k_cc,lr`, fixed-precision round-trip floats.
pub fn write_trace<W: Write>(rows: &[TraceRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Contract(format!("trace write failed: {e}"));
    w.write_record(["epoch", "objective", "best_objective", "k_cc", "lr"]).map_err(io)?;
    for r in rows {
        w.write_record([
            r.epoch.to_string(),
            format!("{:e}", r.objective),
            format!("{:e}", r.best_objective),
            r.k_cc.to_string(),
            format!("{:e}", r.lr),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::Contract(format!("trace write failed: {e}")))?;
    Ok(())
}
