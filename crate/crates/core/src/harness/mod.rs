//! Command implementations behind the `bdris` binary.
//!
//! Output files:
//! - channel sets: `channels` containers (see [`crate::physics::set`]);
//! - `params.bin`: `params` container with the best optimizer (and generator)
//!   parameters, meta holding everything `eval` needs to rebuild the network;
//! - `checkpoint.bin`: resumable training state;
//! - `architecture.txt`: best architecture in the text format of [`crate::arch`];
//! - `trace.csv`: `epoch,objective,best_objective,k_cc,lr`, reproducible byte for byte;
//! - `timing.csv`: `epoch,seconds`;
//! - sweep CSV: one [`SweepRecord`] per row, schema version in the first column.

pub mod config;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use config::{Overrides, RunConfig};

use crate::arch::{make_baseline, Architecture, BaselineKind};
use crate::container::Container;
use crate::error::{Error, Result};
use crate::features::{build_generator_input, FeatureScale};
use crate::generator::{GeneratorConfig, GeneratorNet};
use crate::optimizer::{Metric, OptimizerConfig, OptimizerNet, Scenario, Variant};
use crate::physics::{
    synth_coupling, synth_realizations, ChannelSet, LossyConfig, Powers,
};
use crate::train::{per_realization, write_trace, ArchitectureSource, TrainResult, Trainer};

pub const SWEEP_SCHEMA: u32 = 1;
pub const PARAMS_KIND: &str = "params";

/// Seed offset separating the generator's initialization stream from the optimizer's.
const GENERATOR_SEED_OFFSET: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub schema: u32,
    pub variant: Variant,
    pub k_cc: usize,
    /// `learned` or a baseline name such as `band:15`.
    pub label: String,
    pub objective: f64,
    pub metric: Metric,
    pub seed: u64,
    pub n_i: usize,
    /// Series resistance, lossy rows only.
    pub r: Option<f64>,
    /// Codebook bits, discrete rows only.
    pub n_b: Option<u32>,
    pub config_hash: String,
    pub runtime_s: f64,
}

pub fn write_records<W: Write>(records: &[SweepRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)
            .map_err(|e| Error::Contract(format!("csv write failed: {e}")))?;
    }
    w.flush()
        .map_err(|e| Error::Contract(format!("csv write failed: {e}")))
}

pub fn read_records(path: &Path) -> Result<Vec<SweepRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    r.deserialize()
        .map(|row| row.map_err(|e| Error::format(path, e.to_string())))
        .collect()
}

/// Synthesizes the channel set for `variant` and writes it to `out`; returns the set.
pub fn cmd_synth(cfg: &RunConfig, variant: Variant, out: &Path) -> Result<ChannelSet> {
    cfg.validate()?;
    let data = match variant {
        Variant::Mc => synth_coupling(&cfg.system, &cfg.fading, &cfg.coupling, cfg.seed)?,
        _ => synth_realizations(&cfg.system, &cfg.fading, cfg.seed)?,
    };
    let set = ChannelSet::new(data, cfg.system.users.clone(), cfg.seed, cfg.hash())?;
    set.write(out)?;
    Ok(set)
}

/// Everything a forward pass needs that is not a parameter, derived from the run
/// configuration and the training channels.
pub fn scenario_for(cfg: &RunConfig, set: &ChannelSet) -> Scenario {
    let scale = FeatureScale::from_realizations(&set.realizations);
    let metric = Metric::default_for(&set.meta.users);
    Scenario {
        users: set.meta.users.clone(),
        powers: cfg.system.powers(),
        lossy: cfg.lossy.clone(),
        scale,
        metric,
        loss_scale: Scenario::default_loss_scale(metric, &scale, set.meta.n_i, set.meta.n_t, set.n_r()),
    }
}

fn check_variant(set: &ChannelSet, variant: Variant) -> Result<()> {
    if set.meta.kind != variant.channel_kind() {
        return Err(Error::Config(format!(
            "variant {variant} needs {:?} channels, the file holds {:?} channels",
            variant.channel_kind(),
            set.meta.kind
        )));
    }
    Ok(())
}

/// Where a training run writes its files.
#[derive(Clone, Debug, Default)]
pub struct RunOutput {
    pub dir: Option<PathBuf>,
    /// Checkpoint to continue from.
    pub resume: Option<PathBuf>,
    /// Stop after this many epochs in this invocation (the schedule is unchanged).
    pub stop_after: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub result: TrainResult,
    pub record: SweepRecord,
    /// False when `stop_after` interrupted the run.
    pub finished: bool,
}

/// Trains with a learned architecture of complexity `k_cc`.
pub fn cmd_train(cfg: &RunConfig, set: &ChannelSet, variant: Variant, k_cc: usize, out: &RunOutput) -> Result<RunOutcome> {
    run(cfg, set, variant, Source::Learned(k_cc), out)
}

/// Trains the optimizer under a fixed baseline architecture.
pub fn cmd_baseline(cfg: &RunConfig, set: &ChannelSet, variant: Variant, kind: BaselineKind, out: &RunOutput) -> Result<RunOutcome> {
    run(cfg, set, variant, Source::Baseline(kind), out)
}

/// What to train at one sweep point.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Source {
    Learned(usize),
    Baseline(BaselineKind),
}

/// One run per point, in order; `parallel` runs the points on separate threads.
pub fn cmd_sweep(
    cfg: &RunConfig,
    set: &ChannelSet,
    variant: Variant,
    points: &[Source],
    parallel: bool,
) -> Result<Vec<SweepRecord>> {
    let one = |p: &Source| run(cfg, set, variant, *p, &RunOutput::default()).map(|o| o.record);
    if !parallel {
        return points.iter().map(one).collect();
    }
    std::thread::scope(|s| {
        let handles: Vec<_> = points.iter().map(|p| s.spawn(move || one(p))).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("sweep worker panicked"))
            .collect()
    })
}

fn run(cfg: &RunConfig, set: &ChannelSet, variant: Variant, source: Source, out: &RunOutput) -> Result<RunOutcome> {
    cfg.validate()?;
    check_variant(set, variant)?;
    let started = Instant::now();
    let sc = scenario_for(cfg, set);
    let n_i = set.meta.n_i;
    let dims = (set.n_r(), n_i, set.meta.n_t);
    let net = OptimizerNet::new(variant, dims, sc.metric, &cfg.optimizer, cfg.seed)?;
    let (arch_source, label) = match source {
        Source::Learned(k_cc) => {
            let width = build_generator_input(&set.realizations, &sc.scale)?.cols();
            let gen = GeneratorNet::new(n_i, width, &cfg.generator, cfg.seed.wrapping_add(GENERATOR_SEED_OFFSET));
            (
                ArchitectureSource::learned(gen, k_cc, &set.realizations, &sc)?,
                "learned".to_string(),
            )
        }
        Source::Baseline(kind) => (ArchitectureSource::Fixed(make_baseline(kind, n_i)?), kind.to_string()),
    };
    let mut trainer = Trainer::new(net, arch_source, sc.clone(), cfg.schedule.clone())?;
    if let Some(path) = &out.resume {
        trainer.restore(&Container::read(path)?, path)?;
    }
    if let Some(dir) = &out.dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        fs::write(dir.join("config.toml"), cfg.to_toml()).map_err(|e| Error::io(dir, e))?;
    }
    let mut ran = 0;
    while !trainer.is_done() && out.stop_after.is_none_or(|n| ran < n) {
        trainer.run_epoch(&set.realizations)?;
        ran += 1;
        if let Some(dir) = &out.dir {
            trainer.checkpoint().write(dir.join("checkpoint.bin"))?;
        }
    }
    let finished = trainer.is_done();
    let k_cc = trainer.source.k_cc();
    let result = trainer.finish()?;
    let record = SweepRecord {
        schema: SWEEP_SCHEMA,
        variant,
        k_cc,
        label,
        objective: result.best_objective,
        metric: sc.metric,
        seed: cfg.seed,
        n_i,
        r: (variant == Variant::Lossy).then_some(cfg.lossy.r),
        n_b: (variant == Variant::Discrete).then_some(cfg.optimizer.n_b),
        config_hash: cfg.hash(),
        runtime_s: started.elapsed().as_secs_f64(),
    };
    if let Some(dir) = &out.dir {
        write_outputs(dir, cfg, &sc, &result, &record)?;
    }
    Ok(RunOutcome {
        result,
        record,
        finished,
    })
}

fn write_outputs(dir: &Path, cfg: &RunConfig, sc: &Scenario, result: &TrainResult, record: &SweepRecord) -> Result<()> {
    let file = |name: &str| dir.join(name);
    let create = |name: &str| fs::File::create(file(name)).map_err(|e| Error::io(file(name), e));
    write_trace(&result.trace, create("trace.csv")?)?;
    let mut timing = String::from("epoch,seconds\n");
    for (e, s) in result.wall_clock.iter().enumerate() {
        timing.push_str(&format!("{e},{s}\n"));
    }
    fs::write(file("timing.csv"), timing).map_err(|e| Error::io(file("timing.csv"), e))?;
    fs::write(file("architecture.txt"), result.best_architecture.to_text())
        .map_err(|e| Error::io(file("architecture.txt"), e))?;
    params_container(cfg, sc, result, record).write(file("params.bin"))?;
    write_records(std::slice::from_ref(record), create("record.csv")?)
}

#[derive(Serialize, Deserialize)]
struct ParamsMeta {
    variant: Variant,
    metric: Metric,
    dims: (usize, usize, usize),
    users: Vec<usize>,
    p_t: f64,
    sigma2: f64,
    lossy: LossyConfig,
    scale: FeatureScale,
    loss_scale: f64,
    optimizer: OptimizerConfig,
    generator: Option<GeneratorConfig>,
    generator_input_width: Option<usize>,
    architecture: String,
    record: SweepRecord,
}

fn params_container(cfg: &RunConfig, sc: &Scenario, result: &TrainResult, record: &SweepRecord) -> Container {
    let net = &result.optimizer;
    let meta = ParamsMeta {
        variant: net.variant,
        metric: sc.metric,
        dims: net.dims(),
        users: sc.users.clone(),
        p_t: sc.powers.p_t,
        sigma2: sc.powers.sigma2,
        lossy: sc.lossy.clone(),
        scale: sc.scale,
        loss_scale: sc.loss_scale,
        optimizer: net.config.clone(),
        generator: result.generator.as_ref().map(|_| cfg.generator.clone()),
        generator_input_width: result.generator.as_ref().map(GeneratorNet::input_width),
        architecture: result.best_architecture.to_text(),
        record: record.clone(),
    };
    let mut c = Container::new(PARAMS_KIND, serde_json::to_value(meta).expect("meta serializes"));
    net.params.write_into(&mut c, "");
    if let Some(g) = &result.generator {
        g.params.write_into(&mut c, "");
    }
    c
}

/// A trained network reloaded from `params.bin`.
#[derive(Clone, Debug)]
pub struct Trained {
    pub net: OptimizerNet,
    pub architecture: Architecture,
    pub scenario: Scenario,
    pub record: SweepRecord,
    pub generator: Option<GeneratorNet>,
}

pub fn load_params(path: &Path) -> Result<Trained> {
    let c = Container::read(path)?;
    c.expect_kind(PARAMS_KIND, path)?;
    let meta: ParamsMeta =
        serde_json::from_value(c.meta.clone()).map_err(|e| Error::format(path, e.to_string()))?;
    let mut net = OptimizerNet::new(meta.variant, meta.dims, meta.metric, &meta.optimizer, 0)?;
    net.params.read_from(&c, "")?;
    let generator = match (&meta.generator, meta.generator_input_width) {
        (Some(g), Some(w)) => {
            let mut gen = GeneratorNet::new(meta.dims.1, w, g, 0);
            gen.params.read_from(&c, "")?;
            Some(gen)
        }
        _ => None,
    };
    Ok(Trained {
        net,
        architecture: Architecture::from_text(&meta.architecture)?,
        scenario: Scenario {
            users: meta.users,
            powers: Powers {
                p_t: meta.p_t,
                sigma2: meta.sigma2,
            },
            lossy: meta.lossy,
            scale: meta.scale,
            metric: meta.metric,
            loss_scale: meta.loss_scale,
        },
        record: meta.record,
        generator,
    })
}

/// Mean eval-mode objective of a trained network on `set`, with the per-realization values.
pub fn cmd_eval(params: &Path, set: &ChannelSet) -> Result<(SweepRecord, Vec<f64>)> {
    let started = Instant::now();
    let t = load_params(params)?;
    check_variant(set, t.net.variant)?;
    if (set.n_r(), set.meta.n_i, set.meta.n_t) != t.net.dims() || set.meta.users != t.scenario.users {
        return Err(Error::Config(format!(
            "channel dims {:?} do not match the trained network {:?}",
            (set.n_r(), set.meta.n_i, set.meta.n_t),
            t.net.dims()
        )));
    }
    let values = per_realization(&t.net, &t.architecture.as_tensor(), &set.realizations, &t.scenario)?;
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    if !mean.is_finite() {
        return Err(Error::NonFinite {
            step: 0,
            lr: 0.0,
            grad_norm: f64::NAN,
        });
    }
    let record = SweepRecord {
        objective: mean,
        runtime_s: started.elapsed().as_secs_f64(),
        ..t.record
    };
    Ok((record, values))
}
