mod common;

use bdris::arch::{make_baseline, Architecture, BaselineKind};
use bdris::autodiff::Tape;
use bdris::container::Container;
use bdris::features::build_generator_input;
use bdris::generator::GeneratorNet;
use bdris::optimizer::{Mode, OptimizerNet, Variant};
use bdris::train::{cosine_lr, evaluate, inner_loop, outer_loop, write_trace, Adam, ArchitectureSource, TrainSchedule, Trainer};
use common::{scenario, siso, small_generator, small_optimizer};
use std::path::Path;

fn schedule(inner: usize, epochs: usize, seed: u64) -> TrainSchedule {
    TrainSchedule {
        inner_iters: inner,
        outer_epochs: epochs,
        patience: epochs,
        seed,
        ..TrainSchedule::default()
    }
}

#[test]
fn zero_inner_iterations_return_initial_objective() {
    let (sys, data) = siso(4, 4, 1);
    let sc = scenario(&sys, &data);
    let mut net = OptimizerNet::new(Variant::Ideal, (1, 4, 1), sc.metric, &small_optimizer(8), 0).unwrap();
    let before = net.clone();
    let a = Architecture::fully(4).as_tensor();
    let mut adam = Adam::new(&net.params);
    let s = schedule(0, 1, 0);
    let obj = inner_loop(&mut net, &mut adam, &a, &data, &sc, &s, &mut s.rng(0)).unwrap();
    assert_eq!(net, before);
    assert_eq!(obj, evaluate(&before, &a, &data, &sc).unwrap());
}

#[test]
fn inner_loop_improves_nine_of_ten_seeds() {
    let mut improved = 0;
    for seed in 0..10 {
        let (sys, data) = siso(4, 5, 100 + seed);
        let sc = scenario(&sys, &data);
        let mut net = OptimizerNet::new(Variant::Ideal, (1, 4, 1), sc.metric, &small_optimizer(16), seed).unwrap();
        let a = make_baseline(BaselineKind::Tridiagonal, 4).unwrap().as_tensor();
        let before = evaluate(&net, &a, &data, &sc).unwrap();
        let mut adam = Adam::new(&net.params);
        let s = schedule(50, 1, seed);
        let after = inner_loop(&mut net, &mut adam, &a, &data, &sc, &s, &mut s.rng(0)).unwrap();
        improved += usize::from(after >= before);
    }
    assert!(improved >= 9, "{improved} of 10");
}

#[test]
fn loss_strictly_decreases_over_first_fifty_steps() {
    let (sys, data) = siso(4, 1, 7);
    let sc = scenario(&sys, &data);
    let mut net = OptimizerNet::new(Variant::Ideal, (1, 4, 1), sc.metric, &small_optimizer(16), 3).unwrap();
    let a = Architecture::fully(4).as_tensor();
    let mut adam = Adam::new(&net.params);
    let mut last = f64::INFINITY;
    for step in 0..50 {
        let tape = Tape::new();
        let bound = net.params.bind(&tape);
        let out = net.forward(&tape, &bound, &data[0], &a, &sc, Mode::Train).unwrap();
        let loss = out.loss.item();
        assert!(loss < last, "step {step}: {loss} !< {last}");
        last = loss;
        let grads = net.params.collect(&tape.backward(&out.loss).unwrap(), &bound);
        adam.step(&mut net.params, &grads, cosine_lr(step, 50, 1e-5, 1e-3));
    }
}

#[test]
fn inner_loop_is_deterministic() {
    let (sys, data) = siso(4, 6, 2);
    let sc = scenario(&sys, &data);
    let a = make_baseline(BaselineKind::Arrowhead, 4).unwrap().as_tensor();
    let run = || {
        let mut net = OptimizerNet::new(Variant::Discrete, (1, 4, 1), sc.metric, &small_optimizer(8), 5).unwrap();
        let mut adam = Adam::new(&net.params);
        let s = TrainSchedule {
            batch_size: 3,
            ..schedule(20, 1, 9)
        };
        let obj = inner_loop(&mut net, &mut adam, &a, &data, &sc, &s, &mut s.rng(0)).unwrap();
        (obj.to_bits(), net)
    };
    let (a1, n1) = run();
    let (a2, n2) = run();
    assert_eq!(a1, a2);
    assert_eq!(n1, n2);
}

fn learned(data: &[bdris::physics::ChannelRealization], sc: &bdris::optimizer::Scenario, k_cc: usize, seed: u64) -> ArchitectureSource {
    let x0 = build_generator_input(data, &sc.scale).unwrap();
    let gen = GeneratorNet::new(data[0].dims().1, x0.cols(), &small_generator(8), seed);
    ArchitectureSource::learned(gen, k_cc, data, sc).unwrap()
}

#[test]
fn every_epoch_emits_the_requested_complexity() {
    let (sys, data) = siso(5, 4, 3);
    let sc = scenario(&sys, &data);
    for k_cc in [5, 8, 12, 15] {
        let net = OptimizerNet::new(Variant::Ideal, (1, 5, 1), sc.metric, &small_optimizer(8), 1).unwrap();
        let res = outer_loop(net, learned(&data, &sc, k_cc, 1), &data, sc.clone(), schedule(5, 4, 1)).unwrap();
        assert_eq!(res.trace.len(), 4);
        assert!(res.trace.iter().all(|r| r.k_cc == k_cc));
        assert_eq!(res.best_architecture.circuit_complexity(), k_cc);
        if k_cc == 15 {
            assert_eq!(res.best_architecture, Architecture::fully(5));
        }
        let best = res.trace.iter().map(|r| r.objective).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(res.best_objective, best);
        for w in res.trace.windows(2) {
            assert!(w[1].best_objective >= w[0].best_objective);
        }
    }
}

#[test]
fn patience_zero_runs_one_epoch() {
    let (sys, data) = siso(4, 3, 4);
    let sc = scenario(&sys, &data);
    let net = OptimizerNet::new(Variant::Ideal, (1, 4, 1), sc.metric, &small_optimizer(8), 1).unwrap();
    let s = TrainSchedule {
        patience: 0,
        ..schedule(3, 5, 0)
    };
    let res = outer_loop(net, learned(&data, &sc, 6, 0), &data, sc, s).unwrap();
    assert_eq!(res.trace.len(), 1);
    assert_eq!(res.best_epoch, 0);
}

#[test]
fn frozen_generator_matches_fixed_architecture_path() {
    let (sys, data) = siso(4, 3, 5);
    let sc = scenario(&sys, &data);
    let make = || OptimizerNet::new(Variant::Ideal, (1, 4, 1), sc.metric, &small_optimizer(8), 2).unwrap();
    let full_learned = outer_loop(make(), learned(&data, &sc, 10, 0), &data, sc.clone(), schedule(10, 3, 0)).unwrap();
    let fixed = outer_loop(
        make(),
        ArchitectureSource::Fixed(Architecture::fully(4)),
        &data,
        sc.clone(),
        schedule(10, 3, 0),
    )
    .unwrap();
    let objectives = |r: &bdris::train::TrainResult| r.trace.iter().map(|t| t.objective.to_bits()).collect::<Vec<_>>();
    assert_eq!(objectives(&full_learned), objectives(&fixed));
}

#[test]
fn seeded_runs_have_identical_traces() {
    let (sys, data) = siso(4, 3, 6);
    let sc = scenario(&sys, &data);
    let run = || {
        let net = OptimizerNet::new(Variant::Ideal, (1, 4, 1), sc.metric, &small_optimizer(8), 4).unwrap();
        let res = outer_loop(net, learned(&data, &sc, 7, 4), &data, sc.clone(), schedule(5, 3, 4)).unwrap();
        let mut buf = Vec::new();
        write_trace(&res.trace, &mut buf).unwrap();
        buf
    };
    assert_eq!(run(), run());
}

#[test]
fn checkpoint_resume_is_exact() {
    let (sys, data) = siso(4, 3, 8);
    let sc = scenario(&sys, &data);
    let fresh = || {
        let net = OptimizerNet::new(Variant::Discrete, (1, 4, 1), sc.metric, &small_optimizer(8), 6).unwrap();
        Trainer::new(net, learned(&data, &sc, 7, 6), sc.clone(), schedule(5, 5, 6)).unwrap()
    };
    let straight = fresh().run(&data).unwrap();

    let mut first = fresh();
    first.run_epoch(&data).unwrap();
    first.run_epoch(&data).unwrap();
    let bytes = first.checkpoint().to_bytes();
    let c = Container::from_bytes(&bytes, Path::new("mem")).unwrap();
    let mut resumed = fresh();
    resumed.restore(&c, Path::new("mem")).unwrap();
    let resumed = resumed.run(&data).unwrap();
    assert_eq!(resumed.trace, straight.trace);
    assert_eq!(resumed.optimizer, straight.optimizer);
    assert_eq!(resumed.best_architecture, straight.best_architecture);
}

#[test]
fn invalid_schedules_are_rejected() {
    let (sys, data) = siso(4, 2, 9);
    let sc = scenario(&sys, &data);
    let net = OptimizerNet::new(Variant::Ideal, (1, 4, 1), sc.metric, &small_optimizer(4), 0).unwrap();
    let bad = TrainSchedule {
        patience: 10,
        outer_epochs: 5,
        ..TrainSchedule::default()
    };
    let err = Trainer::new(net, ArchitectureSource::Fixed(Architecture::single(4)), sc, bad).unwrap_err();
    assert!(matches!(err, bdris::Error::Config(_)));
}
