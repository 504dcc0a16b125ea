use bdris::arch::{make_baseline, Architecture, BaselineKind};
use bdris::autodiff::gradcheck::{self, Tolerance};
use bdris::autodiff::{Tape, Tensor};
use bdris::features::FeatureScale;
use bdris::optimizer::{
    gcn_layers, Metric, Mode, OptimizerConfig, OptimizerNet, Scenario, Variant,
};
use bdris::physics::{
    synth_coupling, synth_realizations, ChannelRealization, CouplingConfig, FadingConfig,
    LossyConfig, SystemConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny() -> OptimizerConfig {
    OptimizerConfig {
        ne_width: 6,
        gc_layers: 2,
        gc_width: 5,
        rfc_layers: 2,
        rfc_width: 8,
        pfc_layers: 3,
        pfc_width: 6,
        ..OptimizerConfig::default()
    }
}

fn system(n_t: usize, n_i: usize, users: Vec<usize>) -> SystemConfig {
    SystemConfig {
        n_t,
        n_i,
        users,
        realizations: 3,
        ..SystemConfig::default()
    }
}

fn scenario(sys: &SystemConfig, data: &[ChannelRealization], metric: Metric) -> Scenario {
    let scale = FeatureScale::from_realizations(data);
    Scenario {
        users: sys.users.clone(),
        powers: sys.powers(),
        lossy: LossyConfig::default(),
        scale,
        metric,
        loss_scale: Scenario::default_loss_scale(metric, &scale, sys.n_i, sys.n_t, sys.n_r()),
    }
}

fn random_arch(n: usize, seed: u64) -> Architecture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lower = (0..n * (n - 1) / 2).map(|_| rng.random_bool(0.5)).collect();
    Architecture::from_lower(n, lower).unwrap()
}

fn check_full_network(variant: Variant, data: &[ChannelRealization], sc: &Scenario, seed: u64) {
    let net = OptimizerNet::new(variant, data[0].dims(), sc.metric, &tiny(), seed).unwrap();
    let a = random_arch(data[0].dims().1, seed).as_tensor();
    let r = &data[0];
    let report = gradcheck::check(
        |tape, p| Ok(net.forward(tape, p, r, &a, sc, Mode::Train)?.loss),
        net.params.values(),
        Tolerance::default(),
    )
    .unwrap();
    assert!(report.passed, "{variant}: {report:?}");
    assert_eq!(report.checked, net.params.count());
}

#[test]
fn full_network_gradient_ideal_siso() {
    let sys = system(1, 4, vec![1]);
    let data = synth_realizations(&sys, &FadingConfig::default(), 11).unwrap();
    let sc = scenario(&sys, &data, Metric::Gain);
    for seed in 0..3 {
        check_full_network(Variant::Ideal, &data, &sc, seed);
    }
}

#[test]
fn full_network_gradient_other_variants() {
    let sys = system(1, 4, vec![1]);
    let data = synth_realizations(&sys, &FadingConfig::default(), 12).unwrap();
    let sc = scenario(&sys, &data, Metric::Gain);
    check_full_network(Variant::Lossy, &data, &sc, 4);
    let coupled =
        synth_coupling(&sys, &FadingConfig::default(), &CouplingConfig::default(), 13).unwrap();
    let sc = scenario(&sys, &coupled, Metric::Gain);
    check_full_network(Variant::Mc, &coupled, &sc, 5);
}

#[test]
fn full_network_gradient_multi_user_with_precoder() {
    let sys = system(2, 4, vec![1, 1]);
    let data = synth_realizations(&sys, &FadingConfig::default(), 14).unwrap();
    let sc = scenario(&sys, &data, Metric::Rate);
    check_full_network(Variant::Ideal, &data, &sc, 6);
}

#[test]
fn gradient_with_respect_to_architecture_matrix() {
    let sys = system(1, 4, vec![1]);
    let data = synth_realizations(&sys, &FadingConfig::default(), 15).unwrap();
    let sc = scenario(&sys, &data, Metric::Gain);
    let net = OptimizerNet::new(Variant::Ideal, data[0].dims(), sc.metric, &tiny(), 7).unwrap();
    let a = random_arch(4, 3).as_tensor();
    let report = gradcheck::check(
        |tape, x| Ok(net.forward(tape, net.params.values(), &data[0], &x[0], &sc, Mode::Train)?.loss),
        &[a],
        Tolerance::default(),
    )
    .unwrap();
    assert!(report.passed, "{report:?}");
}

#[test]
fn regressed_matrix_is_symmetric_and_masked() {
    let sys = system(1, 6, vec![1]);
    let data = synth_realizations(&sys, &FadingConfig::default(), 16).unwrap();
    let coupled =
        synth_coupling(&sys, &FadingConfig::default(), &CouplingConfig::default(), 16).unwrap();
    for variant in [Variant::Ideal, Variant::Mc, Variant::Lossy, Variant::Discrete] {
        let set = if variant == Variant::Mc { &coupled } else { &data };
        let sc = scenario(&sys, set, Metric::Gain);
        let net = OptimizerNet::new(variant, set[0].dims(), sc.metric, &tiny(), 8).unwrap();
        for seed in 0..5 {
            let arch = random_arch(6, seed);
            let tape = Tape::new();
            let out = net
                .forward(&tape, net.params.values(), &set[seed as usize % 3], &arch.as_tensor(), &sc, Mode::Eval)
                .unwrap();
            let m = &out.matrix;
            for i in 0..6 {
                for j in 0..6 {
                    assert_eq!(m.get(i, j).to_bits(), m.get(j, i).to_bits());
                    if !arch.get(i, j) {
                        assert_eq!(m.get(i, j), 0.0);
                    }
                }
            }
            if variant == Variant::Lossy {
                let l = LossyConfig::default();
                for i in 0..6 {
                    for j in 0..6 {
                        if arch.get(i, j) {
                            let c = m.get(i, j);
                            assert!(c >= l.c_min && c <= l.c_max, "{c}");
                        }
                    }
                }
            }
            if variant == Variant::Discrete {
                let codes = net.codebook().unwrap().values(&net.params);
                for v in m.data() {
                    assert!(*v == 0.0 || codes.iter().any(|c| (c * bdris::physics::Y0 - v).abs() == 0.0));
                }
            }
        }
    }
}

#[test]
fn single_connected_mask_is_diagonal() {
    let sys = system(1, 5, vec![1]);
    let data = synth_realizations(&sys, &FadingConfig::default(), 17).unwrap();
    let sc = scenario(&sys, &data, Metric::Gain);
    let net = OptimizerNet::new(Variant::Ideal, data[0].dims(), sc.metric, &tiny(), 9).unwrap();
    let a = make_baseline(BaselineKind::Single, 5).unwrap().as_tensor();
    let out = net.forward(&Tape::new(), net.params.values(), &data[0], &a, &sc, Mode::Eval).unwrap();
    for i in 0..5 {
        for j in 0..5 {
            if i != j {
                assert_eq!(out.matrix.get(i, j), 0.0);
            }
        }
    }
}

#[test]
fn gcn_identity_and_equivariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = Tensor::from_fn(5, 3, |_, _| rng.random_range(-1.0..1.0));
    let w = Tensor::from_fn(3, 4, |_, _| rng.random_range(-1.0..1.0));
    let tape = Tape::new();
    let plain = tape.relu(&tape.matmul(&x, &w).unwrap());
    let out = gcn_layers(&tape, &Tensor::eye(5), &x, [&w]).unwrap();
    assert_eq!(out, plain);

    let arch = random_arch(5, 2);
    let a = arch.as_tensor();
    let perm = [3usize, 0, 4, 1, 2];
    let pa = Tensor::from_fn(5, 5, |i, j| a.get(perm[i], perm[j]));
    let px = Tensor::from_fn(5, 3, |i, j| x.get(perm[i], j));
    let base = gcn_layers(&tape, &a, &x, [&w, &Tensor::eye(4)]).unwrap();
    let permuted = gcn_layers(&tape, &pa, &px, [&w, &Tensor::eye(4)]).unwrap();
    for i in 0..5 {
        for j in 0..4 {
            assert!((permuted.get(i, j) - base.get(perm[i], j)).abs() < 1e-14);
        }
    }

    let constant = Tensor::from_fn(5, 3, |_, j| j as f64 - 0.5);
    let out = gcn_layers(&tape, &Tensor::ones(5, 5), &constant, [&w, &Tensor::eye(4)]).unwrap();
    for i in 1..5 {
        for j in 0..4 {
            assert!((out.get(i, j) - out.get(0, j)).abs() < 1e-14);
        }
    }
}

#[test]
fn zero_channel_gives_zero_loss() {
    let sys = system(1, 4, vec![1]);
    let mut data = synth_realizations(&sys, &FadingConfig::default(), 18).unwrap();
    if let ChannelRealization::Ideal(ch) = &mut data[0] {
        ch.h_it = bdris::autodiff::ComplexMatrix::zeros(4, 1);
    }
    let sc = scenario(&sys, &data[1..], Metric::Gain);
    let net = OptimizerNet::new(Variant::Ideal, (1, 4, 1), sc.metric, &tiny(), 1).unwrap();
    let out = net
        .forward(&Tape::new(), net.params.values(), &data[0], &Tensor::eye(4), &sc, Mode::Eval)
        .unwrap();
    assert_eq!(out.loss.item(), 0.0);
}

#[test]
fn variant_channel_mismatch_is_contract_error() {
    let sys = system(1, 4, vec![1]);
    let data = synth_realizations(&sys, &FadingConfig::default(), 19).unwrap();
    let sc = scenario(&sys, &data, Metric::Gain);
    let net = OptimizerNet::new(Variant::Mc, (1, 4, 1), sc.metric, &tiny(), 1).unwrap();
    let err = net
        .forward(&Tape::new(), net.params.values(), &data[0], &Tensor::eye(4), &sc, Mode::Eval)
        .unwrap_err();
    assert!(matches!(err, bdris::Error::Contract(_)));
}
