use std::sync::Arc;

use bdris::autodiff::{CMat, Complex64, ComplexMatrix, Tape, Tensor};
use bdris::physics::config::{CouplingConfig, CouplingSource, FadingConfig, LossyConfig, SystemConfig};
use bdris::physics::coupling::{read_impedance, synthetic_impedance, write_impedance};
use bdris::physics::{
    channel_gain, effective_channel_ideal, effective_channel_mc, lossy_admittance,
    susceptance_to_scattering, sum_rate, synth_coupling, synth_realizations, ChannelSet,
    CoupledChannel, Y0,
};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_cmat(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> CMat {
    DMatrix::from_fn(r, c, |_, _| {
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * scale
    })
}

fn random_symmetric(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Tensor {
    let m = Tensor::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0) * scale);
    Tensor::from_fn(n, n, |i, j| m.get(i.max(j), i.min(j)))
}

fn unitarity_error(theta: &CMat) -> f64 {
    let n = theta.nrows();
    (theta.adjoint() * theta - CMat::identity(n, n)).norm()
}

#[test]
fn monte_carlo_power_of_transmitter_link() {
    let sys = SystemConfig {
        n_t: 2,
        n_i: 8,
        users: vec![1],
        realizations: 10_000,
        ..SystemConfig::default()
    };
    let fade = FadingConfig::default();
    let r = synth_realizations(&sys, &fade, 7).unwrap();
    let mean: f64 = r
        .iter()
        .map(|c| c.as_ideal().unwrap().h_it.to_cmat().norm_squared())
        .sum::<f64>()
        / (r.len() * 16) as f64;
    let rel = (mean / fade.g_it() - 1.0).abs();
    assert!(rel < 0.05, "relative deviation {rel}");
}

#[test]
fn published_defaults_accepted_verbatim() {
    let f = FadingConfig::default();
    assert_eq!((f.d_it, f.d_ri, f.d_rt), (50.0, 2.0, 52.0));
    assert_eq!((f.a_it, f.a_ri, f.a_rt), (2.0, 2.8, 3.5));
    assert_eq!(f.c0_db, -30.0);
    f.validate().unwrap();
    let l = LossyConfig::default();
    assert_eq!((l.l1, l.l2, l.c_min, l.c_max), (6e-9, 0.7e-9, 0.35e-12, 3.20e-12));
    l.validate().unwrap();
}

#[test]
fn lossless_scattering_is_unitary_and_symmetric() {
    let tape = Tape::new();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..200 {
        let n = rng.random_range(1..9);
        let b = random_symmetric(&mut rng, n, 5.0 * Y0);
        let theta = susceptance_to_scattering(&tape, &b).unwrap().to_cmat();
        assert!(unitarity_error(&theta) <= 1e-10);
        assert!((&theta - theta.transpose()).norm() <= 1e-12);
    }
}

#[test]
fn ideal_cascade_matches_dense_product() {
    let tape = Tape::new();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..10 {
        let (h_rt, h_ri, h_it, th) = (
            random_cmat(&mut rng, 2, 2, 1.0),
            random_cmat(&mut rng, 2, 2, 1.0),
            random_cmat(&mut rng, 2, 2, 1.0),
            random_cmat(&mut rng, 2, 2, 1.0),
        );
        let ch = bdris::physics::IdealChannel {
            h_rt: ComplexMatrix::from_cmat(&h_rt),
            h_ri: ComplexMatrix::from_cmat(&h_ri),
            h_it: ComplexMatrix::from_cmat(&h_it),
        };
        let got = effective_channel_ideal(&tape, &ch, &ComplexMatrix::from_cmat(&th))
            .unwrap()
            .to_cmat();
        let oracle = &h_rt + &h_ri * &th * &h_it;
        assert!((got - oracle).norm() < 1e-13);

        let zero = effective_channel_ideal(&tape, &ch, &ComplexMatrix::zeros(2, 2)).unwrap();
        assert_eq!(zero.to_cmat(), h_rt);
    }
}

fn coupled(rng: &mut ChaCha8Rng, y_ii: CMat, n_r: usize, n_i: usize, n_t: usize) -> CoupledChannel {
    CoupledChannel::new(
        Arc::new(y_ii),
        random_cmat(rng, n_i, n_t, Y0),
        random_cmat(rng, n_r, n_i, Y0),
        random_cmat(rng, n_r, n_t, Y0),
    )
    .unwrap()
}

#[test]
fn decoupled_surface_reduces_exactly() {
    let tape = Tape::new();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for n in 1..9 {
        let ch = coupled(&mut rng, CMat::identity(n, n) * Complex64::from(Y0), 2, n, 2);
        let b = random_symmetric(&mut rng, n, 3.0 * Y0);
        let out = effective_channel_mc(&tape, &ch, &b).unwrap();
        assert_eq!(out.b_prime.to_vec(), b.to_vec());
    }
}

#[test]
fn coupled_scattering_is_unitary() {
    let tape = Tape::new();
    let z = synthetic_impedance(16, &CouplingConfig::default()).unwrap();
    let y_ii = z.try_inverse().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let ch = coupled(&mut rng, y_ii.clone(), 1, 16, 1);
        let b = random_symmetric(&mut rng, 16, 3.0 * Y0);
        let out = effective_channel_mc(&tape, &ch, &b).unwrap();
        let theta = out.theta.to_cmat();
        assert!(unitarity_error(&theta) <= 1e-10);
        assert!((&theta - theta.transpose()).norm() <= 1e-12);
    }
}

#[test]
fn one_element_chain_by_hand() {
    let y_ii = Complex64::new(0.015, -0.004);
    let y_it = Complex64::new(1e-3, 2e-3);
    let y_ri = Complex64::new(-3e-3, 1e-3);
    let y_rt = Complex64::new(2e-4, -1e-4);
    let b_bar = 0.011;

    // Oracle: scalar algebra written out directly.
    let r = y_ii.re;
    let ybar_ri = y_ri * (Y0 / r).sqrt();
    let ybar_it = y_it * (Y0 / r).sqrt();
    let s_rt = -(y_rt - ybar_ri * ybar_it / (2.0 * Y0)) / (2.0 * Y0);
    let s_ri = -ybar_ri / (2.0 * Y0);
    let s_it = -ybar_it / (2.0 * Y0);
    let b_prime = Y0 * (b_bar + y_ii.im) / r;
    let j = Complex64::new(0.0, 1.0);
    let theta = (Y0 - j * b_prime) / (Y0 + j * b_prime);
    let oracle = s_rt + s_ri * theta * s_it;

    let one = |z: Complex64| CMat::from_element(1, 1, z);
    let ch = CoupledChannel::new(Arc::new(one(y_ii)), one(y_it), one(y_ri), one(y_rt)).unwrap();
    let tape = Tape::new();
    let out = effective_channel_mc(&tape, &ch, &Tensor::scalar(b_bar)).unwrap();
    let got = out.h.to_cmat()[(0, 0)];
    assert!((got - oracle).norm() <= 1e-12 * oracle.norm(), "{got} vs {oracle}");
    assert!((out.b_prime.item() - b_prime).abs() <= 1e-12 * b_prime.abs());
}

fn random_architecture(rng: &mut ChaCha8Rng, n: usize) -> Tensor {
    let bits: Vec<bool> = (0..n * n).map(|_| rng.random_bool(0.5)).collect();
    Tensor::from_fn(n, n, |i, j| {
        if i == j || bits[i.max(j) * n + i.min(j)] {
            1.0
        } else {
            0.0
        }
    })
}

#[test]
fn lossy_scattering_is_passive() {
    let tape = Tape::new();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let n = rng.random_range(1..9);
        let cfg = LossyConfig {
            r: rng.random_range(0.0..5.0),
            ..LossyConfig::default()
        };
        let a = random_architecture(&mut rng, n);
        let c = random_symmetric(&mut rng, n, 1.0)
            .map(|v| cfg.c_min + (cfg.c_max - cfg.c_min) * (v + 1.0) / 2.0);
        let (y, theta) = lossy_admittance(&tape, &c, &a, &cfg).unwrap();
        let sv = theta.to_cmat().singular_values().max();
        assert!(sv <= 1.0 + 1e-9, "max singular value {sv}");
        let y = y.to_cmat();
        assert!((&y - y.transpose()).norm() == 0.0);
    }
}

#[test]
fn sum_rate_two_single_antenna_users() {
    let tape = Tape::new();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..20 {
        let h = random_cmat(&mut rng, 2, 2, 1.0);
        let p = random_cmat(&mut rng, 2, 2, 1.0);
        let sigma2 = 0.3;
        let hp = &h * &p;
        let oracle: f64 = (0..2)
            .map(|k| {
                let s = hp[(k, k)].norm_sqr();
                let i = hp[(k, 1 - k)].norm_sqr();
                (1.0 + s / (i + sigma2)).log2()
            })
            .sum();
        let got = sum_rate(
            &tape,
            &ComplexMatrix::from_cmat(&p),
            &ComplexMatrix::from_cmat(&h),
            &[1, 1],
            sigma2,
        )
        .unwrap()
        .item();
        assert!((got - oracle).abs() <= 1e-12 * oracle, "{got} vs {oracle}");
    }
}

#[test]
fn sum_rate_invariant_to_per_user_rotation() {
    let tape = Tape::new();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let h = random_cmat(&mut rng, 4, 3, 1.0);
    let p = random_cmat(&mut rng, 3, 4, 1.0);
    let q1 = random_cmat(&mut rng, 2, 2, 1.0).qr().q();
    let q2 = random_cmat(&mut rng, 2, 2, 1.0).qr().q();
    let mut rot = CMat::zeros(4, 4);
    rot.view_mut((0, 0), (2, 2)).copy_from(&q1);
    rot.view_mut((2, 2), (2, 2)).copy_from(&q2);
    let rate = |p: &CMat| {
        sum_rate(
            &tape,
            &ComplexMatrix::from_cmat(p),
            &ComplexMatrix::from_cmat(&h),
            &[2, 2],
            0.5,
        )
        .unwrap()
        .item()
    };
    let (a, b) = (rate(&p), rate(&(&p * rot)));
    assert!((a - b).abs() < 1e-12 * a);
}

#[test]
fn gain_is_entrywise_sum() {
    let tape = Tape::new();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let h = random_cmat(&mut rng, 3, 5, 1.0);
    let oracle: f64 = h.iter().map(|z| z.re * z.re + z.im * z.im).sum();
    let got = channel_gain(&tape, &ComplexMatrix::from_cmat(&h)).unwrap().item();
    assert!((got - oracle).abs() < 1e-13 * oracle);
}

#[test]
fn channel_files_round_trip_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let sys = SystemConfig {
        n_t: 2,
        n_i: 8,
        users: vec![1, 1],
        realizations: 3,
        ..SystemConfig::default()
    };
    let fade = FadingConfig::default();
    for (name, r) in [
        ("ideal.bin", synth_realizations(&sys, &fade, 1).unwrap()),
        (
            "mc.bin",
            synth_coupling(&sys, &fade, &CouplingConfig::default(), 1).unwrap(),
        ),
    ] {
        let set = ChannelSet::new(r, sys.users.clone(), 1, "abc".into()).unwrap();
        let path = dir.path().join(name);
        set.write(&path).unwrap();
        let back = ChannelSet::read(&path).unwrap();
        assert_eq!(back.meta, set.meta);
        assert_eq!(back.to_container(), set.to_container());
        for (x, y) in back.realizations.iter().zip(&set.realizations) {
            assert_eq!(x.input_blocks(), y.input_blocks());
        }
        let mut csv = Vec::new();
        set.write_csv(&mut csv).unwrap();
        assert!(String::from_utf8(csv).unwrap().starts_with("realization,block"));
    }
}

#[test]
fn coupling_file_source_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("z.bin");
    let z = synthetic_impedance(8, &CouplingConfig::default()).unwrap();
    write_impedance(&path, &z).unwrap();
    assert_eq!(read_impedance(&path).unwrap(), z);

    let sys = SystemConfig {
        realizations: 2,
        ..SystemConfig::default()
    };
    let fade = FadingConfig::default();
    let from_file = CouplingConfig {
        source: CouplingSource::File {
            path: path.to_string_lossy().into(),
        },
        ..CouplingConfig::default()
    };
    let a = synth_coupling(&sys, &fade, &from_file, 4).unwrap();
    let b = synth_coupling(&sys, &fade, &CouplingConfig::default(), 4).unwrap();
    assert_eq!(a[1].input_blocks(), b[1].input_blocks());

    std::fs::write(&path, b"junk").unwrap();
    assert!(synth_coupling(&sys, &fade, &from_file, 4).is_err());
}
