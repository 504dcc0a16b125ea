#![allow(dead_code)]

use bdris::features::FeatureScale;
use bdris::generator::GeneratorConfig;
use bdris::optimizer::{Metric, OptimizerConfig, Scenario};
use bdris::physics::{
    synth_realizations, ChannelRealization, FadingConfig, LossyConfig, SystemConfig,
};

pub fn small_optimizer(w: usize) -> OptimizerConfig {
    OptimizerConfig {
        ne_width: w,
        gc_width: w,
        rfc_width: 2 * w,
        pfc_width: w,
        ..OptimizerConfig::default()
    }
}

pub fn small_generator(w: usize) -> GeneratorConfig {
    GeneratorConfig {
        layers: 2,
        width: 2 * w,
    }
}

pub fn siso(n_i: usize, n: usize, seed: u64) -> (SystemConfig, Vec<ChannelRealization>) {
    let sys = SystemConfig {
        n_t: 1,
        n_i,
        users: vec![1],
        realizations: n,
        ..SystemConfig::default()
    };
    let data = synth_realizations(&sys, &FadingConfig::default(), seed).unwrap();
    (sys, data)
}

pub fn scenario(sys: &SystemConfig, data: &[ChannelRealization]) -> Scenario {
    let scale = FeatureScale::from_realizations(data);
    let metric = Metric::default_for(&sys.users);
    Scenario {
        users: sys.users.clone(),
        powers: sys.powers(),
        lossy: LossyConfig::default(),
        scale,
        metric,
        loss_scale: Scenario::default_loss_scale(metric, &scale, sys.n_i, sys.n_t, sys.n_r()),
    }
}

/// `(sum_i |h_i| |g_i|)^2` averaged over ideal SU-SISO realizations.
pub fn phase_alignment_bound(data: &[ChannelRealization]) -> f64 {
    data.iter()
        .map(|r| {
            let c = r.as_ideal().unwrap();
            let (h, g) = (c.h_it.to_cmat(), c.h_ri.to_cmat());
            let s: f64 = (0..h.nrows()).map(|i| h[(i, 0)].norm() * g[(0, i)].norm()).sum();
            s * s
        })
        .sum::<f64>()
        / data.len() as f64
}
