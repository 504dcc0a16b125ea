//! Channel synthesis and the four surface models: ideal, mutually coupled, lossy and
//! discrete (the discrete model reuses the ideal channel with quantized susceptances).

pub mod channel;
pub mod config;
pub mod coupling;
pub mod lossy;
pub mod metrics;
pub mod scattering;
pub mod set;

pub use channel::{synth_realizations, ChannelKind, ChannelRealization, IdealChannel};
pub use config::{CouplingConfig, CouplingSource, FadingConfig, LossyConfig, Powers, SystemConfig};
pub use coupling::{effective_channel_mc, synth_coupling, CoupledChannel, CoupledOutput};
pub use lossy::lossy_admittance;
pub use metrics::{channel_gain, sum_rate};
pub use scattering::{admittance_to_scattering, cascade, susceptance_to_scattering};
pub use set::ChannelSet;

/// Reference impedance (ohm).
pub const Z0: f64 = 50.0;
/// Reference admittance `1 / Z0` (siemens).
pub const Y0: f64 = 1.0 / Z0;
pub const C_LIGHT: f64 = 3.0e8;

use crate::autodiff::{ComplexMatrix, Tape};
use crate::error::Result;

/// `H_RT + H_RI Theta H_IT` for an ideal realization.
pub fn effective_channel_ideal(
    tape: &Tape,
    ch: &IdealChannel,
    theta: &ComplexMatrix,
) -> Result<ComplexMatrix> {
    cascade(tape, &ch.h_rt, &ch.h_ri, theta, &ch.h_it)
}
