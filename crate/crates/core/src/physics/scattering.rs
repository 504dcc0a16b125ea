//! Admittance to scattering map and the ideal cascaded channel.

use super::Y0;
use crate::autodiff::{ComplexMatrix, Tape, Tensor};
use crate::error::{Error, Result};

/// `Theta = (Y0 I + Y)^-1 (Y0 I - Y)`.
pub fn admittance_to_scattering(tape: &Tape, y: &ComplexMatrix) -> Result<ComplexMatrix> {
    let n = y.rows();
    if y.cols() != n {
        return Err(Error::Dimension {
            op: "admittance_to_scattering",
            lhs: y.shape(),
            rhs: y.shape(),
        });
    }
    let y0 = ComplexMatrix::real(Tensor::eye(n).map(|v| v * Y0));
    let plus = tape.cadd(&y0, y)?;
    let minus = tape.csub(&y0, y)?;
    tape.cmatmul(&tape.cinverse(&plus)?, &minus)
}

/// Lossless case `Y = jB`.
pub fn susceptance_to_scattering(tape: &Tape, b: &Tensor) -> Result<ComplexMatrix> {
    let y = ComplexMatrix::new(Tensor::zeros(b.rows(), b.cols()), b.clone())?;
    admittance_to_scattering(tape, &y)
}

/// `H_RT + H_RI Theta H_IT`.
pub fn cascade(
    tape: &Tape,
    h_rt: &ComplexMatrix,
    h_ri: &ComplexMatrix,
    theta: &ComplexMatrix,
    h_it: &ComplexMatrix,
) -> Result<ComplexMatrix> {
    let reflected = tape.cmatmul(&tape.cmatmul(h_ri, theta)?, h_it)?;
    tape.cadd(h_rt, &reflected)
}
