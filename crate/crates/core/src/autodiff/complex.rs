//! Complex matrices carried as `(re, im)` pairs of real tensors.
//!
//! Every complex operation is composed from real tape ops, so gradients with respect
//! to real and imaginary parts come out of the ordinary real reverse pass. Inversion
//! and log-determinants go through the real embedding `[[re, -im], [im, re]]`.

use std::f64::consts::LN_2;

use nalgebra::{Complex, DMatrix};

use super::{Tape, Tensor};
use crate::error::{Error, Result};

pub type Complex64 = Complex<f64>;
pub type CMat = DMatrix<Complex64>;

#[derive(Clone, Debug, PartialEq)]
pub struct ComplexMatrix {
    pub re: Tensor,
    pub im: Tensor,
}

impl ComplexMatrix {
    pub fn new(re: Tensor, im: Tensor) -> Result<Self> {
        if re.shape() != im.shape() {
            return Err(Error::Dimension {
                op: "complex",
                lhs: re.shape(),
                rhs: im.shape(),
            });
        }
        Ok(Self { re, im })
    }

    pub fn real(re: Tensor) -> Self {
        let im = Tensor::zeros(re.rows(), re.cols());
        Self { re, im }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::real(Tensor::zeros(rows, cols))
    }

    pub fn eye(n: usize) -> Self {
        Self::real(Tensor::eye(n))
    }

    /// Constant copy of a dense complex matrix.
    pub fn from_cmat(m: &CMat) -> Self {
        let (r, c) = m.shape();
        Self {
            re: Tensor::from_fn(r, c, |i, j| m[(i, j)].re),
            im: Tensor::from_fn(r, c, |i, j| m[(i, j)].im),
        }
    }

    pub fn to_cmat(&self) -> CMat {
        DMatrix::from_fn(self.rows(), self.cols(), |i, j| {
            Complex64::new(self.re.get(i, j), self.im.get(i, j))
        })
    }

    pub fn rows(&self) -> usize {
        self.re.rows()
    }

    pub fn cols(&self) -> usize {
        self.re.cols()
    }

    pub fn shape(&self) -> [usize; 2] {
        self.re.shape()
    }

    pub fn detach(&self) -> Self {
        Self {
            re: self.re.detach(),
            im: self.im.detach(),
        }
    }
}

impl Tape {
    pub fn cadd(&self, a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
        Ok(ComplexMatrix {
            re: self.add(&a.re, &b.re)?,
            im: self.add(&a.im, &b.im)?,
        })
    }

    pub fn csub(&self, a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
        Ok(ComplexMatrix {
            re: self.sub(&a.re, &b.re)?,
            im: self.sub(&a.im, &b.im)?,
        })
    }

    pub fn cscale(&self, a: &ComplexMatrix, c: f64) -> ComplexMatrix {
        ComplexMatrix {
            re: self.scale(&a.re, c),
            im: self.scale(&a.im, c),
        }
    }

    /// Multiplies by `j`.
    pub fn cmul_j(&self, a: &ComplexMatrix) -> ComplexMatrix {
        ComplexMatrix {
            re: self.neg(&a.im),
            im: a.re.clone(),
        }
    }

    pub fn cmatmul(&self, a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
        let rr = self.matmul(&a.re, &b.re)?;
        let ii = self.matmul(&a.im, &b.im)?;
        let ri = self.matmul(&a.re, &b.im)?;
        let ir = self.matmul(&a.im, &b.re)?;
        Ok(ComplexMatrix {
            re: self.sub(&rr, &ii)?,
            im: self.add(&ri, &ir)?,
        })
    }

    pub fn ctranspose(&self, a: &ComplexMatrix) -> ComplexMatrix {
        ComplexMatrix {
            re: self.transpose(&a.re),
            im: self.transpose(&a.im),
        }
    }

    /// Conjugate transpose.
    pub fn cadjoint(&self, a: &ComplexMatrix) -> ComplexMatrix {
        ComplexMatrix {
            re: self.transpose(&a.re),
            im: self.neg(&self.transpose(&a.im)),
        }
    }

    /// Real `2n x 2n` embedding `[[re, -im], [im, re]]`.
    pub fn cembed(&self, a: &ComplexMatrix) -> Result<Tensor> {
        let neg_im = self.neg(&a.im);
        let top = self.hcat(&[&a.re, &neg_im])?;
        let bottom = self.hcat(&[&a.im, &a.re])?;
        self.vcat(&[&top, &bottom])
    }

    fn block(&self, m: &Tensor, r0: usize, c0: usize, n: usize) -> Result<Tensor> {
        let stride = m.cols();
        let idx = (0..n)
            .flat_map(|i| (0..n).map(move |j| Some((r0 + i) * stride + c0 + j)))
            .collect();
        self.gather(m, n, n, idx)
    }

    pub fn cinverse(&self, a: &ComplexMatrix) -> Result<ComplexMatrix> {
        let n = a.rows();
        if a.cols() != n {
            return Err(Error::Dimension {
                op: "complex_inverse",
                lhs: a.shape(),
                rhs: a.shape(),
            });
        }
        let inv = self.inverse(&self.cembed(a)?)?;
        Ok(ComplexMatrix {
            re: self.block(&inv, 0, 0, n)?,
            im: self.block(&inv, n, 0, n)?,
        })
    }

    /// `log2 det(A)` for Hermitian positive definite `A`.
    ///
    /// The embedding of a Hermitian matrix is real symmetric with determinant
    /// `det(A)^2`, hence the factor one half.
    pub fn clogdet2_hpd(&self, a: &ComplexMatrix) -> Result<Tensor> {
        let ld = self.logdet_spd(&self.cembed(a)?)?;
        Ok(self.scale(&ld, 0.5 / LN_2))
    }

    /// Squared Frobenius norm as a `1 x 1` tensor.
    pub fn cnorm_sq(&self, a: &ComplexMatrix) -> Result<Tensor> {
        let rr = self.sum_all(&self.mul(&a.re, &a.re)?);
        let ii = self.sum_all(&self.mul(&a.im, &a.im)?);
        self.add(&rr, &ii)
    }

    /// Rows `r0..r1` of `a`.
    pub fn crows(&self, a: &ComplexMatrix, r0: usize, r1: usize) -> Result<ComplexMatrix> {
        let c = a.cols();
        let idx: Vec<Option<usize>> = (r0 * c..r1 * c).map(Some).collect();
        Ok(ComplexMatrix {
            re: self.gather(&a.re, r1 - r0, c, idx.clone())?,
            im: self.gather(&a.im, r1 - r0, c, idx)?,
        })
    }

    /// Columns `c0..c1` of `a`.
    pub fn ccols(&self, a: &ComplexMatrix, c0: usize, c1: usize) -> Result<ComplexMatrix> {
        let (r, c) = (a.rows(), a.cols());
        let idx: Vec<Option<usize>> = (0..r)
            .flat_map(|i| (c0..c1).map(move |j| Some(i * c + j)))
            .collect();
        Ok(ComplexMatrix {
            re: self.gather(&a.re, r, c1 - c0, idx.clone())?,
            im: self.gather(&a.im, r, c1 - c0, idx)?,
        })
    }
}
