//! Dense real kernels backing the differentiable inverse and log-determinant.

use crate::error::{Error, Result};

/// Condition estimates above this are reported as singular.
pub const CONDITION_LIMIT: f64 = 1e12;

fn norm1(a: &[f64], n: usize) -> f64 {
    (0..n)
        .map(|j| (0..n).map(|i| a[i * n + j].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Inverse of a square row-major matrix by LU with partial pivoting.
///
/// Returns the inverse together with the 1-norm condition number `‖A‖₁‖A⁻¹‖₁`.
pub fn invert(a: &[f64], n: usize) -> Result<(Vec<f64>, f64)> {
    let mut lu = a.to_vec();
    let mut perm: Vec<usize> = (0..n).collect();
    for k in 0..n {
        let (p, pivot) = (k..n)
            .map(|i| (i, lu[i * n + k].abs()))
            .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pivot == 0.0 || !pivot.is_finite() {
            return Err(Error::Singular { cond: f64::INFINITY });
        }
        if p != k {
            for j in 0..n {
                lu.swap(k * n + j, p * n + j);
            }
            perm.swap(k, p);
        }
        let d = lu[k * n + k];
        for i in k + 1..n {
            let f = lu[i * n + k] / d;
            lu[i * n + k] = f;
            if f != 0.0 {
                for j in k + 1..n {
                    lu[i * n + j] -= f * lu[k * n + j];
                }
            }
        }
    }

    let mut inv = vec![0.0; n * n];
    let mut col = vec![0.0; n];
    for c in 0..n {
        for i in 0..n {
            col[i] = if perm[i] == c { 1.0 } else { 0.0 };
        }
        for i in 0..n {
            let mut s = col[i];
            for j in 0..i {
                s -= lu[i * n + j] * col[j];
            }
            col[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = col[i];
            for j in i + 1..n {
                s -= lu[i * n + j] * col[j];
            }
            col[i] = s / lu[i * n + i];
        }
        for i in 0..n {
            inv[i * n + c] = col[i];
        }
    }

    let cond = norm1(a, n) * norm1(&inv, n);
    if !cond.is_finite() || cond > CONDITION_LIMIT {
        return Err(Error::Singular { cond });
    }
    Ok((inv, cond))
}

/// Lower Cholesky factor of a symmetric positive definite matrix.
pub fn cholesky(a: &[f64], n: usize) -> Result<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= l[j * n + k] * l[j * n + k];
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::Domain(format!(
                "matrix is not positive definite (pivot {j} = {d:e})"
            )));
        }
        let d = d.sqrt();
        l[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / d;
        }
    }
    Ok(l)
}

/// Natural log-determinant of a symmetric positive definite matrix.
pub fn logdet_spd(a: &[f64], n: usize) -> Result<f64> {
    let l = cholesky(a, n)?;
    Ok((0..n).map(|i| l[i * n + i].ln()).sum::<f64>() * 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_of_two_by_two() {
        let (inv, _) = invert(&[4.0, 7.0, 2.0, 6.0], 2).unwrap();
        let expect = [0.6, -0.7, -0.2, 0.4];
        for (a, b) in inv.iter().zip(expect) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn singular_matrix_is_rejected() {
        assert!(matches!(
            invert(&[1.0, 2.0, 2.0, 4.0], 2),
            Err(Error::Singular { .. })
        ));
        assert!(matches!(
            invert(&[1.0, 0.0, 0.0, 1e-14], 2),
            Err(Error::Singular { .. })
        ));
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        assert!(matches!(
            logdet_spd(&[1.0, 2.0, 2.0, 1.0], 2),
            Err(Error::Domain(_))
        ));
        let ld = logdet_spd(&[2.0, 0.0, 0.0, 2.0], 2).unwrap();
        assert!((ld - 4f64.ln()).abs() < 1e-14);
    }
}
