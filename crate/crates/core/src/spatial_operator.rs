//! Skew-symmetric spatial operators `A` and the 1-D difference pair that builds them.

use nalgebra::DMatrix;
use rustfft::num_complex::Complex;

use crate::error::{shape_err, Error, Result};
use crate::linalg::spectral_norm;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkewReport<T> {
    pub ok: bool,
    /// `‖A + Aᵀ‖`.
    pub defect: T,
}

pub fn check_skew<T: Real>(a: &DMatrix<T>, tol: T) -> Result<SkewReport<T>> {
    if !a.is_square() {
        return Err(shape_err("check_skew", "square matrix", format!("{}x{}", a.nrows(), a.ncols())));
    }
    let defect = spectral_norm(&(a + a.transpose()));
    Ok(SkewReport {
        ok: defect <= tol,
        defect,
    })
}

/// Skew-symmetric matrix, validated on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SkewOperator<T: Real> {
    matrix: DMatrix<T>,
}

impl<T: Real> SkewOperator<T> {
    /// Accepts `a` if `‖A + Aᵀ‖ ≤ 1e-12·max(1, ‖A‖)`.
    pub fn new(a: DMatrix<T>) -> Result<Self> {
        let tol = T::lit(1e-12).max(T::default_epsilon() * T::lit(16.0)) * T::one().max(spectral_norm(&a));
        let r = check_skew(&a, tol)?;
        if !r.ok {
            return Err(Error::InvalidArgument(format!("operator is not skew: defect {:e}", r.defect)));
        }
        Ok(Self { matrix: a })
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            matrix: DMatrix::zeros(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.matrix
    }

    /// Eigenvalues, which lie on the imaginary axis up to solver accuracy.
    pub fn eigenvalues(&self) -> Vec<Complex<T>> {
        self.matrix
            .clone()
            .complex_eigenvalues()
            .iter()
            .map(|z| Complex::new(z.re, z.im))
            .collect()
    }
}

/// `[[0, Cᵀ], [−C, 0]]` for a `p × q` block `C`; the result has size `q + p`.
pub fn make_block_skew<T: Real>(c: &DMatrix<T>) -> SkewOperator<T> {
    let (p, q) = c.shape();
    let mut a = DMatrix::zeros(p + q, p + q);
    a.view_mut((0, q), (q, p)).copy_from(&c.transpose());
    a.view_mut((q, 0), (p, q)).copy_from(&(-c));
    SkewOperator { matrix: a }
}

/// Forward difference on `m` cells with a zero ghost value to the right:
/// `(Du)_j = (u_{j+1} − u_j)/dx`, `u_m = 0`. The divergence is `−Dᵀ`.
pub fn grad_1d_dirichlet<T: Real>(m: usize, dx: T) -> Result<DMatrix<T>> {
    if m < 2 {
        return Err(Error::InvalidArgument(format!("gradient needs m >= 2 cells, got {m}")));
    }
    if !(dx > T::zero()) {
        return Err(Error::InvalidArgument(format!("gradient needs dx > 0, got {dx}")));
    }
    let inv = T::one() / dx;
    let mut d = DMatrix::zeros(m, m);
    for j in 0..m {
        d[(j, j)] = -inv;
        if j + 1 < m {
            d[(j, j + 1)] = inv;
        }
    }
    Ok(d)
}

/// `−Dᵀ`.
pub fn div_1d_dirichlet<T: Real>(m: usize, dx: T) -> Result<DMatrix<T>> {
    Ok(-grad_1d_dirichlet(m, dx)?.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, DVector};

    #[test]
    fn check_skew_cases() {
        assert!(check_skew(&DMatrix::<f64>::zeros(3, 3), 0.0).unwrap().ok);
        let r = check_skew(&DMatrix::<f64>::identity(3, 3), 1e-12).unwrap();
        assert!(!r.ok && (r.defect - 2.0).abs() < 1e-14);
        assert!(check_skew(&DMatrix::<f64>::zeros(2, 3), 0.0).is_err());
        assert!(SkewOperator::new(DMatrix::<f64>::identity(2, 2)).is_err());
    }

    #[test]
    fn block_skew_rotation() {
        let a = make_block_skew(&dmatrix![1.0f64]);
        assert_eq!(a.matrix(), &dmatrix![0.0, 1.0; -1.0, 0.0]);
        let mut ev: Vec<f64> = a.eigenvalues().iter().map(|z| z.im).collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((ev[0] + 1.0).abs() < 1e-12 && (ev[1] - 1.0).abs() < 1e-12);
        assert!(a.eigenvalues().iter().all(|z| z.re.abs() < 1e-12));
        assert_eq!(make_block_skew(&DMatrix::<f64>::zeros(2, 3)).matrix(), &DMatrix::zeros(5, 5));
    }

    #[test]
    fn gradient_of_linear_samples() {
        let m = 10;
        let dx = 0.1;
        let d = grad_1d_dirichlet(m, dx).unwrap();
        let u = DVector::from_fn(m, |j, _| 3.0 * j as f64 * dx);
        let du = &d * u;
        for j in 0..m - 1 {
            assert!((du[j] - 3.0).abs() < 1e-12);
        }
        assert_eq!(div_1d_dirichlet(m, dx).unwrap(), -d.transpose());
        assert!(grad_1d_dirichlet::<f64>(1, 0.1).is_err());
        assert!(grad_1d_dirichlet::<f64>(4, 0.0).is_err());
    }

    #[test]
    fn block_skew_of_gradient_has_imaginary_spectrum() {
        let d = grad_1d_dirichlet(12, 0.25f64).unwrap();
        let a = make_block_skew(&d);
        assert!(check_skew(a.matrix(), 0.0).unwrap().ok);
        assert!(a.eigenvalues().iter().all(|z| z.re.abs() < 1e-10));
    }
}
