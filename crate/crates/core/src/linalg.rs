//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::scalar::Real;

/// `½(X + Xᵀ)`.
pub fn sym_part<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    (m + m.transpose()) * T::lit(0.5)
}

fn is_diagonal<T: Real>(m: &DMatrix<T>) -> bool {
    m.iter()
        .enumerate()
        .all(|(idx, v)| idx % m.nrows() == idx / m.nrows() || *v == T::zero())
}

/// Smallest eigenvalue of the symmetrized matrix. Diagonal input skips the eigensolver.
pub fn min_eig_sym<T: Real>(m: &DMatrix<T>) -> T {
    if m.nrows() == 0 {
        return T::max_value().unwrap_or_else(|| T::lit(f64::MAX));
    }
    let s = sym_part(m);
    if is_diagonal(&s) {
        return s.diagonal().iter().copied().fold(s[(0, 0)], |a, b| a.min(b));
    }
    let eig = SymmetricEigen::new(s);
    eig.eigenvalues.iter().copied().fold(eig.eigenvalues[0], |a, b| a.min(b))
}

/// Largest singular value.
pub fn spectral_norm<T: Real>(m: &DMatrix<T>) -> T {
    if m.nrows() == 0 || m.ncols() == 0 {
        return T::zero();
    }
    if is_square_diagonal(m) {
        return m.diagonal().iter().fold(T::zero(), |a, b| a.max(b.abs()));
    }
    m.singular_values().iter().copied().fold(T::zero(), |a, b| a.max(b))
}

fn is_square_diagonal<T: Real>(m: &DMatrix<T>) -> bool {
    m.nrows() == m.ncols() && is_diagonal(m)
}

/// Max-abs entry, used for exact-structure comparisons.
pub fn max_abs<T: Real>(m: &DMatrix<T>) -> T {
    m.iter().fold(T::zero(), |a, b| a.max(b.abs()))
}

/// Inverse of a symmetric positive definite block; reports the offending eigenvalue otherwise.
pub fn spd_inverse<T: Real>(m: &DMatrix<T>, what: &'static str) -> crate::Result<DMatrix<T>> {
    if m.nrows() == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let lam = min_eig_sym(m);
    if lam <= T::zero() {
        return Err(crate::Error::Singular {
            what,
            min_eigenvalue: lam.as_f64(),
        });
    }
    m.clone().try_inverse().ok_or(crate::Error::Singular {
        what,
        min_eigenvalue: lam.as_f64(),
    })
}
