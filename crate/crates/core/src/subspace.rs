//! Orthogonal splitting `ℝᵈ = V ⊕ V⊥` with explicit embeddings `ι_V`, `ι_⊥`.

use nalgebra::{DMatrix, DVector};

use crate::error::{shape_err, Error, Result};
use crate::linalg::max_abs;
use crate::scalar::Real;
use crate::weighted_time::Trajectory;

#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceProjector<T: Real> {
    basis: DMatrix<T>,
    complement: DMatrix<T>,
}

impl<T: Real> SubspaceProjector<T> {
    /// `V` spanned by the listed unit vectors; the complement takes the remaining ones in order.
    pub fn from_coordinates(dim: usize, coords: &[usize]) -> Result<Self> {
        let mut mask = vec![false; dim];
        for &c in coords {
            if c >= dim {
                return Err(Error::InvalidArgument(format!("coordinate {c} outside dimension {dim}")));
            }
            if mask[c] {
                return Err(Error::InvalidArgument(format!("coordinate {c} listed twice")));
            }
            mask[c] = true;
        }
        let mut basis = DMatrix::zeros(dim, coords.len());
        for (j, &c) in coords.iter().enumerate() {
            basis[(c, j)] = T::one();
        }
        let rest: Vec<usize> = (0..dim).filter(|i| !mask[*i]).collect();
        let mut complement = DMatrix::zeros(dim, rest.len());
        for (j, &c) in rest.iter().enumerate() {
            complement[(c, j)] = T::one();
        }
        Ok(Self { basis, complement })
    }

    /// Orthonormalizes the columns of `b` and completes them to a basis of `ℝᵈ`.
    pub fn from_basis(b: &DMatrix<T>) -> Result<Self> {
        let (d, p) = b.shape();
        if p > d {
            return Err(shape_err("subspace basis columns", format!("<= {d}"), p));
        }
        let mut aug = DMatrix::zeros(d, p + d);
        aug.columns_mut(0, p).copy_from(b);
        aug.columns_mut(p, d).fill_with_identity();
        let qr = aug.qr();
        let r = qr.r();
        let scale = T::one().max(max_abs(b));
        for i in 0..p {
            if r[(i, i)].abs() <= T::default_epsilon().sqrt() * scale {
                return Err(Error::InvalidArgument("subspace basis is rank deficient".into()));
            }
        }
        let q = qr.q();
        Ok(Self {
            basis: q.columns(0, p).into_owned(),
            complement: q.columns(p, d - p).into_owned(),
        })
    }

    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn dim_v(&self) -> usize {
        self.basis.ncols()
    }

    pub fn dim_perp(&self) -> usize {
        self.complement.ncols()
    }

    /// `ι_V` as a `d × dim V` matrix with orthonormal columns.
    pub fn basis(&self) -> &DMatrix<T> {
        &self.basis
    }

    /// `ι_⊥`.
    pub fn complement(&self) -> &DMatrix<T> {
        &self.complement
    }

    /// `Q = [ι_V, ι_⊥]`, orthogonal.
    pub fn frame(&self) -> DMatrix<T> {
        let d = self.dim();
        let mut q = DMatrix::zeros(d, d);
        q.columns_mut(0, self.dim_v()).copy_from(&self.basis);
        q.columns_mut(self.dim_v(), self.dim_perp()).copy_from(&self.complement);
        q
    }

    pub fn project(&self, x: &DVector<T>) -> DVector<T> {
        &self.basis * (self.basis.transpose() * x)
    }

    pub fn project_perp(&self, x: &DVector<T>) -> DVector<T> {
        &self.complement * (self.complement.transpose() * x)
    }

    /// `P_V u`, pointwise in time.
    pub fn project_trajectory(&self, u: &Trajectory<T>) -> Trajectory<T> {
        u.map_samples(u.dim(), |_, _, v| self.project(&v))
    }

    pub fn project_perp_trajectory(&self, u: &Trajectory<T>) -> Trajectory<T> {
        u.map_samples(u.dim(), |_, _, v| self.project_perp(&v))
    }

    /// `max |ι_V ι_Vᵀ + ι_⊥ ι_⊥ᵀ − 1|`.
    pub fn resolution_defect(&self) -> T {
        let d = self.dim();
        let sum = &self.basis * self.basis.transpose() + &self.complement * self.complement.transpose();
        max_abs(&(sum - DMatrix::identity(d, d)))
    }
}
