//! Causal time marching for `(∂₀M₀ + M₁ + A)u = F` and the diagnostics around it.
//!
//! The discrete space-time operator is
//!
//! ```text
//! (B u)_k = (M₀(t_k) u_k − M₀(t_{k−1}) u_{k−1}) / h + M₁(t_k) u_k + A u_k,   u_{−1} = 0,
//! ```
//!
//! block lower bidiagonal, so [`solve`] inverts it by a forward sweep with step matrices
//! `S_k = M₀(t_k)/h + M₁(t_k) + A`.

use nalgebra::{DMatrix, DVector, LU};

use crate::error::{shape_err, Error, Result};
use crate::linalg::min_eig_sym;
use crate::material_law::{
    derivative_at, multiply, posdef_certificate, OperatorFamily, PosDefCertificate, DEFAULT_TOL,
};
use crate::scalar::Real;
use crate::spatial_operator::SkewOperator;
use crate::weighted_time::{
    cutoff_complement, d0_apply, weighted_inner_upto, weighted_norm, TimeGrid, Trajectory, Weight,
};

/// Largest `(n+1)·d` the dense oracle accepts.
pub const ORACLE_LIMIT: usize = 4096;

/// Default slack of [`verify_norm_bound`].
pub const DEFAULT_BOUND_SLACK: f64 = 0.1;

#[derive(Debug, Clone)]
pub struct EvoProblem<T: Real> {
    pub m0: OperatorFamily<T>,
    pub m1: OperatorFamily<T>,
    pub a: SkewOperator<T>,
    pub forcing: Trajectory<T>,
    pub weight: Weight<T>,
    pub cert: Option<PosDefCertificate<T>>,
}

impl<T: Real> EvoProblem<T> {
    pub fn new(
        m0: OperatorFamily<T>,
        m1: OperatorFamily<T>,
        a: SkewOperator<T>,
        forcing: Trajectory<T>,
        weight: Weight<T>,
    ) -> Result<Self> {
        let d = forcing.dim();
        if m0.dim() != d {
            return Err(shape_err("problem M0", d, m0.dim()));
        }
        if m1.dim() != d {
            return Err(shape_err("problem M1", d, m1.dim()));
        }
        if a.dim() != d {
            return Err(shape_err("problem A", d, a.dim()));
        }
        Ok(Self {
            m0,
            m1,
            a,
            forcing,
            weight,
            cert: None,
        })
    }

    pub fn with_certificate(mut self, cert: PosDefCertificate<T>) -> Result<Self> {
        if self.weight.rho() < cert.rho0 {
            return Err(Error::Precondition(format!(
                "weight rho = {} is below the certificate threshold {}",
                self.weight.rho(),
                cert.rho0
            )));
        }
        self.cert = Some(cert);
        Ok(self)
    }

    /// Same operators, different right-hand side (must share grid and dimension).
    pub fn with_forcing(&self, forcing: Trajectory<T>) -> Result<Self> {
        self.forcing.check_shape(&forcing, "forcing")?;
        Ok(Self {
            forcing,
            ..self.clone()
        })
    }

    pub fn with_weight(&self, weight: Weight<T>) -> Self {
        Self {
            weight,
            cert: None,
            ..self.clone()
        }
    }

    pub fn grid(&self) -> &TimeGrid<T> {
        self.forcing.grid()
    }

    pub fn dim(&self) -> usize {
        self.forcing.dim()
    }

    /// The stored certificate, or one computed at `ρ` on the grid times.
    pub fn certificate(&self) -> Result<PosDefCertificate<T>> {
        if let Some(c) = &self.cert {
            return Ok(c.clone());
        }
        posdef_certificate(&self.m0, &self.m1, &[self.weight.rho()], &self.grid().times(), T::lit(DEFAULT_TOL))
            .map_err(|e| Error::Precondition(format!("no positivity certificate at rho = {}: {e}", self.weight.rho())))
    }

    /// Problem with the certificate filled in.
    pub fn certified(&self) -> Result<Self> {
        let cert = self.certificate()?;
        Ok(Self {
            cert: Some(cert),
            ..self.clone()
        })
    }
}

/// Factorized step matrices of one problem; consecutive identical steps share a factorization.
#[derive(Debug, Clone)]
pub struct Stepper<T: Real> {
    grid: TimeGrid<T>,
    m0: Vec<DMatrix<T>>,
    lus: Vec<LU<T, nalgebra::Dyn, nalgebra::Dyn>>,
    /// step matrices, one per entry of `lus`
    mats: Vec<DMatrix<T>>,
    which: Vec<usize>,
    accretivity: Vec<T>,
}

impl<T: Real> Stepper<T> {
    /// Assembles and factorizes every step; aborts on the first non-accretive one.
    pub fn new(p: &EvoProblem<T>) -> Result<Self> {
        let g = *p.grid();
        let inv_h = T::one() / g.h();
        let mut m0 = Vec::with_capacity(g.len());
        let mut lus = Vec::new();
        let mut mats: Vec<DMatrix<T>> = Vec::new();
        let mut which = Vec::with_capacity(g.len());
        let mut accretivity = Vec::with_capacity(g.len());
        let mut last_lam = T::zero();
        for k in 0..g.len() {
            let t = g.t(k);
            let m0k = p.m0.at(t);
            let s = &m0k * inv_h + p.m1.at(t) + p.a.matrix();
            let reuse = mats.last().is_some_and(|prev| *prev == s);
            if !reuse {
                last_lam = min_eig_sym(&s);
                if !(last_lam > T::zero()) {
                    return Err(Error::Step {
                        t: t.as_f64(),
                        reason: "not accretive",
                        min_eigenvalue: last_lam.as_f64(),
                    });
                }
                lus.push(LU::new(s.clone()));
                mats.push(s);
            }
            which.push(mats.len() - 1);
            accretivity.push(last_lam);
            m0.push(m0k);
        }
        Ok(Self {
            grid: g,
            m0,
            lus,
            mats,
            which,
            accretivity,
        })
    }

    pub fn grid(&self) -> &TimeGrid<T> {
        &self.grid
    }

    /// Number of distinct factorizations.
    pub fn factorizations(&self) -> usize {
        self.lus.len()
    }

    /// `min_k λ_min(sym S_k)`.
    pub fn accretivity_min(&self) -> T {
        self.accretivity.iter().fold(self.accretivity[0], |a, b| a.min(*b))
    }

    pub fn accretivity(&self) -> &[T] {
        &self.accretivity
    }

    /// Forward sweep `S_k u_k = F_k + M₀(t_{k−1}) u_{k−1} / h`.
    pub fn march(&self, f: &Trajectory<T>) -> Result<Trajectory<T>> {
        if f.grid() != &self.grid || f.dim() != self.m0[0].nrows() {
            return Err(shape_err("march forcing", self.m0[0].nrows(), f.dim()));
        }
        let inv_h = T::one() / self.grid.h();
        let mut u = Trajectory::zeros(self.grid, f.dim());
        let mut carry = DVector::zeros(f.dim());
        for k in 0..self.grid.len() {
            let rhs = f.sample(k) + &carry;
            let uk = self.lus[self.which[k]].solve(&rhs).ok_or(Error::Step {
                t: self.grid.t(k).as_f64(),
                reason: "singular",
                min_eigenvalue: self.accretivity[k].as_f64(),
            })?;
            carry = &self.m0[k] * &uk * inv_h;
            u.set_sample(k, &uk);
        }
        Ok(u)
    }

    /// Backward sweep solving `B♯ y = G` for the weighted adjoint `B♯ = Q⁻¹BᵀQ`.
    pub fn march_adjoint(&self, g_in: &Trajectory<T>, w: &Weight<T>) -> Result<Trajectory<T>> {
        let g = self.grid;
        let inv_h = T::one() / g.h();
        let lus_t: Vec<_> = self.mats.iter().map(|m| LU::new(m.transpose())).collect();
        let mut y = Trajectory::zeros(g, g_in.dim());
        let mut carry = DVector::zeros(g_in.dim());
        for k in (0..g.len()).rev() {
            let rhs = g_in.sample(k) + &carry;
            let yk = lus_t[self.which[k]].solve(&rhs).ok_or(Error::Step {
                t: g.t(k).as_f64(),
                reason: "singular",
                min_eigenvalue: self.accretivity[k].as_f64(),
            })?;
            if k > 0 {
                let ratio = quad_ratio(&g, w, k - 1);
                carry = self.m0[k - 1].transpose() * &yk * (inv_h * ratio);
            }
            y.set_sample(k, &yk);
        }
        Ok(y)
    }
}

/// `q_{k+1}/q_k` with `q_k` the trapezoid weight times `e^{−2ρt_k}`.
fn quad_ratio<T: Real>(g: &TimeGrid<T>, w: &Weight<T>, k: usize) -> T {
    g.trapezoid_weight(k + 1) / g.trapezoid_weight(k) * (-(T::lit(2.0) * w.rho() * g.h())).exp()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport<T: Real> {
    pub u: Trajectory<T>,
    pub norm_u: T,
    pub norm_f: T,
    pub c0: T,
    /// `‖u‖·c₀/‖F‖`; at most 1 in the continuum.
    pub bound_ratio: T,
    /// `(a, residual)` of the energy identity at a few cut times.
    pub energy_residuals: Vec<(T, T)>,
    /// Max `|u|` up to the midpoint for the forcing with its first half removed.
    pub causality_defect: T,
    pub step_accretivity_min: T,
}

fn ratio<T: Real>(norm_u: T, c0: T, norm_f: T) -> T {
    if norm_f > T::zero() {
        norm_u * c0 / norm_f
    } else {
        T::zero()
    }
}

/// Grid times at a quarter, half and three quarters of the interval, plus the end.
pub fn default_cuts<T: Real>(g: &TimeGrid<T>) -> Vec<T> {
    [1, 2, 3, 4].iter().map(|q| g.t(g.n() * q / 4)).collect()
}

/// Solves the problem and collects the diagnostics of [`SolveReport`].
pub fn solve<T: Real>(p: &EvoProblem<T>) -> Result<SolveReport<T>> {
    let cert = p.certificate()?;
    let stepper = Stepper::new(p)?;
    let u = stepper.march(&p.forcing)?;
    let g = p.grid();
    let mid = g.t(g.n() / 2);
    let shifted = stepper.march(&cutoff_complement(&p.forcing, mid))?;
    let energy_residuals = default_cuts(g)
        .into_iter()
        .map(|a| Ok((a, energy_identity_residual(p, &u, a)?.residual)))
        .collect::<Result<Vec<_>>>()?;
    let norm_u = weighted_norm(&u, &p.weight);
    let norm_f = weighted_norm(&p.forcing, &p.weight);
    Ok(SolveReport {
        norm_u,
        norm_f,
        c0: cert.c0,
        bound_ratio: ratio(norm_u, cert.c0, norm_f),
        energy_residuals,
        causality_defect: shifted.max_abs_up_to(mid),
        step_accretivity_min: stepper.accretivity_min(),
        u,
    })
}

/// Solves `B♯ v = F` with the weighted adjoint of the discrete operator (an anticausal sweep).
pub fn solve_adjoint<T: Real>(p: &EvoProblem<T>) -> Result<SolveReport<T>> {
    let cert = p.certificate()?;
    let stepper = Stepper::new(p)?;
    let u = stepper.march_adjoint(&p.forcing, &p.weight)?;
    let norm_u = weighted_norm(&u, &p.weight);
    let norm_f = weighted_norm(&p.forcing, &p.weight);
    let g = p.grid();
    let mid = g.t(g.n() / 2);
    let early = crate::weighted_time::cutoff(&p.forcing, mid);
    let v = stepper.march_adjoint(&early, &p.weight)?;
    Ok(SolveReport {
        norm_u,
        norm_f,
        c0: cert.c0,
        bound_ratio: ratio(norm_u, cert.c0, norm_f),
        energy_residuals: Vec::new(),
        causality_defect: (&v - &crate::weighted_time::cutoff(&v, mid)).max_abs(),
        step_accretivity_min: stepper.accretivity_min(),
        u,
    })
}

/// `B u` with the discrete operator of the scheme.
pub fn apply_operator<T: Real>(p: &EvoProblem<T>, u: &Trajectory<T>) -> Result<Trajectory<T>> {
    p.forcing.check_shape(u, "apply_operator")?;
    let d0m = d0_apply(&multiply(&p.m0, u)?);
    let rest = u.map_samples(u.dim(), |_, t, v| (p.m1.at(t) + p.a.matrix()) * v);
    Ok(&d0m + &rest)
}

/// `B♯ v = Q⁻¹ Bᵀ Q v`, the adjoint of [`apply_operator`] under the weighted inner product.
pub fn apply_adjoint_operator<T: Real>(p: &EvoProblem<T>, v: &Trajectory<T>) -> Result<Trajectory<T>> {
    p.forcing.check_shape(v, "apply_adjoint_operator")?;
    let g = *p.grid();
    let inv_h = T::one() / g.h();
    Ok(v.map_samples(v.dim(), |k, t, vk| {
        let m0 = p.m0.at(t);
        let s = &m0 * inv_h + p.m1.at(t) + p.a.matrix();
        let mut out = s.transpose() * vk;
        if k < g.n() {
            out -= m0.transpose() * v.sample(k + 1) * (inv_h * quad_ratio(&g, &p.weight, k));
        }
        out
    }))
}

/// Independent check of [`solve`]: assembles the full block bidiagonal matrix and solves it
/// with a fully pivoted LU.
pub fn oracle_dense_solve<T: Real>(p: &EvoProblem<T>) -> Result<Trajectory<T>> {
    let g = *p.grid();
    let d = p.dim();
    let size = g.len() * d;
    if size > ORACLE_LIMIT {
        return Err(Error::SizeGuard {
            size,
            limit: ORACLE_LIMIT,
        });
    }
    let h = g.h();
    let mut big = DMatrix::zeros(size, size);
    let mut rhs = DVector::zeros(size);
    for k in 0..g.len() {
        let t = g.t(k);
        let diag = p.m0.at(t) / h + p.m1.at(t) + p.a.matrix();
        big.view_mut((k * d, k * d), (d, d)).copy_from(&diag);
        if k > 0 {
            let sub = -p.m0.at(g.t(k - 1)) / h;
            big.view_mut((k * d, (k - 1) * d), (d, d)).copy_from(&sub);
        }
        rhs.rows_mut(k * d, d).copy_from(&p.forcing.sample(k));
    }
    let x = big.full_piv_lu().solve(&rhs).ok_or(Error::Singular {
        what: "space-time matrix",
        min_eigenvalue: f64::NAN,
    })?;
    let values = DMatrix::from_column_slice(d, g.len(), x.as_slice());
    Trajectory::from_matrix(g, values)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyBalance<T> {
    /// `∫_{t_min}^a ⟨B u, u⟩ e^{−2ρt}`.
    pub lhs: T,
    /// `½⟨u(a), M₀(a)u(a)⟩e^{−2ρa} + ∫ ρ⟨u, M₀u⟩ e^{−2ρt} + ∫ ⟨½Ṁ₀u + M₁u, u⟩ e^{−2ρt}`.
    pub rhs: T,
    pub residual: T,
}

/// Both sides of the energy identity on `]−∞, a]`, by trapezoid quadrature.
pub fn energy_identity_residual<T: Real>(p: &EvoProblem<T>, u: &Trajectory<T>, a: T) -> Result<EnergyBalance<T>> {
    p.forcing.check_shape(u, "energy_identity_residual")?;
    let g = *p.grid();
    let w = &p.weight;
    let Some(last) = g.index_at_or_before(a) else {
        return Ok(EnergyBalance {
            lhs: T::zero(),
            rhs: T::zero(),
            residual: T::zero(),
        });
    };
    let bu = apply_operator(p, u)?;
    let lhs = if last == 0 {
        T::zero()
    } else {
        weighted_inner_upto(&bu, u, w, last)
    };
    let m0u = multiply(&p.m0, u)?;
    let half = T::lit(0.5);
    let rest = u.map_samples(u.dim(), |_, t, v| (derivative_at(&p.m0, t) * half + p.m1.at(t)) * v);
    let ta = g.t(last);
    let ua = u.sample(last);
    let boundary = half * ua.dot(&m0u.sample(last)) * w.density(ta);
    let integrals = if last == 0 {
        T::zero()
    } else {
        w.rho() * weighted_inner_upto(&m0u, u, w, last) + weighted_inner_upto(&rest, u, w, last)
    };
    let rhs = boundary + integrals;
    Ok(EnergyBalance {
        lhs,
        rhs,
        residual: (lhs - rhs).abs(),
    })
}

/// Solves with the forcing zeroed on `t ≤ a`; returns max `|u|` on `t ≤ a` (zero for a causal
/// solution operator).
pub fn verify_causality<T: Real>(p: &EvoProblem<T>, a: T) -> Result<T> {
    let stepper = Stepper::new(&p.certified()?)?;
    let u = stepper.march(&cutoff_complement(&p.forcing, a))?;
    Ok(u.max_abs_up_to(a))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormBoundCheck<T> {
    pub ok: bool,
    /// `‖u‖·c₀/‖F‖`.
    pub ratio: T,
    /// `1 + slack`.
    pub limit: T,
}

/// `‖u‖ ≤ (1 + slack)/c₀ · ‖F‖`.
pub fn verify_norm_bound<T: Real>(r: &SolveReport<T>, cert: &PosDefCertificate<T>, slack: T) -> NormBoundCheck<T> {
    let limit = T::one() + slack;
    let ratio = ratio(r.norm_u, cert.c0, r.norm_f);
    NormBoundCheck {
        ok: r.norm_u <= limit / cert.c0 * r.norm_f,
        ratio,
        limit,
    }
}
