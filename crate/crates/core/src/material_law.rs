//! Time-dependent operator families `t ↦ M(t)` and the checks the well-posedness theory needs.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{shape_err, Error, Hypothesis, Result};
use crate::linalg::{min_eig_sym, spectral_norm, sym_part};
use crate::models::{phi, phi_prime};
use crate::scalar::Real;
use crate::subspace::SubspaceProjector;
use crate::weighted_time::Trajectory;

pub type MatrixFn<T> = Arc<dyn Fn(T) -> DMatrix<T> + Send + Sync>;

/// Default eigenvalue tolerance of the certificate checks.
pub const DEFAULT_TOL: f64 = 1e-10;

/// `ρ ∈ {2⁰, 2¹, …, 2¹⁰}`.
pub fn default_rho_grid<T: Real>() -> Vec<T> {
    (0..=10).map(|k| T::lit(f64::from(1u32 << k))).collect()
}

/// A `d × d` matrix-valued function of time.
#[derive(Clone)]
pub struct OperatorFamily<T: Real> {
    dim: usize,
    sampler: MatrixFn<T>,
    derivative: Option<MatrixFn<T>>,
    lipschitz_hint: Option<T>,
    breakpoints: Vec<T>,
    piecewise_constant: bool,
}

impl<T: Real> fmt::Debug for OperatorFamily<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OperatorFamily")
            .field("dim", &self.dim)
            .field("analytic_derivative", &self.derivative.is_some())
            .field("lipschitz_hint", &self.lipschitz_hint)
            .field("breakpoints", &self.breakpoints)
            .field("piecewise_constant", &self.piecewise_constant)
            .finish()
    }
}

fn check_square<T: Real>(m: &DMatrix<T>, context: &'static str) -> Result<usize> {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(shape_err(context, "non-empty square matrix", format!("{}x{}", m.nrows(), m.ncols())));
    }
    Ok(m.nrows())
}

impl<T: Real> OperatorFamily<T> {
    pub fn constant(m: DMatrix<T>) -> Result<Self> {
        let dim = check_square(&m, "constant family")?;
        let zero = DMatrix::zeros(dim, dim);
        Ok(Self {
            dim,
            sampler: Arc::new(move |_| m.clone()),
            derivative: Some(Arc::new(move |_| zero.clone())),
            lipschitz_hint: Some(T::zero()),
            breakpoints: Vec::new(),
            piecewise_constant: true,
        })
    }

    pub fn identity(dim: usize) -> Self {
        Self::constant(DMatrix::identity(dim, dim)).expect("identity is square")
    }

    pub fn zero(dim: usize) -> Self {
        Self::constant(DMatrix::zeros(dim, dim)).expect("zero is square")
    }

    /// Wraps a sampler; derivatives fall back to finite differences.
    pub fn from_fn(dim: usize, f: impl Fn(T) -> DMatrix<T> + Send + Sync + 'static) -> Self {
        Self {
            dim,
            sampler: Arc::new(f),
            derivative: None,
            lipschitz_hint: None,
            breakpoints: Vec::new(),
            piecewise_constant: false,
        }
    }

    pub fn with_derivative(mut self, df: impl Fn(T) -> DMatrix<T> + Send + Sync + 'static) -> Self {
        self.derivative = Some(Arc::new(df));
        self
    }

    pub fn with_lipschitz_hint(mut self, l: T) -> Self {
        self.lipschitz_hint = Some(l);
        self
    }

    /// Times where the derivative is undefined; [`derivative_at`] returns zero there.
    pub fn with_breakpoints(mut self, mut b: Vec<T>) -> Self {
        b.sort_by(|x, y| x.partial_cmp(y).expect("finite breakpoints"));
        self.breakpoints = b;
        self
    }

    /// Piece `i` covers `]b_{i−1}, b_i]` (left-continuous), with `b_{−1} = −∞`, `b_len = +∞`.
    pub fn piecewise(breaks: Vec<T>, mats: Vec<DMatrix<T>>) -> Result<Self> {
        if mats.len() != breaks.len() + 1 {
            return Err(shape_err("piecewise family pieces", breaks.len() + 1, mats.len()));
        }
        let dim = check_square(&mats[0], "piecewise family")?;
        for m in &mats {
            if m.shape() != (dim, dim) {
                return Err(shape_err("piecewise family piece", format!("{dim}x{dim}"), format!("{}x{}", m.nrows(), m.ncols())));
            }
        }
        if breaks.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidArgument("piecewise breakpoints must be strictly increasing".into()));
        }
        let b = breaks.clone();
        let zero = DMatrix::zeros(dim, dim);
        Ok(Self {
            dim,
            sampler: Arc::new(move |t| {
                let i = b.iter().take_while(|bk| t > **bk).count();
                mats[i].clone()
            }),
            derivative: Some(Arc::new(move |_| zero.clone())),
            lipschitz_hint: None,
            breakpoints: breaks,
            piecewise_constant: true,
        })
    }

    /// `base + φ(t)·slope` with the ramp `φ` (0 before 0, `t` on `]0,1]`, 1 after).
    pub fn ramp(base: DMatrix<T>, slope: DMatrix<T>) -> Result<Self> {
        let dim = check_square(&base, "ramp base")?;
        if slope.shape() != (dim, dim) {
            return Err(shape_err("ramp slope", format!("{dim}x{dim}"), format!("{}x{}", slope.nrows(), slope.ncols())));
        }
        let lip = spectral_norm(&slope);
        let s2 = slope.clone();
        Ok(Self {
            dim,
            sampler: Arc::new(move |t| &base + &slope * phi(t)),
            derivative: Some(Arc::new(move |t| &s2 * phi_prime(t))),
            lipschitz_hint: Some(lip),
            breakpoints: vec![T::zero(), T::one()],
            piecewise_constant: false,
        })
    }

    /// Linear interpolation through `(times[i], mats[i])`, held constant outside the table.
    pub fn table(times: Vec<T>, mats: Vec<DMatrix<T>>) -> Result<Self> {
        if times.len() != mats.len() || times.is_empty() {
            return Err(shape_err("table rows", times.len(), mats.len()));
        }
        if times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidArgument("table times must be strictly increasing".into()));
        }
        let dim = check_square(&mats[0], "table family")?;
        if mats.iter().any(|m| m.shape() != (dim, dim)) {
            return Err(shape_err("table entry", format!("{dim}x{dim}"), "other"));
        }
        if times.len() == 1 {
            return Self::constant(mats[0].clone());
        }
        let segment = {
            let times = times.clone();
            move |t: T| -> Option<usize> {
                if t < times[0] || t >= times[times.len() - 1] {
                    None
                } else {
                    Some(times.iter().take_while(|x| **x <= t).count() - 1)
                }
            }
        };
        let (t1, m1) = (times.clone(), mats.clone());
        let seg1 = segment.clone();
        let sampler = move |t: T| match seg1(t) {
            Some(i) => {
                let s = (t - t1[i]) / (t1[i + 1] - t1[i]);
                &m1[i] * (T::one() - s) + &m1[i + 1] * s
            }
            None if t < t1[0] => m1[0].clone(),
            None => m1[m1.len() - 1].clone(),
        };
        let derivative = move |t: T| match segment(t) {
            Some(i) => (&mats[i + 1] - &mats[i]) / (times[i + 1] - times[i]),
            None => DMatrix::zeros(dim, dim),
        };
        Ok(Self {
            dim,
            sampler: Arc::new(sampler),
            derivative: Some(Arc::new(derivative)),
            lipschitz_hint: None,
            breakpoints: Vec::new(),
            piecewise_constant: false,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn at(&self, t: T) -> DMatrix<T> {
        (self.sampler)(t)
    }

    pub fn lipschitz_hint(&self) -> Option<T> {
        self.lipschitz_hint
    }

    pub fn breakpoints(&self) -> &[T] {
        &self.breakpoints
    }

    pub fn is_piecewise_constant(&self) -> bool {
        self.piecewise_constant
    }

    pub fn has_analytic_derivative(&self) -> bool {
        self.derivative.is_some()
    }

    /// `t ↦ s·M(t)`.
    pub fn scaled(&self, s: T) -> Self {
        let f = self.sampler.clone();
        let df = self.derivative.clone();
        Self {
            dim: self.dim,
            sampler: Arc::new(move |t| f(t) * s),
            derivative: df.map(|d| Arc::new(move |t| d(t) * s) as MatrixFn<T>),
            lipschitz_hint: self.lipschitz_hint.map(|l| l * s.abs()),
            breakpoints: self.breakpoints.clone(),
            piecewise_constant: self.piecewise_constant,
        }
    }

    /// Transposed family `t ↦ M(t)ᵀ`.
    pub fn transposed(&self) -> Self {
        let f = self.sampler.clone();
        let df = self.derivative.clone();
        Self {
            dim: self.dim,
            sampler: Arc::new(move |t| f(t).transpose()),
            derivative: df.map(|d| Arc::new(move |t| d(t).transpose()) as MatrixFn<T>),
            ..self.clone()
        }
    }
}

/// `Ṁ(t)`: the analytic derivative when supplied, zero at declared breakpoints, one-sided
/// differences next to a breakpoint and central differences elsewhere.
pub fn derivative_at<T: Real>(m: &OperatorFamily<T>, t: T) -> DMatrix<T> {
    if let Some(d) = &m.derivative {
        return d(t);
    }
    let hd = T::fd_step() * T::one().max(t.abs());
    let at_tol = T::default_epsilon() * T::lit(16.0) * T::one().max(t.abs());
    let mut near: Option<T> = None;
    for b in &m.breakpoints {
        let dist = (t - *b).abs();
        if dist <= at_tol {
            return DMatrix::zeros(m.dim, m.dim);
        }
        if dist < hd {
            near = Some(*b);
        }
    }
    match near {
        Some(b) if t > b => (m.at(t + hd) - m.at(t)) / hd,
        Some(_) => (m.at(t) - m.at(t - hd)) / hd,
        None => (m.at(t + hd) - m.at(t - hd)) / (hd + hd),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelfAdjointReport<T> {
    pub ok: bool,
    /// `max_t ‖M(t) − M(t)ᵀ‖`.
    pub max_asymmetry: T,
    pub worst_t: Option<T>,
}

pub fn check_selfadjoint<T: Real>(m: &OperatorFamily<T>, t_samples: &[T], tol: T) -> SelfAdjointReport<T> {
    let mut worst = (T::zero(), None);
    for &t in t_samples {
        let mt = m.at(t);
        let a = spectral_norm(&(&mt - mt.transpose()));
        if worst.1.is_none() || a > worst.0 {
            worst = (a, Some(t));
        }
    }
    SelfAdjointReport {
        ok: worst.0 <= tol,
        max_asymmetry: worst.0,
        worst_t: worst.1,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonNegativeReport<T> {
    pub ok: bool,
    /// Smallest eigenvalue of `½(M + Mᵀ)` over the samples.
    pub min_eigenvalue: T,
    pub worst_t: Option<T>,
    /// Set when some sample was not symmetric, so the verdict is about the symmetric part only.
    pub symmetrized: bool,
}

pub fn check_nonnegative<T: Real>(m: &OperatorFamily<T>, t_samples: &[T], tol: T) -> NonNegativeReport<T> {
    let mut out = NonNegativeReport {
        ok: true,
        min_eigenvalue: T::max_value().unwrap_or_else(|| T::lit(f64::MAX)),
        worst_t: None,
        symmetrized: false,
    };
    for &t in t_samples {
        let mt = m.at(t);
        if crate::linalg::max_abs(&(&mt - mt.transpose())) > tol {
            out.symmetrized = true;
        }
        let lam = min_eig_sym(&mt);
        if lam < out.min_eigenvalue {
            out.min_eigenvalue = lam;
            out.worst_t = Some(t);
        }
    }
    out.ok = out.min_eigenvalue >= -tol;
    out
}

/// `max_k ‖M(t_{k+1}) − M(t_k)‖ / (t_{k+1} − t_k)`; a lower bound on the Lipschitz constant.
pub fn estimate_lipschitz<T: Real>(m: &OperatorFamily<T>, t_samples: &[T]) -> Result<T> {
    if t_samples.len() < 2 {
        return Err(Error::InvalidArgument("Lipschitz estimate needs at least 2 samples".into()));
    }
    let mut prev = m.at(t_samples[0]);
    let mut best = T::zero();
    for w in t_samples.windows(2) {
        let next = m.at(w[1]);
        let dt = (w[1] - w[0]).abs();
        if dt > T::zero() {
            best = best.max(spectral_norm(&(&next - &prev)) / dt);
        }
        prev = next;
    }
    Ok(best)
}

/// The hint when the family carries one, the sampled estimate otherwise.
pub fn lipschitz<T: Real>(m: &OperatorFamily<T>, t_samples: &[T]) -> Result<T> {
    match m.lipschitz_hint {
        Some(l) => Ok(l),
        None => estimate_lipschitz(m, t_samples),
    }
}

/// Pointwise-in-time application `(M u)(t_k) = M(t_k) u_k`.
pub fn multiply<T: Real>(m: &OperatorFamily<T>, u: &Trajectory<T>) -> Result<Trajectory<T>> {
    if m.dim != u.dim() {
        return Err(shape_err("multiply", m.dim, u.dim()));
    }
    Ok(u.map_samples(m.dim, |_, t, v| m.at(t) * v))
}

/// `Ṁ` applied pointwise.
pub fn multiply_derivative<T: Real>(m: &OperatorFamily<T>, u: &Trajectory<T>) -> Result<Trajectory<T>> {
    if m.dim != u.dim() {
        return Err(shape_err("multiply_derivative", m.dim, u.dim()));
    }
    Ok(u.map_samples(m.dim, |_, t, v| derivative_at(m, t) * v))
}

/// Outcome of the positive-definiteness sweep at one weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhoCheck<T> {
    pub rho: T,
    pub min_eigenvalue: T,
    pub worst_t: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosDefCertificate<T> {
    pub rho0: T,
    pub c0: T,
    /// Per-sample minimum eigenvalue at `rho0`.
    pub witness: Vec<T>,
    pub t_samples: Vec<T>,
    /// Every grid weight that was checked, ascending.
    pub sweep: Vec<RhoCheck<T>>,
}

struct Split<T: Real> {
    m0: DMatrix<T>,
    rest: DMatrix<T>,
}

fn check_dims<T: Real>(m0: &OperatorFamily<T>, m1: &OperatorFamily<T>) -> Result<()> {
    if m0.dim != m1.dim {
        return Err(shape_err("material law M1", m0.dim, m1.dim));
    }
    Ok(())
}

fn split_samples<T: Real>(m0: &OperatorFamily<T>, m1: &OperatorFamily<T>, t_samples: &[T]) -> Vec<Split<T>> {
    t_samples
        .par_iter()
        .map(|&t| Split {
            m0: sym_part(&m0.at(t)),
            rest: sym_part(&(derivative_at(m0, t) * T::lit(0.5) + m1.at(t))),
        })
        .collect()
}

fn profile_from<T: Real>(split: &[Split<T>], rho: T) -> Vec<T> {
    split.par_iter().map(|s| min_eig_sym(&(&s.m0 * rho + &s.rest))).collect()
}

fn worst<T: Real>(values: &[T], t_samples: &[T]) -> (T, T) {
    let mut k = 0;
    for (i, v) in values.iter().enumerate() {
        if *v < values[k] {
            k = i;
        }
    }
    (values[k], t_samples[k])
}

/// Smallest eigenvalue of `ρM₀(t) + ½Ṁ₀(t) + Re M₁(t)` at every sample.
pub fn posdef_profile<T: Real>(m0: &OperatorFamily<T>, m1: &OperatorFamily<T>, rho: T, t_samples: &[T]) -> Result<Vec<T>> {
    check_dims(m0, m1)?;
    Ok(profile_from(&split_samples(m0, m1, t_samples), rho))
}

/// Hypotheses (a)–(d) on `M₀` at the samples.
pub fn check_hypotheses<T: Real>(m0: &OperatorFamily<T>, t_samples: &[T], tol: T) -> Result<()> {
    let scale = t_samples
        .iter()
        .fold(T::one(), |a, t| a.max(spectral_norm(&m0.at(*t))));
    let sa = check_selfadjoint(m0, t_samples, tol * scale);
    if !sa.ok {
        return Err(Error::Hypothesis {
            hypothesis: Hypothesis::SelfAdjoint,
            t: sa.worst_t.map_or(f64::NAN, Real::as_f64),
            value: sa.max_asymmetry.as_f64(),
        });
    }
    let nn = check_nonnegative(m0, t_samples, tol * scale);
    if !nn.ok {
        return Err(Error::Hypothesis {
            hypothesis: Hypothesis::NonNegative,
            t: nn.worst_t.map_or(f64::NAN, Real::as_f64),
            value: nn.min_eigenvalue.as_f64(),
        });
    }
    if t_samples.len() >= 2 {
        let l = lipschitz(m0, t_samples)?;
        if !l.is_finite() {
            return Err(Error::Hypothesis {
                hypothesis: Hypothesis::Lipschitz,
                t: f64::NAN,
                value: l.as_f64(),
            });
        }
    }
    for &t in t_samples {
        let d = derivative_at(m0, t);
        if d.iter().any(|x| !x.is_finite()) {
            return Err(Error::Hypothesis {
                hypothesis: Hypothesis::Differentiable,
                t: t.as_f64(),
                value: f64::NAN,
            });
        }
    }
    Ok(())
}

/// Finds the smallest `ρ` on the grid from which on `ρM₀ + ½Ṁ₀ + Re M₁ ≥ c₀ > tol` at every sample.
pub fn posdef_certificate<T: Real>(
    m0: &OperatorFamily<T>,
    m1: &OperatorFamily<T>,
    rho_grid: &[T],
    t_samples: &[T],
    tol: T,
) -> Result<PosDefCertificate<T>> {
    check_dims(m0, m1)?;
    if rho_grid.is_empty() || t_samples.is_empty() {
        return Err(Error::InvalidArgument("certificate needs at least one weight and one sample".into()));
    }
    if rho_grid.iter().any(|r| !(*r > T::zero())) {
        return Err(Error::InvalidArgument("certificate weights must be positive".into()));
    }
    check_hypotheses(m0, t_samples, tol)?;
    let mut rhos = rho_grid.to_vec();
    rhos.sort_by(|a, b| a.partial_cmp(b).expect("finite weights"));
    rhos.dedup();
    let split = split_samples(m0, m1, t_samples);
    let profiles: Vec<Vec<T>> = rhos.iter().map(|r| profile_from(&split, *r)).collect();
    let sweep: Vec<RhoCheck<T>> = rhos
        .iter()
        .zip(&profiles)
        .map(|(r, p)| {
            let (min_eigenvalue, worst_t) = worst(p, t_samples);
            RhoCheck {
                rho: *r,
                min_eigenvalue,
                worst_t,
            }
        })
        .collect();
    let mut first = rhos.len();
    while first > 0 && sweep[first - 1].min_eigenvalue > tol {
        first -= 1;
    }
    if first == rhos.len() {
        let last = sweep[rhos.len() - 1];
        return Err(Error::Certificate {
            rho: last.rho.as_f64(),
            t: last.worst_t.as_f64(),
            min_eigenvalue: last.min_eigenvalue.as_f64(),
        });
    }
    let c0 = sweep[first..]
        .iter()
        .fold(sweep[first].min_eigenvalue, |a, s| a.min(s.min_eigenvalue));
    Ok(PosDefCertificate {
        rho0: rhos[first],
        c0,
        witness: profiles[first].clone(),
        t_samples: t_samples.to_vec(),
        sweep,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubspaceCertificate<T> {
    /// `min_t λ_min(ι_Vᵀ Re M₁(t) ι_V)`.
    pub c0: T,
    /// `min_t λ_min(ι_⊥ᵀ M₀(t) ι_⊥)`; `None` when `V` is the whole space.
    pub c1: Option<T>,
}

/// Coercivity of `Re M₁` on `V` and of `M₀` on `V⊥`, after checking `V ⊆ ker M₀(t)`.
pub fn subspace_posdef_certificate<T: Real>(
    m0: &OperatorFamily<T>,
    m1: &OperatorFamily<T>,
    v: &SubspaceProjector<T>,
    t_samples: &[T],
    tol: T,
) -> Result<SubspaceCertificate<T>> {
    check_dims(m0, m1)?;
    if v.dim() != m0.dim {
        return Err(shape_err("subspace projector", m0.dim, v.dim()));
    }
    if v.dim_v() == 0 {
        return Err(Error::InvalidArgument("subspace V must be non-trivial".into()));
    }
    let iv = v.basis();
    let ip = v.complement();
    let rows: Vec<(T, T, T, Option<T>)> = t_samples
        .par_iter()
        .map(|&t| {
            let a0 = m0.at(t);
            let defect = spectral_norm(&(&a0 * iv)) / T::one().max(spectral_norm(&a0));
            let c0 = min_eig_sym(&(iv.transpose() * m1.at(t) * iv));
            let c1 = (v.dim_perp() > 0).then(|| min_eig_sym(&(ip.transpose() * &a0 * ip)));
            (t, defect, c0, c1)
        })
        .collect();
    for &(t, defect, _, _) in &rows {
        if defect > tol {
            return Err(Error::NullSpace {
                t: t.as_f64(),
                defect: defect.as_f64(),
            });
        }
    }
    let (mut c0, mut t0) = (rows[0].2, rows[0].0);
    let mut c1: Option<(T, T)> = None;
    for &(t, _, a, b) in &rows {
        if a < c0 {
            c0 = a;
            t0 = t;
        }
        if let Some(b) = b {
            if c1.is_none_or(|(cur, _)| b < cur) {
                c1 = Some((b, t));
            }
        }
    }
    if c0 <= tol {
        return Err(Error::SubspaceCertificate {
            block: "Re M1 on V",
            t: t0.as_f64(),
            min_eigenvalue: c0.as_f64(),
        });
    }
    if let Some((b, t)) = c1 {
        if b <= tol {
            return Err(Error::SubspaceCertificate {
                block: "M0 on the complement of V",
                t: t.as_f64(),
                min_eigenvalue: b.as_f64(),
            });
        }
    }
    Ok(SubspaceCertificate {
        c0,
        c1: c1.map(|(b, _)| b),
    })
}
