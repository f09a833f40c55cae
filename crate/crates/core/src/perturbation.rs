//! Causal perturbations `M∞` and the fixed-point solver for `(∂₀M₀ + M₁ + M∞ + A)u = F`.
//!
//! The norm bounds of the shift-type operators below are exact for signals that vanish at
//! `t_min` (the zero-extension convention); the halved trapezoid weight at the first sample
//! can otherwise inflate the measured ratio by up to `√2`.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{shape_err, Error, Result};
use crate::evo_solver::{apply_operator, EvoProblem, Stepper};
use crate::linalg::{min_eig_sym, spectral_norm, sym_part};
use crate::material_law::{derivative_at, subspace_posdef_certificate, SubspaceCertificate, DEFAULT_TOL};
use crate::scalar::Real;
use crate::subspace::SubspaceProjector;
use crate::weighted_time::{weighted_inner, weighted_norm, TimeGrid, Trajectory, Weight};

/// A (possibly nonlinear) operator on trajectories with a weight-dependent norm bound.
pub trait Perturbation<T: Real>: Send + Sync {
    fn apply(&self, u: &Trajectory<T>) -> Result<Trajectory<T>>;

    /// Upper bound on the operator norm (Lipschitz constant when nonlinear) in `H_ρ`.
    fn norm_estimate(&self, w: &Weight<T>) -> T;

    fn is_causal(&self) -> bool {
        true
    }

    fn is_nonlinear(&self) -> bool {
        false
    }

    fn name(&self) -> String;
}

/// `(τ u)(t) = u(t − τ)`, rounded up to a whole number of steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayOperator<T> {
    tau: T,
}

impl<T: Real> DelayOperator<T> {
    pub fn new(tau: T) -> Result<Self> {
        if !(tau > T::zero()) {
            return Err(Error::InvalidArgument(format!("delay needs tau > 0, got {tau}")));
        }
        Ok(Self { tau })
    }

    pub fn tau(&self) -> T {
        self.tau
    }

    /// `⌈τ/h⌉` (ignoring a relative rounding error of `1e-9`), at least one step.
    pub fn shift(&self, g: &TimeGrid<T>) -> usize {
        let steps = (self.tau / g.h() - T::lit(1e-9)).ceil().as_f64();
        steps.max(1.0) as usize
    }
}

impl<T: Real> Perturbation<T> for DelayOperator<T> {
    fn apply(&self, u: &Trajectory<T>) -> Result<Trajectory<T>> {
        let s = self.shift(u.grid());
        let mut out = Trajectory::zeros(*u.grid(), u.dim());
        let len = u.grid().len();
        if s < len {
            out.values_mut()
                .columns_mut(s, len - s)
                .copy_from(&u.values().columns(0, len - s));
        }
        Ok(out)
    }

    fn norm_estimate(&self, w: &Weight<T>) -> T {
        (-(w.rho() * self.tau)).exp()
    }

    fn name(&self) -> String {
        format!("delay(tau={})", self.tau)
    }
}

/// Causal convolution `(k ∗ u)_i = h Σ_{j≤i} k_{i−j} u_j` with a kernel sampled from `t = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvolutionOperator<T: Real> {
    kernel: Trajectory<T>,
}

impl<T: Real> ConvolutionOperator<T> {
    /// The kernel grid must start at 0; a one-dimensional kernel acts on every component.
    pub fn new(kernel: Trajectory<T>) -> Result<Self> {
        let g = kernel.grid();
        if g.t_min().abs() > g.h() * T::lit(1e-9) {
            return Err(Error::InvalidArgument(format!(
                "convolution kernel must be sampled from t = 0, starts at {}",
                g.t_min()
            )));
        }
        Ok(Self { kernel })
    }

    pub fn kernel(&self) -> &Trajectory<T> {
        &self.kernel
    }

    fn coefficient(&self, lag: usize, comp: usize) -> T {
        if lag >= self.kernel.grid().len() {
            return T::zero();
        }
        let c = if self.kernel.dim() == 1 { 0 } else { comp };
        self.kernel.values()[(c, lag)]
    }
}

impl<T: Real> Perturbation<T> for ConvolutionOperator<T> {
    fn apply(&self, u: &Trajectory<T>) -> Result<Trajectory<T>> {
        let g = u.grid();
        let h = g.h();
        let kh = self.kernel.grid().h();
        if (kh - h).abs() > h * T::lit(1e-9) {
            return Err(shape_err("convolution step", format!("h = {h}"), format!("h = {kh}")));
        }
        if self.kernel.dim() != 1 && self.kernel.dim() != u.dim() {
            return Err(shape_err("convolution kernel dimension", u.dim(), self.kernel.dim()));
        }
        let len = g.len();
        let mut out = Trajectory::zeros(*g, u.dim());
        let vals = u.values();
        for i in 0..u.dim() {
            for k in 0..len {
                let mut acc = T::zero();
                for j in 0..=k {
                    acc += self.coefficient(k - j, i) * vals[(i, j)];
                }
                out.values_mut()[(i, k)] = acc * h;
            }
        }
        Ok(out)
    }

    /// `h Σ_k max_i |k_i(t_k)| e^{−ρ t_k}`.
    fn norm_estimate(&self, w: &Weight<T>) -> T {
        let g = self.kernel.grid();
        let mut acc = T::zero();
        for k in 0..g.len() {
            let col = self.kernel.values().column(k);
            let m = col.iter().fold(T::zero(), |a, b| a.max(b.abs()));
            acc += m * (-(w.rho() * g.t(k))).exp();
        }
        acc * g.h()
    }

    fn name(&self) -> String {
        format!("convolution({} samples)", self.kernel.grid().len())
    }
}

/// `u ↦ ε u`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledIdentity<T>(pub T);

impl<T: Real> Perturbation<T> for ScaledIdentity<T> {
    fn apply(&self, u: &Trajectory<T>) -> Result<Trajectory<T>> {
        Ok(u.scaled(self.0))
    }

    fn norm_estimate(&self, _: &Weight<T>) -> T {
        self.0.abs()
    }

    fn name(&self) -> String {
        format!("scaled_identity({})", self.0)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ZeroPerturbation;

impl<T: Real> Perturbation<T> for ZeroPerturbation {
    fn apply(&self, u: &Trajectory<T>) -> Result<Trajectory<T>> {
        Ok(Trajectory::zeros(*u.grid(), u.dim()))
    }

    fn norm_estimate(&self, _: &Weight<T>) -> T {
        T::zero()
    }

    fn name(&self) -> String {
        "none".into()
    }
}

type ApplyFn<T> = Arc<dyn Fn(&Trajectory<T>) -> Result<Trajectory<T>> + Send + Sync>;
type NormFn<T> = Arc<dyn Fn(&Weight<T>) -> T + Send + Sync>;

/// Closure-backed perturbation; causality and linearity are the caller's claims.
#[derive(Clone)]
pub struct FnPerturbation<T: Real> {
    name: String,
    apply: ApplyFn<T>,
    norm: NormFn<T>,
    causal: bool,
    nonlinear: bool,
}

impl<T: Real> fmt::Debug for FnPerturbation<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnPerturbation")
            .field("name", &self.name)
            .field("causal", &self.causal)
            .field("nonlinear", &self.nonlinear)
            .finish()
    }
}

impl<T: Real> FnPerturbation<T> {
    pub fn new(
        name: impl Into<String>,
        apply: impl Fn(&Trajectory<T>) -> Result<Trajectory<T>> + Send + Sync + 'static,
        norm: impl Fn(&Weight<T>) -> T + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            apply: Arc::new(apply),
            norm: Arc::new(norm),
            causal: true,
            nonlinear: false,
        }
    }

    pub fn causal(mut self, yes: bool) -> Self {
        self.causal = yes;
        self
    }

    pub fn nonlinear(mut self, yes: bool) -> Self {
        self.nonlinear = yes;
        self
    }
}

impl<T: Real> Perturbation<T> for FnPerturbation<T> {
    fn apply(&self, u: &Trajectory<T>) -> Result<Trajectory<T>> {
        (self.apply)(u)
    }

    fn norm_estimate(&self, w: &Weight<T>) -> T {
        (self.norm)(w)
    }

    fn is_causal(&self) -> bool {
        self.causal
    }

    fn is_nonlinear(&self) -> bool {
        self.nonlinear
    }

    fn name(&self) -> String {
        self.name.clone()
    }
}

/// Sum of two perturbations; the norm bound is the sum of the bounds.
pub struct SumPerturbation<T: Real> {
    pub first: Box<dyn Perturbation<T>>,
    pub second: Box<dyn Perturbation<T>>,
}

impl<T: Real> Perturbation<T> for SumPerturbation<T> {
    fn apply(&self, u: &Trajectory<T>) -> Result<Trajectory<T>> {
        Ok(&self.first.apply(u)? + &self.second.apply(u)?)
    }

    fn norm_estimate(&self, w: &Weight<T>) -> T {
        self.first.norm_estimate(w) + self.second.norm_estimate(w)
    }

    fn is_causal(&self) -> bool {
        self.first.is_causal() && self.second.is_causal()
    }

    fn is_nonlinear(&self) -> bool {
        self.first.is_nonlinear() || self.second.is_nonlinear()
    }

    fn name(&self) -> String {
        format!("{} + {}", self.first.name(), self.second.name())
    }
}

/// One line of the iteration log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord<T> {
    pub iter: usize,
    /// `‖u_{k} − u_{k−1}‖_ρ`.
    pub delta_norm: T,
    /// `delta_norm / previous delta_norm` (`None` for the first update).
    pub ratio: Option<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointReport<T: Real> {
    pub u: Trajectory<T>,
    /// Number of updates performed.
    pub iters: usize,
    /// Largest observed `‖Δ_{k+1}‖/‖Δ_k‖` above the round-off floor (0 if no pair qualified).
    pub ratio: T,
    pub log: Vec<IterationRecord<T>>,
    /// `‖B u + M∞ u − F‖_ρ` with `B` the discrete operator of the scheme.
    pub residual: T,
    pub c0: T,
    pub norm_estimate: T,
}

/// Residual of the perturbed equation.
pub fn perturbed_residual<T: Real>(p: &EvoProblem<T>, minf: &dyn Perturbation<T>, u: &Trajectory<T>) -> Result<T> {
    let r = &(&apply_operator(p, u)? + &minf.apply(u)?) - &p.forcing;
    Ok(weighted_norm(&r, &p.weight))
}

const DIVERGENCE_STREAK: usize = 3;

/// Iterate, update count, worst ratio and log.
type PicardOutcome<T> = (Trajectory<T>, usize, T, Vec<IterationRecord<T>>);

fn picard<T: Real>(
    p: &EvoProblem<T>,
    stepper: &Stepper<T>,
    minf: &dyn Perturbation<T>,
    tol: T,
    max_iter: usize,
) -> Result<PicardOutcome<T>> {
    if max_iter == 0 {
        return Err(Error::InvalidArgument("max_iter must be positive".into()));
    }
    let w = &p.weight;
    let mut u = stepper.march(&p.forcing)?;
    let floor = T::default_epsilon() * T::lit(1e3) * (T::one() + weighted_norm(&u, w));
    let mut log = Vec::new();
    let mut prev: Option<T> = None;
    let mut worst = T::zero();
    let mut streak = 0;
    for iter in 1..=max_iter {
        let rhs = &p.forcing - &minf.apply(&u)?;
        let next = stepper.march(&rhs)?;
        let delta = weighted_norm(&(&next - &u), w);
        let ratio = prev.filter(|d| *d > floor).map(|d| delta / d);
        log.push(IterationRecord {
            iter,
            delta_norm: delta,
            ratio,
        });
        u = next;
        if let Some(r) = ratio {
            worst = worst.max(r);
            if r >= T::one() {
                streak += 1;
                if streak >= DIVERGENCE_STREAK {
                    return Err(Error::Divergence {
                        iter,
                        ratio: r.as_f64(),
                    });
                }
            } else {
                streak = 0;
            }
        }
        if delta <= tol {
            return Ok((u, iter, worst, log));
        }
        prev = Some(delta);
    }
    let last = log.last().and_then(|r| r.ratio).unwrap_or(T::zero());
    Err(Error::Timeout {
        iters: max_iter,
        last_ratio: last.as_f64(),
    })
}

/// Picard iteration `u ← solve(F − M∞ u)`, started from `solve(F)`.
pub fn fixed_point_solve<T: Real>(
    p: &EvoProblem<T>,
    minf: &dyn Perturbation<T>,
    tol: T,
    max_iter: usize,
) -> Result<FixedPointReport<T>> {
    let cert = p.certificate()?;
    let m = minf.norm_estimate(&p.weight);
    if !(m < cert.c0) {
        return Err(Error::Precondition(format!(
            "perturbation bound {m:e} is not below c0 = {:e} at rho = {}; use a larger rho",
            cert.c0,
            p.weight.rho()
        )));
    }
    let stepper = Stepper::new(p)?;
    let (u, iters, ratio, log) = picard(p, &stepper, minf, tol, max_iter)?;
    let residual = perturbed_residual(p, minf, &u)?;
    Ok(FixedPointReport {
        u,
        iters,
        ratio,
        log,
        residual,
        c0: cert.c0,
        norm_estimate: m,
    })
}

/// Constants of the two-by-two coercivity test at one weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coercivity<T> {
    pub rho: T,
    /// `min_t λ_min(ι_⊥ᵀ sym(ρM₀ + ½Ṁ₀ + M₁) ι_⊥)`.
    pub q_perp: T,
    /// `max_t ‖ι_Vᵀ sym(M₁) ι_⊥‖`.
    pub coupling: T,
    /// `‖M∞‖` bound at this weight.
    pub m_norm: T,
    /// Smallest eigenvalue of `[[ε, −(b+m)], [−(b+m), q_⊥ − m]]`.
    pub constant: T,
}

/// Evaluates the coercivity constant of the perturbed problem split along `V ⊕ V⊥`.
pub fn subspace_coercivity<T: Real>(
    p: &EvoProblem<T>,
    minf: &dyn Perturbation<T>,
    v: &SubspaceProjector<T>,
    eps_margin: T,
    rho: T,
) -> Result<Coercivity<T>> {
    let w = Weight::new(rho)?;
    let iv = v.basis();
    let ip = v.complement();
    let mut q_perp = T::max_value().unwrap_or_else(|| T::lit(f64::MAX));
    let mut coupling = T::zero();
    for t in p.grid().times() {
        let m0 = p.m0.at(t);
        let s = sym_part(&(&m0 * rho + derivative_at(&p.m0, t) * T::lit(0.5) + p.m1.at(t)));
        if v.dim_perp() > 0 {
            q_perp = q_perp.min(min_eig_sym(&(ip.transpose() * &s * ip)));
            coupling = coupling.max(spectral_norm(&(iv.transpose() * &s * ip)));
        }
    }
    let m = minf.norm_estimate(&w);
    let constant = if v.dim_perp() == 0 {
        eps_margin
    } else {
        let a = eps_margin;
        let c = q_perp - m;
        let b = coupling + m;
        let mean = (a + c) * T::lit(0.5);
        let rad = (((a - c) * T::lit(0.5)).powi(2) + b * b).sqrt();
        mean - rad
    };
    Ok(Coercivity {
        rho,
        q_perp,
        coupling,
        m_norm: m,
        constant,
    })
}

/// Checks `⟨M∞ P_V u, P_V u⟩_ρ ≥ (ε − c₀)‖P_V u‖²_ρ` on seeded random trajectories.
pub fn check_subspace_inequality<T: Real>(
    p: &EvoProblem<T>,
    minf: &dyn Perturbation<T>,
    v: &SubspaceProjector<T>,
    eps_margin: T,
    c0: T,
    samples: usize,
    seed: u64,
) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = *p.grid();
    for s in 0..samples {
        let raw = random_trajectory(&g, p.dim(), &mut rng);
        let pu = v.project_trajectory(&raw);
        let n2 = weighted_inner(&pu, &pu, &p.weight)?;
        let lhs = weighted_inner(&minf.apply(&pu)?, &pu, &p.weight)?;
        let bound = (eps_margin - c0) * n2;
        if lhs < bound - T::lit(1e-12) * n2.max(T::one()) {
            return Err(Error::Precondition(format!(
                "sample {s}: <Minf P_V u, P_V u> = {lhs:e} is below (eps - c0)|P_V u|^2 = {bound:e}"
            )));
        }
    }
    Ok(())
}

/// Uniform random samples in `[−1, 1]`, vanishing at `t_min`.
pub fn random_trajectory<T: Real, R: Rng>(g: &TimeGrid<T>, dim: usize, rng: &mut R) -> Trajectory<T> {
    let mut u = Trajectory::zeros(*g, dim);
    for k in 1..g.len() {
        for i in 0..dim {
            u.values_mut()[(i, k)] = T::lit(rng.random_range(-1.0..1.0));
        }
    }
    u
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceSolveReport<T: Real> {
    pub u: Trajectory<T>,
    pub iters: usize,
    /// Weight at which the iteration converged.
    pub rho: T,
    pub ratio: T,
    pub log: Vec<IterationRecord<T>>,
    pub residual: T,
    pub certificate: SubspaceCertificate<T>,
    pub coercivity: Coercivity<T>,
    /// Weights tried before `rho`, with the reason they were skipped.
    pub skipped: Vec<(T, String)>,
}

#[derive(Debug, Clone)]
pub struct SubspaceSolveOptions<T> {
    pub eps_margin: T,
    pub tol: T,
    pub max_iter: usize,
    /// Candidate weights above the problem's own `ρ`.
    pub rho_grid: Vec<T>,
    pub samples: usize,
    pub seed: u64,
}

impl<T: Real> SubspaceSolveOptions<T> {
    pub fn new(eps_margin: T, tol: T, max_iter: usize) -> Self {
        Self {
            eps_margin,
            tol,
            max_iter,
            rho_grid: crate::material_law::default_rho_grid(),
            samples: 8,
            seed: 0,
        }
    }
}

/// Picard iteration for perturbations that are only coercive on a subspace `V ⊆ ker M₀`.
///
/// Starting from the problem's weight, walks up the candidate grid until the split
/// coercivity constant is positive and the iteration converges there.
pub fn subspace_perturbed_solve<T: Real>(
    p: &EvoProblem<T>,
    minf: &dyn Perturbation<T>,
    v: &SubspaceProjector<T>,
    opts: &SubspaceSolveOptions<T>,
) -> Result<SubspaceSolveReport<T>> {
    if !(opts.eps_margin > T::zero()) {
        return Err(Error::InvalidArgument("eps_margin must be positive".into()));
    }
    let certificate = subspace_posdef_certificate(&p.m0, &p.m1, v, &p.grid().times(), T::lit(DEFAULT_TOL))?;
    let mut rhos = vec![p.weight.rho()];
    rhos.extend(opts.rho_grid.iter().copied().filter(|r| *r > p.weight.rho()));
    rhos.sort_by(|a, b| a.partial_cmp(b).expect("finite weights"));
    let mut skipped = Vec::new();
    let mut last: Option<Coercivity<T>> = None;
    for rho in rhos {
        let q = p.with_weight(Weight::new(rho)?);
        check_subspace_inequality(&q, minf, v, opts.eps_margin, certificate.c0, opts.samples, opts.seed)?;
        let coercivity = subspace_coercivity(&q, minf, v, opts.eps_margin, rho)?;
        last = Some(coercivity);
        if !(coercivity.constant > T::zero()) {
            skipped.push((rho, format!("coercivity constant {:e}", coercivity.constant)));
            continue;
        }
        let stepper = match Stepper::new(&q) {
            Ok(s) => s,
            Err(e) => {
                skipped.push((rho, e.to_string()));
                continue;
            }
        };
        match picard(&q, &stepper, minf, opts.tol, opts.max_iter) {
            Ok((u, iters, ratio, log)) => {
                let residual = perturbed_residual(&q, minf, &u)?;
                return Ok(SubspaceSolveReport {
                    u,
                    iters,
                    rho,
                    ratio,
                    log,
                    residual,
                    certificate,
                    coercivity,
                    skipped,
                });
            }
            Err(e @ (Error::Divergence { .. } | Error::Timeout { .. })) => skipped.push((rho, e.to_string())),
            Err(e) => return Err(e),
        }
    }
    let detail = last.map_or_else(String::new, |c| {
        format!(
            "; at rho = {}: q_perp = {:e}, coupling = {:e}, |Minf| = {:e}, constant = {:e}",
            c.rho, c.q_perp, c.coupling, c.m_norm, c.constant
        )
    });
    Err(Error::Precondition(format!("no weight on the grid gives a convergent coercive iteration{detail}")))
}
