//! 1-D Kelvin-Voigt solid with a purely elastic subregion.
//!
//! State `(v, T)`: velocity and stress on `m` cells. The stress law `T = (C + D∂₀)ℰ` with
//! `D = diag(B, 0)` in the splitting `V ⊕ V⊥` (viscous cells, elastic cells) leads to
//!
//! ```text
//! ∂₀ (C + D∂₀)⁻¹ = ∂₀ M̃₀ + M̃₁ + M̃̃∞,
//! M̃₀ = diag(0, C⊥⊥⁻¹),   M̃₁ = S diag(B⁻¹, 0) Sᵀ,
//! M̃̃∞ = Ṡ diag((Σ + B∂₀)⁻¹, 0) Sᵀ + S diag(M̃∞, 0) Sᵀ,
//! ```
//!
//! with `S = [[1, 0], [−K, 1]]`, `K = C⊥⊥⁻¹ C⊥V`, the Schur complement
//! `Σ = C_VV − C_V⊥ C⊥⊥⁻¹ C⊥V` and the tail `M̃∞ = −B⁻¹ Σ (Σ + B∂₀)⁻¹`.
//! All block matrices are written in the frame `Q = [ι_V, ι_⊥]`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{shape_err, Error, Result};
use crate::evo_solver::EvoProblem;
use crate::linalg::{min_eig_sym, spd_inverse, spectral_norm, sym_part};
use crate::material_law::{check_hypotheses, derivative_at, OperatorFamily, DEFAULT_TOL};
use crate::perturbation::Perturbation;
use crate::scalar::Real;
use crate::spatial_operator::{grad_1d_dirichlet, make_block_skew};
use crate::subspace::SubspaceProjector;
use crate::weighted_time::{d0_inv, weighted_norm, TimeGrid, Trajectory, Weight};

#[derive(Debug, Clone)]
pub struct KelvinVoigtConfig<T: Real> {
    pub cells: usize,
    pub dx: T,
    /// `true` for cells with a viscous (damping) part; these span `V`.
    pub viscous: Vec<bool>,
    /// Elasticity, `m × m`.
    pub c: OperatorFamily<T>,
    /// Viscosity on `V`, `dim V × dim V`.
    pub b: OperatorFamily<T>,
    /// Density, `m × m`.
    pub eta: OperatorFamily<T>,
    /// Lower bound `c` assumed for `Re B`, `C⊥⊥` and `η`.
    pub coercivity: T,
}

impl<T: Real> KelvinVoigtConfig<T> {
    /// Left half viscous, `C = 1`, `B = 1`, `η = 1`, `c = 1`.
    pub fn reference(cells: usize, dx: T) -> Self {
        let viscous: Vec<bool> = (0..cells).map(|j| j < cells / 2).collect();
        let p = viscous.iter().filter(|x| **x).count();
        Self {
            cells,
            dx,
            viscous,
            c: OperatorFamily::identity(cells),
            b: OperatorFamily::identity(p),
            eta: OperatorFamily::identity(cells),
            coercivity: T::one(),
        }
    }

    pub fn dim_v(&self) -> usize {
        self.viscous.iter().filter(|x| **x).count()
    }

    /// Splitting of the stress space into viscous and elastic cells.
    pub fn stress_projector(&self) -> Result<SubspaceProjector<T>> {
        let coords: Vec<usize> = (0..self.cells).filter(|j| self.viscous[*j]).collect();
        SubspaceProjector::from_coordinates(self.cells, &coords)
    }

    /// `V` embedded in the full state `(v, T)`.
    pub fn state_projector(&self) -> Result<SubspaceProjector<T>> {
        let coords: Vec<usize> = (0..self.cells).filter(|j| self.viscous[*j]).map(|j| self.cells + j).collect();
        SubspaceProjector::from_coordinates(2 * self.cells, &coords)
    }

    fn check_shapes(&self) -> Result<()> {
        if self.viscous.len() != self.cells {
            return Err(shape_err("viscous mask", self.cells, self.viscous.len()));
        }
        if self.dim_v() == 0 {
            return Err(Error::InvalidArgument(
                "Kelvin-Voigt model needs at least one viscous cell (D = 0 everywhere)".into(),
            ));
        }
        if self.c.dim() != self.cells {
            return Err(shape_err("elasticity C", self.cells, self.c.dim()));
        }
        if self.eta.dim() != self.cells {
            return Err(shape_err("density eta", self.cells, self.eta.dim()));
        }
        if self.b.dim() != self.dim_v() {
            return Err(shape_err("viscosity B", self.dim_v(), self.b.dim()));
        }
        if !(self.dx > T::zero()) || !(self.coercivity > T::zero()) {
            return Err(Error::InvalidArgument("Kelvin-Voigt model needs dx > 0 and c > 0".into()));
        }
        Ok(())
    }

    /// The coercivity and regularity assumptions at the sample times.
    pub fn validate(&self, t_samples: &[T]) -> Result<()> {
        self.check_shapes()?;
        let tol = T::lit(DEFAULT_TOL);
        check_hypotheses(&self.c, t_samples, tol)?;
        check_hypotheses(&self.eta, t_samples, tol)?;
        let frame = self.stress_projector()?;
        let ip = frame.complement();
        let c = self.coercivity;
        for &t in t_samples {
            let checks = [
                ("Re B", min_eig_sym(&self.b.at(t))),
                ("eta", min_eig_sym(&self.eta.at(t))),
                (
                    "C on the elastic cells",
                    if ip.ncols() > 0 { min_eig_sym(&(ip.transpose() * self.c.at(t) * ip)) } else { c },
                ),
            ];
            for (block, lam) in checks {
                if lam < c - tol {
                    return Err(Error::SubspaceCertificate {
                        block,
                        t: t.as_f64(),
                        min_eigenvalue: lam.as_f64(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Block pieces of `C` in the frame `[ι_V, ι_⊥]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SchurParts<T: Real> {
    /// `[[1, 0], [−K, 1]]`.
    pub s: DMatrix<T>,
    /// `K = C⊥⊥⁻¹ C⊥V`.
    pub k: DMatrix<T>,
    /// `Σ = C_VV − C_V⊥ C⊥⊥⁻¹ C⊥V`.
    pub schur: DMatrix<T>,
    /// `C⊥⊥⁻¹`.
    pub c_block: DMatrix<T>,
}

impl<T: Real> SchurParts<T> {
    fn dims(&self) -> (usize, usize) {
        (self.schur.nrows(), self.c_block.nrows())
    }

    /// `S⁻¹ = [[1, 0], [K, 1]]`.
    pub fn s_inverse(&self) -> DMatrix<T> {
        let (p, q) = self.dims();
        let mut m = DMatrix::identity(p + q, p + q);
        m.view_mut((p, 0), (q, p)).copy_from(&self.k);
        m
    }

    /// `S⁻ᵀ diag(Σ, C⊥⊥) S⁻¹`, which equals `QᵀCQ`.
    pub fn reassemble(&self) -> Result<DMatrix<T>> {
        let (p, q) = self.dims();
        let mut mid = DMatrix::zeros(p + q, p + q);
        mid.view_mut((0, 0), (p, p)).copy_from(&self.schur);
        mid.view_mut((p, p), (q, q)).copy_from(&spd_inverse(&self.c_block, "elastic block")?);
        let si = self.s_inverse();
        Ok(si.transpose() * mid * si)
    }

    /// `S diag(Σ⁻¹, C⊥⊥⁻¹) Sᵀ`, which equals `QᵀC⁻¹Q`.
    pub fn reassemble_inverse(&self) -> Result<DMatrix<T>> {
        let (p, q) = self.dims();
        let mut mid = DMatrix::zeros(p + q, p + q);
        mid.view_mut((0, 0), (p, p)).copy_from(&spd_inverse(&sym_part(&self.schur), "Schur complement")?);
        mid.view_mut((p, p), (q, q)).copy_from(&self.c_block);
        Ok(&self.s * mid * self.s.transpose())
    }
}

/// Block-eliminates the elastic part of `C` (given in standard coordinates).
pub fn schur_decompose<T: Real>(c: &DMatrix<T>, v: &SubspaceProjector<T>) -> Result<SchurParts<T>> {
    if c.shape() != (v.dim(), v.dim()) {
        return Err(shape_err("Schur input", v.dim(), c.nrows()));
    }
    let (iv, ip) = (v.basis(), v.complement());
    let (p, q) = (v.dim_v(), v.dim_perp());
    let c_vv = iv.transpose() * c * iv;
    let c_pv = ip.transpose() * c * iv;
    let c_pp = ip.transpose() * c * ip;
    let c_block = spd_inverse(&sym_part(&c_pp), "elastic block of C")?;
    let k = &c_block * &c_pv;
    let schur = &c_vv - c_pv.transpose() * &k;
    let mut s = DMatrix::identity(p + q, p + q);
    s.view_mut((p, 0), (q, p)).copy_from(&(-&k));
    Ok(SchurParts { s, k, schur, c_block })
}

/// Pointwise-in-time data the Kelvin-Voigt operators need.
struct Sample<T: Real> {
    parts: SchurParts<T>,
    s_dot: DMatrix<T>,
    b: DMatrix<T>,
    b_inv: DMatrix<T>,
}

/// Frame, families and derived quantities of a validated configuration.
#[derive(Debug, Clone)]
pub struct KvOperators<T: Real> {
    cells: usize,
    frame: SubspaceProjector<T>,
    c: OperatorFamily<T>,
    b: OperatorFamily<T>,
}

impl<T: Real> KvOperators<T> {
    pub fn new(cfg: &KelvinVoigtConfig<T>) -> Result<Self> {
        cfg.check_shapes()?;
        Ok(Self {
            cells: cfg.cells,
            frame: cfg.stress_projector()?,
            c: cfg.c.clone(),
            b: cfg.b.clone(),
        })
    }

    pub fn frame(&self) -> &SubspaceProjector<T> {
        &self.frame
    }

    pub fn dim_v(&self) -> usize {
        self.frame.dim_v()
    }

    pub fn schur_at(&self, t: T) -> Result<SchurParts<T>> {
        schur_decompose(&self.c.at(t), &self.frame)
    }

    /// `K̇ = C⊥⊥⁻¹ (Ċ⊥V − Ċ⊥⊥ K)`, so `Ṡ = [[0, 0], [−K̇, 0]]`.
    fn s_dot(&self, t: T, parts: &SchurParts<T>) -> DMatrix<T> {
        let (iv, ip) = (self.frame.basis(), self.frame.complement());
        let cd = derivative_at(&self.c, t);
        let kd = &parts.c_block * (ip.transpose() * &cd * iv - ip.transpose() * &cd * ip * &parts.k);
        let (p, q) = parts.dims();
        let mut m = DMatrix::zeros(p + q, p + q);
        m.view_mut((p, 0), (q, p)).copy_from(&(-kd));
        m
    }

    /// `t ↦ S(t)` with the derivative above.
    pub fn s_family(&self) -> OperatorFamily<T> {
        let me = self.clone();
        let me2 = self.clone();
        OperatorFamily::from_fn(self.cells, move |t| me.schur_at(t).expect("validated C").s)
            .with_derivative(move |t| {
                let parts = me2.schur_at(t).expect("validated C");
                me2.s_dot(t, &parts)
            })
            .with_breakpoints(self.c.breakpoints().to_vec())
    }

    fn sample(&self, t: T) -> Result<Sample<T>> {
        let parts = self.schur_at(t)?;
        let s_dot = self.s_dot(t, &parts);
        let b = self.b.at(t);
        let b_inv = b.clone().try_inverse().ok_or(Error::Singular {
            what: "viscosity B",
            min_eigenvalue: min_eig_sym(&b).as_f64(),
        })?;
        Ok(Sample { parts, s_dot, b, b_inv })
    }

    fn samples(&self, g: &TimeGrid<T>) -> Result<Vec<Sample<T>>> {
        (0..g.len()).map(|k| self.sample(g.t(k))).collect()
    }

    /// `(Σ + B∂₀)⁻¹ y` on `V` by a forward sweep.
    pub fn viscous_resolvent(&self, y: &Trajectory<T>) -> Result<Trajectory<T>> {
        self.viscous_resolvent_with(&self.samples(y.grid())?, y)
    }

    fn viscous_resolvent_with(&self, samples: &[Sample<T>], y: &Trajectory<T>) -> Result<Trajectory<T>> {
        let g = *y.grid();
        let inv_h = T::one() / g.h();
        let mut z = Trajectory::zeros(g, y.dim());
        let mut prev = DVector::zeros(y.dim());
        for (k, s) in samples.iter().enumerate() {
            let m = &s.b * inv_h + &s.parts.schur;
            let rhs = y.sample(k) + &s.b * &prev * inv_h;
            let zk = m.lu().solve(&rhs).ok_or(Error::Singular {
                what: "viscous step",
                min_eigenvalue: f64::NAN,
            })?;
            z.set_sample(k, &zk);
            prev = zk;
        }
        Ok(z)
    }

    /// `M̃∞ y = −B⁻¹ Σ (Σ + B∂₀)⁻¹ y`.
    pub fn tail_apply(&self, y: &Trajectory<T>) -> Result<Trajectory<T>> {
        let samples = self.samples(y.grid())?;
        let z = self.viscous_resolvent_with(&samples, y)?;
        Ok(z.map_samples(y.dim(), |k, _, zk| -(&samples[k].b_inv * (&samples[k].parts.schur * zk))))
    }

    /// `Σ_{j=1}^{terms} (−∂₀⁻¹B⁻¹Σ)^j ∂₀⁻¹B⁻¹ y`, the truncated series for `∂₀⁻¹M̃∞ y`.
    pub fn neumann_partial(&self, y: &Trajectory<T>, terms: usize) -> Result<Trajectory<T>> {
        let samples = self.samples(y.grid())?;
        let binv = |x: &Trajectory<T>| x.map_samples(x.dim(), |k, _, v| &samples[k].b_inv * v);
        let mut term = d0_inv(&binv(y));
        let mut acc = Trajectory::zeros(*y.grid(), y.dim());
        for _ in 0..terms {
            let sig = term.map_samples(term.dim(), |k, _, v| &samples[k].parts.schur * v);
            term = d0_inv(&binv(&sig)).scaled(-T::one());
            acc = &acc + &term;
        }
        Ok(acc)
    }

    /// Stress part of `M̃̃∞`: `Q (Ṡ[z; 0] + S[−B⁻¹Σz; 0])` with `y = SᵀQᵀT` and
    /// `z = (Σ + B∂₀)⁻¹ y_V`.
    pub fn stress_perturbation(&self, stress: &Trajectory<T>) -> Result<Trajectory<T>> {
        let g = *stress.grid();
        let samples = self.samples(&g)?;
        let q = self.frame.frame();
        let p = self.dim_v();
        let y = stress.map_samples(self.cells, |k, _, tk| samples[k].parts.s.transpose() * (q.transpose() * tk));
        let z = self.viscous_resolvent_with(&samples, &y.components(0, p))?;
        let mut out = Trajectory::zeros(g, self.cells);
        for (k, s) in samples.iter().enumerate() {
            let zk = z.sample(k);
            let mut zv = DVector::zeros(self.cells);
            zv.rows_mut(0, p).copy_from(&zk);
            let mut tail = DVector::zeros(self.cells);
            tail.rows_mut(0, p).copy_from(&(-(&s.b_inv * (&s.parts.schur * &zk))));
            let col = &q * (&s.s_dot * zv + &s.parts.s * tail);
            out.set_sample(k, &col);
        }
        Ok(out)
    }
}

/// Frequency-domain size of `∂₀⁻¹` on a grid of step `h`: `h / (1 − e^{−ρh})`.
pub fn d0_inv_bound<T: Real>(h: T, rho: T) -> T {
    h / (T::one() - (-(rho * h)).exp())
}

/// `M̃̃∞` acting on the stress block of the full state, as a perturbation.
#[derive(Debug, Clone)]
pub struct KvPerturbation<T: Real> {
    ops: KvOperators<T>,
    h: T,
    sup_s: T,
    sup_s_dot: T,
    sup_b_inv: T,
    sup_b_inv_schur: T,
}

impl<T: Real> KvPerturbation<T> {
    pub fn new(ops: KvOperators<T>, g: &TimeGrid<T>) -> Result<Self> {
        let samples = ops.samples(g)?;
        let sup = |f: &dyn Fn(&Sample<T>) -> T| samples.iter().fold(T::zero(), |a, s| a.max(f(s)));
        Ok(Self {
            h: g.h(),
            sup_s: sup(&|s| spectral_norm(&s.parts.s)),
            sup_s_dot: sup(&|s| spectral_norm(&s.s_dot)),
            sup_b_inv: sup(&|s| spectral_norm(&s.b_inv)),
            sup_b_inv_schur: sup(&|s| spectral_norm(&(&s.b_inv * &s.parts.schur))),
            ops,
        })
    }

    pub fn operators(&self) -> &KvOperators<T> {
        &self.ops
    }

    /// `κ sup‖B⁻¹Σ‖` with `κ` from [`d0_inv_bound`]; the Neumann series converges when `< 1`.
    pub fn contraction_factor(&self, w: &Weight<T>) -> T {
        d0_inv_bound(self.h, w.rho()) * self.sup_b_inv_schur
    }
}

impl<T: Real> Perturbation<T> for KvPerturbation<T> {
    fn apply(&self, u: &Trajectory<T>) -> Result<Trajectory<T>> {
        let m = self.ops.cells;
        if u.dim() != 2 * m {
            return Err(shape_err("Kelvin-Voigt state", 2 * m, u.dim()));
        }
        let stress = self.ops.stress_perturbation(&u.components(m, m))?;
        let mut out = Trajectory::zeros(*u.grid(), 2 * m);
        out.values_mut().rows_mut(m, m).copy_from(stress.values());
        Ok(out)
    }

    /// `‖S‖ (‖Ṡ‖ + ‖S‖‖B⁻¹Σ‖) κ‖B⁻¹‖/(1 − q)` with `q = κ‖B⁻¹Σ‖`; infinite when `q ≥ 1`.
    fn norm_estimate(&self, w: &Weight<T>) -> T {
        let kappa = d0_inv_bound(self.h, w.rho());
        let q = self.contraction_factor(w);
        if q >= T::one() {
            return T::max_value().unwrap_or_else(|| T::lit(f64::MAX));
        }
        let resolvent = kappa * self.sup_b_inv / (T::one() - q);
        self.sup_s * (self.sup_s_dot + self.sup_s * self.sup_b_inv_schur) * resolvent
    }

    fn name(&self) -> String {
        "kelvin-voigt remainder".into()
    }
}

/// Assembled Kelvin-Voigt system.
#[derive(Debug, Clone)]
pub struct KvProblem<T: Real> {
    pub problem: EvoProblem<T>,
    pub minf: KvPerturbation<T>,
    /// `V` inside the full state space.
    pub v: SubspaceProjector<T>,
}

fn embed_blocks<T: Real>(top: DMatrix<T>, bottom: DMatrix<T>) -> DMatrix<T> {
    let (a, b) = (top.nrows(), bottom.nrows());
    let mut m = DMatrix::zeros(a + b, a + b);
    m.view_mut((0, 0), (a, a)).copy_from(&top);
    m.view_mut((a, a), (b, b)).copy_from(&bottom);
    m
}

/// `M₀ = diag(η, M̃₀)`, `M₁ = diag(0, M̃₁)`, `A = [[0, Dᵀ], [−D, 0]]`, and `M̃̃∞` as perturbation.
pub fn build_kv_problem<T: Real>(cfg: &KelvinVoigtConfig<T>, w: Weight<T>, forcing: Trajectory<T>) -> Result<KvProblem<T>> {
    let g = *forcing.grid();
    cfg.validate(&g.times())?;
    let m = cfg.cells;
    if forcing.dim() != 2 * m {
        return Err(shape_err("Kelvin-Voigt forcing", 2 * m, forcing.dim()));
    }
    let ops = KvOperators::new(cfg)?;
    let q = ops.frame.frame();
    let p = ops.dim_v();

    let m0_stress = {
        let ops = ops.clone();
        let q = q.clone();
        move |t: T| {
            let parts = ops.schur_at(t).expect("validated C");
            let mut mid = DMatrix::zeros(m, m);
            mid.view_mut((p, p), (m - p, m - p)).copy_from(&parts.c_block);
            &q * mid * q.transpose()
        }
    };
    let m0_stress_dot = {
        let ops = ops.clone();
        let q = q.clone();
        move |t: T| {
            let parts = ops.schur_at(t).expect("validated C");
            let ip = ops.frame.complement();
            let cd = ip.transpose() * derivative_at(&ops.c, t) * ip;
            let mut mid = DMatrix::zeros(m, m);
            mid.view_mut((p, p), (m - p, m - p)).copy_from(&(-(&parts.c_block * cd * &parts.c_block)));
            &q * mid * q.transpose()
        }
    };
    let eta = cfg.eta.clone();
    let eta_d = cfg.eta.clone();
    let mut breaks = cfg.c.breakpoints().to_vec();
    breaks.extend_from_slice(cfg.eta.breakpoints());
    let m0 = OperatorFamily::from_fn(2 * m, move |t| embed_blocks(eta.at(t), m0_stress(t)))
        .with_derivative(move |t| embed_blocks(derivative_at(&eta_d, t), m0_stress_dot(t)))
        .with_breakpoints(breaks);

    let m1 = {
        let ops = ops.clone();
        let q = q.clone();
        OperatorFamily::from_fn(2 * m, move |t| {
            let parts = ops.schur_at(t).expect("validated C");
            let b_inv = ops.b.at(t).try_inverse().expect("validated B");
            let mut mid = DMatrix::zeros(m, m);
            mid.view_mut((0, 0), (p, p)).copy_from(&b_inv);
            let stress = &q * &parts.s * mid * parts.s.transpose() * q.transpose();
            embed_blocks(DMatrix::zeros(m, m), stress)
        })
    };
    let a = make_block_skew(&grad_1d_dirichlet(m, cfg.dx)?);
    let problem = EvoProblem::new(m0, m1, a, forcing, w)?;
    let minf = KvPerturbation::new(ops, &g)?;
    Ok(KvProblem {
        problem,
        minf,
        v: cfg.state_projector()?,
    })
}

/// Momentum forcing: a spatial bump in the viscous half switched on by a `sin²` ramp.
pub fn default_forcing<T: Real>(cfg: &KelvinVoigtConfig<T>, grid: TimeGrid<T>) -> Trajectory<T> {
    let m = cfg.cells;
    let (t0, t1) = (grid.t_min(), grid.t_max());
    let center = T::from_usize(m).unwrap() * T::lit(0.3);
    let width = T::from_usize(m).unwrap() * T::lit(0.1);
    Trajectory::from_fn(grid, 2 * m, |t| {
        let s = (t - t0) / (t1 - t0);
        let ramp = (T::pi() * s).sin().powi(2);
        let mut v = DVector::zeros(2 * m);
        for j in 0..m {
            let r = (T::from_usize(j).unwrap() - center) / width;
            v[j] = ramp * (-(r * r)).exp();
        }
        v
    })
}

/// Largest observed `‖M̃∞ y‖_ρ / ‖y‖_ρ` over smooth random probes shaped like `e^{ρt}`.
pub fn neumann_tail_norm<T: Real>(
    cfg: &KelvinVoigtConfig<T>,
    w: &Weight<T>,
    grid: &TimeGrid<T>,
    probes: usize,
    seed: u64,
) -> Result<T> {
    cfg.check_shapes()?;
    let ops = KvOperators::new(cfg)?;
    let minf = KvPerturbation::new(ops.clone(), grid)?;
    let q = minf.contraction_factor(w);
    if q >= T::one() {
        return Err(Error::Precondition(format!(
            "Neumann contraction factor {q:e} >= 1 at rho = {}; use a larger rho",
            w.rho()
        )));
    }
    let p = ops.dim_v();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (t0, t1) = (grid.t_min(), grid.t_max());
    let span = t1 - t0;
    let mut best = T::zero();
    for _ in 0..probes.max(1) {
        let coeffs: Vec<(T, T)> = (0..p)
            .map(|_| (T::lit(rng.random_range(-1.0..1.0)), T::lit(rng.random_range(0.0..2.0))))
            .collect();
        let y = Trajectory::from_fn(*grid, p, |t| {
            let s = (t - t0) / span;
            let window = (T::pi() * s).sin().powi(2) * (w.rho() * (t - t1)).exp();
            DVector::from_iterator(
                p,
                coeffs.iter().map(|(a, f)| *a * window * (T::two_pi() * *f * s).cos()),
            )
        });
        let ny = weighted_norm(&y, w);
        if ny > T::zero() {
            let ratio = weighted_norm(&ops.tail_apply(&y)?, w) / ny;
            best = best.max(ratio);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::material_law::subspace_posdef_certificate;

    #[test]
    fn no_viscous_cells_rejected() {
        let mut cfg = KelvinVoigtConfig::<f64>::reference(8, 0.1);
        cfg.viscous = vec![false; 8];
        cfg.b = OperatorFamily::identity(1);
        let g = TimeGrid::new(0.0, 1.0, 8).unwrap();
        let f = Trajectory::zeros(g, 16);
        assert!(matches!(
            build_kv_problem(&cfg, Weight::new(1.0).unwrap(), f),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn block_diagonal_c_has_trivial_s() {
        let v = SubspaceProjector::from_coordinates(4, &[0, 1]).unwrap();
        let c = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0, 4.0, 5.0]));
        let parts = schur_decompose(&c, &v).unwrap();
        assert_eq!(parts.s, DMatrix::identity(4, 4));
        assert_eq!(parts.schur, DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0])));
    }

    #[test]
    fn reference_subspace_constant() {
        let cfg = KelvinVoigtConfig::<f64>::reference(8, 0.125);
        let g = TimeGrid::new(0.0, 1.0, 16).unwrap();
        let kv = build_kv_problem(&cfg, Weight::new(4.0).unwrap(), default_forcing(&cfg, g)).unwrap();
        let c = subspace_posdef_certificate(&kv.problem.m0, &kv.problem.m1, &kv.v, &g.times(), 1e-10).unwrap();
        assert!((c.c0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_schur_gives_zero_tail() {
        // C with C_VV = C_V⊥ C⊥⊥⁻¹ C⊥V makes the Schur complement vanish.
        let c = DMatrix::<f64>::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]) + DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]);
        let mut cfg = KelvinVoigtConfig::reference(2, 0.5);
        cfg.viscous = vec![true, false];
        cfg.c = OperatorFamily::constant(c.clone()).unwrap();
        let parts = schur_decompose(&c, &cfg.stress_projector().unwrap()).unwrap();
        assert!((parts.schur[(0, 0)] - 0.5).abs() < 1e-14);
        let zero_schur = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let v = cfg.stress_projector().unwrap();
        assert!(schur_decompose(&zero_schur, &v).unwrap().schur.amax() < 1e-14);
        cfg.c = OperatorFamily::constant(zero_schur).unwrap();
        let g = TimeGrid::new(0.0, 2.0, 64).unwrap();
        let tail = neumann_tail_norm(&cfg, &Weight::new(4.0).unwrap(), &g, 4, 0).unwrap();
        assert_eq!(tail, 0.0);
    }
}
