//! A 1+1-D system that is hyperbolic, elliptic or parabolic depending on the region.
//!
//! Unknowns `(u, v)` live on `m` cells of `[−L, L]`. With `χ_S` the indicator of `S`,
//!
//! ```text
//! M₀ = diag(χ_{ℝ∖]−ε,0[}(x), χ_{ℝ∖]−ε,ε[}(x)),   M₁ = diag(χ_{]−ε,0[}(x), χ_{]−ε,ε[}(x)),
//! ```
//!
//! so the system is of wave type for `|x| > ε`, elliptic on `]−ε, 0[` and of heat type on
//! `]0, ε[`. The nonautonomous variant multiplies `M₀` by the ramp `φ(t)` and uses `M₁ = 1`
//! up to and including `t = 0`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::evo_solver::EvoProblem;
use crate::material_law::OperatorFamily;
use crate::scalar::Real;
use crate::spatial_operator::{grad_1d_dirichlet, make_block_skew};
use crate::weighted_time::{TimeGrid, Trajectory, Weight};


#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Autonomous,
    Nonautonomous,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixedTypeConfig<T> {
    pub epsilon: T,
    pub half_length: T,
    pub cells: usize,
    pub variant: Variant,
}

impl<T: Real> MixedTypeConfig<T> {
    pub fn new(epsilon: T, half_length: T, cells: usize, variant: Variant) -> Result<Self> {
        let cfg = Self {
            epsilon,
            half_length,
            cells,
            variant,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > T::zero()) || !(self.epsilon < self.half_length) {
            return Err(Error::InvalidArgument(format!(
                "mixed-type model needs 0 < epsilon < L, got epsilon = {}, L = {}",
                self.epsilon, self.half_length
            )));
        }
        if self.cells < 8 {
            return Err(Error::InvalidArgument(format!("mixed-type model needs at least 8 cells, got {}", self.cells)));
        }
        Ok(())
    }

    pub fn dx(&self) -> T {
        T::lit(2.0) * self.half_length / T::from_usize(self.cells).unwrap()
    }

    /// Cell centers.
    pub fn centers(&self) -> Vec<T> {
        let dx = self.dx();
        (0..self.cells)
            .map(|j| -self.half_length + dx * (T::from_usize(j).unwrap() + T::lit(0.5)))
            .collect()
    }

    pub fn dim(&self) -> usize {
        2 * self.cells
    }

    fn indicator(&self, inside: impl Fn(T) -> bool) -> Vec<T> {
        self.centers()
            .into_iter()
            .map(|x| if inside(x) { T::one() } else { T::zero() })
            .collect()
    }

    /// Diagonal of the time-independent part of `M₀`.
    pub fn m0_diagonal(&self) -> DVector<T> {
        let e = self.epsilon;
        let mut d = self.indicator(|x| !(x > -e && x < T::zero()));
        d.extend(self.indicator(|x| !(x > -e && x < e)));
        DVector::from_vec(d)
    }

    /// Diagonal of `M₁` away from the switching time.
    pub fn m1_diagonal(&self) -> DVector<T> {
        let e = self.epsilon;
        let mut d = self.indicator(|x| x > -e && x < T::zero());
        d.extend(self.indicator(|x| x > -e && x < e));
        DVector::from_vec(d)
    }

    pub fn m0(&self) -> OperatorFamily<T> {
        let base = DMatrix::from_diagonal(&self.m0_diagonal());
        match self.variant {
            Variant::Autonomous => OperatorFamily::constant(base).expect("square"),
            Variant::Nonautonomous => {
                OperatorFamily::ramp(DMatrix::zeros(self.dim(), self.dim()), base).expect("square")
            }
        }
    }

    pub fn m1(&self) -> OperatorFamily<T> {
        let ind = DMatrix::from_diagonal(&self.m1_diagonal());
        match self.variant {
            Variant::Autonomous => OperatorFamily::constant(ind).expect("square"),
            Variant::Nonautonomous => {
                OperatorFamily::piecewise(vec![T::zero()], vec![DMatrix::identity(self.dim(), self.dim()), ind])
                    .expect("two pieces")
            }
        }
    }
}

/// Assembles `M₀`, `M₁` and `A = [[0, Dᵀ], [−D, 0]]` for the given forcing.
pub fn build_mixed_type<T: Real>(cfg: &MixedTypeConfig<T>, w: Weight<T>, forcing: Trajectory<T>) -> Result<EvoProblem<T>> {
    cfg.validate()?;
    let a = make_block_skew(&grad_1d_dirichlet(cfg.cells, cfg.dx())?);
    EvoProblem::new(cfg.m0(), cfg.m1(), a, forcing, w)
}

/// Smooth forcing: a spatial bump centered at `x = −L/2` switched on by a `sin²` ramp.
pub fn default_forcing<T: Real>(cfg: &MixedTypeConfig<T>, grid: TimeGrid<T>) -> Trajectory<T> {
    let xs = cfg.centers();
    let l = cfg.half_length;
    let (t0, t1) = (grid.t_min(), grid.t_max());
    let span = t1 - t0;
    Trajectory::from_fn(grid, cfg.dim(), |t| {
        let s = (t - t0) / span;
        let ramp = (T::pi() * s).sin().powi(2);
        let mut v = DVector::zeros(cfg.dim());
        for (j, x) in xs.iter().enumerate() {
            let r = (*x + l * T::lit(0.5)) / (l * T::lit(0.25));
            let bump = (-(r * r)).exp();
            v[j] = ramp * bump;
            v[cfg.cells + j] = ramp * bump * T::lit(0.5);
        }
        v
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionType {
    Hyperbolic,
    Parabolic,
    Elliptic,
}

impl RegionType {
    pub fn letter(self) -> char {
        match self {
            RegionType::Hyperbolic => 'H',
            RegionType::Parabolic => 'P',
            RegionType::Elliptic => 'E',
        }
    }
}

/// Type of each cell at time `t`, read off how many of its two unknowns carry a time derivative.
pub fn region_types<T: Real>(cfg: &MixedTypeConfig<T>, t: T) -> Vec<RegionType> {
    let m0 = cfg.m0().at(t);
    (0..cfg.cells)
        .map(|j| {
            let u = m0[(j, j)] > T::zero();
            let v = m0[(cfg.cells + j, cfg.cells + j)] > T::zero();
            match (u, v) {
                (true, true) => RegionType::Hyperbolic,
                (false, false) => RegionType::Elliptic,
                _ => RegionType::Parabolic,
            }
        })
        .collect()
}

/// Minimum of a per-sample profile over `t ≤ 0`, `0 < t ≤ 1` and `t > 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaseMinima<T> {
    pub before: Option<T>,
    pub ramp: Option<T>,
    pub after: Option<T>,
}

pub fn case_minima<T: Real>(profile: &[T], t_samples: &[T]) -> CaseMinima<T> {
    let mut out = CaseMinima {
        before: None,
        ramp: None,
        after: None,
    };
    let fold = |slot: &mut Option<T>, v: T| *slot = Some(slot.map_or(v, |s| s.min(v)));
    for (v, t) in profile.iter().zip(t_samples) {
        if *t <= T::zero() {
            fold(&mut out.before, *v);
        } else if *t <= T::one() {
            fold(&mut out.ramp, *v);
        } else {
            fold(&mut out.after, *v);
        }
    }
    out
}
