//! The exponentially weighted time axis, discretized on a uniform grid.
//!
//! A [`Trajectory`] holds `n + 1` samples `u_k = u(t_k)` of a `ℝᵈ`-valued signal and is
//! read as an element of the space of functions that are square integrable against
//! `e^{-2ρt} dt`, zero-extended before `t_min`. The discrete operators follow three
//! conventions used everywhere in the crate:
//!
//! * `∂₀` is the backward difference `(u_k − u_{k−1})/h` with `u_{−1} = 0`, so a signal that
//!   does not vanish at `t_min` carries a jump there (`u_0/h` at `k = 0`).
//! * `∂₀⁻¹` is the left-rectangle running sum, the exact inverse of the backward difference.
//! * Weighted norms use the trapezoid rule: `h·Σ' ⟨u_k, v_k⟩ e^{−2ρ t_k}` with the first and
//!   last terms halved. Truncation at `t_max` is the caller's responsibility.
//!
//! # Fourier-Laplace normalization
//!
//! [`fourier_laplace`] samples
//! `(𝓛_ρ u)(ω_j) = (h/√(2π)) Σ_k e^{−iω_j t_k} e^{−ρ t_k} u_k` at the `N = n + 1` DFT
//! frequencies `ω_j = 2π j'/(N h)`, `j' ∈ {−⌊N/2⌋, …, ⌈N/2⌉−1}` stored in FFT order. With
//! `Δω = 2π/(N h)` the identity `Δω Σ_j |𝓛_ρ u(ω_j)|² = h Σ_k e^{−2ρ t_k}|u_k|²` is exact,
//! i.e. Plancherel holds against the *rectangle-rule* weighted norm
//! ([`weighted_norm_rect`]). For signals vanishing at both ends the rectangle and trapezoid
//! norms coincide.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{shape_err, Error, Result};
use crate::scalar::Real;

/// Uniform grid `t_k = t_min + k·h`, `k = 0..=n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid<T> {
    t_min: T,
    t_max: T,
    n: usize,
}

impl<T: Real> TimeGrid<T> {
    pub fn new(t_min: T, t_max: T, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidArgument(format!("grid needs n >= 2 intervals, got {n}")));
        }
        if !(t_max > t_min) {
            return Err(Error::InvalidArgument(format!(
                "grid needs t_max > t_min, got [{t_min}, {t_max}]"
            )));
        }
        Ok(Self { t_min, t_max, n })
    }

    /// Grid whose step honours `1/h ≥ 4ρ`, rounded up to a power-of-two interval count.
    pub fn recommended(t_min: T, t_max: T, rho: T) -> Result<Self> {
        let span = (t_max - t_min).as_f64();
        let min_n = (4.0 * rho.as_f64() * span).ceil().max(2.0) as usize;
        Self::new(t_min, t_max, min_n.next_power_of_two())
    }

    pub fn t_min(&self) -> T {
        self.t_min
    }

    pub fn t_max(&self) -> T {
        self.t_max
    }

    /// Number of intervals.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of samples, `n + 1`.
    pub fn len(&self) -> usize {
        self.n + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn h(&self) -> T {
        (self.t_max - self.t_min) / T::from_usize(self.n).unwrap()
    }

    pub fn t(&self, k: usize) -> T {
        self.t_min + self.h() * T::from_usize(k).unwrap()
    }

    pub fn times(&self) -> Vec<T> {
        (0..=self.n).map(|k| self.t(k)).collect()
    }

    /// Same interval, twice as many steps.
    pub fn refined(&self) -> Self {
        Self {
            n: self.n * 2,
            ..*self
        }
    }

    fn slack(&self) -> T {
        let scale = self.t_min.abs().max(self.t_max.abs()).max(self.h());
        scale * T::default_epsilon() * T::lit(64.0)
    }

    /// Largest index with `t_k ≤ a` (up to rounding of the grid times), if any.
    pub fn index_at_or_before(&self, a: T) -> Option<usize> {
        let slack = self.slack();
        if a + slack < self.t_min {
            return None;
        }
        let raw = ((a - self.t_min + slack) / self.h()).floor();
        let k = raw.as_f64().max(0.0) as usize;
        Some(k.min(self.n))
    }

    /// Nearest grid index to `t`, clamped into the grid.
    pub fn nearest_index(&self, t: T) -> usize {
        let raw = ((t - self.t_min) / self.h()).round().as_f64();
        raw.clamp(0.0, self.n as f64) as usize
    }

    /// Trapezoid quadrature weight at index `k` (without the exponential factor).
    pub fn trapezoid_weight(&self, k: usize) -> T {
        if k == 0 || k == self.n {
            self.h() * T::lit(0.5)
        } else {
            self.h()
        }
    }
}

/// Exponential weight `ρ > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Weight<T>(T);

impl<T: Real> Weight<T> {
    pub fn new(rho: T) -> Result<Self> {
        if rho > T::zero() && rho.is_finite() {
            Ok(Self(rho))
        } else {
            Err(Error::InvalidArgument(format!("weight rho must be positive, got {rho}")))
        }
    }

    pub fn rho(&self) -> T {
        self.0
    }

    /// `e^{−2ρt}`.
    pub fn density(&self, t: T) -> T {
        (-(T::lit(2.0) * self.0 * t)).exp()
    }
}

/// Time-sampled `ℝᵈ`-valued signal; column `k` of `values` is `u(t_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T: Real> {
    grid: TimeGrid<T>,
    values: DMatrix<T>,
}

impl<T: Real> Trajectory<T> {
    pub fn zeros(grid: TimeGrid<T>, dim: usize) -> Self {
        Self {
            grid,
            values: DMatrix::zeros(dim, grid.len()),
        }
    }

    /// Wraps a `dim × (n+1)` sample matrix.
    pub fn from_matrix(grid: TimeGrid<T>, values: DMatrix<T>) -> Result<Self> {
        if values.ncols() != grid.len() {
            return Err(shape_err("trajectory samples", grid.len(), values.ncols()));
        }
        if values.nrows() == 0 {
            return Err(Error::InvalidArgument("trajectory dimension must be positive".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: TimeGrid<T>, dim: usize, mut f: impl FnMut(T) -> DVector<T>) -> Self {
        let mut values = DMatrix::zeros(dim, grid.len());
        for k in 0..grid.len() {
            let v = f(grid.t(k));
            assert_eq!(v.len(), dim, "sample dimension");
            values.set_column(k, &v);
        }
        Self { grid, values }
    }

    pub fn from_scalar_fn(grid: TimeGrid<T>, mut f: impl FnMut(T) -> T) -> Self {
        Self::from_fn(grid, 1, |t| DVector::from_element(1, f(t)))
    }

    pub fn grid(&self) -> &TimeGrid<T> {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> &DMatrix<T> {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut DMatrix<T> {
        &mut self.values
    }

    pub fn into_values(self) -> DMatrix<T> {
        self.values
    }

    pub fn sample(&self, k: usize) -> DVector<T> {
        self.values.column(k).into_owned()
    }

    pub fn set_sample(&mut self, k: usize, v: &DVector<T>) {
        self.values.set_column(k, v);
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.grid == other.grid && self.dim() == other.dim()
    }

    pub(crate) fn check_shape(&self, other: &Self, context: &'static str) -> Result<()> {
        if self.grid != other.grid {
            return Err(shape_err(
                context,
                format!("grid {:?}", self.grid),
                format!("grid {:?}", other.grid),
            ));
        }
        if self.dim() != other.dim() {
            return Err(shape_err(context, self.dim(), other.dim()));
        }
        Ok(())
    }

    pub fn scaled(&self, s: T) -> Self {
        Self {
            grid: self.grid,
            values: &self.values * s,
        }
    }

    /// Applies `f` to every sample vector.
    pub fn map_samples(&self, out_dim: usize, mut f: impl FnMut(usize, T, DVector<T>) -> DVector<T>) -> Self {
        let mut values = DMatrix::zeros(out_dim, self.grid.len());
        for k in 0..self.grid.len() {
            let v = f(k, self.grid.t(k), self.sample(k));
            values.set_column(k, &v);
        }
        Self {
            grid: self.grid,
            values,
        }
    }

    /// Rows `start..start+len` as a trajectory of dimension `len`.
    pub fn components(&self, start: usize, len: usize) -> Self {
        Self {
            grid: self.grid,
            values: self.values.rows(start, len).into_owned(),
        }
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |a, b| a.max(b.abs()))
    }

    /// Max-abs over samples with `t_k ≤ a`.
    pub fn max_abs_up_to(&self, a: T) -> T {
        match self.grid.index_at_or_before(a) {
            None => T::zero(),
            Some(last) => self
                .values
                .columns(0, last + 1)
                .iter()
                .fold(T::zero(), |acc, v| acc.max(v.abs())),
        }
    }

    /// Euclidean norm of each sample (the per-time plot column).
    pub fn pointwise_norms(&self) -> Vec<T> {
        (0..self.grid.len()).map(|k| self.values.column(k).norm()).collect()
    }

    /// CSV with header `t,v0,…,v{d-1}`, 17 significant digits.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend((0..self.dim()).map(|i| format!("v{i}")));
        w.write_record(&header)?;
        for k in 0..self.grid.len() {
            let mut row = vec![format!("{:.16e}", self.grid.t(k))];
            row.extend(self.values.column(k).iter().map(|v| format!("{v:.16e}")));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the CSV layout written by [`Trajectory::write_csv`]; the time column must be uniform.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let headers = r.headers()?.clone();
        if headers.get(0).map(str::trim) != Some("t") || headers.len() < 2 {
            return Err(Error::Parse("trajectory csv needs header t,v0,...".into()));
        }
        let dim = headers.len() - 1;
        let mut times = Vec::new();
        let mut cols: Vec<T> = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let parse = |s: &str| -> Result<T> {
                s.trim()
                    .parse::<f64>()
                    .map(T::lit)
                    .map_err(|e| Error::Parse(format!("row {}: {e}", line + 2)))
            };
            times.push(parse(&rec[0])?);
            for i in 0..dim {
                cols.push(parse(&rec[i + 1])?);
            }
        }
        if times.len() < 3 {
            return Err(Error::Parse("trajectory csv needs at least 3 rows".into()));
        }
        let n = times.len() - 1;
        let grid = TimeGrid::new(times[0], times[n], n)?;
        let tol = grid.h() * T::lit(1e-6);
        for (k, t) in times.iter().enumerate() {
            if (*t - grid.t(k)).abs() > tol {
                return Err(Error::Parse(format!("time column is not uniform at row {}", k + 2)));
            }
        }
        let values = DMatrix::from_column_slice(dim, grid.len(), &cols);
        Self::from_matrix(grid, values)
    }
}

impl<T: Real> std::ops::Add for &Trajectory<T> {
    type Output = Trajectory<T>;

    fn add(self, rhs: Self) -> Trajectory<T> {
        assert!(self.same_shape(rhs), "trajectory shapes differ");
        Trajectory {
            grid: self.grid,
            values: &self.values + &rhs.values,
        }
    }
}

impl<T: Real> std::ops::Sub for &Trajectory<T> {
    type Output = Trajectory<T>;

    fn sub(self, rhs: Self) -> Trajectory<T> {
        assert!(self.same_shape(rhs), "trajectory shapes differ");
        Trajectory {
            grid: self.grid,
            values: &self.values - &rhs.values,
        }
    }
}

/// `h·Σ' ⟨u_k, v_k⟩ e^{−2ρ t_k}` with trapezoid endpoint halving.
pub fn weighted_inner<T: Real>(u: &Trajectory<T>, v: &Trajectory<T>, w: &Weight<T>) -> Result<T> {
    u.check_shape(v, "weighted_inner")?;
    Ok(weighted_inner_upto(u, v, w, u.grid.n))
}

/// Weighted inner product restricted to indices `0..=last`, trapezoid-halved at both ends
/// of that range.
pub(crate) fn weighted_inner_upto<T: Real>(u: &Trajectory<T>, v: &Trajectory<T>, w: &Weight<T>, last: usize) -> T {
    let g = &u.grid;
    let h = g.h();
    let mut acc = T::zero();
    for k in 0..=last {
        let q = if k == 0 || k == last { h * T::lit(0.5) } else { h };
        acc += q * w.density(g.t(k)) * u.values.column(k).dot(&v.values.column(k));
    }
    acc
}

pub fn weighted_norm<T: Real>(u: &Trajectory<T>, w: &Weight<T>) -> T {
    weighted_inner_upto(u, u, w, u.grid.n).max(T::zero()).sqrt()
}

/// Rectangle-rule weighted norm `(h Σ_k |u_k|² e^{−2ρ t_k})^{1/2}`; the norm the discrete
/// Fourier-Laplace transform is unitary for.
pub fn weighted_norm_rect<T: Real>(u: &Trajectory<T>, w: &Weight<T>) -> T {
    let g = &u.grid;
    let mut acc = T::zero();
    for k in 0..g.len() {
        acc += w.density(g.t(k)) * u.values.column(k).norm_squared();
    }
    (acc * g.h()).sqrt()
}

/// `‖∂₀⁻¹u‖_ρ`, the stand-in for the `H_{ρ,−1}` norm.
pub fn weighted_norm_minus_one<T: Real>(u: &Trajectory<T>, w: &Weight<T>) -> T {
    weighted_norm(&d0_inv(u), w)
}

/// Backward difference with zero extension before `t_min`.
pub fn d0_apply<T: Real>(u: &Trajectory<T>) -> Trajectory<T> {
    let inv_h = T::one() / u.grid.h();
    let mut out = u.values.clone();
    for k in (1..u.grid.len()).rev() {
        let diff = (u.values.column(k) - u.values.column(k - 1)) * inv_h;
        out.set_column(k, &diff);
    }
    out.column_mut(0).scale_mut(inv_h);
    Trajectory {
        grid: u.grid,
        values: out,
    }
}

/// Causal running integral `v_k = h Σ_{j≤k} u_j` (the `ρ > 0` branch of `∂₀⁻¹`).
pub fn d0_inv<T: Real>(u: &Trajectory<T>) -> Trajectory<T> {
    let h = u.grid.h();
    let mut out = DMatrix::zeros(u.dim(), u.grid.len());
    let mut acc = DVector::zeros(u.dim());
    for k in 0..u.grid.len() {
        acc += u.values.column(k) * h;
        out.set_column(k, &acc);
    }
    Trajectory {
        grid: u.grid,
        values: out,
    }
}

/// Continuum adjoint formula `∂₀* = −∂₀ + 2ρ`, realized as minus the forward difference
/// (zero beyond `t_max`) plus `2ρu`.
pub fn d0_star_apply<T: Real>(u: &Trajectory<T>, w: &Weight<T>) -> Trajectory<T> {
    let inv_h = T::one() / u.grid.h();
    let two_rho = T::lit(2.0) * w.rho();
    let n = u.grid.n;
    let mut out = DMatrix::zeros(u.dim(), u.grid.len());
    for k in 0..=n {
        let next = if k < n {
            u.values.column(k + 1).into_owned()
        } else {
            DVector::zeros(u.dim())
        };
        let col = (u.values.column(k) - next) * inv_h + u.values.column(k) * two_rho;
        out.set_column(k, &col);
    }
    Trajectory {
        grid: u.grid,
        values: out,
    }
}

/// Exact adjoint of [`d0_apply`] under [`weighted_inner`]: `Q⁻¹ Dᵀ Q` with `Q` the diagonal
/// of quadrature-times-density weights.
pub fn exact_weighted_adjoint<T: Real>(u: &Trajectory<T>, w: &Weight<T>) -> Trajectory<T> {
    let g = u.grid;
    let inv_h = T::one() / g.h();
    let q: Vec<T> = (0..g.len()).map(|k| g.trapezoid_weight(k) * w.density(g.t(k))).collect();
    let mut out = DMatrix::zeros(u.dim(), g.len());
    for k in 0..g.len() {
        let mut col = u.values.column(k) * inv_h;
        if k < g.n {
            col -= u.values.column(k + 1) * (inv_h * q[k + 1] / q[k]);
        }
        out.set_column(k, &col);
    }
    Trajectory { grid: g, values: out }
}

/// Solves `(1 + ε∂₀)v = u` by a forward sweep.
pub fn resolvent_eps<T: Real>(u: &Trajectory<T>, eps: T) -> Result<Trajectory<T>> {
    if !(eps > T::zero()) {
        return Err(Error::InvalidArgument(format!("resolvent needs eps > 0, got {eps}")));
    }
    let r = eps / u.grid.h();
    let diag = T::one() + r;
    let mut out = DMatrix::zeros(u.dim(), u.grid.len());
    let mut prev = DVector::zeros(u.dim());
    for k in 0..u.grid.len() {
        let v = (u.values.column(k) + &prev * r) / diag;
        out.set_column(k, &v);
        prev = v;
    }
    Ok(Trajectory {
        grid: u.grid,
        values: out,
    })
}

/// Multiplier `χ_{]−∞,a]}(m₀)`: zeroes every sample with `t_k > a`.
pub fn cutoff<T: Real>(u: &Trajectory<T>, a: T) -> Trajectory<T> {
    let mut out = u.clone();
    let first_zero = match u.grid.index_at_or_before(a) {
        None => 0,
        Some(k) => k + 1,
    };
    for k in first_zero..u.grid.len() {
        out.values.column_mut(k).fill(T::zero());
    }
    out
}

/// Complement of [`cutoff`]: keeps only samples with `t_k > a`.
pub fn cutoff_complement<T: Real>(u: &Trajectory<T>, a: T) -> Trajectory<T> {
    u - &cutoff(u, a)
}

/// Samples of the Fourier-Laplace transform on the DFT frequency grid (FFT order).
#[derive(Debug, Clone)]
pub struct Spectrum<T: Real> {
    grid: TimeGrid<T>,
    rho: T,
    omega: Vec<T>,
    /// `values[i][j]`: component `i` at frequency `omega[j]`.
    values: Vec<Vec<Complex<T>>>,
}

impl<T: Real> Spectrum<T> {
    pub fn omega(&self) -> &[T] {
        &self.omega
    }

    pub fn component(&self, i: usize) -> &[Complex<T>] {
        &self.values[i]
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn delta_omega(&self) -> T {
        T::two_pi() / (T::from_usize(self.grid.len()).unwrap() * self.grid.h())
    }

    /// `(Δω Σ_j |·|²)^{1/2}`, the discrete `L²(ℝ)` norm.
    pub fn l2_norm(&self) -> T {
        let s = self
            .values
            .iter()
            .flat_map(|c| c.iter())
            .fold(T::zero(), |a, z| a + z.norm_sqr());
        (s * self.delta_omega()).sqrt()
    }

    /// Multiplies by a scalar symbol `σ(ω)`; `σ(ω) = iω + ρ` realizes `∂₀`.
    pub fn apply_symbol(&self, sigma: impl Fn(T) -> Complex<T>) -> Self {
        let mut out = self.clone();
        for comp in &mut out.values {
            for (z, om) in comp.iter_mut().zip(&self.omega) {
                *z *= sigma(*om);
            }
        }
        out
    }
}

fn polar<T: Real>(r: T, theta: T) -> Complex<T> {
    Complex::new(r * theta.cos(), r * theta.sin())
}

fn fft_frequencies<T: Real>(grid: &TimeGrid<T>) -> Vec<T> {
    let n = grid.len();
    let scale = T::two_pi() / (T::from_usize(n).unwrap() * grid.h());
    (0..n)
        .map(|j| {
            let jj = if j < n.div_ceil(2) { j as f64 } else { j as f64 - n as f64 };
            T::lit(jj) * scale
        })
        .collect()
}

/// Discrete Fourier-Laplace transform; see the module docs for the normalization.
pub fn fourier_laplace<T: Real>(u: &Trajectory<T>, w: &Weight<T>) -> Spectrum<T> {
    let g = u.grid;
    let n = g.len();
    let omega = fft_frequencies(&g);
    let fft = FftPlanner::<T>::new().plan_fft_forward(n);
    let pref = g.h() / T::two_pi().sqrt();
    let values = (0..u.dim())
        .map(|i| {
            let mut buf: Vec<Complex<T>> = (0..n)
                .map(|k| Complex::new(u.values[(i, k)] * (-(w.rho() * g.t(k))).exp(), T::zero()))
                .collect();
            fft.process(&mut buf);
            buf.iter()
                .zip(&omega)
                .map(|(z, om)| *z * polar(pref, -(*om * g.t_min())))
                .collect()
        })
        .collect();
    Spectrum {
        grid: g,
        rho: w.rho(),
        omega,
        values,
    }
}

/// Inverse of [`fourier_laplace`]; returns the real part of the reconstructed samples.
pub fn inverse_fourier_laplace<T: Real>(s: &Spectrum<T>) -> Trajectory<T> {
    let g = s.grid;
    let n = g.len();
    let ifft = FftPlanner::<T>::new().plan_fft_inverse(n);
    let pref = T::two_pi().sqrt() / (g.h() * T::from_usize(n).unwrap());
    let mut values = DMatrix::zeros(s.dim(), n);
    for (i, comp) in s.values.iter().enumerate() {
        let mut buf: Vec<Complex<T>> = comp
            .iter()
            .zip(&s.omega)
            .map(|(z, om)| *z * polar(pref, *om * g.t_min()))
            .collect();
        ifft.process(&mut buf);
        for (k, z) in buf.iter().enumerate() {
            values[(i, k)] = z.re * (s.rho * g.t(k)).exp();
        }
    }
    Trajectory { grid: g, values }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(a: f64, b: f64, n: usize) -> TimeGrid<f64> {
        TimeGrid::new(a, b, n).unwrap()
    }

    fn bump(t: f64, c: f64, r: f64) -> f64 {
        let s = (t - c) / r;
        if s.abs() < 1.0 {
            (-1.0 / (1.0 - s * s)).exp()
        } else {
            0.0
        }
    }

    #[test]
    fn grid_rejects_bad_input() {
        assert!(TimeGrid::new(0.0, 1.0, 1).is_err());
        assert!(TimeGrid::new(1.0, 1.0, 4).is_err());
        assert!(Weight::new(0.0).is_err());
        assert!(Weight::new(-1.0).is_err());
    }

    #[test]
    fn inner_of_constant_one_matches_closed_form() {
        let w = Weight::new(1.0).unwrap();
        let mut prev_err = f64::INFINITY;
        for n in [16, 32, 64] {
            let one = Trajectory::from_scalar_fn(grid(0.0, 1.0, n), |_| 1.0);
            let got = weighted_inner(&one, &one, &w).unwrap();
            let exact = (1.0 - (-2.0f64).exp()) / 2.0;
            let err = (got - exact).abs();
            assert!(err < 0.5 / (n * n) as f64, "n = {n}: {err}");
            assert!(err < prev_err / 3.5);
            prev_err = err;
        }
    }

    #[test]
    fn inner_with_zero_and_shape_errors() {
        let g = grid(0.0, 1.0, 8);
        let w = Weight::new(2.0).unwrap();
        let z = Trajectory::zeros(g, 2);
        let v = Trajectory::from_fn(g, 2, |t| DVector::from_vec(vec![t, 1.0 - t]));
        assert_eq!(weighted_inner(&z, &v, &w).unwrap(), 0.0);
        let other = Trajectory::zeros(grid(0.0, 1.0, 9), 2);
        assert!(matches!(weighted_inner(&v, &other, &w), Err(Error::Shape { .. })));
        assert!(weighted_inner(&v, &Trajectory::zeros(g, 3), &w).is_err());
    }

    #[test]
    fn d0_of_constant_and_identity() {
        let g = grid(0.0, 1.0, 10);
        let c = Trajectory::from_scalar_fn(g, |_| 3.0);
        let d = d0_apply(&c);
        assert!((d.values()[(0, 0)] - 3.0 / g.h()).abs() < 1e-12);
        assert!((1..g.len()).all(|k| d.values()[(0, k)] == 0.0));
        let id = Trajectory::from_scalar_fn(g, |t| t);
        let d = d0_apply(&id);
        assert!((1..g.len()).all(|k| (d.values()[(0, k)] - 1.0).abs() < 1e-12));
    }

    #[test]
    fn d0_of_sine_is_first_order() {
        let err = |n: usize| {
            let g = grid(0.0, 2.0, n);
            let d = d0_apply(&Trajectory::from_scalar_fn(g, f64::sin));
            (1..g.len())
                .map(|k| (d.values()[(0, k)] - g.t(k).cos()).abs())
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(64), err(128));
        assert!(e1 < 2.0 / 64.0);
        let ratio = e1 / e2;
        assert!((1.5..=3.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn d0_inv_integrates_a_step() {
        let g = grid(-1.0, 1.0, 200);
        let step = Trajectory::from_scalar_fn(g, |t| if t >= 0.0 { 1.0 } else { 0.0 });
        let v = d0_inv(&step);
        for k in 0..g.len() {
            assert!((v.values()[(0, k)] - g.t(k).max(0.0)).abs() <= 2.0 * g.h());
        }
        assert_eq!(d0_inv(&Trajectory::zeros(g, 1)).max_abs(), 0.0);
    }

    #[test]
    fn d0_after_d0_inv_is_identity() {
        let g = grid(0.0, 3.0, 50);
        let u = Trajectory::from_fn(g, 2, |t| DVector::from_vec(vec![t.sin(), (2.0 * t).cos() + 1.0]));
        let back = d0_apply(&d0_inv(&u));
        assert!((&back - &u).max_abs() < 1e-12);
    }

    #[test]
    fn star_of_constant_on_interior() {
        let g = grid(0.0, 1.0, 20);
        let w = Weight::new(1.5).unwrap();
        let s = d0_star_apply(&Trajectory::from_scalar_fn(g, |_| 2.0), &w);
        for k in 0..g.n() {
            assert!((s.values()[(0, k)] - 6.0).abs() < 1e-12);
        }
    }

    #[test]
    fn resolvent_rejects_nonpositive_eps_and_fixes_constants() {
        let g = grid(0.0, 4.0, 4000);
        let one = Trajectory::from_scalar_fn(g, |_| 1.0);
        assert!(resolvent_eps(&one, 0.0).is_err());
        let v = resolvent_eps(&one, 1e-3).unwrap();
        let k = g.nearest_index(1.0);
        assert!((v.values()[(0, k)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn resolvent_is_causal() {
        let g = grid(0.0, 2.0, 100);
        let u = Trajectory::from_scalar_fn(g, |t| if t >= 1.0 { bump(t, 1.5, 0.5) + 1.0 } else { 0.0 });
        let v = resolvent_eps(&u, 0.1).unwrap();
        assert!(v.max_abs_up_to(0.99) <= 1e-12);
    }

    #[test]
    fn cutoff_edges_and_idempotence() {
        let g = grid(0.0, 1.0, 10);
        let u = Trajectory::from_scalar_fn(g, |t| t + 1.0);
        assert_eq!(cutoff(&u, 5.0), u);
        assert_eq!(cutoff(&u, -0.5).max_abs(), 0.0);
        let c = cutoff(&u, 0.45);
        assert_eq!(cutoff(&c, 0.45), c);
        assert_eq!(c.values()[(0, 4)], 1.4);
        assert_eq!(c.values()[(0, 5)], 0.0);
        // a grid point itself is kept
        assert!(cutoff(&u, 0.5).values()[(0, 5)] > 0.0);
    }

    #[test]
    fn csv_round_trip() {
        let g = grid(-1.0, 1.0, 6);
        let u = Trajectory::from_fn(g, 3, |t| DVector::from_vec(vec![t, t * t, 1.0 / 3.0]));
        let mut buf = Vec::new();
        u.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,v0,v1,v2\n"));
        let back = Trajectory::<f64>::read_csv(buf.as_slice()).unwrap();
        assert!((&back - &u).max_abs() < 1e-15);
    }

    #[test]
    fn fourier_laplace_of_bump_matches_direct_sum() {
        let g = grid(-1.0, 2.0, 40);
        let w = Weight::new(0.7).unwrap();
        let u = Trajectory::from_scalar_fn(g, |t| bump(t, 0.5, 1.0));
        let s = fourier_laplace(&u, &w);
        for (j, om) in s.omega().iter().enumerate().step_by(7) {
            let mut direct = Complex::new(0.0, 0.0);
            for k in 0..g.len() {
                let t = g.t(k);
                direct += Complex::from_polar(g.h() / (2.0 * std::f64::consts::PI).sqrt(), -om * t)
                    * ((-w.rho() * t).exp() * u.values()[(0, k)]);
            }
            assert!((s.component(0)[j] - direct).norm() < 1e-12);
        }
    }

    #[test]
    fn f32_instantiation() {
        let g = TimeGrid::<f32>::new(0.0, 1.0, 16).unwrap();
        let w = Weight::new(1.0f32).unwrap();
        let u = Trajectory::from_scalar_fn(g, |t| t);
        let back = d0_apply(&d0_inv(&u));
        assert!((&back - &u).max_abs() < 1e-5);
        assert!(weighted_norm(&u, &w) > 0.0);
    }
}
