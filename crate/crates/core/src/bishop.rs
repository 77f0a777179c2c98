//! Analytic discs attached to a model through Bishop's equation
//! `u = −T₁ h(u + x, w)`, solved spectrally on a uniform circle grid.
//!
//! The grid samples `θ_k = −π + 2πk/N`, so `τ = 1` sits at index `N/2`.
//! `T₁` is the harmonic conjugate normalised to vanish at `τ = 1`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::Serialize;
use thiserror::Error;

use crate::linalg;
use crate::manifold::ManifoldModel;
use crate::polyalg::{CompiledPoly, Weight};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BishopError {
    #[error("grid size {0} must be a power of two ≥ 64")]
    InvalidGrid(usize),
    #[error("exponent α = {0} must lie in (0, 1)")]
    InvalidAlpha(f64),
    #[error("η = {0} must be positive")]
    InvalidEta(f64),
    #[error("input is not real (imaginary part {0:e})")]
    NotReal(f64),
    #[error("Bishop iteration did not converge after {iterations} iterations (last change {residual:e}, contraction estimate {contraction:.3})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        contraction: f64,
    },
    #[error("converged disc violates {0}")]
    Invariant(String),
    #[error("fit residual {residual:e} above tolerance {tol:e}")]
    FitResidual { residual: f64, tol: f64 },
    #[error("no transversal gain: ∂_r v(1) vanishes")]
    NoTransversalGain,
    #[error("block {0} has infinite weight")]
    InfiniteWeight(usize),
    #[error("covector must have {expected} entries supported on blocks ≥ {block}")]
    BadCovector { expected: usize, block: usize },
    #[error("direction must have {0} entries")]
    BadDirection(usize),
    #[error("need 0 < γ < α < 1 (γ = {gamma}, α = {alpha})")]
    BadHolderExponent { gamma: f64, alpha: f64 },
    #[error("η grid needs at least {0} points")]
    ShortGrid(usize),
}

/// Uniform samples of the unit circle with cached FFT plans.
#[derive(Clone)]
pub struct CircleGrid {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for CircleGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CircleGrid").field("n", &self.n).finish()
    }
}

impl PartialEq for CircleGrid {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n
    }
}

impl CircleGrid {
    pub fn new(n: usize) -> Result<Self, BishopError> {
        if n < 64 || !n.is_power_of_two() {
            return Err(BishopError::InvalidGrid(n));
        }
        let mut planner = FftPlanner::new();
        Ok(CircleGrid {
            n,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn theta(&self, k: usize) -> f64 {
        -std::f64::consts::PI + 2.0 * std::f64::consts::PI * k as f64 / self.n as f64
    }

    pub fn thetas(&self) -> Vec<f64> {
        (0..self.n).map(|k| self.theta(k)).collect()
    }

    pub fn tau(&self, k: usize) -> Complex64 {
        Complex64::from_polar(1.0, self.theta(k))
    }

    /// Index of `θ = 0`.
    pub fn zero_index(&self) -> usize {
        self.n / 2
    }

    /// Signed frequency of FFT slot `idx`; the Nyquist slot reports `+N/2`.
    pub fn freq(&self, idx: usize) -> i64 {
        if idx <= self.n / 2 {
            idx as i64
        } else {
            idx as i64 - self.n as i64
        }
    }

    /// Fourier coefficients `ĉ_n = (1/N) Σ f(θ_k) e^{−inθ_k}` in FFT order.
    pub fn coefficients(&self, values: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(values.len(), self.n);
        let mut buf = values.to_vec();
        self.fwd.process(&mut buf);
        let scale = 1.0 / self.n as f64;
        for (idx, c) in buf.iter_mut().enumerate() {
            // e^{−inθ_k} = (−1)^n e^{−2πink/N}
            let sign = if idx % 2 == 0 { scale } else { -scale };
            *c *= sign;
        }
        buf
    }

    pub fn coefficients_real(&self, values: &[f64]) -> Vec<Complex64> {
        let c: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.coefficients(&c)
    }

    /// Inverse of [`CircleGrid::coefficients`].
    pub fn synthesize(&self, coeffs: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(coeffs.len(), self.n);
        let mut buf: Vec<Complex64> = coeffs
            .iter()
            .enumerate()
            .map(|(idx, c)| if idx % 2 == 0 { *c } else { -c })
            .collect();
        self.inv.process(&mut buf);
        buf
    }
}

/// `T₁σ`: multiplies `ĉ_n` by `−i·sign(n)` (dropping the constant and
/// Nyquist modes) and subtracts the value at `θ = 0`.
pub fn hilbert_transform(grid: &CircleGrid, sigma: &[f64]) -> Vec<f64> {
    let mut c = grid.coefficients_real(sigma);
    let half = grid.len() as i64 / 2;
    for (idx, v) in c.iter_mut().enumerate() {
        let f = grid.freq(idx);
        *v = if f == 0 || f == half {
            Complex64::default()
        } else {
            *v * Complex64::new(0.0, -(f.signum() as f64))
        };
    }
    let vals = grid.synthesize(&c);
    let at_one = vals[grid.zero_index()].re;
    vals.iter().map(|v| v.re - at_one).collect()
}

/// [`hilbert_transform`] for complex-typed samples that must be real.
pub fn hilbert_transform_checked(
    grid: &CircleGrid,
    sigma: &[Complex64],
) -> Result<Vec<f64>, BishopError> {
    let scale = sigma.iter().map(|c| c.norm()).fold(1.0, f64::max);
    let worst = sigma.iter().map(|c| c.im.abs()).fold(0.0, f64::max);
    if worst > 1e-12 * scale {
        return Err(BishopError::NotReal(worst));
    }
    let re: Vec<f64> = sigma.iter().map(|c| c.re).collect();
    Ok(hilbert_transform(grid, &re))
}

/// Largest modulus among the negative-frequency coefficients of a boundary
/// function. The Nyquist mode is ambiguous on the grid and is skipped.
pub fn negative_frequency_residual(grid: &CircleGrid, values: &[Complex64]) -> f64 {
    let c = grid.coefficients(values);
    c.iter()
        .enumerate()
        .filter(|(idx, _)| grid.freq(*idx) < 0)
        .map(|(_, v)| v.norm())
        .fold(0.0, f64::max)
}

/// `∂_r` at `τ = 1` of the harmonic extension of real boundary values:
/// `Σ_n |n|·v̂_n`.
pub fn radial_derivative_values(grid: &CircleGrid, values: &[f64]) -> f64 {
    grid.coefficients_real(values)
        .iter()
        .enumerate()
        .map(|(idx, c)| grid.freq(idx).unsigned_abs() as f64 * c.re)
        .sum()
}

/// Taylor coefficients of `(1 − τ)^α` up to degree `n`.
pub fn taylor_coefficients(alpha: f64, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let mut b = 1.0;
    out.push(1.0);
    for k in 1..=n {
        b *= (alpha - (k as f64 - 1.0)) / k as f64;
        out.push(if k % 2 == 0 { b } else { -b });
    }
    out
}

fn partial_sum(coeffs: &[f64], tau: Complex64) -> Complex64 {
    coeffs
        .iter()
        .rev()
        .fold(Complex64::default(), |acc, &c| acc * tau + c)
}

/// Shape of a CR component, a holomorphic function on the closed disc that
/// vanishes at `τ = 1`.
#[derive(Clone)]
pub enum Profile {
    /// `(1 − τ)^α`, principal branch.
    Singular { alpha: f64 },
    /// `S_N(τ) − S_N(1)` with `S_N` the degree-`N` Taylor sum of `(1 − τ)^α`.
    PartialSum { alpha: f64, terms: usize },
    /// `1 − τ`.
    Linear,
    Custom(Arc<dyn Fn(Complex64) -> Complex64 + Send + Sync>),
}

impl fmt::Debug for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Profile::Singular { alpha } => write!(f, "Singular({alpha})"),
            Profile::PartialSum { alpha, terms } => write!(f, "PartialSum({alpha}, {terms})"),
            Profile::Linear => write!(f, "Linear"),
            Profile::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl Profile {
    fn validate(&self) -> Result<(), BishopError> {
        match *self {
            Profile::Singular { alpha } | Profile::PartialSum { alpha, .. } => {
                if alpha > 0.0 && alpha < 1.0 {
                    Ok(())
                } else {
                    Err(BishopError::InvalidAlpha(alpha))
                }
            }
            _ => Ok(()),
        }
    }

    pub fn eval(&self, tau: Complex64) -> Complex64 {
        match self {
            Profile::Singular { alpha } => {
                let base = Complex64::new(1.0, 0.0) - tau;
                if base.norm() == 0.0 {
                    Complex64::default()
                } else {
                    base.powf(*alpha)
                }
            }
            Profile::PartialSum { alpha, terms } => {
                let c = taylor_coefficients(*alpha, *terms);
                partial_sum(&c, tau) - partial_sum(&c, Complex64::new(1.0, 0.0))
            }
            Profile::Linear => Complex64::new(1.0, 0.0) - tau,
            Profile::Custom(f) => f(tau),
        }
    }

    pub fn label(&self) -> String {
        format!("{self:?}")
    }
}

/// `η·i·profile(τ)` sampled on the grid.
pub fn cr_component(profile: &Profile, eta: f64, grid: &CircleGrid) -> Result<Vec<Complex64>, BishopError> {
    profile.validate()?;
    if eta <= 0.0 {
        return Err(BishopError::InvalidEta(eta));
    }
    let s = Complex64::new(0.0, eta);
    Ok((0..grid.len()).map(|k| s * profile.eval(grid.tau(k))).collect())
}

/// Prescribed CR part of a disc: `w(τ) = scale·profile(τ)·direction + offset`.
#[derive(Clone, Debug)]
pub struct CrComponent {
    pub profile: Profile,
    pub scale: Complex64,
    pub direction: Vec<Complex64>,
    pub offset: Vec<Complex64>,
}

impl CrComponent {
    /// Component `η e^{iψ} profile(τ)` along `direction`.
    pub fn new(profile: Profile, eta: f64, psi: f64, direction: Vec<Complex64>) -> Result<Self, BishopError> {
        profile.validate()?;
        if eta <= 0.0 {
            return Err(BishopError::InvalidEta(eta));
        }
        let n = direction.len();
        Ok(CrComponent {
            profile,
            scale: Complex64::from_polar(eta, psi),
            direction,
            offset: vec![Complex64::default(); n],
        })
    }

    pub fn with_offset(mut self, offset: Vec<Complex64>) -> Self {
        assert_eq!(offset.len(), self.direction.len());
        self.offset = offset;
        self
    }

    pub fn eval(&self, tau: Complex64) -> Vec<Complex64> {
        let p = self.scale * self.profile.eval(tau);
        self.direction
            .iter()
            .zip(&self.offset)
            .map(|(d, o)| p * d + o)
            .collect()
    }

    /// Samples, indexed `[variable][grid point]`.
    pub fn sample(&self, grid: &CircleGrid) -> Vec<Vec<Complex64>> {
        let n = self.direction.len();
        let mut out = vec![Vec::with_capacity(grid.len()); n];
        for k in 0..grid.len() {
            for (j, v) in self.eval(grid.tau(k)).into_iter().enumerate() {
                out[j].push(v);
            }
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct SolveOptions {
    pub grid: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub damping: f64,
    pub tol_m: f64,
    pub tol_h: f64,
    /// Double the grid (up to `max_grid`) while the top quarter of `v`'s
    /// spectrum carries more than `alias_tol` of its energy.
    pub refine: bool,
    pub max_grid: usize,
    pub alias_tol: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            grid: 2048,
            tol: 1e-11,
            max_iter: 2000,
            damping: 1.0,
            tol_m: 1e-8,
            tol_h: 1e-8,
            refine: true,
            max_grid: 1 << 16,
            alias_tol: 1e-8,
        }
    }
}

/// A converged disc `A(τ) = (x + U(τ), w(τ))` with boundary samples.
#[derive(Clone, Debug)]
pub struct DiscSolution {
    pub grid: CircleGrid,
    pub x: Vec<f64>,
    /// `u[j][k]`, `j = 1..l`.
    pub u: Vec<Vec<f64>>,
    /// `v = h(u + x, w)` on the boundary.
    pub v: Vec<Vec<f64>>,
    /// `w[j][k]`, `j = 1..n`.
    pub w: Vec<Vec<Complex64>>,
    pub component: CrComponent,
    pub iterations: usize,
    pub residual: f64,
    pub damping: f64,
    /// `sup |u + T₁v|`.
    pub fixed_point_residual: f64,
    pub manifold_residual: f64,
    pub holomorphy_residual: f64,
    pub anchoring_residual: f64,
    pub aliasing_ratio: f64,
}

fn eval_h(
    compiled: &[CompiledPoly],
    x: &[f64],
    u: &[Vec<f64>],
    w: &[Vec<Complex64>],
    k: usize,
    xbuf: &mut [f64],
    wbuf: &mut [Complex64],
) -> Vec<f64> {
    for (h, xb) in xbuf.iter_mut().enumerate() {
        *xb = x[h] + u[h][k];
    }
    for (j, wb) in wbuf.iter_mut().enumerate() {
        *wb = w[j][k];
    }
    compiled.iter().map(|p| p.eval(xbuf, wbuf)).collect()
}

/// `h(u + x, w)` on every grid point, indexed `[component][point]`.
fn h_on_grid(compiled: &[CompiledPoly], x: &[f64], u: &[Vec<f64>], w: &[Vec<Complex64>], n: usize) -> Vec<Vec<f64>> {
    let l = compiled.len();
    let mut out = vec![vec![0.0; n]; l];
    let mut xbuf = vec![0.0; x.len()];
    let mut wbuf = vec![Complex64::default(); w.len()];
    for k in 0..n {
        let vals = eval_h(compiled, x, u, w, k, &mut xbuf, &mut wbuf);
        for (j, v) in vals.into_iter().enumerate() {
            out[j][k] = v;
        }
    }
    out
}

fn sup_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max)
}

fn top_quarter_ratio(grid: &CircleGrid, v: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    let mut top = 0.0;
    let cut = 3 * grid.len() as u64 / 8;
    for comp in v {
        for (idx, c) in grid.coefficients_real(comp).iter().enumerate() {
            let e = c.norm_sqr();
            total += e;
            if grid.freq(idx).unsigned_abs() > cut {
                top += e;
            }
        }
    }
    if total == 0.0 {
        0.0
    } else {
        top / total
    }
}

enum Attempt {
    Converged(Vec<Vec<f64>>, usize, f64),
    Diverged,
    Exhausted(f64, f64),
}

fn picard(
    grid: &CircleGrid,
    compiled: &[CompiledPoly],
    x: &[f64],
    w: &[Vec<Complex64>],
    start: Vec<Vec<f64>>,
    lambda: f64,
    opts: &SolveOptions,
) -> Attempt {
    let n = grid.len();
    let mut u = start;
    let mut prev_change = f64::INFINITY;
    let mut first_change = None;
    let mut rising = 0;
    let mut contraction = f64::NAN;
    for it in 1..=opts.max_iter {
        let hv = h_on_grid(compiled, x, &u, w, n);
        let next: Vec<Vec<f64>> = hv
            .iter()
            .zip(&u)
            .map(|(hj, uj)| {
                let t = hilbert_transform(grid, hj);
                t.iter()
                    .zip(uj)
                    .map(|(tv, uv)| (1.0 - lambda) * uv - lambda * tv)
                    .collect()
            })
            .collect();
        let change = sup_diff(&next, &u);
        u = next;
        if !change.is_finite() {
            return Attempt::Diverged;
        }
        if change <= opts.tol {
            return Attempt::Converged(u, it, change);
        }
        let first = *first_change.get_or_insert(change);
        if prev_change.is_finite() && prev_change > 0.0 {
            contraction = change / prev_change;
        }
        rising = if change > prev_change { rising + 1 } else { 0 };
        if rising >= 5 || change > 1e6 * first.max(1e-300) {
            return Attempt::Diverged;
        }
        prev_change = change;
    }
    Attempt::Exhausted(prev_change, contraction)
}

/// Solves `u = −T₁ h(u + x, w)` for the given CR component, checks the
/// disc invariants and, if asked, refines the grid against aliasing.
pub fn solve_bishop(
    model: &ManifoldModel,
    component: &CrComponent,
    x: &[f64],
    opts: &SolveOptions,
    warm_start: Option<&DiscSolution>,
) -> Result<DiscSolution, BishopError> {
    if component.direction.len() != model.n() {
        return Err(BishopError::BadDirection(model.n()));
    }
    assert_eq!(x.len(), model.l(), "base point dimension");
    let compiled: Vec<CompiledPoly> = model.h().iter().map(|p| p.compile()).collect();
    let mut n = opts.grid;
    loop {
        let grid = CircleGrid::new(n)?;
        let sol = solve_on_grid(model, &compiled, component, x, opts, &grid, warm_start)?;
        if !opts.refine || sol.aliasing_ratio <= opts.alias_tol || n * 2 > opts.max_grid {
            return Ok(sol);
        }
        n *= 2;
    }
}

fn solve_on_grid(
    model: &ManifoldModel,
    compiled: &[CompiledPoly],
    component: &CrComponent,
    x: &[f64],
    opts: &SolveOptions,
    grid: &CircleGrid,
    warm_start: Option<&DiscSolution>,
) -> Result<DiscSolution, BishopError> {
    let l = model.l();
    let n = grid.len();
    let w = component.sample(grid);
    let start = match warm_start {
        Some(ws) if ws.grid.len() == n => ws.u.clone(),
        _ => vec![vec![0.0; n]; l],
    };
    let mut lambda = opts.damping;
    let (u, iterations, residual) = loop {
        match picard(grid, compiled, x, &w, start.clone(), lambda, opts) {
            Attempt::Converged(u, it, r) => break (u, it, r),
            Attempt::Diverged if lambda > 1.0 / 64.0 => lambda *= 0.5,
            Attempt::Diverged => {
                return Err(BishopError::NonConvergence {
                    iterations: opts.max_iter,
                    residual: f64::INFINITY,
                    contraction: f64::INFINITY,
                })
            }
            Attempt::Exhausted(r, c) => {
                return Err(BishopError::NonConvergence {
                    iterations: opts.max_iter,
                    residual: r,
                    contraction: c,
                })
            }
        }
    };
    let z0 = grid.zero_index();
    let v = h_on_grid(compiled, x, &u, &w, n);
    // independent evaluation path for the boundary-on-manifold check
    let mut manifold_residual: f64 = 0.0;
    for k in 0..n {
        let xs: Vec<f64> = (0..l).map(|h| x[h] + u[h][k]).collect();
        let ws: Vec<Complex64> = w.iter().map(|wj| wj[k]).collect();
        for (j, hv) in model.eval_h(&xs, &ws).into_iter().enumerate() {
            manifold_residual = manifold_residual.max((v[j][k] - hv).abs());
        }
    }
    let fixed_point_residual = v
        .iter()
        .zip(&u)
        .map(|(vj, uj)| {
            hilbert_transform(grid, vj)
                .iter()
                .zip(uj)
                .map(|(t, a)| (t + a).abs())
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max);
    let holomorphy_residual = u
        .iter()
        .zip(&v)
        .map(|(uj, hj)| {
            let g: Vec<Complex64> = uj.iter().zip(hj).map(|(a, b)| Complex64::new(*a, *b)).collect();
            negative_frequency_residual(grid, &g)
        })
        .fold(0.0, f64::max);
    let anchoring_residual = u.iter().map(|uj| uj[z0].abs()).fold(0.0, f64::max);
    if manifold_residual > opts.tol_m {
        return Err(BishopError::Invariant(format!(
            "boundary-on-manifold (residual {manifold_residual:e})"
        )));
    }
    if holomorphy_residual > opts.tol_h {
        return Err(BishopError::Invariant(format!(
            "holomorphy (negative-frequency residual {holomorphy_residual:e})"
        )));
    }
    if anchoring_residual > 1e-13 {
        return Err(BishopError::Invariant(format!(
            "anchoring (u(1) = {anchoring_residual:e})"
        )));
    }
    let aliasing_ratio = top_quarter_ratio(grid, &v);
    Ok(DiscSolution {
        grid: grid.clone(),
        x: x.to_vec(),
        u,
        v,
        w,
        component: component.clone(),
        iterations,
        residual,
        damping: lambda,
        manifold_residual,
        fixed_point_residual,
        holomorphy_residual,
        anchoring_residual,
        aliasing_ratio,
    })
}

/// `∂_r v(1)` for every component of a converged disc.
pub fn radial_derivative_at_one(d: &DiscSolution) -> Vec<f64> {
    d.v.iter().map(|vj| radial_derivative_values(&d.grid, vj)).collect()
}

impl DiscSolution {
    /// `z(r) = x + U(r)` at an interior point `0 ≤ r ≤ 1` on the ray `θ = 0`.
    pub fn z_at(&self, r: f64) -> Vec<Complex64> {
        self.u
            .iter()
            .zip(&self.v)
            .zip(&self.x)
            .map(|((uj, vj), xj)| {
                let g: Vec<Complex64> = uj.iter().zip(vj).map(|(a, b)| Complex64::new(*a, *b)).collect();
                let c = self.grid.coefficients(&g);
                let mut acc = Complex64::default();
                for (idx, cn) in c.iter().enumerate() {
                    let f = self.grid.freq(idx);
                    if f >= 0 {
                        acc += cn * r.powi(f as i32);
                    }
                }
                acc + xj
            })
            .collect()
    }

    pub fn w_at(&self, r: f64) -> Vec<Complex64> {
        self.component.eval(Complex64::new(r, 0.0))
    }

    /// Boundary samples as CSV: `θ, u_j, v_j, Re w_j, Im w_j` with `#`
    /// metadata lines.
    pub fn to_csv(&self) -> String {
        use std::fmt::Write;
        let l = self.u.len();
        let n = self.w.len();
        let mut s = String::new();
        let _ = writeln!(s, "# N = {}", self.grid.len());
        let _ = writeln!(s, "# profile = {}", self.component.profile.label());
        let _ = writeln!(s, "# iterations = {}", self.iterations);
        let _ = writeln!(s, "# picard_change = {:e}", self.residual);
        let _ = writeln!(s, "# manifold_residual = {:e}", self.manifold_residual);
        let _ = writeln!(s, "# fixed_point_residual = {:e}", self.fixed_point_residual);
        let _ = writeln!(s, "# holomorphy_residual = {:e}", self.holomorphy_residual);
        let mut cols = vec!["theta".to_string()];
        cols.extend((1..=l).map(|j| format!("u{j}")));
        cols.extend((1..=l).map(|j| format!("v{j}")));
        for j in 1..=n {
            cols.push(format!("re_w{j}"));
            cols.push(format!("im_w{j}"));
        }
        let _ = writeln!(s, "{}", cols.join(","));
        for k in 0..self.grid.len() {
            let mut row = vec![format!("{:.17e}", self.grid.theta(k))];
            row.extend(self.u.iter().map(|c| format!("{:.17e}", c[k])));
            row.extend(self.v.iter().map(|c| format!("{:.17e}", c[k])));
            for wj in &self.w {
                row.push(format!("{:.17e}", wj[k].re));
                row.push(format!("{:.17e}", wj[k].im));
            }
            let _ = writeln!(s, "{}", row.join(","));
        }
        s
    }
}

/// Result of an η-scan of the Hopf derivative.
#[derive(Clone, Debug, Serialize)]
pub struct HopfScan {
    pub etas: Vec<f64>,
    /// `⟨ξ, ∂_r v(1)⟩` per η.
    pub pairing: Vec<f64>,
    /// `∂_r v(1)` per η.
    pub radial: Vec<Vec<f64>>,
    pub order: u32,
    /// Log–log slope of `|pairing|` against η; `None` if the pairing vanishes.
    pub exponent: Option<f64>,
    /// Leading coefficient `c` in `pairing ≈ c η^m + d η^{m+1}`.
    pub eta_derivative: f64,
    /// Leading coefficient of `∂_r v(1)` per component of the blocks from
    /// `block` on: the direction `v'_o`. Earlier components are zero.
    pub direction: Vec<f64>,
    pub fit_residual: f64,
    /// The pairing is negligible against `∂_r v(1)` at every η.
    pub pairing_vanishes: bool,
    pub sign_ok: bool,
    /// Per block, the largest `sup|u_{I_i}| / ‖w‖_∞^{m_i}` over the scan.
    pub feedback_constants: Vec<Option<f64>>,
    pub feedback_ok: bool,
    pub max_manifold_residual: f64,
    pub max_holomorphy_residual: f64,
    pub grid: usize,
    pub max_aliasing_ratio: f64,
}

#[derive(Clone, Debug)]
pub struct HopfOptions {
    pub profile: Profile,
    /// Disc centred at angle ψ: `w = η e^{iψ} profile(τ)`.
    pub psi: f64,
    pub etas: Vec<f64>,
    pub solve: SolveOptions,
    pub fit_tol: f64,
}

impl HopfOptions {
    /// Singular profile with `α` at the midpoint of `(1/m, 1/(m − 1))` and
    /// `η_k = 0.1·0.8^k`, `k = 0..m+1`.
    pub fn for_order(m: u32) -> Self {
        let alpha = default_alpha(m);
        HopfOptions {
            profile: Profile::Singular { alpha },
            psi: std::f64::consts::FRAC_PI_2,
            etas: default_etas(m),
            solve: SolveOptions {
                refine: false,
                ..SolveOptions::default()
            },
            fit_tol: 0.05,
        }
    }
}

/// Midpoint of the admissible window `(1/m, 1/(m−1))`.
pub fn default_alpha(m: u32) -> f64 {
    if m <= 1 {
        return 0.5;
    }
    0.5 * (1.0 / m as f64 + 1.0 / (m as f64 - 1.0))
}

pub fn default_etas(m: u32) -> Vec<f64> {
    (0..m as i32 + 2).map(|k| 0.1 * 0.8f64.powi(k)).collect()
}

/// Pairings below this fraction of `sup|∂_r v(1)|` count as zero.
const PAIRING_ZERO_TOL: f64 = 1e-10;

/// Least-squares fit of `s ≈ c η^m + d η^{m+1}`; returns `(c, relative residual)`.
fn leading_fit(etas: &[f64], s: &[f64], m: u32) -> (f64, f64) {
    let rows = etas.len();
    let cols = if rows > 2 { 2 } else { 1 };
    // scale columns to keep the system well conditioned
    let e0 = etas.iter().cloned().fold(0.0, f64::max);
    let a = DMatrix::from_fn(rows, cols, |i, j| (etas[i] / e0).powi(m as i32 + j as i32));
    let b = DVector::from_column_slice(s);
    let sol = linalg::lstsq(&a, &b);
    let fitted = &a * &sol;
    let norm = b.norm();
    let resid = if norm == 0.0 { 0.0 } else { (b - fitted).norm() / norm };
    (sol[0] / e0.powi(m as i32), resid)
}

fn log_slope(etas: &[f64], s: &[f64]) -> Option<f64> {
    if s.contains(&0.0) {
        return None;
    }
    let xs: Vec<f64> = etas.iter().map(|e| e.ln()).collect();
    let ys: Vec<f64> = s.iter().map(|v| v.abs().ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    Some(num / den)
}

/// Scans `η ↦ ⟨ξ, ∂_r v(1)⟩` for discs `w = η e^{iψ} profile(τ)·direction`
/// and fits its leading `η^{m_j}` coefficient. `sign_ok` holds when that
/// coefficient is negative.
pub fn hopf_scan(
    model: &ManifoldModel,
    direction: &[Complex64],
    xi: &[f64],
    block: usize,
    opts: &HopfOptions,
) -> Result<HopfScan, BishopError> {
    let weights = model.weights();
    let m = weights.weights()[block]
        .finite()
        .ok_or(BishopError::InfiniteWeight(block))?;
    let lower = weights.block_range(block).start;
    if xi.len() != model.l() || xi[..lower].iter().any(|v| *v != 0.0) {
        return Err(BishopError::BadCovector {
            expected: model.l(),
            block,
        });
    }
    if direction.len() != model.n() {
        return Err(BishopError::BadDirection(model.n()));
    }
    if opts.etas.len() < 2 {
        return Err(BishopError::ShortGrid(2));
    }
    let x0 = vec![0.0; model.l()];
    let sols: Vec<DiscSolution> = opts
        .etas
        .par_iter()
        .map(|&eta| {
            let comp = CrComponent::new(opts.profile.clone(), eta, opts.psi, direction.to_vec())?;
            solve_bishop(model, &comp, &x0, &opts.solve, None)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let radial: Vec<Vec<f64>> = sols.iter().map(radial_derivative_at_one).collect();
    let pairing: Vec<f64> = radial
        .iter()
        .map(|r| r.iter().zip(xi).map(|(a, b)| a * b).sum())
        .collect();
    let radial_scale = radial.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
    let pairing_vanishes = pairing
        .iter()
        .all(|p| p.abs() <= PAIRING_ZERO_TOL * radial_scale.max(f64::MIN_POSITIVE));
    let (coef, fit_residual) = if pairing_vanishes {
        (0.0, 0.0)
    } else {
        leading_fit(&opts.etas, &pairing, m)
    };
    if fit_residual > opts.fit_tol {
        return Err(BishopError::FitResidual {
            residual: fit_residual,
            tol: opts.fit_tol,
        });
    }
    let direction_fit: Vec<f64> = (0..model.l())
        .map(|j| {
            if j < lower {
                return 0.0;
            }
            let s: Vec<f64> = radial.iter().map(|r| r[j]).collect();
            leading_fit(&opts.etas, &s, m).0
        })
        .collect();
    let mut feedback_constants = Vec::new();
    let mut feedback_ok = true;
    for b in 0..weights.num_blocks() {
        let Weight::Finite(mi) = weights.weights()[b] else {
            feedback_constants.push(None);
            continue;
        };
        let ratios: Vec<f64> = sols
            .iter()
            .map(|s| {
                let wsup = s
                    .w
                    .iter()
                    .flat_map(|wj| wj.iter().map(|c| c.norm()))
                    .fold(0.0, f64::max);
                let usup = weights
                    .block_range(b)
                    .flat_map(|j| s.u[j].iter().map(|v| v.abs()))
                    .fold(0.0, f64::max);
                usup / wsup.powi(mi as i32)
            })
            .collect();
        let hi = ratios.iter().cloned().fold(0.0, f64::max);
        let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        if !hi.is_finite() || (hi > 1e-12 && hi > 10.0 * lo) {
            feedback_ok = false;
        }
        feedback_constants.push(Some(hi));
    }
    Ok(HopfScan {
        etas: opts.etas.clone(),
        exponent: if pairing_vanishes { None } else { log_slope(&opts.etas, &pairing) },
        pairing,
        radial,
        order: m,
        eta_derivative: coef,
        direction: direction_fit,
        fit_residual,
        pairing_vanishes,
        sign_ok: coef < 0.0,
        feedback_constants,
        feedback_ok,
        max_manifold_residual: sols.iter().map(|s| s.manifold_residual).fold(0.0, f64::max),
        max_holomorphy_residual: sols.iter().map(|s| s.holomorphy_residual).fold(0.0, f64::max),
        grid: sols.iter().map(|s| s.grid.len()).max().unwrap_or(0),
        max_aliasing_ratio: sols.iter().map(|s| s.aliasing_ratio).fold(0.0, f64::max),
    })
}

/// One row of [`fgamma_report`].
#[derive(Clone, Debug, Serialize)]
pub struct FGammaRow {
    pub terms: usize,
    pub sup_error: f64,
    pub seminorm: f64,
    pub fgamma_error: f64,
    pub c5_bound_ok: bool,
    pub value_at_one: f64,
}

fn circular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).abs() % (2.0 * std::f64::consts::PI);
    d.min(2.0 * std::f64::consts::PI - d)
}

/// Discrete `F^γ` distance between the partial sums `S_N` and `(1 − τ)^α`
/// on the circle: sup norm plus the `C^γ` seminorm of
/// `(1 − τ)·d/dθ (S_N − (1 − τ)^α)`, with the derivative taken by centred
/// differences. Also checks `|S'_N(τ)| ≤ α(1 − |τ|)^{α−1}` at the given radii.
pub fn fgamma_report(
    alpha: f64,
    gamma: f64,
    terms: &[usize],
    grid: &CircleGrid,
    radii: &[f64],
) -> Result<Vec<FGammaRow>, BishopError> {
    if !(gamma > 0.0 && gamma < alpha && alpha < 1.0) {
        return Err(BishopError::BadHolderExponent { gamma, alpha });
    }
    let n = grid.len();
    let h = 2.0 * std::f64::consts::PI / n as f64;
    let exact = Profile::Singular { alpha };
    let thetas = grid.thetas();
    let target: Vec<Complex64> = (0..n).map(|k| exact.eval(grid.tau(k))).collect();
    terms
        .par_iter()
        .map(|&nt| {
            let c = taylor_coefficients(alpha, nt);
            let diff: Vec<Complex64> = (0..n)
                .map(|k| partial_sum(&c, grid.tau(k)) - target[k])
                .collect();
            let sup_error = diff.iter().map(|d| d.norm()).fold(0.0, f64::max);
            let f: Vec<Complex64> = (0..n)
                .map(|k| {
                    let d = (diff[(k + 1) % n] - diff[(k + n - 1) % n]) / (2.0 * h);
                    (Complex64::new(1.0, 0.0) - grid.tau(k)) * d
                })
                .collect();
            let mut seminorm: f64 = 0.0;
            for a in 0..n {
                for b in a + 1..n {
                    let dist = circular_distance(thetas[a], thetas[b]);
                    let q = (f[a] - f[b]).norm() / dist.powf(gamma);
                    seminorm = seminorm.max(q);
                }
            }
            let deriv: Vec<f64> = c.iter().enumerate().skip(1).map(|(k, a)| k as f64 * a).collect();
            let c5_bound_ok = radii.iter().all(|&r| {
                let bound = alpha * (1.0 - r).powf(alpha - 1.0);
                (0..256).all(|k| {
                    let tau = Complex64::from_polar(r, 2.0 * std::f64::consts::PI * k as f64 / 256.0);
                    partial_sum(&deriv, tau).norm() <= bound * (1.0 + 1e-12)
                })
            });
            let value_at_one = c.iter().sum();
            Ok(FGammaRow {
                terms: nt,
                sup_error,
                seminorm,
                fgamma_error: sup_error + seminorm,
                c5_bound_ok,
                value_at_one,
            })
        })
        .collect()
}

/// Outcome of [`sweep_attached_family`].
#[derive(Clone, Debug, Serialize)]
pub struct SweepResult {
    /// Points `(Re z, Im z, Re w, Im w)` of the swept family.
    pub points: Vec<Vec<f64>>,
    pub tangent_rank: usize,
    pub expected_rank: usize,
    /// Normal (`y`) part of the `∂_r` column after removing its tangential part.
    pub gained_direction: Vec<f64>,
    pub radial_derivative: Vec<f64>,
    /// Angle between the lines of `gained_direction` and `∂_r v(1)`.
    pub angle: f64,
    pub singular_values: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct SweepOptions {
    /// Half-width of the `{−δ, 0, δ}` grid in each parameter.
    pub delta: f64,
    /// Radial window `[1 − epsilon, 1]`.
    pub epsilon: f64,
    pub radial_points: usize,
    pub rank_tol: f64,
    pub solve: SolveOptions,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            delta: 1e-3,
            epsilon: 0.05,
            radial_points: 5,
            rank_tol: 1e-6,
            solve: SolveOptions {
                refine: false,
                ..SolveOptions::default()
            },
        }
    }
}

fn ambient_point(z: &[Complex64], w: &[Complex64]) -> Vec<f64> {
    let mut p: Vec<f64> = z.iter().map(|c| c.re).collect();
    p.extend(z.iter().map(|c| c.im));
    p.extend(w.iter().map(|c| c.re));
    p.extend(w.iter().map(|c| c.im));
    p
}

/// Re-solves the disc for every perturbation of `(Re w, Im w, x)` on a
/// `{−δ, 0, δ}` grid, samples each disc on `r ∈ [1 − ε, 1]`, and fits the
/// tangent space of the swept set at the base point by quadratic least
/// squares. The expected rank is `dim M + 1 = 2n + l + 1`.
pub fn sweep_attached_family(
    model: &ManifoldModel,
    base: &DiscSolution,
    opts: &SweepOptions,
) -> Result<SweepResult, BishopError> {
    let l = model.l();
    let n = model.n();
    let nparams = 2 * n + l;
    let vprime = radial_derivative_at_one(base);
    let vnorm = vprime.iter().map(|v| v * v).sum::<f64>().sqrt();
    let scale = base.v.iter().flatten().map(|v| v.abs()).fold(0.0, f64::max).max(1e-300);
    if vnorm <= 1e-12 * scale.max(1.0) || vnorm == 0.0 {
        return Err(BishopError::NoTransversalGain);
    }
    let count = 3usize.pow(nparams as u32);
    let offsets: Vec<Vec<f64>> = (0..count)
        .map(|mut idx| {
            (0..nparams)
                .map(|_| {
                    let d = (idx % 3) as f64 - 1.0;
                    idx /= 3;
                    d * opts.delta
                })
                .collect()
        })
        .collect();
    let radii: Vec<f64> = (0..opts.radial_points)
        .map(|k| 1.0 - opts.epsilon * k as f64 / (opts.radial_points.max(2) - 1) as f64)
        .collect();
    let solve_opts = SolveOptions {
        grid: base.grid.len(),
        refine: false,
        ..opts.solve.clone()
    };
    let samples: Vec<Vec<(Vec<f64>, Vec<f64>)>> = offsets
        .par_iter()
        .map(|dp| {
            let mut comp = base.component.clone();
            comp.offset = (0..n)
                .map(|j| base.component.offset[j] + Complex64::new(dp[2 * j], dp[2 * j + 1]))
                .collect();
            let x: Vec<f64> = (0..l).map(|h| base.x[h] + dp[2 * n + h]).collect();
            let sol = solve_bishop(model, &comp, &x, &solve_opts, Some(base))?;
            Ok(radii
                .iter()
                .map(|&r| {
                    let mut vars = dp.clone();
                    vars.push(r - 1.0);
                    (vars, ambient_point(&sol.z_at(r), &sol.w_at(r)))
                })
                .collect())
        })
        .collect::<Result<Vec<_>, BishopError>>()?;
    let cloud: Vec<(Vec<f64>, Vec<f64>)> = samples.into_iter().flatten().collect();
    let dim_vars = nparams + 1;
    // basis: 1, linear terms, quadratic terms
    let mut basis_pairs = Vec::new();
    for a in 0..dim_vars {
        for b in a..dim_vars {
            basis_pairs.push((a, b));
        }
    }
    let ncols = 1 + dim_vars + basis_pairs.len();
    let col_scale: Vec<f64> = (0..dim_vars)
        .map(|a| if a < nparams { opts.delta } else { opts.epsilon })
        .collect();
    let design = DMatrix::from_fn(cloud.len(), ncols, |i, c| {
        let vars = &cloud[i].0;
        if c == 0 {
            1.0
        } else if c <= dim_vars {
            vars[c - 1] / col_scale[c - 1]
        } else {
            let (a, b) = basis_pairs[c - 1 - dim_vars];
            vars[a] / col_scale[a] * vars[b] / col_scale[b]
        }
    });
    let amb = 2 * (l + n);
    let mut jac = DMatrix::zeros(amb, dim_vars);
    for out in 0..amb {
        let rhs = DVector::from_iterator(cloud.len(), cloud.iter().map(|(_, p)| p[out]));
        let coef = linalg::lstsq(&design, &rhs);
        for a in 0..dim_vars {
            jac[(out, a)] = coef[1 + a] / col_scale[a];
        }
    }
    let sv = jac.clone().svd(false, false).singular_values;
    let mut svs: Vec<f64> = sv.iter().cloned().collect();
    svs.sort_by(|a, b| b.total_cmp(a));
    let tangent_rank = linalg::real_rank(&jac, opts.rank_tol);
    // Remove the tangential part of the ∂_r column: match its (x, w) blocks
    // with a combination of the parameter columns.
    let xw_rows: Vec<usize> = (0..l).chain(2 * l..amb).collect();
    let t_xw = DMatrix::from_fn(xw_rows.len(), nparams, |i, c| jac[(xw_rows[i], c)]);
    let r_xw = DVector::from_iterator(xw_rows.len(), xw_rows.iter().map(|&i| jac[(i, nparams)]));
    let coef = linalg::lstsq(&t_xw, &r_xw);
    let gained: Vec<f64> = (0..l)
        .map(|j| {
            let row = l + j;
            let tangential: f64 = (0..nparams).map(|c| jac[(row, c)] * coef[c]).sum();
            jac[(row, nparams)] - tangential
        })
        .collect();
    let gnorm = gained.iter().map(|v| v * v).sum::<f64>().sqrt();
    let angle = if gnorm == 0.0 {
        std::f64::consts::FRAC_PI_2
    } else {
        let dot: f64 = gained.iter().zip(&vprime).map(|(a, b)| a * b).sum();
        (dot.abs() / (gnorm * vnorm)).min(1.0).acos()
    };
    Ok(SweepResult {
        points: cloud.into_iter().map(|(_, p)| p).collect(),
        tangent_rank,
        expected_rank: nparams + 1,
        gained_direction: gained,
        radial_derivative: vprime,
        angle,
        singular_values: svs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const LEVI: &str = "l = 1\nn = 1\nblocks = [1]\nweights = [2]\nh = [\"abs2(w1)\"]\n";
    const FLAT: &str = "l = 1\nn = 1\nblocks = [1]\nweights = [\"inf\"]\nh = [\"0\"]\n";

    fn model(s: &str) -> ManifoldModel {
        ManifoldModel::parse_and_validate(s).unwrap()
    }

    #[test]
    fn hilbert_examples() {
        let g = CircleGrid::new(2048).unwrap();
        let th = g.thetas();
        let cos: Vec<f64> = th.iter().map(|t| t.cos()).collect();
        let t = hilbert_transform(&g, &cos);
        for (a, b) in t.iter().zip(&th) {
            assert!((a - b.sin()).abs() < 1e-12);
        }
        let one = hilbert_transform(&g, &vec![1.0; 2048]);
        assert!(one.iter().all(|v| v.abs() < 1e-12));
        let sin: Vec<f64> = th.iter().map(|t| t.sin()).collect();
        let t2 = hilbert_transform(&g, &sin);
        for (a, b) in t2.iter().zip(&th) {
            assert!((a - (1.0 - b.cos())).abs() < 1e-12);
        }
    }

    #[test]
    fn grid_validation() {
        assert!(CircleGrid::new(100).is_err());
        assert!(CircleGrid::new(32).is_err());
        assert_eq!(CircleGrid::new(64).unwrap().zero_index(), 32);
    }

    #[test]
    fn profiles_vanish_at_one() {
        let g = CircleGrid::new(64).unwrap();
        let s = cr_component(&Profile::Singular { alpha: 0.5 }, 0.1, &g).unwrap();
        assert_eq!(s[g.zero_index()], Complex64::default());
        let p = cr_component(&Profile::PartialSum { alpha: 0.5, terms: 7 }, 0.1, &g).unwrap();
        assert!(p[g.zero_index()].norm() < 1e-16);
        assert!(cr_component(&Profile::Singular { alpha: 1.2 }, 0.1, &g).is_err());
        let c = taylor_coefficients(0.5, 3);
        assert_eq!(c, vec![1.0, -0.5, -0.125, -0.0625]);
    }

    #[test]
    fn flat_disc_is_trivial() {
        let comp = CrComponent::new(Profile::Linear, 0.1, 0.0, vec![Complex64::new(1.0, 0.0)]).unwrap();
        let d = solve_bishop(&model(FLAT), &comp, &[0.0], &SolveOptions::default(), None).unwrap();
        assert_eq!(d.iterations, 1);
        assert!(d.u[0].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn levi_closed_form() {
        let eta = 0.1;
        let comp = CrComponent::new(Profile::Linear, eta, 0.0, vec![Complex64::new(1.0, 0.0)]).unwrap();
        let d = solve_bishop(&model(LEVI), &comp, &[0.0], &SolveOptions::default(), None).unwrap();
        for k in 0..d.grid.len() {
            let t = d.grid.theta(k);
            assert!((d.u[0][k] - 2.0 * eta * eta * t.sin()).abs() < 1e-12);
            assert!((d.v[0][k] - 2.0 * eta * eta * (1.0 - t.cos())).abs() < 1e-12);
        }
        assert!((radial_derivative_at_one(&d)[0] + 0.02).abs() < 1e-12);
    }

    #[test]
    fn radial_derivative_examples() {
        let g = CircleGrid::new(256).unwrap();
        assert!(radial_derivative_values(&g, &vec![3.0; 256]).abs() < 1e-14);
        let cos: Vec<f64> = g.thetas().iter().map(|t| t.cos()).collect();
        assert!((radial_derivative_values(&g, &cos) - 1.0).abs() < 1e-13);
    }

    #[test]
    fn partial_sum_value_at_one() {
        let s: f64 = taylor_coefficients(0.5, 8).iter().sum();
        assert!((s - 0.196380615234375).abs() < 1e-15);
    }

    #[test]
    fn flat_has_no_gain() {
        let comp = CrComponent::new(Profile::Linear, 0.1, 0.0, vec![Complex64::new(1.0, 0.0)]).unwrap();
        let m = model(FLAT);
        let d = solve_bishop(&m, &comp, &[0.0], &SolveOptions::default(), None).unwrap();
        let e = sweep_attached_family(&m, &d, &SweepOptions::default()).unwrap_err();
        assert_eq!(e, BishopError::NoTransversalGain);
        assert_eq!(e.to_string(), "no transversal gain: ∂_r v(1) vanishes");
    }
}
