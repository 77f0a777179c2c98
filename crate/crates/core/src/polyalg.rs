//! Sparse complex-coefficient polynomials, real-valued polynomials in
//! `(x, w, w̄)` and weighted truncated jets.
//!
//! Variables of a [`Poly`] are anonymous and indexed `0..nvars`. A
//! [`RealPoly`] fixes the layout `x_1..x_l, w_1..w_n, w̄_1..w̄_n` and keeps
//! the coefficients Hermitian-symmetric so that the polynomial is real on
//! `R^l × C^n`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

/// Exponent vector of a monomial.
pub type Exponents = Vec<u16>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolyError {
    #[error("jet cutoff mismatch: {0} vs {1}")]
    CutoffMismatch(u32, u32),
    #[error("jet variable weights differ")]
    WeightMismatch,
    #[error("variable count mismatch: {0} vs {1}")]
    VariableMismatch(usize, usize),
    #[error("constant term of the matrix is singular")]
    SingularConstantTerm,
    #[error("polynomial is not real-valued (coefficient of {0:?} is not conjugate-symmetric)")]
    NotHermitian(Exponents),
    #[error("matrix must be square and non-empty")]
    NotSquare,
    #[error("invalid weight vector: {0}")]
    InvalidWeights(String),
}

/// A weight or a weighted vanishing order. `Infinite` is a genuine sentinel:
/// it compares above every finite value and absorbs addition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Weight {
    Finite(u32),
    Infinite,
}

impl Weight {
    pub fn finite(self) -> Option<u32> {
        match self {
            Weight::Finite(v) => Some(v),
            Weight::Infinite => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Weight::Infinite)
    }

    /// `self * k` for an exponent `k`; `Infinite * 0 = 0`.
    pub fn times(self, k: u32) -> Weight {
        match self {
            _ if k == 0 => Weight::Finite(0),
            Weight::Finite(v) => Weight::Finite(v * k),
            Weight::Infinite => Weight::Infinite,
        }
    }

    pub fn plus(self, other: Weight) -> Weight {
        match (self, other) {
            (Weight::Finite(a), Weight::Finite(b)) => Weight::Finite(a + b),
            _ => Weight::Infinite,
        }
    }
}

impl fmt::Display for Weight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Weight::Finite(v) => write!(f, "{v}"),
            Weight::Infinite => write!(f, "inf"),
        }
    }
}

/// Weighted degree of one monomial under per-variable weights.
pub fn monomial_weight(exps: &[u16], var_weights: &[Weight]) -> Weight {
    exps.iter()
        .zip(var_weights)
        .fold(Weight::Finite(0), |acc, (&e, &w)| acc.plus(w.times(e as u32)))
}

/// Sparse polynomial with complex coefficients. Terms with a zero
/// coefficient are never stored.
#[derive(Clone, Debug, PartialEq)]
pub struct Poly {
    nvars: usize,
    terms: BTreeMap<Exponents, Complex64>,
}

impl Poly {
    pub fn zero(nvars: usize) -> Self {
        Poly {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(nvars: usize, c: Complex64) -> Self {
        let mut p = Poly::zero(nvars);
        p.add_term(vec![0; nvars], c);
        p
    }

    pub fn one(nvars: usize) -> Self {
        Poly::constant(nvars, Complex64::new(1.0, 0.0))
    }

    pub fn var(nvars: usize, i: usize) -> Self {
        let mut e = vec![0; nvars];
        e[i] = 1;
        Poly::monomial(e, Complex64::new(1.0, 0.0))
    }

    pub fn monomial(exps: Exponents, c: Complex64) -> Self {
        let mut p = Poly::zero(exps.len());
        p.add_term(exps, c);
        p
    }

    pub fn from_terms<I: IntoIterator<Item = (Exponents, Complex64)>>(nvars: usize, it: I) -> Self {
        let mut p = Poly::zero(nvars);
        for (e, c) in it {
            assert_eq!(e.len(), nvars, "exponent length");
            p.add_term(e, c);
        }
        p
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Exponents, &Complex64)> {
        self.terms.iter()
    }

    pub fn coeff(&self, exps: &[u16]) -> Complex64 {
        self.terms.get(exps).copied().unwrap_or_default()
    }

    pub fn constant_term(&self) -> Complex64 {
        self.coeff(&vec![0; self.nvars])
    }

    /// Adds `c` to the coefficient of `exps`, dropping the term if it cancels.
    pub fn add_term(&mut self, exps: Exponents, c: Complex64) {
        if c == Complex64::default() {
            return;
        }
        use std::collections::btree_map::Entry;
        match self.terms.entry(exps) {
            Entry::Vacant(v) => {
                v.insert(c);
            }
            Entry::Occupied(mut o) => {
                let s = *o.get() + c;
                if s == Complex64::default() {
                    o.remove();
                } else {
                    *o.get_mut() = s;
                }
            }
        }
    }

    pub fn scale(&self, c: Complex64) -> Poly {
        if c == Complex64::default() {
            return Poly::zero(self.nvars);
        }
        Poly {
            nvars: self.nvars,
            terms: self.terms.iter().map(|(e, v)| (e.clone(), v * c)).collect(),
        }
    }

    pub fn add(&self, other: &Poly) -> Poly {
        assert_eq!(self.nvars, other.nvars);
        let mut out = self.clone();
        for (e, c) in &other.terms {
            out.add_term(e.clone(), *c);
        }
        out
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        assert_eq!(self.nvars, other.nvars);
        let mut out = self.clone();
        for (e, c) in &other.terms {
            out.add_term(e.clone(), -c);
        }
        out
    }

    pub fn neg(&self) -> Poly {
        self.scale(Complex64::new(-1.0, 0.0))
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        self.mul_filtered(other, |_| true)
    }

    /// Product keeping only monomials accepted by `keep`.
    pub fn mul_filtered<F: Fn(&[u16]) -> bool>(&self, other: &Poly, keep: F) -> Poly {
        assert_eq!(self.nvars, other.nvars);
        let mut acc: HashMap<Exponents, Complex64> = HashMap::new();
        let mut buf = vec![0u16; self.nvars];
        for (ea, ca) in &self.terms {
            for (eb, cb) in &other.terms {
                for k in 0..self.nvars {
                    buf[k] = ea[k] + eb[k];
                }
                if !keep(&buf) {
                    continue;
                }
                *acc.entry(buf.clone()).or_default() += ca * cb;
            }
        }
        Poly::from_terms(self.nvars, acc)
    }

    pub fn pow(&self, k: u32) -> Poly {
        let mut out = Poly::one(self.nvars);
        for _ in 0..k {
            out = out.mul(self);
        }
        out
    }

    /// Partial derivative with respect to variable `i`.
    pub fn derivative(&self, i: usize) -> Poly {
        let mut out = Poly::zero(self.nvars);
        for (e, c) in &self.terms {
            if e[i] == 0 {
                continue;
            }
            let mut e2 = e.clone();
            e2[i] -= 1;
            out.add_term(e2, c * e[i] as f64);
        }
        out
    }

    pub fn eval(&self, point: &[Complex64]) -> Complex64 {
        assert_eq!(point.len(), self.nvars);
        let mut total = Complex64::default();
        for (e, c) in &self.terms {
            let mut t = *c;
            for (k, &p) in e.iter().enumerate() {
                if p > 0 {
                    t *= point[k].powu(p as u32);
                }
            }
            total += t;
        }
        total
    }

    /// Keeps the terms accepted by `keep`.
    pub fn filter<F: Fn(&[u16]) -> bool>(&self, keep: F) -> Poly {
        Poly {
            nvars: self.nvars,
            terms: self
                .terms
                .iter()
                .filter(|(e, _)| keep(e))
                .map(|(e, c)| (e.clone(), *c))
                .collect(),
        }
    }

    /// Drops terms with `|c| <= tol`.
    pub fn prune(&self, tol: f64) -> Poly {
        Poly {
            nvars: self.nvars,
            terms: self
                .terms
                .iter()
                .filter(|(_, c)| c.norm() > tol)
                .map(|(e, c)| (e.clone(), *c))
                .collect(),
        }
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.values().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Total (unweighted) degree; `None` for the zero polynomial.
    pub fn degree(&self) -> Option<u32> {
        self.terms
            .keys()
            .map(|e| e.iter().map(|&k| k as u32).sum())
            .max()
    }

    /// Re-embeds into a larger variable set: variable `i` becomes `map[i]`.
    pub fn remap(&self, nvars: usize, map: &[usize]) -> Poly {
        let mut out = Poly::zero(nvars);
        for (e, c) in &self.terms {
            let mut e2 = vec![0u16; nvars];
            for (i, &k) in e.iter().enumerate() {
                e2[map[i]] += k;
            }
            out.add_term(e2, *c);
        }
        out
    }
}

/// Variable layout `x_1..x_l, w_1..w_n, w̄_1..w̄_n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Layout {
    pub l: usize,
    pub n: usize,
}

impl Layout {
    pub fn new(l: usize, n: usize) -> Self {
        Layout { l, n }
    }
    pub fn nvars(&self) -> usize {
        self.l + 2 * self.n
    }
    pub fn x(&self, h: usize) -> usize {
        h
    }
    pub fn w(&self, j: usize) -> usize {
        self.l + j
    }
    pub fn cw(&self, j: usize) -> usize {
        self.l + self.n + j
    }

    /// Complex conjugate of a polynomial in this layout: swaps `w ↔ w̄`
    /// exponents and conjugates coefficients (the `x` are real).
    pub fn conjugate(&self, p: &Poly) -> Poly {
        let mut out = Poly::zero(p.nvars());
        for (e, c) in p.terms() {
            let mut e2 = e.clone();
            for j in 0..self.n {
                e2.swap(self.w(j), self.cw(j));
            }
            out.add_term(e2, c.conj());
        }
        out
    }

    /// Per-variable weights: `x_h` gets the weight of its block, `w, w̄` get 1.
    pub fn var_weights(&self, weights: &WeightVector) -> Vec<Weight> {
        let mut v = Vec::with_capacity(self.nvars());
        for h in 0..self.l {
            v.push(weights.weight_of_x(h));
        }
        v.extend(std::iter::repeat_n(Weight::Finite(1), 2 * self.n));
        v
    }

    pub fn unit_weights(&self) -> Vec<Weight> {
        vec![Weight::Finite(1); self.nvars()]
    }

    /// Evaluation point for `(x, w)` with `w̄` filled in.
    pub fn point(&self, x: &[f64], w: &[Complex64]) -> Vec<Complex64> {
        let mut p = Vec::with_capacity(self.nvars());
        p.extend(x.iter().map(|&v| Complex64::new(v, 0.0)));
        p.extend_from_slice(w);
        p.extend(w.iter().map(|c| c.conj()));
        p
    }
}

/// Real-valued polynomial in `(x, w, w̄)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RealPoly {
    layout: Layout,
    poly: Poly,
}

/// Relative tolerance for accepting near-conjugate coefficient pairs.
const HERMITIAN_TOL: f64 = 1e-12;

impl RealPoly {
    /// Checks Hermitian symmetry and symmetrizes away rounding noise.
    pub fn new(layout: Layout, poly: Poly) -> Result<Self, PolyError> {
        if poly.nvars() != layout.nvars() {
            return Err(PolyError::VariableMismatch(poly.nvars(), layout.nvars()));
        }
        let conj = layout.conjugate(&poly);
        for (e, c) in poly.terms() {
            let d = (c - conj.coeff(e)).norm();
            if d > HERMITIAN_TOL * (1.0 + c.norm()) {
                return Err(PolyError::NotHermitian(e.clone()));
            }
        }
        for (e, c) in conj.terms() {
            if poly.coeff(e) == Complex64::default() && c.norm() > 0.0 {
                return Err(PolyError::NotHermitian(e.clone()));
            }
        }
        let sym = poly.add(&conj).scale(Complex64::new(0.5, 0.0));
        Ok(RealPoly { layout, poly: sym })
    }

    pub fn zero(layout: Layout) -> Self {
        RealPoly {
            layout,
            poly: Poly::zero(layout.nvars()),
        }
    }

    /// `Re p = (p + p̄)/2` of an arbitrary polynomial.
    pub fn real_part(layout: Layout, p: &Poly) -> Self {
        let poly = p.add(&layout.conjugate(p)).scale(Complex64::new(0.5, 0.0));
        RealPoly { layout, poly }
    }

    /// `Im p = (p − p̄)/(2i)`.
    pub fn imag_part(layout: Layout, p: &Poly) -> Self {
        let poly = p
            .sub(&layout.conjugate(p))
            .scale(Complex64::new(0.0, -0.5));
        RealPoly { layout, poly }
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn as_poly(&self) -> &Poly {
        &self.poly
    }

    pub fn into_poly(self) -> Poly {
        self.poly
    }

    pub fn is_zero(&self) -> bool {
        self.poly.is_zero()
    }

    pub fn add(&self, other: &RealPoly) -> RealPoly {
        RealPoly {
            layout: self.layout,
            poly: self.poly.add(&other.poly),
        }
    }

    pub fn sub(&self, other: &RealPoly) -> RealPoly {
        RealPoly {
            layout: self.layout,
            poly: self.poly.sub(&other.poly),
        }
    }

    pub fn mul(&self, other: &RealPoly) -> RealPoly {
        RealPoly {
            layout: self.layout,
            poly: self.poly.mul(&other.poly),
        }
    }

    pub fn scale(&self, s: f64) -> RealPoly {
        RealPoly {
            layout: self.layout,
            poly: self.poly.scale(Complex64::new(s, 0.0)),
        }
    }

    pub fn filter<F: Fn(&[u16]) -> bool>(&self, keep: F) -> RealPoly {
        RealPoly {
            layout: self.layout,
            poly: self.poly.filter(keep),
        }
    }

    pub fn eval(&self, x: &[f64], w: &[Complex64]) -> f64 {
        self.poly.eval(&self.layout.point(x, w)).re
    }

    /// Compiles the polynomial for repeated real evaluation.
    pub fn compile(&self) -> CompiledPoly {
        CompiledPoly::new(self)
    }
}

/// Flattened form of a [`RealPoly`] for fast pointwise evaluation on grids.
#[derive(Clone, Debug)]
pub struct CompiledPoly {
    layout: Layout,
    terms: Vec<(Complex64, Vec<(usize, u32)>)>,
}

impl CompiledPoly {
    fn new(p: &RealPoly) -> Self {
        let terms = p
            .poly
            .terms()
            .map(|(e, c)| {
                let factors = e
                    .iter()
                    .enumerate()
                    .filter(|(_, &k)| k > 0)
                    .map(|(i, &k)| (i, k as u32))
                    .collect();
                (*c, factors)
            })
            .collect();
        CompiledPoly {
            layout: p.layout,
            terms,
        }
    }

    pub fn eval(&self, x: &[f64], w: &[Complex64]) -> f64 {
        let mut vals = [Complex64::default(); 24];
        let nv = self.layout.nvars();
        let point: Vec<Complex64>;
        let pt: &[Complex64] = if nv <= vals.len() {
            for (k, v) in x.iter().enumerate() {
                vals[k] = Complex64::new(*v, 0.0);
            }
            for (j, v) in w.iter().enumerate() {
                vals[self.layout.w(j)] = *v;
                vals[self.layout.cw(j)] = v.conj();
            }
            &vals[..nv]
        } else {
            point = self.layout.point(x, w);
            &point
        };
        let mut total = 0.0;
        for (c, factors) in &self.terms {
            let mut t = *c;
            for &(i, k) in factors {
                t *= pt[i].powu(k);
            }
            total += t.re;
        }
        total
    }
}

/// Block structure `I_1..I_r` with weights `m_1 < … < m_r` for the `x`
/// variables. Every `w`, `w̄` carries weight 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct WeightVector {
    sizes: Vec<usize>,
    weights: Vec<Weight>,
}

impl WeightVector {
    pub fn new(sizes: Vec<usize>, weights: Vec<Weight>) -> Result<Self, PolyError> {
        if sizes.len() != weights.len() {
            return Err(PolyError::InvalidWeights(format!(
                "{} block sizes but {} weights",
                sizes.len(),
                weights.len()
            )));
        }
        if sizes.contains(&0) {
            return Err(PolyError::InvalidWeights("empty block".into()));
        }
        for pair in weights.windows(2) {
            if pair[0] >= pair[1] {
                return Err(PolyError::InvalidWeights(format!(
                    "weights must increase strictly ({} then {})",
                    pair[0], pair[1]
                )));
            }
        }
        if let Some(Weight::Finite(0)) = weights.first() {
            return Err(PolyError::InvalidWeights("weights must be positive".into()));
        }
        Ok(WeightVector { sizes, weights })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn weights(&self) -> &[Weight] {
        &self.weights
    }

    pub fn num_blocks(&self) -> usize {
        self.sizes.len()
    }

    pub fn l(&self) -> usize {
        self.sizes.iter().sum()
    }

    pub fn block_range(&self, i: usize) -> std::ops::Range<usize> {
        let start: usize = self.sizes[..i].iter().sum();
        start..start + self.sizes[i]
    }

    pub fn block_of(&self, h: usize) -> usize {
        let mut acc = 0;
        for (i, &s) in self.sizes.iter().enumerate() {
            acc += s;
            if h < acc {
                return i;
            }
        }
        panic!("coordinate {h} outside blocks")
    }

    pub fn weight_of_x(&self, h: usize) -> Weight {
        self.weights[self.block_of(h)]
    }

    /// Largest finite weight, if any.
    pub fn max_finite(&self) -> Option<u32> {
        self.weights.iter().filter_map(|w| w.finite()).max()
    }
}

/// Weighted vanishing order of `p` in the layout `(x, w, w̄)`.
pub fn weighted_order(p: &RealPoly, weights: &WeightVector) -> Weight {
    let vw = p.layout().var_weights(weights);
    weighted_order_vars(p.as_poly(), &vw)
}

/// Minimum over terms of the weighted degree; `Infinite` for the zero
/// polynomial.
pub fn weighted_order_vars(p: &Poly, var_weights: &[Weight]) -> Weight {
    p.terms()
        .map(|(e, _)| monomial_weight(e, var_weights))
        .min()
        .unwrap_or(Weight::Infinite)
}

/// Polynomial truncated above a weighted-degree cutoff.
#[derive(Clone, Debug, PartialEq)]
pub struct Jet {
    poly: Poly,
    var_weights: Vec<Weight>,
    cutoff: u32,
}

impl Jet {
    pub fn new(poly: Poly, var_weights: Vec<Weight>, cutoff: u32) -> Self {
        assert_eq!(poly.nvars(), var_weights.len());
        let poly = poly.filter(|e| monomial_weight(e, &var_weights) <= Weight::Finite(cutoff));
        Jet {
            poly,
            var_weights,
            cutoff,
        }
    }

    pub fn zero(var_weights: Vec<Weight>, cutoff: u32) -> Self {
        Jet::new(Poly::zero(var_weights.len()), var_weights, cutoff)
    }

    pub fn constant(c: Complex64, var_weights: Vec<Weight>, cutoff: u32) -> Self {
        Jet::new(Poly::constant(var_weights.len(), c), var_weights, cutoff)
    }

    pub fn poly(&self) -> &Poly {
        &self.poly
    }

    pub fn cutoff(&self) -> u32 {
        self.cutoff
    }

    pub fn var_weights(&self) -> &[Weight] {
        &self.var_weights
    }

    pub fn is_zero(&self) -> bool {
        self.poly.is_zero()
    }

    pub fn constant_term(&self) -> Complex64 {
        self.poly.constant_term()
    }

    fn check_compatible(&self, other: &Jet) -> Result<(), PolyError> {
        if self.cutoff != other.cutoff {
            return Err(PolyError::CutoffMismatch(self.cutoff, other.cutoff));
        }
        if self.var_weights != other.var_weights {
            return Err(PolyError::WeightMismatch);
        }
        Ok(())
    }

    pub fn add(&self, other: &Jet) -> Result<Jet, PolyError> {
        self.check_compatible(other)?;
        Ok(Jet {
            poly: self.poly.add(&other.poly),
            var_weights: self.var_weights.clone(),
            cutoff: self.cutoff,
        })
    }

    pub fn sub(&self, other: &Jet) -> Result<Jet, PolyError> {
        self.check_compatible(other)?;
        Ok(Jet {
            poly: self.poly.sub(&other.poly),
            var_weights: self.var_weights.clone(),
            cutoff: self.cutoff,
        })
    }

    pub fn scale(&self, c: Complex64) -> Jet {
        Jet {
            poly: self.poly.scale(c),
            var_weights: self.var_weights.clone(),
            cutoff: self.cutoff,
        }
    }

    /// Truncates to a lower cutoff.
    pub fn with_cutoff(&self, cutoff: u32) -> Jet {
        assert!(cutoff <= self.cutoff, "cannot raise a jet's cutoff");
        Jet::new(self.poly.clone(), self.var_weights.clone(), cutoff)
    }

    /// Partial derivative. The result is only exact up to `cutoff − weight`,
    /// so the cutoff drops accordingly; `None` if that would go negative.
    pub fn derivative(&self, i: usize) -> Option<Jet> {
        let w = self.var_weights[i].finite()?;
        let cutoff = self.cutoff.checked_sub(w)?;
        Some(Jet::new(self.poly.derivative(i), self.var_weights.clone(), cutoff))
    }
}

/// Product of two jets with terms above the common cutoff discarded.
pub fn jet_mul(a: &Jet, b: &Jet) -> Result<Jet, PolyError> {
    a.check_compatible(b)?;
    let vw = &a.var_weights;
    let limit = Weight::Finite(a.cutoff);
    let poly = a
        .poly
        .mul_filtered(&b.poly, |e| monomial_weight(e, vw) <= limit);
    Ok(Jet {
        poly,
        var_weights: a.var_weights.clone(),
        cutoff: a.cutoff,
    })
}

fn matmul_jets(a: &[Vec<Jet>], b: &[Vec<Jet>]) -> Result<Vec<Vec<Jet>>, PolyError> {
    let n = a.len();
    let proto = &a[0][0];
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut row = Vec::with_capacity(n);
        for j in 0..n {
            let mut acc = Jet::zero(proto.var_weights.clone(), proto.cutoff);
            for k in 0..n {
                acc = acc.add(&jet_mul(&a[i][k], &b[k][j])?)?;
            }
            row.push(acc);
        }
        out.push(row);
    }
    Ok(out)
}

/// Inverse of a square matrix of jets whose constant term is invertible.
///
/// Writes `M = C + N` with `C = M(0)` and sums the Neumann series
/// `M⁻¹ = Σ_k (−C⁻¹N)^k C⁻¹`, which terminates because `C⁻¹N` has positive
/// weighted order.
pub fn jet_matrix_inverse(m: &[Vec<Jet>]) -> Result<Vec<Vec<Jet>>, PolyError> {
    let n = m.len();
    if n == 0 || m.iter().any(|row| row.len() != n) {
        return Err(PolyError::NotSquare);
    }
    let proto = &m[0][0];
    let vw = proto.var_weights.clone();
    let cutoff = proto.cutoff;
    for row in m {
        for e in row {
            proto.check_compatible(e)?;
        }
    }
    let c = DMatrix::from_fn(n, n, |i, j| m[i][j].constant_term());
    let cinv = c.try_inverse().ok_or(PolyError::SingularConstantTerm)?;
    let scale = cinv.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if !scale.is_finite() {
        return Err(PolyError::SingularConstantTerm);
    }
    let cinv_jets: Vec<Vec<Jet>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| Jet::constant(cinv[(i, j)], vw.clone(), cutoff))
                .collect()
        })
        .collect();
    // K = −C⁻¹ N, where N = M − C has no constant term.
    let nil: Vec<Vec<Jet>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let mut p = m[i][j].poly.clone();
                    p.add_term(vec![0; vw.len()], -m[i][j].constant_term());
                    Jet::new(p, vw.clone(), cutoff)
                })
                .collect()
        })
        .collect();
    let mut k = matmul_jets(&cinv_jets, &nil)?;
    for row in k.iter_mut() {
        for e in row.iter_mut() {
            *e = e.scale(Complex64::new(-1.0, 0.0));
        }
    }
    // Minimum positive weight bounds the number of Neumann terms.
    let min_w = vw
        .iter()
        .filter_map(|w| w.finite())
        .filter(|&w| w > 0)
        .min()
        .unwrap_or(1);
    let max_terms = if vw.contains(&Weight::Finite(0)) {
        // zero-weight variables: fall back to iterating until the power vanishes
        usize::MAX
    } else {
        (cutoff / min_w) as usize + 1
    };
    let mut sum = identity_jets(n, &vw, cutoff);
    let mut power = identity_jets(n, &vw, cutoff);
    let mut steps = 0usize;
    loop {
        power = matmul_jets(&power, &k)?;
        if power.iter().all(|row| row.iter().all(|e| e.is_zero())) || steps >= max_terms {
            break;
        }
        for i in 0..n {
            for j in 0..n {
                sum[i][j] = sum[i][j].add(&power[i][j])?;
            }
        }
        steps += 1;
        if steps > 4096 {
            break;
        }
    }
    matmul_jets(&sum, &cinv_jets)
}

fn identity_jets(n: usize, vw: &[Weight], cutoff: u32) -> Vec<Vec<Jet>> {
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        Jet::constant(Complex64::new(1.0, 0.0), vw.to_vec(), cutoff)
                    } else {
                        Jet::zero(vw.to_vec(), cutoff)
                    }
                })
                .collect()
        })
        .collect()
}

/// Substitutes `assignments[i]` for variable `i` of `p`. The assignments
/// share a target variable set and cutoff; the result lives there.
pub fn jet_substitute(p: &Jet, assignments: &[Jet]) -> Result<Jet, PolyError> {
    if assignments.len() != p.poly.nvars() {
        return Err(PolyError::VariableMismatch(assignments.len(), p.poly.nvars()));
    }
    let target = assignments
        .first()
        .ok_or(PolyError::VariableMismatch(0, p.poly.nvars()))?;
    for a in assignments {
        target.check_compatible(a)?;
    }
    let vw = target.var_weights.clone();
    let cutoff = target.cutoff;
    // cache powers per variable
    let mut powers: Vec<Vec<Jet>> = assignments
        .iter()
        .map(|a| vec![Jet::constant(Complex64::new(1.0, 0.0), vw.clone(), cutoff), a.clone()])
        .collect();
    let mut out = Jet::zero(vw.clone(), cutoff);
    for (e, c) in p.poly.terms() {
        let mut term = Jet::constant(*c, vw.clone(), cutoff);
        for (i, &k) in e.iter().enumerate() {
            if k == 0 {
                continue;
            }
            while powers[i].len() <= k as usize {
                let next = jet_mul(powers[i].last().unwrap(), &assignments[i])?;
                powers[i].push(next);
            }
            term = jet_mul(&term, &powers[i][k as usize])?;
            if term.is_zero() {
                break;
            }
        }
        out = out.add(&term)?;
    }
    Ok(out)
}
