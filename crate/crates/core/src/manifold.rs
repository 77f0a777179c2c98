//! Generic submanifolds `M = {y = h(x, w)}` of `C^l_z × C^n_w` through the
//! origin, with the block structure `I_1..I_r` and weights `m_1 < … < m_r`
//! of a seminormal presentation.

pub mod parse;

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hormander;
use crate::linalg::{self, RANK_TOL};
use crate::polyalg::{
    jet_mul, monomial_weight, weighted_order, weighted_order_vars, Jet, Layout, Poly, PolyError,
    RealPoly, Weight, WeightVector,
};

pub use parse::{parse_poly, print_poly, print_poly_with, SyntaxError};

/// Coefficients at or below this size count as zero in validation.
const ZERO_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ManifoldError {
    #[error("syntax error: {0}")]
    Document(String),
    #[error("syntax error in h{component} at column {pos}: {msg}")]
    Syntax {
        component: usize,
        pos: usize,
        msg: String,
    },
    #[error("h(0)=0 violated: h{0} has constant term")]
    NonZeroAtOrigin(usize),
    #[error("∂h(0)=0 violated: h{0} has a linear term")]
    NonZeroGradient(usize),
    #[error("h{0} is not real-valued")]
    NotReal(usize),
    #[error("h{component} has weighted order {order} below declared weight {required}")]
    OrderTooLow {
        component: usize,
        order: Weight,
        required: Weight,
    },
    #[error("declared blocks/weights disagree with computed Hörmander numbers: {0}")]
    WeightMismatch(String),
    #[error("blocks are not in seminormal order after restriction: {0}")]
    NotSeminormal(String),
    #[error("expected {expected} defining functions, found {found}")]
    WrongCount { expected: usize, found: usize },
    #[error("direction index {0} out of range")]
    IndexOutOfRange(usize),
    #[error("block {0} has infinite weight")]
    InfiniteWeight(usize),
    #[error("polynomial is not weighted-homogeneous")]
    NotHomogeneous,
    #[error("dimensions must be positive (l={l}, n={n})")]
    BadDimensions { l: usize, n: usize },
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error("bracket computation failed: {0}")]
    Filtration(String),
}

/// A validated model `y_j = h_j(x, w)`, `j = 1..l`.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldModel {
    layout: Layout,
    weights: WeightVector,
    h: Vec<RealPoly>,
}

/// The model cut by `w_j = 0` for every `j ≠ direction`; always `n = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct LineRestriction {
    pub model: ManifoldModel,
    pub direction: usize,
}

impl ManifoldModel {
    /// Builds and validates a model. When `weights` is `None` the blocks are
    /// taken from the bracket filtration, in coordinate order.
    pub fn new(
        l: usize,
        n: usize,
        weights: Option<WeightVector>,
        h: Vec<Poly>,
    ) -> Result<Self, ManifoldError> {
        if l == 0 || n == 0 {
            return Err(ManifoldError::BadDimensions { l, n });
        }
        if h.len() != l {
            return Err(ManifoldError::WrongCount {
                expected: l,
                found: h.len(),
            });
        }
        let layout = Layout::new(l, n);
        let mut reals = Vec::with_capacity(l);
        for (j, p) in h.into_iter().enumerate() {
            if p.nvars() != layout.nvars() {
                return Err(PolyError::VariableMismatch(p.nvars(), layout.nvars()).into());
            }
            check_origin(&p, j)?;
            let r = RealPoly::new(layout, p).map_err(|_| ManifoldError::NotReal(j + 1))?;
            reals.push(r);
        }
        let provisional = ManifoldModel {
            layout,
            weights: WeightVector::new(vec![l], vec![Weight::Infinite])?,
            h: reals.clone(),
        };
        let computed = computed_blocks(&provisional, weights.as_ref())?;
        let weights = match weights {
            Some(w) => {
                if w.l() != l {
                    return Err(ManifoldError::WeightMismatch(format!(
                        "blocks cover {} coordinates, expected {l}",
                        w.l()
                    )));
                }
                check_orders(&reals, &w)?;
                compare_declared(&w, &computed)?;
                w
            }
            None => {
                let w = blocks_from_numbers(l, &computed)?;
                check_orders(&reals, &w)?;
                w
            }
        };
        Ok(ManifoldModel {
            layout,
            weights,
            h: reals,
        })
    }

    /// Validates the pointwise invariants only, trusting the given weights.
    fn with_weights(
        layout: Layout,
        weights: WeightVector,
        h: Vec<RealPoly>,
    ) -> Result<Self, ManifoldError> {
        for (j, p) in h.iter().enumerate() {
            check_origin(p.as_poly(), j)?;
        }
        check_orders(&h, &weights)?;
        Ok(ManifoldModel { layout, weights, h })
    }

    pub fn l(&self) -> usize {
        self.layout.l
    }

    pub fn n(&self) -> usize {
        self.layout.n
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn weights(&self) -> &WeightVector {
        &self.weights
    }

    pub fn h(&self) -> &[RealPoly] {
        &self.h
    }

    /// Per-variable weights in the `(x, w, w̄)` layout.
    pub fn var_weights(&self) -> Vec<Weight> {
        self.layout.var_weights(&self.weights)
    }

    /// `h` restricted to one line `w = w_k` of an `n = 1` model, evaluated
    /// at real `x` and complex `w`.
    pub fn eval_h(&self, x: &[f64], w: &[Complex64]) -> Vec<f64> {
        self.h.iter().map(|p| p.eval(x, w)).collect()
    }

    /// Parses a manifold document (TOML) and validates it.
    pub fn parse_and_validate(text: &str) -> Result<Self, ManifoldError> {
        let doc: ModelDocument =
            toml::from_str(text).map_err(|e| ManifoldError::Document(e.message().to_string()))?;
        let layout = Layout::new(doc.l, doc.n);
        if doc.l == 0 || doc.n == 0 {
            return Err(ManifoldError::BadDimensions { l: doc.l, n: doc.n });
        }
        if doc.h.len() != doc.l {
            return Err(ManifoldError::WrongCount {
                expected: doc.l,
                found: doc.h.len(),
            });
        }
        let mut polys = Vec::with_capacity(doc.l);
        for (j, src) in doc.h.iter().enumerate() {
            let p = parse_poly(src, layout).map_err(|e| ManifoldError::Syntax {
                component: j + 1,
                pos: e.pos,
                msg: e.msg,
            })?;
            polys.push(p);
        }
        let weights = match (doc.blocks, doc.weights) {
            (None, None) => None,
            (Some(b), Some(w)) => {
                let ws = w
                    .into_iter()
                    .map(WeightEntry::into_weight)
                    .collect::<Result<Vec<_>, _>>()?;
                Some(WeightVector::new(b, ws)?)
            }
            _ => {
                return Err(ManifoldError::Document(
                    "`blocks` and `weights` must be given together".into(),
                ))
            }
        };
        ManifoldModel::new(doc.l, doc.n, weights, polys)
    }

    /// Canonical document text; parsing it yields an equal model.
    pub fn to_document_string(&self) -> String {
        let doc = ModelDocument {
            l: self.l(),
            n: self.n(),
            blocks: Some(self.weights.sizes().to_vec()),
            weights: Some(
                self.weights
                    .weights()
                    .iter()
                    .map(|w| match w {
                        Weight::Finite(v) => WeightEntry::Int(*v),
                        Weight::Infinite => WeightEntry::Text("inf".into()),
                    })
                    .collect(),
            ),
            h: self
                .h
                .iter()
                .map(|p| print_poly(p.as_poly(), self.layout))
                .collect(),
        };
        toml::to_string(&doc).expect("document serializes")
    }

    /// Restriction to the complex line of `w_k` (0-based).
    pub fn restrict_to_line(&self, k: usize) -> Result<LineRestriction, ManifoldError> {
        if k >= self.n() {
            return Err(ManifoldError::IndexOutOfRange(k));
        }
        let lay1 = Layout::new(self.l(), 1);
        let mut map = vec![0usize; self.layout.nvars()];
        for h in 0..self.l() {
            map[self.layout.x(h)] = lay1.x(h);
        }
        let h: Vec<RealPoly> = self
            .h
            .iter()
            .map(|p| {
                let kept = p.as_poly().filter(|e| {
                    (0..self.n()).all(|j| j == k || (e[self.layout.w(j)] == 0 && e[self.layout.cw(j)] == 0))
                });
                let mut m = map.clone();
                m[self.layout.w(k)] = lay1.w(0);
                m[self.layout.cw(k)] = lay1.cw(0);
                for j in 0..self.n() {
                    if j != k {
                        m[self.layout.w(j)] = lay1.w(0);
                        m[self.layout.cw(j)] = lay1.cw(0);
                    }
                }
                RealPoly::new(lay1, kept.remap(lay1.nvars(), &m)).expect("restriction keeps realness")
            })
            .collect();
        let weights = restricted_weights(&self.weights, &h)?;
        let model = ManifoldModel::with_weights(lay1, weights, h)?;
        Ok(LineRestriction {
            model,
            direction: k,
        })
    }

    /// The weighted-homogeneous part of weight `m_i` of `h_{I_i}`.
    pub fn lowest_weight_part(&self, block: usize) -> Result<Vec<RealPoly>, ManifoldError> {
        let mi = self.weights.weights()[block]
            .finite()
            .ok_or(ManifoldError::InfiniteWeight(block))?;
        let vw = self.var_weights();
        Ok(self
            .weights
            .block_range(block)
            .map(|j| {
                self.h[j].filter(|e| monomial_weight(e, &vw) == Weight::Finite(mi))
            })
            .collect())
    }
}

fn check_origin(p: &Poly, j: usize) -> Result<(), ManifoldError> {
    for (e, c) in p.terms() {
        if c.norm() <= ZERO_TOL {
            continue;
        }
        match e.iter().map(|&k| k as u32).sum::<u32>() {
            0 => return Err(ManifoldError::NonZeroAtOrigin(j + 1)),
            1 => return Err(ManifoldError::NonZeroGradient(j + 1)),
            _ => {}
        }
    }
    Ok(())
}

fn check_orders(h: &[RealPoly], w: &WeightVector) -> Result<(), ManifoldError> {
    for block in 0..w.num_blocks() {
        let required = w.weights()[block];
        for j in w.block_range(block) {
            let pruned = h[j].as_poly().prune(ZERO_TOL);
            let vw = h[j].layout().var_weights(w);
            let order = weighted_order_vars(&pruned, &vw);
            if order < required {
                return Err(ManifoldError::OrderTooLow {
                    component: j + 1,
                    order,
                    required,
                });
            }
        }
    }
    Ok(())
}

/// Filtration cap used to cross-check or derive the block structure.
fn filtration_cap(model: &ManifoldModel, declared: Option<&WeightVector>) -> usize {
    match declared.and_then(|w| w.max_finite()) {
        Some(m) => m as usize + 2,
        None if declared.is_some() => 2,
        None => {
            let deg = model
                .h
                .iter()
                .filter_map(|p| p.as_poly().degree())
                .max()
                .unwrap_or(2) as usize;
            (2 * deg).clamp(4, 10)
        }
    }
}

fn computed_blocks(
    model: &ManifoldModel,
    declared: Option<&WeightVector>,
) -> Result<Vec<(u32, usize)>, ManifoldError> {
    let cap = filtration_cap(model, declared);
    let rep = hormander::filtration(model, cap)
        .map_err(|e| ManifoldError::Filtration(e.to_string()))?;
    Ok(rep.hormander_numbers)
}

fn blocks_from_numbers(l: usize, numbers: &[(u32, usize)]) -> Result<WeightVector, ManifoldError> {
    let mut sizes: Vec<usize> = numbers.iter().map(|&(_, s)| s).collect();
    let mut weights: Vec<Weight> = numbers.iter().map(|&(m, _)| Weight::Finite(m)).collect();
    let covered: usize = sizes.iter().sum();
    if covered < l {
        sizes.push(l - covered);
        weights.push(Weight::Infinite);
    }
    Ok(WeightVector::new(sizes, weights)?)
}

fn compare_declared(w: &WeightVector, computed: &[(u32, usize)]) -> Result<(), ManifoldError> {
    let declared: Vec<(u32, usize)> = w
        .weights()
        .iter()
        .zip(w.sizes())
        .filter_map(|(m, &s)| m.finite().map(|m| (m, s)))
        .collect();
    if declared != computed {
        return Err(ManifoldError::WeightMismatch(format!(
            "declared {declared:?}, computed {computed:?}"
        )));
    }
    Ok(())
}

/// Seminormal weights of a restricted model: block by block, the weighted
/// order of `h_{I_i}` with earlier blocks at their new weights and later
/// blocks not yet counted. Equal neighbours merge; a decrease is an error.
fn restricted_weights(orig: &WeightVector, h: &[RealPoly]) -> Result<WeightVector, ManifoldError> {
    let lay = h[0].layout();
    let mut x_weights = vec![Weight::Infinite; lay.l];
    let mut block_weights = Vec::with_capacity(orig.num_blocks());
    for b in 0..orig.num_blocks() {
        let mut vw = x_weights.clone();
        vw.extend(std::iter::repeat_n(Weight::Finite(1), 2 * lay.n));
        let order = orig
            .block_range(b)
            .map(|j| weighted_order_vars(&h[j].as_poly().prune(ZERO_TOL), &vw))
            .min()
            .unwrap_or(Weight::Infinite);
        for j in orig.block_range(b) {
            x_weights[j] = order;
        }
        block_weights.push(order);
    }
    let mut sizes: Vec<usize> = Vec::new();
    let mut weights: Vec<Weight> = Vec::new();
    for (b, &w) in block_weights.iter().enumerate() {
        let size = orig.sizes()[b];
        match weights.last() {
            Some(&prev) if prev == w => *sizes.last_mut().unwrap() += size,
            Some(&prev) if prev > w => {
                return Err(ManifoldError::NotSeminormal(format!(
                    "block {} has weight {w} after weight {prev}",
                    b + 1
                )))
            }
            _ => {
                sizes.push(size);
                weights.push(w);
            }
        }
    }
    Ok(WeightVector::new(sizes, weights)?)
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelDocument {
    l: usize,
    n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    blocks: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weights: Option<Vec<WeightEntry>>,
    h: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum WeightEntry {
    Int(u32),
    Text(String),
}

impl WeightEntry {
    fn into_weight(self) -> Result<Weight, ManifoldError> {
        match self {
            WeightEntry::Int(v) => Ok(Weight::Finite(v)),
            WeightEntry::Text(s) if s == "inf" => Ok(Weight::Infinite),
            WeightEntry::Text(s) => Err(ManifoldError::Document(format!("bad weight '{s}'"))),
        }
    }
}

/// Outcome of [`pluriharmonic_test`].
#[derive(Debug, Clone)]
pub struct PluriharmonicResult {
    pub is_pluriharmonic: bool,
    /// `F` in the variables `z_1..z_l, w` when solvable.
    pub witness: Option<Poly>,
    /// Weight of the tested polynomial.
    pub weight: Weight,
}

/// Holomorphic monomials `z^α w^β` of weighted degree `≤ m`, with `z_h`
/// weighted like `x_h`.
fn holomorphic_monomials(x_weights: &[Weight], m: u32) -> Vec<Vec<u16>> {
    let nz = x_weights.len();
    let mut out = Vec::new();
    let mut cur = vec![0u16; nz + 1];
    fn rec(
        i: usize,
        budget: u32,
        xw: &[Weight],
        cur: &mut Vec<u16>,
        out: &mut Vec<Vec<u16>>,
    ) {
        if i == xw.len() {
            for b in 0..=budget {
                cur[i] = b as u16;
                out.push(cur.clone());
            }
            cur[i] = 0;
            return;
        }
        match xw[i] {
            Weight::Finite(w) if w > 0 => {
                let mut k = 0;
                while k * w <= budget {
                    cur[i] = k as u16;
                    rec(i + 1, budget - k * w, xw, cur, out);
                    k += 1;
                }
                cur[i] = 0;
            }
            _ => rec(i + 1, budget, xw, cur, out),
        }
    }
    rec(0, m, x_weights, &mut cur, &mut out);
    out
}

/// Real linear system for `Im F|_M̃ = target + O^{m+1}`: one column per
/// real parameter of `F`, one row per (monomial, re/im) pair.
struct PluriSystem {
    a: DMatrix<f64>,
    rows: BTreeMap<Vec<u16>, usize>,
    monomials: Vec<Vec<u16>>,
    nz: usize,
}

fn restricted_monomial(
    line: &ManifoldModel,
    mono: &[u16],
    z_sub: &[Jet],
    w_jet: &Jet,
) -> Result<Poly, PolyError> {
    let mut acc = Jet::constant(
        Complex64::new(1.0, 0.0),
        w_jet.var_weights().to_vec(),
        w_jet.cutoff(),
    );
    for (h, &k) in mono[..line.l()].iter().enumerate() {
        for _ in 0..k {
            acc = jet_mul(&acc, &z_sub[h])?;
        }
    }
    for _ in 0..mono[line.l()] {
        acc = jet_mul(&acc, w_jet)?;
    }
    Ok(acc.poly().clone())
}

fn build_system(line: &ManifoldModel, m: u32) -> Result<PluriSystem, PolyError> {
    let lay = line.layout();
    let vw = line.var_weights();
    let nv = lay.nvars();
    // z variables of weight ≥ m are excluded: `F = z_h` would match `h_h` itself.
    let x_weights: Vec<Weight> = (0..lay.l)
        .map(|h| match line.weights().weight_of_x(h) {
            Weight::Finite(w) if w < m => Weight::Finite(w),
            _ => Weight::Infinite,
        })
        .collect();
    let monomials = holomorphic_monomials(&x_weights, m);
    // z_h = x_h + i h_h(x, w), truncated at weight m
    let z_sub: Vec<Jet> = (0..lay.l)
        .map(|h| {
            let p = Poly::var(nv, lay.x(h)).add(&line.h()[h].as_poly().scale(Complex64::new(0.0, 1.0)));
            Jet::new(p, vw.clone(), m)
        })
        .collect();
    let w_jet = Jet::new(Poly::var(nv, lay.w(0)), vw.clone(), m);
    let mut cols: Vec<(RealPoly, RealPoly)> = Vec::with_capacity(monomials.len());
    for mono in &monomials {
        let p = restricted_monomial(line, mono, &z_sub, &w_jet)?;
        // Im((a + ib) P) = a Im P + b Re P
        cols.push((RealPoly::imag_part(lay, &p), RealPoly::real_part(lay, &p)));
    }
    let mut rows: BTreeMap<Vec<u16>, usize> = BTreeMap::new();
    for (ip, rp) in &cols {
        for poly in [ip, rp] {
            for (e, _) in poly.as_poly().terms() {
                let next = rows.len();
                rows.entry(e.clone()).or_insert(next);
            }
        }
    }
    let mut a = DMatrix::zeros(2 * rows.len(), 2 * cols.len());
    for (c, (ip, rp)) in cols.iter().enumerate() {
        for (k, poly) in [ip, rp].into_iter().enumerate() {
            for (e, v) in poly.as_poly().terms() {
                let r = rows[e];
                a[(2 * r, 2 * c + k)] = v.re;
                a[(2 * r + 1, 2 * c + k)] = v.im;
            }
        }
    }
    Ok(PluriSystem {
        a,
        rows,
        monomials,
        nz: lay.l,
    })
}

fn homogeneous_weight(g: &RealPoly, vw: &[Weight]) -> Result<Option<u32>, ManifoldError> {
    let pruned = g.as_poly().prune(ZERO_TOL);
    let mut weight = None;
    for (e, _) in pruned.terms() {
        let w = monomial_weight(e, vw)
            .finite()
            .ok_or(ManifoldError::NotHomogeneous)?;
        match weight {
            None => weight = Some(w),
            Some(prev) if prev != w => return Err(ManifoldError::NotHomogeneous),
            _ => {}
        }
    }
    Ok(weight)
}

/// Right-hand side vector for target polynomials; `None` when some target
/// monomial cannot be produced by any `F`.
fn rhs(sys: &PluriSystem, g: &RealPoly) -> Result<DVector<f64>, ()> {
    let mut b = DVector::zeros(sys.a.nrows());
    for (e, v) in g.as_poly().prune(ZERO_TOL).terms() {
        let r = *sys.rows.get(e).ok_or(())?;
        b[2 * r] = v.re;
        b[2 * r + 1] = v.im;
    }
    Ok(b)
}

fn augmented_rank(a: &DMatrix<f64>, cols: &[DVector<f64>]) -> usize {
    let mut m = DMatrix::zeros(a.nrows(), a.ncols() + cols.len());
    m.view_mut((0, 0), (a.nrows(), a.ncols())).copy_from(a);
    for (k, c) in cols.iter().enumerate() {
        m.set_column(a.ncols() + k, c);
    }
    linalg::real_rank(&m, RANK_TOL)
}

/// Decides whether a weighted-homogeneous `g` of weight `m` on the line
/// `M̃` equals `Im F|_M̃ + O^{m+1}` for a holomorphic polynomial `F` of
/// weighted degree `≤ m` in `w` and the `z` variables of weight below `m`.
pub fn pluriharmonic_test(
    g: &RealPoly,
    line: &LineRestriction,
) -> Result<PluriharmonicResult, ManifoldError> {
    let model = &line.model;
    if g.layout() != model.layout() {
        return Err(PolyError::VariableMismatch(g.layout().nvars(), model.layout().nvars()).into());
    }
    let vw = model.var_weights();
    let Some(m) = homogeneous_weight(g, &vw)? else {
        return Ok(PluriharmonicResult {
            is_pluriharmonic: true,
            witness: Some(Poly::zero(model.l() + 1)),
            weight: Weight::Infinite,
        });
    };
    let sys = build_system(model, m)?;
    let Ok(b) = rhs(&sys, g) else {
        return Ok(PluriharmonicResult {
            is_pluriharmonic: false,
            witness: None,
            weight: Weight::Finite(m),
        });
    };
    let rank_a = linalg::real_rank(&sys.a, RANK_TOL);
    let rank_ab = augmented_rank(&sys.a, std::slice::from_ref(&b));
    if rank_ab > rank_a {
        return Ok(PluriharmonicResult {
            is_pluriharmonic: false,
            witness: None,
            weight: Weight::Finite(m),
        });
    }
    let sol = linalg::lstsq(&sys.a, &b);
    let mut f = Poly::zero(sys.nz + 1);
    for (c, mono) in sys.monomials.iter().enumerate() {
        let coeff = Complex64::new(sol[2 * c], sol[2 * c + 1]);
        if coeff.norm() > 1e-10 {
            f.add_term(mono.clone(), coeff);
        }
    }
    Ok(PluriharmonicResult {
        is_pluriharmonic: true,
        witness: Some(f),
        weight: Weight::Finite(m),
    })
}

/// Dimension of the space of `ξ ∈ R^{k}` for which `⟨ξ, P⟩` is pluriharmonic
/// on the line, where `P = (P_1..P_k)` share the weight `m`.
pub fn pluriharmonic_subspace_dim(
    ps: &[RealPoly],
    line: &LineRestriction,
) -> Result<usize, ManifoldError> {
    let model = &line.model;
    let vw = model.var_weights();
    let mut m = None;
    for p in ps {
        if let Some(w) = homogeneous_weight(p, &vw)? {
            if m.is_some_and(|prev| prev != w) {
                return Err(ManifoldError::NotHomogeneous);
            }
            m = Some(w);
        }
    }
    let Some(m) = m else { return Ok(ps.len()) };
    let sys = build_system(model, m)?;
    let mut cols = Vec::with_capacity(ps.len());
    // A target monomial outside the system's rows gets a fresh row.
    let mut extra_rows: BTreeMap<Vec<u16>, usize> = BTreeMap::new();
    for p in ps {
        for (e, _) in p.as_poly().prune(ZERO_TOL).terms() {
            if !sys.rows.contains_key(e) {
                let next = extra_rows.len();
                extra_rows.entry(e.clone()).or_insert(next);
            }
        }
    }
    let base = sys.a.nrows();
    let total = base + 2 * extra_rows.len();
    let a = sys.a.clone().resize_vertically(total, 0.0);
    for p in ps {
        let mut b = DVector::zeros(total);
        for (e, v) in p.as_poly().prune(ZERO_TOL).terms() {
            let r = match sys.rows.get(e) {
                Some(&r) => 2 * r,
                None => base + 2 * extra_rows[e],
            };
            b[r] = v.re;
            b[r + 1] = v.im;
        }
        cols.push(b);
    }
    let rank_a = linalg::real_rank(&a, RANK_TOL);
    let rank_ab = augmented_rank(&a, &cols);
    Ok(ps.len() - (rank_ab - rank_a))
}

/// Weight-`m` part of `Im F|_M̃` for a holomorphic `F` in `(z_1..z_l, w)`,
/// with lower weights kept so callers can check they vanish.
pub fn restricted_imaginary_part(
    f: &Poly,
    line: &LineRestriction,
    m: u32,
) -> Result<RealPoly, ManifoldError> {
    let model = &line.model;
    let lay = model.layout();
    let vw = model.var_weights();
    let nv = lay.nvars();
    let z_sub: Vec<Jet> = (0..lay.l)
        .map(|h| {
            let p = Poly::var(nv, lay.x(h)).add(&model.h()[h].as_poly().scale(Complex64::new(0.0, 1.0)));
            Jet::new(p, vw.clone(), m)
        })
        .collect();
    let w_jet = Jet::new(Poly::var(nv, lay.w(0)), vw.clone(), m);
    let mut total = Poly::zero(nv);
    for (mono, c) in f.terms() {
        let p = restricted_monomial(model, mono, &z_sub, &w_jet)?;
        total = total.add(&p.scale(*c));
    }
    Ok(RealPoly::imag_part(lay, &total))
}

impl LineRestriction {
    pub fn h(&self) -> &[RealPoly] {
        self.model.h()
    }

    pub fn weights(&self) -> &WeightVector {
        self.model.weights()
    }
}

/// Weighted order of `p` under the model's weights.
pub fn order_in(model: &ManifoldModel, p: &RealPoly) -> Weight {
    weighted_order(p, model.weights())
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const LEVI: &str = "l = 1\nn = 1\nblocks = [1]\nweights = [2]\nh = [\"abs2(w1)\"]\n";
    pub(crate) const MAIN: &str = "l = 2\nn = 2\nblocks = [1, 1]\nweights = [2, 4]\nh = [\"abs2(w1) + abs2(w2)\", \"abs2(w2)^2 + x1*abs2(w1)\"]\n";

    #[test]
    fn levi_parses() {
        let m = ManifoldModel::parse_and_validate(LEVI).unwrap();
        assert_eq!(m.weights().weights(), &[Weight::Finite(2)]);
    }

    #[test]
    fn gradient_violation() {
        let doc = "l = 1\nn = 1\nh = [\"x1\"]\n";
        let e = ManifoldModel::parse_and_validate(doc).unwrap_err();
        assert!(e.to_string().contains("∂h(0)=0 violated"), "{e}");
    }

    #[test]
    fn other_violations() {
        let e = ManifoldModel::parse_and_validate("l = 1\nn = 1\nh = [\"1 + abs2(w1)\"]").unwrap_err();
        assert_eq!(e, ManifoldError::NonZeroAtOrigin(1));
        let e = ManifoldModel::parse_and_validate("l = 1\nn = 1\nh = [\"w1^2\"]").unwrap_err();
        assert_eq!(e, ManifoldError::NotReal(1));
        let doc = "l = 1\nn = 1\nblocks = [1]\nweights = [4]\nh = [\"abs2(w1)\"]";
        assert!(matches!(
            ManifoldModel::parse_and_validate(doc).unwrap_err(),
            ManifoldError::OrderTooLow { .. }
        ));
        let doc = "l = 1\nn = 1\nblocks = [1]\nweights = [2]\nh = [\"abs2(w1)^2\"]";
        assert!(matches!(
            ManifoldModel::parse_and_validate(doc).unwrap_err(),
            ManifoldError::WeightMismatch(_)
        ));
    }

    #[test]
    fn main_example_blocks() {
        let m = ManifoldModel::parse_and_validate(MAIN).unwrap();
        assert_eq!(m.weights().sizes(), &[1, 1]);
        assert_eq!(m.weights().weights(), &[Weight::Finite(2), Weight::Finite(4)]);
        let undeclared = MAIN.replace("blocks = [1, 1]\nweights = [2, 4]\n", "");
        assert_eq!(ManifoldModel::parse_and_validate(&undeclared).unwrap(), m);
    }

    #[test]
    fn round_trip() {
        let m = ManifoldModel::parse_and_validate(MAIN).unwrap();
        let s = m.to_document_string();
        assert_eq!(ManifoldModel::parse_and_validate(&s).unwrap(), m);
        let flat = "l = 1\nn = 1\nblocks = [1]\nweights = [\"inf\"]\nh = [\"0\"]\n";
        let f = ManifoldModel::parse_and_validate(flat).unwrap();
        assert_eq!(ManifoldModel::parse_and_validate(&f.to_document_string()).unwrap(), f);
    }

    #[test]
    fn restrictions() {
        let m = ManifoldModel::parse_and_validate(MAIN).unwrap();
        let lay = Layout::new(2, 1);
        let r2 = m.restrict_to_line(1).unwrap();
        assert_eq!(r2.h()[0].as_poly(), &parse_poly("w1*cw1", lay).unwrap());
        assert_eq!(r2.h()[1].as_poly(), &parse_poly("(w1*cw1)^2", lay).unwrap());
        let r1 = m.restrict_to_line(0).unwrap();
        assert_eq!(r1.h()[1].as_poly(), &parse_poly("x1*w1*cw1", lay).unwrap());
        assert_eq!(r1.weights().weights(), &[Weight::Finite(2), Weight::Finite(4)]);
        assert!(m.restrict_to_line(2).is_err());

        let levi = ManifoldModel::parse_and_validate(LEVI).unwrap();
        assert_eq!(levi.restrict_to_line(0).unwrap().model, levi);
    }

    #[test]
    fn lowest_parts() {
        let doc = "l = 1\nn = 1\nblocks = [1]\nweights = [2]\nh = [\"abs2(w1) + x1^3\"]";
        let m = ManifoldModel::parse_and_validate(doc).unwrap();
        let p = m.lowest_weight_part(0).unwrap();
        assert_eq!(p[0].as_poly(), &parse_poly("w1*cw1", m.layout()).unwrap());

        let main = ManifoldModel::parse_and_validate(MAIN).unwrap();
        let p2 = main.lowest_weight_part(1).unwrap();
        assert_eq!(p2[0], main.h()[1]);

        let flat = "l = 1\nn = 1\nblocks = [1]\nweights = [\"inf\"]\nh = [\"0\"]\n";
        let f = ManifoldModel::parse_and_validate(flat).unwrap();
        assert_eq!(f.lowest_weight_part(0), Err(ManifoldError::InfiniteWeight(0)));
    }

    fn real(src: &str, lay: Layout) -> RealPoly {
        RealPoly::new(lay, parse_poly(src, lay).unwrap()).unwrap()
    }

    #[test]
    fn pluriharmonic_examples() {
        let levi = ManifoldModel::parse_and_validate(LEVI).unwrap();
        let line = levi.restrict_to_line(0).unwrap();
        let lay = levi.layout();

        let r = pluriharmonic_test(&real("Re(w1^2)", lay), &line).unwrap();
        assert!(r.is_pluriharmonic);
        let f = r.witness.unwrap();
        let back = restricted_imaginary_part(&f, &line, 2).unwrap();
        assert!(back.sub(&real("Re(w1^2)", lay)).as_poly().max_abs_coeff() < 1e-10);

        assert!(!pluriharmonic_test(&real("abs2(w1)", lay), &line).unwrap().is_pluriharmonic);

        // x1 Im w1 at weight 3: Im(z1 w1) leaves |w1|^2 Re w1 at the same weight.
        let g = real("x1*Im(w1)", lay);
        assert!(!pluriharmonic_test(&g, &line).unwrap().is_pluriharmonic);
        let zw = Poly::monomial(vec![1, 1], Complex64::new(1.0, 0.0));
        let resid = restricted_imaginary_part(&zw, &line, 3).unwrap().sub(&g);
        assert_eq!(
            weighted_order(&resid.filter(|_| true), levi.weights()),
            Weight::Finite(3)
        );
    }

    #[test]
    fn main_line_one_leading_part_is_pluriharmonic() {
        let m = ManifoldModel::parse_and_validate(MAIN).unwrap();
        let line = m.restrict_to_line(0).unwrap();
        let p = line.model.lowest_weight_part(1).unwrap();
        let r = pluriharmonic_test(&p[0], &line).unwrap();
        assert!(r.is_pluriharmonic);
        let line2 = m.restrict_to_line(1).unwrap();
        let p2 = line2.model.lowest_weight_part(1).unwrap();
        assert!(!pluriharmonic_test(&p2[0], &line2).unwrap().is_pluriharmonic);
    }

    #[test]
    fn non_homogeneous_rejected() {
        let levi = ManifoldModel::parse_and_validate(LEVI).unwrap();
        let line = levi.restrict_to_line(0).unwrap();
        let g = real("abs2(w1) + Re(w1^3)", levi.layout());
        assert!(matches!(
            pluriharmonic_test(&g, &line),
            Err(ManifoldError::NotHomogeneous)
        ));
    }
}
