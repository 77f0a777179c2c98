//! Vector fields with truncated-jet coefficients, the CR basis of a model,
//! the bracket filtration `L^1 ⊂ L^2 ⊂ …` at the origin, and bracket
//! pairings against the defining functions `r_j = −y_j + h_j`.
//!
//! Coefficients are polynomials in `(x, w, w̄)` truncated in ordinary
//! degree. A jet with cutoff `c` is exact through degree `c`; applying a
//! derivation loses one degree, so a bracket of two fields with cutoff `c`
//! has cutoff `c − 1`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::linalg::{self, RANK_TOL};
use crate::manifold::{LineRestriction, ManifoldModel};
use crate::polyalg::{jet_matrix_inverse, jet_mul, Jet, Layout, Poly, PolyError, Weight};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HormanderError {
    #[error("jet cutoff mismatch: {0} vs {1}")]
    CutoffMismatch(u32, u32),
    #[error("insufficient jet cutoff: need {needed}, have {have}")]
    InsufficientCutoff { needed: u32, have: u32 },
    #[error("word of length {len} exceeds cutoff {cutoff} − 2")]
    WordTooLong { len: usize, cutoff: u32 },
    #[error("words must have length at least 2")]
    WordTooShort,
    #[error("k = {k} is not the first Hörmander number {m1}")]
    NotFirstNumber { k: u32, m1: Weight },
    #[error("first Hörmander number is infinite")]
    InfiniteOrder,
    #[error("filtration cap must be at least 2")]
    BadCap,
    #[error("base direction must have {0} entries")]
    BadBase(usize),
    #[error(transparent)]
    Poly(#[from] PolyError),
}

const HALF: Complex64 = Complex64::new(0.5, 0.0);

fn unit_weights(layout: Layout) -> Vec<Weight> {
    vec![Weight::Finite(1); layout.nvars()]
}

/// A complex vector field `Σ a_h ∂_{z_h} + b_h ∂_{z̄_h} + c_j ∂_{w_j} + d_j ∂_{w̄_j}`
/// whose coefficients are jets in `(x, w, w̄)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorFieldJet {
    layout: Layout,
    coeffs: Vec<Jet>,
}

impl VectorFieldJet {
    pub fn zero(layout: Layout, cutoff: u32) -> Self {
        let n = 2 * layout.l + 2 * layout.n;
        VectorFieldJet {
            layout,
            coeffs: vec![Jet::zero(unit_weights(layout), cutoff); n],
        }
    }

    /// Builds a field from exact polynomial coefficients.
    pub fn from_polys(layout: Layout, coeffs: Vec<Poly>, cutoff: u32) -> Self {
        assert_eq!(coeffs.len(), 2 * layout.l + 2 * layout.n);
        let vw = unit_weights(layout);
        VectorFieldJet {
            layout,
            coeffs: coeffs
                .into_iter()
                .map(|p| Jet::new(p, vw.clone(), cutoff))
                .collect(),
        }
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn cutoff(&self) -> u32 {
        self.coeffs[0].cutoff()
    }

    pub fn coeffs(&self) -> &[Jet] {
        &self.coeffs
    }

    pub fn dz(&self, h: usize) -> &Jet {
        &self.coeffs[h]
    }

    pub fn dzb(&self, h: usize) -> &Jet {
        &self.coeffs[self.layout.l + h]
    }

    pub fn dw(&self, j: usize) -> &Jet {
        &self.coeffs[2 * self.layout.l + j]
    }

    pub fn dwb(&self, j: usize) -> &Jet {
        &self.coeffs[2 * self.layout.l + self.layout.n + j]
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(Jet::is_zero)
    }

    /// Coefficient values at the origin, ordered `∂_z, ∂_z̄, ∂_w, ∂_w̄`.
    pub fn value_at_origin(&self) -> Vec<Complex64> {
        self.coeffs.iter().map(Jet::constant_term).collect()
    }

    pub fn with_cutoff(&self, cutoff: u32) -> Self {
        VectorFieldJet {
            layout: self.layout,
            coeffs: self.coeffs.iter().map(|c| c.with_cutoff(cutoff)).collect(),
        }
    }

    pub fn scale(&self, c: Complex64) -> Self {
        VectorFieldJet {
            layout: self.layout,
            coeffs: self.coeffs.iter().map(|j| j.scale(c)).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self, HormanderError> {
        if self.cutoff() != other.cutoff() {
            return Err(HormanderError::CutoffMismatch(self.cutoff(), other.cutoff()));
        }
        Ok(VectorFieldJet {
            layout: self.layout,
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| a.add(b))
                .collect::<Result<_, _>>()?,
        })
    }

    /// Complex conjugate field: swaps holomorphic and antiholomorphic slots
    /// and conjugates coefficients.
    pub fn conjugate(&self) -> Self {
        let lay = self.layout;
        let (l, n) = (lay.l, lay.n);
        let conj = |j: &Jet| {
            Jet::new(lay.conjugate(j.poly()), j.var_weights().to_vec(), j.cutoff())
        };
        let mut coeffs = Vec::with_capacity(self.coeffs.len());
        for h in 0..l {
            coeffs.push(conj(self.dzb(h)));
        }
        for h in 0..l {
            coeffs.push(conj(self.dz(h)));
        }
        for j in 0..n {
            coeffs.push(conj(self.dwb(j)));
        }
        for j in 0..n {
            coeffs.push(conj(self.dw(j)));
        }
        VectorFieldJet { layout: lay, coeffs }
    }

    /// Applies the field to a function of `(x, w, w̄)`. On such functions
    /// `∂_z = ∂_z̄ = ½∂_x`. The result is exact through
    /// `min(cutoff, f.cutoff − 1)`.
    pub fn apply(&self, f: &Jet) -> Result<Jet, HormanderError> {
        let have = f.cutoff();
        let Some(fc) = have.checked_sub(1) else {
            return Err(HormanderError::InsufficientCutoff { needed: 1, have });
        };
        let out_cut = fc.min(self.cutoff());
        let lay = self.layout;
        let mut acc = Jet::zero(f.var_weights().to_vec(), out_cut);
        for h in 0..lay.l {
            let d = f.derivative(lay.x(h)).expect("unit weight").with_cutoff(out_cut);
            if d.is_zero() {
                continue;
            }
            let coef = self
                .dz(h)
                .with_cutoff(out_cut)
                .add(&self.dzb(h).with_cutoff(out_cut))?
                .scale(HALF);
            acc = acc.add(&jet_mul(&coef, &d)?)?;
        }
        for j in 0..lay.n {
            for (var, coef) in [(lay.w(j), self.dw(j)), (lay.cw(j), self.dwb(j))] {
                let d = f.derivative(var).expect("unit weight").with_cutoff(out_cut);
                if d.is_zero() || coef.is_zero() {
                    continue;
                }
                acc = acc.add(&jet_mul(&coef.with_cutoff(out_cut), &d)?)?;
            }
        }
        Ok(acc)
    }

    /// `X(r_i)` for the defining function `r_i = −y_i + h_i` of the model.
    pub fn apply_to_defining(&self, model: &ManifoldModel, i: usize) -> Result<Jet, HormanderError> {
        let c = self.cutoff();
        let h = Jet::new(model.h()[i].as_poly().clone(), unit_weights(self.layout), c + 1);
        let dh = self.apply(&h)?;
        // ∂_z(−y) = −1/(2i), ∂_z̄(−y) = 1/(2i)
        let k = Complex64::new(0.0, 0.5);
        let y_part = self.dz(i).scale(k).add(&self.dzb(i).scale(-k))?;
        Ok(dh.add(&y_part)?)
    }
}

/// `[X, Y]^k = X(Y^k) − Y(X^k)`; the result has cutoff one below the inputs.
pub fn lie_bracket(x: &VectorFieldJet, y: &VectorFieldJet) -> Result<VectorFieldJet, HormanderError> {
    if x.cutoff() != y.cutoff() {
        return Err(HormanderError::CutoffMismatch(x.cutoff(), y.cutoff()));
    }
    if x.cutoff() == 0 {
        return Err(HormanderError::InsufficientCutoff { needed: 1, have: 0 });
    }
    let coeffs = x
        .coeffs
        .iter()
        .zip(&y.coeffs)
        .map(|(xk, yk)| Ok(x.apply(yk)?.sub(&y.apply(xk)?)?))
        .collect::<Result<Vec<_>, HormanderError>>()?;
    Ok(VectorFieldJet {
        layout: x.layout,
        coeffs,
    })
}

/// The (1,0) fields `X_j = Σ_h a_{jh} ∂_{z_h} + ∂_{w_j}` tangent to the model,
/// with `a = −ᵗ(∂_w r)·ᵗ(∂_z r)⁻¹`, exact through degree `cutoff`.
pub fn cr_basis(model: &ManifoldModel, cutoff: u32) -> Result<Vec<VectorFieldJet>, HormanderError> {
    let lay = model.layout();
    let (l, n) = (lay.l, lay.n);
    let vw = unit_weights(lay);
    let nv = lay.nvars();
    // Z_{ih} = ∂_{z_h} r_i = −δ/(2i) + ½ ∂_{x_h} h_i
    let diag = Complex64::new(0.0, 0.5);
    let z: Vec<Vec<Jet>> = (0..l)
        .map(|i| {
            (0..l)
                .map(|h| {
                    let mut p = model.h()[i].as_poly().derivative(lay.x(h)).scale(HALF);
                    if i == h {
                        p.add_term(vec![0; nv], diag);
                    }
                    Jet::new(p, vw.clone(), cutoff)
                })
                .collect()
        })
        .collect();
    let zinv = jet_matrix_inverse(&z)?;
    let mut fields = Vec::with_capacity(n);
    for j in 0..n {
        let wcol: Vec<Jet> = (0..l)
            .map(|i| Jet::new(model.h()[i].as_poly().derivative(lay.w(j)), vw.clone(), cutoff))
            .collect();
        let mut f = VectorFieldJet::zero(lay, cutoff);
        for h in 0..l {
            let mut a = Jet::zero(vw.clone(), cutoff);
            for i in 0..l {
                a = a.add(&jet_mul(&zinv[h][i], &wcol[i])?)?;
            }
            f.coeffs[h] = a.scale(Complex64::new(-1.0, 0.0));
        }
        f.coeffs[2 * l + j] = Jet::constant(Complex64::new(1.0, 0.0), vw.clone(), cutoff);
        fields.push(f);
    }
    Ok(fields)
}

/// Dimensions of `L^j` at the origin and the Hörmander numbers read off them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FiltrationReport {
    /// `dim L^j` for `j = 1..=cap`.
    pub dims: Vec<usize>,
    /// `(m_i, l_i)`: bracket length of each jump and its size.
    pub hormander_numbers: Vec<(u32, usize)>,
    pub finite_type: bool,
    pub cap: usize,
    pub label: String,
}

/// Complex Gram–Schmidt over flattened coefficient vectors; keeps the
/// fields that add a new direction, in order.
fn independent_fields(fields: Vec<VectorFieldJet>) -> Vec<VectorFieldJet> {
    use std::collections::HashMap;
    let mut index: HashMap<(usize, Vec<u16>), usize> = HashMap::new();
    let mut flat: Vec<Vec<(usize, Complex64)>> = Vec::with_capacity(fields.len());
    for f in &fields {
        let mut v = Vec::new();
        for (k, c) in f.coeffs.iter().enumerate() {
            for (e, val) in c.poly().terms() {
                let next = index.len();
                let col = *index.entry((k, e.clone())).or_insert(next);
                v.push((col, *val));
            }
        }
        flat.push(v);
    }
    let dim = index.len();
    let mut basis: Vec<Vec<Complex64>> = Vec::new();
    let mut kept = Vec::new();
    for (f, sparse) in fields.into_iter().zip(flat) {
        let mut v = vec![Complex64::default(); dim];
        for (c, val) in sparse {
            v[c] += val;
        }
        let norm0: f64 = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if norm0 == 0.0 {
            continue;
        }
        for _ in 0..2 {
            for q in &basis {
                let dot: Complex64 = q.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= dot * qi;
                }
            }
        }
        let norm: f64 = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if norm > RANK_TOL * norm0 {
            for vi in v.iter_mut() {
                *vi /= norm;
            }
            basis.push(v);
            kept.push(f);
        }
    }
    kept
}

/// Generators of `L^1`: `X_1..X_n, X̄_1..X̄_n`.
pub fn cr_generators(model: &ManifoldModel, cutoff: u32) -> Result<Vec<VectorFieldJet>, HormanderError> {
    let xs = cr_basis(model, cutoff)?;
    let conj: Vec<_> = xs.iter().map(VectorFieldJet::conjugate).collect();
    Ok(xs.into_iter().chain(conj).collect())
}

/// Bracket filtration up to length `cap` with the default cutoff `cap + 1`.
pub fn filtration(model: &ManifoldModel, cap: usize) -> Result<FiltrationReport, HormanderError> {
    filtration_with_cutoff(model, cap, cap as u32 + 1)
}

/// Bracket filtration with an explicit jet cutoff. Brackets of length `j`
/// need the generators exact through degree `j − 1`, so `cutoff ≥ cap − 1`.
pub fn filtration_with_cutoff(
    model: &ManifoldModel,
    cap: usize,
    cutoff: u32,
) -> Result<FiltrationReport, HormanderError> {
    if cap < 2 {
        return Err(HormanderError::BadCap);
    }
    let needed = cap as u32 - 1;
    if cutoff < needed {
        return Err(HormanderError::InsufficientCutoff { needed, have: cutoff });
    }
    let full = 2 * model.n() + model.l();
    // Only degree ≤ cap − j of a level-j field can reach the origin.
    let gens: Vec<VectorFieldJet> = cr_generators(model, cutoff)?
        .iter()
        .map(|f| f.with_cutoff(needed))
        .collect();
    let mut values: Vec<Vec<Complex64>> = gens.iter().map(VectorFieldJet::value_at_origin).collect();
    let mut dims = vec![rank_of(&values)];
    let mut level = independent_fields(gens.clone());
    for _ in 2..=cap {
        if dims.last() == Some(&full) || level.is_empty() {
            dims.push(*dims.last().unwrap());
            continue;
        }
        let pairs: Vec<(usize, usize)> = (0..gens.len())
            .flat_map(|a| (0..level.len()).map(move |b| (a, b)))
            .collect();
        let next: Vec<VectorFieldJet> = pairs
            .par_iter()
            .map(|&(a, b)| lie_bracket(&gens[a].with_cutoff(level[b].cutoff()), &level[b]))
            .collect::<Result<Vec<_>, _>>()?
            .into_iter()
            .filter(|f| !f.is_zero())
            .collect();
        values.extend(next.iter().map(VectorFieldJet::value_at_origin));
        dims.push(rank_of(&values));
        level = independent_fields(next);
    }
    let mut numbers = Vec::new();
    for j in 1..dims.len() {
        if dims[j] > dims[j - 1] {
            numbers.push((j as u32 + 1, dims[j] - dims[j - 1]));
        }
    }
    let finite_type = dims.last() == Some(&full);
    let label = if finite_type {
        "finite type".to_string()
    } else {
        format!("type > {cap}")
    };
    Ok(FiltrationReport {
        dims,
        hormander_numbers: numbers,
        finite_type,
        cap,
        label,
    })
}

fn rank_of(values: &[Vec<Complex64>]) -> usize {
    let idx: Vec<usize> = (0..values.len()).collect();
    linalg::complex_rank(&linalg::stack(values, &idx), RANK_TOL)
}

/// `[F_1, [F_2, …, [F_{k−1}, F_k]…]]` for the fields chosen by `word`
/// (`true` → `X_o`, `false` → `X̄_o`).
pub fn nested_bracket(
    word: &[bool],
    xo: &VectorFieldJet,
    xo_bar: &VectorFieldJet,
) -> Result<VectorFieldJet, HormanderError> {
    if word.len() < 2 {
        return Err(HormanderError::WordTooShort);
    }
    let pick = |e: bool| if e { xo } else { xo_bar };
    let mut acc = pick(word[word.len() - 1]).clone();
    for &e in word[..word.len() - 1].iter().rev() {
        let f = pick(e).with_cutoff(acc.cutoff());
        acc = lie_bracket(&f, &acc)?;
    }
    Ok(acc)
}

/// `X_o = Σ_j base_j X_j`.
pub fn base_field(
    model: &ManifoldModel,
    base: &[Complex64],
    cutoff: u32,
) -> Result<VectorFieldJet, HormanderError> {
    if base.len() != model.n() {
        return Err(HormanderError::BadBase(model.n()));
    }
    let xs = cr_basis(model, cutoff)?;
    let mut acc = VectorFieldJet::zero(model.layout(), cutoff);
    for (x, &b) in xs.iter().zip(base) {
        acc = acc.add(&x.scale(b))?;
    }
    Ok(acc)
}

/// `(1/(2i))·(J B)(r_j)(0)` for every component `j` of `block`, where `B`
/// is the nested bracket of `word` over `X_o = Σ base_j X_j`.
///
/// Since `J∂_z = i∂_z`, `J∂_z̄ = −i∂_z̄` and `∂h(0) = 0`, this equals
/// `i(B^{z_j}(0) + B^{z̄_j}(0))/4`.
pub fn bracket_pairing(
    model: &ManifoldModel,
    word: &[bool],
    base: &[Complex64],
    block: usize,
    cutoff: u32,
) -> Result<Vec<Complex64>, HormanderError> {
    if word.len() + 2 > cutoff as usize {
        return Err(HormanderError::WordTooLong {
            len: word.len(),
            cutoff,
        });
    }
    let xo = base_field(model, base, cutoff)?;
    let xb = xo.conjugate();
    let b = nested_bracket(word, &xo, &xb)?;
    let quarter_i = Complex64::new(0.0, 0.25);
    Ok(model
        .weights()
        .block_range(block)
        .map(|j| quarter_i * (b.dz(j).constant_term() + b.dzb(j).constant_term()))
        .collect())
}

/// Largest modulus of the pairings of words of length `m_i` (inner pair
/// `X_o, X̄_o`) against `r_{I_j}` for all blocks `j > i`.
pub fn higher_block_pairing_max(
    model: &ManifoldModel,
    block: usize,
    base: &[Complex64],
) -> Result<f64, HormanderError> {
    let Some(mi) = model.weights().weights()[block].finite() else {
        return Err(HormanderError::InfiniteOrder);
    };
    let k = mi as usize;
    let cutoff = k as u32 + 2;
    let xo = base_field(model, base, cutoff)?;
    let xb = xo.conjugate();
    let mut worst: f64 = 0.0;
    for word in words_with_inner_pair(k) {
        let b = nested_bracket(&word, &xo, &xb)?;
        for jb in block + 1..model.weights().num_blocks() {
            for j in model.weights().block_range(jb) {
                let v = Complex64::new(0.0, 0.25) * (b.dz(j).constant_term() + b.dzb(j).constant_term());
                worst = worst.max(v.norm());
            }
        }
    }
    Ok(worst)
}

/// All words of length `k` ending in `(X_o, X̄_o)`.
pub fn words_with_inner_pair(k: usize) -> Vec<Vec<bool>> {
    assert!(k >= 2);
    (0..1usize << (k - 2))
        .map(|mask| {
            let mut w: Vec<bool> = (0..k - 2).map(|b| mask >> b & 1 == 1).collect();
            w.push(true);
            w.push(false);
            w
        })
        .collect()
}

fn binom(n: u64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn factorial(n: u64) -> f64 {
    (1..=n).fold(1.0, |acc, i| acc * i as f64)
}

fn check_first_number(line: &LineRestriction, k: u32) -> Result<(), HormanderError> {
    let m1 = line.weights().weights()[0];
    match m1 {
        Weight::Infinite => Err(HormanderError::InfiniteOrder),
        Weight::Finite(m) if m == k => Ok(()),
        _ => Err(HormanderError::NotFirstNumber { k, m1 }),
    }
}

/// Closed-form direction
/// `v_j = Re Σ_{m+n=k} C(k−2, m−1) · coeff_j(w^m w̄^n) · e^{i(m−n)φ}`
/// for the line's components.
pub fn bp_direction(line: &LineRestriction, k: u32, phi: f64) -> Result<Vec<f64>, HormanderError> {
    check_first_number(line, k)?;
    let lay = line.model.layout();
    let mut out = Vec::with_capacity(lay.l);
    for h in line.h() {
        let mut total = Complex64::default();
        for m in 1..k {
            let n = k - m;
            let mut e = vec![0u16; lay.nvars()];
            e[lay.w(0)] = m as u16;
            e[lay.cw(0)] = n as u16;
            let c = h.as_poly().coeff(&e);
            let phase = Complex64::from_polar(1.0, (m as f64 - n as f64) * phi);
            total += c * phase * binom(k as u64 - 2, m as u64 - 1);
        }
        out.push(total.re);
    }
    Ok(out)
}

/// The same direction as a weighted sum of bracket pairings: over all
/// outer words `ε` of length `k − 2`, `Σ_ε pairing(ε, X_o, X̄_o) / (ε₊! ε₋!)`,
/// where `ε₊`, `ε₋` count `X_o` and `X̄_o` over all `k` positions and
/// `X_o = e^{iφ} X_1`.
pub fn bp_direction_from_brackets(
    line: &LineRestriction,
    k: u32,
    phi: f64,
) -> Result<Vec<f64>, HormanderError> {
    check_first_number(line, k)?;
    let model = &line.model;
    let cutoff = k + 2;
    let base = [Complex64::from_polar(1.0, phi)];
    let xo = base_field(model, &base, cutoff)?;
    let xb = xo.conjugate();
    let words = words_with_inner_pair(k as usize);
    let terms: Vec<Vec<Complex64>> = words
        .par_iter()
        .map(|word| {
            let b = nested_bracket(word, &xo, &xb)?;
            let plus = word.iter().filter(|&&e| e).count() as u64;
            let minus = word.len() as u64 - plus;
            let weight = 1.0 / (factorial(plus) * factorial(minus));
            Ok((0..model.l())
                .map(|j| {
                    Complex64::new(0.0, 0.25)
                        * (b.dz(j).constant_term() + b.dzb(j).constant_term())
                        * weight
                })
                .collect())
        })
        .collect::<Result<Vec<_>, HormanderError>>()?;
    let mut total = vec![Complex64::default(); model.l()];
    for t in terms {
        for (acc, v) in total.iter_mut().zip(t) {
            *acc += v;
        }
    }
    Ok(total.into_iter().map(|c| c.re).collect())
}
