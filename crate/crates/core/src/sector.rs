//! Sign analysis of polynomials restricted to the unit circle of one
//! w-direction.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::manifold::{ManifoldError, ManifoldModel};
use crate::polyalg::{RealPoly, Weight};

const TWO_PI: f64 = 2.0 * PI;
const SAMPLES: usize = 8192;
const ANGLE_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SectorError {
    #[error("trigonometric polynomial vanishes identically")]
    ZeroPolynomial,
    #[error("restriction involves variables other than w{0}")]
    ForeignVariables(usize),
    #[error("covector must have {expected} entries and vanish below block {block}")]
    BadCovector { expected: usize, block: usize },
    #[error("block {0} has infinite weight")]
    InfiniteWeight(usize),
    #[error("direction index {0} out of range")]
    BadDirection(usize),
    #[error("invalid (k, p) = ({k}, {p}): need k ≥ 4 even, p even, 2 ≤ p ≤ k − 2")]
    InvalidParameters { k: u32, p: u32 },
    #[error("p = {p} does not divide k = {k}")]
    NotDivisible { k: u32, p: u32 },
    #[error("a = {a} exceeds 1/cos(pπ/2k) = {limit}")]
    AboveThreshold { a: f64, limit: f64 },
    #[error("barrier minimum {0:e} is negative")]
    NegativeBarrier(f64),
    #[error("constraint constant c = {0} must be positive")]
    EmptyBox(f64),
    #[error(transparent)]
    Manifold(#[from] ManifoldError),
}

/// `g(θ) = Σ_d cos[d]·cos dθ + sin[d]·sin dθ`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrigPoly {
    pub cos: Vec<f64>,
    pub sin: Vec<f64>,
}

impl TrigPoly {
    pub fn new(mut cos: Vec<f64>, mut sin: Vec<f64>) -> Self {
        let d = cos.len().max(sin.len()).max(1);
        cos.resize(d, 0.0);
        sin.resize(d, 0.0);
        sin[0] = 0.0;
        TrigPoly { cos, sin }
    }

    pub fn constant(c: f64) -> Self {
        TrigPoly::new(vec![c], vec![])
    }

    /// `1 + a cos(pθ)`.
    pub fn one_plus_cos(a: f64, p: usize) -> Self {
        let mut cos = vec![0.0; p + 1];
        cos[0] = 1.0;
        cos[p] += a;
        TrigPoly::new(cos, vec![])
    }

    pub fn degree(&self) -> usize {
        (0..self.cos.len())
            .rev()
            .find(|&d| self.cos[d] != 0.0 || self.sin[d] != 0.0)
            .unwrap_or(0)
    }

    pub fn l1_norm(&self) -> f64 {
        self.cos.iter().chain(&self.sin).map(|c| c.abs()).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.l1_norm() == 0.0
    }

    pub fn eval(&self, theta: f64) -> f64 {
        self.cos
            .iter()
            .zip(&self.sin)
            .enumerate()
            .map(|(d, (a, b))| {
                let t = d as f64 * theta;
                a * t.cos() + b * t.sin()
            })
            .sum()
    }

    pub fn derivative(&self) -> TrigPoly {
        let cos = (0..self.cos.len()).map(|d| d as f64 * self.sin[d]).collect();
        let sin = (0..self.cos.len()).map(|d| -(d as f64) * self.cos[d]).collect();
        TrigPoly::new(cos, sin)
    }

    pub fn scale(&self, s: f64) -> TrigPoly {
        TrigPoly::new(
            self.cos.iter().map(|c| c * s).collect(),
            self.sin.iter().map(|c| c * s).collect(),
        )
    }

    pub fn add(&self, other: &TrigPoly) -> TrigPoly {
        let d = self.cos.len().max(other.cos.len());
        let get = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
        TrigPoly::new(
            (0..d).map(|i| get(&self.cos, i) + get(&other.cos, i)).collect(),
            (0..d).map(|i| get(&self.sin, i) + get(&other.sin, i)).collect(),
        )
    }

    /// Global minimum and a minimiser, from sampled values and the roots
    /// of `g'`.
    pub fn global_min(&self) -> (f64, f64) {
        let dg = self.derivative();
        let mut best = (f64::INFINITY, 0.0);
        let mut consider = |t: f64| {
            let v = self.eval(t);
            if v < best.0 {
                best = (v, t.rem_euclid(TWO_PI));
            }
        };
        let step = TWO_PI / SAMPLES as f64;
        let mut prev = dg.eval(0.0);
        for i in 0..SAMPLES {
            let a = i as f64 * step;
            let b = a + step;
            consider(a);
            let next = dg.eval(b);
            if prev == 0.0 {
                consider(a);
            } else if prev.signum() != next.signum() {
                consider(bisect(|t| dg.eval(t) > 0.0, a, b, prev > 0.0));
            }
            prev = next;
        }
        best
    }

    /// `θ, g` samples as CSV.
    pub fn samples_csv(&self, n: usize) -> String {
        let mut s = String::from("# theta,g\ntheta,g\n");
        for i in 0..n {
            let t = TWO_PI * i as f64 / n as f64;
            s.push_str(&format!("{:.17e},{:.17e}\n", t, self.eval(t)));
        }
        s
    }
}

/// An arc of the circle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Sector {
    pub center: f64,
    pub width: f64,
}

impl Sector {
    pub fn full() -> Self {
        Sector {
            center: 0.0,
            width: TWO_PI,
        }
    }

    pub fn start(&self) -> f64 {
        (self.center - self.width / 2.0).rem_euclid(TWO_PI)
    }
}

/// Returns the boundary point between `a` and `b`; `at_a` is `pred(a)`.
fn bisect<F: Fn(f64) -> bool>(pred: F, mut a: f64, mut b: f64, at_a: bool) -> f64 {
    while b - a > ANGLE_TOL {
        let m = 0.5 * (a + b);
        if pred(m) == at_a {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Maximal arcs on which `pred` holds, found on `samples` points and
/// refined by bisection.
pub fn arcs_where<F: Fn(f64) -> bool>(pred: F, samples: usize) -> Vec<Sector> {
    let step = TWO_PI / samples as f64;
    let flags: Vec<bool> = (0..samples).map(|i| pred(i as f64 * step)).collect();
    if flags.iter().all(|f| *f) {
        return vec![Sector::full()];
    }
    let Some(first_false) = flags.iter().position(|f| !f) else {
        return vec![];
    };
    let mut out = Vec::new();
    let mut i = first_false;
    let end = first_false + samples;
    while i < end {
        if flags[i % samples] {
            i += 1;
            continue;
        }
        // i is false; look for a run of trues starting at i + 1
        let start = i + 1;
        if start >= end || !flags[start % samples] {
            i += 1;
            continue;
        }
        let mut stop = start;
        while flags[(stop + 1) % samples] {
            stop += 1;
        }
        let left = bisect(&pred, (start - 1) as f64 * step, start as f64 * step, false);
        let right = bisect(&pred, stop as f64 * step, (stop + 1) as f64 * step, true);
        let width = right - left;
        out.push(Sector {
            center: (left + width / 2.0).rem_euclid(TWO_PI),
            width,
        });
        i = stop + 1;
    }
    out.sort_by(|a, b| a.center.total_cmp(&b.center));
    out
}

fn zero_tol(g: &TrigPoly) -> f64 {
    1e-13 * g.l1_norm()
}

/// Maximal arcs where `g > 0` (`strict`) or `g ≥ 0`.
pub fn positive_sectors(g: &TrigPoly, strict: bool) -> Result<Vec<Sector>, SectorError> {
    if g.is_zero() {
        return Err(SectorError::ZeroPolynomial);
    }
    let zt = zero_tol(g);
    Ok(if strict {
        arcs_where(|t| g.eval(t) > zt, SAMPLES)
    } else {
        arcs_where(|t| g.eval(t) >= -zt, SAMPLES)
    })
}

pub fn negative_sectors(g: &TrigPoly, strict: bool) -> Result<Vec<Sector>, SectorError> {
    positive_sectors(&g.scale(-1.0), strict)
}

pub fn widest(sectors: &[Sector]) -> Option<Sector> {
    sectors.iter().copied().max_by(|a, b| a.width.total_cmp(&b.width))
}

/// `⟨ξ, P(e^{iθ})⟩` for polynomials in `w_k, w̄_k` only.
pub fn circle_restriction(polys: &[RealPoly], xi: &[f64], k: usize) -> Result<TrigPoly, SectorError> {
    assert_eq!(polys.len(), xi.len(), "covector length");
    let mut freq: BTreeMap<i64, Complex64> = BTreeMap::new();
    for (p, &s) in polys.iter().zip(xi) {
        let lay = p.layout();
        if k >= lay.n {
            return Err(SectorError::BadDirection(k));
        }
        for (e, c) in p.as_poly().terms() {
            let foreign = e
                .iter()
                .enumerate()
                .any(|(i, &x)| x != 0 && i != lay.w(k) && i != lay.cw(k));
            if foreign {
                return Err(SectorError::ForeignVariables(k));
            }
            let d = e[lay.w(k)] as i64 - e[lay.cw(k)] as i64;
            *freq.entry(d).or_default() += c * s;
        }
    }
    let deg = freq.keys().map(|d| d.unsigned_abs() as usize).max().unwrap_or(0);
    let mut cos = vec![0.0; deg + 1];
    let mut sin = vec![0.0; deg + 1];
    let get = |d: i64| freq.get(&d).copied().unwrap_or_default();
    cos[0] = get(0).re;
    for d in 1..=deg as i64 {
        let (cp, cm) = (get(d), get(-d));
        cos[d as usize] = (cp + cm).re;
        sin[d as usize] = (cm - cp).im;
    }
    Ok(TrigPoly::new(cos, sin))
}

#[derive(Clone, Debug, PartialEq)]
pub enum SectorMode {
    /// `⟨ξ, P_{I_j}⟩ ≥ 0` for the leading part on the line.
    Leading,
    /// `⟨ξ, h⟩ > 0` over `|x_{I_i}| < c|w|^{m_i}` on the radius ladder
    /// `|w| = 2^{−s}`, `s = 0..=20`.
    Full { c: f64 },
}

#[derive(Clone, Debug, Serialize)]
pub struct SectorVerdict {
    pub holds: bool,
    pub best_sector: Option<Sector>,
    pub required_width: f64,
    pub order: u32,
    pub sectors: Vec<Sector>,
}

/// Tests the sector property for block `block` along `w_direction`.
/// `required_width` defaults to `π/m_j`.
pub fn sector_condition(
    model: &ManifoldModel,
    direction: usize,
    block: usize,
    xi: &[f64],
    mode: &SectorMode,
    required_width: Option<f64>,
) -> Result<SectorVerdict, SectorError> {
    let weights = model.weights();
    if direction >= model.n() {
        return Err(SectorError::BadDirection(direction));
    }
    let m = weights.weights()[block]
        .finite()
        .ok_or(SectorError::InfiniteWeight(block))?;
    let range = weights.block_range(block);
    if xi.len() != model.l() || xi[..range.start].iter().any(|v| *v != 0.0) || xi.iter().all(|v| *v == 0.0) {
        return Err(SectorError::BadCovector {
            expected: model.l(),
            block,
        });
    }
    let required = required_width.unwrap_or(PI / m as f64);
    let sectors = match mode {
        SectorMode::Leading => {
            let lay = model.layout();
            let on_line: Vec<RealPoly> = model
                .lowest_weight_part(block)?
                .iter()
                .map(|p| {
                    p.filter(|e| {
                        (0..model.n()).all(|j| j == direction || (e[lay.w(j)] == 0 && e[lay.cw(j)] == 0))
                    })
                })
                .collect();
            let g = circle_restriction(&on_line, &xi[range.clone()], direction)?;
            positive_sectors(&g, false)?
        }
        SectorMode::Full { c } => {
            if *c <= 0.0 {
                return Err(SectorError::EmptyBox(*c));
            }
            let bound = BoxBound::new(model, direction, xi, *c);
            arcs_where(|t| (0..=20).all(|s| bound.lower(0.5f64.powi(s), t, m) > 1e-12), 2048)
        }
    };
    let best = widest(&sectors);
    Ok(SectorVerdict {
        holds: best.is_some_and(|s| s.width > required),
        best_sector: best,
        required_width: required,
        order: m,
        sectors,
    })
}

/// `w`-part terms `(m, n, coefficient)` of `w^m w̄^n`.
type WTerms = Vec<(i32, i32, Complex64)>;

/// Interval lower bound of `⟨ξ, h(x, ρe^{iθ}e_k)⟩` over the box
/// `|x_{I_i}| ≤ c ρ^{m_i}`.
struct BoxBound {
    /// `(x exponents, w-part terms)`
    groups: Vec<(Vec<u16>, WTerms)>,
    x_weight: Vec<Weight>,
    c: f64,
}

impl BoxBound {
    fn new(model: &ManifoldModel, k: usize, xi: &[f64], c: f64) -> Self {
        let lay = model.layout();
        let mut map: BTreeMap<Vec<u16>, Vec<(i32, i32, Complex64)>> = BTreeMap::new();
        for (p, &s) in model.h().iter().zip(xi) {
            if s == 0.0 {
                continue;
            }
            for (e, coef) in p.as_poly().terms() {
                let other_w = (0..model.n()).any(|j| j != k && (e[lay.w(j)] != 0 || e[lay.cw(j)] != 0));
                if other_w {
                    continue;
                }
                let xe: Vec<u16> = (0..model.l()).map(|h| e[lay.x(h)]).collect();
                map.entry(xe)
                    .or_default()
                    .push((e[lay.w(k)] as i32, e[lay.cw(k)] as i32, coef * s));
            }
        }
        BoxBound {
            groups: map.into_iter().collect(),
            x_weight: (0..model.l()).map(|h| model.weights().weight_of_x(h)).collect(),
            c,
        }
    }

    fn lower(&self, rho: f64, theta: f64, m: u32) -> f64 {
        let mut total = 0.0;
        for (xe, terms) in &self.groups {
            let q: f64 = terms
                .iter()
                .map(|(a, b, coef)| (coef * Complex64::from_polar(rho.powi(a + b), (a - b) as f64 * theta)).re)
                .sum();
            if xe.iter().all(|&e| e == 0) {
                total += q;
                continue;
            }
            let mut size = 1.0;
            let mut odd = false;
            for (h, &e) in xe.iter().enumerate() {
                if e == 0 {
                    continue;
                }
                let r = match self.x_weight[h] {
                    Weight::Finite(mi) => self.c * rho.powi(mi as i32),
                    Weight::Infinite => 0.0,
                };
                size *= r.powi(e as i32);
                odd |= e % 2 == 1;
            }
            total += if odd { -q.abs() * size } else { q.min(0.0) * size };
        }
        total / rho.powi(m as i32)
    }
}

/// The two coefficient thresholds for `y = |w|^k + a|w|^{k−p} Re w^p`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Thresholds {
    pub k: u32,
    pub p: u32,
    pub q: u32,
    /// `(p+q)! q! / ((k/2−1)! (k−1−k/2)!)`
    pub bp_coef: f64,
    /// `1 / cos(pπ/2k)`
    pub sector_coef: f64,
    /// `bp_coef > sector_coef`
    pub ordered: bool,
}

fn factorial(n: u32) -> f64 {
    (1..=n).fold(1.0, |acc, i| acc * i as f64)
}

fn check_kp(k: u32, p: u32) -> Result<(), SectorError> {
    if k < 4 || k % 2 == 1 || p % 2 == 1 || p < 2 || p + 2 > k {
        return Err(SectorError::InvalidParameters { k, p });
    }
    Ok(())
}

pub fn thresholds(k: u32, p: u32) -> Result<Thresholds, SectorError> {
    check_kp(k, p)?;
    let q = (k - 2 - p) / 2;
    let bp_coef = factorial(p + q) * factorial(q) / (factorial(k / 2 - 1) * factorial(k - 1 - k / 2));
    let sector_coef = 1.0 / (p as f64 * PI / (2.0 * k as f64)).cos();
    Ok(Thresholds {
        k,
        p,
        q,
        bp_coef,
        sector_coef,
        ordered: bp_coef > sector_coef,
    })
}

/// Width of the widest arc where `1 + a cos(pθ) < 0`.
pub fn negative_width(p: u32, a: f64) -> f64 {
    let g = TrigPoly::one_plus_cos(a, p as usize);
    negative_sectors(&g, true)
        .ok()
        .and_then(|s| widest(&s))
        .map_or(0.0, |s| s.width)
}

#[derive(Clone, Debug, Serialize)]
pub struct Barrier {
    pub b: f64,
    pub g1: TrigPoly,
    pub min_value: f64,
    pub argmin: f64,
}

/// `g₁ = 1 − a cos(pθ) + b cos(kθ)` with `b = (p/k) tan(pπ/2k)`, checked to
/// be nonnegative.
pub fn barrier_construct(k: u32, p: u32, a: f64) -> Result<Barrier, SectorError> {
    check_kp(k, p)?;
    if !k.is_multiple_of(p) {
        return Err(SectorError::NotDivisible { k, p });
    }
    let angle = p as f64 * PI / (2.0 * k as f64);
    let limit = 1.0 / angle.cos();
    if a > limit * (1.0 + 1e-12) {
        return Err(SectorError::AboveThreshold { a, limit });
    }
    let b = p as f64 / k as f64 * angle.tan();
    let mut cos = vec![0.0; k as usize + 1];
    cos[0] = 1.0;
    cos[p as usize] -= a;
    cos[k as usize] += b;
    let g1 = TrigPoly::new(cos, vec![]);
    let (min_value, argmin) = g1.global_min();
    if min_value < -1e-10 {
        return Err(SectorError::NegativeBarrier(min_value));
    }
    Ok(Barrier {
        b,
        g1,
        min_value,
        argmin,
    })
}

/// Sector table as CSV: `center, width, sign`.
pub fn sectors_csv(positive: &[Sector], negative: &[Sector]) -> String {
    let mut s = String::from("# sectors\ncenter,width,sign\n");
    for (list, sign) in [(positive, 1), (negative, -1)] {
        for sec in list {
            s.push_str(&format!("{:.17e},{:.17e},{}\n", sec.center, sec.width, sign));
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::parse::parse_poly;
    use crate::polyalg::Layout;

    fn real(src: &str) -> RealPoly {
        let lay = Layout::new(1, 1);
        RealPoly::new(lay, parse_poly(src, lay).unwrap()).unwrap()
    }

    #[test]
    fn restrictions() {
        let g = circle_restriction(&[real("abs2(w1)")], &[1.0], 0).unwrap();
        assert_eq!(g, TrigPoly::constant(1.0));
        let g = circle_restriction(&[real("abs2(w1)^2 + 3*abs2(w1)*Re(w1^2)")], &[1.0], 0).unwrap();
        assert!((g.cos[0] - 1.0).abs() < 1e-15 && (g.cos[2] - 3.0).abs() < 1e-15);
        let g = circle_restriction(&[real("Re(w1^2)")], &[1.0], 0).unwrap();
        assert_eq!(g.cos, vec![0.0, 0.0, 1.0]);
        assert!(circle_restriction(&[real("x1*abs2(w1)")], &[1.0], 0).is_err());
        let g = circle_restriction(&[real("Im(w1)")], &[1.0], 0).unwrap();
        assert!((g.eval(0.3) - 0.3f64.sin()).abs() < 1e-15);
    }

    #[test]
    fn sector_examples() {
        let s = positive_sectors(&TrigPoly::new(vec![0.0, 1.0], vec![]), true).unwrap();
        assert_eq!(s.len(), 1);
        assert!(s[0].center.min(TWO_PI - s[0].center) < 1e-11);
        assert!((s[0].width - PI).abs() < 1e-11);

        let s = positive_sectors(&TrigPoly::one_plus_cos(2.0, 2), true).unwrap();
        assert_eq!(s.len(), 2);
        for sec in &s {
            assert!((sec.width - 2.0 * PI / 3.0).abs() < 1e-11);
        }
        assert!((s[1].center - PI).abs() < 1e-11);

        assert_eq!(positive_sectors(&TrigPoly::constant(1.0), true).unwrap(), vec![Sector::full()]);
        assert_eq!(
            positive_sectors(&TrigPoly::constant(0.0), true).unwrap_err(),
            SectorError::ZeroPolynomial
        );
    }

    #[test]
    fn threshold_values() {
        let t = thresholds(4, 2).unwrap();
        assert_eq!(t.bp_coef, 2.0);
        assert!((t.sector_coef - 2f64.sqrt()).abs() < 1e-15);
        let t = thresholds(6, 2).unwrap();
        assert_eq!(t.bp_coef, 1.5);
        assert!((t.sector_coef - 2.0 / 3f64.sqrt()).abs() < 1e-15);
        let t = thresholds(6, 4).unwrap();
        assert_eq!(t.bp_coef, 6.0);
        assert!((t.sector_coef - 2.0).abs() < 1e-12);
        assert!(thresholds(6, 3).is_err());
        assert!(thresholds(4, 4).is_err());
    }

    #[test]
    fn barrier_examples() {
        let b = barrier_construct(4, 2, 2f64.sqrt()).unwrap();
        assert!((b.b - 0.5).abs() < 1e-15);
        assert!(b.min_value >= -1e-10);
        let b = barrier_construct(4, 2, 0.0).unwrap();
        assert!((b.min_value - 0.5).abs() < 1e-12);
        assert_eq!(barrier_construct(6, 4, 1.0).unwrap_err(), SectorError::NotDivisible { k: 6, p: 4 });
        assert!(matches!(barrier_construct(4, 2, 1.5), Err(SectorError::AboveThreshold { .. })));
    }

    #[test]
    fn example_model_sectors() {
        let src = |a: f64| {
            format!("l = 2\nn = 1\nblocks = [2]\nweights = [4]\nh = [\"abs2(w1)^2 + {a}*abs2(w1)*Re(w1^2)\", \"abs2(w1)^2\"]\n")
        };
        let m3 = ManifoldModel::parse_and_validate(&src(3.0)).unwrap();
        let m1 = ManifoldModel::parse_and_validate(&src(1.0)).unwrap();
        let v = sector_condition(&m3, 0, 0, &[0.0, 1.0], &SectorMode::Leading, None).unwrap();
        assert!(v.holds);
        assert_eq!(v.best_sector.unwrap().width, TWO_PI);
        assert!(sector_condition(&m3, 0, 0, &[-1.0, 0.0], &SectorMode::Leading, None).unwrap().holds);
        assert!(!sector_condition(&m1, 0, 0, &[-1.0, 0.0], &SectorMode::Leading, None).unwrap().holds);
        let full = sector_condition(&m3, 0, 0, &[-1.0, 0.0], &SectorMode::Full { c: 0.5 }, None).unwrap();
        assert!(full.holds);
    }

    #[test]
    fn x_terms_spoil_full_mode() {
        let src = "l = 2\nn = 2\nblocks = [1, 1]\nweights = [2, 4]\nh = [\"abs2(w1) + abs2(w2)\", \"abs2(w2)^2 + x1*abs2(w1)\"]\n";
        let m = ManifoldModel::parse_and_validate(src).unwrap();
        assert!(sector_condition(&m, 1, 1, &[0.0, 1.0], &SectorMode::Leading, None).unwrap().holds);
        assert!(matches!(
            sector_condition(&m, 0, 1, &[0.0, 1.0], &SectorMode::Leading, None),
            Err(SectorError::ForeignVariables(0))
        ));
        let v = sector_condition(&m, 0, 1, &[0.0, 1.0], &SectorMode::Full { c: 0.5 }, None).unwrap();
        assert!(!v.holds);
    }
}
