//! Shared fixtures and independent oracles for the integration tests.
#![allow(dead_code)]

use crext_core::manifold::ManifoldModel;
use crext_core::polyalg::{Layout, Poly};
use nalgebra::DMatrix;
use num_complex::Complex64;

pub const LEVI: &str = "l = 1\nn = 1\nblocks = [1]\nweights = [2]\nh = [\"abs2(w1)\"]\n";
pub const MAIN: &str = "l = 2\nn = 2\nblocks = [1, 1]\nweights = [2, 4]\nh = [\"abs2(w1) + abs2(w2)\", \"abs2(w2)^2 + x1*abs2(w1)\"]\n";
pub const FLAT: &str = "l = 1\nn = 1\nblocks = [1]\nweights = [\"inf\"]\nh = [\"0\"]\n";

pub fn example(a: f64) -> String {
    format!(
        "l = 2\nn = 1\nblocks = [2]\nweights = [4]\nh = [\"abs2(w1)^2 + {a}*abs2(w1)*Re(w1^2)\", \"abs2(w1)^2\"]\n"
    )
}

pub fn vi(a: f64) -> String {
    format!("l = 1\nn = 1\nblocks = [1]\nweights = [4]\nh = [\"abs2(w1)^2 + {a}*abs2(w1)*Re(w1^2)\"]\n")
}

pub fn model(src: &str) -> ManifoldModel {
    ManifoldModel::parse_and_validate(src).expect("fixture parses")
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn truncate(p: &Poly, deg: u32) -> Poly {
    p.filter(|e| e.iter().map(|&k| k as u32).sum::<u32>() <= deg)
}

fn mul(a: &Poly, b: &Poly, deg: u32) -> Poly {
    a.mul_filtered(b, |e| e.iter().map(|&k| k as u32).sum::<u32>() <= deg)
}

/// Tangent vector field on the model in its intrinsic coordinates
/// `(x, w, w̄)`: one coefficient per coordinate.
#[derive(Clone)]
struct Field(Vec<Poly>);

impl Field {
    fn apply(&self, f: &Poly, deg: u32) -> Poly {
        let mut out = Poly::zero(f.nvars());
        for (v, cv) in self.0.iter().enumerate() {
            if cv.is_zero() {
                continue;
            }
            out = out.add(&mul(cv, &f.derivative(v), deg));
        }
        out
    }

    fn bracket(&self, other: &Field, deg: u32) -> Field {
        Field(
            (0..self.0.len())
                .map(|v| self.apply(&other.0[v], deg).sub(&other.apply(&self.0[v], deg)))
                .collect(),
        )
    }

    fn at_origin(&self) -> Vec<Complex64> {
        self.0.iter().map(Poly::constant_term).collect()
    }
}

/// `L_j = ∂_{w_j} + Σ a_h ∂_{x_h}` annihilating `x − i h`, so
/// `(I − i ∂_x h) a = i ∂_{w_j} h`, solved by a Neumann series.
fn cr_fields(m: &ManifoldModel, deg: u32) -> Vec<Field> {
    let lay: Layout = m.layout();
    let nv = lay.nvars();
    let l = lay.l;
    let hx: Vec<Vec<Poly>> = m
        .h()
        .iter()
        .map(|h| (0..l).map(|g| h.as_poly().derivative(lay.x(g)).scale(c(0.0, 1.0))).collect())
        .collect();
    let mut out = Vec::new();
    for j in 0..lay.n {
        let b: Vec<Poly> = m
            .h()
            .iter()
            .map(|h| truncate(&h.as_poly().derivative(lay.w(j)).scale(c(0.0, 1.0)), deg))
            .collect();
        let mut a = b.clone();
        let mut term = b;
        for _ in 0..=deg {
            term = (0..l)
                .map(|r| {
                    (0..l).fold(Poly::zero(nv), |acc, g| acc.add(&mul(&hx[r][g], &term[g], deg)))
                })
                .collect();
            if term.iter().all(Poly::is_zero) {
                break;
            }
            for (ai, ti) in a.iter_mut().zip(&term) {
                *ai = ai.add(ti);
            }
        }
        let mut coeffs = vec![Poly::zero(nv); nv];
        for (h, ah) in a.into_iter().enumerate() {
            coeffs[lay.x(h)] = ah;
        }
        coeffs[lay.w(j)] = Poly::one(nv);
        out.push(Field(coeffs));
    }
    let conj: Vec<Field> = out
        .iter()
        .map(|f| {
            let mut coeffs = vec![Poly::zero(nv); nv];
            for h in 0..l {
                coeffs[lay.x(h)] = lay.conjugate(&f.0[lay.x(h)]);
            }
            for j in 0..lay.n {
                coeffs[lay.cw(j)] = lay.conjugate(&f.0[lay.w(j)]);
            }
            Field(coeffs)
        })
        .collect();
    out.extend(conj);
    out
}

fn rank(rows: &[Vec<Complex64>]) -> usize {
    if rows.is_empty() {
        return 0;
    }
    let m = DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j]);
    let sv = m.svd(false, false).singular_values;
    let top = sv.iter().cloned().fold(0.0, f64::max);
    sv.iter().filter(|s| **s > 1e-9 * top.max(1e-300)).count()
}

/// `dim L^j(0)` for `j = 1..=cap` by enumerating every right-nested
/// bracket word of each length, computed in intrinsic coordinates.
pub fn brute_force_dims(m: &ManifoldModel, cap: usize) -> Vec<usize> {
    let gens = cr_fields(m, cap as u32 + 1);
    let mut values: Vec<Vec<Complex64>> = gens.iter().map(Field::at_origin).collect();
    let mut dims = vec![rank(&values)];
    let mut level = gens.clone();
    for j in 2..=cap {
        // level-j fields only need degree ≤ cap − j to be exact at 0
        let deg = (cap - j + 1) as u32;
        level = gens
            .iter()
            .flat_map(|g| level.iter().map(move |w| (g, w)))
            .map(|(g, w)| g.bracket(w, deg))
            .collect();
        values.extend(level.iter().map(Field::at_origin));
        dims.push(rank(&values));
    }
    dims
}

pub fn numbers_from_dims(dims: &[usize]) -> Vec<(u32, usize)> {
    (1..dims.len())
        .filter(|&j| dims[j] > dims[j - 1])
        .map(|j| (j as u32 + 1, dims[j] - dims[j - 1]))
        .collect()
}
