//! Cones of extension directions in the normal space `R^l`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::linalg;
use crate::sector::{self, SectorError};

const TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConeError {
    #[error("no directions given")]
    Empty,
    #[error("direction {0} is zero")]
    ZeroDirection(usize),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("directions have mixed lengths")]
    Ragged,
    #[error("ε = {0} must lie in [0, π/2)")]
    BadEpsilon(f64),
    #[error("containment in a non-convex cone needs planar angular data")]
    Unsupported,
    #[error(transparent)]
    Sector(#[from] SectorError),
}

/// How the inequalities combine.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Combine {
    /// `⟨n_i, y⟩ > margin·|y|` for every `i`: a convex cone.
    All,
    /// `⟨n_i, y⟩ > margin·|y|` for some `i`.
    Any,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Inequalities {
    /// Unit normals.
    pub normals: Vec<Vec<f64>>,
    pub combine: Combine,
    /// `sin ε` for a cone shrunk by angle ε.
    pub margin: f64,
}

/// A planar cone given by the open angular interval `center ± half_opening`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PlanarArc {
    pub center: f64,
    pub half_opening: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConeDescription {
    pub ambient: usize,
    /// Unit generators.
    pub generators: Vec<Vec<f64>>,
    pub inequalities: Option<Inequalities>,
    pub arc: Option<PlanarArc>,
    pub dimension: usize,
}

fn normalize(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn generator_matrix(gens: &[Vec<f64>], ambient: usize) -> DMatrix<f64> {
    DMatrix::from_fn(ambient, gens.len(), |i, j| gens[j][i])
}

/// Facet normals of the conic hull, in ambient coordinates, when the
/// generators span `R^l`.
fn facet_normals(gens: &[Vec<f64>], ambient: usize) -> Vec<Vec<f64>> {
    let mut normals: Vec<Vec<f64>> = Vec::new();
    let k = ambient - 1;
    let mut idx: Vec<usize> = (0..k).collect();
    if k == 0 {
        // the cone on the line is either a ray or everything
        let pos = gens.iter().any(|g| g[0] > 0.0);
        let neg = gens.iter().any(|g| g[0] < 0.0);
        if pos != neg {
            normals.push(vec![if pos { 1.0 } else { -1.0 }]);
        }
        return normals;
    }
    if gens.len() < k {
        return normals;
    }
    loop {
        let sub: Vec<Vec<f64>> = idx.iter().map(|&i| gens[i].clone()).collect();
        let m = DMatrix::from_fn(k, ambient, |i, j| sub[i][j]);
        if linalg::real_rank(&m, TOL) == k {
            let mut n = null_vector(&sub, ambient);
            let signs: Vec<f64> = gens.iter().map(|g| dot(g, &n)).collect();
            let has_pos = signs.iter().any(|s| *s > TOL);
            let has_neg = signs.iter().any(|s| *s < -TOL);
            if !(has_pos && has_neg) && (has_pos || has_neg) {
                if has_neg {
                    n.iter_mut().for_each(|x| *x = -*x);
                }
                let n = normalize(&n);
                if !normals.iter().any(|o| o.iter().zip(&n).all(|(a, b)| (a - b).abs() < 1e-9)) {
                    normals.push(n);
                }
            }
        }
        // next combination
        let mut i = k;
        loop {
            if i == 0 {
                return normals;
            }
            i -= 1;
            if idx[i] < gens.len() - k + i {
                idx[i] += 1;
                for j in i + 1..k {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// A unit vector orthogonal to the rows, by Gram–Schmidt on the standard basis.
fn null_vector(rows: &[Vec<f64>], ambient: usize) -> Vec<f64> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for r in rows {
        let mut v = r.clone();
        for b in &basis {
            let c = dot(&v, b);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
        }
        if norm(&v) > TOL {
            basis.push(normalize(&v));
        }
    }
    for e in 0..ambient {
        let mut v = vec![0.0; ambient];
        v[e] = 1.0;
        for b in &basis {
            let c = dot(&v, b);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
        }
        if norm(&v) > 1e-6 {
            return normalize(&v);
        }
    }
    vec![0.0; ambient]
}

/// Convex conic hull of `dirs`. When the directions span `R^l`, the hull
/// also carries facet inequalities shrunk by angle `epsilon`.
pub fn collect_directions(dirs: &[Vec<f64>], epsilon: f64) -> Result<ConeDescription, ConeError> {
    let first = dirs.first().ok_or(ConeError::Empty)?;
    let ambient = first.len();
    if !(0.0..PI / 2.0).contains(&epsilon) {
        return Err(ConeError::BadEpsilon(epsilon));
    }
    let mut gens = Vec::with_capacity(dirs.len());
    for (i, d) in dirs.iter().enumerate() {
        if d.len() != ambient {
            return Err(ConeError::Ragged);
        }
        if norm(d) <= 1e-14 {
            return Err(ConeError::ZeroDirection(i));
        }
        gens.push(normalize(d));
    }
    let dimension = linalg::real_rank(&generator_matrix(&gens, ambient), TOL);
    let inequalities = (dimension == ambient).then(|| Inequalities {
        normals: facet_normals(&gens, ambient),
        combine: Combine::All,
        margin: epsilon.sin(),
    });
    Ok(ConeDescription {
        ambient,
        generators: gens,
        inequalities,
        arc: None,
        dimension,
    })
}

pub fn cone_dimension(c: &ConeDescription) -> usize {
    linalg::real_rank(&generator_matrix(&c.generators, c.ambient), TOL)
}

impl ConeDescription {
    /// Membership of a direction in the open cone.
    pub fn contains_direction(&self, y: &[f64]) -> bool {
        if let Some(arc) = &self.arc {
            if y.len() == 2 {
                return arc_contains(arc, y[1].atan2(y[0]));
            }
        }
        match &self.inequalities {
            Some(ineq) => {
                let ny = norm(y);
                let test = |n: &Vec<f64>| dot(n, y) > ineq.margin * ny + TOL * ny;
                match ineq.combine {
                    Combine::All => ineq.normals.iter().all(test),
                    Combine::Any => ineq.normals.iter().any(test),
                }
            }
            None => in_hull(&self.generators, y),
        }
    }
}

fn arc_contains(arc: &PlanarArc, angle: f64) -> bool {
    let d = (angle - arc.center + PI).rem_euclid(2.0 * PI) - PI;
    d.abs() < arc.half_opening
}

fn in_hull(gens: &[Vec<f64>], y: &[f64]) -> bool {
    let a = generator_matrix(gens, y.len());
    let b = DVector::from_column_slice(y);
    let lambda = linalg::nnls(&a, &b, TOL);
    (&a * lambda - &b).norm() <= TOL * b.norm().max(1.0)
}

/// Is `inner` contained in `outer`? Planar arcs are compared exactly;
/// otherwise every generator of `inner` must lie in the closure of `outer`.
pub fn cone_contains(outer: &ConeDescription, inner: &ConeDescription) -> Result<bool, ConeError> {
    if outer.ambient != inner.ambient {
        return Err(ConeError::DimensionMismatch(outer.ambient, inner.ambient));
    }
    if let (Some(o), Some(i)) = (&outer.arc, &inner.arc) {
        if i.half_opening >= PI {
            return Ok(o.half_opening >= PI);
        }
        let d = (i.center - o.center + PI).rem_euclid(2.0 * PI) - PI;
        return Ok(d.abs() + i.half_opening <= o.half_opening + 1e-15);
    }
    match &outer.inequalities {
        Some(ineq) if ineq.combine == Combine::All && outer.dimension == outer.ambient => {
            Ok(inner.generators.iter().all(|g| {
                ineq.normals
                    .iter()
                    .all(|n| dot(n, g) >= ineq.margin * norm(g) - TOL)
            }))
        }
        Some(ineq) if ineq.combine == Combine::Any => Err(ConeError::Unsupported),
        _ => Ok(inner.generators.iter().all(|g| in_hull(&outer.generators, g))),
    }
}

/// Containment that is not an equality.
pub fn cone_contains_strictly(outer: &ConeDescription, inner: &ConeDescription) -> Result<bool, ConeError> {
    Ok(cone_contains(outer, inner)? && !cone_contains(inner, outer)?)
}

/// The planar cone `{y₁ > −s|y₂|}`.
pub fn planar_halfspace_cone(s: f64) -> ConeDescription {
    let half_opening = PI / 2.0 + s.atan();
    let rays = vec![
        normalize(&[-s, -1.0]),
        vec![1.0, 0.0],
        normalize(&[-s, 1.0]),
    ];
    ConeDescription {
        ambient: 2,
        generators: rays,
        inequalities: Some(Inequalities {
            normals: vec![normalize(&[1.0, s]), normalize(&[1.0, -s])],
            combine: if s >= 0.0 { Combine::Any } else { Combine::All },
            margin: 0.0,
        }),
        arc: Some(PlanarArc {
            center: 0.0,
            half_opening,
        }),
        dimension: 2,
    }
}

impl ConeDescription {
    /// Whether the cone contains a direction with `y₁ < 0`.
    pub fn opens_below(&self) -> bool {
        match &self.arc {
            Some(arc) => {
                let to_pi = (PI - arc.center).rem_euclid(2.0 * PI);
                to_pi.min(2.0 * PI - to_pi) < arc.half_opening
                    || (arc.center - arc.half_opening).cos() < 0.0
                    || (arc.center + arc.half_opening).cos() < 0.0
            }
            None => self.generators.iter().any(|g| g[0] < -TOL),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct HalfspaceCones {
    pub a: f64,
    /// `a·(k/2−1)!(k−1−k/2)! / ((p+q)! q!)`
    pub a1: f64,
    /// `a·cos(pπ/2k)`
    pub a2: f64,
    pub bp: ConeDescription,
    pub sector: ConeDescription,
}

/// `{y₁ > −|y₂|(a₁ − 1)}` and `{y₁ > −|y₂|(a₂ − 1)}`.
pub fn halfspace_cones(k: u32, p: u32, a: f64) -> Result<HalfspaceCones, ConeError> {
    let t = sector::thresholds(k, p)?;
    let a1 = a / t.bp_coef;
    let a2 = a / t.sector_coef;
    Ok(HalfspaceCones {
        a,
        a1,
        a2,
        bp: planar_halfspace_cone(a1 - 1.0),
        sector: planar_halfspace_cone(a2 - 1.0),
    })
}
