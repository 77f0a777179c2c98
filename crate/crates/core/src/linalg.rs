//! Small dense linear-algebra helpers shared by the analysis modules.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

/// Relative singular-value threshold used for every rank decision.
pub const RANK_TOL: f64 = 1e-9;

/// Numerical rank of a complex matrix: singular values above
/// `rel_tol · σ_max` are counted.
pub fn complex_rank(m: &DMatrix<Complex64>, rel_tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    count_above(sv.as_slice(), rel_tol)
}

pub fn real_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    count_above(sv.as_slice(), rel_tol)
}

fn count_above(sv: &[f64], rel_tol: f64) -> usize {
    let max = sv.iter().cloned().fold(0.0, f64::max);
    if max == 0.0 || !max.is_finite() {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * max).count()
}

/// Greedy selection of rows that are linearly independent, in order.
pub fn independent_rows(rows: &[Vec<Complex64>], rel_tol: f64) -> Vec<usize> {
    let mut chosen: Vec<usize> = Vec::new();
    let mut rank = 0;
    for (i, _) in rows.iter().enumerate() {
        let mut trial = chosen.clone();
        trial.push(i);
        let r = complex_rank(&stack(rows, &trial), rel_tol);
        if r > rank {
            rank = r;
            chosen.push(i);
        }
    }
    chosen
}

pub fn stack(rows: &[Vec<Complex64>], idx: &[usize]) -> DMatrix<Complex64> {
    let ncols = rows.first().map_or(0, |r| r.len());
    DMatrix::from_fn(idx.len(), ncols, |i, j| rows[idx[i]][j])
}

/// Least-squares solution of `A x = b` via SVD.
pub fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let svd = a.clone().svd(true, true);
    let max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    svd.solve(b, RANK_TOL * max.max(f64::MIN_POSITIVE))
        .expect("svd with u and v computed")
}

/// Non-negative least squares (Lawson–Hanson): minimizes `‖A x − b‖` over
/// `x ≥ 0`.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>, tol: f64) -> DVector<f64> {
    let n = a.ncols();
    let mut x = DVector::zeros(n);
    let mut passive = vec![false; n];
    let max_outer = 3 * n + 10;
    for _ in 0..max_outer {
        let resid = b - a * &x;
        let grad = a.transpose() * &resid;
        let candidate = (0..n)
            .filter(|&j| !passive[j] && grad[j] > tol)
            .max_by(|&i, &j| grad[i].total_cmp(&grad[j]));
        let Some(j) = candidate else { break };
        passive[j] = true;
        loop {
            let idx: Vec<usize> = (0..n).filter(|&k| passive[k]).collect();
            let sub = DMatrix::from_fn(a.nrows(), idx.len(), |r, c| a[(r, idx[c])]);
            let z_sub = lstsq(&sub, b);
            let mut z = DVector::zeros(n);
            for (c, &k) in idx.iter().enumerate() {
                z[k] = z_sub[c];
            }
            if idx.iter().all(|&k| z[k] > 0.0) {
                x = z;
                break;
            }
            let mut alpha = f64::INFINITY;
            for &k in &idx {
                if z[k] <= 0.0 {
                    let denom = x[k] - z[k];
                    if denom > 0.0 {
                        alpha = alpha.min(x[k] / denom);
                    }
                }
            }
            if !alpha.is_finite() {
                alpha = 0.0;
            }
            x = &x + (z - &x) * alpha;
            for &k in &idx {
                if x[k] <= tol {
                    passive[k] = false;
                    x[k] = 0.0;
                }
            }
        }
    }
    x
}
