mod common;

use common::{model, LEVI};
use crext_core::bishop::{
    hilbert_transform, negative_frequency_residual, solve_bishop, CircleGrid, CrComponent, Profile, SolveOptions,
};
use num_complex::Complex64;
use proptest::prelude::*;

const N: usize = 256;

/// `Σ a_k cos kθ + b_k sin kθ` for `k = 0..len`.
fn trig(a: &[f64], b: &[f64], theta: f64) -> f64 {
    a.iter()
        .zip(b)
        .enumerate()
        .map(|(k, (ak, bk))| ak * (k as f64 * theta).cos() + bk * (k as f64 * theta).sin())
        .sum()
}

fn coeffs() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..40).prop_flat_map(|d| (prop::collection::vec(-1.0..1.0f64, d), prop::collection::vec(-1.0..1.0f64, d)))
}

fn sample(a: &[f64], b: &[f64], grid: &CircleGrid) -> Vec<f64> {
    grid.thetas().iter().map(|&t| trig(a, b, t)).collect()
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hilbert_transform_matches_closed_form((a, b) in coeffs()) {
        let grid = CircleGrid::new(N).unwrap();
        let got = hilbert_transform(&grid, &sample(&a, &b, &grid));
        // T₁ cos kθ = sin kθ, T₁ sin kθ = 1 − cos kθ
        let want: Vec<f64> = grid
            .thetas()
            .iter()
            .map(|&t| {
                (1..a.len())
                    .map(|k| a[k] * (k as f64 * t).sin() + b[k] * (1.0 - (k as f64 * t).cos()))
                    .sum()
            })
            .collect();
        let err = got.iter().zip(&want).fold(0.0f64, |m, (g, w)| m.max((g - w).abs()));
        prop_assert!(err <= 1e-12 * (1.0 + sup(&want)), "{err}");
    }

    #[test]
    fn hilbert_transform_is_linear_and_anchored((a, b) in coeffs(), (c, d) in coeffs(), s in -3.0..3.0f64) {
        let grid = CircleGrid::new(N).unwrap();
        let f = sample(&a, &b, &grid);
        let g = sample(&c, &d, &grid);
        let combo: Vec<f64> = f.iter().zip(&g).map(|(x, y)| s * x + y).collect();
        let lhs = hilbert_transform(&grid, &combo);
        let (tf, tg) = (hilbert_transform(&grid, &f), hilbert_transform(&grid, &g));
        for k in 0..N {
            prop_assert!((lhs[k] - (s * tf[k] + tg[k])).abs() <= 1e-12 * (1.0 + sup(&combo)));
        }
        prop_assert!(lhs[grid.zero_index()].abs() <= 1e-15);
    }

    #[test]
    fn conjugate_pairs_extend_holomorphically((a, b) in coeffs()) {
        let grid = CircleGrid::new(N).unwrap();
        let sigma = sample(&a, &b, &grid);
        let t1 = hilbert_transform(&grid, &sigma);
        let t2 = hilbert_transform(&grid, &t1);
        let scale = 1e-12 * (1.0 + sup(&sigma));
        let first: Vec<Complex64> = sigma.iter().zip(&t1).map(|(s, t)| Complex64::new(*s, *t)).collect();
        let second: Vec<Complex64> = t1.iter().zip(&t2).map(|(s, t)| Complex64::new(*s, *t)).collect();
        prop_assert!(negative_frequency_residual(&grid, &first) <= scale);
        prop_assert!(negative_frequency_residual(&grid, &second) <= scale);
    }

    #[test]
    fn levi_discs_satisfy_their_invariants(eta in 0.02..0.3f64, psi in -3.0..3.0f64, alpha in 0.55..0.95f64, singular in any::<bool>()) {
        let m = model(LEVI);
        let profile = if singular { Profile::Singular { alpha } } else { Profile::Linear };
        let c = CrComponent::new(profile, eta, psi, vec![Complex64::new(1.0, 0.0)]).unwrap();
        let o = SolveOptions::default();
        let d = solve_bishop(&m, &c, &[0.0], &o, None).unwrap();
        prop_assert!(d.manifold_residual <= o.tol_m);
        prop_assert!(d.holomorphy_residual <= o.tol_h);
        prop_assert!(d.anchoring_residual <= 1e-13);
        prop_assert!(d.fixed_point_residual <= o.tol_m);
        prop_assert!(d.v[0].iter().all(|v| *v >= -1e-15));
        if !singular {
            // v = |w|² = 2η²(1 − cos θ), u = 2η² sin θ
            for (k, th) in d.grid.thetas().iter().enumerate() {
                prop_assert!((d.v[0][k] - 2.0 * eta * eta * (1.0 - th.cos())).abs() <= 1e-13);
                prop_assert!((d.u[0][k] - 2.0 * eta * eta * th.sin()).abs() <= 1e-13);
            }
        }
    }
}
