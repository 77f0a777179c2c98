//! Acceptance criteria, one test per criterion. Each prints a single
//! `PASS`/`FAIL` line with its measurements and wall time.

mod common;

use std::f64::consts::{PI, SQRT_2};
use std::time::{Duration, Instant};

use common::{brute_force_dims, example, model, numbers_from_dims, vi, FLAT, LEVI, MAIN};
use crext_core::bishop::{
    fgamma_report, hilbert_transform, hopf_scan, negative_frequency_residual, radial_derivative_at_one,
    solve_bishop, sweep_attached_family, CircleGrid, CrComponent, HopfOptions, Profile, SolveOptions,
    SweepOptions,
};
use crext_core::cones::{cone_contains_strictly, halfspace_cones};
use crext_core::hormander::{bp_direction, bp_direction_from_brackets, filtration_with_cutoff};
use crext_core::sector::{barrier_construct, negative_width, thresholds};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(id: u32, name: &str, ok: bool, budget: Duration, elapsed: Duration, detail: String) {
    let within = elapsed <= budget;
    let verdict = if ok && within { "PASS" } else { "FAIL" };
    println!(
        "criterion {id:>2} [{verdict}] {name}: {detail} ({:.3}s, budget {:.0}s)",
        elapsed.as_secs_f64(),
        budget.as_secs_f64()
    );
    assert!(ok, "criterion {id} failed: {detail}");
    assert!(within, "criterion {id} exceeded its time budget");
}

fn levi_disc_component(eta: f64) -> CrComponent {
    CrComponent::new(Profile::Linear, eta, 0.0, vec![Complex64::new(1.0, 0.0)]).unwrap()
}

#[test]
fn criterion_01_hilbert_transform_exactness() {
    let start = Instant::now();
    let grid = CircleGrid::new(2048).unwrap();
    let th = grid.thetas();
    let cos: Vec<f64> = th.iter().map(|t| t.cos()).collect();
    let t_cos = hilbert_transform(&grid, &cos);
    let err_cos = t_cos.iter().zip(&th).map(|(a, t)| (a - t.sin()).abs()).fold(0.0, f64::max);
    let t_one = hilbert_transform(&grid, &vec![1.0; 2048]);
    let err_one = t_one.iter().map(|v| v.abs()).fold(0.0, f64::max);

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let band = rng.gen_range(1..=200usize);
        let coeffs: Vec<(f64, f64)> = (0..=band).map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let sigma: Vec<f64> = th
            .iter()
            .map(|t| coeffs.iter().enumerate().map(|(n, (a, b))| a * (n as f64 * t).cos() + b * (n as f64 * t).sin()).sum())
            .collect();
        let t = hilbert_transform(&grid, &sigma);
        let g: Vec<Complex64> = sigma.iter().zip(&t).map(|(a, b)| Complex64::new(*a, *b)).collect();
        worst = worst.max(negative_frequency_residual(&grid, &g));
    }
    let ok = err_cos <= 1e-12 && err_one <= 1e-12 && worst <= 1e-10;
    report(
        1,
        "Hilbert transform exactness",
        ok,
        Duration::from_secs(1),
        start.elapsed(),
        format!("|T cos − sin| = {err_cos:.2e}, |T 1| = {err_one:.2e}, worst negative-frequency residual = {worst:.2e}"),
    );
}

#[test]
fn criterion_02_closed_form_disc() {
    let start = Instant::now();
    let eta = 0.1;
    let d = solve_bishop(&model(LEVI), &levi_disc_component(eta), &[0.0], &SolveOptions::default(), None).unwrap();
    let mut eu = 0.0f64;
    let mut ev = 0.0f64;
    for k in 0..d.grid.len() {
        let t = d.grid.theta(k);
        eu = eu.max((d.u[0][k] - 2.0 * eta * eta * t.sin()).abs());
        ev = ev.max((d.v[0][k] - 2.0 * eta * eta * (1.0 - t.cos())).abs());
    }
    let dr = radial_derivative_at_one(&d)[0];
    let ok = eu <= 1e-9 && ev <= 1e-9 && (dr + 0.02).abs() <= 1e-8;
    report(
        2,
        "closed-form disc on y = |w|²",
        ok,
        Duration::from_secs(1),
        start.elapsed(),
        format!("sup|u − 2η² sin θ| = {eu:.2e}, sup|v − 2η²(1 − cos θ)| = {ev:.2e}, ∂_r v(1) = {dr:.12}"),
    );
}

#[test]
fn criterion_03_hopf_scan_leading_power() {
    let start = Instant::now();
    let mut opts = HopfOptions::for_order(2);
    opts.profile = Profile::Linear;
    opts.psi = 0.0;
    let scan = hopf_scan(&model(LEVI), &[Complex64::new(1.0, 0.0)], &[1.0], 0, &opts).unwrap();
    let exponent = scan.exponent.unwrap_or(f64::NAN);
    let ok = (exponent - 2.0).abs() <= 1e-6 && (scan.eta_derivative + 2.0).abs() <= 1e-4 && scan.sign_ok;
    report(
        3,
        "Hopf scan leading power",
        ok,
        Duration::from_secs(5),
        start.elapsed(),
        format!("exponent = {exponent:.9}, coefficient = {:.9}, sign_ok = {}", scan.eta_derivative, scan.sign_ok),
    );
}

#[test]
fn criterion_04_partial_sums_in_fgamma() {
    let start = Instant::now();
    let grid = CircleGrid::new(2048).unwrap();
    let rows = fgamma_report(0.9, 0.7, &[8, 16, 32, 64, 128], &grid, &[0.5, 0.9, 0.99]).unwrap();
    let errors: Vec<f64> = rows.iter().map(|r| r.fgamma_error).collect();
    let decreasing = errors.windows(2).all(|w| w[1] < w[0]);
    let bound = rows.iter().all(|r| r.c5_bound_ok);
    report(
        4,
        "partial sums converge in F^γ",
        decreasing && bound,
        Duration::from_secs(5),
        start.elapsed(),
        format!("errors = {:?}, derivative bound holds = {bound}", errors.iter().map(|e| format!("{e:.4e}")).collect::<Vec<_>>()),
    );
}

#[test]
fn criterion_05_hormander_numbers() {
    let start = Instant::now();
    let levi = filtration_with_cutoff(&model(LEVI), 6, 6).unwrap();
    let main = filtration_with_cutoff(&model(MAIN), 6, 6).unwrap();
    let flat = filtration_with_cutoff(&model(FLAT), 6, 6).unwrap();
    let oracle_levi = brute_force_dims(&model(LEVI), 6);
    let oracle_main = brute_force_dims(&model(MAIN), 6);
    let ok = levi.hormander_numbers == vec![(2, 1)]
        && main.hormander_numbers == vec![(2, 1), (4, 1)]
        && levi.dims == oracle_levi
        && main.dims == oracle_main
        && numbers_from_dims(&oracle_main) == main.hormander_numbers
        && !flat.finite_type
        && flat.label == "type > 6";
    report(
        5,
        "Hörmander numbers",
        ok,
        Duration::from_secs(10),
        start.elapsed(),
        format!(
            "levi {:?}, main {:?} (oracle dims {:?}), flat \"{}\"",
            levi.hormander_numbers, main.hormander_numbers, oracle_main, flat.label
        ),
    );
}

#[test]
fn criterion_06_thresholds() {
    let start = Instant::now();
    let t = thresholds(4, 2).unwrap();
    let exact = t.bp_coef == 2.0 && (t.sector_coef - SQRT_2).abs() <= 2.0 * f64::EPSILON;
    let mut iff_ok = true;
    for (k, p) in [(4u32, 2u32), (6, 2), (6, 4), (8, 2), (8, 6)] {
        let thr = thresholds(k, p).unwrap().sector_coef;
        for j in -5i32..=5 {
            if j == 0 {
                continue;
            }
            let a = thr + j as f64 * 1e-5;
            let wide = negative_width(p, a) > PI / k as f64;
            iff_ok &= wide == (a > thr);
        }
    }
    let mut ordering_ok = true;
    for k in (4..=20u32).step_by(2) {
        for p in (2..=k - 2).step_by(2) {
            ordering_ok &= thresholds(k, p).unwrap().ordered;
        }
    }
    report(
        6,
        "coefficient thresholds",
        exact && iff_ok && ordering_ok,
        Duration::from_secs(5),
        start.elapsed(),
        format!(
            "(4,2) → ({}, {:.16}); iff scan ok = {iff_ok}; ordering ok = {ordering_ok}",
            t.bp_coef, t.sector_coef
        ),
    );
}

#[test]
fn criterion_07_barrier() {
    let start = Instant::now();
    let mut mins = Vec::new();
    let mut ok = true;
    for (k, p) in [(4u32, 2u32), (6, 2), (8, 2), (8, 4)] {
        let a = 1.0 / (p as f64 * PI / (2.0 * k as f64)).cos();
        match barrier_construct(k, p, a) {
            Ok(b) => {
                let expect_b = p as f64 / k as f64 * (p as f64 * PI / (2.0 * k as f64)).tan();
                ok &= b.min_value >= -1e-10 && (b.b - expect_b).abs() < 1e-15;
                mins.push(b.min_value);
            }
            Err(e) => {
                ok = false;
                mins.push(f64::NAN);
                println!("barrier ({k},{p}) failed: {e}");
            }
        }
    }
    report(
        7,
        "nonnegative barrier",
        ok,
        Duration::from_secs(1),
        start.elapsed(),
        format!("minima = {:?}", mins.iter().map(|e| format!("{e:.3e}")).collect::<Vec<_>>()),
    );
}

#[test]
fn criterion_08_cone_comparison() {
    let start = Instant::now();
    let c = halfspace_cones(4, 2, 3.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut formula_ok = true;
    for _ in 0..2000 {
        let y: [f64; 2] = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let bp = y[0] > -y[1].abs() / 2.0;
        let sec = y[0] > -y[1].abs() * (3.0 / SQRT_2 - 1.0);
        formula_ok &= c.bp.contains_direction(&y) == bp && c.sector.contains_direction(&y) == sec;
    }
    let strict = cone_contains_strictly(&c.sector, &c.bp).unwrap();

    let mut range_ok = true;
    let mut min_c = f64::INFINITY;
    for a in [1.45, 1.6, 1.8, 1.95, 2.0] {
        let cones = halfspace_cones(4, 2, a).unwrap();
        range_ok &= cones.sector.opens_below() && !cones.bp.opens_below();
        let line = model(&example(a)).restrict_to_line(0).unwrap();
        for i in 0..720 {
            let phi = 2.0 * PI * i as f64 / 720.0;
            let v = bp_direction(&line, 4, phi).unwrap();
            min_c = min_c.min(v[0]);
        }
    }
    range_ok &= min_c >= -1e-12;
    report(
        8,
        "cone comparison",
        formula_ok && strict && range_ok,
        Duration::from_secs(1),
        start.elapsed(),
        format!("membership matches formulas = {formula_ok}, strict containment = {strict}, below-axis check = {range_ok} (min c_φ = {min_c:.3e})"),
    );
}

#[test]
fn criterion_09_bracket_sum_consistency() {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for a in [0.0, 1.0, 3.0] {
        let line = model(&vi(a)).restrict_to_line(0).unwrap();
        for i in 0..16 {
            let phi = 2.0 * PI * i as f64 / 16.0;
            let closed = bp_direction(&line, 4, phi).unwrap();
            let words = bp_direction_from_brackets(&line, 4, phi).unwrap();
            worst = worst.max((closed[0] - words[0]).abs());
        }
    }
    report(
        9,
        "closed-form direction vs bracket sum",
        worst <= 1e-9,
        Duration::from_secs(10),
        start.elapsed(),
        format!("max discrepancy = {worst:.2e}"),
    );
}

#[test]
fn criterion_10_attached_family_sweep() {
    let start = Instant::now();
    let m = model(LEVI);
    let base = solve_bishop(&m, &levi_disc_component(0.1), &[0.0], &SolveOptions::default(), None).unwrap();
    let sweep = sweep_attached_family(&m, &base, &SweepOptions::default()).unwrap();
    let dim_m = 2 * m.n() + m.l();
    let ok = sweep.tangent_rank == dim_m + 1 && sweep.angle <= 1e-3;
    report(
        10,
        "attached-family sweep",
        ok,
        Duration::from_secs(30),
        start.elapsed(),
        format!(
            "rank = {} (dim M + 1 = {}), angle to ∂_r v(1) = {:.2e}, singular values = {:?}",
            sweep.tangent_rank,
            dim_m + 1,
            sweep.angle,
            sweep.singular_values.iter().map(|e| format!("{e:.3e}")).collect::<Vec<_>>()
        ),
    );
}
