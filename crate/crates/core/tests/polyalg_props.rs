#![allow(clippy::needless_range_loop)]

use crext_core::manifold::{parse_poly, pluriharmonic_test, print_poly, restricted_imaginary_part, ManifoldModel};
use crext_core::polyalg::{
    jet_matrix_inverse, jet_mul, weighted_order_vars, Jet, Layout, Poly, RealPoly, Weight,
};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use proptest::prelude::*;

const LAY: Layout = Layout { l: 1, n: 1 };

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn poly_strategy(max_exp: u16, max_terms: usize) -> impl Strategy<Value = Poly> {
    prop::collection::vec(
        (prop::collection::vec(0..=max_exp, 3), -2.0..2.0f64, -2.0..2.0f64),
        1..=max_terms,
    )
    .prop_map(|terms| Poly::from_terms(3, terms.into_iter().map(|(e, re, im)| (e, c(re, im)))))
}

fn point_strategy() -> impl Strategy<Value = Vec<Complex64>> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 3).prop_map(|v| v.into_iter().map(|(a, b)| c(a, b)).collect())
}

fn real_point() -> impl Strategy<Value = (f64, Complex64)> {
    (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64).prop_map(|(x, a, b)| (x, c(a, b)))
}

fn close(a: Complex64, b: Complex64, scale: f64) -> bool {
    (a - b).norm() <= 1e-9 * (1.0 + scale)
}

/// Lowest power of `t` in `t ↦ p(t^{mx} x, t w, t w̄)`, read off a
/// Vandermonde fit at Chebyshev nodes.
fn scaling_order(p: &Poly, mx: u32, x: f64, w: Complex64) -> Option<u32> {
    let deg = p.terms().map(|(e, _)| mx * e[0] as u32 + e[1] as u32 + e[2] as u32).max()? as usize;
    let nodes: Vec<f64> = (0..=deg)
        .map(|j| ((2 * j + 1) as f64 * std::f64::consts::PI / (2 * deg + 2) as f64).cos())
        .collect();
    let a = DMatrix::from_fn(deg + 1, deg + 1, |i, j| nodes[i].powi(j as i32));
    let lu = a.lu();
    let vals: Vec<Complex64> = nodes
        .iter()
        .map(|&t| p.eval(&[c(t.powi(mx as i32) * x, 0.0), w * t, w.conj() * t]))
        .collect();
    let re = lu.solve(&DVector::from_iterator(deg + 1, vals.iter().map(|v| v.re)))?;
    let im = lu.solve(&DVector::from_iterator(deg + 1, vals.iter().map(|v| v.im)))?;
    let size = re.iter().chain(im.iter()).fold(0.0f64, |m, v| m.max(v.abs()));
    (0..=deg)
        .find(|&j| re[j].hypot(im[j]) > 1e-8 * size.max(1e-300))
        .map(|j| j as u32)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn product_distributes_and_evaluates(a in poly_strategy(3, 5), b in poly_strategy(3, 5), d in poly_strategy(3, 5), pt in point_strategy()) {
        let lhs = a.add(&b).mul(&d).eval(&pt);
        let rhs = a.mul(&d).add(&b.mul(&d)).eval(&pt);
        let direct = (a.eval(&pt) + b.eval(&pt)) * d.eval(&pt);
        prop_assert!(close(lhs, rhs, direct.norm()));
        prop_assert!(close(lhs, direct, direct.norm()));
    }

    #[test]
    fn derivative_obeys_leibniz(a in poly_strategy(3, 5), b in poly_strategy(3, 5), i in 0usize..3, pt in point_strategy()) {
        let lhs = a.mul(&b).derivative(i).eval(&pt);
        let rhs = a.derivative(i).mul(&b).add(&a.mul(&b.derivative(i))).eval(&pt);
        prop_assert!(close(lhs, rhs, rhs.norm()));
    }

    #[test]
    fn derivative_matches_finite_difference(a in poly_strategy(3, 5), pt in point_strategy()) {
        let h = 1e-6;
        let mut fwd = pt.clone();
        let mut bwd = pt.clone();
        fwd[0] += h;
        bwd[0] -= h;
        let fd = (a.eval(&fwd) - a.eval(&bwd)) / (2.0 * h);
        let exact = a.derivative(0).eval(&pt);
        prop_assert!((fd - exact).norm() <= 1e-5 * (1.0 + exact.norm()));
    }

    #[test]
    fn real_part_is_real_and_matches(a in poly_strategy(3, 5), (x, w) in real_point()) {
        let r = RealPoly::real_part(LAY, &a);
        let i = RealPoly::imag_part(LAY, &a);
        let z = a.eval(&LAY.point(&[x], &[w]));
        prop_assert!((r.eval(&[x], &[w]) - z.re).abs() <= 1e-9 * (1.0 + z.norm()));
        prop_assert!((i.eval(&[x], &[w]) - z.im).abs() <= 1e-9 * (1.0 + z.norm()));
        prop_assert!((r.compile().eval(&[x], &[w]) - z.re).abs() <= 1e-9 * (1.0 + z.norm()));
        prop_assert!(RealPoly::new(LAY, a.add(&LAY.conjugate(&a))).is_ok());
        prop_assert_eq!(LAY.conjugate(&LAY.conjugate(&a)), a);
    }

    #[test]
    fn jet_product_is_truncated_product(a in poly_strategy(3, 5), b in poly_strategy(3, 5), mx in 1u32..4, cutoff in 0u32..8) {
        let vw = vec![Weight::Finite(mx), Weight::Finite(1), Weight::Finite(1)];
        let got = jet_mul(&Jet::new(a.clone(), vw.clone(), cutoff), &Jet::new(b.clone(), vw.clone(), cutoff)).unwrap();
        let want = Jet::new(a.mul(&b), vw, cutoff);
        prop_assert!(got.sub(&want).unwrap().poly().max_abs_coeff() <= 1e-12 * (1.0 + a.max_abs_coeff() * b.max_abs_coeff() * 100.0));
    }

    #[test]
    fn jet_inverse_is_a_two_sided_inverse(
        consts in prop::collection::vec(-1.0..1.0f64, 4),
        tails in prop::collection::vec(poly_strategy(2, 3), 4),
        cutoff in 1u32..6,
    ) {
        let vw = vec![Weight::Finite(1); 3];
        let c0 = [[2.0 + consts[0], consts[1]], [consts[2], 2.0 + consts[3]]];
        let m: Vec<Vec<Jet>> = (0..2)
            .map(|i| {
                (0..2)
                    .map(|j| {
                        let tail = tails[2 * i + j].filter(|e| e.iter().any(|&k| k > 0));
                        Jet::new(tail.add(&Poly::constant(3, c(c0[i][j], 0.0))), vw.clone(), cutoff)
                    })
                    .collect()
            })
            .collect();
        let inv = jet_matrix_inverse(&m).unwrap();
        for (a, b) in [(&m, &inv), (&inv, &m)] {
            for i in 0..2 {
                for j in 0..2 {
                    let mut acc = Jet::zero(vw.clone(), cutoff);
                    for k in 0..2 {
                        acc = acc.add(&jet_mul(&a[i][k], &b[k][j]).unwrap()).unwrap();
                    }
                    let delta = if i == j { 1.0 } else { 0.0 };
                    let resid = acc.sub(&Jet::constant(c(delta, 0.0), vw.clone(), cutoff)).unwrap();
                    prop_assert!(resid.poly().max_abs_coeff() <= 1e-9, "residual {}", resid.poly().max_abs_coeff());
                }
            }
        }
    }

    #[test]
    fn weighted_order_matches_scaling(a in poly_strategy(3, 4), mx in 1u32..4, (x, w) in real_point()) {
        prop_assume!(x.abs() > 0.1 && w.norm() > 0.1);
        let vw = vec![Weight::Finite(mx), Weight::Finite(1), Weight::Finite(1)];
        let a = a.prune(0.05);
        let ord = weighted_order_vars(&a, &vw);
        match scaling_order(&a, mx, x, w) {
            None => prop_assert!(a.is_zero() || ord == Weight::Finite(0) && a.degree() == Some(0)),
            Some(k) => {
                // the lowest-weight part can vanish at a particular point
                prop_assert!(Weight::Finite(k) >= ord, "scaling {k} below order {ord:?}");
                let lead = a.filter(|e| Weight::Finite(mx * e[0] as u32 + e[1] as u32 + e[2] as u32) == ord);
                if lead.eval(&[c(x, 0.0), w, w.conj()]).norm() > 1e-3 {
                    prop_assert_eq!(Weight::Finite(k), ord);
                }
            }
        }
    }

    #[test]
    fn printed_polynomials_parse_back(a in poly_strategy(3, 5), pt in point_strategy()) {
        let text = print_poly(&a, LAY);
        let back = parse_poly(&text, LAY).unwrap();
        let (u, v) = (a.eval(&pt), back.eval(&pt));
        prop_assert!(close(u, v, u.norm()), "{text}");
    }

    #[test]
    fn model_documents_round_trip(a in poly_strategy(3, 4), (x, w) in real_point()) {
        let tail = RealPoly::real_part(LAY, &a.filter(|e| e[1] + e[2] >= 3 && e[0] == 0)).into_poly();
        let levi = LAY.conjugate(&Poly::var(3, 1)).mul(&Poly::var(3, 1));
        let m = ManifoldModel::new(1, 1, None, vec![levi.add(&tail)]).unwrap();
        let again = ManifoldModel::parse_and_validate(&m.to_document_string()).unwrap();
        prop_assert_eq!(m.weights(), again.weights());
        let (p, q) = (m.eval_h(&[x], &[w])[0], again.eval_h(&[x], &[w])[0]);
        prop_assert!((p - q).abs() <= 1e-9 * (1.0 + p.abs()));
    }

    #[test]
    fn harmonic_parts_are_pluriharmonic(re in -2.0..2.0f64, im in -2.0..2.0f64, m in 3u32..7, dre in 0.2..2.0f64) {
        let levi = LAY.conjugate(&Poly::var(3, 1)).mul(&Poly::var(3, 1));
        let line = ManifoldModel::new(1, 1, None, vec![levi.clone()]).unwrap().restrict_to_line(0).unwrap();
        let wm = Poly::var(3, 1).pow(m).scale(c(re, im));
        prop_assume!(c(re, im).norm() > 0.1);
        let g = RealPoly::real_part(LAY, &wm);
        let res = pluriharmonic_test(&g, &line).unwrap();
        prop_assert!(res.is_pluriharmonic);
        let f = res.witness.unwrap();
        let back = restricted_imaginary_part(&f, &line, m).unwrap();
        prop_assert!(back.sub(&g).as_poly().max_abs_coeff() <= 1e-9);

        let bump = RealPoly::real_part(LAY, &levi.mul(&Poly::var(3, 1).pow(m - 2)).scale(c(dre, 0.0)));
        prop_assert!(!pluriharmonic_test(&g.add(&bump), &line).unwrap().is_pluriharmonic);
    }
}
