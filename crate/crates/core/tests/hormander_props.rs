mod common;

use common::brute_force_dims;
use crext_core::hormander::{filtration_with_cutoff, lie_bracket, VectorFieldJet};
use crext_core::manifold::ManifoldModel;
use crext_core::polyalg::{jet_mul, Jet, Layout, Poly, RealPoly};
use num_complex::Complex64;
use proptest::prelude::*;

const LAY: Layout = Layout { l: 1, n: 1 };
const CUT: u32 = 5;

fn poly_strategy() -> impl Strategy<Value = Poly> {
    prop::collection::vec((prop::collection::vec(0u16..=2, 3), -1.0..1.0f64, -1.0..1.0f64), 1..=4).prop_map(|t| {
        Poly::from_terms(3, t.into_iter().map(|(e, re, im)| (e, Complex64::new(re, im))))
    })
}

fn field_strategy() -> impl Strategy<Value = VectorFieldJet> {
    prop::collection::vec(poly_strategy(), 4).prop_map(|c| VectorFieldJet::from_polys(LAY, c, CUT))
}

fn max_coeff(f: &VectorFieldJet) -> f64 {
    f.coeffs().iter().map(|j| j.poly().max_abs_coeff()).fold(0.0, f64::max)
}

fn times(f: &Jet, x: &VectorFieldJet) -> VectorFieldJet {
    let c: Vec<Poly> = x.coeffs().iter().map(|k| jet_mul(f, k).unwrap().poly().clone()).collect();
    VectorFieldJet::from_polys(LAY, c, f.cutoff().min(x.cutoff()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn bracket_is_antisymmetric(x in field_strategy(), y in field_strategy()) {
        let s = lie_bracket(&x, &y).unwrap().add(&lie_bracket(&y, &x).unwrap()).unwrap();
        prop_assert!(max_coeff(&s) <= 1e-12);
    }

    #[test]
    fn bracket_satisfies_jacobi(x in field_strategy(), y in field_strategy(), z in field_strategy()) {
        let cyc = |a: &VectorFieldJet, b: &VectorFieldJet, c: &VectorFieldJet| {
            lie_bracket(&a.with_cutoff(CUT - 1), &lie_bracket(b, c).unwrap()).unwrap()
        };
        let s = cyc(&x, &y, &z).add(&cyc(&y, &z, &x)).unwrap().add(&cyc(&z, &x, &y)).unwrap();
        prop_assert!(max_coeff(&s) <= 1e-10, "{}", max_coeff(&s));
    }

    #[test]
    fn bracket_is_a_derivation_in_the_second_slot(x in field_strategy(), y in field_strategy(), f in poly_strategy()) {
        let fj = Jet::new(f, LAY.unit_weights(), CUT);
        let lhs = lie_bracket(&x, &times(&fj, &y)).unwrap();
        let xf = x.apply(&fj).unwrap();
        let rhs = times(&fj.with_cutoff(CUT - 1), &lie_bracket(&x, &y).unwrap())
            .add(&times(&xf, &y.with_cutoff(CUT - 1)))
            .unwrap();
        let diff = lhs.add(&rhs.scale(Complex64::new(-1.0, 0.0))).unwrap();
        prop_assert!(max_coeff(&diff) <= 1e-10, "{}", max_coeff(&diff));
    }

    #[test]
    fn filtration_matches_word_enumeration(
        a in 0u16..=3, b in 0u16..=3, re in -1.0..1.0f64, im in -1.0..1.0f64, x_term in -1.0..1.0f64,
    ) {
        prop_assume!(a + b >= 2);
        let lay = Layout::new(2, 1);
        let w = Poly::var(4, lay.w(0));
        let wb = Poly::var(4, lay.cw(0));
        let h1 = w.mul(&wb);
        let mono = w.pow(a as u32).mul(&wb.pow(b as u32)).scale(Complex64::new(re, im));
        let h2 = RealPoly::real_part(lay, &mono)
            .into_poly()
            .add(&Poly::var(4, lay.x(0)).mul(&h1).scale(Complex64::new(x_term, 0.0)));
        let Ok(m) = ManifoldModel::new(2, 1, None, vec![h1, h2]) else {
            return Err(TestCaseError::reject("weights not seminormal"));
        };
        let report = filtration_with_cutoff(&m, 5, 6).unwrap();
        prop_assert_eq!(report.dims, brute_force_dims(&m, 5));
    }
}
