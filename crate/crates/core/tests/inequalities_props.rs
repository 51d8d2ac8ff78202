use proptest::prelude::*;

use wsobolev::corpus::smooth_corpus;
use wsobolev::grid::{discrete_gradient, Grid};
use wsobolev::inequalities::{
    certify, constants_potential, constants_xq, poincare_bound, verify_poincare, verify_xq,
    ChainInputs,
};
use wsobolev::{Error, PotentialExpr, Term, WeightSpec};

#[test]
fn verify_xq_holds_for_the_corpus_in_two_dimensions() {
    let g = Grid::new(2, 5.0, 201).unwrap();
    for (beta, q) in [(1.0, 2.0), (0.5, 1.5), (2.0, 3.0)] {
        let (c, d) = constants_xq(beta, q, 2, 1.0).unwrap();
        for f in smooth_corpus(2).iter().step_by(3) {
            let s = f.sample(&g);
            let r = verify_xq(&s, &discrete_gradient(&s), beta, q, c, d).unwrap();
            assert!(r.holds, "beta={beta} q={q} {}: {r:?}", f.name);
        }
    }
}

#[test]
fn poincare_constant_is_monotone_in_its_inputs() {
    let spec = WeightSpec::gaussian(1);
    let base = poincare_bound(&spec, 2.0, 0.5, 3.0, 4.0, 1.0).unwrap().1;
    assert!(poincare_bound(&spec, 2.0, 0.5, 3.0, 4.0, 2.0).unwrap().1 >= base);
    assert!(poincare_bound(&spec, 2.0, 0.7, 3.0, 4.0, 1.0).unwrap().1 >= base);
    // a larger oscillation of the log weight on the ball means a larger a_L
    let wavy = WeightSpec::new(
        1.0,
        2.0,
        1,
        PotentialExpr::new(vec![Term::QuadraticForm { c: 0.5 }]),
        PotentialExpr::new(vec![Term::Cosine { c: 1.0, k: vec![0.3] }]),
    )
    .unwrap();
    let (a_base, _) = poincare_bound(&spec, 2.0, 0.5, 3.0, 4.0, 1.0).unwrap();
    let (a_wavy, c_wavy) = poincare_bound(&wavy, 2.0, 0.5, 3.0, 4.0, 1.0).unwrap();
    assert!(a_wavy > a_base && c_wavy >= base, "{a_wavy} {a_base}");
    assert!(poincare_bound(&spec, 2.0, 0.5, 3.0, 3.0, 1.0).is_err());
}

#[test]
fn potential_constants_reduce_without_potentials() {
    for (p, q, eps0, eps1) in [(2.0, 2.0, 0.5, 1.0), (3.0, 1.5, 0.2, 0.5), (1.5, 3.0, 1.0, 2.0)] {
        let mut inputs = ChainInputs::new(p, q, 1.3, 1);
        inputs.eps0 = eps0;
        inputs.eps1 = eps1;
        let (cp, dp, dpc) = constants_potential(&inputs).unwrap();
        let (c, d) = constants_xq(1.3, q, 1, eps1).unwrap();
        assert!((cp - eps0 * p * c).abs() < 1e-14);
        let expect = d + (eps0 * p).powf(-q / p) * c * p / q;
        assert!((dp - expect).abs() < 1e-13 && dp == dpc);
    }
}

#[test]
fn potential_constants_blow_up_when_delta_is_too_large() {
    let mut inputs = ChainInputs::new(2.0, 2.0, 1.0, 1);
    inputs.delta = 2.0;
    assert!(matches!(constants_potential(&inputs), Err(Error::Blowup(_))));
}

#[test]
fn certified_chain_reports_both_d_prime_variants() {
    let spec = WeightSpec::new(
        1.0,
        2.0,
        1,
        PotentialExpr::new(vec![Term::PowerAbs { c: 0.5, s: 1.0 }]),
        PotentialExpr::zero(),
    )
    .unwrap();
    let mut inputs = ChainInputs::new(2.0, 2.0, 1.0, 1);
    inputs.gamma = 0.5;
    let chain = certify(&spec, &inputs, 8.0, 1.0).unwrap();
    assert!(chain.d_prime > chain.d_prime_c_gamma);
    assert!((chain.d_prime - chain.d_prime_c_gamma - 0.5 * (1.0 - chain.c)).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn poincare_flag_is_affine_invariant(alpha in prop::sample::select(vec![-3.0, -0.5, 0.25, 2.0, 7.0]), shift in -5.0f64..5.0, c in 0.05f64..1.0, idx in 0usize..18) {
        let g = Grid::new(1, 6.0, 301).unwrap();
        let spec = WeightSpec::gaussian(1);
        let f = smooth_corpus(1)[idx].sample(&g);
        let t = f.map(|v| alpha * v + shift);
        let a = verify_poincare(&f, &discrete_gradient(&f), &spec, 2.0, c).unwrap();
        let b = verify_poincare(&t, &discrete_gradient(&t), &spec, 2.0, c).unwrap();
        // equal flags unless the margin sits within roundoff of zero
        if a.margin.abs() > 1e-9 * a.lhs.abs().max(a.rhs.abs()) {
            prop_assert_eq!(a.holds, b.holds);
        }
    }
}
