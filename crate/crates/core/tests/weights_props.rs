use proptest::prelude::*;

use wsobolev::grid::{Grid, GridFunction};
use wsobolev::weights::{
    check_property_d, estimate_doubling, estimate_muckenhoupt, Ball, FitConfig, PropertyDFit,
    SampleBox,
};
use wsobolev::{PotentialExpr, Term, WeightSpec};

fn catalog_2d() -> Vec<WeightSpec> {
    vec![
        WeightSpec::gaussian(2),
        WeightSpec::new(
            0.7,
            1.5,
            2,
            PotentialExpr::new(vec![Term::PowerAbs { c: 0.3, s: 1.7 }]),
            PotentialExpr::new(vec![Term::Cosine { c: 0.5, k: vec![1.0, -2.0] }]),
        )
        .unwrap(),
        WeightSpec::new(
            1.0,
            3.0,
            2,
            PotentialExpr::new(vec![Term::QuadraticForm { c: 0.25 }, Term::Constant { c: 2.0 }]),
            PotentialExpr::zero(),
        )
        .unwrap(),
    ]
}

#[test]
fn log_drift_is_second_order_finite_difference_of_log_weight() {
    let points = [[0.8, -0.45], [-1.3, 0.2], [0.1, 1.7]];
    // the Gaussian's log weight is quadratic, so its central differences are exact
    for spec in catalog_2d().iter().skip(1) {
        for x in points {
            let exact = spec.eval_log_drift(&x);
            let err = |h: f64| {
                (0..2)
                    .map(|a| {
                        let (mut xp, mut xm) = (x, x);
                        xp[a] += h;
                        xm[a] -= h;
                        let fd = (spec.eval_weight(&xp).value.ln() - spec.eval_weight(&xm).value.ln())
                            / (2.0 * h);
                        (fd - exact[a]).abs()
                    })
                    .fold(0.0, f64::max)
            };
            let ratio = err(2e-2) / err(1e-2);
            assert!((3.0..=5.0).contains(&ratio), "{x:?}: ratio {ratio}");
        }
    }
}

#[test]
fn doubling_of_lebesgue_measure_is_two_to_the_d() {
    for dim in [1, 2] {
        let g = Grid::new(dim, 4.0, 81).unwrap();
        let one = GridFunction::constant(g, 1.0);
        let centre = vec![0.3; dim];
        let r = estimate_doubling(&one, &[Ball::new(&centre, 1.0), Ball::new(&vec![0.0; dim], 0.5)]);
        for e in &r.entries {
            let v = e.value.unwrap();
            assert!((v - 2f64.powi(dim as i32)).abs() <= 1e-9, "dim {dim}: {v}");
        }
    }
}

#[test]
fn doubling_skips_balls_that_leave_the_box() {
    let g = Grid::new(1, 2.0, 41).unwrap();
    let r = estimate_doubling(&GridFunction::constant(g, 1.0), &[Ball::new(&[1.5], 0.5)]);
    assert!(r.entries[0].value.is_none() && r.entries[0].warning.is_some());
}

#[test]
fn property_d_of_concave_catalog_functions() {
    let cfg = FitConfig::default();
    let cases: Vec<(Box<dyn Fn(&[f64]) -> f64>, f64)> = vec![
        (Box::new(|x: &[f64]| -x[0] * x[0]), 0.0),
        (Box::new(|x: &[f64]| 3.0 - x[0].abs()), 3.0),
        (Box::new(|x: &[f64]| -(x[0].abs().powf(1.5)) + 1.0), 1.0),
    ];
    for (f, f0) in cases {
        match check_property_d(&f, SampleBox::new(3.0, 1), 401, &cfg).unwrap() {
            PropertyDFit::Fitted { c1, c2 } => {
                assert!(c1 <= 2.0 && c2 <= f0 + 1e-9, "c1={c1} c2={c2} F(0)={f0}");
            }
            PropertyDFit::Failed { reason } => panic!("{reason}"),
        }
    }
}

fn catalog_spec() -> impl Strategy<Value = WeightSpec> {
    (0.1f64..2.0, 1.1f64..3.0, -0.5f64..0.5, 0.0f64..1.0, 0.5f64..2.0).prop_map(|(b, q, cw, cv, k)| {
        WeightSpec::new(
            b,
            q,
            1,
            PotentialExpr::new(vec![Term::QuadraticForm { c: cw.abs() }, Term::Constant { c: cw }]),
            PotentialExpr::new(vec![Term::Cosine { c: cv, k: vec![k] }]),
        )
        .unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn muckenhoupt_is_at_least_one(spec in catalog_spec(), p in 1.2f64..4.0, c in -2.0f64..2.0, r in 0.1f64..1.5) {
        let g = Grid::new(1, 4.0, 161).unwrap();
        let w = spec.sample(&g);
        let report = estimate_muckenhoupt(&w, p, &[Ball::new(&[c], r)]).unwrap();
        if let Some(v) = report.entries[0].value {
            prop_assert!(v >= 1.0 - 1e-9, "{v}");
        }
    }
}
