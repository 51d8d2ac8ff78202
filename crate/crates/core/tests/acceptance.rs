//! Acceptance criteria. Runs as a plain binary (no libtest harness) so that every
//! criterion prints exactly one PASS/FAIL line; exits non-zero if any criterion fails.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use wsobolev::corpus::smooth_corpus;
use wsobolev::grid::{discrete_gradient, maximal_function, sample_field, Grid, GridFunction};
use wsobolev::inequalities::{
    certify, constants_potential, constants_xq, empirical_poincare_ratio, verify_poincare,
    verify_potential, verify_xq, ChainInputs,
};
use wsobolev::pde::{
    apply_operator, integrability_gate, solve_evolution, solve_evolution_lebesgue, weighted_inner,
    Dualization, EvolutionProblem, SolverSettings,
};
use wsobolev::sobolev::{hedberg_check_random, ibp_residual, maximal_bound_check, smooth_approximation};
use wsobolev::weights::{
    check_admissibility_hypotheses, estimate_doubling, estimate_muckenhoupt_analytic, Ball,
    FitConfig, SampleBox,
};
use wsobolev::{Error, PotentialExpr, Term, WeightSpec};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within_time(outcome: Outcome, elapsed: Duration, limit: Option<u64>) -> Outcome {
    match (outcome, limit) {
        (Ok(d), Some(s)) if elapsed.as_secs_f64() >= s as f64 => {
            Err(format!("{d}; runtime {:.1}s exceeds {s}s", elapsed.as_secs_f64()))
        }
        (o, _) => o,
    }
}

fn gaussian_line(n: usize) -> Grid {
    Grid::new(1, 6.0, n).unwrap()
}

/// O(h^2) consistency of the integration-by-parts residual.
fn ibp_order() -> Outcome {
    let spec = WeightSpec::gaussian(1);
    // Ten off-centre members, each paired with itself. For members symmetric about the
    // origin the Gaussian-weighted residual vanishes identically, leaving no ratio to take.
    let corpus: Vec<_> = smooth_corpus(1)
        .into_iter()
        .filter(|f| f.value(&[1.5]).abs() != f.value(&[-1.5]).abs())
        .take(10)
        .collect();
    assert_eq!(corpus.len(), 10);
    let residuals = |n: usize| -> Vec<f64> {
        let g = gaussian_line(n);
        corpus
            .iter()
            .map(|f| {
                let s = f.sample(&g);
                ibp_residual(&s, &f.sample_gradient(&g), &s, &spec, 0, 2.0).unwrap().abs()
            })
            .collect()
    };
    let (coarse, fine) = (residuals(301), residuals(601));
    let ratios: Vec<f64> = coarse.iter().zip(&fine).map(|(a, b)| a / b).collect();
    let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    check(
        ratios.iter().all(|r| (3.2..=4.8).contains(r)),
        format!("residual ratios h=0.04 / h=0.02 in [{lo:.4}, {hi:.4}], required [3.2, 4.8]"),
    )
}

/// Mollification of the kink `max(1 - |x|, 0)` under the Gaussian weight.
fn smooth_approximation_of_kink() -> Outcome {
    let g = gaussian_line(601);
    let spec = WeightSpec::gaussian(1);
    let kink = sample_field(&g, |x| (1.0 - x[0].abs()).max(0.0))
        .with_support_radius(1.0)
        .unwrap();
    let schedule = [0.2, 0.1, 0.05];
    let mut ok = true;
    let mut parts = Vec::new();
    for p in [1.0, 1.5, 2.0, 3.0] {
        let r = smooth_approximation(&kink, &spec, p, &schedule, 1e-2).unwrap();
        let errors: Vec<String> = r.rows.iter().map(|row| format!("{:.4}", row.sobolev_error)).collect();
        let guarantee = p != 1.0 || r.grad_phi_locally_bounded == Some(true);
        ok &= r.strictly_decreasing && r.within_tolerance && guarantee;
        parts.push(format!(
            "p={p}: errors [{}], relative final {:.4}",
            errors.join(", "),
            r.relative_final_error
        ));
    }
    check(ok, format!("{}; required decreasing and relative final <= 1e-2", parts.join("; ")))
}

fn corpus_on(g: &Grid) -> Vec<(String, GridFunction, Vec<GridFunction>)> {
    smooth_corpus(1)
        .into_iter()
        .map(|f| {
            let s = f.sample(g);
            let d = discrete_gradient(&s);
            (f.name.clone(), s, d)
        })
        .collect()
}

fn xq_bound() -> Outcome {
    let (c, d) = constants_xq(1.0, 2.0, 1, 1.0).unwrap();
    let g = gaussian_line(601);
    let mut failures = Vec::new();
    let mut worst = f64::INFINITY;
    let corpus = corpus_on(&g);
    for (name, f, grad) in &corpus {
        let r = verify_xq(f, grad, 1.0, 2.0, c, d).unwrap();
        worst = worst.min(r.margin + r.quadrature_error_estimate);
        if !r.holds {
            failures.push(name.clone());
        }
    }
    check(
        c == 0.5 && d == 2.5 && failures.is_empty() && corpus.len() >= 10,
        format!(
            "C={c}, D={d}; {} functions, {} failures, min margin+quad error {worst:.3e}",
            corpus.len(),
            failures.len()
        ),
    )
}

fn potential_bound() -> Outcome {
    let mut inputs = ChainInputs::new(2.0, 2.0, 1.0, 1);
    inputs.eps0 = 0.5;
    inputs.eps1 = 1.0;
    let (cp, dp, _) = constants_potential(&inputs).unwrap();
    let spec = WeightSpec::gaussian(1);
    let g = gaussian_line(601);
    let corpus = corpus_on(&g);
    let failures = corpus
        .iter()
        .filter(|(_, f, grad)| !verify_potential(f, grad, &spec, 2.0, cp, dp).unwrap().holds)
        .count();

    let w_half = WeightSpec::new(
        1.0,
        2.0,
        1,
        PotentialExpr::new(vec![Term::QuadraticForm { c: 0.5 }]),
        PotentialExpr::zero(),
    )
    .unwrap();
    let adm = check_admissibility_hypotheses(&w_half, SampleBox::new(4.0, 1), 1000, &FitConfig::default())
        .unwrap();
    let mut variant_inputs = ChainInputs::new(2.0, 2.0, 1.0, 1);
    variant_inputs.delta = adm.delta;
    variant_inputs.gamma = adm.gamma;
    let chain = certify(&w_half, &variant_inputs, 8.0, 1.0).unwrap();
    let json = serde_json::to_value(&chain).unwrap();
    let variant = json.get("D_prime_c_gamma").and_then(|v| v.as_f64());
    check(
        cp == 0.5 && dp == 3.0 && failures == 0 && variant.is_some(),
        format!(
            "C'={cp}, D'={dp}; {} functions, {failures} failures; W=x^2/2: delta={}, gamma={}, D'={:.6}, C-gamma variant {:.6}",
            corpus.len(),
            adm.delta,
            adm.gamma,
            chain.d_prime,
            chain.d_prime_c_gamma
        ),
    )
}

fn poincare_sandwich() -> Outcome {
    let g = gaussian_line(601);
    let spec = WeightSpec::gaussian(1);
    let x = sample_field(&g, |x| x[0]);
    let ratio = empirical_poincare_ratio(&x, &discrete_gradient(&x), &spec, 2.0)
        .unwrap()
        .unwrap();
    let chain = certify(&spec, &ChainInputs::new(2.0, 2.0, 1.0, 1), 4.0, 1.0).unwrap();
    let c = chain.poincare;
    let corpus = corpus_on(&g);
    let failures = corpus
        .iter()
        .filter(|(_, f, grad)| !verify_poincare(f, grad, &spec, 2.0, c).unwrap().holds)
        .count();
    check(
        (ratio - 0.5).abs() <= 1e-3 && c > 0.5 && failures == 0,
        format!(
            "ratio(x)={ratio:.9}; certified c={c:.6e} (L=4, C4=1); {} functions, {failures} failures",
            corpus.len()
        ),
    )
}

fn muckenhoupt() -> Outcome {
    let balls: Vec<Ball> = [0.25, 0.5, 1.0, 2.0].iter().map(|&r| Ball::new(&[0.0], r)).collect();
    let one = estimate_muckenhoupt_analytic(|_| 1.0, 1, 2.0, &balls).unwrap().max;
    let root = estimate_muckenhoupt_analytic(|x| x[0].abs().sqrt(), 1, 2.0, &balls).unwrap();
    let worst = root
        .entries
        .iter()
        .map(|e| (e.value.unwrap() - 4.0 / 3.0).abs())
        .fold(0.0, f64::max);
    check(
        (one - 1.0).abs() <= 1e-9 && worst <= 1e-3,
        format!("K(1)={one:.12}; K(|x|^1/2) max deviation from 4/3 = {worst:.3e}"),
    )
}

fn doubling() -> Outcome {
    let g = gaussian_line(601);
    let one = estimate_doubling(&GridFunction::constant(g, 1.0), &[Ball::new(&[0.0], 1.0), Ball::new(&[1.5], 0.7)]);
    let gauss = WeightSpec::gaussian(1).sample(&g);
    let centred = estimate_doubling(&gauss, &[Ball::new(&[0.0], 1.0)]).max;
    let oracle = erf(2.0) / erf(1.0);
    let off = estimate_doubling(&gauss, &[Ball::new(&[3.0], 0.5)]).max;
    let flat_ok = one.entries.iter().all(|e| (e.value.unwrap() - 2.0).abs() <= 1e-9);
    check(
        flat_ok && (centred - oracle).abs() <= 1e-3 && off > 10.0,
        format!(
            "w=1: {:.12}; Gaussian B(0,1): {centred:.6} (oracle {oracle:.6}); Gaussian B(3,0.5): {off:.3}",
            one.max
        ),
    )
}

/// Abramowitz–Stegun 7.1.26 is too coarse for a 1e-3 oracle on a ratio; use the series.
fn erf(x: f64) -> f64 {
    let mut term = x;
    let mut sum = x;
    for n in 1..200 {
        term *= -x * x / n as f64;
        sum += term / (2 * n + 1) as f64;
    }
    2.0 / PI.sqrt() * sum
}

fn ou_flow() -> Outcome {
    let g = gaussian_line(601);
    let spec = WeightSpec::gaussian(1);
    let u0 = sample_field(&g, |x| x[0]);
    let problem = EvolutionProblem::new(2.0, spec.clone(), u0.clone(), 0.5, 1e-3, Dualization::Weighted, SolverSettings::default())
        .unwrap();
    let t = solve_evolution(&problem).unwrap();
    let exact = u0.scale((-2.0 * t.times.last().unwrap()).exp());
    let diff = t.final_state().sub(&exact).unwrap();
    let err = weighted_inner(&diff, &diff, &spec).unwrap().sqrt()
        / weighted_inner(&exact, &exact, &spec).unwrap().sqrt();
    check(
        err <= 0.02 && (t.times.last().unwrap() - 0.5).abs() < 1e-9,
        format!("{} steps, relative L2(mu) error at t=0.5: {err:.4e}", t.times.len() - 1),
    )
}

fn seeded_smooth(g: &Grid, seed: u64) -> GridFunction {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let coeffs: Vec<(f64, f64)> = (1..=4).map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(0.0..PI))).collect();
    sample_field(g, |x| {
        coeffs
            .iter()
            .enumerate()
            .map(|(k, (a, ph))| a * ((k + 1) as f64 * 0.8 * x[0] + ph).sin())
            .sum()
    })
}

fn pde_structure() -> Outcome {
    let g = Grid::new(1, 4.0, 161).unwrap();
    let spec = WeightSpec::gaussian(1);
    let settings = SolverSettings::default();
    let mut parts = Vec::new();
    let mut ok = true;
    for p in [2.0, 3.0, 4.0] {
        let run = |u0: GridFunction| {
            let pr = EvolutionProblem::new(p, spec.clone(), u0, 0.1, 0.01, Dualization::Weighted, settings).unwrap();
            solve_evolution(&pr).unwrap()
        };
        let a = run(seeded_smooth(&g, 1));
        let b = run(seeded_smooth(&g, 2));
        let energy_ok = a
            .energies
            .windows(2)
            .chain(b.energies.windows(2))
            .all(|e| e[1] <= e[0]);
        let drift = a
            .means
            .windows(2)
            .chain(b.means.windows(2))
            .map(|m| (m[1] - m[0]).abs())
            .fold(0.0, f64::max);
        let mut monotone = f64::INFINITY;
        for k in 0..100u64 {
            let u = seeded_smooth(&g, 1000 + 2 * k);
            let v = seeded_smooth(&g, 1001 + 2 * k);
            let au = apply_operator(&u, &spec, p).unwrap();
            let av = apply_operator(&v, &spec, p).unwrap();
            let m = weighted_inner(&au.sub(&av).unwrap(), &u.sub(&v).unwrap(), &spec).unwrap();
            monotone = monotone.min(m);
        }
        let dist: Vec<f64> = a
            .states
            .iter()
            .zip(&b.states)
            .map(|(x, y)| {
                let d = x.sub(y).unwrap();
                weighted_inner(&d, &d, &spec).unwrap().sqrt()
            })
            .collect();
        let contraction = dist.windows(2).all(|d| d[1] <= d[0] + 2.0 * settings.tolerance);
        ok &= energy_ok && drift <= 1e-6 && monotone >= -1e-10 && contraction;
        parts.push(format!(
            "p={p}: energy non-increasing {energy_ok}, max mean drift {drift:.2e}, min monotonicity {monotone:.3e}, contraction {contraction}"
        ));
    }
    check(ok, parts.join("; "))
}

fn integrability() -> Outcome {
    let g = gaussian_line(601);
    let up = WeightSpec::radial(-1.0, 2.0, 1).unwrap();
    let pass = integrability_gate(&up, &g, 3.0).unwrap();
    let down = EvolutionProblem::new(
        3.0,
        WeightSpec::gaussian(1),
        GridFunction::zeros(g),
        0.1,
        0.1,
        Dualization::Lebesgue,
        SolverSettings::default(),
    )
    .unwrap();
    let msg = match solve_evolution_lebesgue(&down) {
        Err(Error::IntegrabilityGate(m)) => Some(m),
        _ => None,
    };
    check(
        pass.passes && msg.as_deref().is_some_and(|m| m.contains("diverges")),
        format!(
            "beta=-1: passes={} (domain change {:.1e}); beta=1: {}",
            pass.passes,
            pass.domain_change,
            msg.unwrap_or_else(|| "no gate error".into())
        ),
    )
}

fn maximal_suite() -> Outcome {
    let g = gaussian_line(601);
    let h = g.spacing();
    // indicator of the unit ball [-1, 1]
    let ind = sample_field(&g, |x| if x[0].abs() <= 1.0 { 1.0 } else { 0.0 });
    let m = maximal_function(&ind);
    let at_two = m.values()[g.len() / 2 + 100];
    let x = sample_field(&g, |x| x[0]);
    let hed = hedberg_check_random(&x, &discrete_gradient(&x), 200, 7).unwrap().constant;
    let bump = |n: usize| {
        let gg = gaussian_line(n);
        maximal_bound_check(&smooth_corpus(1)[4].sample(&gg), 2.0).unwrap()
    };
    let (coarse, fine) = (bump(301), bump(601));
    let change = (fine - coarse).abs() / coarse;
    check(
        (at_two - 1.0 / 3.0).abs() <= 2.0 * h && (hed - 0.5).abs() <= 1e-6 && change <= 0.1,
        format!(
            "Mf(2)={at_two:.6} (1/3 +- {:.2}); Hedberg(x)={hed:.9}; maximal bound {coarse:.5} -> {fine:.5} ({:.2}%)",
            2.0 * h,
            100.0 * change
        ),
    )
}

fn main() {
    let criteria: Vec<(&str, fn() -> Outcome, Option<u64>)> = vec![
        ("integration-by-parts residual is O(h^2)", ibp_order, Some(10)),
        ("smooth approximation of the kink", smooth_approximation_of_kink, Some(30)),
        ("|x|^(q-1) bound with C=0.5, D=2.5", xq_bound, None),
        ("potential bound with C'=0.5, D'=3.0", potential_bound, None),
        ("Poincare sharpness sandwich", poincare_sandwich, None),
        ("Muckenhoupt estimator", muckenhoupt, None),
        ("doubling estimator", doubling, None),
        ("Ornstein-Uhlenbeck flow", ou_flow, Some(60)),
        ("structural PDE properties", pde_structure, None),
        ("integrability gate", integrability, None),
        ("maximal-function suite", maximal_suite, None),
    ];
    let mut failed = 0;
    for (i, (name, run, limit)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        match within_time(outcome, elapsed, *limit) {
            Ok(d) => println!("PASS [{}] {name}: {d} ({:.2}s)", i + 1, elapsed.as_secs_f64()),
            Err(d) => {
                failed += 1;
                println!("FAIL [{}] {name}: {d} ({:.2}s)", i + 1, elapsed.as_secs_f64());
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
