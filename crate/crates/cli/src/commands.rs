//! Subcommand bodies. Each returns whether its verification held.

use serde::Serialize;
use wsobolev::corpus::smooth_corpus;
use wsobolev::grid::{discrete_gradient, magnitude};
use wsobolev::inequalities::{
    certify, constants_potential, constants_xq, empirical_poincare_ratio, verify_poincare,
    verify_potential, verify_xq, BatchReport, BatchRow, ChainInputs, ConstantChain,
    InequalityReport,
};
use wsobolev::pde::{
    integrability_gate, solve_evolution, solve_evolution_lebesgue, solve_stationary, Dualization,
    EvolutionProblem,
};
use wsobolev::sobolev::{hedberg_check_random, maximal_bound_check, smooth_approximation, HedbergReport};
use wsobolev::weights::{
    check_admissibility_hypotheses, check_reg, estimate_doubling, estimate_muckenhoupt,
    AdmissibilityReport, BallReport, SampleBox, DEFAULT_DIVERGENCE_FACTOR,
};
use wsobolev::GridFunction;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::report::Emitter;

/// Slack below 1 tolerated in the Hölder lower bounds of the ball ratios.
const RATIO_SLACK: f64 = 1e-9;

fn admissibility(cfg: &RunConfig) -> Result<AdmissibilityReport, CliError> {
    let c = &cfg.constants;
    Ok(check_admissibility_hypotheses(
        &cfg.weight,
        SampleBox::new(c.sample_half_width, cfg.weight.dim),
        c.n_samples,
        &c.fit,
    )?)
}

fn chain(cfg: &RunConfig, adm: &AdmissibilityReport) -> Result<ConstantChain, CliError> {
    if !adm.passes() {
        return Err(CliError::Hypotheses(format!(
            "admissibility fit failed (gradient bound {}, osc V bounded {}, property D of -W {:?}, of -V {:?})",
            adm.grad_bound_ok, adm.osc_v_bounded, adm.property_d_w, adm.property_d_v
        )));
    }
    let c = &cfg.constants;
    let mut inputs = ChainInputs::new(cfg.p, cfg.weight.q_exp, cfg.weight.beta_coeff, cfg.weight.dim);
    inputs.delta = adm.delta;
    inputs.gamma = adm.gamma;
    inputs.osc_v = adm.osc_v;
    inputs.eps = c.eps;
    inputs.eps0 = c.eps0.expect("filled by validation");
    inputs.eps1 = c.eps1;
    let l = match c.l {
        Some(l) => l,
        None => constants_potential(&inputs)?.1 + 1.0,
    };
    Ok(certify(&cfg.weight, &inputs, l, c.c4)?)
}

pub fn weight_report(cfg: &RunConfig, out: &mut Emitter) -> Result<bool, CliError> {
    let w = cfg.weight.sample(&cfg.grid);
    out.raw("weight.csv", w.to_csv().as_bytes())?;

    let doubling = estimate_doubling(&w, &cfg.balls);
    out.table("doubling", &doubling, doubling.to_csv())?;
    let mut ok = ratios_at_least_one(&doubling);

    if cfg.p > 1.0 {
        let muck = estimate_muckenhoupt(&w, cfg.p, &cfg.balls)?;
        out.table("muckenhoupt", &muck, muck.to_csv())?;
        ok &= ratios_at_least_one(&muck);
    }
    out.json("reg", &check_reg(&w, cfg.p, DEFAULT_DIVERGENCE_FACTOR)?)?;
    if cfg.weight.beta_coeff > 0.0 {
        out.json("admissibility", &admissibility(cfg)?)?;
    }
    Ok(ok)
}

fn ratios_at_least_one(report: &BallReport) -> bool {
    report
        .entries
        .iter()
        .filter_map(|e| e.value)
        .all(|v| v >= 1.0 - RATIO_SLACK)
}

pub fn constants(cfg: &RunConfig, out: &mut Emitter) -> Result<bool, CliError> {
    let adm = admissibility(cfg)?;
    out.json("admissibility", &adm)?;
    out.json("constants", &chain(cfg, &adm)?)?;
    Ok(true)
}

#[derive(Serialize)]
struct VerificationSummary {
    corpus_size: usize,
    xq_failures: usize,
    potential_failures: usize,
    poincare_failures: usize,
    all_hold: bool,
}

pub fn verify_inequalities(cfg: &RunConfig, out: &mut Emitter) -> Result<bool, CliError> {
    let adm = admissibility(cfg)?;
    let chain = chain(cfg, &adm)?;
    let (c, d) = constants_xq(cfg.weight.beta_coeff, cfg.weight.q_exp, cfg.weight.dim, cfg.constants.eps)?;
    let corpus: Vec<(String, GridFunction, Vec<GridFunction>)> = smooth_corpus(cfg.weight.dim)
        .into_iter()
        .map(|f| {
            let s = f.sample(&cfg.grid);
            let g = discrete_gradient(&s);
            (f.name, s, g)
        })
        .collect();

    let batch = |name: &str, check: &dyn Fn(&GridFunction, &[GridFunction]) -> wsobolev::Result<InequalityReport>| {
        let rows = corpus
            .iter()
            .map(|(id, f, g)| {
                Ok(BatchRow {
                    corpus_id: id.clone(),
                    report: check(f, g)?,
                })
            })
            .collect::<wsobolev::Result<Vec<_>>>()?;
        Ok::<_, CliError>(BatchReport {
            inequality: name.to_string(),
            rows,
            certified_constant: None,
            empirical_constant: None,
        })
    };
    let (beta, q, p, spec) = (cfg.weight.beta_coeff, cfg.weight.q_exp, cfg.p, &cfg.weight);
    let xq = batch("xq", &|f, g| verify_xq(f, g, beta, q, c, d))?;
    let potential = batch("potential", &|f, g| verify_potential(f, g, spec, p, chain.c_prime, chain.d_prime))?;
    let mut poincare = batch("poincare", &|f, g| verify_poincare(f, g, spec, p, chain.poincare))?;
    poincare.certified_constant = Some(chain.poincare);
    poincare.empirical_constant = corpus
        .iter()
        .map(|(_, f, g)| empirical_poincare_ratio(f, g, spec, p))
        .collect::<wsobolev::Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .reduce(f64::max);

    let failures = |b: &BatchReport| b.rows.iter().filter(|r| !r.report.holds).count();
    let summary = VerificationSummary {
        corpus_size: corpus.len(),
        xq_failures: failures(&xq),
        potential_failures: failures(&potential),
        poincare_failures: failures(&poincare),
        all_hold: xq.all_hold() && potential.all_hold() && poincare.all_hold(),
    };
    for b in [&xq, &potential, &poincare] {
        out.table(&b.inequality, b, b.to_csv())?;
    }
    out.json("constants", &chain)?;
    out.json("verification", &summary)?;
    Ok(summary.all_hold)
}

#[derive(Serialize)]
struct PointwiseReport {
    hedberg: HedbergReport,
    /// `||M u||_p / ||u||_p`, or `None` for `p = 1`.
    maximal_ratio: Option<f64>,
}

pub fn approximate(cfg: &RunConfig, out: &mut Emitter) -> Result<bool, CliError> {
    let a = &cfg.approximate;
    let f = a.f.realize(&cfg.grid, "approximate.f")?;
    let f = declare_support(f)?;
    let report = smooth_approximation(&f, &cfg.weight, cfg.p, &a.eps_schedule, a.tolerance)?;
    out.table("approximation", &report, report.to_csv())?;

    let grad = discrete_gradient(&f);
    let pointwise = PointwiseReport {
        hedberg: hedberg_check_random(&f, &grad, a.hedberg_pairs, cfg.seed)?,
        maximal_ratio: if cfg.p > 1.0 {
            Some(maximal_bound_check(&magnitude(&grad), cfg.p)?)
        } else {
            None
        },
    };
    out.json("pointwise", &pointwise)?;
    Ok(report.strictly_decreasing)
}

/// Declares the radius of the nonzero nodes (plus one spacing) as the support.
fn declare_support(f: GridFunction) -> Result<GridFunction, CliError> {
    let g = *f.grid();
    let radius = (0..g.len())
        .filter(|&k| f.values()[k] != 0.0)
        .map(|k| {
            let x = g.point(k);
            x[..g.dim()].iter().map(|v| v * v).sum::<f64>().sqrt()
        })
        .fold(0.0, f64::max);
    if radius + g.spacing() < g.half_width() {
        Ok(f.with_support_radius(radius + g.spacing())?)
    } else {
        Ok(f)
    }
}

#[derive(Serialize)]
struct EvolutionSummary {
    steps: usize,
    final_time: f64,
    initial_energy: f64,
    final_energy: f64,
    initial_mean: f64,
    final_mean: f64,
    energy_non_increasing: bool,
    total_inner_iterations: usize,
}

pub fn solve_evolution_cmd(cfg: &RunConfig, out: &mut Emitter) -> Result<bool, CliError> {
    let e = &cfg.evolution;
    if !(cfg.p >= 2.0) {
        return Err(CliError::field("p", format!("evolution needs p >= 2, got {}", cfg.p)));
    }
    let u0 = e.u0.realize(&cfg.grid, "evolution.u0")?;
    let problem = EvolutionProblem::new(cfg.p, cfg.weight.clone(), u0, e.horizon, e.tau, e.dualization, e.solver)?;
    let trajectory = match e.dualization {
        Dualization::Weighted => solve_evolution(&problem)?,
        Dualization::Lebesgue => {
            if cfg.p > 2.0 {
                out.json("integrability_gate", &integrability_gate(&cfg.weight, &cfg.grid, cfg.p)?)?;
            }
            solve_evolution_lebesgue(&problem)?
        }
    };
    out.table("trajectory", &trajectory, trajectory.to_csv())?;
    let mut buf = Vec::new();
    trajectory.final_state().write_binary(&mut buf)?;
    out.raw("final_state.bin", &buf)?;
    if e.dump_states {
        for (k, s) in trajectory.states.iter().enumerate() {
            let mut buf = Vec::new();
            s.write_binary(&mut buf)?;
            out.raw(&format!("state_{k:06}.bin"), &buf)?;
        }
    }

    let en = &trajectory.energies;
    // roundoff in the energy sum itself
    let slack = |a: f64| 1e-12 * a.abs().max(1e-300);
    let non_increasing = en.windows(2).all(|w| w[1] <= w[0] + slack(w[0]));
    let summary = EvolutionSummary {
        steps: trajectory.times.len() - 1,
        final_time: *trajectory.times.last().expect("non-empty"),
        initial_energy: en[0],
        final_energy: *en.last().expect("non-empty"),
        initial_mean: trajectory.means[0],
        final_mean: *trajectory.means.last().expect("non-empty"),
        energy_non_increasing: non_increasing,
        total_inner_iterations: trajectory.step_iteration_counts.iter().sum(),
    };
    out.json("evolution", &summary)?;
    Ok(non_increasing)
}

#[derive(Serialize)]
struct StationarySummary {
    residual: f64,
    iterations: usize,
    tolerance: f64,
}

pub fn solve_stationary_cmd(cfg: &RunConfig, out: &mut Emitter) -> Result<bool, CliError> {
    let s = &cfg.stationary;
    if !(cfg.p >= 2.0) {
        return Err(CliError::field("p", format!("stationary problem needs p >= 2, got {}", cfg.p)));
    }
    let f = s.f.realize(&cfg.grid, "stationary.f")?;
    let sol = solve_stationary(&f, &cfg.weight, cfg.p, &s.solver)?;
    out.raw("stationary.csv", sol.u.to_csv().as_bytes())?;
    let mut buf = Vec::new();
    sol.u.write_binary(&mut buf)?;
    out.raw("stationary.bin", &buf)?;
    out.json(
        "stationary",
        &StationarySummary {
            residual: sol.residual,
            iterations: sol.iterations,
            tolerance: s.solver.tolerance,
        },
    )?;
    Ok(true)
}
