//! Weighted Sobolev norms, the integration-by-parts residuals that tie the discrete
//! gradient to the weighted one, the mollification approximation engine, and the
//! Hedberg and maximal-function estimates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{
    self, check_same_grid, discrete_gradient, fmt12, magnitude, maximal_function, mollify,
    quadrature, GridFunction, VectorField,
};
use crate::weights::WeightSpec;

fn check_field(f: &GridFunction, field: &[GridFunction]) -> Result<()> {
    if field.len() != f.grid().dim() {
        return Err(Error::GridMismatch(format!(
            "vector field has {} components on a {}-dimensional grid",
            field.len(),
            f.grid().dim()
        )));
    }
    field.iter().try_for_each(|c| check_same_grid(f.grid(), c.grid()))
}

fn check_p(p: f64, strict: bool) -> Result<()> {
    let ok = if strict { p > 1.0 } else { p >= 1.0 };
    if !(ok && p.is_finite()) {
        let bound = if strict { "> 1" } else { ">= 1" };
        return Err(Error::param("p", format!("must be {bound}, got {p}")));
    }
    Ok(())
}

/// `(int |f|^p w)^{1/p}` by Simpson quadrature.
pub fn lp_norm(f: &GridFunction, weight: Option<&GridFunction>, p: f64) -> Result<f64> {
    check_p(p, false)?;
    Ok(quadrature(&f.map(|v| v.abs().powf(p)), weight)?.max(0.0).powf(1.0 / p))
}

/// `||f||_{1,p,w} = (int |grad f|^p w + int |f|^p w)^{1/p}`.
pub fn sobolev_norm(
    f: &GridFunction,
    grad_f: &[GridFunction],
    weight: &GridFunction,
    p: f64,
) -> Result<f64> {
    check_p(p, false)?;
    check_field(f, grad_f)?;
    check_same_grid(f.grid(), weight.grid())?;
    let grad_part = quadrature(&magnitude(grad_f).map(|v| v.powf(p)), Some(weight))?;
    let value_part = quadrature(&f.map(|v| v.abs().powf(p)), Some(weight))?;
    Ok((grad_part + value_part).max(0.0).powf(1.0 / p))
}

fn check_test_function(eta: &GridFunction) -> Result<()> {
    let r = eta.grid().half_width();
    match eta.support_radius() {
        Some(s) if s < r => Ok(()),
        Some(s) => Err(Error::param(
            "eta",
            format!("support radius {s} does not fit in the box of half-width {r}"),
        )),
        None => Err(Error::param("eta", "test function needs a declared compact support")),
    }
}

/// `int (d_i f) eta w + int f (d_i eta) w + int f eta beta_i w`, where `w = phi^p` and
/// `beta = grad w / w`. Vanishes in the continuum when `grad_f` is the weighted gradient
/// of `f`; `d_i eta` is the discrete gradient.
pub fn ibp_residual(
    f: &GridFunction,
    grad_f: &[GridFunction],
    eta: &GridFunction,
    spec: &WeightSpec,
    axis: usize,
    p: f64,
) -> Result<f64> {
    check_p(p, true)?;
    check_field(f, grad_f)?;
    check_same_grid(f.grid(), eta.grid())?;
    check_test_function(eta)?;
    let g = f.grid();
    if axis >= g.dim() || spec.dim != g.dim() {
        return Err(Error::param("axis", "axis or weight dimension out of range"));
    }
    let w = spec.sample(g);
    let drift = spec.sample_log_drift(g, axis);
    let d_eta = &discrete_gradient(eta)[axis];
    let integrand = (0..g.len())
        .map(|k| {
            let (fv, ev) = (f.values()[k], eta.values()[k]);
            grad_f[axis].values()[k] * ev + fv * d_eta.values()[k] + fv * ev * drift.values()[k]
        })
        .collect();
    quadrature(&GridFunction::new(*g, integrand)?, Some(&w))
}

/// `int (d_i f) zeta phi + int f (d_i zeta) phi + int f zeta (d_i phi)` with
/// `d_i phi = phi beta_i / p`.
pub fn key_lemma_residual(
    f: &GridFunction,
    grad_f: &[GridFunction],
    zeta: &GridFunction,
    spec: &WeightSpec,
    axis: usize,
    p: f64,
) -> Result<f64> {
    check_p(p, false)?;
    check_field(f, grad_f)?;
    check_same_grid(f.grid(), zeta.grid())?;
    check_test_function(zeta)?;
    let g = f.grid();
    if axis >= g.dim() || spec.dim != g.dim() {
        return Err(Error::param("axis", "axis or weight dimension out of range"));
    }
    let phi = grid::sample_field(g, |x| {
        spec.eval_phi(x, p).expect("p checked").value
    });
    let drift = spec.sample_log_drift(g, axis);
    let d_zeta = &discrete_gradient(zeta)[axis];
    let integrand = (0..g.len())
        .map(|k| {
            let (fv, zv) = (f.values()[k], zeta.values()[k]);
            grad_f[axis].values()[k] * zv
                + fv * d_zeta.values()[k]
                + fv * zv * drift.values()[k] / p
        })
        .collect();
    quadrature(&GridFunction::new(*g, integrand)?, Some(&phi))
}

/// One row of a convergence report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub eps: f64,
    pub lp_error: f64,
    pub grad_lp_error: f64,
    pub sobolev_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub p: f64,
    pub rows: Vec<ConvergenceRow>,
    /// `||f||_{1,p,w}`.
    pub reference_norm: f64,
    /// Final Sobolev error divided by `reference_norm` (0 when `f = 0`).
    pub relative_final_error: f64,
    pub tolerance: f64,
    pub within_tolerance: bool,
    /// Errors strictly decrease along the schedule.
    pub strictly_decreasing: bool,
    /// For `p = 1`: `grad(phi)` is locally bounded. Holds for every catalog weight,
    /// whose `phi` is smooth.
    pub grad_phi_locally_bounded: Option<bool>,
}

impl ConvergenceReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("eps,lp_error,grad_lp_error,sobolev_error\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}\n",
                fmt12(r.eps),
                fmt12(r.lp_error),
                fmt12(r.grad_lp_error),
                fmt12(r.sobolev_error)
            ));
        }
        out
    }
}

/// Mollifies `f` at each scale of the schedule and measures the weighted Sobolev
/// distance between `f` and its mollification, gradients taken by finite differences.
pub fn smooth_approximation(
    f: &GridFunction,
    spec: &WeightSpec,
    p: f64,
    eps_schedule: &[f64],
    tolerance: f64,
) -> Result<ConvergenceReport> {
    check_p(p, false)?;
    let g = f.grid();
    if spec.dim != g.dim() {
        return Err(Error::param("spec", "weight dimension differs from the grid"));
    }
    if eps_schedule.is_empty() || eps_schedule.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::param("eps_schedule", "must be non-empty and strictly decreasing"));
    }
    if !f.values().iter().all(|v| v.is_finite()) {
        return Err(Error::param("f", "must be bounded"));
    }
    if let Some(s) = f.support_radius() {
        if s + eps_schedule[0] >= g.half_width() {
            return Err(Error::param(
                "f",
                format!("support {s} plus the largest scale leaves the box"),
            ));
        }
    }
    let w = spec.sample(g);
    let grad_f = discrete_gradient(f);
    let reference_norm = sobolev_norm(f, &grad_f, &w, p)?;
    let mut rows = Vec::with_capacity(eps_schedule.len());
    for &eps in eps_schedule {
        let smooth = mollify(f, eps)?;
        let diff = smooth.sub(f)?;
        let grad_diff: VectorField = discrete_gradient(&smooth)
            .iter()
            .zip(&grad_f)
            .map(|(a, b)| a.sub(b))
            .collect::<Result<_>>()?;
        rows.push(ConvergenceRow {
            eps,
            lp_error: lp_norm(&diff, Some(&w), p)?,
            grad_lp_error: lp_norm(&magnitude(&grad_diff), Some(&w), p)?,
            sobolev_error: sobolev_norm(&diff, &grad_diff, &w, p)?,
        });
    }
    let last = rows.last().expect("non-empty").sobolev_error;
    let relative_final_error = if reference_norm > 0.0 { last / reference_norm } else { 0.0 };
    let strictly_decreasing = rows.windows(2).all(|r| r[1].sobolev_error < r[0].sobolev_error);
    Ok(ConvergenceReport {
        p,
        rows,
        reference_norm,
        relative_final_error,
        tolerance,
        within_tolerance: relative_final_error <= tolerance,
        strictly_decreasing,
        grad_phi_locally_bounded: (p == 1.0).then_some(true),
    })
}

/// Default number of random node pairs in [`hedberg_check`].
pub const DEFAULT_HEDBERG_PAIRS: usize = 200;

/// `count` node pairs drawn uniformly (distinct nodes) with a seeded ChaCha8 stream.
pub fn random_pairs(n_nodes: usize, count: usize, seed: u64) -> Vec<(usize, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count && n_nodes > 1 {
        let a = rng.gen_range(0..n_nodes);
        let b = rng.gen_range(0..n_nodes);
        if a != b {
            out.push((a, b));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HedbergReport {
    /// `max |u(x) - u(y)| / (|x - y| (M|grad u|(x) + M|grad u|(y)))`.
    pub constant: f64,
    pub pairs_used: usize,
    pub pairs_skipped: usize,
    pub seed: Option<u64>,
}

/// Empirical constant of the pointwise Hedberg inequality over the given node pairs.
pub fn hedberg_check(
    u: &GridFunction,
    grad_u: &[GridFunction],
    pairs: &[(usize, usize)],
) -> Result<HedbergReport> {
    check_field(u, grad_u)?;
    let g = u.grid();
    let m = maximal_function(&magnitude(grad_u));
    let mut constant = 0.0f64;
    let (mut used, mut skipped) = (0, 0);
    for &(a, b) in pairs {
        if a >= g.len() || b >= g.len() {
            return Err(Error::param("pairs", format!("node pair ({a}, {b}) outside the grid")));
        }
        let (pa, pb) = (g.point(a), g.point(b));
        let dist = grid::norm(&[pa[0] - pb[0], pa[1] - pb[1]]);
        let denom = dist * (m.values()[a] + m.values()[b]);
        if denom == 0.0 {
            skipped += 1;
            continue;
        }
        used += 1;
        constant = constant.max((u.values()[a] - u.values()[b]).abs() / denom);
    }
    Ok(HedbergReport {
        constant,
        pairs_used: used,
        pairs_skipped: skipped,
        seed: None,
    })
}

/// [`hedberg_check`] over seeded random pairs.
pub fn hedberg_check_random(
    u: &GridFunction,
    grad_u: &[GridFunction],
    count: usize,
    seed: u64,
) -> Result<HedbergReport> {
    let pairs = random_pairs(u.grid().len(), count, seed);
    let mut report = hedberg_check(u, grad_u, &pairs)?;
    report.seed = Some(seed);
    Ok(report)
}

/// `||M u||_{L^p(dx)} / ||u||_{L^p(dx)}` over the box.
pub fn maximal_bound_check(u: &GridFunction, p: f64) -> Result<f64> {
    check_p(p, true)?;
    let denom = lp_norm(u, None, p)?;
    if denom == 0.0 {
        return Err(Error::ZeroNorm("u"));
    }
    Ok(lp_norm(&maximal_function(u), None, p)? / denom)
}
