//! The weighted p-Laplacian: energy, operator, stationary problem and gradient flow.
//!
//! The energy `(1/p) int |grad u|^p w dx` is discretised with piecewise-linear elements:
//! grid cells in 1D, and each grid square split into two triangles along its diagonal in
//! 2D. The gradient is constant on each element and the weight is taken at the element
//! centroid. Inner products use lumped (nodal) masses, so the Riesz representative of a
//! derivative is the Euclidean gradient divided by the nodal mass. No boundary condition
//! is imposed: minimisation over all grid functions gives the natural (no-flux) one.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{check_same_grid, fmt12, quadrature, Grid, GridFunction};
use crate::weights::WeightSpec;

#[derive(Debug, Clone, Copy)]
struct Element {
    nodes: [usize; 3],
    /// `grad u = sum_k coeffs[axis][k] * u[nodes[k]]`.
    coeffs: [[f64; 3]; 2],
    /// Element measure times the weight at the centroid.
    weighted_measure: f64,
}

/// Elements and lumped masses of one grid/weight pair.
#[derive(Debug, Clone)]
pub struct Discretization {
    grid: Grid,
    p: f64,
    elements: Vec<Element>,
    /// Nodal areas (`dx` lumped mass).
    area: Vec<f64>,
    /// Nodal areas times the weight (`mu` lumped mass).
    weighted_mass: Vec<f64>,
}

impl Discretization {
    pub fn new(grid: &Grid, spec: &WeightSpec, p: f64) -> Result<Self> {
        if !(p >= 1.0 && p.is_finite()) {
            return Err(Error::param("p", format!("must be >= 1, got {p}")));
        }
        if spec.dim != grid.dim() {
            return Err(Error::param("spec", "weight dimension differs from the grid"));
        }
        let h = grid.spacing();
        let n = grid.nodes_per_axis();
        let mut elements = Vec::new();
        let mut area = vec![0.0; grid.len()];
        match grid.dim() {
            1 => {
                for i in 0..n - 1 {
                    let mid = 0.5 * (grid.coord(i) + grid.coord(i + 1));
                    elements.push(Element {
                        nodes: [i, i + 1, i + 1],
                        coeffs: [[-1.0 / h, 1.0 / h, 0.0], [0.0; 3]],
                        weighted_measure: h * spec.weight(&[mid]),
                    });
                    area[i] += 0.5 * h;
                    area[i + 1] += 0.5 * h;
                }
            }
            _ => {
                let tri = 0.5 * h * h;
                for i in 0..n - 1 {
                    for j in 0..n - 1 {
                        let a = grid.flat_index([i, j]);
                        let b = grid.flat_index([i + 1, j]);
                        let c = grid.flat_index([i, j + 1]);
                        let d = grid.flat_index([i + 1, j + 1]);
                        let (x, y) = (grid.coord(i), grid.coord(j));
                        // (a, b, d): d_x from a->b, d_y from b->d
                        elements.push(Element {
                            nodes: [a, b, d],
                            coeffs: [[-1.0 / h, 1.0 / h, 0.0], [0.0, -1.0 / h, 1.0 / h]],
                            weighted_measure: tri
                                * spec.weight(&[x + 2.0 * h / 3.0, y + h / 3.0]),
                        });
                        // (a, d, c): d_x from c->d, d_y from a->c
                        elements.push(Element {
                            nodes: [a, d, c],
                            coeffs: [[0.0, 1.0 / h, -1.0 / h], [-1.0 / h, 0.0, 1.0 / h]],
                            weighted_measure: tri
                                * spec.weight(&[x + h / 3.0, y + 2.0 * h / 3.0]),
                        });
                        for k in [a, b, d] {
                            area[k] += tri / 3.0;
                        }
                        for k in [a, d, c] {
                            area[k] += tri / 3.0;
                        }
                    }
                }
            }
        }
        let weighted_mass = (0..grid.len())
            .map(|k| area[k] * spec.weight(&grid.point(k)[..grid.dim()]))
            .collect();
        Ok(Discretization {
            grid: *grid,
            p,
            elements,
            area,
            weighted_mass,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Lumped `mu` masses.
    pub fn weighted_mass(&self) -> &[f64] {
        &self.weighted_mass
    }

    /// Lumped `dx` masses.
    pub fn area(&self) -> &[f64] {
        &self.area
    }

    fn element_gradient(&self, e: &Element, u: &[f64]) -> [f64; 2] {
        let mut g = [0.0; 2];
        for (a, ga) in g.iter_mut().enumerate().take(self.grid.dim()) {
            for k in 0..3 {
                *ga += e.coeffs[a][k] * u[e.nodes[k]];
            }
        }
        g
    }

    /// `(1/p) sum_e |grad u_e|^p w_e |e|`.
    pub fn energy(&self, u: &[f64]) -> f64 {
        let p = self.p;
        self.elements
            .iter()
            .map(|e| {
                let g = self.element_gradient(e, u);
                let m2 = g[0] * g[0] + g[1] * g[1];
                e.weighted_measure * m2.powf(0.5 * p)
            })
            .sum::<f64>()
            / p
    }

    /// Euclidean gradient of [`Self::energy`].
    pub fn energy_gradient(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        let p = self.p;
        for e in &self.elements {
            let g = self.element_gradient(e, u);
            let m2 = g[0] * g[0] + g[1] * g[1];
            // |g|^{p-2}; for p = 2 this is 1 even at g = 0
            let flux = e.weighted_measure * if p == 2.0 { 1.0 } else { m2.powf(0.5 * (p - 2.0)) };
            for k in 0..3 {
                let c = e.coeffs[0][k] * g[0] + e.coeffs[1][k] * g[1];
                out[e.nodes[k]] += flux * c;
            }
        }
        out
    }

    /// Riesz representative in `L^2(mu)` of `v -> int |grad u|^{p-2} <grad u, grad v> w`.
    pub fn operator(&self, u: &[f64]) -> Vec<f64> {
        self.energy_gradient(u)
            .iter()
            .zip(&self.weighted_mass)
            .map(|(g, m)| g / m)
            .collect()
    }

    /// `int u dmu / int dmu` with the lumped masses.
    pub fn weighted_mean(&self, u: &[f64]) -> f64 {
        mean_with(&self.weighted_mass, u)
    }
}

fn mean_with(mass: &[f64], u: &[f64]) -> f64 {
    let total: f64 = mass.iter().sum();
    mass.iter().zip(u).map(|(m, v)| m * v).sum::<f64>() / total
}

/// `(1/p) int |grad u|^p w dx`.
pub fn energy(u: &GridFunction, spec: &WeightSpec, p: f64) -> Result<f64> {
    Ok(Discretization::new(u.grid(), spec, p)?.energy(u.values()))
}

/// `energy(u) - int f u w dx`.
pub fn energy_with_source(
    u: &GridFunction,
    f: &GridFunction,
    spec: &WeightSpec,
    p: f64,
) -> Result<f64> {
    check_same_grid(u.grid(), f.grid())?;
    let disc = Discretization::new(u.grid(), spec, p)?;
    let source: f64 = disc
        .weighted_mass
        .iter()
        .zip(u.values())
        .zip(f.values())
        .map(|((m, a), b)| m * a * b)
        .sum();
    Ok(disc.energy(u.values()) - source)
}

/// The weighted p-Laplacian `A(u)` as a grid function (`L^2(mu)` representative).
pub fn apply_operator(u: &GridFunction, spec: &WeightSpec, p: f64) -> Result<GridFunction> {
    if !(p >= 2.0) {
        return Err(Error::param("p", format!("must be >= 2, got {p}")));
    }
    let disc = Discretization::new(u.grid(), spec, p)?;
    GridFunction::new(*u.grid(), disc.operator(u.values()))
}

/// `<a, b>` in `L^2(mu)` with lumped masses.
pub fn weighted_inner(a: &GridFunction, b: &GridFunction, spec: &WeightSpec) -> Result<f64> {
    check_same_grid(a.grid(), b.grid())?;
    let disc = Discretization::new(a.grid(), spec, 2.0)?;
    Ok(disc
        .weighted_mass
        .iter()
        .zip(a.values())
        .zip(b.values())
        .map(|((m, x), y)| m * x * y)
        .sum())
}

/// Settings of the inner descent solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    /// Stop when the gradient norm in the problem's metric is at most this.
    #[serde(rename = "tol")]
    pub tolerance: f64,
    pub max_iters: usize,
    /// Line-search shrink factor.
    pub shrink: f64,
    /// Armijo sufficient-decrease parameter.
    pub sufficient_decrease: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            tolerance: 1e-8,
            max_iters: 10_000,
            shrink: 0.5,
            sufficient_decrease: 1e-4,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::param("tol", "must be positive"));
        }
        if self.max_iters == 0 {
            return Err(Error::param("max_iters", "must be positive"));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(Error::param("shrink", "must lie in (0, 1)"));
        }
        if !(self.sufficient_decrease > 0.0 && self.sufficient_decrease < 1.0) {
            return Err(Error::param("sufficient_decrease", "must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct DescentOutcome {
    x: Vec<f64>,
    iterations: usize,
}

/// Objective values remembered by the nonmonotone line search.
const LINE_SEARCH_MEMORY: usize = 10;

/// Steepest descent in the metric `diag(metric)` with Armijo backtracking. Trial steps
/// follow the Barzilai–Borwein rule and sufficient decrease is measured against the
/// largest of the last [`LINE_SEARCH_MEMORY`] objective values, so every iterate stays
/// below the starting value. `project` (if any) maps gradients onto the feasible subspace
/// and must be orthogonal in the metric.
fn descend(
    x0: Vec<f64>,
    value: impl Fn(&[f64]) -> f64,
    euclidean_gradient: impl Fn(&[f64]) -> Vec<f64>,
    metric: &[f64],
    project: Option<&dyn Fn(&mut [f64])>,
    settings: &SolverSettings,
) -> Result<DescentOutcome> {
    let riesz = |x: &[f64]| {
        let mut g: Vec<f64> = euclidean_gradient(x)
            .iter()
            .zip(metric)
            .map(|(a, m)| a / m)
            .collect();
        if let Some(pr) = project {
            pr(&mut g);
        }
        g
    };
    let norm2 = |g: &[f64]| g.iter().zip(metric).map(|(v, m)| m * v * v).sum::<f64>();

    let mut x = x0;
    let mut fx = value(&x);
    let mut g = riesz(&x);
    let mut gnorm2 = norm2(&g);
    let mut trial = 1.0;
    let mut iterations = 0;
    let mut history = std::collections::VecDeque::from([fx]);
    while gnorm2.sqrt() > settings.tolerance {
        if iterations >= settings.max_iters {
            return Err(Error::NotConverged {
                iterations,
                residual: gnorm2.sqrt(),
                last_iterate: x,
            });
        }
        iterations += 1;
        // roundoff allowance in the comparison of objective values
        let slack = 8.0 * f64::EPSILON * (fx.abs() + 1.0);
        let reference = history.iter().cloned().fold(fx, f64::max);
        let mut alpha = trial;
        let mut accepted = None;
        for _ in 0..200 {
            let cand: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - alpha * b).collect();
            let fc = value(&cand);
            if fc <= reference - settings.sufficient_decrease * alpha * gnorm2 + slack {
                accepted = Some((cand, fc));
                break;
            }
            alpha *= settings.shrink;
        }
        let Some((next, fnext)) = accepted else {
            return Err(Error::NotConverged {
                iterations,
                residual: gnorm2.sqrt(),
                last_iterate: x,
            });
        };
        let g_next = riesz(&next);
        // Barzilai–Borwein: <s, s> / <s, y> in the metric
        let mut ss = 0.0;
        let mut sy = 0.0;
        for k in 0..x.len() {
            let s = next[k] - x[k];
            let y = g_next[k] - g[k];
            ss += metric[k] * s * s;
            sy += metric[k] * s * y;
        }
        trial = if sy > 0.0 { (ss / sy).clamp(1e-12, 1e12) } else { 2.0 * alpha };
        x = next;
        fx = fnext;
        if history.len() == LINE_SEARCH_MEMORY {
            history.pop_front();
        }
        history.push_back(fx);
        g = g_next;
        gnorm2 = norm2(&g);
    }
    Ok(DescentOutcome { x, iterations })
}

/// How the time derivative is paired with test functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dualization {
    /// `L^2(mu)`: `d_t u = w^{-1} div(w |grad u|^{p-2} grad u)`.
    Weighted,
    /// `L^2(dx)`: `d_t u = div(w |grad u|^{p-2} grad u)`.
    Lebesgue,
}

#[derive(Debug, Clone)]
pub struct EvolutionProblem {
    pub p: f64,
    pub spec: WeightSpec,
    pub u0: GridFunction,
    pub horizon: f64,
    pub step: f64,
    pub dualization: Dualization,
    pub solver: SolverSettings,
}

impl EvolutionProblem {
    pub fn new(
        p: f64,
        spec: WeightSpec,
        u0: GridFunction,
        horizon: f64,
        step: f64,
        dualization: Dualization,
        solver: SolverSettings,
    ) -> Result<Self> {
        let problem = EvolutionProblem {
            p,
            spec,
            u0,
            horizon,
            step,
            dualization,
            solver,
        };
        problem.validate()?;
        Ok(problem)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p >= 2.0 && self.p.is_finite()) {
            return Err(Error::param("p", format!("must be >= 2, got {}", self.p)));
        }
        self.spec.validate()?;
        if self.spec.dim != self.u0.grid().dim() {
            return Err(Error::param("u0", "grid dimension differs from the weight"));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::param("T", "must be positive"));
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::param("tau", "must be positive"));
        }
        self.solver.validate()
    }

    /// Number of implicit steps, `ceil(T / tau)`.
    pub fn step_count(&self) -> usize {
        ((self.horizon / self.step) - 1e-9).ceil().max(1.0) as usize
    }
}

/// A solved time series.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    #[serde(skip)]
    pub states: Vec<GridFunction>,
    pub energies: Vec<f64>,
    /// Means in the metric of the dualization.
    pub means: Vec<f64>,
    /// Inner iterations per step (0 for the initial state).
    pub step_iteration_counts: Vec<usize>,
}

impl Trajectory {
    /// CSV with columns `t,energy,mean,inner_iters`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,energy,mean,inner_iters\n");
        for k in 0..self.times.len() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                fmt12(self.times[k]),
                fmt12(self.energies[k]),
                fmt12(self.means[k]),
                self.step_iteration_counts[k]
            ));
        }
        out
    }

    pub fn final_state(&self) -> &GridFunction {
        self.states.last().expect("trajectory holds the initial state")
    }
}

fn prox_in_metric(
    disc: &Discretization,
    metric: &[f64],
    u_prev: &[f64],
    tau: f64,
    settings: &SolverSettings,
) -> Result<DescentOutcome> {
    let value = |v: &[f64]| {
        let dist: f64 = metric
            .iter()
            .zip(v.iter().zip(u_prev))
            .map(|(m, (a, b))| m * (a - b) * (a - b))
            .sum();
        dist / (2.0 * tau) + disc.energy(v)
    };
    let gradient = |v: &[f64]| {
        let mut g = disc.energy_gradient(v);
        for k in 0..g.len() {
            g[k] += metric[k] * (v[k] - u_prev[k]) / tau;
        }
        g
    };
    descend(u_prev.to_vec(), value, gradient, metric, None, settings)
}

/// One implicit Euler step: the minimiser of
/// `v -> (1/(2 tau)) ||v - u_prev||^2 + (1/p) int |grad v|^p w`, the norm being that of the
/// problem's dualization.
pub fn prox_step(u_prev: &GridFunction, problem: &EvolutionProblem) -> Result<GridFunction> {
    problem.validate()?;
    check_same_grid(u_prev.grid(), problem.u0.grid())?;
    let disc = Discretization::new(u_prev.grid(), &problem.spec, problem.p)?;
    let metric = match problem.dualization {
        Dualization::Weighted => disc.weighted_mass.clone(),
        Dualization::Lebesgue => disc.area.clone(),
    };
    let out = prox_in_metric(&disc, &metric, u_prev.values(), problem.step, &problem.solver)?;
    GridFunction::new(*u_prev.grid(), out.x)
}

fn run_flow(problem: &EvolutionProblem, metric_of: impl Fn(&Discretization) -> Vec<f64>) -> Result<Trajectory> {
    let disc = Discretization::new(problem.u0.grid(), &problem.spec, problem.p)?;
    let metric = metric_of(&disc);
    let grid = *problem.u0.grid();
    let mut u = problem.u0.values().to_vec();
    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![problem.u0.clone()],
        energies: vec![disc.energy(&u)],
        means: vec![mean_with(&metric, &u)],
        step_iteration_counts: vec![0],
    };
    for k in 1..=problem.step_count() {
        let out = prox_in_metric(&disc, &metric, &u, problem.step, &problem.solver)?;
        u = out.x;
        traj.times.push(k as f64 * problem.step);
        traj.energies.push(disc.energy(&u));
        traj.means.push(mean_with(&metric, &u));
        traj.step_iteration_counts.push(out.iterations);
        traj.states.push(GridFunction::new(grid, u.clone())?);
    }
    Ok(traj)
}

/// Gradient flow in `L^2(mu)` by repeated proximal steps over `ceil(T/tau)` steps.
pub fn solve_evolution(problem: &EvolutionProblem) -> Result<Trajectory> {
    problem.validate()?;
    if problem.dualization != Dualization::Weighted {
        return Err(Error::param("dualization", "solve_evolution needs the weighted dualization"));
    }
    if !(problem.spec.beta_coeff > 0.0) {
        return Err(Error::param("beta", "weighted dualization needs beta > 0"));
    }
    run_flow(problem, |d| d.weighted_mass.clone())
}

/// Outcome of the integrability gate for the Lebesgue-dualized flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegrabilityGate {
    pub passes: bool,
    /// `int w^{-1/(p-2)}` on the box.
    pub integral: f64,
    /// Same on the box enlarged by 1.5 (same spacing).
    pub integral_enlarged: f64,
    /// Same on the box with the spacing halved.
    pub integral_refined: f64,
    pub domain_change: f64,
    pub mesh_change: f64,
}

/// Relative change allowed in the gate's integrals.
pub const GATE_TOLERANCE: f64 = 1e-6;

/// Integrability gate: `int w^{-1/(p-2)} dx` must converge. Checked by enlarging the box
/// (1.5 R) and halving the spacing; both must change the integral by at most
/// [`GATE_TOLERANCE`] relative.
pub fn integrability_gate(spec: &WeightSpec, grid: &Grid, p: f64) -> Result<IntegrabilityGate> {
    if !(p > 2.0) {
        return Err(Error::param("p", format!("gate is defined for p > 2, got {p}")));
    }
    let integral_on = |g: &Grid| -> Result<f64> {
        let f = crate::grid::sample_field(g, |x| (-spec.log_weight(x) / (p - 2.0)).exp());
        quadrature(&f, None)
    };
    let integral = integral_on(grid)?;
    let integral_enlarged = integral_on(&grid.enlarge(1.5)?)?;
    let integral_refined = integral_on(&grid.refine())?;
    let rel = |a: f64, b: f64| {
        if a.is_finite() && b.is_finite() {
            (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
        } else {
            f64::INFINITY
        }
    };
    let domain_change = rel(integral_enlarged, integral);
    let mesh_change = rel(integral_refined, integral);
    Ok(IntegrabilityGate {
        passes: domain_change <= GATE_TOLERANCE && mesh_change <= GATE_TOLERANCE,
        integral,
        integral_enlarged,
        integral_refined,
        domain_change,
        mesh_change,
    })
}

/// Gradient flow with the time derivative paired in `L^2(dx)`. Requires `p > 2` and a
/// passing [`integrability_gate`]; `beta < 0` is allowed here.
pub fn solve_evolution_lebesgue(problem: &EvolutionProblem) -> Result<Trajectory> {
    problem.validate()?;
    if problem.dualization != Dualization::Lebesgue {
        return Err(Error::param("dualization", "expected the lebesgue dualization"));
    }
    let gate = integrability_gate(&problem.spec, problem.u0.grid(), problem.p)?;
    if !gate.passes {
        return Err(Error::IntegrabilityGate(format!(
            "int w^(-1/(p-2)) dx diverges: {} on the box, {} on the 1.5x box (relative change {:e}); \
             mesh change {:e}",
            gate.integral, gate.integral_enlarged, gate.domain_change, gate.mesh_change
        )));
    }
    run_flow(problem, |d| d.area.clone())
}

#[derive(Debug, Clone)]
pub struct StationarySolution {
    pub u: GridFunction,
    /// `||A(u) - P f||_{L^2(mu)}` with `P` the mean-zero projection.
    pub residual: f64,
    pub iterations: usize,
}

/// Relative tolerance on `|int f dmu| / int |f| dmu` for [`solve_stationary`].
pub const COMPATIBILITY_TOLERANCE: f64 = 1e-8;

/// Minimiser of `E(u) - int f u dmu` over mean-zero grid functions.
pub fn solve_stationary(
    f: &GridFunction,
    spec: &WeightSpec,
    p: f64,
    settings: &SolverSettings,
) -> Result<StationarySolution> {
    if !(p >= 2.0) {
        return Err(Error::param("p", format!("must be >= 2, got {p}")));
    }
    settings.validate()?;
    let disc = Discretization::new(f.grid(), spec, p)?;
    let mass = disc.weighted_mass.clone();
    let total: f64 = mass.iter().sum();
    let mean_f: f64 = mass.iter().zip(f.values()).map(|(m, v)| m * v).sum();
    let abs_f: f64 = mass.iter().zip(f.values()).map(|(m, v)| m * v.abs()).sum();
    if mean_f.abs() > COMPATIBILITY_TOLERANCE * abs_f.max(f64::MIN_POSITIVE) && mean_f != 0.0 {
        return Err(Error::IncompatibleSource {
            mean: mean_f,
            tol: COMPATIBILITY_TOLERANCE * abs_f,
        });
    }
    let fbar = mean_f / total;
    let projected_f: Vec<f64> = f.values().iter().map(|v| v - fbar).collect();
    let project = |g: &mut [f64]| {
        let m = mean_with(&mass, g);
        g.iter_mut().for_each(|v| *v -= m);
    };
    let value = |u: &[f64]| {
        disc.energy(u)
            - mass
                .iter()
                .zip(u.iter().zip(&projected_f))
                .map(|(m, (a, b))| m * a * b)
                .sum::<f64>()
    };
    let gradient = |u: &[f64]| {
        let mut g = disc.energy_gradient(u);
        for k in 0..g.len() {
            g[k] -= mass[k] * projected_f[k];
        }
        g
    };
    let out = descend(
        vec![0.0; f.grid().len()],
        value,
        gradient,
        &mass,
        Some(&project),
        settings,
    )?;
    let a = disc.operator(&out.x);
    let residual = mass
        .iter()
        .zip(a.iter().zip(&projected_f))
        .map(|(m, (x, y))| m * (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    Ok(StationarySolution {
        u: GridFunction::new(*f.grid(), out.x)?,
        residual,
        iterations: out.iterations,
    })
}

/// Relative `L^2(mu)` difference, on the original box, between the final states of the
/// flow on the box and on the box enlarged by 1.5 (same spacing).
pub fn box_sensitivity(
    spec: &WeightSpec,
    p: f64,
    grid: &Grid,
    u0: impl Fn(&[f64]) -> f64,
    horizon: f64,
    step: f64,
    solver: SolverSettings,
) -> Result<f64> {
    let solve = |g: &Grid| {
        let problem = EvolutionProblem::new(
            p,
            spec.clone(),
            crate::grid::sample_field(g, &u0),
            horizon,
            step,
            Dualization::Weighted,
            solver,
        )?;
        solve_evolution(&problem)
    };
    let small = solve(grid)?;
    let big_grid = grid.enlarge(1.5)?;
    let big = solve(&big_grid)?;
    let offset = (big_grid.nodes_per_axis() - grid.nodes_per_axis()) / 2;
    let disc = Discretization::new(grid, spec, p)?;
    let (mut diff, mut norm) = (0.0, 0.0);
    for k in 0..grid.len() {
        let [i, j] = grid.multi_index(k);
        let kb = match grid.dim() {
            1 => i + offset,
            _ => big_grid.flat_index([i + offset, j + offset]),
        };
        let a = small.final_state().values()[k];
        let b = big.final_state().values()[kb];
        diff += disc.weighted_mass[k] * (a - b) * (a - b);
        norm += disc.weighted_mass[k] * a * a;
    }
    Ok((diff / norm.max(f64::MIN_POSITIVE)).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::sample_field;
    use std::f64::consts::PI;

    fn line(r: f64, n: usize) -> Grid {
        Grid::new(1, r, n).unwrap()
    }

    #[test]
    fn energy_examples() {
        let g = line(6.0, 601);
        let spec = WeightSpec::gaussian(1);
        assert_eq!(energy(&GridFunction::constant(g, 2.0), &spec, 2.0).unwrap(), 0.0);
        let x = sample_field(&g, |x| x[0]);
        assert!((energy(&x, &spec, 2.0).unwrap() - PI.sqrt() / 2.0).abs() < 1e-9);
        assert!((energy(&x, &spec, 4.0).unwrap() - PI.sqrt() / 4.0).abs() < 1e-9);
    }

    #[test]
    fn energy_with_source_examples() {
        let g = line(6.0, 601);
        let spec = WeightSpec::gaussian(1);
        let x = sample_field(&g, |x| x[0]);
        let zero = GridFunction::zeros(g);
        assert_eq!(
            energy_with_source(&x, &zero, &spec, 2.0).unwrap(),
            energy(&x, &spec, 2.0).unwrap()
        );
        assert_eq!(energy_with_source(&zero, &x, &spec, 2.0).unwrap(), 0.0);
        let two_x = x.scale(2.0);
        let v = energy_with_source(&x, &two_x, &spec, 2.0).unwrap();
        assert!((v + PI.sqrt() / 2.0).abs() < 1e-6, "{v}");
    }

    #[test]
    fn operator_on_linear_function_is_drift() {
        let spec = WeightSpec::gaussian(1);
        let err = |n: usize| {
            let g = line(6.0, n);
            let a = apply_operator(&sample_field(&g, |x| x[0]), &spec, 2.0).unwrap();
            (0..g.len())
                .filter(|&k| g.coord(k).abs() <= 4.0)
                .map(|k| (a.values()[k] - 2.0 * g.coord(k)).abs())
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(301), err(601));
        assert!(e2 < 1e-2 && (3.5..=4.5).contains(&(e1 / e2)), "{e1} {e2}");
        let c = apply_operator(&GridFunction::constant(line(6.0, 101), 1.0), &spec, 3.0).unwrap();
        assert!(c.max_abs() < 1e-12);
    }

    #[test]
    fn energy_gradient_matches_finite_differences() {
        let g = Grid::new(2, 1.0, 7).unwrap();
        let spec = WeightSpec::gaussian(2);
        for p in [2.0, 3.0, 4.0] {
            let disc = Discretization::new(&g, &spec, p).unwrap();
            let u: Vec<f64> = (0..g.len()).map(|k| ((k * 37 % 11) as f64 - 5.0) / 7.0).collect();
            let grad = disc.energy_gradient(&u);
            for k in [0, 8, 24, 48] {
                let h = 1e-6;
                let mut up = u.clone();
                let mut um = u.clone();
                up[k] += h;
                um[k] -= h;
                let fd = (disc.energy(&up) - disc.energy(&um)) / (2.0 * h);
                assert!((fd - grad[k]).abs() < 1e-6 * (1.0 + fd.abs()), "p={p} k={k}");
            }
        }
    }

    #[test]
    fn lumped_masses_integrate_constants_exactly() {
        for g in [line(2.0, 11), Grid::new(2, 2.0, 11).unwrap()] {
            let disc = Discretization::new(&g, &WeightSpec::radial(0.0, 2.0, g.dim()).unwrap(), 2.0)
                .unwrap();
            let total: f64 = disc.area().iter().sum();
            assert!((total - 4f64.powi(g.dim() as i32)).abs() < 1e-12);
        }
    }

    #[test]
    fn prox_step_cases() {
        let g = line(6.0, 301);
        let spec = WeightSpec::gaussian(1);
        let problem = |u0: GridFunction, tau: f64| {
            EvolutionProblem::new(2.0, spec.clone(), u0, tau, tau, Dualization::Weighted, SolverSettings::default())
                .unwrap()
        };
        let c = GridFunction::constant(g, 1.5);
        assert_eq!(prox_step(&c, &problem(c.clone(), 1e-2)).unwrap(), c);

        let x = sample_field(&g, |x| x[0]);
        let tau = 1e-2;
        let pr = problem(x.clone(), tau);
        let next = prox_step(&x, &pr).unwrap();
        for k in 0..g.len() {
            if g.coord(k).abs() <= 3.0 {
                let expect = g.coord(k) / (1.0 + 2.0 * tau);
                assert!((next.values()[k] - expect).abs() < 1e-3, "{}", g.coord(k));
            }
        }
        let disc = Discretization::new(&g, &spec, 2.0).unwrap();
        let dist: f64 = (0..g.len())
            .map(|k| disc.weighted_mass()[k] * (next.values()[k] - x.values()[k]).powi(2))
            .sum();
        assert!(dist / (2.0 * tau) + disc.energy(next.values()) <= disc.energy(x.values()));
    }

    #[test]
    fn not_converged_carries_last_iterate() {
        let g = line(6.0, 301);
        let x = sample_field(&g, |x| x[0]);
        let settings = SolverSettings { max_iters: 2, ..SolverSettings::default() };
        let pr = EvolutionProblem::new(2.0, WeightSpec::gaussian(1), x.clone(), 0.1, 0.1, Dualization::Weighted, settings)
            .unwrap();
        match prox_step(&x, &pr) {
            Err(Error::NotConverged { iterations, last_iterate, .. }) => {
                assert_eq!(iterations, 2);
                assert_eq!(last_iterate.len(), g.len());
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn problem_validation() {
        let g = line(2.0, 21);
        let u0 = GridFunction::zeros(g);
        let s = SolverSettings::default();
        let spec = WeightSpec::gaussian(1);
        assert!(EvolutionProblem::new(1.5, spec.clone(), u0.clone(), 1.0, 0.1, Dualization::Weighted, s).is_err());
        assert!(EvolutionProblem::new(2.0, spec.clone(), u0.clone(), 0.0, 0.1, Dualization::Weighted, s).is_err());
        let neg = WeightSpec::radial(-1.0, 2.0, 1).unwrap();
        let pr = EvolutionProblem::new(3.0, neg, u0, 0.1, 0.1, Dualization::Weighted, s).unwrap();
        assert!(solve_evolution(&pr).is_err());
    }

    #[test]
    fn constant_initial_datum_is_stationary() {
        let g = line(3.0, 61);
        let c = GridFunction::constant(g, -0.7);
        let pr = EvolutionProblem::new(3.0, WeightSpec::gaussian(1), c.clone(), 0.05, 0.01, Dualization::Weighted, SolverSettings::default())
            .unwrap();
        let t = solve_evolution(&pr).unwrap();
        assert_eq!(t.states.len(), 6);
        assert!(t.states.iter().all(|s| s == &c));
        assert!(t.to_csv().starts_with("t,energy,mean,inner_iters\n"));
    }

    #[test]
    fn lebesgue_gate_and_flow() {
        let up = WeightSpec::radial(-1.0, 2.0, 1).unwrap();
        assert!(integrability_gate(&up, &line(6.0, 301), 3.0).unwrap().passes);
        let down = WeightSpec::gaussian(1);
        assert!(!integrability_gate(&down, &line(6.0, 301), 3.0).unwrap().passes);

        // p = 2.5: w^(-1/(p-2)) = exp(-2x^2) has converged by R = 3
        let g = line(3.0, 61);
        let s = SolverSettings::default();
        let c = GridFunction::constant(g, 2.0);
        let pr = EvolutionProblem::new(2.5, up.clone(), c.clone(), 0.02, 0.01, Dualization::Lebesgue, s)
            .unwrap();
        let t = solve_evolution_lebesgue(&pr).unwrap();
        assert!(t.states.iter().all(|s| s == &c));

        let bumpy = sample_field(&g, |x| (2.0 * x[0]).sin());
        let pr = EvolutionProblem::new(2.5, up, bumpy, 0.05, 0.01, Dualization::Lebesgue, s).unwrap();
        let t = solve_evolution_lebesgue(&pr).unwrap();
        assert!(t.energies.windows(2).all(|e| e[1] <= e[0] * (1.0 + 1e-12)));
        assert!(t.means.windows(2).all(|m| (m[1] - m[0]).abs() < 1e-8));
    }

    #[test]
    fn stationary_cases() {
        let g = line(6.0, 241);
        let spec = WeightSpec::gaussian(1);
        let s = SolverSettings::default();
        let zero = solve_stationary(&GridFunction::zeros(g), &spec, 2.0, &s).unwrap();
        assert_eq!(zero.u.max_abs(), 0.0);
        assert!(solve_stationary(&GridFunction::constant(g, 1.0), &spec, 2.0, &s).is_err());

        let f = sample_field(&g, |x| 2.0 * x[0]);
        let sol = solve_stationary(&f, &spec, 2.0, &s).unwrap();
        for k in 0..g.len() {
            if g.coord(k).abs() <= 3.0 {
                assert!((sol.u.values()[k] - g.coord(k)).abs() < 5e-3, "{}", g.coord(k));
            }
        }
    }
}
