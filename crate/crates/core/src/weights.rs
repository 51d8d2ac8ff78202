//! Weights of the form `w(x) = exp(-beta |x|^q - W(x) - V(x))` with `W`, `V` drawn from a
//! closed-form catalog, and the diagnostics run on them: admissibility hypotheses,
//! property (D), condition (Reg), doubling and Muckenhoupt ratios.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{self, ball_integral, ball_volume, fmt12, Grid, GridFunction};
use crate::quad::{tanh_sinh, trapezoid_periodic};

/// One term of a potential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Term {
    Constant { c: f64 },
    /// `c |x|^s`, `s >= 1`.
    PowerAbs { c: f64, s: f64 },
    /// `c |x|^2`.
    QuadraticForm { c: f64 },
    /// `c cos(<k, x>)`.
    Cosine { c: f64, k: Vec<f64> },
}

impl Term {
    fn validate(&self, dim: usize) -> Result<()> {
        let finite = |name: &'static str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::param(name, format!("term coefficient {v} is not finite")))
            }
        };
        match self {
            Term::Constant { c } | Term::QuadraticForm { c } => finite("c", *c),
            Term::PowerAbs { c, s } => {
                finite("c", *c)?;
                if !(s.is_finite() && *s >= 1.0) {
                    return Err(Error::param("s", format!("power_abs exponent must be >= 1, got {s}")));
                }
                Ok(())
            }
            Term::Cosine { c, k } => {
                finite("c", *c)?;
                if k.len() != dim || k.iter().any(|v| !v.is_finite()) {
                    return Err(Error::param(
                        "k",
                        format!("cosine wave vector must have {dim} finite components"),
                    ));
                }
                Ok(())
            }
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            Term::Constant { c } => *c,
            Term::PowerAbs { c, s } => c * grid::norm(x).powf(*s),
            Term::QuadraticForm { c } => c * x.iter().map(|v| v * v).sum::<f64>(),
            Term::Cosine { c, k } => c * dot(k, x).cos(),
        }
    }

    /// Adds the gradient of the term at `x` into `out`.
    fn add_gradient(&self, x: &[f64], out: &mut [f64]) {
        match self {
            Term::Constant { .. } => {}
            Term::PowerAbs { c, s } => {
                // c s |x|^{s-1} sign(x), sign(0) = 0
                let r = grid::norm(x);
                if r > 0.0 {
                    let f = c * s * r.powf(s - 2.0);
                    for (o, xi) in out.iter_mut().zip(x) {
                        *o += f * xi;
                    }
                }
            }
            Term::QuadraticForm { c } => {
                for (o, xi) in out.iter_mut().zip(x) {
                    *o += 2.0 * c * xi;
                }
            }
            Term::Cosine { c, k } => {
                let s = -c * dot(k, x).sin();
                for (o, ki) in out.iter_mut().zip(k) {
                    *o += s * ki;
                }
            }
        }
    }

    fn is_concave(&self) -> bool {
        match self {
            Term::Constant { .. } => true,
            Term::PowerAbs { c, .. } | Term::QuadraticForm { c } => *c <= 0.0,
            Term::Cosine { c, .. } => *c == 0.0,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A finite sum of catalog terms.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PotentialExpr {
    pub terms: Vec<Term>,
}

impl PotentialExpr {
    pub fn new(terms: Vec<Term>) -> Self {
        PotentialExpr { terms }
    }

    pub fn zero() -> Self {
        PotentialExpr::default()
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        self.terms.iter().try_for_each(|t| t.validate(dim))
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|t| t.value(x)).sum()
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        for t in &self.terms {
            t.add_gradient(x, &mut g);
        }
        g
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|t| match t {
            Term::Constant { c }
            | Term::PowerAbs { c, .. }
            | Term::QuadraticForm { c }
            | Term::Cosine { c, .. } => *c == 0.0,
        })
    }

    /// Syntactic concavity: every term concave.
    pub fn is_concave(&self) -> bool {
        self.terms.iter().all(Term::is_concave)
    }

    pub fn negated(&self) -> PotentialExpr {
        let terms = self
            .terms
            .iter()
            .map(|t| match t.clone() {
                Term::Constant { c } => Term::Constant { c: -c },
                Term::PowerAbs { c, s } => Term::PowerAbs { c: -c, s },
                Term::QuadraticForm { c } => Term::QuadraticForm { c: -c },
                Term::Cosine { c, k } => Term::Cosine { c: -c, k },
            })
            .collect();
        PotentialExpr { terms }
    }
}

/// A weight evaluation; `clamped` is set when the exact value is not representable and
/// the value was pinned to the smallest positive normal (or the largest finite) float.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightValue {
    pub value: f64,
    pub clamped: bool,
}

/// `w(x) = exp(-beta |x|^q - W(x) - V(x))` on `R^dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightSpec {
    #[serde(rename = "beta")]
    pub beta_coeff: f64,
    #[serde(rename = "q")]
    pub q_exp: f64,
    pub dim: usize,
    #[serde(rename = "W", default)]
    pub potential_w: PotentialExpr,
    #[serde(rename = "V", default)]
    pub potential_v: PotentialExpr,
}

impl WeightSpec {
    pub fn new(
        beta_coeff: f64,
        q_exp: f64,
        dim: usize,
        potential_w: PotentialExpr,
        potential_v: PotentialExpr,
    ) -> Result<Self> {
        let spec = WeightSpec {
            beta_coeff,
            q_exp,
            dim,
            potential_w,
            potential_v,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// `exp(-beta |x|^q)` in dimension `dim`.
    pub fn radial(beta_coeff: f64, q_exp: f64, dim: usize) -> Result<Self> {
        Self::new(beta_coeff, q_exp, dim, PotentialExpr::zero(), PotentialExpr::zero())
    }

    /// The Gaussian `exp(-|x|^2)`.
    pub fn gaussian(dim: usize) -> Self {
        Self::radial(1.0, 2.0, dim).expect("valid")
    }

    pub fn validate(&self) -> Result<()> {
        if !self.beta_coeff.is_finite() {
            return Err(Error::param("beta", "must be finite"));
        }
        if !(self.q_exp.is_finite() && self.q_exp > 1.0) {
            return Err(Error::param("q", format!("must be > 1, got {}", self.q_exp)));
        }
        if self.dim != 1 && self.dim != 2 {
            return Err(Error::param("dim", format!("must be 1 or 2, got {}", self.dim)));
        }
        self.potential_w.validate(self.dim)?;
        self.potential_v.validate(self.dim)
    }

    /// `-beta |x|^q - W(x) - V(x)`.
    pub fn log_weight(&self, x: &[f64]) -> f64 {
        -self.beta_coeff * grid::norm(x).powf(self.q_exp)
            - self.potential_w.value(x)
            - self.potential_v.value(x)
    }

    pub fn eval_weight(&self, x: &[f64]) -> WeightValue {
        clamp_exp(self.log_weight(x))
    }

    /// Weight value with the clamping policy applied.
    pub fn weight(&self, x: &[f64]) -> f64 {
        self.eval_weight(x).value
    }

    /// `phi = w^{1/p}`.
    pub fn eval_phi(&self, x: &[f64], p: f64) -> Result<WeightValue> {
        if !(p >= 1.0) {
            return Err(Error::param("p", format!("must be >= 1, got {p}")));
        }
        Ok(clamp_exp(self.log_weight(x) / p))
    }

    /// Logarithmic derivative `grad w / w = p grad(phi) / phi`, in closed form.
    pub fn eval_log_drift(&self, x: &[f64]) -> Vec<f64> {
        let mut g = self.potential_w.gradient(x);
        for (a, b) in g.iter_mut().zip(self.potential_v.gradient(x)) {
            *a = -*a - b;
        }
        let r = grid::norm(x);
        if r > 0.0 {
            let f = self.beta_coeff * self.q_exp * r.powf(self.q_exp - 2.0);
            for (a, xi) in g.iter_mut().zip(x) {
                *a -= f * xi;
            }
        }
        g
    }

    /// Node samples of the weight.
    pub fn sample(&self, grid: &Grid) -> GridFunction {
        grid::sample_field(grid, |x| self.weight(x))
    }

    /// Node samples of one component of the logarithmic drift.
    pub fn sample_log_drift(&self, grid: &Grid, axis: usize) -> GridFunction {
        grid::sample_field(grid, |x| self.eval_log_drift(x)[axis])
    }
}

fn clamp_exp(e: f64) -> WeightValue {
    let lo = f64::MIN_POSITIVE.ln();
    let hi = f64::MAX.ln();
    if e < lo || e.is_nan() {
        WeightValue {
            value: f64::MIN_POSITIVE,
            clamped: true,
        }
    } else if e > hi {
        WeightValue {
            value: f64::MAX,
            clamped: true,
        }
    } else {
        WeightValue {
            value: e.exp(),
            clamped: false,
        }
    }
}

/// Sample box `[-a, a]^dim` for the lattice fits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleBox {
    pub half_width: f64,
    pub dim: usize,
}

impl SampleBox {
    pub fn new(half_width: f64, dim: usize) -> Self {
        SampleBox { half_width, dim }
    }

    /// A uniform lattice with at least `n_samples` points and an odd count per axis.
    /// `scale = 2` gives the lattice on the doubled box with the same spacing, which
    /// contains the unscaled one.
    fn lattice(&self, n_samples: usize, scale: usize) -> Vec<Point2> {
        let per_axis = match self.dim {
            1 => n_samples,
            _ => (n_samples as f64).sqrt().ceil() as usize,
        };
        let per_axis = per_axis.max(3) | 1;
        let step = 2.0 * self.half_width / (per_axis - 1) as f64;
        let half = (per_axis / 2) * scale;
        let coords: Vec<f64> = (0..=2 * half)
            .map(|i| (i as f64 - half as f64) * step)
            .collect();
        match self.dim {
            1 => coords.iter().map(|&x| [x, 0.0]).collect(),
            _ => {
                let mut pts = Vec::with_capacity(coords.len() * coords.len());
                for &x in &coords {
                    for &y in &coords {
                        pts.push([x, y]);
                    }
                }
                pts
            }
        }
    }
}

type Point2 = [f64; 2];

/// Lattices and acceptance rules of the constant fits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub delta_step: f64,
    pub delta_max: f64,
    pub c1_step: f64,
    pub c1_max: f64,
    /// Upper bound on the fitted additive constants `c2` and `gamma`.
    pub cap: f64,
    /// A candidate is accepted when its additive constant grows by at most
    /// `stability_tol * (1 + |value|)` as the sample box is doubled.
    pub stability_tol: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            delta_step: 0.01,
            delta_max: 100.0,
            c1_step: 0.05,
            c1_max: 20.0,
            cap: 1e6,
            stability_tol: 1e-4,
        }
    }
}

fn lattice_values(step: f64, start: f64, max: f64) -> impl Iterator<Item = f64> {
    let count = ((max - start) / step).round() as usize;
    (0..=count).map(move |i| start + i as f64 * step)
}

/// Outcome of a property-(D) fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum PropertyDFit {
    Fitted { c1: f64, c2: f64 },
    Failed { reason: String },
}

impl PropertyDFit {
    pub fn constants(&self) -> Option<(f64, f64)> {
        match self {
            PropertyDFit::Fitted { c1, c2 } => Some((*c1, *c2)),
            PropertyDFit::Failed { .. } => None,
        }
    }
}

/// Smallest lattice `c1 >= 1` with `F(2x) <= c1 F(x) + c2` on the samples, where
/// `c2 = max(F(2x) - c1 F(x))` must stay put when the sample box is doubled and stay
/// below the cap.
pub fn check_property_d(
    f: impl Fn(&[f64]) -> f64,
    sample_box: SampleBox,
    n_samples: usize,
    config: &FitConfig,
) -> Result<PropertyDFit> {
    if n_samples < 100 {
        return Err(Error::param("n_samples", format!("need at least 100, got {n_samples}")));
    }
    let dim = sample_box.dim;
    let inner = sample_box.lattice(n_samples, 1);
    let outer = sample_box.lattice(n_samples, 2);
    let excess = |pts: &[Point2], c1: f64| {
        pts.iter()
            .map(|p| {
                let x = &p[..dim];
                let twice: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
                f(&twice) - c1 * f(x)
            })
            .fold(f64::NEG_INFINITY, f64::max)
    };
    for c1 in lattice_values(config.c1_step, 1.0, config.c1_max) {
        let near = excess(&inner, c1);
        let far = excess(&outer, c1);
        if far <= near + config.stability_tol * (1.0 + near.abs()) && far <= config.cap {
            return Ok(PropertyDFit::Fitted { c1, c2: far });
        }
    }
    Ok(PropertyDFit::Failed {
        reason: format!(
            "no c1 in [1, {}] gives a box-stable c2 below {}",
            config.c1_max, config.cap
        ),
    })
}

/// Property (D) of `-potential`.
pub fn check_property_d_potential(
    potential: &PotentialExpr,
    sample_box: SampleBox,
    n_samples: usize,
    config: &FitConfig,
) -> Result<PropertyDFit> {
    check_property_d(|x| -potential.value(x), sample_box, n_samples, config)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub grad_bound_ok: bool,
    pub delta: f64,
    pub gamma: f64,
    /// `beta * q`, the strict upper bound for `delta`.
    pub beta_q: f64,
    pub osc_v: f64,
    /// Whether `max V - min V` stayed put when the sample box was doubled.
    pub osc_v_bounded: bool,
    pub property_d_w: PropertyDFit,
    pub property_d_v: PropertyDFit,
    pub reg_ok: bool,
    pub diff_ok: bool,
}

impl AdmissibilityReport {
    /// All hypotheses of the admissibility theorem hold on the samples.
    pub fn passes(&self) -> bool {
        self.grad_bound_ok
            && self.osc_v_bounded
            && self.property_d_w.constants().is_some()
            && self.property_d_v.constants().is_some()
            && self.reg_ok
            && self.diff_ok
    }
}

/// Fits `|grad W(x)| <= delta |x|^{q-1} + gamma`, measures `osc V`, and runs property (D)
/// on `-W` and `-V`.
pub fn check_admissibility_hypotheses(
    spec: &WeightSpec,
    sample_box: SampleBox,
    n_samples: usize,
    config: &FitConfig,
) -> Result<AdmissibilityReport> {
    spec.validate()?;
    if !(spec.beta_coeff > 0.0) {
        return Err(Error::param("beta", "admissibility requires beta > 0"));
    }
    if sample_box.dim != spec.dim {
        return Err(Error::param("sample_box", "dimension differs from the weight"));
    }
    let dim = spec.dim;
    let inner = sample_box.lattice(n_samples, 1);
    let outer = sample_box.lattice(n_samples, 2);
    let gamma_for = |pts: &[Point2], delta: f64| {
        pts.iter()
            .map(|p| {
                let x = &p[..dim];
                grid::norm(&spec.potential_w.gradient(x))
                    - delta * grid::norm(x).powf(spec.q_exp - 1.0)
            })
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let mut fit = None;
    for delta in lattice_values(config.delta_step, 0.0, config.delta_max) {
        let near = gamma_for(&inner, delta);
        let far = gamma_for(&outer, delta);
        if far <= near + config.stability_tol * (1.0 + near.abs()) && far <= config.cap {
            fit = Some((delta, far.max(0.0)));
            break;
        }
    }
    let beta_q = spec.beta_coeff * spec.q_exp;
    let (delta, gamma, grad_bound_ok) = match fit {
        Some((d, g)) => (d, g, d < beta_q),
        None => (f64::INFINITY, f64::INFINITY, false),
    };
    let osc = |pts: &[Point2]| {
        let (lo, hi) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            let v = spec.potential_v.value(&p[..dim]);
            (lo.min(v), hi.max(v))
        });
        hi - lo
    };
    let osc_v = osc(&inner);
    let osc_v_far = osc(&outer);
    Ok(AdmissibilityReport {
        grad_bound_ok,
        delta,
        gamma,
        beta_q,
        osc_v,
        osc_v_bounded: osc_v_far <= osc_v + config.stability_tol * (1.0 + osc_v),
        property_d_w: check_property_d_potential(&spec.potential_w, sample_box, n_samples, config)?,
        property_d_v: check_property_d_potential(&spec.potential_v, sample_box, n_samples, config)?,
        // every catalog weight is smooth and strictly positive
        reg_ok: true,
        diff_ok: true,
    })
}

/// Result of the (Reg) check on sampled weight data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegReport {
    pub ok: bool,
    /// Lower corner of the worst unit-scale subcell.
    pub worst_cell: Vec<f64>,
    /// Growth of the worst subcell's value over two halvings of the spacing.
    pub worst_growth: f64,
    pub nonpositive_nodes: usize,
}

/// Divergence factor used by [`check_reg`] unless overridden.
pub const DEFAULT_DIVERGENCE_FACTOR: f64 = 10.0;

/// Condition (Reg) on sampled weight data.
///
/// For `p > 1` the integral of `phi^{-q} = w^{-1/(p-1)}` over each unit-scale subcell is
/// computed on the grid and on a coarsened grid (stride 4, or 2 when 4 does not divide
/// `n - 1`); the growth is normalised to two halvings of the spacing and compared with
/// `divergence_factor`. Nodes where the weight vanishes are left out of the sums, so an
/// integrable singularity converges and a non-integrable one blows up under refinement.
/// For `p = 1` the subcell maximum of `1/w` is compared instead.
pub fn check_reg(weight_field: &GridFunction, p: f64, divergence_factor: f64) -> Result<RegReport> {
    if !(p >= 1.0) {
        return Err(Error::param("p", format!("must be >= 1, got {p}")));
    }
    let g = *weight_field.grid();
    if weight_field.values().iter().any(|v| *v < 0.0) {
        return Err(Error::param("weight_field", "weight must be nonnegative"));
    }
    let stride = if (g.nodes_per_axis() - 1).is_multiple_of(4) && g.coarsen(4).is_some() {
        4
    } else {
        2
    };
    let coarse = weight_field
        .restrict(stride)
        .ok_or_else(|| Error::param("weight_field", "grid too coarse for a refinement check"))?;

    let cells_per_axis = ((2.0 * g.half_width()).round() as usize).max(1);
    let cell_len = 2.0 * g.half_width() / cells_per_axis as f64;
    let cell_of = |x: f64| (((x + g.half_width()) / cell_len) as usize).min(cells_per_axis - 1);
    let n_cells = cells_per_axis.pow(g.dim() as u32);

    let accumulate = |field: &GridFunction| {
        let grid = field.grid();
        let q = grid.trapezoid_weights();
        let mut acc = vec![0.0; n_cells];
        for k in 0..grid.len() {
            let w = field.values()[k];
            if w <= 0.0 {
                continue;
            }
            let pnt = grid.point(k);
            let mut cell = cell_of(pnt[0]);
            if grid.dim() == 2 {
                cell = cell * cells_per_axis + cell_of(pnt[1]);
            }
            if p > 1.0 {
                acc[cell] += q[k] * w.powf(-1.0 / (p - 1.0));
            } else {
                acc[cell] = f64::max(acc[cell], 1.0 / w);
            }
        }
        acc
    };
    let fine = accumulate(weight_field);
    let rough = accumulate(&coarse);
    let halvings = (stride as f64).log2();
    let mut worst = (0usize, 1.0f64);
    for c in 0..n_cells {
        let growth = if rough[c] > 0.0 {
            (fine[c] / rough[c]).powf(2.0 / halvings)
        } else if fine[c] > 0.0 {
            f64::INFINITY
        } else {
            1.0
        };
        if growth > worst.1 || (growth.is_infinite() && worst.1.is_finite()) {
            worst = (c, growth);
        }
    }
    let corner = |c: usize| -g.half_width() + c as f64 * cell_len;
    let worst_cell = match g.dim() {
        1 => vec![corner(worst.0)],
        _ => vec![corner(worst.0 / cells_per_axis), corner(worst.0 % cells_per_axis)],
    };
    let nonpositive_nodes = weight_field.values().iter().filter(|v| **v <= 0.0).count();
    Ok(RegReport {
        ok: worst.1 <= divergence_factor && !(p == 1.0 && nonpositive_nodes > 0),
        worst_cell,
        worst_growth: worst.1,
        nonpositive_nodes,
    })
}

/// A ball `B(center, radius)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: &[f64], radius: f64) -> Self {
        Ball {
            center: center.to_vec(),
            radius,
        }
    }

    fn inside_box(&self, grid: &Grid, scale: f64) -> bool {
        self.center.len() == grid.dim()
            && self
                .center
                .iter()
                .all(|c| c.abs() + scale * self.radius <= grid.half_width() * (1.0 + 1e-12))
    }
}

/// One per-ball line of a doubling or Muckenhoupt report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallEntry {
    pub ball: Ball,
    pub value: Option<f64>,
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallReport {
    pub entries: Vec<BallEntry>,
    /// Maximum over the evaluated balls (`C1` for doubling, `K` for Muckenhoupt).
    pub max: f64,
}

impl BallReport {
    fn from_entries(entries: Vec<BallEntry>) -> Self {
        let max = entries
            .iter()
            .filter_map(|e| e.value)
            .fold(f64::NEG_INFINITY, f64::max);
        BallReport { entries, max }
    }

    /// CSV with columns `ball_center,ball_radius,value`; the centre is `;`-separated in 2D
    /// and skipped balls have an empty value.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("ball_center,ball_radius,value\n");
        for e in &self.entries {
            let centre: Vec<String> = e.ball.center.iter().map(|c| fmt12(*c)).collect();
            out.push_str(&format!(
                "{},{},{}\n",
                centre.join(";"),
                fmt12(e.ball.radius),
                e.value.map(fmt12).unwrap_or_default()
            ));
        }
        out
    }
}

/// Ratio `w(2B) / w(B)` per ball, with `2B` the concentric ball of doubled radius.
/// Balls whose double leaves the box are skipped with a warning.
pub fn estimate_doubling(weight_field: &GridFunction, balls: &[Ball]) -> BallReport {
    let g = weight_field.grid();
    let entries = balls
        .iter()
        .map(|b| {
            if !b.inside_box(g, 2.0) {
                return BallEntry {
                    ball: b.clone(),
                    value: None,
                    warning: Some("doubled ball leaves the grid box; skipped".into()),
                };
            }
            let big = ball_integral(weight_field, &b.center, 2.0 * b.radius);
            let small = ball_integral(weight_field, &b.center, b.radius);
            BallEntry {
                ball: b.clone(),
                value: Some(big / small),
                warning: None,
            }
        })
        .collect();
    BallReport::from_entries(entries)
}

/// `(avg_B w) (avg_B w^{-1/(p-1)})^{p-1}` per ball, averages with respect to `dx`.
pub fn estimate_muckenhoupt(weight_field: &GridFunction, p: f64, balls: &[Ball]) -> Result<BallReport> {
    if !(p > 1.0) {
        return Err(Error::param("p", format!("must be > 1, got {p}")));
    }
    let g = weight_field.grid();
    let dual = weight_field.map(|w| w.powf(-1.0 / (p - 1.0)));
    let mut entries = Vec::with_capacity(balls.len());
    for b in balls {
        if !b.inside_box(g, 1.0) {
            entries.push(BallEntry {
                ball: b.clone(),
                value: None,
                warning: Some("ball leaves the grid box; skipped".into()),
            });
            continue;
        }
        for k in grid::nodes_touching_ball(g, &b.center, b.radius) {
            let v = weight_field.values()[k];
            if !(v > 0.0) {
                let idx = g.multi_index(k);
                return Err(Error::NonPositiveWeight {
                    node: idx[..g.dim()].to_vec(),
                    value: v,
                });
            }
        }
        let vol = ball_volume(g.dim(), b.radius);
        let avg_w = ball_integral(weight_field, &b.center, b.radius) / vol;
        let avg_dual = ball_integral(&dual, &b.center, b.radius) / vol;
        entries.push(BallEntry {
            ball: b.clone(),
            value: Some(avg_w * avg_dual.powf(p - 1.0)),
            warning: None,
        });
    }
    Ok(BallReport::from_entries(entries))
}

/// The Muckenhoupt ratio of a closed-form weight, with ball integrals taken in polar
/// coordinates about the centre by double-exponential quadrature in the radius. This
/// resolves weights that vanish or blow up (integrably) at the ball centre, which a
/// node-sampled field cannot represent.
pub fn estimate_muckenhoupt_analytic(
    weight: impl Fn(&[f64]) -> f64,
    dim: usize,
    p: f64,
    balls: &[Ball],
) -> Result<BallReport> {
    if !(p > 1.0) {
        return Err(Error::param("p", format!("must be > 1, got {p}")));
    }
    if dim != 1 && dim != 2 {
        return Err(Error::param("dim", "must be 1 or 2"));
    }
    let mut entries = Vec::with_capacity(balls.len());
    for b in balls {
        if b.center.len() != dim || !(b.radius > 0.0) {
            return Err(Error::param("balls", "ball dimension or radius invalid"));
        }
        let avg = |g: &dyn Fn(f64) -> f64| ball_average_analytic(&weight, g, &b.center, b.radius);
        let avg_w = avg(&|w| w);
        let avg_dual = avg(&|w| w.powf(-1.0 / (p - 1.0)));
        entries.push(BallEntry {
            ball: b.clone(),
            value: Some(avg_w * avg_dual.powf(p - 1.0)),
            warning: None,
        });
    }
    Ok(BallReport::from_entries(entries))
}

fn ball_average_analytic(
    weight: &impl Fn(&[f64]) -> f64,
    transform: &dyn Fn(f64) -> f64,
    center: &[f64],
    radius: f64,
) -> f64 {
    let dim = center.len();
    let total = match dim {
        1 => tanh_sinh(
            |rho| {
                transform(weight(&[center[0] + rho])) + transform(weight(&[center[0] - rho]))
            },
            0.0,
            radius,
        ),
        _ => trapezoid_periodic(
            |th| {
                let (c, s) = (th.cos(), th.sin());
                tanh_sinh(
                    |rho| rho * transform(weight(&[center[0] + rho * c, center[1] + rho * s])),
                    0.0,
                    radius,
                )
            },
            256,
        ),
    };
    total / ball_volume(dim, radius)
}
