//! Explicit constants for the `|x|^{q-1}` bounds and the Poincaré inequality of
//! `exp(-beta |x|^q - W - V)`, and quadrature verification of the resulting inequalities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{
    self, ball_integral, discrete_gradient, fmt12, magnitude, quadrature_with_error, GridFunction,
};
use crate::weights::{Ball, WeightSpec};

/// Parameters entering the constant chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainInputs {
    pub p: f64,
    pub q: f64,
    pub beta_coeff: f64,
    pub delta: f64,
    pub gamma: f64,
    pub osc_v: f64,
    pub dim: usize,
    /// Splitting radius offset of the `|x|^{q-1}` bound.
    pub eps: f64,
    pub eps0: f64,
    pub eps1: f64,
}

impl ChainInputs {
    /// Defaults `eps = eps1 = 1`, `eps0 = 1/p`.
    pub fn new(p: f64, q: f64, beta_coeff: f64, dim: usize) -> Self {
        ChainInputs {
            p,
            q,
            beta_coeff,
            delta: 0.0,
            gamma: 0.0,
            osc_v: 0.0,
            dim,
            eps: 1.0,
            eps0: 1.0 / p,
            eps1: 1.0,
        }
    }
}

/// Every constant of the chain together with its inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantChain {
    #[serde(rename = "C")]
    pub c: f64,
    #[serde(rename = "D")]
    pub d: f64,
    #[serde(rename = "C_prime")]
    pub c_prime: f64,
    #[serde(rename = "D_prime")]
    pub d_prime: f64,
    /// `D'` with `C * gamma` in place of `gamma`.
    #[serde(rename = "D_prime_c_gamma")]
    pub d_prime_c_gamma: f64,
    pub a_l: f64,
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "C4")]
    pub c4: f64,
    /// Certified Poincaré constant.
    #[serde(rename = "c")]
    pub poincare: f64,
    /// Whether `q = p/(p-1)`, the relation under which the potential bound is stated.
    pub q_is_conjugate: bool,
    pub inputs: ChainInputs,
}

/// `C = 1/(beta q)` and `D = (1+eps)^{q-1} + (1/eps + d - 1) C`, the smallest admissible
/// constants of `int |f||x|^{q-1} dmu <= C int |grad f| dmu + D int |f| dmu`.
pub fn constants_xq(beta_coeff: f64, q: f64, dim: usize, eps: f64) -> Result<(f64, f64)> {
    if !(beta_coeff > 0.0) {
        return Err(Error::param("beta", "must be positive"));
    }
    if !(q > 1.0) {
        return Err(Error::param("q", "must be > 1"));
    }
    if !(eps > 0.0) {
        return Err(Error::param("eps", "must be positive"));
    }
    let c = 1.0 / (beta_coeff * q);
    let d = (1.0 + eps).powf(q - 1.0) + (1.0 / eps + dim as f64 - 1.0) * c;
    Ok((c, d))
}

/// Constants `(C', D', D'_{C gamma})` of
/// `int |f|^p |x|^{q-1} dnu <= C' int |grad f|^p dnu + D' int |f|^p dnu`,
/// `dnu = exp(-W - V) dmu`, with `C = 1/(beta q)`:
///
/// `C' = eps0 p C e^{2 osc V} / (1 - C delta)` and
/// `D' = e^{2 osc V} ((1+eps1)^{q-1} + (1/eps1 + d - 1) C + (eps0 p)^{-q/p} C p / q + gamma) / (1 - C delta)`.
/// The third value replaces `gamma` by `C gamma`.
pub fn constants_potential(inputs: &ChainInputs) -> Result<(f64, f64, f64)> {
    let ChainInputs {
        p,
        q,
        beta_coeff,
        delta,
        gamma,
        osc_v,
        dim,
        eps0,
        eps1,
        ..
    } = *inputs;
    if !(p > 1.0) {
        return Err(Error::param("p", "must be > 1"));
    }
    if !(eps0 > 0.0 && eps1 > 0.0) {
        return Err(Error::param("eps0", "eps0 and eps1 must be positive"));
    }
    if !(delta >= 0.0 && gamma >= 0.0 && osc_v >= 0.0) {
        return Err(Error::param("delta", "delta, gamma and osc V must be nonnegative"));
    }
    let (c, _) = constants_xq(beta_coeff, q, dim, eps1)?;
    if delta * c >= 1.0 {
        return Err(Error::Blowup(format!(
            "delta = {delta} is not below 1/C = {}",
            1.0 / c
        )));
    }
    let scale = (2.0 * osc_v).exp() / (1.0 - c * delta);
    let c_prime = scale * eps0 * p * c;
    let base = (1.0 + eps1).powf(q - 1.0)
        + (1.0 / eps1 + dim as f64 - 1.0) * c
        + (eps0 * p).powf(-q / p) * c * p / q;
    Ok((c_prime, scale * (base + gamma), scale * (base + c * gamma)))
}

/// Number of lattice samples used for the `W`, `V` part of `a_L`.
pub const A_L_SAMPLES: usize = 10_000;

/// `osc` over `B(0, L^{p-1})` of `-beta |x|^q - W - V`. Exact when `W = V = 0`
/// (`beta L^{q(p-1)}`); otherwise sampled on a lattice of about [`A_L_SAMPLES`] points
/// that contains the centre and points of the bounding sphere.
pub fn oscillation_on_ball(spec: &WeightSpec, p: f64, l: f64) -> f64 {
    let rho = l.powf(p - 1.0);
    if spec.potential_w.is_zero() && spec.potential_v.is_zero() {
        return spec.beta_coeff.abs() * rho.powf(spec.q_exp);
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut visit = |x: &[f64]| {
        let v = spec.log_weight(x);
        lo = lo.min(v);
        hi = hi.max(v);
    };
    match spec.dim {
        1 => {
            let m = A_L_SAMPLES | 1;
            for i in 0..m {
                visit(&[-rho + 2.0 * rho * i as f64 / (m - 1) as f64]);
            }
        }
        _ => {
            let side = ((A_L_SAMPLES as f64 * 4.0 / std::f64::consts::PI).sqrt() as usize) | 1;
            for i in 0..side {
                for j in 0..side {
                    let x = -rho + 2.0 * rho * i as f64 / (side - 1) as f64;
                    let y = -rho + 2.0 * rho * j as f64 / (side - 1) as f64;
                    if x * x + y * y <= rho * rho {
                        visit(&[x, y]);
                    }
                }
            }
            for k in 0..400 {
                let th = 2.0 * std::f64::consts::PI * k as f64 / 400.0;
                visit(&[rho * th.cos(), rho * th.sin()]);
            }
        }
    }
    hi - lo
}

/// `a_L` and the Poincaré constant
/// `c = 2^q (e^{2 a_L} C4 L^{p(p-1)} + C'/L) / (1 - D'/L)`.
pub fn poincare_bound(
    spec: &WeightSpec,
    p: f64,
    c_prime: f64,
    d_prime: f64,
    l: f64,
    c4: f64,
) -> Result<(f64, f64)> {
    if !(l > d_prime) {
        return Err(Error::param("L", format!("must exceed D' = {d_prime}, got {l}")));
    }
    if !(c4 > 0.0) {
        return Err(Error::param("C4", "must be positive"));
    }
    let a_l = oscillation_on_ball(spec, p, l);
    let c = 2f64.powf(spec.q_exp) * ((2.0 * a_l).exp() * c4 * l.powf(p * (p - 1.0)) + c_prime / l)
        / (1.0 - d_prime / l);
    Ok((a_l, c))
}

/// Runs the whole chain for `spec` with the given inputs (`beta`, `q`, `dim` are taken
/// from `spec`).
pub fn certify(spec: &WeightSpec, inputs: &ChainInputs, l: f64, c4: f64) -> Result<ConstantChain> {
    let inputs = ChainInputs {
        beta_coeff: spec.beta_coeff,
        q: spec.q_exp,
        dim: spec.dim,
        ..*inputs
    };
    let (c, d) = constants_xq(inputs.beta_coeff, inputs.q, inputs.dim, inputs.eps)?;
    let (c_prime, d_prime, d_prime_c_gamma) = constants_potential(&inputs)?;
    let (a_l, poincare) = poincare_bound(spec, inputs.p, c_prime, d_prime, l, c4)?;
    Ok(ConstantChain {
        c,
        d,
        c_prime,
        d_prime,
        d_prime_c_gamma,
        a_l,
        l,
        c4,
        poincare,
        q_is_conjugate: (inputs.q - inputs.p / (inputs.p - 1.0)).abs() < 1e-12,
        inputs,
    })
}

/// Both sides of one inequality instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    /// Sum over the integrals involved of `|S(h) - S(2h)|`, scaled by their coefficients.
    pub quadrature_error_estimate: f64,
    pub holds: bool,
}

impl InequalityReport {
    fn new(lhs: f64, rhs: f64, err: f64) -> Self {
        let margin = rhs - lhs;
        InequalityReport {
            lhs,
            rhs,
            margin,
            quadrature_error_estimate: err,
            holds: margin >= -err,
        }
    }
}

fn integrate(values: Vec<f64>, like: &GridFunction, weight: &GridFunction) -> Result<(f64, f64)> {
    quadrature_with_error(&GridFunction::new(*like.grid(), values)?, Some(weight))
}

fn check_grad(f: &GridFunction, grad_f: &[GridFunction]) -> Result<GridFunction> {
    if grad_f.len() != f.grid().dim() {
        return Err(Error::GridMismatch("gradient has the wrong number of components".into()));
    }
    for c in grad_f {
        grid::check_same_grid(f.grid(), c.grid())?;
    }
    Ok(magnitude(grad_f))
}

/// `int |f| |x|^{q-1} dmu <= C int |grad f| dmu + D int |f| dmu`, `mu = exp(-beta|x|^q) dx`.
pub fn verify_xq(
    f: &GridFunction,
    grad_f: &[GridFunction],
    beta_coeff: f64,
    q: f64,
    c: f64,
    d: f64,
) -> Result<InequalityReport> {
    let g = f.grid();
    let grad = check_grad(f, grad_f)?;
    let mu = WeightSpec::radial(beta_coeff, q, g.dim())?.sample(g);
    let radial: Vec<f64> = (0..g.len())
        .map(|k| grid::norm(&g.point(k)[..g.dim()]).powf(q - 1.0) * f.values()[k].abs())
        .collect();
    let (lhs, e1) = integrate(radial, f, &mu)?;
    let (gi, e2) = integrate(grad.values().to_vec(), f, &mu)?;
    let (fi, e3) = integrate(f.values().iter().map(|v| v.abs()).collect(), f, &mu)?;
    Ok(InequalityReport::new(lhs, c * gi + d * fi, e1 + c * e2 + d * e3))
}

/// `int |f|^p |x|^{q-1} dnu <= C' int |grad f|^p dnu + D' int |f|^p dnu`, `nu = w dx`.
pub fn verify_potential(
    f: &GridFunction,
    grad_f: &[GridFunction],
    spec: &WeightSpec,
    p: f64,
    c_prime: f64,
    d_prime: f64,
) -> Result<InequalityReport> {
    let g = f.grid();
    let grad = check_grad(f, grad_f)?;
    let nu = spec.sample(g);
    let fp: Vec<f64> = f.values().iter().map(|v| v.abs().powf(p)).collect();
    let radial: Vec<f64> = (0..g.len())
        .map(|k| grid::norm(&g.point(k)[..g.dim()]).powf(spec.q_exp - 1.0) * fp[k])
        .collect();
    let (lhs, e1) = integrate(radial, f, &nu)?;
    let (gi, e2) = integrate(grad.values().iter().map(|v| v.powf(p)).collect(), f, &nu)?;
    let (fi, e3) = integrate(fp, f, &nu)?;
    Ok(InequalityReport::new(lhs, c_prime * gi + d_prime * fi, e1 + c_prime * e2 + d_prime * e3))
}

/// Left side `int |f - m|^p dnu` (with `m` the `nu`-mean) and `int |grad f|^p dnu`.
fn poincare_sides(
    f: &GridFunction,
    grad_f: &[GridFunction],
    spec: &WeightSpec,
    p: f64,
) -> Result<((f64, f64), (f64, f64))> {
    let grad = check_grad(f, grad_f)?;
    let nu = spec.sample(f.grid());
    let (mass, _) = integrate(vec![1.0; f.grid().len()], f, &nu)?;
    if !(mass > 0.0) {
        return Err(Error::ZeroNorm("weight mass"));
    }
    let (first, _) = integrate(f.values().to_vec(), f, &nu)?;
    let mean = first / mass;
    let (lhs, err) =
        integrate(f.values().iter().map(|v| (v - mean).abs().powf(p)).collect(), f, &nu)?;
    // cancellation in f - mean leaves a residue of order eps * |f|
    let (scale, _) = integrate(f.values().iter().map(|v| v.abs().powf(p)).collect(), f, &nu)?;
    let lhs = (lhs, err + 64.0 * f64::EPSILON * scale);
    let grad_p = integrate(grad.values().iter().map(|v| v.powf(p)).collect(), f, &nu)?;
    Ok((lhs, grad_p))
}

/// `int |f - m|^p dnu <= c int |grad f|^p dnu`.
pub fn verify_poincare(
    f: &GridFunction,
    grad_f: &[GridFunction],
    spec: &WeightSpec,
    p: f64,
    c: f64,
) -> Result<InequalityReport> {
    let ((lhs, e1), (gp, e2)) = poincare_sides(f, grad_f, spec, p)?;
    Ok(InequalityReport::new(lhs, c * gp, e1 + c * e2))
}

/// `int |f - m|^p dnu / int |grad f|^p dnu`, or `None` when the gradient vanishes.
pub fn empirical_poincare_ratio(
    f: &GridFunction,
    grad_f: &[GridFunction],
    spec: &WeightSpec,
    p: f64,
) -> Result<Option<f64>> {
    let ((lhs, _), (gp, _)) = poincare_sides(f, grad_f, spec, p)?;
    Ok((gp > 0.0).then(|| lhs / gp))
}

/// One line of a batch verification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchRow {
    pub corpus_id: String,
    #[serde(flatten)]
    pub report: InequalityReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub inequality: String,
    pub rows: Vec<BatchRow>,
    /// For Poincaré batches: the certified constant and the best constant seen on the
    /// corpus, side by side.
    pub certified_constant: Option<f64>,
    pub empirical_constant: Option<f64>,
}

impl BatchReport {
    pub fn all_hold(&self) -> bool {
        self.rows.iter().all(|r| r.report.holds)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("corpus_id,lhs,rhs,margin,holds\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.corpus_id,
                fmt12(r.report.lhs),
                fmt12(r.report.rhs),
                fmt12(r.report.margin),
                r.report.holds
            ));
        }
        out
    }
}

/// Empirical `C3` of the weighted Sobolev inequality for exponent `kappa p` on `ball`:
/// the maximum over the corpus of
/// `(avg_B |eta|^{kappa p} w)^{1/(kappa p)} / (diam B (avg_B |grad eta|^p w)^{1/p})`,
/// averages with respect to `w dx`. Members with vanishing gradient are excluded.
pub fn estimate_sobolev_ineq(
    corpus: &[GridFunction],
    weight: &GridFunction,
    p: f64,
    kappa: f64,
    ball: &Ball,
) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::param("p", "must be >= 1"));
    }
    if !(kappa > 1.0) {
        return Err(Error::param("kappa", "must be > 1"));
    }
    let g = weight.grid();
    let mass = ball_integral(weight, &ball.center, ball.radius);
    if !(mass > 0.0) {
        return Err(Error::ZeroNorm("weight mass of the ball"));
    }
    let kp = kappa * p;
    let mut best: Option<f64> = None;
    for eta in corpus {
        grid::check_same_grid(g, eta.grid())?;
        for k in 0..g.len() {
            let x = g.point(k);
            let d: Vec<f64> = (0..g.dim()).map(|a| x[a] - ball.center[a]).collect();
            if eta.values()[k] != 0.0 && grid::norm(&d) > ball.radius {
                return Err(Error::EscapesBall { point: x[..g.dim()].to_vec() });
            }
        }
        let grad = magnitude(&discrete_gradient(eta));
        let (top, _) = integrate(eta.values().iter().map(|v| v.abs().powf(kp)).collect(), eta, weight)?;
        let (bottom, _) = integrate(grad.values().iter().map(|v| v.powf(p)).collect(), eta, weight)?;
        if bottom <= 0.0 {
            continue;
        }
        let ratio = (top / mass).powf(1.0 / kp)
            / (2.0 * ball.radius * (bottom / mass).powf(1.0 / p));
        best = Some(best.map_or(ratio, |b: f64| b.max(ratio)));
    }
    best.ok_or(Error::ZeroNorm("every corpus member has zero gradient"))
}

/// Empirical local Poincaré constant
/// `max int_B |eta - eta_B|^p w / (diam(B)^p int_B |grad eta|^p w)` over corpus members
/// restricted to each ball (trapezoid rule on the nodes inside the ball).
pub fn estimate_local_poincare(
    corpus: &[GridFunction],
    weight: &GridFunction,
    p: f64,
    balls: &[Ball],
) -> Result<f64> {
    let g = weight.grid();
    let q = g.trapezoid_weights();
    let mut best = 0.0f64;
    for ball in balls {
        let inside: Vec<usize> = (0..g.len())
            .filter(|&k| {
                let x = g.point(k);
                let d: Vec<f64> = (0..g.dim()).map(|a| x[a] - ball.center[a]).collect();
                grid::norm(&d) <= ball.radius
            })
            .collect();
        let mass: f64 = inside.iter().map(|&k| q[k] * weight.values()[k]).sum();
        if mass <= 0.0 {
            continue;
        }
        for eta in corpus {
            grid::check_same_grid(g, eta.grid())?;
            let grad = magnitude(&discrete_gradient(eta));
            let mean = inside
                .iter()
                .map(|&k| q[k] * weight.values()[k] * eta.values()[k])
                .sum::<f64>()
                / mass;
            let top: f64 = inside
                .iter()
                .map(|&k| q[k] * weight.values()[k] * (eta.values()[k] - mean).abs().powf(p))
                .sum();
            let bottom: f64 = inside
                .iter()
                .map(|&k| q[k] * weight.values()[k] * grad.values()[k].powf(p))
                .sum();
            if bottom > 0.0 {
                best = best.max(top / ((2.0 * ball.radius).powf(p) * bottom));
            }
        }
    }
    Ok(best)
}
