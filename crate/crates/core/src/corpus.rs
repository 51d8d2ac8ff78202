//! The fixed, versioned corpus of compactly supported smooth test functions used by the
//! inequality checks and the residual tests.
//!
//! Version 1: bumps at 5 centres × 3 widths, two polynomial × bump products and one
//! trigonometric × bump product (18 functions). Every member vanishes outside
//! `B(0, 4)`, so any box with `R > 4` contains the supports.

use crate::grid::{sample_field, Grid, GridFunction, VectorField};

pub const CORPUS_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Factor {
    One,
    /// `x_0`
    Linear,
    /// `x_0^2 - 1/2`
    Quadratic,
    /// `sin(2 x_0)`
    Sine,
}

/// `factor(x) * bump(|x - centre| / width)` with `bump(s) = exp(1 - 1/(1 - s^2))` for
/// `s < 1` and 0 otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct TestFunction {
    pub name: String,
    centre: [f64; 2],
    width: f64,
    factor: Factor,
    dim: usize,
}

impl TestFunction {
    /// A plain bump centred at `(centre, 0)`.
    pub fn bump(dim: usize, centre: f64, width: f64) -> Self {
        TestFunction {
            name: format!("bump(c={centre},r={width})"),
            centre: [centre, 0.0],
            width,
            factor: Factor::One,
            dim,
        }
    }

    fn product(dim: usize, centre: f64, width: f64, factor: Factor, label: &str) -> Self {
        let mut f = Self::bump(dim, centre, width);
        f.factor = factor;
        f.name = format!("{label}*bump(c={centre},r={width})");
        f
    }

    /// Radius of a ball about the origin containing the support.
    pub fn support_radius(&self) -> f64 {
        self.centre[..self.dim].iter().map(|c| c * c).sum::<f64>().sqrt() + self.width
    }

    fn offset(&self, x: &[f64]) -> ([f64; 2], f64) {
        let mut d = [0.0; 2];
        for a in 0..self.dim {
            d[a] = x[a] - self.centre[a];
        }
        let s2 = (d[0] * d[0] + d[1] * d[1]) / (self.width * self.width);
        (d, s2)
    }

    fn factor_value(&self, x: &[f64]) -> (f64, f64) {
        match self.factor {
            Factor::One => (1.0, 0.0),
            Factor::Linear => (x[0], 1.0),
            Factor::Quadratic => (x[0] * x[0] - 0.5, 2.0 * x[0]),
            Factor::Sine => ((2.0 * x[0]).sin(), 2.0 * (2.0 * x[0]).cos()),
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let (_, s2) = self.offset(x);
        if s2 >= 1.0 {
            return 0.0;
        }
        self.factor_value(x).0 * (1.0 - 1.0 / (1.0 - s2)).exp()
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let (d, s2) = self.offset(x);
        if s2 >= 1.0 {
            return vec![0.0; self.dim];
        }
        let b = (1.0 - 1.0 / (1.0 - s2)).exp();
        // d/dx bump = bump * (-2 / (1 - s^2)^2) * (x - c) / width^2
        let k = -2.0 * b / ((1.0 - s2) * (1.0 - s2) * self.width * self.width);
        let (fv, fd) = self.factor_value(x);
        (0..self.dim)
            .map(|a| {
                let own = if a == 0 { fd * b } else { 0.0 };
                own + fv * k * d[a]
            })
            .collect()
    }

    /// Node samples, tagged with the support radius.
    pub fn sample(&self, grid: &Grid) -> GridFunction {
        sample_field(grid, |x| self.value(x))
            .with_support_radius(self.support_radius())
            .expect("samples vanish outside the support")
    }

    /// Node samples of the exact gradient.
    pub fn sample_gradient(&self, grid: &Grid) -> VectorField {
        (0..grid.dim())
            .map(|a| sample_field(grid, |x| self.gradient(x)[a]))
            .collect()
    }
}

/// The full corpus in dimension `dim`.
pub fn smooth_corpus(dim: usize) -> Vec<TestFunction> {
    let mut out = Vec::new();
    for &c in &[-2.0, -1.0, 0.0, 1.0, 2.0] {
        for &r in &[1.0, 1.5, 2.0] {
            out.push(TestFunction::bump(dim, c, r));
        }
    }
    out.push(TestFunction::product(dim, 0.0, 2.0, Factor::Linear, "x"));
    out.push(TestFunction::product(dim, 0.5, 2.5, Factor::Quadratic, "(x^2-1/2)"));
    out.push(TestFunction::product(dim, 0.0, 3.0, Factor::Sine, "sin(2x)"));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradients_match_central_differences() {
        for dim in [1, 2] {
            for f in smooth_corpus(dim) {
                let x = [0.3, -0.2];
                let g = f.gradient(&x[..dim]);
                for a in 0..dim {
                    let h = 1e-5;
                    let mut xp = x;
                    let mut xm = x;
                    xp[a] += h;
                    xm[a] -= h;
                    let fd = (f.value(&xp[..dim]) - f.value(&xm[..dim])) / (2.0 * h);
                    assert!((fd - g[a]).abs() < 1e-7, "{} axis {a}", f.name);
                }
            }
        }
    }

    #[test]
    fn supports_fit_in_radius_four() {
        assert_eq!(smooth_corpus(1).len(), 18);
        for f in smooth_corpus(2) {
            assert!(f.support_radius() <= 4.0 + 1e-12, "{}", f.name);
        }
    }
}
