//! Uniform tensor grids on `[-R, R]^d` (d = 1, 2) and the discrete operators that act on
//! node data: quadrature, gradients, mollification, maximal functions, difference quotients
//! and truncation.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in `R^d`; only the first `dim` coordinates are meaningful.
pub type Point = [f64; 2];

/// One component per axis.
pub type VectorField = Vec<GridFunction>;

/// Uniform tensor grid on the box `[-R, R]^dim` with an odd number of nodes per axis,
/// so that the origin is always a node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    half_width: f64,
    nodes_per_axis: usize,
    spacing: f64,
}

impl Grid {
    pub fn new(dim: usize, half_width: f64, nodes_per_axis: usize) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::param("dim", format!("must be 1 or 2, got {dim}")));
        }
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::param("half_width", format!("must be positive, got {half_width}")));
        }
        if nodes_per_axis < 3 {
            return Err(Error::param("nodes_per_axis", format!("must be >= 3, got {nodes_per_axis}")));
        }
        if nodes_per_axis.is_multiple_of(2) {
            return Err(Error::param(
                "nodes_per_axis",
                format!("must be odd so that 0 is a node, got {nodes_per_axis}"),
            ));
        }
        Ok(Grid {
            dim,
            half_width,
            nodes_per_axis,
            spacing: 2.0 * half_width / (nodes_per_axis - 1) as f64,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn nodes_per_axis(&self) -> usize {
        self.nodes_per_axis
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Total number of nodes, `n^dim`.
    pub fn len(&self) -> usize {
        self.nodes_per_axis.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Coordinate of axis index `i`. Symmetric about the centre node, which is exactly 0.
    pub fn coord(&self, i: usize) -> f64 {
        let centre = (self.nodes_per_axis / 2) as f64;
        (i as f64 - centre) * self.spacing
    }

    /// Multi-index of a flat node index. The last axis varies fastest (row-major).
    pub fn multi_index(&self, flat: usize) -> [usize; 2] {
        match self.dim {
            1 => [flat, 0],
            _ => [flat / self.nodes_per_axis, flat % self.nodes_per_axis],
        }
    }

    pub fn flat_index(&self, idx: [usize; 2]) -> usize {
        match self.dim {
            1 => idx[0],
            _ => idx[0] * self.nodes_per_axis + idx[1],
        }
    }

    pub fn point(&self, flat: usize) -> Point {
        let [i, j] = self.multi_index(flat);
        match self.dim {
            1 => [self.coord(i), 0.0],
            _ => [self.coord(i), self.coord(j)],
        }
    }

    /// Same box, every `stride`-th node per axis. `stride` must divide `n - 1`.
    pub fn coarsen(&self, stride: usize) -> Option<Grid> {
        if stride == 0 || !(self.nodes_per_axis - 1).is_multiple_of(stride) {
            return None;
        }
        let n = (self.nodes_per_axis - 1) / stride + 1;
        if n < 3 || n.is_multiple_of(2) {
            return None;
        }
        Grid::new(self.dim, self.half_width, n).ok()
    }

    /// Same spacing on the box of half-width `factor * R`, rounded to the node lattice.
    pub fn enlarge(&self, factor: f64) -> Result<Grid> {
        let half_nodes = ((factor * self.half_width) / self.spacing).round() as usize;
        let n = 2 * half_nodes + 1;
        Grid::new(self.dim, half_nodes as f64 * self.spacing, n)
    }

    /// The grid with the spacing halved.
    pub fn refine(&self) -> Grid {
        Grid::new(self.dim, self.half_width, 2 * self.nodes_per_axis - 1)
            .expect("refining a valid grid is valid")
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .take(self.dim)
            .all(|c| c.abs() <= self.half_width * (1.0 + 1e-12))
    }

    /// Per-axis composite Simpson weights (h/3 · [1, 4, 2, ..., 4, 1]).
    pub fn simpson_axis_weights(&self) -> Vec<f64> {
        simpson_weights(self.nodes_per_axis, self.spacing)
    }

    /// Per-axis trapezoid weights (h · [1/2, 1, ..., 1, 1/2]).
    pub fn trapezoid_axis_weights(&self) -> Vec<f64> {
        let n = self.nodes_per_axis;
        let mut w = vec![self.spacing; n];
        w[0] *= 0.5;
        w[n - 1] *= 0.5;
        w
    }

    fn tensor(&self, axis: &[f64]) -> Vec<f64> {
        match self.dim {
            1 => axis.to_vec(),
            _ => {
                let mut out = Vec::with_capacity(self.len());
                for wi in axis {
                    for wj in axis {
                        out.push(wi * wj);
                    }
                }
                out
            }
        }
    }

    /// Node weights of the tensor Simpson rule.
    pub fn simpson_weights(&self) -> Vec<f64> {
        self.tensor(&self.simpson_axis_weights())
    }

    /// Node weights of the tensor trapezoid rule.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        self.tensor(&self.trapezoid_axis_weights())
    }

    /// Axis cell index and local coordinate for interpolation. The cell index is clamped
    /// to the grid; the local coordinate is not, so points outside the box are linearly
    /// extrapolated from the boundary cell.
    fn locate(&self, x: f64) -> (usize, f64) {
        let t = (x + self.half_width) / self.spacing;
        let i = (t.floor().max(0.0) as usize).min(self.nodes_per_axis - 2);
        (i, t - i as f64)
    }
}

fn simpson_weights(n: usize, h: f64) -> Vec<f64> {
    let mut w: Vec<f64> = (0..n)
        .map(|i| if i % 2 == 1 { 4.0 } else { 2.0 })
        .collect();
    w[0] = 1.0;
    w[n - 1] = 1.0;
    w.iter_mut().for_each(|v| *v *= h / 3.0);
    w
}

pub fn build_grid(dim: usize, half_width: f64, nodes_per_axis: usize) -> Result<Grid> {
    Grid::new(dim, half_width, nodes_per_axis)
}

/// Real-valued node data on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Grid,
    values: Vec<f64>,
    support_radius: Option<f64>,
}

impl GridFunction {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(GridFunction {
            grid,
            values,
            support_radius: None,
        })
    }

    pub fn zeros(grid: Grid) -> Self {
        GridFunction {
            grid,
            values: vec![0.0; grid.len()],
            support_radius: None,
        }
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        GridFunction {
            grid,
            values: vec![c; grid.len()],
            support_radius: None,
        }
    }

    /// Declares the support radius; fails if some node outside the ball is nonzero.
    pub fn with_support_radius(mut self, r: f64) -> Result<Self> {
        for (k, v) in self.values.iter().enumerate() {
            if *v != 0.0 && norm(&self.grid.point(k)[..self.grid.dim]) > r {
                return Err(Error::EscapesBall {
                    point: self.grid.point(k)[..self.grid.dim].to_vec(),
                });
            }
        }
        self.support_radius = Some(r);
        Ok(self)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn support_radius(&self) -> Option<f64> {
        self.support_radius
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridFunction {
        GridFunction {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
            support_radius: None,
        }
    }

    pub fn zip_with(
        &self,
        other: &GridFunction,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<GridFunction> {
        check_same_grid(&self.grid, &other.grid)?;
        Ok(GridFunction {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
            support_radius: None,
        })
    }

    pub fn add(&self, other: &GridFunction) -> Result<GridFunction> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &GridFunction) -> Result<GridFunction> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> GridFunction {
        let mut out = self.map(|v| s * v);
        out.support_radius = self.support_radius;
        out
    }

    /// Every `stride`-th node per axis.
    pub fn restrict(&self, stride: usize) -> Option<GridFunction> {
        let coarse = self.grid.coarsen(stride)?;
        let values = (0..coarse.len())
            .map(|k| {
                let [i, j] = coarse.multi_index(k);
                self.values[self.grid.flat_index([i * stride, j * stride])]
            })
            .collect();
        Some(GridFunction {
            grid: coarse,
            values,
            support_radius: self.support_radius,
        })
    }

    /// Linear (1D) or bilinear (2D) interpolation; points outside the box are linearly
    /// extrapolated from the boundary cell.
    pub fn interpolate(&self, x: &[f64]) -> f64 {
        let g = &self.grid;
        match g.dim {
            1 => {
                let (i, t) = g.locate(x[0]);
                (1.0 - t) * self.values[i] + t * self.values[i + 1]
            }
            _ => {
                let (i, s) = g.locate(x[0]);
                let (j, t) = g.locate(x[1]);
                let v = |a: usize, b: usize| self.values[g.flat_index([a, b])];
                (1.0 - s) * ((1.0 - t) * v(i, j) + t * v(i, j + 1))
                    + s * ((1.0 - t) * v(i + 1, j) + t * v(i + 1, j + 1))
            }
        }
    }

    /// CSV with columns `x[,y],value`.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(if self.grid.dim == 1 { "x,value\n" } else { "x,y,value\n" });
        for (k, v) in self.values.iter().enumerate() {
            let p = self.grid.point(k);
            if self.grid.dim == 1 {
                out.push_str(&format!("{},{}\n", fmt12(p[0]), fmt12(*v)));
            } else {
                out.push_str(&format!("{},{},{}\n", fmt12(p[0]), fmt12(p[1]), fmt12(*v)));
            }
        }
        out
    }

    /// Binary dump: one JSON header line `{"dim":..,"n":..,"R":..}` followed by the
    /// row-major node values as little-endian `f64`.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let header = BinaryHeader {
            dim: self.grid.dim,
            n: self.grid.nodes_per_axis,
            r: self.grid.half_width,
        };
        let line = serde_json::to_string(&header).map_err(|e| Error::Io(e.to_string()))?;
        w.write_all(line.as_bytes())?;
        w.write_all(b"\n")?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<GridFunction> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Io("missing header line".into()))?;
        let header: BinaryHeader =
            serde_json::from_slice(&bytes[..nl]).map_err(|e| Error::Io(e.to_string()))?;
        let grid = Grid::new(header.dim, header.r, header.n)?;
        let body = &bytes[nl + 1..];
        if body.len() != 8 * grid.len() {
            return Err(Error::Io(format!(
                "expected {} bytes of node data, found {}",
                8 * grid.len(),
                body.len()
            )));
        }
        let values = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        GridFunction::new(grid, values)
    }
}

#[derive(Serialize, Deserialize)]
struct BinaryHeader {
    dim: usize,
    n: usize,
    #[serde(rename = "R")]
    r: f64,
}

/// Twelve significant digits, the fixed format of every emitted number.
pub fn fmt12(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    format!("{v:.11e}")
}

pub(crate) fn check_same_grid(a: &Grid, b: &Grid) -> Result<()> {
    if a != b {
        return Err(Error::GridMismatch(format!("{a:?} vs {b:?}")));
    }
    Ok(())
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Pointwise evaluation of a closed-form function at the nodes.
pub fn sample_field(grid: &Grid, f: impl Fn(&[f64]) -> f64) -> GridFunction {
    let values = (0..grid.len())
        .map(|k| f(&grid.point(k)[..grid.dim]))
        .collect();
    GridFunction {
        grid: *grid,
        values,
        support_radius: None,
    }
}

/// Composite Simpson rule of `f` (times `weight`, if given) over the box.
pub fn quadrature(f: &GridFunction, weight: Option<&GridFunction>) -> Result<f64> {
    if let Some(w) = weight {
        check_same_grid(&f.grid, &w.grid)?;
    }
    Ok(weighted_sum(&f.grid.simpson_weights(), f, weight))
}

fn weighted_sum(node_weights: &[f64], f: &GridFunction, weight: Option<&GridFunction>) -> f64 {
    match weight {
        Some(w) => node_weights
            .iter()
            .zip(&f.values)
            .zip(&w.values)
            .map(|((q, a), b)| q * a * b)
            .sum(),
        None => node_weights.iter().zip(&f.values).map(|(q, a)| q * a).sum(),
    }
}

/// Simpson value together with an a-posteriori error estimate `|S(h) - S(2h)|`.
/// When the grid cannot be coarsened by two into a Simpson-compatible grid, the
/// trapezoid value on the same grid stands in for `S(2h)`.
pub fn quadrature_with_error(
    f: &GridFunction,
    weight: Option<&GridFunction>,
) -> Result<(f64, f64)> {
    let fine = quadrature(f, weight)?;
    let coarse = match (f.restrict(2), weight.map(|w| w.restrict(2))) {
        (Some(fc), None) => quadrature(&fc, None)?,
        (Some(fc), Some(Some(wc))) => quadrature(&fc, Some(&wc))?,
        _ => weighted_sum(&f.grid.trapezoid_weights(), f, weight),
    };
    Ok((fine, (fine - coarse).abs()))
}

/// Central differences inside, second-order one-sided differences at the boundary.
pub fn discrete_gradient(f: &GridFunction) -> VectorField {
    let g = f.grid;
    let n = g.nodes_per_axis;
    let h = g.spacing;
    (0..g.dim)
        .map(|axis| {
            let mut out = vec![0.0; g.len()];
            for (k, o) in out.iter_mut().enumerate() {
                let idx = g.multi_index(k);
                let i = idx[axis];
                let at = |m: usize| {
                    let mut jdx = idx;
                    jdx[axis] = m;
                    f.values[g.flat_index(jdx)]
                };
                *o = if i == 0 {
                    (-3.0 * at(0) + 4.0 * at(1) - at(2)) / (2.0 * h)
                } else if i == n - 1 {
                    (3.0 * at(n - 1) - 4.0 * at(n - 2) + at(n - 3)) / (2.0 * h)
                } else {
                    (at(i + 1) - at(i - 1)) / (2.0 * h)
                };
            }
            GridFunction {
                grid: g,
                values: out,
                support_radius: None,
            }
        })
        .collect()
}

/// Pointwise Euclidean magnitude of a vector field.
pub fn magnitude(field: &[GridFunction]) -> GridFunction {
    let grid = field[0].grid;
    let values = (0..grid.len())
        .map(|k| field.iter().map(|c| c.values[k] * c.values[k]).sum::<f64>().sqrt())
        .collect();
    GridFunction {
        grid,
        values,
        support_radius: None,
    }
}

/// The standard radial bump `exp(-1/(1-|x|^2))` on the unit ball, rescaled to `eps`
/// and normalised so that its node sum times `h^d` is exactly one.
#[derive(Debug, Clone)]
pub struct Mollifier {
    epsilon: f64,
    dim: usize,
    spacing: f64,
    /// Offsets reach `radius` nodes in each direction.
    radius: usize,
    /// Node weights (already multiplied by `h^d`) on the `(2r+1)^d` stencil, row-major.
    weights: Vec<f64>,
}

impl Mollifier {
    pub fn new(grid: &Grid, epsilon: f64) -> Result<Self> {
        let h = grid.spacing;
        if !(epsilon.is_finite() && epsilon >= h * (1.0 - 1e-12)) {
            return Err(Error::param(
                "eps",
                format!("mollifier scale {epsilon} is below the grid spacing {h}"),
            ));
        }
        let radius = (epsilon / h).floor() as usize;
        let side = 2 * radius + 1;
        let offsets: Vec<isize> = (0..side).map(|i| i as isize - radius as isize).collect();
        let profile = |r2: f64| if r2 < 1.0 { (-1.0 / (1.0 - r2)).exp() } else { 0.0 };
        let mut weights = Vec::with_capacity(side.pow(grid.dim as u32));
        match grid.dim {
            1 => {
                for &a in &offsets {
                    let s = a as f64 * h / epsilon;
                    weights.push(profile(s * s));
                }
            }
            _ => {
                for &a in &offsets {
                    for &b in &offsets {
                        let (s, t) = (a as f64 * h / epsilon, b as f64 * h / epsilon);
                        weights.push(profile(s * s + t * t));
                    }
                }
            }
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        Ok(Mollifier {
            epsilon,
            dim: grid.dim,
            spacing: h,
            radius,
            weights,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Discrete mass `sum(eta_eps) * h^d`.
    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Kernel sampled as a grid function centred at the origin of `grid` (values are
    /// densities, i.e. node weights divided by `h^d`).
    pub fn sample(&self, grid: &Grid) -> GridFunction {
        let cell = self.spacing.powi(self.dim as i32);
        let c = grid.nodes_per_axis / 2;
        let r = self.radius;
        let side = 2 * r + 1;
        let mut out = GridFunction::zeros(*grid);
        for k in 0..grid.len() {
            let [i, j] = grid.multi_index(k);
            let di = i as isize - c as isize;
            let dj = j as isize - c as isize;
            if di.unsigned_abs() > r || (self.dim == 2 && dj.unsigned_abs() > r) {
                continue;
            }
            let si = (di + r as isize) as usize;
            let w = if self.dim == 1 {
                self.weights[si]
            } else {
                self.weights[si * side + (dj + r as isize) as usize]
            };
            out.values[k] = w / cell;
        }
        out
    }
}

/// Discrete convolution with the mollifier of scale `eps`; `f` is extended by zero
/// outside the box.
pub fn mollify(f: &GridFunction, eps: f64) -> Result<GridFunction> {
    let kernel = Mollifier::new(&f.grid, eps)?;
    let g = f.grid;
    let n = g.nodes_per_axis as isize;
    let r = kernel.radius as isize;
    let side = (2 * r + 1) as usize;
    let mut out = vec![0.0; g.len()];
    match g.dim {
        1 => {
            for (i, o) in out.iter_mut().enumerate() {
                let mut acc = 0.0;
                for a in -r..=r {
                    let j = i as isize - a;
                    if (0..n).contains(&j) {
                        acc += kernel.weights[(a + r) as usize] * f.values[j as usize];
                    }
                }
                *o = acc;
            }
        }
        _ => {
            for (k, o) in out.iter_mut().enumerate() {
                let [i, j] = g.multi_index(k);
                let mut acc = 0.0;
                for a in -r..=r {
                    let ii = i as isize - a;
                    if !(0..n).contains(&ii) {
                        continue;
                    }
                    for b in -r..=r {
                        let jj = j as isize - b;
                        if (0..n).contains(&jj) {
                            let w = kernel.weights[(a + r) as usize * side + (b + r) as usize];
                            acc += w * f.values[ii as usize * n as usize + jj as usize];
                        }
                    }
                }
                *o = acc;
            }
        }
    }
    Ok(GridFunction {
        grid: g,
        values: out,
        support_radius: f.support_radius.map(|s| s + eps),
    })
}

/// Centered maximal function over the radius lattice `{h, 2h, ..., R}`. Each ball average
/// is the mean of `|f|` over the nodes inside the ball clipped to the box.
pub fn maximal_function(f: &GridFunction) -> GridFunction {
    let g = f.grid;
    let n = g.nodes_per_axis;
    let kmax = n / 2;
    let abs: Vec<f64> = f.values.iter().map(|v| v.abs()).collect();
    let mut out = vec![0.0; g.len()];
    match g.dim {
        1 => {
            let mut prefix = vec![0.0; n + 1];
            for i in 0..n {
                prefix[i + 1] = prefix[i] + abs[i];
            }
            for (i, o) in out.iter_mut().enumerate() {
                let mut best = 0.0f64;
                for k in 1..=kmax {
                    let lo = i.saturating_sub(k);
                    let hi = (i + k).min(n - 1);
                    let avg = (prefix[hi + 1] - prefix[lo]) / (hi - lo + 1) as f64;
                    best = best.max(avg);
                }
                *o = best;
            }
        }
        _ => {
            // offsets sorted by squared index distance; ties keep a fixed order
            let k = kmax as isize;
            let mut offsets: Vec<(isize, isize, isize)> = Vec::new();
            for a in -k..=k {
                for b in -k..=k {
                    let d2 = a * a + b * b;
                    if d2 <= k * k {
                        offsets.push((d2, a, b));
                    }
                }
            }
            offsets.sort();
            let nn = n as isize;
            for (idx, o) in out.iter_mut().enumerate() {
                let [i, j] = g.multi_index(idx);
                let (i, j) = (i as isize, j as isize);
                let mut sum = 0.0;
                let mut count = 0usize;
                let mut best = 0.0f64;
                let mut next_radius = 1isize;
                for &(d2, a, b) in &offsets {
                    while d2 > next_radius * next_radius {
                        if count > 0 {
                            best = best.max(sum / count as f64);
                        }
                        next_radius += 1;
                    }
                    let (ii, jj) = (i + a, j + b);
                    if (0..nn).contains(&ii) && (0..nn).contains(&jj) {
                        sum += abs[(ii * nn + jj) as usize];
                        count += 1;
                    }
                }
                if count > 0 {
                    best = best.max(sum / count as f64);
                }
                *o = best;
            }
        }
    }
    GridFunction {
        grid: g,
        values: out,
        support_radius: None,
    }
}

/// `(f(x - eps*z) - f(x)) / eps`, with off-node values by (bi)linear interpolation.
pub fn difference_quotient(f: &GridFunction, z: &[f64], eps: f64) -> Result<GridFunction> {
    let g = f.grid;
    if z.len() != g.dim {
        return Err(Error::param("z", format!("expected {} components", g.dim)));
    }
    if norm(z) > 1.0 + 1e-12 {
        return Err(Error::param("z", "direction must lie in the closed unit ball"));
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::param("eps", "must be positive"));
    }
    let values = (0..g.len())
        .map(|k| {
            let p = g.point(k);
            let shifted = [p[0] - eps * z[0], p[1] - eps * z.get(1).copied().unwrap_or(0.0)];
            (f.interpolate(&shifted[..g.dim]) - f.values[k]) / eps
        })
        .collect();
    Ok(GridFunction {
        grid: g,
        values,
        support_radius: None,
    })
}

/// Clamp to `[-level, level]`.
pub fn truncate(f: &GridFunction, level: f64) -> Result<GridFunction> {
    if !(level > 0.0) {
        return Err(Error::param("N", "truncation level must be positive"));
    }
    let mut out = f.map(|v| v.clamp(-level, level));
    out.support_radius = f.support_radius;
    Ok(out)
}

/// Integral over the ball `B(center, radius)` of the (bi)linear interpolant of `f`.
///
/// In 1D the interpolant is integrated exactly cell by cell. In 2D the integral is taken
/// in polar coordinates about the centre, with 4-point Gauss–Legendre panels of width at
/// most `h` in the radius and the periodic trapezoid rule in the angle; both rules are
/// exact for constants.
pub fn ball_integral(f: &GridFunction, center: &[f64], radius: f64) -> f64 {
    let g = &f.grid;
    match g.dim {
        1 => {
            let (a, b) = (center[0] - radius, center[0] + radius);
            let h = g.spacing;
            let first = (((a + g.half_width) / h).floor().max(0.0)) as usize;
            let mut acc = 0.0;
            let mut i = first.min(g.nodes_per_axis - 2);
            while i < g.nodes_per_axis - 1 {
                let (x0, x1) = (g.coord(i), g.coord(i + 1));
                if x0 >= b {
                    break;
                }
                let (lo, hi) = (a.max(x0), b.min(x1));
                if hi > lo {
                    acc += (hi - lo) * 0.5 * (f.interpolate(&[lo]) + f.interpolate(&[hi]));
                }
                i += 1;
            }
            acc
        }
        _ => {
            const GL_X: [f64; 4] = [
                -0.861_136_311_594_052_6,
                -0.339_981_043_584_856_3,
                0.339_981_043_584_856_3,
                0.861_136_311_594_052_6,
            ];
            const GL_W: [f64; 4] = [
                0.347_854_845_137_453_9,
                0.652_145_154_862_546_1,
                0.652_145_154_862_546_1,
                0.347_854_845_137_453_9,
            ];
            let h = g.spacing;
            let panels = ((radius / h).ceil() as usize).max(1);
            let angles = ((2.0 * std::f64::consts::PI * radius / h).ceil() as usize * 2).max(64);
            let dr = radius / panels as f64;
            let dth = 2.0 * std::f64::consts::PI / angles as f64;
            let mut acc = 0.0;
            for m in 0..angles {
                let th = m as f64 * dth;
                let (c, s) = (th.cos(), th.sin());
                let mut ray = 0.0;
                for pnl in 0..panels {
                    let mid = (pnl as f64 + 0.5) * dr;
                    for (x, w) in GL_X.iter().zip(GL_W) {
                        let rho = mid + 0.5 * dr * x;
                        let p = [center[0] + rho * c, center[1] + rho * s];
                        ray += w * 0.5 * dr * rho * f.interpolate(&p);
                    }
                }
                acc += ray * dth;
            }
            acc
        }
    }
}

/// Nodes whose cells meet the ball (used to locate the data a ball integral depends on).
pub(crate) fn nodes_touching_ball(g: &Grid, center: &[f64], radius: f64) -> Vec<usize> {
    let reach = radius + g.spacing * (g.dim as f64).sqrt();
    (0..g.len())
        .filter(|&k| {
            let p = g.point(k);
            let d: Vec<f64> = (0..g.dim).map(|a| p[a] - center[a]).collect();
            norm(&d) <= reach
        })
        .collect()
}

/// Lebesgue measure of the ball of radius `r` in dimension `dim`.
pub fn ball_volume(dim: usize, r: f64) -> f64 {
    match dim {
        1 => 2.0 * r,
        _ => std::f64::consts::PI * r * r,
    }
}
