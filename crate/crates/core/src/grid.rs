//! Uniform grids on `[-1, 1]` and on the rectangle `(-1, 1) x (0, 1)`,
//! second-order difference operators, trapezoid quadrature and norms.
//!
//! Two-dimensional data is stored with `x` as the outer index and `eta` as
//! the inner (contiguous) index, i.e. node `(i, j)` lives at `i * n_eta + j`.

use crate::error::{Error, Result};

/// Uniform grid on `[-1, 1]` with an odd number of nodes, so that `x = 0`
/// is always a node and the node set is mirror-symmetric bit for bit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineGrid {
    n: usize,
    h: f64,
}

impl LineGrid {
    pub fn new(n_points: usize) -> Result<Self> {
        if n_points < 5 || n_points % 2 == 0 {
            return Err(Error::InvalidGrid(format!(
                "line grid needs an odd number of points >= 5, got {n_points}"
            )));
        }
        Ok(Self {
            n: n_points,
            h: 2.0 / (n_points - 1) as f64,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    /// `x_i = (2i - (n-1)) / (n-1)`; the integer numerator keeps `x_i = -x_{n-1-i}` exact.
    pub fn node(&self, i: usize) -> f64 {
        let last = (self.n - 1) as f64;
        (2.0 * i as f64 - last) / last
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.node(i)).collect()
    }

    /// Index of the node mirrored about `x = 0`.
    pub fn mirror(&self, i: usize) -> usize {
        self.n - 1 - i
    }

    pub fn center(&self) -> usize {
        (self.n - 1) / 2
    }
}

/// Tensor grid on `Omega = (-1, 1) x (0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RectGrid {
    line: LineGrid,
    n_eta: usize,
    h_eta: f64,
}

impl RectGrid {
    pub fn new(nx: usize, n_eta: usize) -> Result<Self> {
        let line = LineGrid::new(nx)?;
        if n_eta < 5 {
            return Err(Error::InvalidGrid(format!(
                "eta direction needs at least 5 points, got {n_eta}"
            )));
        }
        Ok(Self {
            line,
            n_eta,
            h_eta: 1.0 / (n_eta - 1) as f64,
        })
    }

    pub fn line(&self) -> &LineGrid {
        &self.line
    }

    pub fn nx(&self) -> usize {
        self.line.len()
    }

    pub fn n_eta(&self) -> usize {
        self.n_eta
    }

    pub fn hx(&self) -> f64 {
        self.line.spacing()
    }

    pub fn h_eta(&self) -> f64 {
        self.h_eta
    }

    pub fn x(&self, i: usize) -> f64 {
        self.line.node(i)
    }

    pub fn eta(&self, j: usize) -> f64 {
        j as f64 / (self.n_eta - 1) as f64
    }

    pub fn len(&self) -> usize {
        self.nx() * self.n_eta
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.n_eta + j
    }

    pub fn is_boundary(&self, i: usize, j: usize) -> bool {
        i == 0 || j == 0 || i + 1 == self.nx() || j + 1 == self.n_eta
    }
}

fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite { index }),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction1D {
    grid: LineGrid,
    values: Vec<f64>,
}

impl GridFunction1D {
    pub fn new(grid: LineGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        check_finite(&values)?;
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: LineGrid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn from_fn(grid: LineGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid, grid.nodes().into_iter().map(f).collect())
    }

    pub fn grid(&self) -> &LineGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Node-wise `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::InvalidGrid("grid mismatch".into()));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(p, q)| a * p + b * q)
            .collect();
        Self::new(self.grid, values)
    }

    /// Largest `|f(x_i) - f(-x_i)|`.
    pub fn even_defect(&self) -> f64 {
        (0..self.grid.len())
            .map(|i| (self.values[i] - self.values[self.grid.mirror(i)]).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction2D {
    grid: RectGrid,
    values: Vec<f64>,
}

impl GridFunction2D {
    pub fn new(grid: RectGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        check_finite(&values)?;
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: RectGrid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn from_fn(grid: RectGrid, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(grid.len());
        for i in 0..grid.nx() {
            let x = grid.x(i);
            for j in 0..grid.n_eta() {
                values.push(f(x, grid.eta(j)));
            }
        }
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &RectGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    /// Overwrite one node. Used to inject faults in diagnostics tests.
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        let k = self.grid.index(i, j);
        self.values[k] = value;
    }

    /// Column `eta -> f(x_i, eta)`.
    pub fn column(&self, i: usize) -> &[f64] {
        let n = self.grid.n_eta();
        &self.values[i * n..(i + 1) * n]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }
}

/// First derivative: central differences inside, second-order one-sided
/// differences at the ends.
pub fn d1(f: &GridFunction1D) -> GridFunction1D {
    let values = diff1(f.values(), f.grid().spacing());
    GridFunction1D {
        grid: *f.grid(),
        values,
    }
}

/// Second derivative: 3-point stencil inside, end values copied from the
/// neighbouring interior node.
pub fn d2(f: &GridFunction1D) -> GridFunction1D {
    let v = f.values();
    let n = v.len();
    let h2 = f.grid().spacing().powi(2);
    let mut out = vec![0.0; n];
    for i in 1..n - 1 {
        out[i] = (v[i - 1] - 2.0 * v[i] + v[i + 1]) / h2;
    }
    out[0] = out[1];
    out[n - 1] = out[n - 2];
    GridFunction1D {
        grid: *f.grid(),
        values: out,
    }
}

/// Second-order first difference of equally spaced samples (at least 3).
pub(crate) fn diff1(v: &[f64], h: f64) -> Vec<f64> {
    let n = v.len();
    let mut out = vec![0.0; n];
    for i in 1..n - 1 {
        out[i] = (v[i + 1] - v[i - 1]) / (2.0 * h);
    }
    out[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h);
    out[n - 1] = (3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) / (2.0 * h);
    out
}

/// Second-order second difference of equally spaced samples (at least 4),
/// one-sided 4-point formulas at the ends.
pub(crate) fn diff2(v: &[f64], h: f64) -> Vec<f64> {
    let n = v.len();
    let h2 = h * h;
    let mut out = vec![0.0; n];
    for i in 1..n - 1 {
        out[i] = (v[i - 1] - 2.0 * v[i] + v[i + 1]) / h2;
    }
    out[0] = (2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3]) / h2;
    out[n - 1] = (2.0 * v[n - 1] - 5.0 * v[n - 2] + 4.0 * v[n - 3] - v[n - 4]) / h2;
    out
}

/// `d/d eta` on every node of the rectangle.
pub fn d_eta(f: &GridFunction2D) -> GridFunction2D {
    let g = *f.grid();
    let mut values = Vec::with_capacity(g.len());
    for i in 0..g.nx() {
        values.extend(diff1(f.column(i), g.h_eta()));
    }
    GridFunction2D { grid: g, values }
}

/// `d^2/d eta^2` on every node of the rectangle.
pub fn d2_eta(f: &GridFunction2D) -> GridFunction2D {
    let g = *f.grid();
    let mut values = Vec::with_capacity(g.len());
    for i in 0..g.nx() {
        values.extend(diff2(f.column(i), g.h_eta()));
    }
    GridFunction2D { grid: g, values }
}

/// `d/dx` on every node of the rectangle.
pub fn d_x(f: &GridFunction2D) -> GridFunction2D {
    let g = *f.grid();
    let (nx, ne) = (g.nx(), g.n_eta());
    let mut values = vec![0.0; g.len()];
    let mut row = vec![0.0; nx];
    for j in 0..ne {
        for (i, r) in row.iter_mut().enumerate() {
            *r = f.get(i, j);
        }
        for (i, d) in diff1(&row, g.hx()).into_iter().enumerate() {
            values[g.index(i, j)] = d;
        }
    }
    GridFunction2D { grid: g, values }
}

/// `d phi / d eta` at `eta = 1` by the one-sided stencil
/// `(3 f_N - 4 f_{N-1} + f_{N-2}) / (2 h_eta)`.
pub fn trace_d_eta_top(phi: &GridFunction2D) -> GridFunction1D {
    let g = phi.grid();
    let n = g.n_eta() - 1;
    let h = g.h_eta();
    let values = (0..g.nx())
        .map(|i| {
            let c = phi.column(i);
            (3.0 * c[n] - 4.0 * c[n - 1] + c[n - 2]) / (2.0 * h)
        })
        .collect();
    GridFunction1D {
        grid: *g.line(),
        values,
    }
}

fn trapezoid_weights(n: usize, h: f64) -> impl Fn(usize) -> f64 {
    move |i| if i == 0 || i + 1 == n { 0.5 * h } else { h }
}

/// Trapezoid rule on equally spaced samples.
pub(crate) fn trapezoid(v: &[f64], h: f64) -> f64 {
    let w = trapezoid_weights(v.len(), h);
    v.iter().enumerate().map(|(i, &y)| w(i) * y).sum()
}

/// Trapezoid rule in both directions over the rectangle.
pub fn integrate_2d(f: &GridFunction2D) -> f64 {
    let g = f.grid();
    let wx = trapezoid_weights(g.nx(), g.hx());
    (0..g.nx())
        .map(|i| wx(i) * trapezoid(f.column(i), g.h_eta()))
        .sum()
}

pub fn integrate_1d(f: &GridFunction1D) -> f64 {
    trapezoid(f.values(), f.grid().spacing())
}

pub fn linf_1d(f: &GridFunction1D) -> f64 {
    f.values().iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn linf_2d(f: &GridFunction2D) -> f64 {
    f.values().iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn l2_1d(f: &GridFunction1D) -> f64 {
    let sq: Vec<f64> = f.values().iter().map(|v| v * v).collect();
    trapezoid(&sq, f.grid().spacing()).sqrt()
}

pub fn l2_2d(f: &GridFunction2D) -> f64 {
    let g = f.grid();
    let wx = trapezoid_weights(g.nx(), g.hx());
    let mut col = vec![0.0; g.n_eta()];
    let mut acc = 0.0;
    for i in 0..g.nx() {
        for (c, v) in col.iter_mut().zip(f.column(i)) {
            *c = v * v;
        }
        acc += wx(i) * trapezoid(&col, g.h_eta());
    }
    acc.sqrt()
}

/// `max(||f||_inf, ||f'||_inf)` with `f'` from [`d1`].
pub fn w1inf_1d(f: &GridFunction1D) -> f64 {
    linf_1d(f).max(linf_1d(&d1(f)))
}

/// Least-squares line through `(ln eps, ln value)`. Returns `(slope, intercept)`.
pub fn fit_loglog_slope(pairs: &[(f64, f64)]) -> Result<(f64, f64)> {
    if pairs.len() < 3 {
        return Err(Error::InsufficientData {
            needed: 3,
            got: pairs.len(),
        });
    }
    if let Some(index) = pairs.iter().position(|&(e, v)| !(e > 0.0 && v > 0.0)) {
        return Err(Error::NonPositiveData { index });
    }
    let n = pairs.len() as f64;
    let (xs, ys): (Vec<f64>, Vec<f64>) = pairs.iter().map(|&(e, v)| (e.ln(), v.ln())).unzip();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::BadParameter(
            "all abscissae coincide; slope undefined".into(),
        ));
    }
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}
