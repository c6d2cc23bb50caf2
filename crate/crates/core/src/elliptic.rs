//! The transformed potential problem on the fixed rectangle.
//!
//! Pulling Laplace's equation back from the deformed gap through
//! `(x, z) -> (x, (1 + z) / (1 + u(x)))` gives the operator
//!
//! ```text
//! L_u w = eps^2 w_xx - 2 eps^2 eta q w_xeta + (1 + eps^2 eta^2 u'^2)/(1+u)^2 w_etaeta
//!         + eps^2 eta (2 q^2 - u''/(1+u)) w_eta,          q = u'/(1+u)
//! ```
//!
//! and the potential `phi = Phi + eta` with `L_u Phi = -f_u`, `Phi = 0` on the
//! boundary, where `f_u = L_u eta`. The non-divergence form is discretized by
//! central differences and the symmetric four-point cross for `w_xeta`.

use serde::Serialize;

use crate::banded::BandMatrix;
use crate::config::Tolerances;
use crate::error::{Error, Result};
use crate::grid::{
    d_eta, d_x, integrate_2d, trace_d_eta_top, GridFunction2D, RectGrid,
};
use crate::membrane::MembraneProfile;

/// Coefficients of `L_u` and the source `f_u` at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OperatorSample {
    pub a_xx: f64,
    pub a_xeta: f64,
    pub a_etaeta: f64,
    pub b_eta: f64,
    pub f: f64,
}

impl OperatorSample {
    /// Evaluates the coefficients from pointwise values of `u`, `u'`, `u''`.
    pub fn from_values(u: f64, du: f64, d2u: f64, eps: f64, eta: f64) -> Self {
        let eps2 = eps * eps;
        let gap = 1.0 + u;
        let q = du / gap;
        let b = eps2 * eta * (2.0 * q * q - d2u / gap);
        Self {
            a_xx: eps2,
            a_xeta: -2.0 * eps2 * eta * q,
            a_etaeta: (1.0 + eps2 * eta * eta * du * du) / (gap * gap),
            b_eta: b,
            f: b,
        }
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps <= 1.0 {
        Ok(())
    } else {
        Err(Error::BadParameter(format!("eps = {eps} is outside (0, 1]")))
    }
}

/// Operator sample at x-node `i` and height `eta`.
pub fn sample_operator(
    u: &MembraneProfile,
    eps: f64,
    i: usize,
    eta: f64,
    delta_touch: f64,
) -> Result<OperatorSample> {
    check_eps(eps)?;
    let gap = 1.0 + u.values()[i];
    if gap <= delta_touch {
        return Err(Error::TouchdownInput {
            x: u.grid().node(i),
            gap,
            delta_touch,
        });
    }
    Ok(OperatorSample::from_values(
        u.values()[i],
        u.du().values()[i],
        u.d2u().values()[i],
        eps,
        eta,
    ))
}

/// Per-column data of `L_u`; the eta dependence is explicit.
#[derive(Debug, Clone, Copy)]
struct Column {
    q: f64,
    inv_gap2: f64,
    c: f64,
}

/// Nine-point stencil of the discrete `L_u` on a fixed grid.
struct Stencil<'a> {
    grid: &'a RectGrid,
    eps2: f64,
    cols: Vec<Column>,
}

impl<'a> Stencil<'a> {
    fn new(u: &MembraneProfile, eps: f64, grid: &'a RectGrid, delta_touch: f64) -> Result<Self> {
        check_eps(eps)?;
        if grid.line() != u.grid() {
            return Err(Error::InvalidGrid(
                "membrane grid differs from the rectangle's x grid".into(),
            ));
        }
        u.check_gap(delta_touch)?;
        let cols = (0..grid.nx())
            .map(|i| {
                let gap = 1.0 + u.values()[i];
                let q = u.du().values()[i] / gap;
                Column {
                    q,
                    inv_gap2: 1.0 / (gap * gap),
                    c: 2.0 * q * q - u.d2u().values()[i] / gap,
                }
            })
            .collect();
        Ok(Self {
            grid,
            eps2: eps * eps,
            cols,
        })
    }

    fn source(&self, i: usize, j: usize) -> f64 {
        self.eps2 * self.grid.eta(j) * self.cols[i].c
    }

    /// Weights for offsets (di, dj) in row-major order over {-1, 0, 1}^2.
    fn weights(&self, i: usize, j: usize) -> [[f64; 3]; 3] {
        let g = self.grid;
        let (hx, he) = (g.hx(), g.h_eta());
        let eta = g.eta(j);
        let col = self.cols[i];
        let a_xeta = -2.0 * self.eps2 * eta * col.q;
        let a_ee = col.inv_gap2 + self.eps2 * eta * eta * col.q * col.q;
        let b = self.eps2 * eta * col.c;

        let cx = self.eps2 / (hx * hx);
        let ce = a_ee / (he * he);
        let cb = b / (2.0 * he);
        let cm = a_xeta / (4.0 * hx * he);
        [
            [cm, cx, -cm],
            [ce - cb, -2.0 * cx - 2.0 * ce, ce + cb],
            [-cm, cx, cm],
        ]
    }

    /// Discrete `L_u w` at interior nodes; zero on the boundary.
    fn apply(&self, w: &GridFunction2D) -> Vec<f64> {
        let g = self.grid;
        let mut out = vec![0.0; g.len()];
        for i in 1..g.nx() - 1 {
            for j in 1..g.n_eta() - 1 {
                let wts = self.weights(i, j);
                let mut s = 0.0;
                for (a, row) in wts.iter().enumerate() {
                    for (b, c) in row.iter().enumerate() {
                        s += c * w.get(i + a - 1, j + b - 1);
                    }
                }
                out[g.index(i, j)] = s;
            }
        }
        out
    }
}

/// Transformed potential `phi`, its deviation `Phi = phi - eta`, and solve diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialSolution {
    pub phi: GridFunction2D,
    pub capital_phi: GridFunction2D,
    /// Infinity norm of `L_h Phi + f` over interior nodes.
    pub lin_residual: f64,
    /// Number of back-substitutions (1 plus refinement steps).
    pub iterations: usize,
}

const MAX_REFINEMENT: usize = 4;

/// Solves `L_u Phi = -f_u`, `Phi = 0` on the boundary, by banded LU over the
/// interior unknowns (x outer, eta inner; bandwidth `n_eta - 1`), followed by
/// iterative refinement until the residual meets `lin_tol * (1 + ||f||_inf)`.
pub fn assemble_and_solve(
    u: &MembraneProfile,
    eps: f64,
    grid: &RectGrid,
    tol: &Tolerances,
) -> Result<PotentialSolution> {
    let st = Stencil::new(u, eps, grid, tol.delta_touch)?;
    let (nx, ne) = (grid.nx(), grid.n_eta());
    let m = ne - 2;
    let n = (nx - 2) * m;
    let unknown = |i: usize, j: usize| (i - 1) * m + (j - 1);

    let mut a = BandMatrix::zeros(n, m + 1, m + 1);
    let mut rhs = vec![0.0; n];
    for i in 1..nx - 1 {
        for j in 1..ne - 1 {
            let row = unknown(i, j);
            rhs[row] = -st.source(i, j);
            let wts = st.weights(i, j);
            for (da, wrow) in wts.iter().enumerate() {
                for (db, &w) in wrow.iter().enumerate() {
                    let (ii, jj) = (i + da - 1, j + db - 1);
                    if !grid.is_boundary(ii, jj) {
                        a.add(row, unknown(ii, jj), w);
                    }
                }
            }
        }
    }
    let rhs_norm = rhs.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    let target = tol.lin_tol * (1.0 + rhs_norm);

    let lu = a.factor()?;
    let mut x = rhs.clone();
    lu.solve_in_place(&mut x);

    let embed = |x: &[f64]| -> Result<GridFunction2D> {
        let mut full = vec![0.0; grid.len()];
        for i in 1..nx - 1 {
            for j in 1..ne - 1 {
                full[grid.index(i, j)] = x[unknown(i, j)];
            }
        }
        GridFunction2D::new(*grid, full).map_err(|_| Error::LinearSolveFailure {
            residual: f64::NAN,
            tolerance: target,
        })
    };

    let mut iterations = 1;
    loop {
        let cap = embed(&x)?;
        let lx = st.apply(&cap);
        let mut r = vec![0.0; n];
        for i in 1..nx - 1 {
            for j in 1..ne - 1 {
                let k = unknown(i, j);
                r[k] = rhs[k] - lx[grid.index(i, j)];
            }
        }
        let res = r.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
        if res <= target {
            let mut phi_vals = cap.values().to_vec();
            for i in 0..nx {
                for j in 0..ne {
                    phi_vals[grid.index(i, j)] += grid.eta(j);
                }
            }
            return Ok(PotentialSolution {
                phi: GridFunction2D::new(*grid, phi_vals)?,
                capital_phi: cap,
                lin_residual: res,
                iterations,
            });
        }
        if iterations > MAX_REFINEMENT {
            return Err(Error::LinearSolveFailure {
                residual: res,
                tolerance: target,
            });
        }
        lu.solve_in_place(&mut r);
        for (xi, ri) in x.iter_mut().zip(&r) {
            *xi += ri;
        }
        iterations += 1;
    }
}

/// Discrete `L_u w` (interior nodes; zero on the boundary).
pub fn apply_operator(
    u: &MembraneProfile,
    eps: f64,
    w: &GridFunction2D,
    delta_touch: f64,
) -> Result<GridFunction2D> {
    let st = Stencil::new(u, eps, w.grid(), delta_touch)?;
    GridFunction2D::new(*w.grid(), st.apply(w))
}

/// `f_u` on every node of the grid.
pub fn source_field(
    u: &MembraneProfile,
    eps: f64,
    grid: &RectGrid,
    delta_touch: f64,
) -> Result<GridFunction2D> {
    let st = Stencil::new(u, eps, grid, delta_touch)?;
    let mut v = vec![0.0; grid.len()];
    for i in 0..grid.nx() {
        for j in 0..grid.n_eta() {
            v[grid.index(i, j)] = st.source(i, j);
        }
    }
    GridFunction2D::new(*grid, v)
}

/// `L_u w` evaluated from its divergence form
///
/// ```text
/// d_x(eps^2 w_x - eps^2 eta q w_eta) + d_eta(-eps^2 eta q w_x + A w_eta)
///   + eps^2 q w_x - eps^2 eta q^2 w_eta
/// ```
///
/// with all derivatives taken by [`d_x`] / [`d_eta`]. This path never uses
/// `u''`, so it is an independent check of the non-divergence coefficients.
pub fn apply_divergence_form(
    u: &MembraneProfile,
    eps: f64,
    w: &GridFunction2D,
) -> Result<GridFunction2D> {
    check_eps(eps)?;
    let g = *w.grid();
    let eps2 = eps * eps;
    let wx = d_x(w);
    let we = d_eta(w);
    let q: Vec<f64> = u
        .values()
        .iter()
        .zip(u.du().values())
        .map(|(v, dv)| dv / (1.0 + v))
        .collect();
    let mut flux_x = vec![0.0; g.len()];
    let mut flux_e = vec![0.0; g.len()];
    let mut lower = vec![0.0; g.len()];
    for i in 0..g.nx() {
        let gap = 1.0 + u.values()[i];
        let du = u.du().values()[i];
        for j in 0..g.n_eta() {
            let k = g.index(i, j);
            let eta = g.eta(j);
            let a_ee = (1.0 + eps2 * eta * eta * du * du) / (gap * gap);
            flux_x[k] = eps2 * wx.values()[k] - eps2 * eta * q[i] * we.values()[k];
            flux_e[k] = -eps2 * eta * q[i] * wx.values()[k] + a_ee * we.values()[k];
            lower[k] = eps2 * q[i] * wx.values()[k] - eps2 * eta * q[i] * q[i] * we.values()[k];
        }
    }
    let div_x = d_x(&GridFunction2D::new(g, flux_x)?);
    let div_e = d_eta(&GridFunction2D::new(g, flux_e)?);
    let v = (0..g.len())
        .map(|k| div_x.values()[k] + div_e.values()[k] + lower[k])
        .collect();
    GridFunction2D::new(g, v)
}

/// Extremes of the principal part of `-L_u` over all nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EllipticityReport {
    pub t_min: f64,
    pub t_max: f64,
    pub d_min: f64,
    pub mu_minus_min: f64,
}

/// Trace `t = eps^2 + A_etaeta`, determinant `d = eps^2/(1+u)^2` and the
/// smaller eigenvalue `mu_- = (t - sqrt(t^2 - 4d))/2` at every node.
pub fn ellipticity_report(
    u: &MembraneProfile,
    eps: f64,
    grid: &RectGrid,
    delta_touch: f64,
) -> Result<EllipticityReport> {
    let mut rep = EllipticityReport {
        t_min: f64::INFINITY,
        t_max: f64::NEG_INFINITY,
        d_min: f64::INFINITY,
        mu_minus_min: f64::INFINITY,
    };
    for i in 0..grid.nx() {
        for j in 0..grid.n_eta() {
            let s = sample_operator(u, eps, i, grid.eta(j), delta_touch)?;
            let gap = 1.0 + u.values()[i];
            let t = s.a_xx + s.a_etaeta;
            let d = s.a_xx / (gap * gap);
            // stable form of (t - sqrt(t^2 - 4d)) / 2
            let mu = 2.0 * d / (t + (t * t - 4.0 * d).max(0.0).sqrt());
            rep.t_min = rep.t_min.min(t);
            rep.t_max = rep.t_max.max(t);
            rep.d_min = rep.d_min.min(d);
            rep.mu_minus_min = rep.mu_minus_min.min(mu);
        }
    }
    Ok(rep)
}

/// Signed margin of one inequality and the node where it is smallest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Margin {
    pub value: f64,
    pub i: usize,
    pub j: usize,
}

impl Margin {
    fn new() -> Self {
        Self {
            value: f64::INFINITY,
            i: 0,
            j: 0,
        }
    }

    fn update(&mut self, value: f64, i: usize, j: usize) {
        if value < self.value {
            *self = Self { value, i, j };
        }
    }
}

/// Worst margins of the comparison bounds
/// `phi <= 1`, `phi >= eta (1 + u)`, `phi >= eta^{1 + 2 eps^2}` and
/// `0 <= d_eta phi(., 1) <= 1 + 2 eps^2`. Negative means violated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub upper: Margin,
    pub lower: Margin,
    pub subsolution: Margin,
    pub trace_lower: Margin,
    pub trace_upper: Margin,
}

impl ComparisonReport {
    pub fn min_margin(&self) -> f64 {
        [
            self.upper.value,
            self.lower.value,
            self.subsolution.value,
            self.trace_lower.value,
            self.trace_upper.value,
        ]
        .into_iter()
        .fold(f64::INFINITY, f64::min)
    }

    pub fn holds(&self, tol_cmp: f64) -> bool {
        self.min_margin() >= -tol_cmp
    }
}

pub fn verify_comparison(sol: &PotentialSolution, u: &MembraneProfile, eps: f64) -> ComparisonReport {
    let g = sol.phi.grid();
    let alpha = 2.0 * eps * eps;
    let mut rep = ComparisonReport {
        upper: Margin::new(),
        lower: Margin::new(),
        subsolution: Margin::new(),
        trace_lower: Margin::new(),
        trace_upper: Margin::new(),
    };
    for i in 0..g.nx() {
        let gap = 1.0 + u.values()[i];
        for j in 0..g.n_eta() {
            let eta = g.eta(j);
            let phi = sol.phi.get(i, j);
            rep.upper.update(1.0 - phi, i, j);
            rep.lower.update(phi - eta * gap, i, j);
            rep.subsolution.update(phi - eta.powf(1.0 + alpha), i, j);
        }
    }
    let top = g.n_eta() - 1;
    for (i, &t) in trace_d_eta_top(&sol.phi).values().iter().enumerate() {
        rep.trace_lower.update(t, i, top);
        rep.trace_upper.update(1.0 + alpha - t, i, top);
    }
    rep
}

/// Both sides of the energy identity obtained by testing `L_u Phi = -f_u` with `Phi`:
///
/// ```text
/// int f Phi = eps^2 int (Phi_x - eta q Phi_eta)^2 + int Phi_eta^2 / (1+u)^2
///           + eps^2 int eta (2 q^2 - u''/(1+u)) Phi Phi_eta
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyIdentity {
    pub lhs: f64,
    pub rhs: f64,
}

impl EnergyIdentity {
    pub fn residual(&self) -> f64 {
        (self.lhs - self.rhs).abs()
    }
}

pub fn energy_identity_terms(
    capital_phi: &GridFunction2D,
    u: &MembraneProfile,
    eps: f64,
) -> Result<EnergyIdentity> {
    let g = *capital_phi.grid();
    let eps2 = eps * eps;
    let px = d_x(capital_phi);
    let pe = d_eta(capital_phi);
    let mut lhs = vec![0.0; g.len()];
    let mut rhs = vec![0.0; g.len()];
    for i in 0..g.nx() {
        let gap = 1.0 + u.values()[i];
        let q = u.du().values()[i] / gap;
        let c = 2.0 * q * q - u.d2u().values()[i] / gap;
        for j in 0..g.n_eta() {
            let k = g.index(i, j);
            let eta = g.eta(j);
            let (p, x, e) = (capital_phi.values()[k], px.values()[k], pe.values()[k]);
            lhs[k] = eps2 * eta * c * p;
            let mixed = x - eta * q * e;
            rhs[k] = eps2 * mixed * mixed + e * e / (gap * gap) + eps2 * eta * c * p * e;
        }
    }
    Ok(EnergyIdentity {
        lhs: integrate_2d(&GridFunction2D::new(g, lhs)?),
        rhs: integrate_2d(&GridFunction2D::new(g, rhs)?),
    })
}

/// `|LHS - RHS|` of the energy identity for a solved potential.
pub fn energy_identity_residual(sol: &PotentialSolution, u: &MembraneProfile, eps: f64) -> Result<f64> {
    Ok(energy_identity_terms(&sol.capital_phi, u, eps)?.residual())
}
