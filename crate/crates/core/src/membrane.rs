//! The admissible set, the electrostatic load on the membrane, the linear
//! membrane solve that realizes the map `S`, and the explicit small-voltage
//! threshold `lambda_0(r0, eps)`.

use serde::Serialize;

use crate::banded::thomas;
use crate::config::Tolerances;
use crate::elliptic::PotentialSolution;
use crate::error::{Error, Result};
use crate::grid::{d1, d2, trace_d_eta_top, GridFunction1D, LineGrid};

/// Membrane deflection with cached first and second differences.
#[derive(Debug, Clone, PartialEq)]
pub struct MembraneProfile {
    u: GridFunction1D,
    d1u: GridFunction1D,
    d2u: GridFunction1D,
}

impl MembraneProfile {
    /// Requires `u(+-1) = 0` exactly and `u > -1` everywhere.
    pub fn new(u: GridFunction1D) -> Result<Self> {
        let v = u.values();
        if v[0] != 0.0 || v[v.len() - 1] != 0.0 {
            return Err(Error::BadParameter(format!(
                "membrane must be clamped: u(-1) = {}, u(1) = {}",
                v[0],
                v[v.len() - 1]
            )));
        }
        if let Some(i) = v.iter().position(|&w| w <= -1.0) {
            return Err(Error::TouchdownInput {
                x: u.grid().node(i),
                gap: 1.0 + v[i],
                delta_touch: 0.0,
            });
        }
        let d1u = d1(&u);
        let d2u = d2(&u);
        Ok(Self { u, d1u, d2u })
    }

    pub fn zero(grid: LineGrid) -> Self {
        Self::new(GridFunction1D::zeros(grid)).expect("zero profile is admissible")
    }

    pub fn from_fn(grid: LineGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        let mut values: Vec<f64> = grid.nodes().into_iter().map(f).collect();
        let n = values.len();
        values[0] = 0.0;
        values[n - 1] = 0.0;
        Self::new(GridFunction1D::new(grid, values)?)
    }

    pub fn grid(&self) -> &LineGrid {
        self.u.grid()
    }

    pub fn u(&self) -> &GridFunction1D {
        &self.u
    }

    pub fn du(&self) -> &GridFunction1D {
        &self.d1u
    }

    pub fn d2u(&self) -> &GridFunction1D {
        &self.d2u
    }

    pub fn values(&self) -> &[f64] {
        self.u.values()
    }

    /// Smallest gap `1 + u` and the node where it occurs.
    pub fn min_gap(&self) -> (usize, f64) {
        self.values()
            .iter()
            .enumerate()
            .map(|(i, v)| (i, 1.0 + v))
            .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a })
    }

    /// Rejects profiles whose gap falls to `delta_touch` or below.
    pub fn check_gap(&self, delta_touch: f64) -> Result<()> {
        let (i, gap) = self.min_gap();
        if gap <= delta_touch {
            return Err(Error::TouchdownInput {
                x: self.grid().node(i),
                gap,
                delta_touch,
            });
        }
        Ok(())
    }

    /// Averages `u(x)` and `u(-x)`.
    pub fn symmetrized(&self) -> Result<Self> {
        let g = *self.grid();
        let v = self.values();
        let sym = (0..g.len()).map(|i| 0.5 * (v[i] + v[g.mirror(i)])).collect();
        Self::new(GridFunction1D::new(g, sym)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdmissibilityReport {
    /// `max |u(x) - u(-x)|`
    pub even_margin: f64,
    pub convexity_min: f64,
    pub convexity_max: f64,
    pub slope_max: f64,
    pub depth_min: f64,
    pub r0: f64,
    pub verdict: bool,
}

/// Membership test for the admissible set with parameter `r0`, plus the
/// derived bounds `u >= -r0/2` and `|u'| <= 2 r0` as consistency checks.
pub fn check_admissible(
    u: &MembraneProfile,
    r0: f64,
    tol: &Tolerances,
) -> Result<AdmissibilityReport> {
    if !(r0 > 0.0 && r0 < 2.0) {
        return Err(Error::BadParameter(format!("r0 = {r0} is outside (0, 2)")));
    }
    let report = AdmissibilityReport {
        even_margin: u.u().even_defect(),
        convexity_min: u.d2u().min(),
        convexity_max: u.d2u().max(),
        slope_max: u.du().values().iter().fold(0.0, |m, v| m.max(v.abs())),
        depth_min: u.u().min(),
        r0,
        verdict: false,
    };
    let verdict = report.even_margin <= tol.tol_sym
        && report.convexity_min >= -tol.tol_c
        && report.convexity_max <= r0 + tol.tol_c;
    if verdict
        && (report.depth_min < -r0 / 2.0 - tol.tol_c || report.slope_max > 2.0 * r0 + tol.tol_c)
    {
        return Err(Error::InternalInconsistency(format!(
            "profile passes 0 <= u'' <= r0 but has depth {} (bound {}) and slope {} (bound {})",
            report.depth_min,
            -r0 / 2.0,
            report.slope_max,
            2.0 * r0
        )));
    }
    Ok(AdmissibilityReport { verdict, ..report })
}

/// Load `g_u` on the membrane and the trace `d_eta phi(., 1)` it is built from.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadProfile {
    pub g: GridFunction1D,
    pub trace: GridFunction1D,
}

/// `g_u = (1 + eps^2 u'^2) / (1 + u)^2 * |d_eta phi_u(x, 1)|^2`
pub fn compute_load(
    u: &MembraneProfile,
    sol: &PotentialSolution,
    eps: f64,
    delta_touch: f64,
) -> Result<LoadProfile> {
    u.check_gap(delta_touch)?;
    let trace = trace_d_eta_top(&sol.phi);
    let eps2 = eps * eps;
    let g: Vec<f64> = u
        .values()
        .iter()
        .zip(u.du().values())
        .zip(trace.values())
        .map(|((&w, &dw), &t)| (1.0 + eps2 * dw * dw) / ((1.0 + w) * (1.0 + w)) * t * t)
        .collect();
    Ok(LoadProfile {
        g: GridFunction1D::new(*u.grid(), g)?,
        trace,
    })
}

/// `v = S(u)`: solves `v'' = lambda g` at interior nodes with `v(+-1) = 0`.
///
/// The second-difference matrix is an M-matrix, so `g >= 0` yields `v <= 0`
/// exactly in floating point and `d2(v) = lambda g` holds to rounding.
pub fn apply_s(u: &MembraneProfile, load: &LoadProfile, lambda: f64) -> Result<MembraneProfile> {
    if !(lambda >= 0.0) {
        return Err(Error::BadParameter(format!("lambda = {lambda} must be >= 0")));
    }
    let grid = *u.grid();
    let n = grid.len();
    let m = n - 2;
    let h2 = grid.spacing().powi(2);
    let rhs: Vec<f64> = load.g.values()[1..n - 1]
        .iter()
        .map(|g| lambda * g * h2)
        .collect();
    let interior = thomas(&vec![1.0; m], &vec![-2.0; m], &vec![1.0; m], &rhs)?;
    let mut v = Vec::with_capacity(n);
    v.push(0.0);
    v.extend(interior);
    v.push(0.0);
    MembraneProfile::new(GridFunction1D::new(grid, v)?)
}

/// Which aspect ratio the threshold is evaluated for.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpsChoice {
    Value(f64),
    /// Worst case over `eps in (0, 1)`, i.e. `eps = 1`.
    Uniform,
}

/// Largest `lambda` with `4 lambda (1 + 4 eps^2 r0^2)(1 + 2 eps^2) / (2 - r0)^2 <= r0`.
pub fn lambda0_bound(r0: f64, eps: EpsChoice) -> Result<f64> {
    if !(r0 > 0.0 && r0 < 2.0) {
        return Err(Error::BadParameter(format!("r0 = {r0} is outside (0, 2)")));
    }
    let e = match eps {
        EpsChoice::Value(e) if (0.0..=1.0).contains(&e) => e,
        EpsChoice::Value(e) => {
            return Err(Error::BadParameter(format!("eps = {e} is outside [0, 1]")))
        }
        EpsChoice::Uniform => 1.0,
    };
    let e2 = e * e;
    Ok(r0 * (2.0 - r0).powi(2) / (4.0 * (1.0 + 4.0 * e2 * r0 * r0) * (1.0 + 2.0 * e2)))
}

/// Golden-section search for the `r0` maximizing [`lambda0_bound`].
/// Returns `(r0*, lambda0(r0*))`.
pub fn optimize_r0(eps: EpsChoice) -> Result<(f64, f64)> {
    lambda0_bound(1.0, eps)?;
    let f = |r: f64| lambda0_bound(r, eps).unwrap_or(0.0);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (1e-9, 2.0 - 1e-9);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > 1e-12 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let r = 0.5 * (a + b);
    Ok((r, f(r)))
}
