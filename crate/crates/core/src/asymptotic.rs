//! Vanishing aspect ratio harness.
//!
//! For a fixed voltage, solve the coupled problem along a decreasing ladder of
//! aspect ratios and measure how fast the potential approaches the small-gap
//! potential `eta` and how fast the membrane approaches the small-gap branch.

use rayon::prelude::*;
use serde::Serialize;

use crate::config::SweepConfig;
use crate::elliptic::source_field;
use crate::error::{Error, Result};
use crate::fixed_point::{reconstruct_physical, solve_coupled, CoupledSolution};
use crate::grid::{
    d2_eta, d_eta, fit_loglog_slope, l2_1d, l2_2d, linf_2d, trace_d_eta_top, trapezoid,
    w1inf_1d, GridFunction1D, GridFunction2D,
};
use crate::small_gap::{pull_in, solve_at_lambda, Branch, SmallGapBranch};

/// Points in the pull-in sweep used to locate the small-gap branches.
const PULL_IN_POINTS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRecord {
    pub eps: f64,
    pub iterations: usize,
    pub norm_phi_inf: f64,
    pub norm_phi_l2: f64,
    pub norm_dphi_l2: f64,
    pub norm_d2phi_l2: f64,
    pub norm_trace_l2: f64,
    /// `||u_eps - u_0||_{W^1_inf}` against the stable-side small-gap branch.
    pub u_gap_w1inf: f64,
    /// Same against the unstable-side branch (NaN if it does not exist).
    pub u_gap_w1inf_unstable: f64,
    /// Physical-domain `L2` distance between `psi_eps` and `(1+z)/(1+u_eps)`.
    pub psi_gap_l2: f64,
    /// Same integral evaluated on the rectangle with the Jacobian `1 + u_eps`.
    pub psi_gap_l2_transformed: f64,
    pub f_inf: f64,
    /// `2 eps^2 / kappa0^4 + eps^2 / kappa0^2`, `kappa0 = 1 - r0/2`.
    pub f_bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepEntry {
    pub eps: f64,
    pub outcome: std::result::Result<SweepRecord, Error>,
}

/// Quadrature agreement allowed between the two psi-gap integrals.
pub fn quad_tol(h: f64) -> f64 {
    1e-8f64.max(10.0 * h * h)
}

/// Small-gap reference branches at `lambda` on the sweep's x grid. At
/// `lambda = 0` both are the flat membrane.
fn reference_branches(
    lambda: f64,
    cfg: &SweepConfig,
) -> Result<(GridFunction1D, Option<GridFunction1D>)> {
    let line = *cfg.solver.grid()?.line();
    if lambda == 0.0 {
        return Ok((GridFunction1D::zeros(line), Some(GridFunction1D::zeros(line))));
    }
    let pull = pull_in(PULL_IN_POINTS, cfg.solver.tol.delta_touch)?;
    let branches = solve_at_lambda(lambda, &pull, &line)?;
    let pick = |b: Branch| -> Option<&SmallGapBranch> { branches.iter().find(|x| x.branch == b) };
    let stable = pick(Branch::StableSide)
        .ok_or_else(|| Error::BadParameter(format!("no small-gap steady state at lambda = {lambda}")))?
        .profile
        .clone();
    Ok((stable, pick(Branch::UnstableSide).map(|b| b.profile.clone())))
}

/// Measures every sweep quantity for one converged solution.
pub fn measure(
    sol: &CoupledSolution,
    r0: f64,
    u0: &GridFunction1D,
    u0_unstable: Option<&GridFunction1D>,
) -> Result<SweepRecord> {
    let cap = &sol.potential.capital_phi;
    let g = *cap.grid();
    let eps = sol.eps;
    let u = sol.u.u();

    let gap_w1 = |reference: &GridFunction1D| -> Result<f64> {
        Ok(w1inf_1d(&u.combine(1.0, reference, -1.0)?))
    };

    // Physical quadrature: trapezoid in z over (-1, u(x)) with spacing
    // (1 + u) h_eta, then trapezoid in x.
    let phys = reconstruct_physical(sol);
    let mut col = vec![0.0; g.n_eta()];
    let mut inner = vec![0.0; g.nx()];
    for (i, slot) in inner.iter_mut().enumerate() {
        for (j, c) in col.iter_mut().enumerate() {
            let s = phys.sample(i, j);
            *c = (s.psi - s.psi0).powi(2);
        }
        let dz = phys.sample(i, 1).z - phys.sample(i, 0).z;
        *slot = trapezoid(&col, dz);
    }
    let psi_gap_sq = trapezoid(&inner, g.hx());

    let weighted = GridFunction2D::from_fn(g, |_, _| 0.0)?;
    let mut wv = weighted.values().to_vec();
    for i in 0..g.nx() {
        let jac = 1.0 + u.values()[i];
        for j in 0..g.n_eta() {
            let k = g.index(i, j);
            wv[k] = cap.values()[k].powi(2) * jac;
        }
    }
    let transformed_sq = crate::grid::integrate_2d(&GridFunction2D::new(g, wv)?);

    let f = source_field(&sol.u, eps, &g, 0.0)?;
    let kappa0 = 1.0 - r0 / 2.0;
    let e2 = eps * eps;
    Ok(SweepRecord {
        eps,
        iterations: sol.iterations,
        norm_phi_inf: linf_2d(cap),
        norm_phi_l2: l2_2d(cap),
        norm_dphi_l2: l2_2d(&d_eta(cap)),
        norm_d2phi_l2: l2_2d(&d2_eta(cap)),
        norm_trace_l2: l2_1d(&trace_d_eta_top(cap)),
        u_gap_w1inf: gap_w1(u0)?,
        u_gap_w1inf_unstable: match u0_unstable {
            Some(b) => gap_w1(b)?,
            None => f64::NAN,
        },
        psi_gap_l2: psi_gap_sq.max(0.0).sqrt(),
        psi_gap_l2_transformed: transformed_sq.max(0.0).sqrt(),
        f_inf: linf_2d(&f),
        f_bound: 2.0 * e2 / kappa0.powi(4) + e2 / kappa0.powi(2),
    })
}

/// Solves and measures every rung of the ladder. Rungs run in parallel;
/// the result order follows the ladder.
pub fn run_sweep(cfg: &SweepConfig) -> Result<Vec<SweepEntry>> {
    cfg.validate()?;
    let (u0, u0_unstable) = reference_branches(cfg.solver.lambda, cfg)?;
    Ok(cfg
        .eps_ladder
        .par_iter()
        .map(|&eps| {
            let solver = crate::config::SolverConfig {
                epsilon: eps,
                ..cfg.solver.clone()
            };
            let outcome = solve_coupled(&solver)
                .and_then(|sol| measure(&sol, solver.r0, &u0, u0_unstable.as_ref()));
            SweepEntry { eps, outcome }
        })
        .collect())
}

pub fn successful(entries: &[SweepEntry]) -> Vec<SweepRecord> {
    entries
        .iter()
        .filter_map(|e| e.outcome.as_ref().ok().cloned())
        .collect()
}

/// Which measured norm a rate fit refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    PhiL2,
    DPhiL2,
    D2PhiL2,
    TraceL2,
}

impl Quantity {
    pub const ALL: [Quantity; 4] = [
        Quantity::PhiL2,
        Quantity::DPhiL2,
        Quantity::D2PhiL2,
        Quantity::TraceL2,
    ];

    /// Exponent of the upper bound `K eps^p`.
    pub fn bound_exponent(self) -> f64 {
        match self {
            Quantity::PhiL2 => 0.5,
            Quantity::DPhiL2 | Quantity::TraceL2 => 1.0,
            Quantity::D2PhiL2 => 2.0,
        }
    }

    /// Smallest acceptable fitted slope.
    pub fn required_slope(self) -> f64 {
        self.bound_exponent() - 0.1
    }

    pub fn value(self, r: &SweepRecord) -> f64 {
        match self {
            Quantity::PhiL2 => r.norm_phi_l2,
            Quantity::DPhiL2 => r.norm_dphi_l2,
            Quantity::D2PhiL2 => r.norm_d2phi_l2,
            Quantity::TraceL2 => r.norm_trace_l2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Quantity::PhiL2 => "phi_l2",
            Quantity::DPhiL2 => "dphi_l2",
            Quantity::D2PhiL2 => "d2phi_l2",
            Quantity::TraceL2 => "trace_l2",
        }
    }
}

/// Values at or below this are treated as rounding noise.
pub const NOISE_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateFit {
    pub quantity: Quantity,
    pub eps_used: Vec<f64>,
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    pub required_min: f64,
    /// `max_eps value / eps^p`: the smallest constant for which the bound holds on the ladder.
    pub empirical_constant: Option<f64>,
    pub passed: Option<bool>,
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateReport {
    pub fits: Vec<RateFit>,
}

impl RateReport {
    pub fn fit(&self, q: Quantity) -> &RateFit {
        self.fits.iter().find(|f| f.quantity == q).expect("all quantities fitted")
    }

    /// `true` when no fit ran, or every fit that ran met its contract.
    pub fn all_passed(&self) -> bool {
        self.fits.iter().all(|f| f.passed != Some(false))
    }
}

/// Log-log slopes of the four norms. Points at or below `100 * NOISE_FLOOR`
/// are dropped; a quantity with fewer than three usable points is reported as
/// skipped instead of failing the whole report.
pub fn fit_rates(records: &[SweepRecord]) -> Result<RateReport> {
    if records.len() < 3 {
        return Err(Error::InsufficientData {
            needed: 3,
            got: records.len(),
        });
    }
    let fits = Quantity::ALL
        .iter()
        .map(|&q| {
            let pairs: Vec<(f64, f64)> = records
                .iter()
                .map(|r| (r.eps, q.value(r)))
                .filter(|&(_, v)| v > 100.0 * NOISE_FLOOR)
                .collect();
            let eps_used = pairs.iter().map(|p| p.0).collect();
            match fit_loglog_slope(&pairs) {
                Ok((slope, intercept)) => RateFit {
                    quantity: q,
                    eps_used,
                    slope: Some(slope),
                    intercept: Some(intercept),
                    required_min: q.required_slope(),
                    empirical_constant: pairs
                        .iter()
                        .map(|&(e, v)| v / e.powf(q.bound_exponent()))
                        .reduce(f64::max),
                    passed: Some(slope >= q.required_slope()),
                    skipped: None,
                },
                Err(e) => RateFit {
                    quantity: q,
                    eps_used,
                    slope: None,
                    intercept: None,
                    required_min: q.required_slope(),
                    empirical_constant: None,
                    passed: None,
                    skipped: Some(match e {
                        Error::InsufficientData { .. } => "NonPositiveData".to_string(),
                        other => other.to_string(),
                    }),
                },
            }
        })
        .collect();
    Ok(RateReport { fits })
}

/// Both sides of `||d_eta t(., 1)|| <= sqrt(2) (||d_eta t|| + ||d_eta^2 t||)`.
pub fn trace_inequality_check(theta: &GridFunction2D) -> (f64, f64) {
    let lhs = l2_1d(&trace_d_eta_top(theta));
    let rhs = 2f64.sqrt() * (l2_2d(&d_eta(theta)) + l2_2d(&d2_eta(theta)));
    (lhs, rhs)
}

/// `true` if the sequence is strictly decreasing.
pub fn strictly_decreasing(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[1] < w[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::RectGrid;

    fn synthetic(eps: f64, k: f64) -> SweepRecord {
        SweepRecord {
            eps,
            iterations: 1,
            norm_phi_inf: 0.0,
            norm_phi_l2: k * eps.sqrt(),
            norm_dphi_l2: k * eps,
            norm_d2phi_l2: k * eps * eps,
            norm_trace_l2: k * eps,
            u_gap_w1inf: 0.0,
            u_gap_w1inf_unstable: 0.0,
            psi_gap_l2: 0.0,
            psi_gap_l2_transformed: 0.0,
            f_inf: 0.0,
            f_bound: 0.0,
        }
    }

    #[test]
    fn exact_power_laws_fit_exactly() {
        let recs: Vec<_> = [0.4, 0.2, 0.1, 0.05].iter().map(|&e| synthetic(e, 0.7)).collect();
        let rep = fit_rates(&recs).unwrap();
        for q in Quantity::ALL {
            let f = rep.fit(q);
            assert!((f.slope.unwrap() - q.bound_exponent()).abs() < 1e-12);
            assert!((f.empirical_constant.unwrap() - 0.7).abs() < 1e-12);
            assert_eq!(f.passed, Some(true));
        }
        assert!(rep.all_passed());
    }

    #[test]
    fn zero_norms_are_skipped() {
        let recs: Vec<_> = [0.4, 0.2, 0.1].iter().map(|&e| synthetic(e, 0.0)).collect();
        let rep = fit_rates(&recs).unwrap();
        for f in &rep.fits {
            assert_eq!(f.skipped.as_deref(), Some("NonPositiveData"));
            assert_eq!(f.passed, None);
        }
        assert!(fit_rates(&recs[..2]).is_err());
    }

    #[test]
    fn trace_inequality_closed_forms() {
        let g = RectGrid::new(65, 33).unwrap();
        let (l, r) = trace_inequality_check(&GridFunction2D::from_fn(g, |_, e| e).unwrap());
        assert!((l - 2f64.sqrt()).abs() < 1e-12);
        assert!((r - 2.0).abs() < 1e-12);

        let err = |nx: usize, ne: usize| {
            let g = RectGrid::new(nx, ne).unwrap();
            let t = GridFunction2D::from_fn(g, |x, e| e * e * (std::f64::consts::PI * x).sin()).unwrap();
            let (l, r) = trace_inequality_check(&t);
            assert!(l <= r);
            let r_exact = 2f64.sqrt() * (2.0 / 3f64.sqrt() + 2.0);
            ((l - 2.0).abs(), (r - r_exact).abs())
        };
        let (c, f) = (err(33, 17), err(65, 33));
        // The one-sided trace stencil is exact on quadratics in eta.
        assert!(c.0 < 1e-12 && f.0 < 1e-12);
        assert!(c.1 < 1e-2 && f.1 < c.1 / 3.0, "{c:?} {f:?}");
    }

    #[test]
    fn decreasing_helper() {
        assert!(strictly_decreasing(&[3.0, 2.0, 1.0]));
        assert!(!strictly_decreasing(&[3.0, 3.0, 1.0]));
    }
}
