//! Coupled membrane/potential solver.
//!
//! Starting from the flat membrane, iterate `u <- (1 - omega) u + omega S(u)`
//! where `S` solves the potential problem for the current shape and then the
//! linear membrane equation with the resulting load. Every iterate is checked
//! against the admissible set before it reaches the elliptic solver.

use serde::Serialize;

use crate::config::SolverConfig;
use crate::elliptic::{apply_operator, assemble_and_solve, PotentialSolution};
use crate::error::{Error, Result};
use crate::grid::{d2, linf_1d, GridFunction1D};
use crate::membrane::{
    apply_s, check_admissible, compute_load, lambda0_bound, AdmissibilityReport, EpsChoice,
    LoadProfile, MembraneProfile,
};

/// Acceptance threshold for the discrete membrane equation residual.
pub const FP_RESIDUAL_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct CoupledSolution {
    pub u: MembraneProfile,
    /// Potential for the final `u`.
    pub potential: PotentialSolution,
    /// Load for the final `u`.
    pub load: LoadProfile,
    pub iterations: usize,
    pub final_update_norm: f64,
    /// `||u_{k+1} - u_k||_inf` per iteration.
    pub update_history: Vec<f64>,
    /// `||S(u) - u||_inf` for the returned `u`.
    pub fixed_point_defect: f64,
    pub admissibility: AdmissibilityReport,
    pub in_lambda0_regime: bool,
    pub lambda0: f64,
    pub lambda: f64,
    pub eps: f64,
}

/// One Picard pass: potential and load for `u`, then `S(u)`.
fn s_map(
    u: &MembraneProfile,
    cfg: &SolverConfig,
    grid: &crate::grid::RectGrid,
) -> Result<(PotentialSolution, LoadProfile, MembraneProfile)> {
    let potential = assemble_and_solve(u, cfg.epsilon, grid, &cfg.tol)?;
    let load = compute_load(u, &potential, cfg.epsilon, cfg.tol.delta_touch)?;
    let s = apply_s(u, &load, cfg.lambda)?;
    Ok((potential, load, s))
}

fn guard_iterate(
    u: &MembraneProfile,
    cfg: &SolverConfig,
    iteration: usize,
) -> Result<AdmissibilityReport> {
    let (_, min_gap) = u.min_gap();
    if min_gap <= cfg.tol.delta_touch {
        return Err(Error::TouchdownApproach { iteration, min_gap });
    }
    let rep = check_admissible(u, cfg.r0, &cfg.tol)?;
    if !rep.verdict {
        return Err(Error::LeftAdmissibleSet {
            iteration,
            convexity_min: rep.convexity_min,
            convexity_max: rep.convexity_max,
            r0: cfg.r0,
        });
    }
    Ok(rep)
}

pub fn solve_coupled(cfg: &SolverConfig) -> Result<CoupledSolution> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let omega = cfg.relax_omega;
    let lambda0 = lambda0_bound(cfg.r0, EpsChoice::Value(cfg.epsilon))?;

    let mut u = MembraneProfile::zero(*grid.line());
    let mut history = Vec::new();
    let mut converged = false;
    // Potential and load of the last iterate, reused when the final update is exactly zero.
    let mut last = None;
    for k in 0..cfg.fp_max_iter {
        guard_iterate(&u, cfg, k)?;
        let (potential, load, s) = s_map(&u, cfg, &grid)?;
        let mut next = if omega == 1.0 {
            s.clone()
        } else {
            MembraneProfile::new(u.u().combine(1.0 - omega, s.u(), omega)?)?
        };
        if cfg.symmetrize {
            next = next.symmetrized()?;
        }
        let update = linf_1d(&next.u().combine(1.0, u.u(), -1.0)?);
        history.push(update);
        last = (next == u).then_some((potential, load, s));
        u = next;
        if update <= cfg.fp_tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence {
            iterations: history.len(),
            last_update: history.last().copied().unwrap_or(f64::NAN),
            history,
        });
    }
    let admissibility = guard_iterate(&u, cfg, history.len())?;
    let (potential, load, s) = match last {
        Some(cached) => cached,
        None => s_map(&u, cfg, &grid)?,
    };
    let fixed_point_defect = linf_1d(&s.u().combine(1.0, u.u(), -1.0)?);
    Ok(CoupledSolution {
        iterations: history.len(),
        final_update_norm: *history.last().expect("at least one iteration"),
        update_history: history,
        fixed_point_defect,
        admissibility,
        in_lambda0_regime: cfg.lambda <= lambda0,
        lambda0,
        lambda: cfg.lambda,
        eps: cfg.epsilon,
        u,
        potential,
        load,
    })
}

/// Residuals of the discrete coupled system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Residuals {
    /// `max |u'' - lambda (1 + eps^2 u'^2)/(1+u)^2 |d_eta phi(., 1)|^2|` over interior nodes.
    pub membrane: f64,
    /// `max |L_u phi|` over interior nodes.
    pub potential: f64,
}

/// Recomputes both residuals from `sol.u` and `sol.potential.phi` alone.
pub fn residual_check(sol: &CoupledSolution, cfg: &SolverConfig) -> Result<Residuals> {
    residuals_for(&sol.u, &sol.potential, cfg)
}

pub fn residuals_for(
    u: &MembraneProfile,
    potential: &PotentialSolution,
    cfg: &SolverConfig,
) -> Result<Residuals> {
    let load = compute_load(u, potential, cfg.epsilon, cfg.tol.delta_touch)?;
    let d2u = d2(u.u());
    let n = u.grid().len();
    let membrane = (1..n - 1)
        .map(|i| (d2u.values()[i] - cfg.lambda * load.g.values()[i]).abs())
        .fold(0.0, f64::max);
    let lphi = apply_operator(u, cfg.epsilon, &potential.phi, cfg.tol.delta_touch)?;
    let potential = lphi.values().iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    Ok(Residuals {
        membrane,
        potential,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhysicalSample {
    pub x: f64,
    pub z: f64,
    pub psi: f64,
    /// Small-gap potential `(1 + z)/(1 + u(x))` at the same point.
    pub psi0: f64,
}

/// Potential on the deformed gap, one sample per rectangle node, ordered
/// x-major like the rectangle grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalPotential {
    pub nx: usize,
    pub neta: usize,
    pub samples: Vec<PhysicalSample>,
}

/// Maps `(x_i, eta_j)` to `(x_i, (1 + u(x_i)) eta_j - 1)` and carries
/// `psi = phi(x_i, eta_j)` along.
pub fn reconstruct_physical(sol: &CoupledSolution) -> PhysicalPotential {
    let phi = &sol.potential.phi;
    let g = phi.grid();
    let mut samples = Vec::with_capacity(g.len());
    for i in 0..g.nx() {
        let gap = 1.0 + sol.u.values()[i];
        for j in 0..g.n_eta() {
            let z = gap * g.eta(j) - 1.0;
            samples.push(PhysicalSample {
                x: g.x(i),
                z,
                psi: phi.get(i, j),
                psi0: (1.0 + z) / gap,
            });
        }
    }
    PhysicalPotential {
        nx: g.nx(),
        neta: g.n_eta(),
        samples,
    }
}

impl PhysicalPotential {
    pub fn sample(&self, i: usize, j: usize) -> &PhysicalSample {
        &self.samples[i * self.neta + j]
    }

    /// `max |psi - psi0|`
    pub fn max_small_gap_deviation(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| (s.psi - s.psi0).abs())
            .fold(0.0, f64::max)
    }
}

/// Membrane profile `u` of a solution as a plain grid function.
pub fn deflection(sol: &CoupledSolution) -> &GridFunction1D {
    sol.u.u()
}
