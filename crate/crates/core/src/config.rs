//! Solver and sweep configuration, loaded from a single JSON document.
//!
//! Unknown keys are rejected. Missing keys take the documented defaults, and
//! the resolved configuration is what gets written to run manifests.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::RectGrid;

/// Numerical tolerances shared by the solver stages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerances {
    /// Linear solve: residual must be `<= lin_tol * (1 + ||rhs||_inf)`.
    pub lin_tol: f64,
    /// Allowed violation of the comparison bounds.
    pub tol_cmp: f64,
    /// Allowed `|u(x) - u(-x)|`.
    pub tol_sym: f64,
    /// Allowed violation of `0 <= u'' <= r0`.
    pub tol_c: f64,
    /// Inputs with `min(1 + u) <= delta_touch` are rejected.
    pub delta_touch: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            lin_tol: 1e-10,
            tol_cmp: 1e-6,
            tol_sym: 1e-9,
            tol_c: 1e-8,
            delta_touch: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverConfig {
    pub epsilon: f64,
    pub lambda: f64,
    pub r0: f64,
    pub nx: usize,
    pub neta: usize,
    pub relax_omega: f64,
    pub fp_tol: f64,
    pub fp_max_iter: usize,
    pub symmetrize: bool,
    #[serde(flatten)]
    pub tol: Tolerances,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            lambda: 0.01,
            r0: 1.0,
            nx: 257,
            neta: 129,
            relax_omega: 1.0,
            fp_tol: 1e-10,
            fp_max_iter: 200,
            symmetrize: false,
            tol: Tolerances::default(),
        }
    }
}

impl SolverConfig {
    pub fn grid(&self) -> Result<RectGrid> {
        RectGrid::new(self.nx, self.neta)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return bad(format!("epsilon = {} is outside (0, 1]", self.epsilon));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda = {} must be a finite value >= 0", self.lambda));
        }
        if !(self.r0 > 0.0 && self.r0 < 2.0) {
            return bad(format!("r0 = {} is outside (0, 2)", self.r0));
        }
        if self.nx < 5 || self.nx % 2 == 0 {
            return bad(format!("nx = {} must be odd and >= 5", self.nx));
        }
        if self.neta < 5 {
            return bad(format!("neta = {} must be >= 5", self.neta));
        }
        if !(self.relax_omega > 0.0 && self.relax_omega <= 1.0) {
            return bad(format!("relax_omega = {} is outside (0, 1]", self.relax_omega));
        }
        if self.fp_max_iter < 1 {
            return bad("fp_max_iter must be >= 1".into());
        }
        let t = &self.tol;
        for (name, v) in [
            ("fp_tol", self.fp_tol),
            ("lin_tol", t.lin_tol),
            ("tol_cmp", t.tol_cmp),
            ("tol_sym", t.tol_sym),
            ("tol_c", t.tol_c),
            ("delta_touch", t.delta_touch),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} = {v} must be a finite value > 0"));
            }
        }
        if t.delta_touch >= 1.0 {
            return bad(format!("delta_touch = {} must be < 1", t.delta_touch));
        }
        Ok(())
    }

    /// Parses and validates a `solve` configuration.
    pub fn from_json(text: &str) -> Result<Self> {
        let raw = RawConfig::parse(text)?;
        if raw.eps_ladder.is_some() {
            return Err(Error::Config(
                "eps_ladder is only valid in a sweep configuration".into(),
            ));
        }
        let cfg = raw.into_solver(None);
        cfg.validate()?;
        Ok(cfg)
    }
}

pub const DEFAULT_LADDER: [f64; 5] = [0.4, 0.2, 0.1, 0.05, 0.025];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepConfig {
    pub eps_ladder: Vec<f64>,
    /// Template for every rung; its `epsilon` is overwritten per rung.
    #[serde(flatten)]
    pub solver: SolverConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            eps_ladder: DEFAULT_LADDER.to_vec(),
            solver: SolverConfig {
                epsilon: DEFAULT_LADDER[0],
                ..SolverConfig::default()
            },
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.eps_ladder.is_empty() {
            return Err(Error::Config("eps_ladder must not be empty".into()));
        }
        for (k, e) in self.eps_ladder.iter().enumerate() {
            if !(*e > 0.0 && *e <= 1.0) {
                return Err(Error::Config(format!(
                    "eps_ladder[{k}] = {e} is outside (0, 1]"
                )));
            }
        }
        if self.eps_ladder.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Config(
                "eps_ladder must be strictly decreasing".into(),
            ));
        }
        self.solver.validate()
    }

    /// Parses and validates a `sweep` configuration. The per-rung `epsilon`
    /// comes from `eps_ladder`, so an explicit `epsilon` key is rejected.
    pub fn from_json(text: &str) -> Result<Self> {
        let raw = RawConfig::parse(text)?;
        if raw.epsilon.is_some() {
            return Err(Error::Config(
                "epsilon is set per rung by eps_ladder; remove the epsilon key".into(),
            ));
        }
        let ladder = raw.eps_ladder.clone().unwrap_or_else(|| DEFAULT_LADDER.to_vec());
        let first = ladder.first().copied();
        let cfg = Self {
            solver: raw.into_solver(first),
            eps_ladder: ladder,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    epsilon: Option<f64>,
    lambda: Option<f64>,
    r0: Option<f64>,
    nx: Option<usize>,
    neta: Option<usize>,
    relax_omega: Option<f64>,
    fp_tol: Option<f64>,
    fp_max_iter: Option<usize>,
    lin_tol: Option<f64>,
    tol_cmp: Option<f64>,
    tol_sym: Option<f64>,
    tol_c: Option<f64>,
    delta_touch: Option<f64>,
    symmetrize: Option<bool>,
    eps_ladder: Option<Vec<f64>>,
}

impl RawConfig {
    fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    fn into_solver(self, eps_override: Option<f64>) -> SolverConfig {
        let d = SolverConfig::default();
        let dt = d.tol;
        SolverConfig {
            epsilon: eps_override.or(self.epsilon).unwrap_or(d.epsilon),
            lambda: self.lambda.unwrap_or(d.lambda),
            r0: self.r0.unwrap_or(d.r0),
            nx: self.nx.unwrap_or(d.nx),
            neta: self.neta.unwrap_or(d.neta),
            relax_omega: self.relax_omega.unwrap_or(d.relax_omega),
            fp_tol: self.fp_tol.unwrap_or(d.fp_tol),
            fp_max_iter: self.fp_max_iter.unwrap_or(d.fp_max_iter),
            symmetrize: self.symmetrize.unwrap_or(d.symmetrize),
            tol: Tolerances {
                lin_tol: self.lin_tol.unwrap_or(dt.lin_tol),
                tol_cmp: self.tol_cmp.unwrap_or(dt.tol_cmp),
                tol_sym: self.tol_sym.unwrap_or(dt.tol_sym),
                tol_c: self.tol_c.unwrap_or(dt.tol_c),
                delta_touch: self.delta_touch.unwrap_or(dt.delta_touch),
            },
        }
    }
}
