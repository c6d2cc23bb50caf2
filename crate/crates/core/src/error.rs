use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid function has a non-finite value at node {index}")]
    NonFinite { index: usize },

    #[error("non-positive value at pair {index}; drop points that hit the rounding floor")]
    NonPositiveData { index: usize },

    #[error("insufficient data: need at least {needed} usable points, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("membrane too close to the plate at x = {x}: 1 + u = {gap} (delta_touch = {delta_touch})")]
    TouchdownInput { x: f64, gap: f64, delta_touch: f64 },

    #[error("linear solve failed: residual {residual:e} above tolerance {tolerance:e}")]
    LinearSolveFailure { residual: f64, tolerance: f64 },

    #[error("internal inconsistency: {0}")]
    InternalInconsistency(String),

    #[error("bad parameter: {0}")]
    BadParameter(String),

    #[error("fixed-point iteration did not converge after {iterations} iterations (last update {last_update:e})")]
    NonConvergence {
        iterations: usize,
        last_update: f64,
        history: Vec<f64>,
    },

    #[error(
        "iterate {iteration} left the admissible set: u'' in [{convexity_min:e}, {convexity_max:e}], r0 = {r0}; try a smaller lambda or a larger r0"
    )]
    LeftAdmissibleSet {
        iteration: usize,
        convexity_min: f64,
        convexity_max: f64,
        r0: f64,
    },

    #[error("iterate {iteration} approaches touchdown: min(1 + u) = {min_gap:e}")]
    TouchdownApproach { iteration: usize, min_gap: f64 },

    #[error("integration from u0 = {u0} did not reach w = 0 before x = {guard}")]
    NoCrossing { u0: f64, guard: f64 },

    #[error("the lambda(u0) curve has no interior maximum over the sweep")]
    FoldNotBracketed,

    #[error("config error: {0}")]
    Config(String),
}
