use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use anyhow::anyhow;
use serde::Serialize;
use serde_json::{json, Value};

use memsolve::asymptotic::{fit_rates, run_sweep, successful, RateReport, SweepEntry, SweepRecord};
use memsolve::elliptic::{
    ellipticity_report, energy_identity_residual, verify_comparison, ComparisonReport,
    EllipticityReport,
};
use memsolve::fixed_point::{reconstruct_physical, residual_check, Residuals};
use memsolve::grid::{d2_eta, d_eta, l2_1d, l2_2d, linf_2d, trace_d_eta_top, LineGrid};
use memsolve::membrane::{lambda0_bound, optimize_r0, AdmissibilityReport, EpsChoice};
use memsolve::small_gap::{pull_in, solve_at_lambda};
use memsolve::{solve_coupled, Error, SolverConfig, SweepConfig, Tolerances};

use crate::export::{fmt_f64, sha256_hex, Output, Table};
use crate::manifest::RunManifest;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_NON_CONVERGENCE: i32 = 2;
pub const EXIT_ADMISSIBILITY: i32 = 3;
pub const EXIT_CONFIG: i32 = 4;
pub const EXIT_RATE_CONTRACT: i32 = 5;

/// A command failure with the process exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn new(code: i32, error: impl Into<anyhow::Error>) -> Self {
        Self {
            code,
            error: error.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self::new(exit_code(&e), e)
    }
}

pub type CmdResult<T> = std::result::Result<T, Failure>;

fn internal<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::new(EXIT_INTERNAL, e)
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NonConvergence { .. } => EXIT_NON_CONVERGENCE,
        Error::LeftAdmissibleSet { .. }
        | Error::TouchdownApproach { .. }
        | Error::TouchdownInput { .. } => EXIT_ADMISSIBILITY,
        Error::Config(_) | Error::BadParameter(_) => EXIT_CONFIG,
        _ => EXIT_INTERNAL,
    }
}

fn read_config(path: &Path) -> CmdResult<(String, BTreeMap<String, String>)> {
    let text = fs::read_to_string(path).map_err(|e| {
        Failure::new(EXIT_CONFIG, anyhow!("cannot read config {}: {e}", path.display()))
    })?;
    let mut hashes = BTreeMap::new();
    hashes.insert("config".to_string(), sha256_hex(text.as_bytes()));
    Ok((text, hashes))
}

/// Writes the outputs and then the manifest that lists them.
fn finish(dir: &Path, outputs: &[Output], mut manifest: RunManifest, start: Instant) -> CmdResult<()> {
    fs::create_dir_all(dir).map_err(internal)?;
    for o in outputs {
        o.write_to(dir).map_err(internal)?;
        manifest.record(o);
    }
    manifest.wall_clock_seconds = start.elapsed().as_secs_f64();
    Output::json("manifest.json", &manifest)
        .and_then(|m| m.write_to(dir))
        .map_err(internal)
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("plain data serializes")
}

#[derive(Debug, Serialize)]
pub struct SolveDiagnostics {
    pub manifest_hash: String,
    pub iterations: usize,
    pub update_history: Vec<f64>,
    pub final_update_norm: f64,
    pub fixed_point_defect: f64,
    pub lambda: f64,
    pub epsilon: f64,
    pub lambda0: f64,
    pub in_lambda0_regime: bool,
    pub min_gap: f64,
    pub norms: BTreeMap<&'static str, f64>,
    pub admissibility: AdmissibilityReport,
    pub residuals: Residuals,
    pub comparison: ComparisonReport,
    pub comparison_holds: bool,
    pub ellipticity: EllipticityReport,
    pub energy_identity_residual: f64,
    pub linear_residual: f64,
}

pub fn cmd_solve(config: &Path, out: &Path) -> CmdResult<SolveDiagnostics> {
    let start = Instant::now();
    let (text, hashes) = read_config(config)?;
    let cfg = SolverConfig::from_json(&text)?;
    let mut manifest = RunManifest::new("solve", to_value(&cfg), hashes);

    let sol = solve_coupled(&cfg)?;
    let grid = cfg.grid()?;
    let cap = &sol.potential.capital_phi;
    let comparison = verify_comparison(&sol.potential, &sol.u, cfg.epsilon);
    let mut norms = BTreeMap::new();
    norms.insert("Phi_inf", linf_2d(cap));
    norms.insert("Phi_l2", l2_2d(cap));
    norms.insert("dPhi_l2", l2_2d(&d_eta(cap)));
    norms.insert("d2Phi_l2", l2_2d(&d2_eta(cap)));
    norms.insert("trace_l2", l2_1d(&trace_d_eta_top(cap)));
    let diag = SolveDiagnostics {
        manifest_hash: manifest.manifest_hash.clone(),
        iterations: sol.iterations,
        update_history: sol.update_history.clone(),
        final_update_norm: sol.final_update_norm,
        fixed_point_defect: sol.fixed_point_defect,
        lambda: sol.lambda,
        epsilon: sol.eps,
        lambda0: sol.lambda0,
        in_lambda0_regime: sol.in_lambda0_regime,
        min_gap: sol.u.min_gap().1,
        norms,
        admissibility: sol.admissibility.clone(),
        residuals: residual_check(&sol, &cfg)?,
        comparison_holds: comparison.holds(cfg.tol.tol_cmp),
        comparison,
        ellipticity: ellipticity_report(&sol.u, cfg.epsilon, &grid, cfg.tol.delta_touch)?,
        energy_identity_residual: energy_identity_residual(&sol.potential, &sol.u, cfg.epsilon)?,
        linear_residual: sol.potential.lin_residual,
    };

    let line = grid.line();
    let mut u_t = Table::new(&["x", "u", "u_x", "u_xx"]);
    for i in 0..line.len() {
        u_t.push_floats(&[
            line.node(i),
            sol.u.values()[i],
            sol.u.du().values()[i],
            sol.u.d2u().values()[i],
        ]);
    }
    let mut pot = Table::new(&["x", "eta", "phi", "Phi"]);
    for i in 0..grid.nx() {
        for j in 0..grid.n_eta() {
            let k = grid.index(i, j);
            pot.push_floats(&[
                grid.x(i),
                grid.eta(j),
                sol.potential.phi.values()[k],
                cap.values()[k],
            ]);
        }
    }
    let phys = reconstruct_physical(&sol);
    let mut ph = Table::new(&["x", "z", "psi", "psi0"]);
    for s in &phys.samples {
        ph.push_floats(&[s.x, s.z, s.psi, s.psi0]);
    }
    let outputs = vec![
        Output::csv("u.csv", &u_t).map_err(internal)?,
        Output::csv("potential.csv", &pot).map_err(internal)?,
        Output::csv("physical.csv", &ph).map_err(internal)?,
        Output::json("diagnostics.json", &diag).map_err(internal)?,
    ];
    manifest
        .extra
        .insert("iterations".into(), json!(sol.iterations));
    finish(out, &outputs, manifest, start)?;
    Ok(diag)
}

/// Which small-gap run to perform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SmallGapMode {
    Lambda(f64),
    PullIn,
}

/// Sample count of the pull-in sweep.
pub const PULL_IN_POINTS: usize = 200;

#[derive(Debug, Clone, Serialize)]
pub struct PullInSummary {
    pub manifest_hash: String,
    pub lambda_star: f64,
    pub u0_at_fold: f64,
}

/// Returns the number of branches written.
pub fn cmd_smallgap(mode: SmallGapMode, nx: usize, out: &Path) -> CmdResult<usize> {
    let start = Instant::now();
    let delta_touch = Tolerances::default().delta_touch;
    let line = LineGrid::new(nx).map_err(|e| Failure::new(EXIT_CONFIG, e))?;
    let lambda = match mode {
        SmallGapMode::Lambda(l) if !(l > 0.0 && l.is_finite()) => {
            return Err(Failure::new(EXIT_CONFIG, anyhow!("--lambda must be a finite value > 0, got {l}")))
        }
        SmallGapMode::Lambda(l) => Some(l),
        SmallGapMode::PullIn => None,
    };
    let config = json!({
        "mode": if lambda.is_some() { "lambda" } else { "pullin" },
        "lambda": lambda,
        "nx": nx,
        "pull_in_points": PULL_IN_POINTS,
        "delta_touch": delta_touch,
    });
    let mut manifest = RunManifest::new("smallgap", config, BTreeMap::new());

    let pull = pull_in(PULL_IN_POINTS, delta_touch)?;
    let target = lambda.unwrap_or(pull.lambda_star);
    let branches = solve_at_lambda(target, &pull, &line)?;

    let mut bt = Table::new(&["branch", "lambda", "u0_mid", "x", "u"]);
    for b in &branches {
        for i in 0..line.len() {
            bt.push(vec![
                b.branch.label().to_string(),
                fmt_f64(b.lambda),
                fmt_f64(b.u0_mid),
                fmt_f64(line.node(i)),
                fmt_f64(b.profile.values()[i]),
            ]);
        }
    }
    let mut ct = Table::new(&["u0_mid", "lambda"]);
    for &(u0, l) in &pull.curve {
        ct.push_floats(&[u0, l]);
    }
    let mut outputs = vec![
        Output::csv("branches.csv", &bt).map_err(internal)?,
        Output::csv("curve.csv", &ct).map_err(internal)?,
    ];
    if lambda.is_none() {
        let summary = PullInSummary {
            manifest_hash: manifest.manifest_hash.clone(),
            lambda_star: pull.lambda_star,
            u0_at_fold: pull.u0_at_fold,
        };
        outputs.push(Output::json("pullin.json", &summary).map_err(internal)?);
    }
    manifest.extra.insert("branch_count".into(), json!(branches.len()));
    manifest.extra.insert("lambda_star".into(), json!(pull.lambda_star));
    finish(out, &outputs, manifest, start)?;
    Ok(branches.len())
}

pub const SWEEP_COLUMNS: [&str; 15] = [
    "eps",
    "status",
    "iterations",
    "Phi_inf",
    "Phi_l2",
    "dPhi_l2",
    "d2Phi_l2",
    "trace_l2",
    "u_gap_w1inf",
    "u_gap_w1inf_unstable",
    "psi_gap_l2",
    "psi_gap_l2_transformed",
    "f_inf",
    "f_bound",
    "message",
];

fn sweep_row(e: &SweepEntry) -> Vec<String> {
    match &e.outcome {
        Ok(r) => {
            let SweepRecord {
                iterations,
                norm_phi_inf,
                norm_phi_l2,
                norm_dphi_l2,
                norm_d2phi_l2,
                norm_trace_l2,
                u_gap_w1inf,
                u_gap_w1inf_unstable,
                psi_gap_l2,
                psi_gap_l2_transformed,
                f_inf,
                f_bound,
                ..
            } = *r;
            let mut row = vec![fmt_f64(e.eps), "ok".into(), iterations.to_string()];
            row.extend(
                [
                    norm_phi_inf,
                    norm_phi_l2,
                    norm_dphi_l2,
                    norm_d2phi_l2,
                    norm_trace_l2,
                    u_gap_w1inf,
                    u_gap_w1inf_unstable,
                    psi_gap_l2,
                    psi_gap_l2_transformed,
                    f_inf,
                    f_bound,
                ]
                .iter()
                .map(|&v| fmt_f64(v)),
            );
            row.push(String::new());
            row
        }
        Err(err) => {
            let mut row = vec![fmt_f64(e.eps), "failed".into()];
            row.extend(std::iter::repeat(String::new()).take(SWEEP_COLUMNS.len() - 3));
            row.push(err.to_string());
            row
        }
    }
}

#[derive(Debug, Serialize)]
pub struct RatesFile {
    pub manifest_hash: String,
    pub lambda: f64,
    pub eps_ladder: Vec<f64>,
    pub failed_eps: Vec<f64>,
    #[serde(flatten)]
    pub report: RateReport,
    pub all_passed: bool,
}

const PLOT_SCRIPT: &str = r#"# gnuplot script: norms of Phi against the aspect ratio.
set datafile separator ","
set logscale xy
set key left top
set xlabel "eps"
set ylabel "norm"
set terminal pngcairo size 900,600
set output "norms.png"
plot "sweep.csv" skip 1 using 1:5 with linespoints title "||Phi||_L2", \
     "" skip 1 using 1:6 with linespoints title "||d_eta Phi||_L2", \
     "" skip 1 using 1:7 with linespoints title "||d_eta^2 Phi||_L2", \
     "" skip 1 using 1:8 with linespoints title "||d_eta Phi(.,1)||_L2"
set output "gaps.png"
set ylabel "distance to the small-gap limit"
plot "sweep.csv" skip 1 using 1:9 with linespoints title "||u_eps - u_0||_W1inf", \
     "" skip 1 using 1:11 with linespoints title "||psi_eps - psi_0||_L2"
"#;

pub fn cmd_sweep(config: &Path, out: &Path, plots: bool) -> CmdResult<RatesFile> {
    let start = Instant::now();
    let (text, hashes) = read_config(config)?;
    let cfg = SweepConfig::from_json(&text)?;
    let mut manifest = RunManifest::new("sweep", to_value(&cfg), hashes);

    let entries = run_sweep(&cfg)?;
    let failed_eps: Vec<f64> = entries
        .iter()
        .filter(|e| e.outcome.is_err())
        .map(|e| e.eps)
        .collect();
    let records = successful(&entries);
    let report = fit_rates(&records).unwrap_or(RateReport { fits: Vec::new() });

    let mut t = Table::new(&SWEEP_COLUMNS);
    for e in &entries {
        t.push(sweep_row(e));
    }
    let rates = RatesFile {
        manifest_hash: manifest.manifest_hash.clone(),
        lambda: cfg.solver.lambda,
        eps_ladder: cfg.eps_ladder.clone(),
        failed_eps: failed_eps.clone(),
        all_passed: report.all_passed(),
        report,
    };
    let mut outputs = vec![
        Output::csv("sweep.csv", &t).map_err(internal)?,
        Output::json("rates.json", &rates).map_err(internal)?,
    ];
    manifest.extra.insert("failed_count".into(), json!(failed_eps.len()));
    if plots {
        outputs.push(Output::text("plot_sweep.gp", PLOT_SCRIPT.to_string()));
    }
    finish(out, &outputs, manifest, start)?;

    if let Some(e) = entries.iter().find_map(|e| e.outcome.as_ref().err()) {
        return Err(Failure::new(
            EXIT_NON_CONVERGENCE,
            anyhow!("{} of {} aspect ratios failed; first: {e}", failed_eps.len(), entries.len()),
        ));
    }
    if !rates.all_passed {
        return Err(Failure::new(
            EXIT_RATE_CONTRACT,
            anyhow!("a rate contract failed; see rates.json"),
        ));
    }
    Ok(rates)
}

/// `--r0` is required unless `--optimize` is given.
pub fn cmd_bound(r0: Option<f64>, eps: EpsChoice, optimize: bool) -> CmdResult<Value> {
    let bad = |e: Error| Failure::new(EXIT_CONFIG, e);
    let mut doc = serde_json::Map::new();
    match eps {
        EpsChoice::Value(e) => doc.insert("eps".into(), json!(e)),
        EpsChoice::Uniform => doc.insert("uniform".into(), json!(true)),
    };
    match r0 {
        Some(r) => {
            doc.insert("r0".into(), json!(r));
            doc.insert("lambda0".into(), json!(lambda0_bound(r, eps).map_err(bad)?));
        }
        None if !optimize => {
            return Err(Failure::new(EXIT_CONFIG, anyhow!("--r0 is required without --optimize")))
        }
        None => {}
    }
    if optimize {
        let (r_star, l_star) = optimize_r0(eps).map_err(bad)?;
        let probe = |r: f64| lambda0_bound(r, eps).ok();
        doc.insert(
            "optimum".into(),
            json!({
                "r0_star": r_star,
                "lambda0_star": l_star,
                "lambda0_at_r0_star_minus_0.01": probe(r_star - 0.01),
                "lambda0_at_r0_star_plus_0.01": probe(r_star + 0.01),
            }),
        );
    }
    Ok(Value::Object(doc))
}
