use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn memsolve(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_memsolve"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

fn column(csv_text: &str, name: &str) -> Vec<f64> {
    let mut lines = csv_text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let k = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(k).unwrap().parse().unwrap()).collect()
}

#[test]
fn rest_state_solve_writes_zero_deflection() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"lambda": 0, "epsilon": 0.1, "nx": 33, "neta": 17}"#);
    let out = dir.path().join("out");
    let o = memsolve(&["solve", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(o.stdout.is_empty());
    let u = fs::read_to_string(out.join("u.csv")).unwrap();
    assert!(u.starts_with("x,u,u_x,u_xx\n"));
    assert!(column(&u, "u").iter().all(|&v| v == 0.0));
    let pot = fs::read_to_string(out.join("potential.csv")).unwrap();
    for (eta, phi) in column(&pot, "eta").iter().zip(column(&pot, "phi")) {
        assert!((eta - phi).abs() <= 1e-10);
    }
    let phys = fs::read_to_string(out.join("physical.csv")).unwrap();
    assert!(phys.starts_with("x,z,psi,psi0\n"));

    let diag: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("diagnostics.json")).unwrap()).unwrap();
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(diag["manifest_hash"], manifest["manifest_hash"]);
    assert_eq!(manifest["config"]["tol_cmp"], 1e-6);
    assert_eq!(manifest["outputs"].as_object().unwrap().len(), 4);
}

#[test]
fn small_voltage_is_in_the_threshold_regime() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"lambda": 0.01, "epsilon": 0.1, "r0": 1}"#);
    let out = dir.path().join("out");
    let o = memsolve(&["solve", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let diag: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("diagnostics.json")).unwrap()).unwrap();
    assert_eq!(diag["in_lambda0_regime"], true);
    let l0 = diag["lambda0"].as_f64().unwrap();
    assert!((l0 - 1.0 / (4.0 * 1.04 * 1.02)).abs() < 1e-15);
    assert_eq!(diag["comparison_holds"], true);
}

#[test]
fn config_errors_exit_with_code_four() {
    let dir = tempfile::tempdir().unwrap();
    for body in [r#"{"r0": 3}"#, r#"{"tol_cpm": 1e-6}"#, "{"] {
        let cfg = write_config(dir.path(), "c.json", body);
        let o = memsolve(&["solve", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(4), "{body}");
    }
    let o = memsolve(&["solve", "--config", &write_config(dir.path(), "r.json", r#"{"r0": 3}"#), "--out", "x"]);
    assert!(String::from_utf8_lossy(&o.stderr).contains("(0, 2)"));
    assert!(!dir.path().join("o").exists());
    assert_eq!(memsolve(&["smallgap", "--out", "x"]).status.code(), Some(4));
    assert_eq!(memsolve(&["smallgap", "--lambda", "-1", "--out", "x"]).status.code(), Some(4));
    assert_eq!(memsolve(&["bound", "--r0", "2.5", "--eps", "0.1"]).status.code(), Some(4));
    assert_eq!(memsolve(&["sweep", "--config", "/nonexistent.json", "--out", "x"]).status.code(), Some(4));
}

#[test]
fn admissibility_failure_exits_with_code_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"lambda": 0.3, "r0": 0.1, "nx": 33, "neta": 17}"#);
    let o = memsolve(&["solve", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn non_convergence_exits_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"lambda": 0.05, "fp_max_iter": 2, "nx": 33, "neta": 17}"#);
    let o = memsolve(&["solve", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn smallgap_linearization_and_empty_branches() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("low");
    let o = memsolve(&["smallgap", "--lambda", "1e-4", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = fs::read_to_string(out.join("branches.csv")).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    let stable: Vec<_> = rows.iter().filter(|r| r[0] == "stable-side").collect();
    assert_eq!(stable.len(), 257);
    for r in stable {
        let (x, u): (f64, f64) = (r[3].parse().unwrap(), r[4].parse().unwrap());
        assert!((u - 1e-4 * (x * x - 1.0) / 2.0).abs() <= 1e-7);
    }

    let out = dir.path().join("high");
    let o = memsolve(&["smallgap", "--lambda", "0.5", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(fs::read_to_string(out.join("branches.csv")).unwrap(), "branch,lambda,u0_mid,x,u\n");
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["extra"]["branch_count"], 0);
}

#[test]
fn bound_prints_json() {
    let o = memsolve(&["bound", "--r0", "0.5", "--uniform"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((v["lambda0"].as_f64().unwrap() - 0.046875).abs() < 1e-15);

    let o = memsolve(&["bound", "--r0", "1", "--eps", "0.0001"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((v["lambda0"].as_f64().unwrap() - 0.25).abs() < 1e-6);

    let o = memsolve(&["bound", "--uniform", "--optimize"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let opt = &v["optimum"];
    let best = opt["lambda0_star"].as_f64().unwrap();
    assert!(best >= opt["lambda0_at_r0_star_minus_0.01"].as_f64().unwrap());
    assert!(best >= opt["lambda0_at_r0_star_plus_0.01"].as_f64().unwrap());
}

#[test]
fn rest_state_sweep_marks_fits_skipped() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "s.json",
        r#"{"lambda": 0, "eps_ladder": [0.4, 0.2, 0.1], "nx": 33, "neta": 17}"#,
    );
    let out = dir.path().join("out");
    let o = memsolve(&["sweep", "--config", &cfg, "--out", out.to_str().unwrap(), "--plots"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rates: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("rates.json")).unwrap()).unwrap();
    for f in rates["fits"].as_array().unwrap() {
        assert_eq!(f["skipped"], "NonPositiveData");
    }
    let sweep = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert!(column(&sweep, "Phi_l2").iter().all(|&v| v < 1e-12));
    assert!(out.join("plot_sweep.gp").exists());
}

#[test]
fn failed_rung_exits_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "s.json",
        r#"{"lambda": 0.05, "fp_max_iter": 3, "eps_ladder": [0.4, 0.2, 0.1], "nx": 33, "neta": 17}"#,
    );
    let out = dir.path().join("out");
    let o = memsolve(&["sweep", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let sweep = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert!(sweep.lines().skip(1).all(|l| l.contains(",failed,")));
}
