use memsolve::asymptotic::{fit_rates, run_sweep, strictly_decreasing, successful, Quantity};
use memsolve::{SolverConfig, SweepConfig};

fn small_sweep(lambda: f64) -> SweepConfig {
    SweepConfig {
        eps_ladder: vec![0.4, 0.2, 0.1, 0.05],
        solver: SolverConfig {
            epsilon: 0.4,
            lambda,
            nx: 65,
            neta: 33,
            ..SolverConfig::default()
        },
    }
}

#[test]
fn rest_state_sweep_skips_every_fit() {
    let entries = run_sweep(&small_sweep(0.0)).unwrap();
    let recs = successful(&entries);
    assert_eq!(recs.len(), 4);
    for r in &recs {
        assert!(r.norm_phi_l2 < 1e-12 && r.u_gap_w1inf == 0.0);
    }
    let rep = fit_rates(&recs).unwrap();
    assert!(rep.fits.iter().all(|f| f.skipped.is_some()));
    assert!(rep.all_passed());
}

#[test]
fn coarse_sweep_meets_rate_contracts() {
    let entries = run_sweep(&small_sweep(0.01)).unwrap();
    let recs = successful(&entries);
    assert_eq!(recs.len(), 4);
    let rep = fit_rates(&recs).unwrap();
    for q in Quantity::ALL {
        let f = rep.fit(q);
        assert!(f.slope.unwrap() >= q.required_slope(), "{f:?}");
    }
    let gaps: Vec<f64> = recs.iter().map(|r| r.u_gap_w1inf).collect();
    assert!(strictly_decreasing(&gaps), "{gaps:?}");
    for r in &recs {
        assert!(r.f_inf <= r.f_bound, "{r:?}");
        assert!(r.norm_phi_inf <= 1.0);
    }
}

#[test]
fn sweep_is_deterministic() {
    let a = run_sweep(&small_sweep(0.02)).unwrap();
    let b = run_sweep(&small_sweep(0.02)).unwrap();
    assert_eq!(a, b);
}
