use memsolve::elliptic::verify_comparison;
use memsolve::fixed_point::{reconstruct_physical, residual_check};
use memsolve::membrane::{lambda0_bound, EpsChoice};
use memsolve::{solve_coupled, SolverConfig};

fn cfg(eps: f64, lambda: f64, nx: usize, neta: usize) -> SolverConfig {
    SolverConfig {
        epsilon: eps,
        lambda,
        nx,
        neta,
        ..SolverConfig::default()
    }
}

#[test]
fn converges_at_the_threshold_voltage() {
    for eps in [0.1, 0.4] {
        let l0 = lambda0_bound(1.0, EpsChoice::Value(eps)).unwrap();
        let c = cfg(eps, l0, 129, 65);
        let sol = solve_coupled(&c).unwrap();
        let a = &sol.admissibility;
        assert!(sol.in_lambda0_regime);
        assert!(a.verdict);
        assert!(a.convexity_min >= 0.0 && a.convexity_max <= 1.0, "{a:?}");
        assert!(a.depth_min >= -0.5);

        // update norms are non-increasing after the first step (10% slack)
        for w in sol.update_history[1..].windows(2) {
            assert!(w[1] <= 1.1 * w[0], "{:?}", sol.update_history);
        }
        assert!(sol.fixed_point_defect <= c.fp_tol * 2.0);

        let cmp = verify_comparison(&sol.potential, &sol.u, eps);
        assert!(cmp.holds(c.tol.tol_cmp), "{cmp:?}");
    }
}

#[test]
fn damped_iteration_reaches_the_same_profile() {
    let plain = solve_coupled(&cfg(0.2, 0.05, 65, 33)).unwrap();
    let damped = solve_coupled(&SolverConfig {
        relax_omega: 0.6,
        ..cfg(0.2, 0.05, 65, 33)
    })
    .unwrap();
    assert!(damped.iterations > plain.iterations);
    for (a, b) in plain.u.values().iter().zip(damped.u.values()) {
        assert!((a - b).abs() < 1e-9);
    }
}

#[test]
fn profile_is_grid_consistent() {
    // Midpoint deflection on three grids; the differences shrink at second order.
    let mid = |nx: usize, neta: usize| {
        let s = solve_coupled(&cfg(0.1, 0.1, nx, neta)).unwrap();
        s.u.values()[(nx - 1) / 2]
    };
    let (a, b, c) = (mid(33, 17), mid(65, 33), mid(129, 65));
    let ratio = (a - b) / (b - c);
    assert!((3.0..=5.0).contains(&ratio), "{a} {b} {c} ratio {ratio}");
}

#[test]
fn residuals_stay_at_the_iteration_floor() {
    for (nx, neta) in [(65, 33), (129, 65)] {
        let c = cfg(0.1, 0.01, nx, neta);
        let sol = solve_coupled(&c).unwrap();
        let r = residual_check(&sol, &c).unwrap();
        assert!(r.membrane <= 1e-10 && r.potential <= 1e-9, "{r:?}");
    }
}

#[test]
fn physical_potential_approaches_small_gap_form() {
    let dev = |eps: f64| {
        let s = solve_coupled(&cfg(eps, 0.05, 65, 33)).unwrap();
        reconstruct_physical(&s).max_small_gap_deviation()
    };
    let (a, b, c) = (dev(0.4), dev(0.2), dev(0.1));
    assert!(a > b && b > c, "{a} {b} {c}");
    assert!(c < 1e-3);
}

#[test]
fn strong_voltage_outside_threshold_reports_failure_mode() {
    // Far above the threshold the iteration either touches down or leaves
    // the admissible set; it must not return a solution.
    let c = SolverConfig {
        fp_max_iter: 50,
        ..cfg(0.1, 2.0, 65, 33)
    };
    let err = solve_coupled(&c).unwrap_err();
    assert!(
        matches!(
            err,
            memsolve::Error::TouchdownApproach { .. }
                | memsolve::Error::LeftAdmissibleSet { .. }
                | memsolve::Error::NonConvergence { .. }
        ),
        "{err}"
    );
}
