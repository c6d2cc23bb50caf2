//! Small-gap steady states `u'' = lambda / (1 + u)^2`, `u(+-1) = 0`.
//!
//! Rescaling turns the two-point problem into a one-parameter family: solve
//! `w'' = 1/(1+w)^2`, `w(0) = u0`, `w'(0) = 0` until `w` returns to zero at
//! `s`; then `lambda = s^2` and `u(x) = w(s x)`. The bifurcation diagram is
//! the scalar curve `u0 -> lambda(u0)`, whose maximum is the pull-in voltage.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{GridFunction1D, LineGrid};

/// Base RK4 step.
pub const RK4_STEP: f64 = 1e-4;
/// Crossing bisection tolerance.
pub const CROSSING_TOL: f64 = 1e-12;
pub const ODE_TOL: f64 = 1e-8;
pub const TOL_FOLD: f64 = 1e-6;
const X_GUARD: f64 = 2.0;
/// Smallest gap `1 + u0` the branch inversion will search down to.
const MIN_GAP_SEARCH: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    StableSide,
    UnstableSide,
}

impl Branch {
    pub fn label(&self) -> &'static str {
        match self {
            Branch::StableSide => "stable-side",
            Branch::UnstableSide => "unstable-side",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmallGapBranch {
    pub lambda: f64,
    pub u0_mid: f64,
    pub profile: GridFunction1D,
    pub branch: Branch,
}

/// Dense RK4 trajectory of `w'' = 1/(1+w)^2` from `x = 0`.
struct Trajectory {
    x: Vec<f64>,
    w: Vec<f64>,
    p: Vec<f64>,
}

fn accel(w: f64) -> f64 {
    1.0 / ((1.0 + w) * (1.0 + w))
}

/// Step size: `RK4_STEP`, reduced near the plate where the local time
/// scale `(1 + w)^{3/2}` becomes shorter.
fn step_for(w: f64) -> f64 {
    RK4_STEP.min(0.002 * (1.0 + w).powf(1.5))
}

impl Trajectory {
    fn integrate(u0: f64) -> Result<Self> {
        let (mut x, mut w, mut p) = (0.0, u0, 0.0);
        let mut t = Trajectory {
            x: vec![x],
            w: vec![w],
            p: vec![p],
        };
        while w < 0.0 {
            if x > X_GUARD {
                return Err(Error::NoCrossing { u0, guard: X_GUARD });
            }
            let h = step_for(w);
            let (k1w, k1p) = (p, accel(w));
            let (k2w, k2p) = (p + 0.5 * h * k1p, accel(w + 0.5 * h * k1w));
            let (k3w, k3p) = (p + 0.5 * h * k2p, accel(w + 0.5 * h * k2w));
            let (k4w, k4p) = (p + h * k3p, accel(w + h * k3w));
            w += h / 6.0 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w);
            p += h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
            x += h;
            t.x.push(x);
            t.w.push(w);
            t.p.push(p);
        }
        Ok(t)
    }

    /// Cubic Hermite interpolation of `w` on step `k` (between nodes k and k+1).
    fn hermite(&self, k: usize, s: f64) -> f64 {
        let h = self.x[k + 1] - self.x[k];
        let t = (s - self.x[k]) / h;
        let (t2, t3) = (t * t, t * t * t);
        (2.0 * t3 - 3.0 * t2 + 1.0) * self.w[k]
            + (t3 - 2.0 * t2 + t) * h * self.p[k]
            + (-2.0 * t3 + 3.0 * t2) * self.w[k + 1]
            + (t3 - t2) * h * self.p[k + 1]
    }

    fn eval(&self, s: f64) -> f64 {
        let k = match self.x.binary_search_by(|v| v.total_cmp(&s)) {
            Ok(k) => return self.w[k],
            Err(k) => k.clamp(1, self.x.len() - 1) - 1,
        };
        self.hermite(k, s)
    }

    /// Zero crossing inside the last step, refined by bisection.
    fn crossing(&self) -> f64 {
        let k = self.x.len() - 2;
        let (mut a, mut b) = (self.x[k], self.x[k + 1]);
        if self.w[k + 1] == 0.0 {
            return b;
        }
        while b - a > CROSSING_TOL {
            let m = 0.5 * (a + b);
            if self.hermite(k, m) < 0.0 {
                a = m;
            } else {
                b = m;
            }
        }
        0.5 * (a + b)
    }
}

/// Voltage `lambda(u0)` and the matching steady profile on `grid`.
pub fn lambda_of_u0(u0: f64, grid: &LineGrid) -> Result<(f64, GridFunction1D)> {
    let traj = check_u0(u0).and_then(|_| Trajectory::integrate(u0))?;
    let s = traj.crossing();
    let n = grid.len();
    let values = (0..n)
        .map(|i| {
            if i == 0 || i + 1 == n {
                0.0
            } else {
                traj.eval(s * grid.node(i).abs()).min(0.0)
            }
        })
        .collect();
    Ok((s * s, GridFunction1D::new(*grid, values)?))
}

/// `lambda(u0)` without sampling a profile.
pub fn lambda_only(u0: f64) -> Result<f64> {
    check_u0(u0)?;
    let s = Trajectory::integrate(u0)?.crossing();
    Ok(s * s)
}

fn check_u0(u0: f64) -> Result<()> {
    if u0 > -1.0 && u0 < 0.0 {
        Ok(())
    } else {
        Err(Error::BadParameter(format!("u0 = {u0} is outside (-1, 0)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PullInResult {
    pub lambda_star: f64,
    pub u0_at_fold: f64,
    /// `(u0_mid, lambda)` samples in increasing `u0`.
    pub curve: Vec<(f64, f64)>,
}

/// Graded partition of `(-1 + delta, -delta)`, clustered at both ends.
fn graded_partition(points: usize, delta: f64) -> Vec<f64> {
    let (lo, hi) = (-1.0 + delta, -delta);
    (0..points)
        .map(|k| {
            let t = k as f64 / (points - 1) as f64;
            lo + (hi - lo) * 0.5 * (1.0 - (std::f64::consts::PI * t).cos())
        })
        .collect()
}

/// Sweeps the curve with `points` samples, then maximizes it by
/// golden-section search around the best sample.
pub fn pull_in(points: usize, delta_touch: f64) -> Result<PullInResult> {
    if points < 3 {
        return Err(Error::BadParameter("pull-in sweep needs at least 3 points".into()));
    }
    let u0s = graded_partition(points, delta_touch);
    let curve: Vec<(f64, f64)> = u0s
        .par_iter()
        .map(|&u0| lambda_only(u0).map(|l| (u0, l)))
        .collect::<Result<_>>()?;
    let best = curve
        .iter()
        .enumerate()
        .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .map(|(k, _)| k)
        .expect("non-empty curve");
    if best == 0 || best + 1 == curve.len() {
        return Err(Error::FoldNotBracketed);
    }
    let (u0_at_fold, lambda_star) = golden_max(curve[best - 1].0, curve[best + 1].0)?;
    Ok(PullInResult {
        lambda_star,
        u0_at_fold,
        curve,
    })
}

fn golden_max(mut a: f64, mut b: f64) -> Result<(f64, f64)> {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (lambda_only(c)?, lambda_only(d)?);
    while b - a > 1e-10 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = lambda_only(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = lambda_only(d)?;
        }
    }
    let u = 0.5 * (a + b);
    Ok((u, lambda_only(u)?))
}

/// Bisection for `lambda(u0) = target` between `below` (where the curve is
/// under the target) and `above` (where it is over it), in either order.
fn invert(target: f64, mut below: f64, mut above: f64) -> Result<f64> {
    while (above - below).abs() > 1e-14 * (1.0 + below.abs()) {
        let m = 0.5 * (below + above);
        if lambda_only(m)? < target {
            below = m;
        } else {
            above = m;
        }
    }
    Ok(0.5 * (below + above))
}

/// All steady states at voltage `lambda`: two below the fold, one at it,
/// none above. Labels are positional: the branch with `|u0|` smaller than at
/// the fold is the stable side.
///
/// The unstable-side search reaches down to a gap of `1e-12`; for voltages
/// below `lambda` at that depth only the stable branch is returned.
pub fn solve_at_lambda(
    lambda: f64,
    pull: &PullInResult,
    grid: &LineGrid,
) -> Result<Vec<SmallGapBranch>> {
    if !(lambda > 0.0) {
        return Err(Error::BadParameter(format!("lambda = {lambda} must be > 0")));
    }
    let fold = pull.u0_at_fold;
    if lambda > pull.lambda_star + TOL_FOLD {
        return Ok(Vec::new());
    }
    let make = |u0: f64, branch: Branch| -> Result<SmallGapBranch> {
        let (lam, profile) = lambda_of_u0(u0, grid)?;
        Ok(SmallGapBranch {
            lambda: lam,
            u0_mid: u0,
            profile,
            branch,
        })
    };
    if lambda >= pull.lambda_star - TOL_FOLD {
        return Ok(vec![make(fold, Branch::StableSide)?]);
    }
    let mut out = Vec::with_capacity(2);
    // lambda(u0) ~ -2 u0 near zero, so -lambda/4 lies below the target.
    let shallow = -0.25 * lambda;
    if shallow > fold && lambda_only(shallow)? < lambda {
        out.push(make(invert(lambda, shallow, fold)?, Branch::StableSide)?);
    }
    let deep = -1.0 + MIN_GAP_SEARCH;
    if lambda_only(deep)? < lambda {
        out.push(make(invert(lambda, deep, fold)?, Branch::UnstableSide)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::d2;

    /// Closed-form crossing from the first integral `w'^2 = 2 (1/a - 1/(1+w))`,
    /// `a = 1 + u0`; independent of the RK4 path.
    fn lambda_exact(u0: f64) -> f64 {
        let a = 1.0 + u0;
        let s = (a / 2.0).sqrt() * ((1.0 - a).sqrt() + a * ((1.0 + (1.0 - a).sqrt()) / a.sqrt()).ln());
        s * s
    }

    #[test]
    fn rk4_matches_closed_form() {
        for u0 in [-1e-4, -1e-3, -0.005, -0.1, -0.3883, -0.5, -0.9, -0.999, -1.0 + 1e-8] {
            let l = lambda_only(u0).unwrap();
            let e = lambda_exact(u0);
            assert!((l - e).abs() <= 1e-9 * e.max(1e-3), "u0 {u0}: {l} vs {e}");
        }
    }

    #[test]
    fn near_zero_asymptote() {
        // lambda ~ -2 u0 at leading order; the exact value at u0 = -0.005 is 0.0099168.
        let l = lambda_only(-0.005).unwrap();
        assert!((l - 0.009_916_827_789_710_394).abs() < 1e-10);
        for u0 in [-1e-3, -1e-4] {
            let ratio = lambda_only(u0).unwrap() / (-2.0 * u0);
            assert!((0.99..=1.01).contains(&ratio));
        }
    }

    #[test]
    fn refined_independent_rk4_agrees() {
        // Fixed step 1e-5, no adaptivity, crossing by linear interpolation refined with a secant step.
        let u0 = -0.5;
        let h = 1e-5;
        let (mut x, mut w, mut p) = (0.0f64, u0, 0.0f64);
        let f = |w: f64| 1.0 / ((1.0 + w) * (1.0 + w));
        loop {
            let (k1w, k1p) = (p, f(w));
            let (k2w, k2p) = (p + 0.5 * h * k1p, f(w + 0.5 * h * k1w));
            let (k3w, k3p) = (p + 0.5 * h * k2p, f(w + 0.5 * h * k2w));
            let (k4w, k4p) = (p + h * k3p, f(w + h * k3w));
            let wn = w + h / 6.0 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w);
            let pn = p + h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
            if wn >= 0.0 {
                // Newton on the local Taylor model w + p t + f(w) t^2 / 2 = 0
                let mut t = -w / p;
                for _ in 0..5 {
                    let g = w + p * t + 0.5 * f(w) * t * t;
                    t -= g / (p + f(w) * t);
                }
                x += t;
                break;
            }
            x += h;
            w = wn;
            p = pn;
        }
        let oracle = x * x;
        assert!((lambda_only(u0).unwrap() - oracle).abs() <= 1e-8);
        assert!((oracle - lambda_exact(u0)).abs() <= 1e-8);
    }

    #[test]
    fn profile_satisfies_the_ode() {
        let g = LineGrid::new(257).unwrap();
        for u0 in [-0.005, -0.2, -0.3883, -0.6] {
            let (lam, prof) = lambda_of_u0(u0, &g).unwrap();
            assert_eq!(prof.values()[g.center()], u0);
            assert!(prof.even_defect() < 1e-15);
            let d = d2(&prof);
            // Truncation of the 3-point stencil: h^2/12 max|u''''|,
            // u'''' = 6 lam u'^2/(1+u)^4 - 2 lam^2/(1+u)^5.
            let du = crate::grid::d1(&prof);
            let mut trunc: f64 = 0.0;
            for i in 0..g.len() {
                let (v, dv) = (prof.values()[i], du.values()[i]);
                let u4 = 6.0 * lam * dv * dv / (1.0 + v).powi(4) - 2.0 * lam * lam / (1.0 + v).powi(5);
                trunc = trunc.max(u4.abs());
            }
            let allowance = 10.0 * ODE_TOL + g.spacing().powi(2) / 12.0 * trunc * 1.1;
            for i in 1..g.len() - 1 {
                let v = prof.values()[i];
                let r = (d.values()[i] - lam / ((1.0 + v) * (1.0 + v))).abs();
                assert!(r <= allowance, "u0 {u0} node {i}: {r} > {allowance}");
            }
        }
        // At small lambda the truncation term is negligible and the plain tolerance applies.
        let (lam, prof) = lambda_of_u0(-0.005, &g).unwrap();
        let d = d2(&prof);
        for i in 1..g.len() - 1 {
            let v = prof.values()[i];
            assert!((d.values()[i] - lam / ((1.0 + v) * (1.0 + v))).abs() <= 10.0 * ODE_TOL);
        }
    }

    #[test]
    fn out_of_range_u0() {
        let g = LineGrid::new(9).unwrap();
        assert!(lambda_of_u0(0.0, &g).is_err());
        assert!(lambda_of_u0(-1.0, &g).is_err());
        assert!(lambda_only(0.1).is_err());
    }

    #[test]
    fn pull_in_fold() {
        let p = pull_in(200, 1e-3).unwrap();
        // Fold of the closed-form curve, located with 40-digit arithmetic.
        assert!((p.lambda_star - 0.350_004_119_342_749_74).abs() < 1e-9);
        assert!((p.u0_at_fold + 0.388_346_718_912_782_8).abs() < 1e-4);
        let (first, last) = (p.curve[0].1, p.curve[p.curve.len() - 1].1);
        assert!(first < p.lambda_star && last < p.lambda_star);
        assert!(p.curve.iter().all(|&(_, l)| l > 0.0 && l <= p.lambda_star));
    }

    #[test]
    fn branches_below_at_and_above_fold() {
        let g = LineGrid::new(129).unwrap();
        let p = pull_in(200, 1e-3).unwrap();
        let two = solve_at_lambda(p.lambda_star / 2.0, &p, &g).unwrap();
        assert_eq!(two.len(), 2);
        assert_eq!(two[0].branch, Branch::StableSide);
        assert_eq!(two[1].branch, Branch::UnstableSide);
        assert!(two[0].u0_mid > p.u0_at_fold && two[1].u0_mid < p.u0_at_fold);
        for b in &two {
            assert!((b.lambda - p.lambda_star / 2.0).abs() < 1e-10);
        }
        assert!(solve_at_lambda(2.0 * p.lambda_star, &p, &g).unwrap().is_empty());
        let one = solve_at_lambda(p.lambda_star, &p, &g).unwrap();
        assert_eq!(one.len(), 1);
        assert!((one[0].u0_mid - p.u0_at_fold).abs() <= TOL_FOLD);
    }

    #[test]
    fn small_voltage_branch_is_linear() {
        let g = LineGrid::new(257).unwrap();
        let p = pull_in(200, 1e-3).unwrap();
        let lam = 1e-4;
        let b = solve_at_lambda(lam, &p, &g).unwrap();
        let stable = b.iter().find(|b| b.branch == Branch::StableSide).unwrap();
        let err = g
            .nodes()
            .iter()
            .zip(stable.profile.values())
            .map(|(x, u)| (u - lam * (x * x - 1.0) / 2.0).abs())
            .fold(0.0, f64::max);
        assert!(err <= 1e-7, "{err}");
    }
}
