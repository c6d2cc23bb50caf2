//! Banded LU factorization without pivoting, and the Thomas algorithm.
//!
//! Row `i` of a band matrix stores columns `i - kl ..= i + ku` contiguously,
//! so the elimination update is a plain slice axpy.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        Self {
            n,
            kl,
            ku,
            data: vec![0.0; n * (kl + ku + 1)],
        }
    }

    fn width(&self) -> usize {
        self.kl + self.ku + 1
    }

    #[inline]
    fn offset(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.kl >= i && j <= i + self.ku);
        i * self.width() + (j + self.kl - i)
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self.offset(i, j);
        self.data[k] += v;
    }

    /// `y = A x`
    #[cfg(test)]
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.kl);
                let hi = (i + self.ku).min(self.n - 1);
                (lo..=hi).map(|j| self.data[self.offset(i, j)] * x[j]).sum()
            })
            .collect()
    }

    /// In-place Doolittle factorization. Fails on a zero (or non-finite) pivot.
    pub fn factor(mut self) -> Result<BandLu> {
        let (n, kl, ku, w) = (self.n, self.kl, self.ku, self.width());
        for k in 0..n {
            let pivot = self.data[k * w + kl];
            if pivot == 0.0 || !pivot.is_finite() {
                return Err(Error::LinearSolveFailure {
                    residual: f64::INFINITY,
                    tolerance: 0.0,
                });
            }
            let jmax = (k + ku).min(n - 1);
            let imax = (k + kl).min(n - 1);
            let (head, tail) = self.data.split_at_mut((k + 1) * w);
            // columns k+1..=jmax of row k
            let urow = &head[k * w + kl + 1..k * w + kl + 1 + (jmax - k)];
            for i in k + 1..=imax {
                let row = &mut tail[(i - k - 1) * w..(i - k) * w];
                let lk = kl + k - i;
                let l = row[lk] / pivot;
                row[lk] = l;
                if l != 0.0 {
                    let start = lk + 1;
                    for (a, &u) in row[start..start + urow.len()].iter_mut().zip(urow) {
                        *a -= l * u;
                    }
                }
            }
        }
        Ok(BandLu { m: self })
    }
}

#[derive(Debug, Clone)]
pub struct BandLu {
    m: BandMatrix,
}

impl BandLu {
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let m = &self.m;
        let (n, kl, ku, w) = (m.n, m.kl, m.ku, m.width());
        for i in 0..n {
            let lo = i.saturating_sub(kl);
            let row = &m.data[i * w..(i + 1) * w];
            let mut s = b[i];
            for (j, bj) in b.iter().enumerate().take(i).skip(lo) {
                s -= row[j + kl - i] * bj;
            }
            b[i] = s;
        }
        for i in (0..n).rev() {
            let hi = (i + ku).min(n - 1);
            let row = &m.data[i * w..(i + 1) * w];
            let mut s = b[i];
            for j in i + 1..=hi {
                s -= row[j + kl - i] * b[j];
            }
            b[i] = s / row[kl];
        }
    }
}

/// Solves a tridiagonal system with sub-diagonal `a`, diagonal `b`,
/// super-diagonal `c` (`a[0]` and `c[n-1]` unused).
pub fn thomas(a: &[f64], b: &[f64], c: &[f64], d: &[f64]) -> Result<Vec<f64>> {
    let n = b.len();
    let mut cp = vec![0.0; n];
    let mut dp = vec![0.0; n];
    let fail = || Error::LinearSolveFailure {
        residual: f64::NAN,
        tolerance: 0.0,
    };
    if b[0] == 0.0 {
        return Err(fail());
    }
    cp[0] = c[0] / b[0];
    dp[0] = d[0] / b[0];
    for i in 1..n {
        let den = b[i] - a[i] * cp[i - 1];
        if den == 0.0 {
            return Err(fail());
        }
        cp[i] = c[i] / den;
        dp[i] = (d[i] - a[i] * dp[i - 1]) / den;
    }
    let mut x = dp;
    for i in (0..n - 1).rev() {
        x[i] -= cp[i] * x[i + 1];
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(fail());
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_lu_matches_dense_solution() {
        // Diagonally dominant band matrix with kl = 2, ku = 3.
        let n = 12;
        let mut a = BandMatrix::zeros(n, 2, 3);
        for i in 0..n {
            for j in i.saturating_sub(2)..=(i + 3).min(n - 1) {
                let v = if i == j { 10.0 } else { 1.0 / (1.0 + (i + 2 * j) as f64) };
                a.add(i, j, v);
            }
        }
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).sin()).collect();
        let mut b = a.mul_vec(&x);
        a.clone().factor().unwrap().solve_in_place(&mut b);
        for (p, q) in b.iter().zip(&x) {
            assert!((p - q).abs() < 1e-13);
        }
    }

    #[test]
    fn zero_pivot_is_reported() {
        let a = BandMatrix::zeros(3, 1, 1);
        assert!(matches!(a.factor(), Err(Error::LinearSolveFailure { .. })));
    }

    #[test]
    fn thomas_solves_second_difference() {
        // v'' = 2 on 5 interior nodes of h = 1/6 with zero ends: v = x(x-1).
        let n = 5;
        let h = 1.0 / 6.0;
        let a = vec![1.0; n];
        let b = vec![-2.0; n];
        let c = vec![1.0; n];
        let d = vec![2.0 * h * h; n];
        let v = thomas(&a, &b, &c, &d).unwrap();
        for (k, vk) in v.iter().enumerate() {
            let x = (k + 1) as f64 * h;
            assert!((vk - x * (x - 1.0)).abs() < 1e-15);
        }
    }
}
