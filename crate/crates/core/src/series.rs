//! Survival-weighted power sums for evaluating the estimator at large `L`.
//!
//! Past a threshold `n0` the mixed coefficient `H_L(n, s)` is a smooth
//! function of `w = n0 / n` and is replaced by a polynomial `P(w)`. The
//! estimator's tail `sum_{n0 <= n < L} (H_L(n, s) - H_L(L, s)) Delta_n` then
//! reduces to `sum_l beta_l G_l(L)` with
//!
//! `G_l(L) = sum_{n0 <= n < L} w_n^l Delta_n - w_L^l (u_n0 - u_L)`,
//!
//! where `u_n = 1 / P(L >= n)` and `Delta_n = u_n - u_{n+1}`. The sums are
//! tabulated up to `n0 + 2^16` and continued by Euler–Maclaurin beyond.

use std::sync::OnceLock;

use crate::numeric::CompensatedSum;
use crate::truncation::{hurwitz, TruncationLaw};

const TABLE_SPAN: u64 = 1 << 16;
const GL_POINTS: usize = 16;
/// Panel width in `ln x` for the tail integrals.
const PANEL: f64 = 0.5;

#[derive(Debug, Clone)]
pub(crate) struct TailTables {
    n0: u64,
    degree: usize,
    end: u64,
    lambda: f64,
    zeta_norm: f64,
    /// `prefix[l - 1][N - n0] = sum_{n0 <= n < N} w_n^l Delta_n` for `N` in `n0..=end`.
    prefix: Vec<Vec<f64>>,
}

impl TailTables {
    pub(crate) fn new(law: &TruncationLaw, n0: u64, degree: usize) -> Self {
        let end = n0 + TABLE_SPAN;
        let mut prefix = vec![Vec::with_capacity(TABLE_SPAN as usize + 1); degree];
        let mut acc = vec![CompensatedSum::new(); degree];
        for row in prefix.iter_mut() {
            row.push(0.0);
        }
        for n in n0..end {
            let d = law.delta(n);
            let w = n0 as f64 / n as f64;
            let mut p = 1.0;
            for (l, row) in prefix.iter_mut().enumerate() {
                p *= w;
                acc[l].add(p * d);
                row.push(acc[l].value());
            }
        }
        Self {
            n0,
            degree,
            end,
            lambda: law.lambda(),
            zeta_norm: law.zeta_norm(),
            prefix,
        }
    }

    /// `G_l(L)` for `l = 1..=degree`; requires `L > n0`.
    pub(crate) fn weights(&self, law: &TruncationLaw, l_big: u64) -> Vec<f64> {
        debug_assert!(l_big > self.n0);
        let mut sums: Vec<f64> = if l_big <= self.end {
            let idx = (l_big - self.n0) as usize;
            self.prefix.iter().map(|row| row[idx]).collect()
        } else {
            let idx = (self.end - self.n0) as usize;
            let tail = self.em_tail(l_big);
            self.prefix.iter().zip(tail).map(|(row, t)| row[idx] + t).collect()
        };
        let span = law.inverse_survival(self.n0) - law.inverse_survival(l_big);
        let w_l = self.n0 as f64 / l_big as f64;
        let mut p = 1.0;
        for s in sums.iter_mut() {
            p *= w_l;
            *s -= p * span;
        }
        sums
    }

    /// `sum_{end <= n < L} w_n^l Delta_n` by Euler–Maclaurin:
    /// integral + (g(end) - g(L))/2 + (g'(L) - g'(end))/12.
    fn em_tail(&self, l_big: u64) -> Vec<f64> {
        let a = self.end as f64;
        let b = l_big as f64;
        let mut integral = vec![CompensatedSum::new(); self.degree];
        let (ta, tb) = (a.ln(), b.ln());
        let panels = ((tb - ta) / PANEL).ceil().max(1.0) as usize;
        let h = (tb - ta) / panels as f64;
        let (nodes, weights) = gauss_legendre();
        for p in 0..panels {
            let mid = ta + (p as f64 + 0.5) * h;
            for (x, wt) in nodes.iter().zip(weights) {
                let t = mid + 0.5 * h * x;
                let xv = t.exp();
                let base = 0.5 * h * wt * xv * self.delta_real(xv);
                let w = self.n0 as f64 / xv;
                let mut pw = 1.0;
                for acc in integral.iter_mut() {
                    pw *= w;
                    acc.add(base * pw);
                }
            }
        }
        let (ga, da) = self.delta_and_log_derivative(a);
        let (gb, db) = self.delta_and_log_derivative(b);
        let mut out = Vec::with_capacity(self.degree);
        let (mut pa, mut pb) = (1.0, 1.0);
        for (l, acc) in integral.iter().enumerate() {
            let lf = (l + 1) as f64;
            pa *= self.n0 as f64 / a;
            pb *= self.n0 as f64 / b;
            let g_a = pa * ga;
            let g_b = pb * gb;
            let dg_a = g_a * (da - lf / a);
            let dg_b = g_b * (db - lf / b);
            out.push(acc.value() + 0.5 * (g_a - g_b) + (dg_b - dg_a) / 12.0);
        }
        out
    }

    fn delta_real(&self, x: f64) -> f64 {
        let z = hurwitz(self.lambda, x);
        let t = x.powf(-self.lambda);
        -self.zeta_norm * t / (z * (z - t))
    }

    /// `Delta(x)` and `d/dx ln |Delta(x)|`, using `d/dx zeta(s, x) = -s zeta(s+1, x)`.
    fn delta_and_log_derivative(&self, x: f64) -> (f64, f64) {
        let s = self.lambda;
        let z0 = hurwitz(s, x);
        let t = x.powf(-s);
        let z1 = z0 - t;
        let d = -self.zeta_norm * t / (z0 * z1);
        let dlog = -s / x + s * hurwitz(s + 1.0, x) / z0 + s * hurwitz(s + 1.0, x + 1.0) / z1;
        (d, dlog)
    }
}

/// Nodes and weights of the 16-point Gauss–Legendre rule on `[-1, 1]`.
fn gauss_legendre() -> &'static ([f64; GL_POINTS], [f64; GL_POINTS]) {
    static RULE: OnceLock<([f64; GL_POINTS], [f64; GL_POINTS])> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = GL_POINTS;
        let mut nodes = [0.0; GL_POINTS];
        let mut weights = [0.0; GL_POINTS];
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for j in 2..=n {
                    let jf = j as f64;
                    let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        (nodes, weights)
    })
}

/// Chebyshev–Lobatto points on `[lo, hi]`, descending from `hi`.
pub(crate) fn lobatto(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![hi];
    }
    (0..count)
        .map(|j| {
            let c = (std::f64::consts::PI * j as f64 / (count - 1) as f64).cos();
            lo + (hi - lo) * (1.0 + c) / 2.0
        })
        .collect()
}

/// Monomial coefficients of the polynomial through `(x_j, y_j)`, via Newton
/// divided differences.
pub(crate) fn interpolate(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut dd = ys.to_vec();
    for level in 1..n {
        for j in (level..n).rev() {
            dd[j] = (dd[j] - dd[j - 1]) / (xs[j] - xs[j - level]);
        }
    }
    // Expand the Newton form from the innermost factor outward.
    let mut coeffs = vec![0.0; n];
    coeffs[0] = dd[n - 1];
    for (len, j) in (1..).zip((0..n - 1).rev()) {
        // coeffs <- coeffs * (x - xs[j]) + dd[j]
        for i in (0..=len).rev() {
            let shifted = if i > 0 { coeffs[i - 1] } else { 0.0 };
            let kept = if i < len { coeffs[i] } else { 0.0 };
            coeffs[i] = shifted - xs[j] * kept;
        }
        coeffs[0] += dd[j];
    }
    coeffs
}
