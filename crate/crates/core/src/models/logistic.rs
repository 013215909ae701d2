//! ℓ1-penalized logistic regression by coordinate descent.
//!
//! Maximizes `(1/n) Σ [yᵢ ηᵢ − log(1 + e^ηᵢ)] − λ‖β‖₁` with `ηᵢ = β₀ + βᵀx̃ᵢ`
//! over internally standardized predictors `x̃`. Each outer step builds the
//! weighted least-squares approximation of the log-likelihood at the current
//! point, solves its lasso problem by cyclic coordinate descent with
//! soft-thresholding, and backtracks so the objective never decreases.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TOLERANCE: f64 = 1e-7;
pub const MAX_SWEEPS: usize = 10_000;
pub const COEFFICIENT_CAP: f64 = 1e4;
const MAX_OUTER: usize = 1_000;
const MIN_WEIGHT: f64 = 1e-5;
const INNER_TOLERANCE: f64 = 1e-3 * TOLERANCE;

/// Grid `10^(base + step·i)` for `i = 0..count`.
pub fn lambda_grid(base: f64, step: f64, count: usize) -> Vec<f64> {
    (0..count).map(|i| 10f64.powf(base + step * i as f64)).collect()
}

/// Column means and population standard deviations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: ArrayView2<f64>) -> Self {
        let n = x.nrows() as f64;
        let (mut mean, mut sd) = (Vec::new(), Vec::new());
        for col in x.columns() {
            let m = col.sum() / n;
            mean.push(m);
            sd.push((col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt());
        }
        Self { mean, sd }
    }

    /// Standardized columns; zero-variance columns become all zeros.
    fn columns(&self, x: ArrayView2<f64>) -> Vec<Vec<f64>> {
        x.columns()
            .into_iter()
            .enumerate()
            .map(|(j, col)| {
                if self.sd[j] > 0.0 {
                    col.iter().map(|v| (v - self.mean[j]) / self.sd[j]).collect()
                } else {
                    vec![0.0; col.len()]
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrModel {
    /// Intercept on the standardized scale.
    pub beta0: f64,
    /// Coefficients on the standardized scale.
    pub beta: Vec<f64>,
    pub lambda: f64,
    pub standardizer: Standardizer,
    pub converged: bool,
    pub diverged: bool,
    pub sweeps: usize,
}

impl LrModel {
    pub fn n_features(&self) -> usize {
        self.beta.len()
    }

    pub fn linear_score(&self, x: &[f64]) -> f64 {
        let s = &self.standardizer;
        let mut eta = self.beta0;
        for (j, &b) in self.beta.iter().enumerate() {
            if b != 0.0 {
                eta += b * (x[j] - s.mean[j]) / s.sd[j];
            }
        }
        eta
    }

    pub fn predict_proba_row(&self, x: &[f64]) -> f64 {
        sigmoid(self.linear_score(x))
    }

    /// Intercept and coefficients on the original predictor scale.
    pub fn coefficients(&self) -> (f64, Vec<f64>) {
        let s = &self.standardizer;
        let beta: Vec<f64> = self
            .beta
            .iter()
            .enumerate()
            .map(|(j, &b)| if b == 0.0 { 0.0 } else { b / s.sd[j] })
            .collect();
        let b0 = self.beta0 - beta.iter().zip(&s.mean).map(|(b, m)| b * m).sum::<f64>();
        (b0, beta)
    }

    pub fn n_nonzero(&self) -> usize {
        self.beta.iter().filter(|b| **b != 0.0).count()
    }
}

pub fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^η) without overflow.
fn log1p_exp(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

/// Standardized design in column-major order plus the response.
pub struct LrProblem {
    pub standardizer: Standardizer,
    cols: Vec<Vec<f64>>,
    y: Vec<f64>,
    n: usize,
}

impl LrProblem {
    pub fn new(x: ArrayView2<f64>, y: &[u8]) -> Result<Self> {
        let n = x.nrows();
        if y.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: y.len(),
            });
        }
        if let Some(v) = y.iter().find(|&&v| v > 1) {
            return Err(Error::InvalidInput(format!("response value {v} is not binary")));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("predictors must be finite".into()));
        }
        let pos = y.iter().filter(|&&v| v == 1).count();
        if pos == 0 || pos == n {
            return Err(Error::InvalidInput("response needs both classes".into()));
        }
        let standardizer = Standardizer::fit(x);
        let cols = standardizer.columns(x);
        Ok(Self {
            standardizer,
            cols,
            y: y.iter().map(|&v| f64::from(v)).collect(),
            n,
        })
    }

    pub fn n_features(&self) -> usize {
        self.cols.len()
    }

    fn ybar(&self) -> f64 {
        self.y.iter().sum::<f64>() / self.n as f64
    }

    /// Smallest λ with the all-zero solution.
    pub fn lambda_max(&self) -> f64 {
        let yb = self.ybar();
        self.cols
            .iter()
            .map(|c| (c.iter().zip(&self.y).map(|(x, y)| x * (y - yb)).sum::<f64>() / self.n as f64).abs())
            .fold(0.0, f64::max)
    }

    fn eta(&self, beta0: f64, beta: &[f64]) -> Vec<f64> {
        let mut eta = vec![beta0; self.n];
        for (c, &b) in self.cols.iter().zip(beta) {
            if b != 0.0 {
                add_scaled(&mut eta, b, c);
            }
        }
        eta
    }

    /// The penalized objective being maximized.
    pub fn objective(&self, beta0: f64, beta: &[f64], lambda: f64) -> f64 {
        self.objective_eta(beta0, beta, lambda).0
    }

    fn objective_eta(&self, beta0: f64, beta: &[f64], lambda: f64) -> (f64, Vec<f64>) {
        let eta = self.eta(beta0, beta);
        let ll: f64 = eta.iter().zip(&self.y).map(|(e, y)| y * e - log1p_exp(*e)).sum::<f64>() / self.n as f64;
        (ll - lambda * beta.iter().map(|b| b.abs()).sum::<f64>(), eta)
    }

    /// Gradient of the unpenalized average log-likelihood with respect to
    /// each standardized coefficient.
    pub fn gradient(&self, beta0: f64, beta: &[f64]) -> Vec<f64> {
        let eta = self.eta(beta0, beta);
        let resid: Vec<f64> = eta.iter().zip(&self.y).map(|(e, y)| y - sigmoid(*e)).collect();
        self.cols
            .iter()
            .map(|c| dot(c, &resid) / self.n as f64)
            .collect()
    }

    /// Largest KKT violation of a solution.
    pub fn kkt_residual(&self, model: &LrModel) -> f64 {
        let g = self.gradient(model.beta0, &model.beta);
        g.iter()
            .zip(&model.beta)
            .map(|(&gj, &bj)| {
                if bj == 0.0 {
                    (gj.abs() - model.lambda).max(0.0)
                } else {
                    (gj - model.lambda * bj.signum()).abs()
                }
            })
            .fold(0.0, f64::max)
    }

    fn null_start(&self) -> (f64, Vec<f64>) {
        let yb = self.ybar();
        ((yb / (1.0 - yb)).ln(), vec![0.0; self.n_features()])
    }

    /// Fit at a single λ from the null model.
    pub fn fit(&self, lambda: f64) -> Result<LrModel> {
        let (b0, b) = self.null_start();
        self.fit_from(lambda, b0, b, &mut Vec::new())
    }

    /// Fits along `lambdas` (any order), warm-starting from the previous
    /// solution in descending λ order. Models come back in input order.
    pub fn fit_path(&self, lambdas: &[f64]) -> Result<Vec<LrModel>> {
        let mut order: Vec<usize> = (0..lambdas.len()).collect();
        order.sort_by(|&a, &b| lambdas[b].total_cmp(&lambdas[a]));
        let mut out: Vec<Option<LrModel>> = vec![None; lambdas.len()];
        let (mut b0, mut b) = self.null_start();
        for i in order {
            let m = self.fit_from(lambdas[i], b0, b.clone(), &mut Vec::new())?;
            b0 = m.beta0;
            b.clone_from(&m.beta);
            out[i] = Some(m);
        }
        Ok(out.into_iter().map(|m| m.expect("every λ fitted")).collect())
    }

    /// Fit recording the objective after every outer step in `trace`.
    pub fn fit_traced(&self, lambda: f64, trace: &mut Vec<f64>) -> Result<LrModel> {
        let (b0, b) = self.null_start();
        self.fit_from(lambda, b0, b, trace)
    }

    fn fit_from(&self, lambda: f64, mut beta0: f64, mut beta: Vec<f64>, trace: &mut Vec<f64>) -> Result<LrModel> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidInput(format!("λ = {lambda} must be finite and non-negative")));
        }
        let n = self.n as f64;
        let p = self.n_features();
        let (mut objective, mut eta) = self.objective_eta(beta0, &beta, lambda);
        trace.push(objective);
        let mut converged = false;
        let mut diverged = false;
        let mut sweeps = 0;

        let mut w = vec![0.0; self.n];
        let mut r = vec![0.0; self.n];
        let mut v = vec![0.0; self.n];
        let mut g = vec![0.0; p];
        // weighted Gram of the working set; between refreshes it keeps the
        // weights it was built with and serves as an approximate Hessian
        let mut gram = Gram::new(p, self.n);
        let mut refresh = true;
        let mut last_step = f64::INFINITY;
        for _outer in 0..MAX_OUTER {
            for i in 0..self.n {
                let pi = sigmoid(eta[i]);
                w[i] = (pi * (1.0 - pi)).max(MIN_WEIGHT);
                r[i] = self.y[i] - pi;
            }
            let g0 = r.iter().sum::<f64>() / n;
            for j in 0..p {
                g[j] = dot(&self.cols[j], &r) / n;
            }
            if refresh {
                gram.reset(&w, n);
            }
            for j in 0..p {
                if !gram.contains(j) && self.standardizer.sd[j] > 0.0 && (beta[j] != 0.0 || g[j].abs() > lambda) {
                    gram.add(j, &self.cols, n);
                }
            }
            let h00 = gram.h00;

            // lasso on the quadratic model around the current point; `s`
            // holds the model's gradient at (nb0, nb)
            let (mut nb0, mut nb) = (beta0, beta.clone());
            let mut s = g.clone();
            let mut s0 = g0;
            let mut try_solve = true;
            loop {
                for _ in 0..MAX_SWEEPS {
                    let mut max_change: f64 = 0.0;
                    let mut support_changed = false;
                    for a in 0..gram.set.len() {
                        let j = gram.set[a];
                        let hjj = gram.h(j, j);
                        let new = soft_threshold(s[j] + hjj * nb[j], lambda) / hjj;
                        let d = new - nb[j];
                        if d != 0.0 {
                            support_changed |= (new == 0.0) != (nb[j] == 0.0);
                            nb[j] = new;
                            s0 -= gram.h0[j] * d;
                            for &k in &gram.set {
                                s[k] -= gram.h(k, j) * d;
                            }
                            max_change = max_change.max(hjj * d.abs());
                        }
                    }
                    let d0 = s0 / h00;
                    if d0 != 0.0 {
                        nb0 += d0;
                        s0 = 0.0;
                        for &k in &gram.set {
                            s[k] -= gram.h0[k] * d0;
                        }
                        max_change = max_change.max(h00 * d0.abs());
                    }
                    sweeps += 1;
                    if max_change < INNER_TOLERANCE {
                        break;
                    }
                    // a refused solve is retried only once the support moves again
                    if support_changed {
                        try_solve = true;
                    } else if try_solve {
                        if gram.solve_on_support(lambda, h00, &mut nb0, &mut nb, &mut s0, &mut s) {
                            break;
                        }
                        try_solve = false;
                    }
                }
                // columns outside the working set must satisfy the model's KKT conditions
                v.fill(nb0 - beta0);
                for &k in &gram.set {
                    if nb[k] != beta[k] {
                        add_scaled(&mut v, nb[k] - beta[k], &self.cols[k]);
                    }
                }
                v.iter_mut().zip(&gram.w).for_each(|(vi, wi)| *vi *= wi);
                let mut added = false;
                for j in 0..p {
                    if gram.contains(j) || self.standardizer.sd[j] == 0.0 {
                        continue;
                    }
                    let sj = g[j] - dot(&self.cols[j], &v) / n;
                    if sj.abs() > lambda {
                        gram.add(j, &self.cols, n);
                        s[j] = sj;
                        added = true;
                    }
                }
                if !added {
                    break;
                }
            }

            // backtracking keeps the penalized objective monotone
            let d0 = nb0 - beta0;
            let d: Vec<f64> = nb.iter().zip(&beta).map(|(a, b)| a - b).collect();
            let mut t = 1.0;
            let (mut cand0, mut cand) = (nb0, nb);
            let (mut cand_obj, mut cand_eta) = self.objective_eta(cand0, &cand, lambda);
            while cand_obj < objective && t > 1e-10 {
                t *= 0.5;
                cand0 = beta0 + t * d0;
                cand = beta.iter().zip(&d).map(|(b, dj)| b + t * dj).collect();
                (cand_obj, cand_eta) = self.objective_eta(cand0, &cand, lambda);
            }
            if cand_obj < objective {
                // no ascent direction left at this precision
                converged = true;
                break;
            }
            // step measured on the gradient scale, like the inner stopping rule
            let step = gram
                .set
                .iter()
                .map(|&j| gram.h(j, j) * (t * d[j]).abs())
                .fold(h00 * (t * d0).abs(), f64::max);
            beta0 = cand0;
            beta = cand;
            objective = cand_obj;
            eta = cand_eta;
            trace.push(objective);

            if beta0.abs() > COEFFICIENT_CAP || beta.iter().any(|b| b.abs() > COEFFICIENT_CAP) {
                diverged = true;
                break;
            }
            if step < TOLERANCE {
                converged = true;
                break;
            }
            refresh = t < 1.0 || step > 0.1 * last_step;
            last_step = step;
        }

        if !diverged && lambda == 0.0 && self.separates(beta0, &beta) {
            // the likelihood keeps rising along this ray; report the capped point
            let scale = COEFFICIENT_CAP / beta.iter().fold(beta0.abs(), |m, b| m.max(b.abs()));
            if scale > 1.0 {
                beta0 *= scale;
                beta.iter_mut().for_each(|b| *b *= scale);
                trace.push(self.objective(beta0, &beta, lambda));
            }
            diverged = true;
        }
        if diverged {
            beta0 = beta0.clamp(-COEFFICIENT_CAP, COEFFICIENT_CAP);
            beta.iter_mut().for_each(|b| *b = b.clamp(-COEFFICIENT_CAP, COEFFICIENT_CAP));
            log::warn!("logistic fit at λ = {lambda} diverged (separable data); coefficients capped at {COEFFICIENT_CAP}");
        } else if !converged {
            log::warn!("logistic fit at λ = {lambda} stopped after {sweeps} sweeps without converging");
        }
        Ok(LrModel {
            beta0,
            beta,
            lambda,
            standardizer: self.standardizer.clone(),
            converged,
            diverged,
            sweeps,
        })
    }

    /// True when every row lies strictly on its own side of the fitted plane.
    fn separates(&self, beta0: f64, beta: &[f64]) -> bool {
        self.eta(beta0, beta)
            .iter()
            .zip(&self.y)
            .all(|(e, y)| if *y == 1.0 { *e > 0.0 } else { *e < 0.0 })
    }
}

/// Weighted Gram matrix `XᵀWX / n` restricted to a growing working set, plus
/// the intercept cross terms `XᵀW1 / n`.
struct Gram {
    p: usize,
    set: Vec<usize>,
    member: Vec<bool>,
    h: Vec<f64>,
    h0: Vec<f64>,
    h00: f64,
    w: Vec<f64>,
}

impl Gram {
    fn new(p: usize, n: usize) -> Self {
        Self {
            p,
            set: Vec::new(),
            member: vec![false; p],
            h: vec![0.0; p * p],
            h0: vec![0.0; p],
            h00: 0.0,
            w: vec![0.0; n],
        }
    }

    /// Empties the working set and adopts new weights.
    fn reset(&mut self, w: &[f64], n: f64) {
        for &j in &self.set {
            self.member[j] = false;
        }
        self.set.clear();
        self.w.copy_from_slice(w);
        self.h00 = w.iter().sum::<f64>() / n;
    }

    fn contains(&self, j: usize) -> bool {
        self.member[j]
    }

    #[inline(always)]
    fn h(&self, j: usize, k: usize) -> f64 {
        self.h[j * self.p + k]
    }

    fn add(&mut self, j: usize, cols: &[Vec<f64>], n: f64) {
        self.h0[j] = dot(&cols[j], &self.w) / n;
        for &k in &self.set {
            let v = dot3(&cols[j], &cols[k], &self.w) / n;
            self.h[j * self.p + k] = v;
            self.h[k * self.p + j] = v;
        }
        self.h[j * self.p + j] = dot3(&cols[j], &cols[j], &self.w) / n;
        self.set.push(j);
        self.member[j] = true;
    }
}

impl Gram {
    /// Exact minimizer of the quadratic model on the face of the current
    /// support and signs. Applied only when it keeps every sign and leaves
    /// the zero coordinates of the working set within their KKT bounds.
    fn solve_on_support(
        &self,
        lambda: f64,
        h00: f64,
        nb0: &mut f64,
        nb: &mut [f64],
        s0: &mut f64,
        s: &mut [f64],
    ) -> bool {
        let z: Vec<usize> = self.set.iter().copied().filter(|&j| nb[j] != 0.0).collect();
        let m = z.len() + 1;
        let mut h = vec![0.0; m * m];
        let mut delta = vec![0.0; m];
        h[0] = h00;
        delta[0] = *s0;
        for (a, &j) in z.iter().enumerate() {
            h[(a + 1) * m] = self.h0[j];
            for (b, &k) in z.iter().enumerate().take(a + 1) {
                h[(a + 1) * m + b + 1] = self.h(j, k);
            }
            delta[a + 1] = s[j] - lambda * nb[j].signum();
        }
        if !cholesky_solve(&mut h, m, &mut delta) {
            return false;
        }
        if z.iter().enumerate().any(|(a, &j)| (nb[j] + delta[a + 1]) * nb[j] <= 0.0) {
            return false;
        }
        let shift = |k: usize| {
            self.h0[k] * delta[0] + z.iter().enumerate().map(|(a, &j)| self.h(k, j) * delta[a + 1]).sum::<f64>()
        };
        let ok = self
            .set
            .iter()
            .filter(|&&k| nb[k] == 0.0)
            .all(|&k| (s[k] - shift(k)).abs() <= lambda);
        if !ok {
            return false;
        }
        for &k in &self.set {
            s[k] -= shift(k);
        }
        *s0 = 0.0;
        *nb0 += delta[0];
        for (a, &j) in z.iter().enumerate() {
            nb[j] += delta[a + 1];
        }
        true
    }
}

/// Solves `A x = b` in place for symmetric positive definite `A`, given its
/// lower triangle row-major in `a` (overwritten by the factor). False if `A`
/// is not numerically positive definite.
fn cholesky_solve(a: &mut [f64], m: usize, b: &mut [f64]) -> bool {
    for i in 0..m {
        for j in 0..=i {
            let (head, row) = a.split_at_mut(i * m);
            let lj = if j < i { &head[j * m..j * m + j] } else { &row[..j] };
            let v = row[j] - dot(&row[..j], lj);
            if j < i {
                row[j] = v / head[j * m + j];
            } else if v > 0.0 && v.is_finite() {
                row[j] = v.sqrt();
            } else {
                return false;
            }
        }
    }
    for i in 0..m {
        b[i] = (b[i] - dot(&a[i * m..i * m + i], &b[..i])) / a[i * m + i];
    }
    for i in (0..m).rev() {
        let mut v = b[i];
        for k in i + 1..m {
            v -= a[k * m + i] * b[k];
        }
        b[i] = v / a[i * m + i];
    }
    true
}

// Inner kernels. The AVX2 builds run the same operations in the same order
// (no fused multiply-add), so results do not depend on the CPU.

#[inline(always)]
fn dot_body(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    acc.iter().sum::<f64>() + tail
}

#[inline(always)]
fn dot3_body(a: &[f64], b: &[f64], c: &[f64]) -> f64 {
    let mut acc = [0.0; 8];
    let (ca, cb, cc) = (a.chunks_exact(8), b.chunks_exact(8), c.chunks_exact(8));
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .zip(cc.remainder())
        .map(|((x, y), z)| x * y * z)
        .sum();
    for ((x, y), z) in ca.zip(cb).zip(cc) {
        for k in 0..8 {
            acc[k] += x[k] * y[k] * z[k];
        }
    }
    acc.iter().sum::<f64>() + tail
}

/// `e += b · x`
#[inline(always)]
fn add_scaled_body(e: &mut [f64], b: f64, x: &[f64]) {
    for (ei, xi) in e.iter_mut().zip(x) {
        *ei += b * xi;
    }
}

#[cfg(target_arch = "x86_64")]
mod avx2 {
    #[target_feature(enable = "avx2")]
    pub(super) unsafe fn dot(a: &[f64], b: &[f64]) -> f64 {
        super::dot_body(a, b)
    }
    #[target_feature(enable = "avx2")]
    pub(super) unsafe fn dot3(a: &[f64], b: &[f64], c: &[f64]) -> f64 {
        super::dot3_body(a, b, c)
    }
    #[target_feature(enable = "avx2")]
    pub(super) unsafe fn add_scaled(e: &mut [f64], b: f64, x: &[f64]) {
        super::add_scaled_body(e, b, x)
    }
}

macro_rules! dispatch {
    ($name:ident, $body:ident, ($($arg:ident: $ty:ty),*) $(-> $ret:ty)?) => {
        fn $name($($arg: $ty),*) $(-> $ret)? {
            #[cfg(target_arch = "x86_64")]
            if std::arch::is_x86_feature_detected!("avx2") {
                // SAFETY: the CPU supports AVX2.
                return unsafe { avx2::$name($($arg),*) };
            }
            $body($($arg),*)
        }
    };
}

dispatch!(dot, dot_body, (a: &[f64], b: &[f64]) -> f64);
dispatch!(dot3, dot3_body, (a: &[f64], b: &[f64], c: &[f64]) -> f64);
dispatch!(add_scaled, add_scaled_body, (e: &mut [f64], b: f64, x: &[f64]));

fn soft_threshold(u: f64, lambda: f64) -> f64 {
    if u > lambda {
        u - lambda
    } else if u < -lambda {
        u + lambda
    } else {
        0.0
    }
}

/// Convenience wrapper: one fit at `lambda`.
pub fn fit_lr_l1(x: ArrayView2<f64>, y: &[u8], lambda: f64) -> Result<LrModel> {
    LrProblem::new(x, y)?.fit(lambda)
}
