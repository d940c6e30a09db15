//! Dual soft-margin SVM over a precomputed kernel matrix.
//!
//! Maximises `sum(a) - 1/2 a^T Q a` with `Q_ij = y_i y_j K_ij`, subject to
//! `y^T a = 0` and `0 <= a_i <= C`. The production path is SMO with
//! second-order working-set selection; [`brute_force_dual`] is a slow
//! projected-gradient oracle for tiny problems.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const TAU: f64 = 1e-12;

/// Problem view: a square kernel matrix, ±1 labels and the box bound `C`.
#[derive(Clone, Copy, Debug)]
pub struct DualProblem<'a> {
    gram: &'a DMatrix<f64>,
    labels: &'a [f64],
    c: f64,
}

impl<'a> DualProblem<'a> {
    pub fn new(gram: &'a DMatrix<f64>, labels: &'a [f64], c: f64) -> Result<Self> {
        let m = labels.len();
        if gram.nrows() != m || gram.ncols() != m {
            return Err(Error::arg(format!(
                "kernel matrix is {}x{}, expected {m}x{m}",
                gram.nrows(),
                gram.ncols()
            )));
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::arg(format!("C must be positive, got {c}")));
        }
        if labels.iter().any(|&y| y != 1.0 && y != -1.0) {
            return Err(Error::arg("labels must be +1 or -1"));
        }
        if !labels.contains(&1.0) || !labels.contains(&-1.0) {
            return Err(Error::arg("both classes must be present to train"));
        }
        Ok(Self { gram, labels, c })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn labels(&self) -> &[f64] {
        self.labels
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        self.gram
    }

    #[inline]
    fn q(&self, i: usize, j: usize) -> f64 {
        self.labels[i] * self.labels[j] * self.gram[(i, j)]
    }

    /// Dual objective `sum(a) - 1/2 a^T Q a`.
    pub fn objective(&self, alphas: &[f64]) -> f64 {
        let m = self.len();
        let mut quad = 0.0;
        for i in 0..m {
            if alphas[i] == 0.0 {
                continue;
            }
            let mut row = 0.0;
            for j in 0..m {
                row += self.q(i, j) * alphas[j];
            }
            quad += alphas[i] * row;
        }
        alphas.iter().sum::<f64>() - 0.5 * quad
    }

    /// `s_i = sum_j a_j y_j K_ij`, the kernel expansion without bias.
    fn expansion(&self, alphas: &[f64]) -> Vec<f64> {
        let m = self.len();
        (0..m)
            .map(|i| {
                (0..m)
                    .filter(|&j| alphas[j] != 0.0)
                    .map(|j| alphas[j] * self.labels[j] * self.gram[(i, j)])
                    .sum()
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualSolution {
    pub alphas: Vec<f64>,
    pub bias: f64,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverParams {
    /// Stop when the maximal KKT-violating pair gap drops below this.
    pub tol: f64,
    /// Iteration cap; `None` means `2000 * M`.
    pub max_iter: Option<usize>,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            tol: 1e-3,
            max_iter: None,
        }
    }
}

impl SolverParams {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }
}

fn bound_eps(c: f64) -> f64 {
    1e-12 * c.max(1.0)
}

/// Bias from the mean over free vectors, else the midpoint of the feasible interval.
fn compute_bias(p: &DualProblem<'_>, alphas: &[f64]) -> f64 {
    let s = p.expansion(alphas);
    let eps = bound_eps(p.c);
    let mut free_sum = 0.0;
    let mut free_n = 0usize;
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for i in 0..p.len() {
        let y = p.labels[i];
        let target = y - s[i];
        let a = alphas[i];
        if a > eps && a < p.c - eps {
            free_sum += target;
            free_n += 1;
        } else {
            // a = 0 needs y f >= 1, a = C needs y f <= 1
            let at_lower = a <= eps;
            if at_lower == (y > 0.0) {
                lo = lo.max(target);
            } else {
                hi = hi.min(target);
            }
        }
    }
    if free_n > 0 {
        free_sum / free_n as f64
    } else if lo.is_finite() && hi.is_finite() {
        0.5 * (lo + hi)
    } else if lo.is_finite() {
        lo
    } else if hi.is_finite() {
        hi
    } else {
        0.0
    }
}

/// SMO with second-order working-set selection.
pub fn solve_dual(p: &DualProblem<'_>, params: &SolverParams) -> DualSolution {
    let m = p.len();
    let c = p.c;
    let y = p.labels;
    let max_iter = params.max_iter.unwrap_or(10 * m * 200);
    let diag: Vec<f64> = (0..m).map(|i| p.gram[(i, i)]).collect();

    let mut alpha = vec![0.0; m];
    // gradient of 1/2 a^T Q a - e^T a
    let mut grad = vec![-1.0; m];
    let in_up = |a: f64, yt: f64| (yt > 0.0 && a < c) || (yt < 0.0 && a > 0.0);
    let in_low = |a: f64, yt: f64| (yt > 0.0 && a > 0.0) || (yt < 0.0 && a < c);

    let mut iterations = 0;
    let mut converged = false;
    #[cfg(debug_assertions)]
    let mut last_obj = 0.0;
    while iterations < max_iter {
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = usize::MAX;
        for t in 0..m {
            if in_up(alpha[t], y[t]) {
                let v = -y[t] * grad[t];
                if v >= gmax {
                    gmax = v;
                    i_sel = t;
                }
            }
        }
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j_sel = usize::MAX;
        let mut best = f64::INFINITY;
        if i_sel != usize::MAX {
            let i = i_sel;
            for t in 0..m {
                if !in_low(alpha[t], y[t]) {
                    continue;
                }
                let yg = y[t] * grad[t];
                gmax2 = gmax2.max(yg);
                let b = gmax + yg;
                if b > 0.0 {
                    let mut a = diag[i] + diag[t] - 2.0 * p.gram[(i, t)];
                    if a <= 0.0 {
                        a = TAU;
                    }
                    let score = -(b * b) / a;
                    if score <= best {
                        best = score;
                        j_sel = t;
                    }
                }
            }
        }
        if i_sel == usize::MAX || gmax + gmax2 < params.tol || j_sel == usize::MAX {
            converged = i_sel == usize::MAX || j_sel == usize::MAX || gmax + gmax2 < params.tol;
            break;
        }
        let (i, j) = (i_sel, j_sel);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let qij = p.q(i, j);
        if y[i] != y[j] {
            let mut quad = diag[i] + diag[j] + 2.0 * qij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let mut quad = diag[i] + diag[j] - 2.0 * qij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..m {
            grad[t] += p.q(t, i) * di + p.q(t, j) * dj;
        }
        iterations += 1;

        #[cfg(debug_assertions)]
        {
            // -1/2 a^T (G - e)... written via the gradient: D = -1/2 a^T (G - e)
            let obj: f64 = -0.5 * alpha.iter().zip(&grad).map(|(a, g)| a * (g - 1.0)).sum::<f64>();
            debug_assert!(
                obj >= last_obj - 1e-9 * (1.0 + obj.abs()),
                "dual objective decreased from {last_obj} to {obj}"
            );
            last_obj = obj;
        }
    }
    if !converged {
        log::warn!("SMO stopped after {iterations} iterations without reaching tol {}", params.tol);
    }
    let bias = compute_bias(p, &alpha);
    let objective = p.objective(&alpha);
    DualSolution {
        alphas: alpha,
        bias,
        objective,
        iterations,
        converged,
    }
}

/// Largest problem [`brute_force_dual`] accepts.
pub const BRUTE_FORCE_MAX: usize = 12;

/// Euclidean projection onto `{0 <= a <= C} ∩ {y^T a = 0}`.
///
/// The projection is `clip(v - lambda y, 0, C)` for the `lambda` zeroing the
/// piecewise-linear, non-increasing `h(lambda) = y^T clip(..)`, found exactly
/// from its breakpoints.
pub fn project_feasible(v: &[f64], y: &[f64], c: f64) -> Vec<f64> {
    let at = |lam: f64| -> Vec<f64> {
        v.iter()
            .zip(y)
            .map(|(vi, yi)| (vi - lam * yi).clamp(0.0, c))
            .collect()
    };
    let h = |lam: f64| -> f64 { at(lam).iter().zip(y).map(|(a, yi)| a * yi).sum() };
    let mut bps: Vec<f64> = v
        .iter()
        .zip(y)
        .flat_map(|(vi, yi)| [vi * yi, (vi - c) * yi])
        .collect();
    bps.sort_by(f64::total_cmp);
    bps.dedup();
    // h >= 0 left of the root, <= 0 right of it
    let mut lo = bps[0];
    let mut hi = bps[bps.len() - 1];
    if h(lo) < 0.0 {
        lo -= 1.0 + lo.abs();
    }
    if h(hi) > 0.0 {
        hi += 1.0 + hi.abs();
    }
    let mut prev = lo;
    let mut hprev = h(prev);
    for &b in bps.iter().chain(std::iter::once(&hi)) {
        if b < prev {
            continue;
        }
        let hb = h(b);
        if hb == 0.0 {
            return at(b);
        }
        if hprev > 0.0 && hb < 0.0 {
            // linear on [prev, b]
            let lam = prev + (b - prev) * hprev / (hprev - hb);
            return at(lam);
        }
        prev = b;
        hprev = hb;
    }
    at(prev)
}

/// Projected gradient ascent with step `1/(L+1)`, `L` the top eigenvalue of `Q`.
pub fn brute_force_dual(p: &DualProblem<'_>) -> Result<DualSolution> {
    brute_force_dual_iters(p, 1_000_000)
}

pub fn brute_force_dual_iters(p: &DualProblem<'_>, max_iter: usize) -> Result<DualSolution> {
    let m = p.len();
    if m > BRUTE_FORCE_MAX {
        return Err(Error::Capacity(format!(
            "brute-force dual oracle handles at most {BRUTE_FORCE_MAX} samples, got {m}"
        )));
    }
    let q = DMatrix::from_fn(m, m, |i, j| p.q(i, j));
    let top = SymmetricEigen::new(q.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(0.0f64, f64::max);
    let step = 1.0 / (top + 1.0);
    let y = p.labels;

    let mut alpha = vec![0.0; m];
    let mut iterations = 0;
    let mut converged = false;
    let mut trial = vec![0.0; m];
    while iterations < max_iter {
        for i in 0..m {
            let mut qa = 0.0;
            for j in 0..m {
                qa += q[(i, j)] * alpha[j];
            }
            trial[i] = alpha[i] + step * (1.0 - qa);
        }
        let next = project_feasible(&trial, y, p.c);
        let change = next
            .iter()
            .zip(&alpha)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        alpha = next;
        iterations += 1;
        if change <= 1e-15 * p.c.max(1.0) {
            converged = true;
            break;
        }
    }
    let bias = compute_bias(p, &alpha);
    let objective = p.objective(&alpha);
    Ok(DualSolution {
        alphas: alpha,
        bias,
        objective,
        iterations,
        converged,
    })
}

/// `value_t = sum_i coef_i K_ti + b` where `coef_i = a_i y_i`.
pub fn decision_values(coef: &[f64], bias: f64, kernel_rows: &DMatrix<f64>) -> Result<Vec<f64>> {
    if kernel_rows.ncols() != coef.len() {
        return Err(Error::arg(format!(
            "kernel rows have {} columns, model has {} support vectors",
            kernel_rows.ncols(),
            coef.len()
        )));
    }
    Ok((0..kernel_rows.nrows())
        .map(|t| {
            coef.iter()
                .enumerate()
                .map(|(i, c)| c * kernel_rows[(t, i)])
                .sum::<f64>()
                + bias
        })
        .collect())
}

/// Sign rule with `sign(0) = +1`.
pub fn sign_label(value: f64) -> f64 {
    if value >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    pub max_violation: f64,
    pub at_lower: usize,
    pub free: usize,
    pub at_upper: usize,
    /// Samples whose violation exceeds the tolerance.
    pub violators: usize,
}

/// Margin conditions per multiplier bin: `a = 0 -> y f >= 1`,
/// `0 < a < C -> y f = 1`, `a = C -> y f <= 1`.
pub fn kkt_report(p: &DualProblem<'_>, s: &DualSolution, tol: f64) -> KktReport {
    let expansion = p.expansion(&s.alphas);
    let eps = bound_eps(p.c);
    let mut r = KktReport::default();
    for i in 0..p.len() {
        let margin = p.labels[i] * (expansion[i] + s.bias);
        let a = s.alphas[i];
        let v = if a <= eps {
            r.at_lower += 1;
            (1.0 - margin).max(0.0)
        } else if a >= p.c - eps {
            r.at_upper += 1;
            (margin - 1.0).max(0.0)
        } else {
            r.free += 1;
            (margin - 1.0).abs()
        };
        if v > tol {
            r.violators += 1;
        }
        r.max_violation = r.max_violation.max(v);
    }
    r
}
