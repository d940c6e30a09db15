//! Thin SVD by one-sided Jacobi rotations.
//!
//! nalgebra's bidiagonal SVD returns inconsistent factors on some exactly
//! rank-deficient inputs (stacks of repeated samples hit this), so TT-SVD
//! runs on this routine instead.

use nalgebra::DMatrix;

const MAX_SWEEPS: usize = 80;

/// `a = u * diag(s) * vt` with `k = min(rows, cols)` columns in `u`, rows in
/// `vt`, and `s` sorted descending.
pub struct Svd {
    pub u: DMatrix<f64>,
    pub s: Vec<f64>,
    pub vt: DMatrix<f64>,
}

pub fn thin_svd(a: &DMatrix<f64>) -> Svd {
    if a.nrows() >= a.ncols() {
        let (u, s, v) = jacobi_tall(a.clone());
        Svd {
            u,
            s,
            vt: v.transpose(),
        }
    } else {
        let (u, s, v) = jacobi_tall(a.transpose());
        Svd {
            u: v,
            s,
            vt: u.transpose(),
        }
    }
}

/// Hestenes iteration on a tall matrix; returns `(U, s, V)`.
fn jacobi_tall(mut w: DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    let (m, n) = w.shape();
    let mut v = DMatrix::<f64>::identity(n, n);
    let eps = f64::EPSILON;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for i in 0..m {
                    let (x, y) = (w[(i, p)], w[(i, q)]);
                    alpha += x * x;
                    beta += y * y;
                    gamma += x * y;
                }
                if gamma == 0.0 || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let (x, y) = (w[(i, p)], w[(i, q)]);
                    w[(i, p)] = c * x - s * y;
                    w[(i, q)] = s * x + c * y;
                }
                for i in 0..n {
                    let (x, y) = (v[(i, p)], v[(i, q)]);
                    v[(i, p)] = c * x - s * y;
                    v[(i, q)] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<f64> = (0..n).map(|j| w.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]));
    let mut u = DMatrix::zeros(m, n);
    let mut vs = DMatrix::zeros(n, n);
    let mut s = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        let sigma = norms[src];
        if sigma > 0.0 {
            u.set_column(dst, &(w.column(src) / sigma));
        }
        vs.set_column(dst, &v.column(src));
        s.push(sigma);
    }
    (u, s, vs)
}
