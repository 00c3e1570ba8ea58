//! Minimum-norm least squares via one-sided Jacobi SVD.
//!
//! The systems solved here are small (tens of columns) and may be exactly
//! rank deficient, e.g. an autoregression fitted to a stationary subject.

use nalgebra::DMatrix;

const MAX_SWEEPS: usize = 60;

/// Thin SVD `a = u * diag(s) * v^T` of a matrix with at least as many rows as columns.
pub(crate) struct Svd {
    pub u: DMatrix<f64>,
    pub s: Vec<f64>,
    pub v: DMatrix<f64>,
}

pub(crate) fn jacobi_svd(a: &DMatrix<f64>) -> Svd {
    let (m, n) = a.shape();
    assert!(m >= n, "jacobi_svd needs a tall matrix, got {m}x{n}");
    let mut u = a.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for i in 0..m {
                    let (x, y) = (u[(i, p)], u[(i, q)]);
                    alpha += x * x;
                    beta += y * y;
                    gamma += x * y;
                }
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let (x, y) = (u[(i, p)], u[(i, q)]);
                    u[(i, p)] = c * x - s * y;
                    u[(i, q)] = s * x + c * y;
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
    let mut s = vec![0.0; n];
    for (j, sj) in s.iter_mut().enumerate() {
        let norm = u.column(j).norm();
        *sj = norm;
        if norm > 0.0 {
            u.column_mut(j).unscale_mut(norm);
        }
    }
    Svd { u, s, v }
}

pub(crate) struct LstSq {
    pub solution: DMatrix<f64>,
    pub rank: usize,
}

/// Minimum-norm solution of `min ||a x - b||`, treating singular values below
/// `max(s) * max(m, n) * eps` as zero.
pub(crate) fn lstsq(a: &DMatrix<f64>, b: &DMatrix<f64>) -> LstSq {
    let (m, n) = a.shape();
    assert_eq!(b.nrows(), m, "right-hand side row mismatch");
    // zero rows leave the least-squares problem unchanged
    let (a, b) = if m < n {
        (a.clone().resize_vertically(n, 0.0), b.clone().resize_vertically(n, 0.0))
    } else {
        (a.clone(), b.clone())
    };
    let svd = jacobi_svd(&a);
    let smax = svd.s.iter().cloned().fold(0.0, f64::max);
    let tol = smax * m.max(n) as f64 * f64::EPSILON;
    let utb = svd.u.transpose() * &b;
    let mut scaled = DMatrix::zeros(n, b.ncols());
    let mut rank = 0;
    for (j, &sj) in svd.s.iter().enumerate() {
        if sj > tol {
            rank += 1;
            for k in 0..b.ncols() {
                scaled[(j, k)] = utb[(j, k)] / sj;
            }
        }
    }
    LstSq {
        solution: &svd.v * scaled,
        rank,
    }
}
