//! Oracles shared by the integration tests and the acceptance suite.
#![allow(dead_code)]

use gridtrack::geometry::Point2;
use gridtrack::prediction::Mat2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Least squares through the normal equations `(VᵀV) a = Vᵀy`, solved by
/// Gaussian elimination with partial pivoting. Powers are taken of
/// `(x - shift) / scale` and the result is expanded back to powers of `x`.
pub fn normal_equations_fit(xs: &[f64], ys: &[f64], degree: usize) -> Vec<f64> {
    let n = degree + 1;
    let shift = xs.iter().sum::<f64>() / xs.len() as f64;
    let scale = xs.iter().map(|x| (x - shift).abs()).fold(0.0, f64::max);
    let mut m = vec![vec![0.0; n + 1]; n];
    for (&x, &y) in xs.iter().zip(ys) {
        let t = (x - shift) / scale;
        let pw: Vec<f64> = (0..n).map(|k| t.powi(k as i32)).collect();
        for i in 0..n {
            for j in 0..n {
                m[i][j] += pw[i] * pw[j];
            }
            m[i][n] += pw[i] * y;
        }
    }
    for c in 0..n {
        let piv = (c..n).max_by(|&a, &b| m[a][c].abs().total_cmp(&m[b][c].abs())).unwrap();
        m.swap(c, piv);
        for r in c + 1..n {
            let f = m[r][c] / m[c][c];
            for k in c..=n {
                m[r][k] -= f * m[c][k];
            }
        }
    }
    let mut b = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| m[r][k] * b[k]).sum();
        b[r] = (m[r][n] - s) / m[r][r];
    }
    // sum_k b_k ((x - shift)/scale)^k in powers of x
    let mut a = vec![0.0; n];
    for (k, bk) in b.iter().enumerate() {
        let lead = bk / scale.powi(k as i32);
        for j in 0..=k {
            let binom = (0..j).fold(1.0, |acc, i| acc * (k - i) as f64 / (i + 1) as f64);
            a[j] += lead * binom * (-shift).powi((k - j) as i32);
        }
    }
    a
}

pub fn eval(c: &[f64], x: f64) -> f64 {
    c.iter().enumerate().map(|(k, a)| a * x.powi(k as i32)).sum()
}

pub fn mul(m: &Mat2, p: Point2) -> Point2 {
    Point2::new(m[0][0] * p.x + m[0][1] * p.y, m[1][0] * p.x + m[1][1] * p.y)
}

/// A stable AR(2) process driven by a random robot path, with no innovation noise.
pub fn ar2_with_robot(seed: u64, n: usize) -> (Vec<Point2>, Vec<Point2>, [Mat2; 2], [Mat2; 2], [f64; 2]) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = [[[0.5, 0.1], [-0.05, 0.4]], [[0.2, 0.0], [0.05, 0.15]]];
    let b = [[[0.1, 0.02], [0.0, 0.12]], [[-0.05, 0.01], [0.03, 0.04]]];
    let c = [0.3, -0.2];
    let robot: Vec<Point2> = (0..n)
        .map(|_| Point2::new(rng.random_range(0.0..5.0), rng.random_range(0.0..5.0)))
        .collect();
    let mut z = vec![Point2::new(1.0, 2.0), Point2::new(1.2, 1.9)];
    for t in 1..n - 1 {
        let next = Point2::new(c[0], c[1])
            + mul(&a[0], z[t])
            + mul(&a[1], z[t - 1])
            + mul(&b[0], robot[t])
            + mul(&b[1], robot[t - 1]);
        z.push(next);
    }
    (z, robot, a, b, c)
}

