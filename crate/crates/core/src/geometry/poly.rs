//! Dense univariate polynomials in the monomial basis and their least-squares fit.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Polynomial with coefficients in ascending degree: `c[0] + c[1] x + c[2] x^2 + ...`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Polynomial(Vec<f64>);

impl Polynomial {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Polynomial(coeffs)
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.0
    }

    pub fn degree(&self) -> usize {
        self.0.len().saturating_sub(1)
    }

    /// Horner evaluation. The empty polynomial evaluates to zero.
    pub fn eval(&self, x: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn derivative(&self) -> Polynomial {
        Polynomial(
            self.0
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, &c)| k as f64 * c)
                .collect(),
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolyFit {
    pub poly: Polynomial,
    /// Root-mean-square residual over the fitted samples.
    pub rms: f64,
}

/// Failure modes of [`fit_polynomial`].
#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum FitError {
    #[error("need at least {needed} samples for degree {degree}, got {got}")]
    TooFewSamples {
        degree: usize,
        needed: usize,
        got: usize,
    },
    #[error("duplicate abscissa {0}")]
    DuplicateAbscissa(f64),
    #[error("non-finite sample ({0}, {1})")]
    NonFinite(f64, f64),
    #[error("design matrix is rank deficient")]
    RankDeficient,
}

/// Least-squares polynomial of the given degree through `(xs[i], ys[i])`.
///
/// The fit is performed in the affinely scaled variable `t = (x - mid) / half`
/// (which keeps the Vandermonde matrix well conditioned for pixel-sized
/// abscissae) and then expanded back into monomial coefficients of `x`.
pub fn fit_polynomial(xs: &[f64], ys: &[f64], degree: usize) -> Result<PolyFit, FitError> {
    assert_eq!(xs.len(), ys.len(), "abscissa/ordinate length mismatch");
    let n = xs.len();
    let cols = degree + 1;
    if n < cols {
        return Err(FitError::TooFewSamples {
            degree,
            needed: cols,
            got: n,
        });
    }
    for (&x, &y) in xs.iter().zip(ys) {
        if !x.is_finite() || !y.is_finite() {
            return Err(FitError::NonFinite(x, y));
        }
    }
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
        return Err(FitError::DuplicateAbscissa(w[0]));
    }

    let (lo, hi) = (sorted[0], sorted[n - 1]);
    let mid = 0.5 * (lo + hi);
    let half = if hi > lo { 0.5 * (hi - lo) } else { 1.0 };

    let design = DMatrix::from_fn(n, cols, |i, k| ((xs[i] - mid) / half).powi(k as i32));
    let rhs = DMatrix::from_column_slice(n, 1, ys);
    let ls = crate::linalg::lstsq(&design, &rhs);
    if ls.rank < cols {
        return Err(FitError::RankDeficient);
    }
    let scaled = ls.solution;

    let poly = Polynomial(unscale(scaled.as_slice(), mid, half));
    let rms = residual_rms(&poly, xs, ys);
    Ok(PolyFit { poly, rms })
}

/// Expands `sum_k b[k] ((x - mid)/half)^k` into monomial coefficients of `x`.
fn unscale(scaled: &[f64], mid: f64, half: f64) -> Vec<f64> {
    let mut out = vec![0.0; scaled.len()];
    for (k, &b) in scaled.iter().enumerate() {
        let lead = b / half.powi(k as i32);
        let mut binom = 1.0;
        for j in 0..=k {
            // C(k, j) x^j (-mid)^(k-j)
            out[j] += lead * binom * (-mid).powi((k - j) as i32);
            binom = binom * (k - j) as f64 / (j + 1) as f64;
        }
    }
    out
}

pub fn residual_rms(poly: &Polynomial, xs: &[f64], ys: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let ss: f64 = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| (poly.eval(x) - y).powi(2))
        .sum();
    (ss / xs.len() as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn horner_matches_power_sum() {
        let p = Polynomial::new(vec![1.0, -2.0, 0.5, 3.0]);
        let x: f64 = 1.7;
        let direct = 1.0 - 2.0 * x + 0.5 * x * x + 3.0 * x.powi(3);
        assert!((p.eval(x) - direct).abs() < 1e-12);
        assert_eq!(p.derivative().coeffs(), &[-2.0, 1.0, 9.0]);
    }

    #[test]
    fn exact_line_is_recovered() {
        let xs: Vec<f64> = (0..10).map(|i| 100.0 + 30.0 * i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|v| 2.0 + 0.01 * v).collect();
        let fit = fit_polynomial(&xs, &ys, 1).unwrap();
        assert!((fit.poly.coeffs()[0] - 2.0).abs() < 1e-12);
        assert!((fit.poly.coeffs()[1] - 0.01).abs() < 1e-15);
        assert!(fit.rms < 1e-12);
    }

    #[test]
    fn single_sample_constant() {
        let fit = fit_polynomial(&[42.0], &[3.5], 0).unwrap();
        assert_eq!(fit.poly.coeffs(), &[3.5]);
    }

    #[test]
    fn rejects_duplicates_and_underdetermined() {
        assert!(matches!(
            fit_polynomial(&[1.0, 1.0, 2.0], &[0.0, 1.0, 2.0], 1),
            Err(FitError::DuplicateAbscissa(_))
        ));
        assert!(matches!(
            fit_polynomial(&[1.0, 2.0], &[0.0, 1.0], 2),
            Err(FitError::TooFewSamples { needed: 3, .. })
        ));
    }
}
