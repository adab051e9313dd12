//! Small dense and matrix-free linear algebra helpers.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Result of a matrix-free largest-singular-value estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingularEstimate {
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Largest singular value of `B` from Krylov iteration on `B*B`.
///
/// Starts from the normalized all-ones vector and runs Lanczos with full
/// reorthogonalization; stops once the top Ritz value moves by less than
/// `rtol` (relative) between iterations.
pub fn largest_singular_value<A, H>(apply: A, apply_adjoint: H, n: usize, rtol: f64, max_iter: usize) -> SingularEstimate
where
    A: Fn(&[Complex64]) -> Vec<Complex64>,
    H: Fn(&[Complex64]) -> Vec<Complex64>,
{
    if n == 0 {
        return SingularEstimate { value: 0.0, iterations: 0, converged: true };
    }
    let mut basis: Vec<Vec<Complex64>> = Vec::new();
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let start = 1.0 / (n as f64).sqrt();
    let mut q: Vec<Complex64> = vec![Complex64::new(start, 0.0); n];
    let mut prev_top = 0.0;
    let max_iter = max_iter.min(n).max(1);
    for it in 1..=max_iter {
        let mut w = apply_adjoint(&apply(&q));
        let alpha = dot(&q, &w).re;
        alphas.push(alpha);
        basis.push(q.clone());
        // full reorthogonalization, twice for stability
        for _ in 0..2 {
            for v in &basis {
                let c = dot(v, &w);
                for (wi, vi) in w.iter_mut().zip(v) {
                    *wi -= c * vi;
                }
            }
        }
        let beta = norm(&w);
        let top = tridiagonal_max_eigenvalue(&alphas, &betas);
        let converged = it > 1 && (top - prev_top).abs() <= rtol * top.abs().max(f64::MIN_POSITIVE);
        if converged || beta <= 1e-14 * top.abs().max(f64::MIN_POSITIVE) || it == max_iter {
            let conv = converged || beta <= 1e-14 * top.abs().max(f64::MIN_POSITIVE);
            return SingularEstimate { value: top.max(0.0).sqrt(), iterations: it, converged: conv };
        }
        prev_top = top;
        betas.push(beta);
        q = w.into_iter().map(|x| x / beta).collect();
    }
    unreachable!("loop always returns")
}

fn tridiagonal_max_eigenvalue(alphas: &[f64], betas: &[f64]) -> f64 {
    let k = alphas.len();
    let mut t = DMatrix::<f64>::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = alphas[i];
        if i + 1 < k {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    SymmetricEigen::new(t).eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
}

/// Least-squares line `y = slope x + intercept` with coefficient of determination.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Precondition("linear fit needs at least two paired points".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Precondition("linear fit needs distinct abscissae".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - slope * a - intercept).powi(2)).sum();
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    Ok(LinearFit { slope, intercept, r_squared })
}

/// Fit of `ln y` against `ln x`.
pub fn log_log_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return Err(Error::Domain("log-log fit needs positive data".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    linear_fit(&lx, &ly)
}

/// Composite trapezoid weights for a sorted grid.
pub fn trapezoid_weights(xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut w = vec![0.0; n];
    for i in 0..n.saturating_sub(1) {
        let d = xs[i + 1] - xs[i];
        w[i] += 0.5 * d;
        w[i + 1] += 0.5 * d;
    }
    w
}

/// Composite Simpson weights for a uniform grid with an odd number of points;
/// falls back to trapezoid weights otherwise.
pub fn simpson_weights(xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    if n < 3 || n.is_multiple_of(2) {
        return trapezoid_weights(xs);
    }
    let d = (xs[n - 1] - xs[0]) / (n - 1) as f64;
    (0..n)
        .map(|i| {
            let c = if i == 0 || i == n - 1 {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            c * d / 3.0
        })
        .collect()
}

pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn singular_value_of_diagonal_matrix() {
        let d = [3.0, -7.5, 2.0, 0.5, 7.0];
        let apply = |v: &[Complex64]| v.iter().zip(d).map(|(x, s)| x * s).collect::<Vec<_>>();
        let est = largest_singular_value(apply, apply, d.len(), 1e-12, 50);
        assert!((est.value - 7.5).abs() < 1e-9, "{:?}", est);
    }

    #[test]
    fn singular_value_of_dense_complex_matrix() {
        let n = 6;
        let m = DMatrix::<Complex64>::from_fn(n, n, |i, j| {
            Complex64::new(((i * 7 + j * 3) % 5) as f64 - 2.0, ((i + 2 * j) % 3) as f64 - 1.0)
        });
        let oracle = m.clone().svd(false, false).singular_values.max();
        let apply = |v: &[Complex64]| {
            let x = nalgebra::DVector::from_column_slice(v);
            (&m * x).as_slice().to_vec()
        };
        let adj = |v: &[Complex64]| {
            let x = nalgebra::DVector::from_column_slice(v);
            (m.adjoint() * x).as_slice().to_vec()
        };
        let est = largest_singular_value(apply, adj, n, 1e-12, 50);
        assert!((est.value - oracle).abs() < 1e-8 * oracle, "{} vs {oracle}", est.value);
    }

    #[test]
    fn linear_fit_recovers_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| -2.0 * v + 0.5).collect();
        let fit = linear_fit(&x, &y).unwrap();
        assert!((fit.slope + 2.0).abs() < 1e-12);
        assert!((fit.intercept - 0.5).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quadrature_weights_integrate_polynomials() {
        let xs = linspace(0.0, 2.0, 21);
        let s: f64 = simpson_weights(&xs).iter().zip(&xs).map(|(w, x)| w * x.powi(3)).sum();
        assert!((s - 4.0).abs() < 1e-12);
        let t: f64 = trapezoid_weights(&xs).iter().zip(&xs).map(|(w, x)| w * x).sum();
        assert!((t - 2.0).abs() < 1e-12);
    }
}
