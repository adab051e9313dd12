//! Free outgoing resolvent kernels on the line and half-line, the spectral
//! reflection identity, and discretized weighted norms.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{largest_singular_value, log_log_fit, trapezoid_weights, LinearFit};
use crate::model::WeightFunction;

fn i() -> Complex64 {
    Complex64::i()
}

fn check_sigma(sigma: Complex64) -> Result<()> {
    if sigma.norm() == 0.0 || !sigma.re.is_finite() || !sigma.im.is_finite() {
        return Err(Error::Domain(format!("sigma must be finite and nonzero, got {sigma}")));
    }
    Ok(())
}

/// Outgoing kernel of `(-d²/dx² - σ²)^{-1}` on the line: `i e^{iσ|x-y|} / (2σ)`.
pub fn r0_kernel_line(sigma: Complex64, x: f64, y: f64) -> Result<Complex64> {
    check_sigma(sigma)?;
    Ok(i() * (i() * sigma * (x - y).abs()).exp() / (2.0 * sigma))
}

/// Dirichlet kernel on `(0, ∞)`: `(i/2σ)(e^{iσ|x-y|} - e^{iσ(x+y)})`.
pub fn r0_kernel_halfline(sigma: Complex64, x: f64, y: f64) -> Result<Complex64> {
    check_sigma(sigma)?;
    if x < 0.0 || y < 0.0 {
        return Err(Error::Domain(format!("half-line kernel needs x, y >= 0, got ({x}, {y})")));
    }
    Ok(i() / (2.0 * sigma) * ((i() * sigma * (x - y).abs()).exp() - (i() * sigma * (x + y)).exp()))
}

/// `M(σ,x,y) = (i/2)(e^{iσ(x-y)} + e^{-iσ(x-y)})`, the two-point-sphere spectral kernel.
pub fn m_kernel_line(sigma: Complex64, x: f64, y: f64) -> Complex64 {
    let d = x - y;
    0.5 * i() * ((i() * sigma * d).exp() + (-i() * sigma * d).exp())
}

/// `Φ(σ)` at `x`, one entry per direction `ω ∈ {+1, -1}`: `e^{iσωx}`.
pub fn phi_factor(sigma: Complex64, x: f64) -> [Complex64; 2] {
    [(i() * sigma * x).exp(), (-i() * sigma * x).exp()]
}

/// Residual of `R0(σ) - R0(-σ) = σ^{-1} M(σ)` for a given line kernel, together
/// with the residual of `M = (i/2) Φ^t(σ) Φ(-σ)`. Returns the larger one, each
/// measured against `max(1, size of the terms)` so growth of the kernels in
/// the lower half plane does not swamp the comparison.
pub fn reflection_identity_residual_with<K>(kernel: K, sigma: Complex64, x: f64, y: f64) -> Result<f64>
where
    K: Fn(Complex64, f64, f64) -> Result<Complex64>,
{
    check_sigma(sigma)?;
    let m = m_kernel_line(sigma, x, y);
    let (plus, minus) = (kernel(sigma, x, y)?, kernel(-sigma, x, y)?);
    let scale = 1f64.max(plus.norm() + minus.norm() + (m / sigma).norm());
    let identity = (plus - minus - m / sigma).norm() / scale;
    let px = phi_factor(sigma, x);
    let py = phi_factor(-sigma, y);
    let factored = 0.5 * i() * (px[0] * py[0] + px[1] * py[1]);
    Ok(identity.max((factored - m).norm() / 1f64.max(m.norm())))
}

pub fn reflection_identity_residual(sigma: Complex64, x: f64, y: f64) -> Result<f64> {
    reflection_identity_residual_with(r0_kernel_line, sigma, x, y)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Geometry {
    /// Whole line with the even weight `φ(|x|)`.
    Line,
    /// Half-line with a Dirichlet wall at the origin.
    HalfLine,
}

/// Uniform truncated grid for kernel operators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelGrid {
    pub geometry: Geometry,
    pub points_per_wavelength: f64,
    pub max_spacing: f64,
    /// Explicit spacing; checked against the wavelength instead of derived from it.
    pub spacing: Option<f64>,
    /// Truncation radius; defaults to `x_linear + 12/γ`.
    pub x_max: Option<f64>,
}

impl Default for KernelGrid {
    fn default() -> Self {
        Self { geometry: Geometry::HalfLine, points_per_wavelength: 24.0, max_spacing: 0.05, spacing: None, x_max: None }
    }
}

impl KernelGrid {
    pub fn line() -> Self {
        Self { geometry: Geometry::Line, ..Self::default() }
    }

    fn nodes(&self, sigma: Complex64, gamma: f64, weight: &WeightFunction) -> Result<Vec<f64>> {
        let wavelength = 2.0 * std::f64::consts::PI / sigma.norm();
        let d = match self.spacing {
            Some(d) => {
                if d > wavelength / 10.0 {
                    return Err(Error::Resolution(format!(
                        "spacing {d} exceeds a tenth of the wavelength {wavelength:.4}"
                    )));
                }
                d
            }
            None => {
                if self.points_per_wavelength < 10.0 {
                    return Err(Error::Resolution(format!(
                        "{} points per wavelength, need at least 10",
                        self.points_per_wavelength
                    )));
                }
                (wavelength / self.points_per_wavelength).min(self.max_spacing)
            }
        };
        let x_max = self.x_max.unwrap_or(weight.x_linear + 12.0 / gamma);
        let n = (x_max / d).ceil() as usize;
        let d = x_max / n as f64;
        Ok(match self.geometry {
            Geometry::HalfLine => (0..=n).map(|k| k as f64 * d).collect(),
            Geometry::Line => (0..=2 * n).map(|k| -x_max + k as f64 * d).collect(),
        })
    }
}

/// `Σ_j e^{iσ|x_i - x_j|} c_j` in O(N) by two exponential recursions.
fn oscillatory_sum(sigma: Complex64, xs: &[f64], c: &[Complex64]) -> Vec<Complex64> {
    let n = xs.len();
    let mut fwd = vec![Complex64::new(0.0, 0.0); n];
    let mut bwd = vec![Complex64::new(0.0, 0.0); n];
    for k in 0..n {
        fwd[k] = c[k] + if k > 0 { (i() * sigma * (xs[k] - xs[k - 1])).exp() * fwd[k - 1] } else { 0.0.into() };
    }
    for k in (0..n).rev() {
        bwd[k] = c[k] + if k + 1 < n { (i() * sigma * (xs[k + 1] - xs[k])).exp() * bwd[k + 1] } else { 0.0.into() };
    }
    (0..n).map(|k| fwd[k] + bwd[k] - c[k]).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum KernelKind {
    R0,
    M,
}

fn apply_kernel(kind: KernelKind, geometry: Geometry, sigma: Complex64, xs: &[f64], c: &[Complex64]) -> Vec<Complex64> {
    match kind {
        KernelKind::R0 => {
            let mut out = oscillatory_sum(sigma, xs, c);
            if geometry == Geometry::HalfLine {
                let s: Complex64 = xs.iter().zip(c).map(|(&x, &v)| (i() * sigma * x).exp() * v).sum();
                for (o, &x) in out.iter_mut().zip(xs) {
                    *o -= (i() * sigma * x).exp() * s;
                }
            }
            let pre = i() / (2.0 * sigma);
            out.iter_mut().for_each(|o| *o *= pre);
            out
        }
        KernelKind::M => {
            let plus: Complex64 = xs.iter().zip(c).map(|(&x, &v)| (-i() * sigma * x).exp() * v).sum();
            let minus: Complex64 = xs.iter().zip(c).map(|(&x, &v)| (i() * sigma * x).exp() * v).sum();
            xs.iter()
                .map(|&x| 0.5 * i() * ((i() * sigma * x).exp() * plus + (-i() * sigma * x).exp() * minus))
                .collect()
        }
    }
}

/// Second-order finite-difference derivative of order `s` on a uniform grid,
/// stored row by row.
fn fd_rows(n: usize, d: f64, s: u8) -> Vec<Vec<(usize, f64)>> {
    match s {
        0 => (0..n).map(|k| vec![(k, 1.0)]).collect(),
        1 => (0..n)
            .map(|k| {
                if k == 0 {
                    vec![(0, -1.5 / d), (1, 2.0 / d), (2, -0.5 / d)]
                } else if k == n - 1 {
                    vec![(n - 3, 0.5 / d), (n - 2, -2.0 / d), (n - 1, 1.5 / d)]
                } else {
                    vec![(k - 1, -0.5 / d), (k + 1, 0.5 / d)]
                }
            })
            .collect(),
        _ => {
            let d2 = d * d;
            (0..n)
                .map(|k| {
                    if k == 0 {
                        vec![(0, 2.0 / d2), (1, -5.0 / d2), (2, 4.0 / d2), (3, -1.0 / d2)]
                    } else if k == n - 1 {
                        vec![(n - 4, -1.0 / d2), (n - 3, 4.0 / d2), (n - 2, -5.0 / d2), (n - 1, 2.0 / d2)]
                    } else {
                        vec![(k - 1, 1.0 / d2), (k, -2.0 / d2), (k + 1, 1.0 / d2)]
                    }
                })
                .collect()
        }
    }
}

fn fd_apply(rows: &[Vec<(usize, f64)>], v: &[Complex64]) -> Vec<Complex64> {
    rows.iter().map(|r| r.iter().map(|&(j, c)| v[j] * c).sum()).collect()
}

fn fd_apply_transpose(rows: &[Vec<(usize, f64)>], v: &[Complex64]) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); v.len()];
    for (k, r) in rows.iter().enumerate() {
        for &(j, c) in r {
            out[j] += v[k] * c;
        }
    }
    out
}

/// Largest singular value of `D^s e^{-γφ} K e^{-γφ}` on `L²` of the grid.
fn weighted_kernel_norm(
    kind: KernelKind,
    sigma: Complex64,
    gamma: f64,
    weight: &WeightFunction,
    grid: &KernelGrid,
    s: u8,
) -> Result<f64> {
    let xs = grid.nodes(sigma, gamma, weight)?;
    let n = xs.len();
    let d = xs[1] - xs[0];
    let q = trapezoid_weights(&xs);
    let sq: Vec<f64> = q.iter().map(|v| v.sqrt()).collect();
    let e: Vec<f64> = xs.iter().map(|&x| weight.damping(gamma, x)).collect();
    let rows = fd_rows(n, d, s);
    let geometry = grid.geometry;
    let apply = |g: &[Complex64]| {
        let c: Vec<Complex64> = (0..n).map(|k| g[k] * (e[k] * sq[k])).collect();
        let y: Vec<Complex64> = apply_kernel(kind, geometry, sigma, &xs, &c).iter().zip(&e).map(|(v, w)| v * w).collect();
        fd_apply(&rows, &y).iter().zip(&sq).map(|(v, w)| v * w).collect::<Vec<_>>()
    };
    let adjoint = |g: &[Complex64]| {
        let y: Vec<Complex64> = g.iter().zip(&sq).map(|(v, w)| v * w).collect();
        let y: Vec<Complex64> = fd_apply_transpose(&rows, &y).iter().zip(&e).map(|(v, w)| (v * w).conj()).collect();
        // the kernel is symmetric, so K* = conj K conj
        apply_kernel(kind, geometry, sigma, &xs, &y)
            .iter()
            .enumerate()
            .map(|(k, v)| v.conj() * (e[k] * sq[k]))
            .collect::<Vec<_>>()
    };
    let est = largest_singular_value(apply, adjoint, n, 1e-8, 400);
    Ok(est.value)
}

/// `‖D^s (e^{-γφ} R0(σ) e^{-γφ})‖` on the truncated, quadrature-weighted grid.
pub fn weighted_r0_norm(sigma: Complex64, gamma: f64, weight: &WeightFunction, grid: &KernelGrid, s: u8) -> Result<f64> {
    check_sigma(sigma)?;
    if !(gamma > 0.0) {
        return Err(Error::Domain(format!("gamma must be positive, got {gamma}")));
    }
    if sigma.im <= -gamma {
        return Err(Error::Domain(format!("Im sigma = {} must exceed -gamma = {}", sigma.im, -gamma)));
    }
    if s > 2 {
        return Err(Error::Domain(format!("derivative order {s} not supported (0, 1 or 2)")));
    }
    weighted_kernel_norm(KernelKind::R0, sigma, gamma, weight, grid, s)
}

/// `‖e^{-γφ} M(σ) e^{-γφ}‖` on the line grid.
pub fn weighted_m_norm(sigma: Complex64, gamma: f64, weight: &WeightFunction, grid: &KernelGrid) -> Result<f64> {
    check_sigma(sigma)?;
    let grid = KernelGrid { geometry: Geometry::Line, ..*grid };
    weighted_kernel_norm(KernelKind::M, sigma, gamma, weight, &grid, 0)
}

/// Schur constant `sup_x ∫ e^{-γφ(y)} dy` of the truncated grid domain.
pub fn schur_constant(gamma: f64, weight: &WeightFunction, grid: &KernelGrid, sigma: Complex64) -> Result<f64> {
    let xs = grid.nodes(sigma, gamma, weight)?;
    let q = trapezoid_weights(&xs);
    Ok(xs.iter().zip(&q).map(|(&x, w)| w * weight.damping(gamma, x)).sum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormRecord {
    pub sigma: Complex64,
    pub norm: f64,
}

/// Log-log fit of weighted kernel norms against `|σ|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub s: u8,
    pub gamma: f64,
    pub records: Vec<NormRecord>,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn fit_r0_scaling(sigmas: &[Complex64], gamma: f64, weight: &WeightFunction, grid: &KernelGrid, s: u8) -> Result<ScalingReport> {
    use rayon::prelude::*;
    let norms: Vec<f64> = sigmas
        .par_iter()
        .map(|&sg| weighted_r0_norm(sg, gamma, weight, grid, s))
        .collect::<Result<Vec<_>>>()?;
    let mags: Vec<f64> = sigmas.iter().map(|s| s.norm()).collect();
    let LinearFit { slope, intercept, r_squared } = log_log_fit(&mags, &norms)?;
    Ok(ScalingReport {
        s,
        gamma,
        records: sigmas.iter().zip(&norms).map(|(&sigma, &norm)| NormRecord { sigma, norm }).collect(),
        slope,
        intercept,
        r_squared,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MDecayReport {
    pub gamma: f64,
    pub records: Vec<NormRecord>,
    pub sup: f64,
    pub min: f64,
    pub max_over_min: f64,
    /// `max_over_min < 10`: the norms share one constant bound.
    pub bounded: bool,
}

pub fn verify_m_decay(sigmas: &[Complex64], gamma: f64, eps: f64, weight: &WeightFunction, grid: &KernelGrid) -> Result<MDecayReport> {
    use rayon::prelude::*;
    if sigmas.is_empty() {
        return Err(Error::Precondition("empty sigma list".into()));
    }
    if !(gamma > 0.0 && eps > 0.0 && eps < gamma) {
        return Err(Error::Domain(format!("need 0 < eps < gamma, got eps = {eps}, gamma = {gamma}")));
    }
    for s in sigmas {
        if s.im.abs() >= gamma - eps {
            return Err(Error::Domain(format!("|Im sigma| = {} must stay below gamma - eps = {}", s.im.abs(), gamma - eps)));
        }
        if s.re < 1.0 {
            return Err(Error::Domain(format!("Re sigma = {} must be at least 1", s.re)));
        }
    }
    let norms: Vec<f64> = sigmas
        .par_iter()
        .map(|&sg| weighted_m_norm(sg, gamma, weight, grid))
        .collect::<Result<Vec<_>>>()?;
    let sup = norms.iter().cloned().fold(0.0, f64::max);
    let min = norms.iter().cloned().fold(f64::INFINITY, f64::min);
    let ratio = sup / min;
    Ok(MDecayReport {
        gamma,
        records: sigmas.iter().zip(&norms).map(|(&sigma, &norm)| NormRecord { sigma, norm }).collect(),
        sup,
        min,
        max_over_min: ratio,
        bounded: ratio < 10.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::make_weight;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn halfline_kernel_vanishes_on_the_wall() {
        assert_eq!(r0_kernel_halfline(c(1.0, 0.0), 0.0, 0.7).unwrap().norm(), 0.0);
        assert_eq!(r0_kernel_halfline(c(1.0, 0.0), 2.3, 0.0).unwrap().norm(), 0.0);
        assert!(r0_kernel_halfline(c(0.0, 0.0), 1.0, 1.0).is_err());
        assert!(reflection_identity_residual(c(0.0, 0.0), 1.0, 1.0).is_err());
    }

    #[test]
    fn halfline_kernel_matches_boundary_value_solve() {
        // (-u'' + u) = δ_1 on (0, L) with Dirichlet ends, second-order FD
        let (l, n) = (20.0, 40_000usize);
        let d = l / n as f64;
        let m = n - 1;
        let diag = vec![2.0 / (d * d) + 1.0; m];
        let off = -1.0 / (d * d);
        let mut rhs = vec![0.0; m];
        let j = (1.0 / d).round() as usize - 1;
        rhs[j] = 1.0 / d;
        // Thomas algorithm
        let mut cp = vec![0.0; m];
        let mut dp = vec![0.0; m];
        cp[0] = off / diag[0];
        dp[0] = rhs[0] / diag[0];
        for k in 1..m {
            let den = diag[k] - off * cp[k - 1];
            cp[k] = off / den;
            dp[k] = (rhs[k] - off * dp[k - 1]) / den;
        }
        let mut u = vec![0.0; m];
        u[m - 1] = dp[m - 1];
        for k in (0..m - 1).rev() {
            u[k] = dp[k] - cp[k] * u[k + 1];
        }
        let g = r0_kernel_halfline(c(0.0, 1.0), 1.0, 1.0).unwrap();
        assert!(g.im.abs() < 1e-15);
        assert!((u[j] - g.re).abs() < 1e-4 * g.re, "{} vs {}", u[j], g.re);
    }

    #[test]
    fn halfline_kernel_solves_helmholtz_away_from_source() {
        let sigma = c(2.0, -0.4);
        let y = 1.3;
        let d = 1e-3;
        for &x in &[0.3, 0.9, 2.0, 3.7] {
            let g = |x| r0_kernel_halfline(sigma, x, y).unwrap();
            let lap = (g(x + d) - 2.0 * g(x) + g(x - d)) / (d * d);
            let res = -lap - sigma * sigma * g(x);
            assert!(res.norm() < 1e-5 * g(x).norm().max(1.0), "x = {x}: {res}");
        }
        // unit jump of the derivative at the source
        let g = |x| r0_kernel_halfline(sigma, x, y).unwrap();
        let jump = (g(y + d) - g(y)) / d - (g(y) - g(y - d)) / d;
        assert!((jump + 1.0).norm() < 1e-2, "{jump}");
    }

    #[test]
    fn reflection_identity_examples() {
        assert!(reflection_identity_residual(c(2.0, 0.0), 0.3, 1.7).unwrap() < 1e-13);
        assert!(reflection_identity_residual(c(1.0, -0.1), 0.3, 1.7).unwrap() < 1e-12);
        assert!(reflection_identity_residual(c(3.0, -0.5), 1.1, 1.1).unwrap() < 1e-13);
        assert!((m_kernel_line(c(3.0, -0.5), 1.1, 1.1) - c(0.0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn wrong_sign_kernel_breaks_the_identity() {
        let broken = |s: Complex64, x: f64, y: f64| r0_kernel_line(s, x, y).map(|v| -v);
        assert!(reflection_identity_residual_with(broken, c(2.0, 0.0), 0.3, 1.7).unwrap() > 0.1);
    }

    #[test]
    fn schur_bound_at_sigma_ten() {
        let w = make_weight(0.0, 1.0).unwrap();
        let grid = KernelGrid::default();
        let norm = weighted_r0_norm(c(10.0, 0.0), 1.0, &w, &grid, 0).unwrap();
        let schur = schur_constant(1.0, &w, &grid, c(10.0, 0.0)).unwrap();
        assert!(norm <= schur / 10.0, "{norm} vs {}", schur / 10.0);
    }

    #[test]
    fn imaginary_axis_is_bounded_by_distance_to_spectrum() {
        let w = make_weight(0.0, 1.0).unwrap();
        for t in [1.0, 2.0, 5.0] {
            for grid in [KernelGrid::default(), KernelGrid::line()] {
                let norm = weighted_r0_norm(c(0.0, t), 1.0, &w, &grid, 0).unwrap();
                assert!(norm <= 1.0 / (t * t) * (1.0 + 1e-6), "t = {t}: {norm}");
            }
        }
    }

    #[test]
    fn resolution_and_strip_errors() {
        let w = make_weight(0.0, 1.0).unwrap();
        let coarse = KernelGrid { spacing: Some(0.2), ..KernelGrid::default() };
        assert!(matches!(weighted_r0_norm(c(10.0, 0.0), 1.0, &w, &coarse, 0), Err(Error::Resolution(_))));
        assert!(matches!(weighted_r0_norm(c(1.0, -1.0), 1.0, &w, &KernelGrid::default(), 0), Err(Error::Domain(_))));
    }

    #[test]
    fn kernel_operator_matches_dense_matrix() {
        let w = make_weight(0.0, 1.0).unwrap();
        let sigma = c(3.0, -0.3);
        for geometry in [Geometry::HalfLine, Geometry::Line] {
            let grid = KernelGrid { geometry, x_max: Some(3.0), ..KernelGrid::default() };
            let xs = grid.nodes(sigma, 1.0, &w).unwrap();
            let cvec: Vec<Complex64> = (0..xs.len()).map(|k| c((k as f64 * 0.37).sin(), (k as f64 * 0.11).cos())).collect();
            let fast = apply_kernel(KernelKind::R0, geometry, sigma, &xs, &cvec);
            for (k, &x) in xs.iter().enumerate().step_by(17) {
                let dense: Complex64 = xs
                    .iter()
                    .zip(&cvec)
                    .map(|(&y, &v)| {
                        let kern = match geometry {
                            Geometry::HalfLine => r0_kernel_halfline(sigma, x, y).unwrap(),
                            Geometry::Line => r0_kernel_line(sigma, x, y).unwrap(),
                        };
                        kern * v
                    })
                    .sum();
                assert!((fast[k] - dense).norm() < 1e-10 * dense.norm().max(1.0));
            }
        }
    }

    #[test]
    fn refinement_changes_norm_by_under_one_percent() {
        let w = make_weight(0.0, 1.0).unwrap();
        let g1 = KernelGrid::default();
        let g2 = KernelGrid { points_per_wavelength: 48.0, max_spacing: 0.025, ..g1 };
        for s in [0u8, 1] {
            let a = weighted_r0_norm(c(4.0, -0.2), 1.0, &w, &g1, s).unwrap();
            let b = weighted_r0_norm(c(4.0, -0.2), 1.0, &w, &g2, s).unwrap();
            assert!((a - b).abs() < 0.01 * b, "s = {s}: {a} vs {b}");
        }
    }

    #[test]
    fn m_decay_rejects_points_outside_the_strip() {
        let w = make_weight(0.0, 1.0).unwrap();
        let grid = KernelGrid::line();
        assert!(verify_m_decay(&[c(1.0, -0.95)], 1.0, 0.1, &w, &grid).is_err());
        assert!(verify_m_decay(&[c(0.5, 0.0)], 1.0, 0.1, &w, &grid).is_err());
        assert!(verify_m_decay(&[c(1.0, -0.85)], 1.0, 0.1, &w, &grid).is_ok());
    }

    #[test]
    fn m_norms_bounded_and_monotone_in_gamma() {
        let w = make_weight(0.0, 1.0).unwrap();
        let grid = KernelGrid::line();
        let sigmas: Vec<Complex64> = [1.0, 2.0, 5.0, 10.0, 20.0, 50.0].iter().map(|&s| c(s, 0.0)).collect();
        let rep = verify_m_decay(&sigmas, 1.0, 0.1, &w, &grid).unwrap();
        assert!(rep.bounded, "{rep:?}");
        let rep2 = verify_m_decay(&sigmas, 2.0, 0.1, &w, &grid).unwrap();
        for (a, b) in rep.records.iter().zip(&rep2.records) {
            assert!(b.norm <= a.norm * (1.0 + 1e-8), "{} > {}", b.norm, a.norm);
        }
    }

    #[test]
    fn second_derivative_norm_grows_linearly_over_a_decade() {
        let w = make_weight(0.0, 1.0).unwrap();
        let grid = KernelGrid::default();
        let sigmas: Vec<Complex64> = (0..6).map(|k| c(6.4 * 10f64.powf(k as f64 / 5.0), 0.0)).collect();
        let rep = fit_r0_scaling(&sigmas, 1.0, &w, &grid, 2).unwrap();
        assert!((rep.slope - 1.0).abs() <= 0.15, "slope {}", rep.slope);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn kernel_is_symmetric(re in 0.1f64..20.0, im in -0.99f64..2.0, x in 0.0f64..8.0, y in 0.0f64..8.0) {
            let s = c(re, im);
            prop_assert_eq!(r0_kernel_halfline(s, x, y).unwrap(), r0_kernel_halfline(s, y, x).unwrap());
        }

        #[test]
        fn reflection_identity_holds_in_the_strip(re in 0.05f64..20.0, im in -0.999f64..0.0, x in 0.0f64..10.0, y in 0.0f64..10.0) {
            prop_assert!(reflection_identity_residual(c(re, im), x, y).unwrap() < 1e-12);
        }
    }
}
