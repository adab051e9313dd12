//! Weighted resolvent norms on λ-grids, the exponential a priori bound shape
//! check, the upper-half-plane self-adjoint bound, the semiclassical maximum
//! principle and the quasimode lower bound on the resolvent.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::complex_utils::{AnalyticHandle, Rect};
use crate::continuation::{sigma_of, GreenKernel, SolveOptions};
use crate::error::{Error, Result};
use crate::linalg::{largest_singular_value, linspace, simpson_weights};
use crate::model::{PotentialModel, WeightFunction};
use crate::quasimodes::{dirichlet_eigensolve, refine_dirichlet_energy, Quasimode};
use crate::resonance_search::ResonanceScan;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormOptions {
    /// Relative convergence of the largest singular value.
    pub rtol: f64,
    pub max_iter: usize,
    /// Typical `|W|` near the scanned points; sets the near-resonance threshold.
    pub deflation_scale: f64,
    /// Grid points per local wavelength `2πh / sqrt(|λ²| + sup|V|)`.
    pub points_per_wavelength: f64,
    /// Size of the weighted kernel at the truncation radius.
    pub truncation_tol: f64,
    /// Farthest truncation radius beyond `x_linear`.
    pub max_extent: f64,
    pub max_points: usize,
    pub solve: SolveOptions,
}

impl Default for NormOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-4,
            max_iter: 300,
            deflation_scale: 1.0,
            points_per_wavelength: 24.0,
            truncation_tol: 1e-10,
            max_extent: 60.0,
            max_points: 40_000,
            solve: SolveOptions::default(),
        }
    }
}

/// Grid `[0, X]` on which the weighted kernel is negligible beyond `X` and the
/// local wavelength is resolved.
pub fn norm_grid(
    model: &PotentialModel,
    lambda: Complex64,
    h: f64,
    gamma: f64,
    weight: &WeightFunction,
    opts: &NormOptions,
) -> Result<Vec<f64>> {
    let sigma = sigma_of(lambda, h)?;
    if !(gamma >= 0.0) {
        return Err(Error::Domain(format!("gamma must be nonnegative, got {gamma}")));
    }
    // each weighted variable decays like e^{-(γ + min(Im σ, 0)) x}
    let rate = gamma + sigma.im.min(0.0);
    let extent = if rate > 0.0 { ((1.0 / opts.truncation_tol).ln() / rate).min(opts.max_extent) } else { opts.max_extent };
    let x_max = weight.x_linear.max(model.x_box) + extent;
    let (vsup, _) = model.sup_coefficients(x_max);
    let k = ((lambda * lambda).norm() + vsup).sqrt().max(h) / h;
    let spacing = (2.0 * std::f64::consts::PI / (k * opts.points_per_wavelength)).min(x_max / 200.0);
    let n = (x_max / spacing).ceil() as usize;
    if n + 1 > opts.max_points {
        return Err(Error::Resolution(format!(
            "norm grid needs {} points on [0, {x_max:.3}], limit {}",
            n + 1,
            opts.max_points
        )));
    }
    Ok(linspace(0.0, x_max, n + 1))
}

/// Largest singular value of the discretized `e^{-γφ} R(λ,h) e^{-γφ}` on `xs`.
pub fn weighted_resolvent_norm(
    model: &PotentialModel,
    lambda: Complex64,
    h: f64,
    gamma: f64,
    weight: &WeightFunction,
    xs: &[f64],
    opts: &NormOptions,
) -> Result<f64> {
    let kernel = GreenKernel::new(model, lambda, h, xs, Some((gamma, weight)), &opts.solve, opts.deflation_scale)?;
    let est = largest_singular_value(
        |g| kernel.apply_l2(g),
        |g| kernel.apply_l2_adjoint(g),
        xs.len(),
        opts.rtol,
        opts.max_iter,
    );
    if !est.converged {
        return Err(Error::Resolution(format!(
            "singular value iteration stalled after {} steps at {:.6e}",
            est.iterations, est.value
        )));
    }
    if !est.value.is_finite() {
        return Err(Error::NonFinite { at: lambda });
    }
    Ok(est.value)
}

/// [`weighted_resolvent_norm`] on the grid from [`norm_grid`].
pub fn weighted_resolvent_norm_auto(
    model: &PotentialModel,
    lambda: Complex64,
    h: f64,
    gamma: f64,
    weight: &WeightFunction,
    opts: &NormOptions,
) -> Result<f64> {
    let xs = norm_grid(model, lambda, h, gamma, weight, opts)?;
    weighted_resolvent_norm(model, lambda, h, gamma, weight, &xs, opts)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExclusionDisk {
    pub center: Complex64,
    pub radius: f64,
}

impl ExclusionDisk {
    pub fn contains(&self, z: Complex64) -> bool {
        (z - self.center).norm() < self.radius
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormScan {
    pub lambdas: Vec<Complex64>,
    /// `None` where the kernel was refused next to a resonance inside a disk.
    pub norms: Vec<Option<f64>>,
    pub h: f64,
    pub gamma: f64,
    pub model_label: String,
    pub exclusions: Vec<ExclusionDisk>,
}

impl NormScan {
    pub fn is_excluded(&self, lambda: Complex64) -> bool {
        self.exclusions.iter().any(|d| d.contains(lambda))
    }
}

/// Tensor grid of `n_re × n_im` points on the closed rectangle.
pub fn rect_grid(rect: &Rect, n_re: usize, n_im: usize) -> Vec<Complex64> {
    let re = linspace(rect.re_min, rect.re_max, n_re.max(1));
    let im = linspace(rect.im_min, rect.im_max, n_im.max(1));
    im.iter().flat_map(|&y| re.iter().map(move |&x| Complex64::new(x, y))).collect()
}

/// Weighted norms at every λ, in parallel. Errors outside the exclusion disks
/// are fatal; a near-resonance refusal inside a disk leaves a gap.
pub fn scan_norms(
    model: &PotentialModel,
    lambdas: &[Complex64],
    h: f64,
    gamma: f64,
    weight: &WeightFunction,
    exclusions: &[ExclusionDisk],
    opts: &NormOptions,
) -> Result<NormScan> {
    let norms = lambdas
        .par_iter()
        .map(|&lambda| match weighted_resolvent_norm_auto(model, lambda, h, gamma, weight, opts) {
            Ok(v) => Ok(Some(v)),
            Err(Error::NearResonance { .. }) if exclusions.iter().any(|d| d.contains(lambda)) => Ok(None),
            Err(e) => Err(e),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(NormScan {
        lambdas: lambdas.to_vec(),
        norms,
        h,
        gamma,
        model_label: model.label.clone(),
        exclusions: exclusions.to_vec(),
    })
}

/// Stand-in for the spectrum of the half-line operator: the negative
/// Dirichlet eigenvalues on `[0, L]`, sharpened by shooting, together with
/// `[0, ∞)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumProxy {
    pub interval: f64,
    pub h: f64,
    pub eigenvalues: Vec<f64>,
}

impl SpectrumProxy {
    pub fn distance(&self, z: Complex64) -> f64 {
        let cont = if z.re >= 0.0 { z.im.abs() } else { z.norm() };
        self.eigenvalues.iter().map(|&e| (z - e).norm()).fold(cont, f64::min)
    }

    /// `1 / dist(λ², proxy)`.
    pub fn self_adjoint_bound(&self, lambda: Complex64) -> f64 {
        1.0 / self.distance(lambda * lambda)
    }
}

pub fn spectrum_proxy(model: &PotentialModel, h: f64, interval: f64) -> Result<SpectrumProxy> {
    if !(h > 0.0 && interval > 0.0) {
        return Err(Error::Domain(format!("need h > 0 and L > 0, got ({h}, {interval})")));
    }
    let nonnegative = linspace(0.0, interval, 20_001).iter().all(|&x| model.v(x) >= 0.0);
    if nonnegative {
        return Ok(SpectrumProxy { interval, h, eigenvalues: Vec::new() });
    }
    let spacing = (h / 40.0).max(interval / 1200.0);
    let unknowns = (interval / spacing).ceil() as usize - 1;
    let mut count = 4usize.min(unknowns);
    loop {
        let modes = match dirichlet_eigensolve(model, interval, h, count, Some(spacing)) {
            Ok(m) => m,
            Err(Error::Resolution(_)) if count > 1 => {
                count /= 2;
                let m = dirichlet_eigensolve(model, interval, h, count, Some(spacing))?;
                if m.last().map(|m| m.energy < 0.0).unwrap_or(false) {
                    return Err(Error::Resolution("negative spectrum not resolved on the proxy grid".into()));
                }
                m
            }
            Err(e) => return Err(e),
        };
        let done = modes.last().map(|m| m.energy >= 0.0).unwrap_or(true) || count >= unknowns;
        if done {
            let eigenvalues = modes
                .iter()
                .map(|m| m.energy)
                .filter(|&e| e < 0.0)
                .map(|e| refine_dirichlet_energy(model, interval, h, e, 0.1 * e.abs()))
                .collect::<Result<Vec<_>>>()?;
            return Ok(SpectrumProxy { interval, h, eigenvalues });
        }
        count = (2 * count).min(unknowns);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AprioriOptions {
    pub p_grid: Vec<f64>,
    /// Largest admissible `A`; beyond it the fit reports `NoFit`.
    pub a_cap: f64,
    /// Check against these `(A, p)` instead of fitting.
    pub fixed: Option<(f64, f64)>,
}

impl Default for AprioriOptions {
    fn default() -> Self {
        Self { p_grid: (0..=8).map(|k| 0.5 * k as f64).collect(), a_cap: 100.0, fixed: None }
    }
}

/// One `h` worth of data for the a priori check.
#[derive(Debug, Clone, Copy)]
pub struct AprioriInput<'a> {
    pub scan: &'a NormScan,
    pub resonances: &'a ResonanceScan,
    /// Exclusion radius `S(h)`.
    pub s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatus {
    Fit,
    NoFit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AprioriFit {
    pub a: f64,
    pub p: f64,
}

impl AprioriFit {
    /// `A h^{-p} log(1/S)`, the logarithm of the bound.
    pub fn log_bound(&self, h: f64, s: f64) -> f64 {
        self.a * h.powf(-self.p) * (1.0 / s).ln()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AprioriPoint {
    pub h: f64,
    pub lambda: Complex64,
    pub norm: Option<f64>,
    pub log_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AprioriReport {
    pub status: FitStatus,
    pub fit: Option<AprioriFit>,
    /// Least feasible `A` for every `p` on the grid.
    pub candidates: Vec<AprioriFit>,
    pub violations: Vec<AprioriPoint>,
    pub used: usize,
    pub excluded: usize,
}

/// Fits `‖R‖ ≤ exp(A h^{-p} log(1/S))` over every scanned point outside the
/// `S`-disks around the listed resonances: for each `p` the least feasible
/// `A >= 0`, then the smallest `p` whose `A` stays below the cap.
pub fn apriori_bound_check(data: &[AprioriInput<'_>], opts: &AprioriOptions) -> Result<AprioriReport> {
    if data.is_empty() {
        return Err(Error::Precondition("a priori check needs at least one scan".into()));
    }
    let mut points: Vec<(f64, f64, Complex64, Option<f64>)> = Vec::new();
    let mut excluded = 0usize;
    for d in data {
        if !(d.s > 0.0 && d.s < 1.0) {
            return Err(Error::Domain(format!("exclusion radius must lie in (0, 1), got {}", d.s)));
        }
        let listed: i64 = d.resonances.resonances.iter().map(|r| r.multiplicity as i64).sum::<i64>()
            + d.resonances.spurious.iter().map(|z| z.multiplicity as i64).sum::<i64>();
        if listed != d.resonances.total_winding {
            return Err(Error::Completeness { winding: d.resonances.total_winding, listed: listed as usize });
        }
        let centers: Vec<Complex64> = d
            .resonances
            .resonances
            .iter()
            .map(|r| r.lambda)
            .chain(d.resonances.spurious.iter().map(|z| z.lambda))
            .collect();
        for (&lambda, &norm) in d.scan.lambdas.iter().zip(&d.scan.norms) {
            if centers.iter().any(|c| (lambda - c).norm() < d.s) {
                excluded += 1;
                continue;
            }
            points.push((d.scan.h, d.s, lambda, norm));
        }
    }
    let log_norm = |n: Option<f64>| n.map(|v| v.ln()).unwrap_or(f64::INFINITY);
    let candidates: Vec<AprioriFit> = opts
        .p_grid
        .iter()
        .map(|&p| {
            let a = points
                .iter()
                .map(|&(h, s, _, n)| log_norm(n) / (h.powf(-p) * (1.0 / s).ln()))
                .fold(0.0, f64::max);
            AprioriFit { a, p }
        })
        .collect();
    let fit = match opts.fixed {
        Some((a, p)) => Some(AprioriFit { a, p }),
        None => candidates.iter().copied().find(|c| c.a.is_finite() && c.a <= opts.a_cap),
    };
    let Some(fit) = fit else {
        return Ok(AprioriReport {
            status: FitStatus::NoFit,
            fit: None,
            candidates,
            violations: Vec::new(),
            used: points.len(),
            excluded,
        });
    };
    let violations = points
        .iter()
        .filter_map(|&(h, s, lambda, norm)| {
            let log_bound = fit.log_bound(h, s);
            // rounding slack for the points that set A
            let slack = 1e-12 * log_bound.abs().max(1.0);
            (log_norm(norm) > log_bound + slack).then_some(AprioriPoint { h, lambda, norm, log_bound })
        })
        .collect();
    Ok(AprioriReport { status: FitStatus::Fit, fit: Some(fit), candidates, violations, used: points.len(), excluded })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaxPrincipleParams {
    pub a: f64,
    pub b: f64,
    pub w: f64,
    pub alpha: f64,
    pub s_minus: f64,
    pub s_plus: f64,
    pub m: f64,
}

impl MaxPrincipleParams {
    /// `[a-w, b+w] + i[-α S_-, S_+]`.
    pub fn outer(&self) -> Rect {
        Rect {
            re_min: self.a - self.w,
            re_max: self.b + self.w,
            im_min: -self.alpha * self.s_minus,
            im_max: self.s_plus,
        }
    }

    /// `[a, b] + i[-S_-, S_+]`.
    pub fn inner(&self) -> Rect {
        Rect { re_min: self.a, re_max: self.b, im_min: -self.s_minus, im_max: self.s_plus }
    }

    pub fn validate(&self) -> Result<()> {
        let p = self;
        if !(p.a < p.b) {
            return Err(Error::Hypothesis(format!("need a < b, got ({}, {})", p.a, p.b)));
        }
        if !(0.0 < p.s_plus && p.s_plus <= p.s_minus) {
            return Err(Error::Hypothesis(format!("need 0 < S+ <= S-, got ({}, {})", p.s_plus, p.s_minus)));
        }
        if !(p.alpha >= 1.0) {
            return Err(Error::Hypothesis(format!("need alpha >= 1, got {}", p.alpha)));
        }
        let need = p.s_minus * p.alpha * p.alpha.ln();
        if !(need <= p.w) {
            return Err(Error::Hypothesis(format!("need S- alpha log(alpha) = {need:.3e} <= w = {:.3e}", p.w)));
        }
        if !(p.m >= 1.0) {
            return Err(Error::Hypothesis(format!("need M >= 1, got {}", p.m)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaxPrincipleOptions {
    /// Samples on each rectangle perimeter.
    pub boundary_samples: usize,
    /// Interior grid size per direction on the inner rectangle.
    pub interior_samples: usize,
    /// Relative slack on the sampled hypotheses.
    pub hypothesis_rtol: f64,
}

impl Default for MaxPrincipleOptions {
    fn default() -> Self {
        Self { boundary_samples: 4096, interior_samples: 33, hypothesis_rtol: 1e-9 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaxPrincipleReport {
    pub holds: bool,
    pub witness: Option<Complex64>,
    pub inner_max: f64,
    /// `e³ M`.
    pub bound: f64,
    pub outer_max: f64,
    pub top_max: f64,
}

fn perimeter(rect: &Rect, n: usize) -> Vec<Complex64> {
    let corners = rect.corners();
    let per_edge = (n / 4).max(2);
    (0..4)
        .flat_map(|e| {
            let (p, q) = (corners[e], corners[(e + 1) % 4]);
            (0..per_edge).map(move |k| p + (q - p) * (k as f64 / per_edge as f64))
        })
        .collect()
}

fn sampled_max(f: &AnalyticHandle, points: &[Complex64]) -> Result<(f64, Complex64)> {
    let mut best = (f64::NEG_INFINITY, points[0]);
    for &z in points {
        let v = f.eval(z).norm();
        if !v.is_finite() {
            return Err(Error::NonFinite { at: z });
        }
        if v > best.0 {
            best = (v, z);
        }
    }
    Ok(best)
}

fn top_edge(p: &MaxPrincipleParams, n: usize) -> Vec<Complex64> {
    linspace(p.a - p.w, p.b + p.w, n).into_iter().map(|x| Complex64::new(x, p.s_plus)).collect()
}

/// Sampled `sup |F|` on the outer rectangle and on its top edge.
pub fn hypothesis_maxima(f: &AnalyticHandle, params: &MaxPrincipleParams, opts: &MaxPrincipleOptions) -> Result<(f64, f64)> {
    let outer = sampled_max(f, &perimeter(&params.outer(), opts.boundary_samples))?.0;
    let top = sampled_max(f, &top_edge(params, opts.boundary_samples))?.0;
    Ok((outer, top))
}

/// Samples `|F|` on `[a, b] + i[-S_-, S_+]` after confirming the hypotheses
/// `|F| <= e^α` on the outer rectangle and `|F| <= M` on its top edge.
pub fn max_principle_check(
    f: &AnalyticHandle,
    params: &MaxPrincipleParams,
    opts: &MaxPrincipleOptions,
) -> Result<MaxPrincipleReport> {
    params.validate()?;
    if !f.declared_analytic {
        return Err(Error::Hypothesis(format!("'{}' is not declared analytic", f.label)));
    }
    let (outer_max, top_max) = hypothesis_maxima(f, params, opts)?;
    let slack = 1.0 + opts.hypothesis_rtol;
    if outer_max > params.alpha.exp() * slack {
        return Err(Error::Hypothesis(format!(
            "sup |F| = {outer_max:.6e} on the outer rectangle exceeds e^alpha = {:.6e}",
            params.alpha.exp()
        )));
    }
    if top_max > params.m * slack {
        return Err(Error::Hypothesis(format!("sup |F| = {top_max:.6e} on the top edge exceeds M = {:.6e}", params.m)));
    }
    let inner = params.inner();
    let mut points = perimeter(&inner, opts.boundary_samples);
    let n = opts.interior_samples.max(2);
    for &y in &linspace(inner.im_min, inner.im_max, n) {
        for &x in &linspace(inner.re_min, inner.re_max, n) {
            points.push(Complex64::new(x, y));
        }
    }
    let (inner_max, at) = sampled_max(f, &points)?;
    let bound = 3f64.exp() * params.m;
    let holds = inner_max <= bound;
    Ok(MaxPrincipleReport { holds, witness: (!holds).then_some(at), inner_max, bound, outer_max, top_max })
}

/// Largest `c` such that `c F` meets both sampled hypotheses.
pub fn hypothesis_scale(f: &AnalyticHandle, params: &MaxPrincipleParams, opts: &MaxPrincipleOptions) -> Result<f64> {
    let (outer, top) = hypothesis_maxima(f, params, opts)?;
    if !(outer > 0.0) {
        return Err(Error::Domain(format!("'{}' vanishes on the outer rectangle", f.label)));
    }
    Ok((params.alpha.exp() / outer).min(if top > 0.0 { params.m / top } else { f64::INFINITY }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub lambda: f64,
    pub h: f64,
    pub accuracy: f64,
    /// `‖e^{-γφ} u‖ / ‖e^{γφ} (P - λ²) u‖`, a lower bound for the weighted norm at `λ`.
    pub required_norm: f64,
    /// `log` of the fitted bound at this `h`.
    pub log_fitted_bound: f64,
    pub contradiction: bool,
}

/// Compares the resolvent lower bound forced by a quasimode with the fitted
/// resonance-free bound.
pub fn resonance_free_bound_transfer(
    scan: &NormScan,
    fit: &AprioriFit,
    s: f64,
    quasimode: &Quasimode,
    weight: &WeightFunction,
) -> Result<TransferReport> {
    if (scan.h - quasimode.h).abs() > 1e-12 * scan.h {
        return Err(Error::Precondition(format!("scan h = {} differs from quasimode h = {}", scan.h, quasimode.h)));
    }
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::Domain(format!("exclusion radius must lie in (0, 1), got {s}")));
    }
    let w = simpson_weights(&quasimode.xs);
    let mut num = 0.0;
    let mut den = 0.0;
    for (k, wk) in w.iter().enumerate() {
        let d = weight.damping(scan.gamma, quasimode.xs[k]);
        num += wk * (d * quasimode.u[k]).powi(2);
        den += wk * (quasimode.residual[k] / d).powi(2);
    }
    let required_norm = (num / den).sqrt();
    let log_fitted_bound = fit.log_bound(scan.h, s);
    Ok(TransferReport {
        lambda: quasimode.lambda,
        h: quasimode.h,
        accuracy: quasimode.accuracy,
        required_norm,
        log_fitted_bound,
        contradiction: required_norm.ln() > log_fitted_bound,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoleLawReport {
    pub resonance: Complex64,
    pub ts: Vec<f64>,
    pub norms: Vec<f64>,
    /// `norm · |λ² - r²|` along the ray.
    pub products: Vec<f64>,
    /// `max / min` of the products.
    pub spread: f64,
    /// Largest `|ratio - 1|` of consecutive products.
    pub max_step_deviation: f64,
}

/// Weighted norms on the ray `λ = r + t e^{iπ/4}`.
#[allow(clippy::too_many_arguments)]
pub fn pole_law_ray(
    model: &PotentialModel,
    resonance: Complex64,
    h: f64,
    gamma: f64,
    weight: &WeightFunction,
    ts: &[f64],
    opts: &NormOptions,
) -> Result<PoleLawReport> {
    if ts.len() < 2 {
        return Err(Error::Domain("pole law needs at least two ray samples".into()));
    }
    let dir = Complex64::from_polar(1.0, std::f64::consts::FRAC_PI_4);
    let norms = ts
        .par_iter()
        .map(|&t| {
            weighted_resolvent_norm_auto(model, resonance + dir * t, h, gamma, weight, opts)
        })
        .collect::<Result<Vec<_>>>()?;
    let products: Vec<f64> = ts
        .iter()
        .zip(&norms)
        .map(|(&t, &n)| {
            let lambda = resonance + dir * t;
            n * (lambda * lambda - resonance * resonance).norm()
        })
        .collect();
    let max = products.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = products.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_step_deviation = products.windows(2).map(|w| (w[1] / w[0] - 1.0).abs()).fold(0.0, f64::max);
    Ok(PoleLawReport { resonance, ts: ts.to_vec(), norms, products, spread: max / min, max_step_deviation })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex_utils::{seeded_function_family, FunctionKind};
    use crate::continuation::{integrate_jost, regular_solution, wronskian_value};
    use crate::linalg::trapezoid_weights;
    use crate::model::{builtin_model, make_weight};
    use crate::resonance_search::{FoundZero, Resonance};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    const SW_ROOT: (f64, f64) = (3.2270135885, -1.2697160957);

    fn empty_scan(total: i64) -> ResonanceScan {
        ResonanceScan { rect: Rect::new(0.5, 2.0, -0.1, 1.0).unwrap(), total_winding: total, resonances: vec![], spurious: vec![] }
    }

    #[test]
    fn free_norm_at_i_lies_between_trial_and_distance_bounds() {
        let free = builtin_model("free", &[]).unwrap();
        let w = make_weight(6.0, 7.0).unwrap();
        let lambda = c(0.0, 1.0);
        let norm = weighted_resolvent_norm_auto(&free, lambda, 1.0, 1.0, &w, &NormOptions::default()).unwrap();
        assert!(norm <= 1.0, "{norm}");
        // <g, B g> with the exact Dirichlet kernel sinh(min) e^{-max} of (-d² + 1)^{-1}
        let xs = linspace(0.0, 6.0, 1201);
        let q = trapezoid_weights(&xs);
        let g: Vec<f64> = xs.iter().map(|x| (std::f64::consts::PI * x / 6.0).sin()).collect();
        let mut form = 0.0;
        let mut gg = 0.0;
        for i in 0..xs.len() {
            gg += q[i] * g[i] * g[i];
            for j in 0..xs.len() {
                let (lo, hi) = if xs[i] < xs[j] { (xs[i], xs[j]) } else { (xs[j], xs[i]) };
                form += q[i] * q[j] * g[i] * g[j] * lo.sinh() * (-hi).exp();
            }
        }
        let trial = form / gg;
        assert!(trial >= 0.5, "{trial}");
        assert!(norm >= trial * (1.0 - 1e-3), "{norm} vs {trial}");
    }

    #[test]
    fn spectrum_proxy_examples() {
        for (name, params) in [("free", vec![]), ("gauss_barrier", vec![2.0, 2.0, 0.5])] {
            let m = builtin_model(name, &params).unwrap();
            assert!(spectrum_proxy(&m, 0.1, 10.0).unwrap().eigenvalues.is_empty());
        }
        // bound state of the square well: k cot k = -kappa with k² = 10 - kappa²
        let g = |kappa: f64| {
            let k = (10.0 - kappa * kappa).sqrt();
            k * k.cos() + kappa * k.sin()
        };
        let (mut lo, mut hi) = (0.1, 3.0);
        assert!(g(lo).signum() != g(hi).signum());
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid).signum() == g(lo).signum() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let energy = -lo * lo;
        let sw = builtin_model("square_well", &[10.0, 1.0]).unwrap();
        let proxy = spectrum_proxy(&sw, 1.0, 20.0).unwrap();
        assert_eq!(proxy.eigenvalues.len(), 1, "{:?}", proxy.eigenvalues);
        assert!((proxy.eigenvalues[0] - energy).abs() < 1e-9 * energy.abs(), "{} vs {energy}", proxy.eigenvalues[0]);
        assert!((proxy.distance(c(1.0, 2.0)) - 2.0).abs() < 1e-15);
        assert!((proxy.distance(c(-1.0, 0.0)) - (energy + 1.0).abs().min(1.0)).abs() < 1e-9);
    }

    #[test]
    fn upper_half_plane_bound_holds() {
        let cases = [
            (builtin_model("free", &[]).unwrap(), 1.0, make_weight(3.0, 4.0).unwrap()),
            (builtin_model("square_well", &[10.0, 1.0]).unwrap(), 1.0, make_weight(1.0, 2.0).unwrap()),
            (builtin_model("gauss_barrier", &[2.0, 2.0, 0.5]).unwrap(), 0.1, make_weight(2.5, 3.5).unwrap()),
        ];
        for (model, h, w) in &cases {
            let proxy = spectrum_proxy(model, *h, 20.0).unwrap();
            for lambda in [c(0.3, 0.2), c(1.0, 0.05), c(1.5, 0.5), c(0.2, 1.0)] {
                let gamma = model.gamma;
                let norm = weighted_resolvent_norm_auto(model, lambda, *h, gamma, w, &NormOptions::default()).unwrap();
                let bound = proxy.self_adjoint_bound(lambda);
                assert!(norm <= 1.05 * bound, "{} at {lambda}: {norm} vs {bound}", model.label);
            }
        }
    }

    #[test]
    fn larger_gamma_never_increases_the_norm() {
        let sw = builtin_model("square_well", &[10.0, 1.0]).unwrap();
        let w = make_weight(1.0, 2.0).unwrap();
        let opts = NormOptions { rtol: 1e-13, ..Default::default() };
        for lambda in [c(2.0, -0.3), c(4.5, 0.1), c(6.0, -0.9)] {
            let xs = norm_grid(&sw, lambda, 1.0, 1.5, &w, &opts).unwrap();
            let mut prev = f64::INFINITY;
            for gamma in [1.5, 1.8, 2.2, 2.9] {
                let n = weighted_resolvent_norm(&sw, lambda, 1.0, gamma, &w, &xs, &opts).unwrap();
                assert!(n <= prev + 1e-10, "{lambda}, gamma {gamma}: {n} > {prev}");
                prev = n;
            }
        }
    }

    #[test]
    fn near_resonance_is_refused() {
        let sw = builtin_model("square_well", &[10.0, 1.0]).unwrap();
        let w = make_weight(1.0, 2.0).unwrap();
        let so = SolveOptions::default();
        let f = crate::continuation::wronskian_handle(&sw, 1.0, &so);
        let r = crate::resonance_search::refine_zero(&f, c(SW_ROOT.0, SW_ROOT.1), 1e-14).unwrap().zero;
        let err = weighted_resolvent_norm_auto(&sw, r, 1.0, 3.0, &w, &NormOptions::default()).unwrap_err();
        assert!(matches!(err, Error::NearResonance { .. }), "{err}");
    }

    #[test]
    fn pole_law_matches_the_residue() {
        let sw = builtin_model("square_well", &[10.0, 1.0]).unwrap();
        let w = make_weight(1.0, 2.0).unwrap();
        let r = c(SW_ROOT.0, SW_ROOT.1);
        let gamma = 3.0;
        let opts = NormOptions::default();
        let ts = [1e-4, 3e-4, 1e-3, 3e-3, 1e-2];
        let rep = pole_law_ray(&sw, r, 1.0, gamma, &w, &ts, &opts).unwrap();
        assert!(rep.spread < 2.0, "{:?}", rep.products);
        assert!(rep.max_step_deviation < 0.1, "{:?}", rep.products);
        // rank-one residue c f(x) f(y) / (h² W'(r)) with u0 = c f at the zero
        let so = SolveOptions::default();
        let xs = norm_grid(&sw, r, 1.0, gamma, &w, &opts).unwrap();
        let f = integrate_jost(&sw, r, 1.0, &xs, &so).unwrap();
        let u = regular_solution(&sw, r, 1.0, &xs, &so).unwrap();
        let k = (0..xs.len()).max_by(|&i, &j| f.f[i].norm().total_cmp(&f.f[j].norm())).unwrap();
        let ratio = u.u[k] / f.f[k];
        let d = 1e-5;
        let dw = (wronskian_value(&sw, r + d, 1.0, &so).unwrap() - wronskian_value(&sw, r - d, 1.0, &so).unwrap()) / (2.0 * d);
        let q = trapezoid_weights(&xs);
        let weighted: f64 = (0..xs.len()).map(|i| q[i] * (w.damping(gamma, xs[i]) * f.f[i].norm()).powi(2)).sum();
        let oracle = 2.0 * r.norm() * ratio.norm() * weighted / dw.norm();
        let rel = (rep.products[0] - oracle).abs() / oracle;
        assert!(rel < 1e-2, "{} vs {oracle}", rep.products[0]);
    }

    fn synthetic_scan(h: f64, lambdas: Vec<Complex64>, norms: Vec<Option<f64>>) -> NormScan {
        NormScan { lambdas, norms, h, gamma: 1.0, model_label: "synthetic".into(), exclusions: vec![] }
    }

    #[test]
    fn free_scans_fit_with_small_exponent() {
        let free = builtin_model("free", &[]).unwrap();
        let w = make_weight(0.0, 1.0).unwrap();
        let hs = [0.5, 0.25, 0.125];
        let res = empty_scan(0);
        let scans: Vec<NormScan> = hs
            .iter()
            .map(|&h| {
                let rect = Rect::new(0.6, 1.4, -0.5 * h, 0.5).unwrap();
                scan_norms(&free, &rect_grid(&rect, 4, 3), h, 1.0, &w, &[], &NormOptions::default()).unwrap()
            })
            .collect();
        // O(1/h) growth
        let worst: Vec<f64> = scans.iter().map(|s| s.norms.iter().map(|n| n.unwrap()).fold(0.0, f64::max)).collect();
        for (hh, n) in hs.iter().zip(&worst) {
            assert!(n * hh < 2.0, "h = {hh}: {n}");
        }
        let data: Vec<AprioriInput> = scans.iter().map(|s| AprioriInput { scan: s, resonances: &res, s: 0.05 }).collect();
        let rep = apriori_bound_check(&data, &AprioriOptions::default()).unwrap();
        assert_eq!(rep.status, FitStatus::Fit);
        assert!(rep.violations.is_empty());
        assert_eq!(rep.fit.unwrap().p, 0.0);
        assert_eq!(rep.used, 36);
    }

    #[test]
    fn fit_semantics() {
        let lambdas = vec![c(1.0, 0.1), c(1.2, 0.1), c(1.0, -0.01)];
        let scan = synthetic_scan(0.5, lambdas, vec![Some(10.0), Some(2.0), Some(1e12)]);
        let mut res = empty_scan(1);
        res.resonances.push(Resonance {
            lambda: c(1.0, -0.012),
            multiplicity: 1,
            h: 0.5,
            wronskian_derivative: c(1.0, 0.0),
            model_label: "synthetic".into(),
            source_window: None,
        });
        let input = [AprioriInput { scan: &scan, resonances: &res, s: 0.01 }];
        let rep = apriori_bound_check(&input, &AprioriOptions::default()).unwrap();
        assert_eq!(rep.excluded, 1);
        assert!(rep.violations.is_empty());
        let fit = rep.fit.unwrap();
        assert_eq!(fit.p, 0.0);
        assert!((fit.a - 10f64.ln() / 100f64.ln()).abs() < 1e-15);
        // fixed parameters expose the offending point
        let fixed = AprioriOptions { fixed: Some((0.2, 0.0)), ..Default::default() };
        let rep = apriori_bound_check(&input, &fixed).unwrap();
        assert_eq!(rep.violations.len(), 1);
        assert_eq!(rep.violations[0].lambda, c(1.0, 0.1));
        // exhausted p grid is not a violation
        let capped = AprioriOptions { a_cap: 1e-3, ..Default::default() };
        let rep = apriori_bound_check(&input, &capped).unwrap();
        assert_eq!(rep.status, FitStatus::NoFit);
        assert!(rep.violations.is_empty());
        // an unlisted zero inside the window
        let short = empty_scan(2);
        let err = apriori_bound_check(&[AprioriInput { scan: &scan, resonances: &short, s: 0.01 }], &AprioriOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Completeness { winding: 2, listed: 0 }));
        let mut spurious = empty_scan(1);
        spurious.spurious.push(FoundZero { lambda: c(1.0, 0.5), multiplicity: 1 });
        assert!(apriori_bound_check(&[AprioriInput { scan: &scan, resonances: &spurious, s: 0.01 }], &AprioriOptions::default()).is_ok());
        assert!(apriori_bound_check(&[AprioriInput { scan: &scan, resonances: &res, s: 1.0 }], &AprioriOptions::default()).is_err());
    }

    #[test]
    fn fit_picks_smallest_exponent_that_fits_under_the_cap() {
        // norms e^{h^{-2}} at h = 1, 1/2, 1/4
        let scans: Vec<NormScan> =
            [1.0f64, 0.5, 0.25].iter().map(|&h| synthetic_scan(h, vec![c(1.0, 0.0)], vec![Some(h.powi(-2).exp())])).collect();
        let res = empty_scan(0);
        let s = (-1.0f64).exp();
        let data: Vec<AprioriInput> = scans.iter().map(|sc| AprioriInput { scan: sc, resonances: &res, s }).collect();
        let opts = AprioriOptions { a_cap: 1.0 + 1e-12, ..Default::default() };
        let rep = apriori_bound_check(&data, &opts).unwrap();
        let fit = rep.fit.unwrap();
        assert_eq!(fit.p, 2.0);
        assert!((fit.a - 1.0).abs() < 1e-12);
        assert!(rep.candidates[0].a > 1.0);
    }

    fn params() -> MaxPrincipleParams {
        let (s_minus, alpha) = (0.05f64, 4.0f64);
        MaxPrincipleParams { a: 0.0, b: 1.0, w: s_minus * alpha * alpha.ln(), alpha, s_minus, s_plus: 0.03, m: 10.0 }
    }

    #[test]
    fn constant_function_holds() {
        let p = params();
        let f = AnalyticHandle::new("const", move |_| c(p.m, 0.0));
        let rep = max_principle_check(&f, &p, &MaxPrincipleOptions::default()).unwrap();
        assert!(rep.holds && rep.witness.is_none());
        assert!((rep.inner_max - p.m).abs() < 1e-12);
    }

    #[test]
    fn exponential_growth_toward_the_bottom_holds() {
        let p = params();
        let kappa = (p.alpha - p.m.ln()) / (p.w + p.alpha * p.s_minus);
        assert!(kappa <= p.alpha / (p.w + p.alpha * p.s_minus));
        let (m, sp) = (p.m, p.s_plus);
        let f = AnalyticHandle::new("exp", move |z| m * (Complex64::i() * kappa * (z - Complex64::i() * sp)).exp());
        let rep = max_principle_check(&f, &p, &MaxPrincipleOptions::default()).unwrap();
        assert!(rep.holds, "{rep:?}");
        let expected = m * (kappa * (p.s_minus + p.s_plus)).exp();
        assert!((rep.inner_max - expected).abs() < 1e-9 * expected);
    }

    #[test]
    fn hypothesis_failures_are_not_counterexamples() {
        let p = params();
        let f = AnalyticHandle::new("big", move |_| c(20.0, 0.0));
        assert!(matches!(max_principle_check(&f, &p, &MaxPrincipleOptions::default()), Err(Error::Hypothesis(_))));
        let g = AnalyticHandle::new("const", |_| c(1.0, 0.0));
        for bad in [
            MaxPrincipleParams { s_plus: 0.1, ..p },
            MaxPrincipleParams { alpha: 0.5, ..p },
            MaxPrincipleParams { w: 0.5 * p.w, ..p },
            MaxPrincipleParams { m: 0.5, ..p },
            MaxPrincipleParams { b: -1.0, ..p },
        ] {
            assert!(matches!(max_principle_check(&g, &bad, &MaxPrincipleOptions::default()), Err(Error::Hypothesis(_))));
        }
        let nonanalytic = AnalyticHandle::new("conj", |z: Complex64| z.conj()).non_analytic();
        assert!(matches!(max_principle_check(&nonanalytic, &p, &MaxPrincipleOptions::default()), Err(Error::Hypothesis(_))));
    }

    #[test]
    fn fault_injected_bump_is_reported_with_witness() {
        // non-holomorphic bump declared analytic: small on the boundary, large inside
        let p = MaxPrincipleParams { m: 1.0, ..params() };
        let center = c(0.5, -0.02);
        let height = p.alpha.exp();
        let f = AnalyticHandle::new("bump", move |z: Complex64| c(height * (-(z - center).norm_sqr() / 1e-5).exp(), 0.0));
        let rep = max_principle_check(&f, &p, &MaxPrincipleOptions { interior_samples: 101, ..Default::default() }).unwrap();
        assert!(!rep.holds);
        let at = rep.witness.unwrap();
        assert!((at - center).norm() < 0.02, "{at}");
    }

    #[test]
    fn fitted_bound_admits_the_points_that_set_it() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let res = empty_scan(0);
        for _ in 0..500 {
            let h = rng.gen_range(0.05..1.0);
            let s = rng.gen_range(0.01..0.5);
            let norm = rng.gen_range(1.0..1e6f64);
            let scan = NormScan {
                lambdas: vec![c(1.0, -0.1)],
                norms: vec![Some(norm)],
                h,
                gamma: 1.0,
                model_label: "single".into(),
                exclusions: vec![],
            };
            let rep = apriori_bound_check(&[AprioriInput { scan: &scan, resonances: &res, s }], &AprioriOptions::default()).unwrap();
            assert_eq!(rep.status, FitStatus::Fit);
            assert!(rep.violations.is_empty(), "h = {h}, S = {s}, norm = {norm}: {:?}", rep.violations);
        }
    }

    #[test]
    fn seeded_polynomials_never_exceed_the_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let family = seeded_function_family(11, FunctionKind::Polynomial, 200);
        let opts = MaxPrincipleOptions::default();
        for member in &family {
            let s_minus = rng.gen_range(0.01..0.2);
            let alpha = rng.gen_range(1.0..8.0f64);
            let p = MaxPrincipleParams {
                a: rng.gen_range(-1.0..0.5),
                b: rng.gen_range(0.6..1.5),
                w: s_minus * alpha * alpha.ln() * rng.gen_range(1.0..2.0),
                alpha,
                s_minus,
                s_plus: s_minus * rng.gen_range(0.1..1.0),
                m: rng.gen_range(1.0..10.0),
            };
            let scale = hypothesis_scale(&member.handle, &p, &opts).unwrap();
            let g = member.handle.clone();
            let f = AnalyticHandle::new("scaled", move |z| g.eval(z) * scale);
            let rep = max_principle_check(&f, &p, &opts).unwrap();
            assert!(rep.holds, "{}: {rep:?}", member.handle.label);
        }
    }

    #[test]
    fn quasimode_forces_a_large_norm() {
        let xs = linspace(0.0, 1.0, 201);
        let u: Vec<f64> = xs.iter().map(|x| 2f64.sqrt() * (std::f64::consts::PI * x).sin()).collect();
        let residual: Vec<f64> = u.iter().map(|v| 1e-9 * v).collect();
        let qm = Quasimode {
            xs,
            u,
            residual,
            lambda: std::f64::consts::PI * 0.1,
            h: 0.1,
            accuracy: 1e-9,
            support_radius: 1.0,
            cutoff: crate::quasimodes::Cutoff::new(0.8, 0.2).unwrap(),
            cutoff_amplitude: 0.0,
            interval: 1.0,
        };
        let scan = synthetic_scan(0.1, vec![], vec![]);
        let w = make_weight(2.0, 3.0).unwrap();
        let fit = AprioriFit { a: 0.1, p: 1.0 };
        let rep = resonance_free_bound_transfer(&scan, &fit, 0.01, &qm, &w).unwrap();
        assert!((rep.required_norm - 1e9).abs() < 1e-3, "{}", rep.required_norm);
        assert!(rep.contradiction);
        let loose = AprioriFit { a: 1.0, p: 1.0 };
        assert!(!resonance_free_bound_transfer(&scan, &loose, 0.01, &qm, &w).unwrap().contradiction);
        let other = synthetic_scan(0.2, vec![], vec![]);
        assert!(matches!(resonance_free_bound_transfer(&other, &fit, 0.01, &qm, &w), Err(Error::Precondition(_))));
    }
}
