//! Zero counting and location for analytic functions: argument-principle
//! winding numbers, Newton refinement with multiplicity, recursive rectangle
//! scans, and the Jensen and Blaschke estimates used for lower bounds.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::complex_utils::{AnalyticHandle, Circle, ContourSamples, ContourShape, Rect};
use crate::continuation::{wronskian_handle, SolveOptions};
use crate::error::{Error, Result};
use crate::model::{FrequencyWindow, PotentialModel};

/// Sampling limits for winding counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindingOptions {
    pub initial_samples: usize,
    pub max_samples: usize,
}

impl Default for WindingOptions {
    fn default() -> Self {
        Self { initial_samples: 128, max_samples: 1 << 16 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindingReport {
    pub count: i64,
    /// Unrounded `(1/2πi) ∮ f'/f`.
    pub raw: f64,
    pub samples: usize,
    pub min_abs: f64,
    pub max_phase_step: f64,
}

/// Winding number of `f` around `shape` with full diagnostics.
///
/// Sampling doubles until the raw value is within 0.25 of an integer, the
/// accumulated phase agrees with it, no phase increment exceeds π/2, and one
/// further doubling leaves the integer unchanged.
pub fn winding_report(f: &AnalyticHandle, shape: ContourShape, boundary_tol: f64, opts: &WindingOptions) -> Result<WindingReport> {
    let mut samples = ContourSamples::new(f, shape, opts.initial_samples)?;
    let mut previous: Option<i64> = None;
    loop {
        if let Some(k) = samples.values().iter().position(|v| v.norm() == 0.0) {
            return Err(Error::BoundaryZero { at: samples.nodes()[k] });
        }
        let raw = samples.log_derivative_winding();
        let (phase, max_step) = samples.phase_winding();
        let resolved = max_step < 0.5 * PI;
        let (dist, at) = samples.predicted_zero_distance();
        if dist < boundary_tol {
            return Err(Error::BoundaryZero { at });
        }
        let rounded = raw.round();
        let integral = resolved && (raw - rounded).abs() < 0.25 && rounded as i64 == phase;
        if integral && previous == Some(phase) {
            return Ok(WindingReport {
                count: phase,
                raw,
                samples: samples.len(),
                min_abs: samples.min_abs(),
                max_phase_step: max_step,
            });
        }
        previous = if integral { Some(phase) } else { None };
        if samples.len() >= opts.max_samples {
            return Err(Error::NonInteger { raw, samples: samples.len() });
        }
        samples.refine(f)?;
    }
}

pub fn winding_count_shape(f: &AnalyticHandle, shape: ContourShape, boundary_tol: f64) -> Result<i64> {
    winding_report(f, shape, boundary_tol, &WindingOptions::default()).map(|r| r.count)
}

/// Number of zeros of `f` inside `rect`, counted with multiplicity.
pub fn winding_count(f: &AnalyticHandle, rect: Rect, boundary_tol: f64) -> Result<i64> {
    winding_count_shape(f, ContourShape::Rect(rect), boundary_tol)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefinedZero {
    pub zero: Complex64,
    pub multiplicity: usize,
    pub residual: f64,
    pub iterations: usize,
    /// Radius of the circle that certified the multiplicity.
    pub certificate_radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefineOptions {
    pub max_iter: usize,
    /// Relative step of the central-difference derivative.
    pub diff_step: f64,
}

impl Default for RefineOptions {
    fn default() -> Self {
        Self { max_iter: 100, diff_step: 1e-6 }
    }
}

/// Newton iteration from `seed` until the step falls below `tol·max(1,|z|)`.
///
/// Linear convergence with a stable step ratio `q` switches to the modified
/// iteration with multiplicity `1/(1-q)`. The multiplicity reported is the
/// winding number on a circle of radius `max(10|step|, 1e-6·scale)`.
pub fn refine_zero(f: &AnalyticHandle, seed: Complex64, tol: f64) -> Result<RefinedZero> {
    refine_zero_with(f, seed, tol, &RefineOptions::default())
}

pub fn refine_zero_with(f: &AnalyticHandle, seed: Complex64, tol: f64, opts: &RefineOptions) -> Result<RefinedZero> {
    let finite = |v: Complex64| v.re.is_finite() && v.im.is_finite();
    let mut z = seed;
    let mut fz = f.eval(z);
    if !finite(fz) {
        return Err(Error::NonFinite { at: z });
    }
    let mut best = (fz.norm(), z);
    let mut m = 1.0;
    let mut steps: Vec<f64> = Vec::new();
    let mut last_step = 0.0;
    let mut converged = fz.norm() == 0.0;
    let mut iterations = 0;
    while !converged && iterations < opts.max_iter {
        iterations += 1;
        let scale = z.norm().max(1.0);
        let d = f.derivative(z, opts.diff_step * scale);
        if !finite(d) || d.norm() == 0.0 {
            break;
        }
        let step = m * fz / d;
        steps.push(step.norm());
        if m == 1.0 && steps.len() >= 3 {
            let k = steps.len();
            let (q1, q2) = (steps[k - 2] / steps[k - 3], steps[k - 1] / steps[k - 2]);
            if q1 > 0.3 && q2 > 0.3 && q2 < 0.95 && (q1 - q2).abs() < 0.1 {
                m = (1.0 / (1.0 - q2)).round().max(1.0);
            }
        }
        let next = z - step;
        let fnext = f.eval(next);
        if !finite(fnext) {
            break;
        }
        z = next;
        fz = fnext;
        last_step = step.norm();
        if fz.norm() < best.0 {
            best = (fz.norm(), z);
        }
        converged = last_step <= tol * scale || fz.norm() == 0.0;
    }
    if !converged {
        return Err(Error::Divergence { best: best.1, residual: best.0 });
    }
    let scale = z.norm().max(1.0);
    let radius = (10.0 * last_step).max(1e-6 * scale);
    let circle = ContourShape::Circle(Circle::new(z, radius)?);
    let winding = winding_count_shape(f, circle, 1e-3 * radius)?;
    if winding < 1 {
        return Err(Error::Divergence { best: z, residual: fz.norm() });
    }
    Ok(RefinedZero { zero: z, multiplicity: winding as usize, residual: fz.norm(), iterations, certificate_radius: radius })
}

/// `f^{(m)}(z)` by the Cauchy integral on a small circle.
pub fn nth_derivative(f: &AnalyticHandle, z: Complex64, m: usize, radius: f64) -> Result<Complex64> {
    let samples = ContourSamples::new(f, ContourShape::Circle(Circle::new(z, radius)?), 64)?;
    let factorial: f64 = (1..=m).map(|k| k as f64).product();
    let integral = samples.integrate(|w, v| v / (w - z).powu(m as u32 + 1));
    Ok(integral * factorial / (2.0 * PI * Complex64::i()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoundZero {
    pub lambda: Complex64,
    pub multiplicity: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanOptions {
    /// Boundary-zero tolerance as a fraction of each rectangle's diameter.
    pub boundary_tol_rel: f64,
    pub newton_tol: f64,
    pub dedup_tol: f64,
    /// Below this diameter (relative to the root rectangle) a cluster is
    /// treated as one multiple zero.
    pub cluster_rel: f64,
    pub max_depth: usize,
    pub winding: WindingOptions,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self {
            boundary_tol_rel: 1e-4,
            newton_tol: 1e-13,
            dedup_tol: 1e-10,
            cluster_rel: 1e-3,
            max_depth: 60,
            winding: WindingOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    /// Rectangle actually scanned, after any jitter of the requested one.
    pub rect: Rect,
    pub total_winding: i64,
    pub zeros: Vec<FoundZero>,
    /// Rectangles whose count was obtained without further subdivision.
    pub leaves: usize,
}

/// Split fractions tried in order when a split line meets a zero.
const SPLIT_SCHEDULE: [f64; 5] = [0.5, 0.5 + 1.0 / 14.0, 0.5 - 1.0 / 14.0, 0.5 + 1.0 / 6.0, 0.5 - 1.0 / 6.0];

/// Outward edge shifts, in units of `1e-2·min(width, height)`, tried for the
/// root rectangle.
const EDGE_JITTER: [f64; 5] = [0.0, 1.0 / 7.0, 1.0 / 3.0, 2.0 / 7.0, 2.0 / 3.0];

struct Scanner<'a> {
    f: &'a AnalyticHandle,
    opts: ScanOptions,
    cluster_size: f64,
}

impl Scanner<'_> {
    fn count(&self, rect: Rect) -> Result<i64> {
        winding_report(self.f, ContourShape::Rect(rect), self.opts.boundary_tol_rel * rect.diameter(), &self.opts.winding)
            .map(|r| r.count)
    }

    fn try_newton(&self, rect: Rect, n: i64) -> Option<FoundZero> {
        let z = refine_zero(self.f, rect.center(), self.opts.newton_tol).ok()?;
        (rect.contains(z.zero) && z.multiplicity as i64 == n).then_some(FoundZero { lambda: z.zero, multiplicity: z.multiplicity })
    }

    fn split_counted(&self, rect: Rect, n: i64) -> Result<((Rect, i64), (Rect, i64))> {
        let mut last_err = None;
        for fraction in SPLIT_SCHEDULE {
            let (a, b) = rect.split(fraction);
            let (na, nb) = rayon::join(|| self.count(a), || self.count(b));
            match (na, nb) {
                (Ok(na), Ok(nb)) => {
                    if na + nb != n {
                        return Err(Error::Completeness { winding: n, listed: (na + nb).max(0) as usize });
                    }
                    return Ok(((a, na), (b, nb)));
                }
                (Err(e @ Error::BoundaryZero { .. }), _) | (_, Err(e @ Error::BoundaryZero { .. })) => last_err = Some(e),
                (Err(e), _) | (_, Err(e)) => return Err(e),
            }
        }
        Err(last_err.expect("schedule is nonempty"))
    }

    fn locate(&self, rect: Rect, n: i64, depth: usize) -> Result<(Vec<FoundZero>, usize)> {
        if n == 0 {
            return Ok((Vec::new(), 1));
        }
        let small = rect.diameter() < self.cluster_size;
        if n == 1 || small {
            if let Some(z) = self.try_newton(rect, n) {
                return Ok((vec![z], 1));
            }
        }
        if small || depth >= self.opts.max_depth {
            let z = refine_zero(self.f, rect.center(), self.opts.newton_tol)?;
            return Err(Error::Divergence { best: z.zero, residual: z.residual });
        }
        let ((a, na), (b, nb)) = self.split_counted(rect, n)?;
        let (ra, rb) = rayon::join(|| self.locate(a, na, depth + 1), || self.locate(b, nb, depth + 1));
        let (mut za, la) = ra?;
        let (zb, lb) = rb?;
        za.extend(zb);
        Ok((za, la + lb))
    }
}

/// Merges zeros closer than `tol`, summing multiplicities, in a fixed order.
pub fn dedup_zeros(mut zeros: Vec<FoundZero>, tol: f64) -> Vec<FoundZero> {
    zeros.sort_by(|a, b| {
        a.lambda.re.partial_cmp(&b.lambda.re).unwrap().then(a.lambda.im.partial_cmp(&b.lambda.im).unwrap())
    });
    let mut out: Vec<FoundZero> = Vec::with_capacity(zeros.len());
    for z in zeros {
        match out.iter_mut().find(|o| (o.lambda - z.lambda).norm() <= tol) {
            Some(o) => o.multiplicity += z.multiplicity,
            None => out.push(z),
        }
    }
    out
}

/// All zeros of `f` in `rect` by recursive subdivision.
///
/// Every split is checked for conservation of the winding count and the
/// merged multiplicities must reproduce the count of the root rectangle.
pub fn scan_rect(f: &AnalyticHandle, rect: Rect, opts: &ScanOptions) -> Result<ScanReport> {
    let scanner = Scanner { f, opts: *opts, cluster_size: opts.cluster_rel * rect.diameter() };
    let pad = 1e-2 * rect.width().min(rect.height());
    let mut last_err = None;
    for shift in EDGE_JITTER {
        let r = rect.expanded(shift * pad);
        let total = match scanner.count(r) {
            Ok(n) => n,
            Err(e @ Error::BoundaryZero { .. }) => {
                last_err = Some(e);
                continue;
            }
            Err(e) => return Err(e),
        };
        let (zeros, leaves) = scanner.locate(r, total, 0)?;
        let zeros = dedup_zeros(zeros, opts.dedup_tol);
        let listed: usize = zeros.iter().map(|z| z.multiplicity).sum();
        if listed as i64 != total {
            return Err(Error::Completeness { winding: total, listed });
        }
        return Ok(ScanReport { rect: r, total_winding: total, zeros, leaves });
    }
    Err(last_err.expect("jitter schedule is nonempty"))
}

/// A zero of the matching determinant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resonance {
    pub lambda: Complex64,
    pub multiplicity: usize,
    pub h: f64,
    /// First nonvanishing derivative `W^{(m)}(λ)`, `m` the multiplicity.
    pub wronskian_derivative: Complex64,
    pub model_label: String,
    pub source_window: Option<FrequencyWindow>,
}

/// Flat serialized form of a resonance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonanceRecord {
    pub re: f64,
    pub im: f64,
    pub multiplicity: usize,
    pub h: f64,
    pub model_label: String,
    pub window: Option<[f64; 4]>,
}

impl Resonance {
    pub fn to_record(&self) -> ResonanceRecord {
        ResonanceRecord {
            re: self.lambda.re,
            im: self.lambda.im,
            multiplicity: self.multiplicity,
            h: self.h,
            model_label: self.model_label.clone(),
            window: self.source_window.as_ref().map(|w| {
                let r = w.rect();
                [r.re_min, r.re_max, r.im_min, r.im_max]
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonanceScan {
    pub rect: Rect,
    pub total_winding: i64,
    pub resonances: Vec<Resonance>,
    /// Zeros above the real axis, impossible for a self-adjoint operator.
    pub spurious: Vec<FoundZero>,
}

/// Imaginary part above which a zero is treated as a numerical artifact.
pub const SPURIOUS_IM: f64 = 1e-8;

/// Resonances of `model` at `h` in an explicit rectangle of the λ-plane.
pub fn scan_resonances_in(
    model: &PotentialModel,
    rect: Rect,
    h: f64,
    solve: &SolveOptions,
    opts: &ScanOptions,
    window: Option<&FrequencyWindow>,
) -> Result<ResonanceScan> {
    let handle = wronskian_handle(model, h, solve);
    let report = scan_rect(&handle, rect, opts)?;
    let mut resonances = Vec::new();
    let mut spurious = Vec::new();
    for z in report.zeros {
        if z.lambda.im > SPURIOUS_IM {
            log::warn!("discarding zero {} above the real axis for {} at h = {h}", z.lambda, model.label);
            spurious.push(z);
            continue;
        }
        let radius = 1e-4 * z.lambda.norm().max(1.0) * h.min(1.0);
        let derivative = nth_derivative(&handle, z.lambda, z.multiplicity, radius)?;
        resonances.push(Resonance {
            lambda: z.lambda,
            multiplicity: z.multiplicity,
            h,
            wronskian_derivative: derivative,
            model_label: model.label.clone(),
            source_window: window.cloned(),
        });
    }
    Ok(ResonanceScan { rect: report.rect, total_winding: report.total_winding, resonances, spurious })
}

/// Resonances of `model` in the window rectangle at `h`.
pub fn scan_resonances(model: &PotentialModel, window: &FrequencyWindow, h: f64) -> Result<ResonanceScan> {
    let rect = window.rect();
    if !(rect.im_min > -(model.gamma) * h) {
        return Err(Error::Precondition(format!(
            "window lower edge {} must lie above -gamma h = {}",
            rect.im_min,
            -model.gamma * h
        )));
    }
    scan_resonances_in(model, rect, h, &SolveOptions::default(), &ScanOptions::default(), Some(window))
}

/// Samples of `|f|` on a circle, doubled until the maximum settles.
fn circle_sup(f: &AnalyticHandle, center: Complex64, radius: f64) -> Result<f64> {
    let mut samples = ContourSamples::new(f, ContourShape::Circle(Circle::new(center, radius)?), 256)?;
    let mut prev = f64::NAN;
    loop {
        let n = samples.len();
        let v = samples.values();
        // allowance for the unsampled arcs
        let sup = (0..n).map(|k| v[k].norm().max(v[(k + 1) % n].norm()) + 0.5 * (v[(k + 1) % n] - v[k]).norm()).fold(0.0, f64::max);
        if (sup - prev).abs() <= 1e-6 * sup || n >= 1 << 14 {
            return Ok(sup);
        }
        prev = sup;
        samples.refine(f)?;
    }
}

/// Jensen upper bound on the number of zeros of `f` in `|λ - c| < ρ₂`:
/// `(ln sup_{|λ-c|=ρ₁} |f| - ln |f(c)|) / ln(ρ₁/ρ₂)`.
pub fn jensen_zero_bound(f: &AnalyticHandle, center: Complex64, rho1: f64, rho2: f64) -> Result<f64> {
    if !(rho2 > 0.0 && rho2 < rho1) {
        return Err(Error::Domain(format!("need 0 < rho2 < rho1, got ({rho1}, {rho2})")));
    }
    let fc = f.eval(center).norm();
    if fc == 0.0 {
        return Err(Error::ZeroAtCenter { center });
    }
    let sup = circle_sup(f, center, rho1)?;
    Ok(((sup.ln() - fc.ln()) / (rho1 / rho2).ln()).max(0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlaschkeCertificate {
    /// Certified lower bound for `ln|f|` on the ρ₃-disk minus the excluded disks.
    pub min_log_modulus: f64,
    pub excluded_disks: Vec<(Complex64, f64)>,
    /// Smallest `|φ|` sampled on the ρ₂ circle (one up to rounding).
    pub boundary_min_phi: f64,
    pub sampled_min_log_modulus: f64,
    pub samples_checked: usize,
    pub sound: bool,
}

/// Deterministic, evenly spread points in a disk (Fibonacci lattice).
pub fn disk_lattice(center: Complex64, radius: f64, n: usize) -> Vec<Complex64> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|k| {
            let r = radius * ((k as f64 + 0.5) / n as f64).sqrt();
            center + Complex64::from_polar(r, golden * k as f64)
        })
        .collect()
}

/// Lower bound for `ln|f|` on `|λ-c| ≤ ρ₃` away from the zeros.
///
/// With `φ(λ) = Π ρ₂(λ-z_j)/(ρ₂² - conj(z_j-c)(λ-c))` (so `|φ| = 1` on the ρ₂
/// circle), `ψ = f/φ` has no zeros and Harnack's inequality for
/// `ln sup|f| - ln|ψ|` gives, with `ε = ρ₂ - ρ₃` and `N` zeros,
/// `ln|f| ≥ -(2ρ₃/ε) ln sup|f| + ((ρ₂+ρ₃)/ε) ln|ψ(c)| + N ln(S/(ρ₂+ρ₃))`
/// outside the disks `D(z_j, S)`. The bound is then checked at
/// `check_points` lattice points.
pub fn blaschke_lower_bound(
    f: &AnalyticHandle,
    center: Complex64,
    radii: (f64, f64, f64),
    zeros: &[Complex64],
    s: f64,
    check_points: usize,
) -> Result<BlaschkeCertificate> {
    let (rho1, rho2, rho3) = radii;
    if !(rho1 > rho2 && rho2 > rho3 && rho3 > 0.0 && s > 0.0) {
        return Err(Error::Domain(format!("need rho1 > rho2 > rho3 > 0 and S > 0, got {radii:?}, {s}")));
    }
    if let Some(z) = zeros.iter().find(|z| (*z - center).norm() >= rho2) {
        return Err(Error::Domain(format!("listed zero {z} lies outside the rho2 disk")));
    }
    let fc = f.eval(center);
    if fc.norm() == 0.0 {
        return Err(Error::ZeroAtCenter { center });
    }
    let winding = winding_count_shape(f, ContourShape::Circle(Circle::new(center, rho2)?), 1e-6 * rho2)?;
    if winding != zeros.len() as i64 {
        return Err(Error::Completeness { winding, listed: zeros.len() });
    }
    let phi = |l: Complex64| -> Complex64 {
        zeros.iter().map(|z| rho2 * (l - z) / (rho2 * rho2 - (z - center).conj() * (l - center))).product()
    };
    let boundary_min_phi = (0..512)
        .map(|k| phi(center + Complex64::from_polar(rho2, 2.0 * PI * k as f64 / 512.0)).norm())
        .fold(f64::INFINITY, f64::min);
    let sup = circle_sup(f, center, rho1)?;
    let eps = rho2 - rho3;
    let ln_psi_c = fc.norm().ln() - phi(center).norm().ln();
    let n = zeros.len() as f64;
    let bound = -(2.0 * rho3 / eps) * sup.ln() + ((rho2 + rho3) / eps) * ln_psi_c + n * (s / (rho2 + rho3)).ln();

    let excluded = |l: Complex64| zeros.iter().any(|z| (l - z).norm() < s);
    let mut points = Vec::with_capacity(check_points);
    let mut pool = check_points.max(1);
    while points.len() < check_points {
        points = disk_lattice(center, rho3, pool).into_iter().filter(|l| !excluded(*l)).take(check_points).collect();
        pool *= 2;
        if pool > 1 << 24 {
            return Err(Error::Domain("excluded disks cover the rho3 disk".into()));
        }
    }
    let sampled = points.iter().map(|&l| f.eval(l).norm().ln()).fold(f64::INFINITY, f64::min);
    Ok(BlaschkeCertificate {
        min_log_modulus: bound,
        excluded_disks: zeros.iter().map(|&z| (z, s)).collect(),
        boundary_min_phi,
        sampled_min_log_modulus: sampled,
        samples_checked: points.len(),
        sound: sampled >= bound,
    })
}
