//! Shared numerical complex analysis: contours, boundary sampling, analyticity
//! diagnostics and seeded function families for the property suites.
//!
//! All contour quadratures in the crate go through [`ContourSamples`], so the
//! argument principle, residue moments and Jensen means share one error model.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned rectangle in the complex plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
}

impl Rect {
    pub fn new(re_min: f64, re_max: f64, im_min: f64, im_max: f64) -> Result<Self> {
        if !(re_min < re_max && im_min < im_max) || ![re_min, re_max, im_min, im_max].iter().all(|v| v.is_finite()) {
            return Err(Error::Domain(format!(
                "degenerate rectangle [{re_min}, {re_max}] x [{im_min}, {im_max}]"
            )));
        }
        Ok(Self { re_min, re_max, im_min, im_max })
    }

    pub fn width(&self) -> f64 {
        self.re_max - self.re_min
    }

    pub fn height(&self) -> f64 {
        self.im_max - self.im_min
    }

    pub fn center(&self) -> Complex64 {
        Complex64::new(0.5 * (self.re_min + self.re_max), 0.5 * (self.im_min + self.im_max))
    }

    pub fn diameter(&self) -> f64 {
        self.width().hypot(self.height())
    }

    pub fn contains(&self, z: Complex64) -> bool {
        z.re >= self.re_min && z.re <= self.re_max && z.im >= self.im_min && z.im <= self.im_max
    }

    /// Counter-clockwise corners starting at the lower-left one.
    pub fn corners(&self) -> [Complex64; 4] {
        [
            Complex64::new(self.re_min, self.im_min),
            Complex64::new(self.re_max, self.im_min),
            Complex64::new(self.re_max, self.im_max),
            Complex64::new(self.re_min, self.im_max),
        ]
    }

    /// Splits across the longer side at `fraction` of its length.
    pub fn split(&self, fraction: f64) -> (Rect, Rect) {
        if self.width() >= self.height() {
            let cut = self.re_min + fraction * self.width();
            (
                Rect { re_max: cut, ..*self },
                Rect { re_min: cut, ..*self },
            )
        } else {
            let cut = self.im_min + fraction * self.height();
            (
                Rect { im_max: cut, ..*self },
                Rect { im_min: cut, ..*self },
            )
        }
    }

    pub fn expanded(&self, pad: f64) -> Rect {
        Rect {
            re_min: self.re_min - pad,
            re_max: self.re_max + pad,
            im_min: self.im_min - pad,
            im_max: self.im_max + pad,
        }
    }

    /// Distance from `z` to the boundary (negative outside).
    pub fn boundary_distance(&self, z: Complex64) -> f64 {
        (z.re - self.re_min).min(self.re_max - z.re).min(z.im - self.im_min).min(self.im_max - z.im)
    }
}

impl fmt::Display for Rect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{:.6}, {:.6}] + i[{:.6}, {:.6}]",
            self.re_min, self.re_max, self.im_min, self.im_max
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Circle {
    pub center: Complex64,
    pub radius: f64,
}

impl Circle {
    pub fn new(center: Complex64, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::Domain(format!("circle radius must be positive, got {radius}")));
        }
        Ok(Self { center, radius })
    }

    pub fn point(&self, theta: f64) -> Complex64 {
        self.center + Complex64::from_polar(self.radius, theta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ContourShape {
    Rect(Rect),
    Circle(Circle),
}

/// Quadrature contour with its initial sample count and doubling cap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContourSpec {
    pub shape: ContourShape,
    pub samples: usize,
    pub refinement_cap: usize,
}

impl ContourSpec {
    pub fn new(shape: ContourShape, samples: usize, refinement_cap: usize) -> Result<Self> {
        if samples < 64 || !samples.is_power_of_two() {
            return Err(Error::Domain(format!(
                "contour samples must be a power of two >= 64, got {samples}"
            )));
        }
        if refinement_cap < samples {
            return Err(Error::Domain(format!(
                "refinement cap {refinement_cap} below initial sample count {samples}"
            )));
        }
        Ok(Self { shape, samples, refinement_cap })
    }

    pub fn rect(rect: Rect) -> Self {
        Self { shape: ContourShape::Rect(rect), samples: 128, refinement_cap: 1 << 16 }
    }

    pub fn circle(center: Complex64, radius: f64) -> Self {
        Self {
            shape: ContourShape::Circle(Circle { center, radius }),
            samples: 128,
            refinement_cap: 1 << 16,
        }
    }
}

type Evaluator = dyn Fn(Complex64) -> Complex64 + Send + Sync;

/// A complex function of one complex variable with its declared domain.
///
/// Evaluators must be deterministic and safe to call from several threads;
/// failures are signalled by non-finite return values.
#[derive(Clone)]
pub struct AnalyticHandle {
    eval: Arc<Evaluator>,
    pub domain: Option<Rect>,
    pub declared_analytic: bool,
    pub label: String,
}

impl AnalyticHandle {
    pub fn new<F>(label: impl Into<String>, f: F) -> Self
    where
        F: Fn(Complex64) -> Complex64 + Send + Sync + 'static,
    {
        Self { eval: Arc::new(f), domain: None, declared_analytic: true, label: label.into() }
    }

    pub fn with_domain(mut self, domain: Rect) -> Self {
        self.domain = Some(domain);
        self
    }

    pub fn non_analytic(mut self) -> Self {
        self.declared_analytic = false;
        self
    }

    #[inline]
    pub fn eval(&self, z: Complex64) -> Complex64 {
        (self.eval)(z)
    }

    /// Central-difference derivative along the real direction.
    pub fn derivative(&self, z: Complex64, step: f64) -> Complex64 {
        let d = Complex64::new(step, 0.0);
        (self.eval(z + d) - self.eval(z - d)) / (2.0 * step)
    }
}

impl fmt::Debug for AnalyticHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AnalyticHandle")
            .field("label", &self.label)
            .field("domain", &self.domain)
            .field("declared_analytic", &self.declared_analytic)
            .finish()
    }
}

/// Nested samples of a function on a closed contour.
///
/// Rectangles keep their corners as nodes and every polygon segment lies on
/// one edge, so doubling inserts segment midpoints. Circles use equispaced
/// angles.
#[derive(Debug, Clone)]
pub struct ContourSamples {
    shape: ContourShape,
    nodes: Vec<Complex64>,
    values: Vec<Complex64>,
}

impl ContourSamples {
    pub fn new(f: &AnalyticHandle, shape: ContourShape, samples: usize) -> Result<Self> {
        let nodes = match shape {
            ContourShape::Rect(r) => rect_nodes(&r, samples),
            ContourShape::Circle(c) => {
                let n = samples.max(8);
                (0..n).map(|k| c.point(2.0 * PI * k as f64 / n as f64)).collect()
            }
        };
        let values = eval_all(f, &nodes)?;
        Ok(Self { shape, nodes, values })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Complex64] {
        &self.nodes
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    /// Doubles the sampling, reusing every existing value.
    pub fn refine(&mut self, f: &AnalyticHandle) -> Result<()> {
        let n = self.nodes.len();
        let mids: Vec<Complex64> = match self.shape {
            ContourShape::Rect(_) => (0..n).map(|k| 0.5 * (self.nodes[k] + self.nodes[(k + 1) % n])).collect(),
            ContourShape::Circle(c) => {
                let dt = 2.0 * PI / n as f64;
                (0..n).map(|k| c.point((k as f64 + 0.5) * dt)).collect()
            }
        };
        let mid_vals = eval_all(f, &mids)?;
        let mut nodes = Vec::with_capacity(2 * n);
        let mut values = Vec::with_capacity(2 * n);
        for k in 0..n {
            nodes.push(self.nodes[k]);
            values.push(self.values[k]);
            nodes.push(mids[k]);
            values.push(mid_vals[k]);
        }
        self.nodes = nodes;
        self.values = values;
        Ok(())
    }

    /// Quadrature of `g(z, f(z)) dz` around the contour.
    ///
    /// Circles use the periodic trapezoid rule with exact `dz`; rectangles the
    /// segment trapezoid rule.
    pub fn integrate<G>(&self, g: G) -> Complex64
    where
        G: Fn(Complex64, Complex64) -> Complex64,
    {
        let n = self.nodes.len();
        match self.shape {
            ContourShape::Circle(c) => {
                let dt = 2.0 * PI / n as f64;
                self.nodes
                    .iter()
                    .zip(&self.values)
                    .map(|(&z, &v)| g(z, v) * Complex64::i() * (z - c.center) * dt)
                    .sum()
            }
            ContourShape::Rect(_) => {
                let gv: Vec<Complex64> = self.nodes.iter().zip(&self.values).map(|(&z, &v)| g(z, v)).collect();
                (0..n)
                    .map(|k| {
                        let k1 = (k + 1) % n;
                        0.5 * (gv[k] + gv[k1]) * (self.nodes[k1] - self.nodes[k])
                    })
                    .sum()
            }
        }
    }

    /// Trapezoid value of `(1/2πi) ∮ f'/f dz` with `f'` from neighbouring samples.
    pub fn log_derivative_winding(&self) -> f64 {
        let n = self.values.len();
        let s: Complex64 = (0..n)
            .map(|k| {
                let next = self.values[(k + 1) % n];
                let prev = self.values[(k + n - 1) % n];
                (next - prev) / (2.0 * self.values[k])
            })
            .sum();
        (s / (2.0 * PI * Complex64::i())).re
    }

    /// Net change of argument divided by 2π, from principal phase increments.
    pub fn phase_winding(&self) -> (i64, f64) {
        let n = self.values.len();
        let mut total = 0.0;
        let mut max_step: f64 = 0.0;
        for k in 0..n {
            let step = (self.values[(k + 1) % n] / self.values[k]).arg();
            max_step = max_step.max(step.abs());
            total += step;
        }
        ((total / (2.0 * PI)).round() as i64, max_step)
    }

    /// Smallest distance between the contour and a zero predicted by one
    /// Newton step from a sample.
    pub fn predicted_zero_distance(&self) -> (f64, Complex64) {
        let n = self.values.len();
        let mut best = (f64::INFINITY, Complex64::new(f64::NAN, f64::NAN));
        for k in 0..n {
            let next = (k + 1) % n;
            let prev = (k + n - 1) % n;
            let dz = self.nodes[next] - self.nodes[prev];
            if dz.norm() == 0.0 {
                continue;
            }
            let df = (self.values[next] - self.values[prev]) / dz;
            if df.norm() == 0.0 {
                continue;
            }
            let zero = self.nodes[k] - self.values[k] / df;
            let d = segment_distance(zero, self.nodes[prev], self.nodes[k])
                .min(segment_distance(zero, self.nodes[k], self.nodes[next]));
            if d < best.0 {
                best = (d, zero);
            }
        }
        best
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn min_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(f64::INFINITY, f64::min)
    }
}

fn segment_distance(p: Complex64, a: Complex64, b: Complex64) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_sqr();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = (((p - a) * ab.conj()).re / len2).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

fn rect_nodes(r: &Rect, samples: usize) -> Vec<Complex64> {
    let corners = r.corners();
    let perimeter = 2.0 * (r.width() + r.height());
    let mut nodes = Vec::with_capacity(samples + 4);
    for e in 0..4 {
        let a = corners[e];
        let b = corners[(e + 1) % 4];
        let len = (b - a).norm();
        let segs = ((samples as f64 * len / perimeter).round() as usize).max(2);
        for k in 0..segs {
            nodes.push(a + (b - a) * (k as f64 / segs as f64));
        }
    }
    nodes
}

fn eval_all(f: &AnalyticHandle, nodes: &[Complex64]) -> Result<Vec<Complex64>> {
    let values: Vec<Complex64> = nodes.par_iter().map(|&z| f.eval(z)).collect();
    for (z, v) in nodes.iter().zip(&values) {
        if !(v.re.is_finite() && v.im.is_finite()) {
            return Err(Error::NonFinite { at: *z });
        }
    }
    Ok(values)
}

/// Contour integral `∮ f dz` by the trapezoid rule, doubling until two
/// successive estimates agree within `tol` (relative to `max(1, |I|)`).
///
/// Rectangle edges carry their corners as nodes, so the trapezoid error has an
/// even-power expansion and the doubling sequence is Romberg-extrapolated.
pub fn contour_integral(f: &AnalyticHandle, contour: &ContourSpec, tol: f64) -> Result<Complex64> {
    let mut samples = ContourSamples::new(f, contour.shape, contour.samples)?;
    let romberg = matches!(contour.shape, ContourShape::Rect(_));
    let mut table: Vec<Complex64> = vec![samples.integrate(|_, v| v)];
    loop {
        if samples.len() >= contour.refinement_cap {
            return Err(Error::NonInteger { raw: table[table.len() - 1].norm(), samples: samples.len() });
        }
        samples.refine(f)?;
        let mut row = vec![samples.integrate(|_, v| v)];
        if romberg {
            let mut factor = 4.0;
            for prev in &table {
                let last = row[row.len() - 1];
                row.push(last + (last - prev) / (factor - 1.0));
                factor *= 4.0;
            }
        }
        let cur = row[row.len() - 1];
        let old = table[table.len() - 1];
        if (cur - old).norm() <= tol * cur.norm().max(1.0) {
            return Ok(cur);
        }
        table = row;
    }
}

/// Largest normalized anti-holomorphic derivative over `points`:
/// `max |∂f/∂z̄| / max(max |∂f/∂z|, max |∂f/∂z̄|)`, from central differences.
///
/// Close to zero for analytic functions and close to one for `conj(z)`.
pub fn cauchy_riemann_residual(f: &AnalyticHandle, points: &[Complex64], step: f64) -> f64 {
    let (dbar_max, d_max) = points
        .par_iter()
        .map(|&z| {
            let fx = (f.eval(z + step) - f.eval(z - step)) / (2.0 * step);
            let iy = Complex64::new(0.0, step);
            let fy = (f.eval(z + iy) - f.eval(z - iy)) / (2.0 * step);
            let dbar = 0.5 * (fx + Complex64::i() * fy);
            let d = 0.5 * (fx - Complex64::i() * fy);
            (dbar.norm(), d.norm())
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0.max(b.0), a.1.max(b.1)));
    let scale = d_max.max(dbar_max);
    if scale == 0.0 {
        0.0
    } else {
        dbar_max / scale
    }
}

/// Kind of seeded test functions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FunctionKind {
    /// `Σ c_k z^k` with `|c_k| <= 1`, `|c_d| >= 1/2`, degree 1..=6.
    Polynomial,
    /// Polynomial times `exp(a z)` with `|a| <= 1`.
    ExponentialPolynomial,
    /// `Π (z - r_j)` with roots drawn uniformly in a disk, degree 1..=max_degree.
    RootedPolynomial { center: Complex64, radius: f64, max_degree: usize },
}

/// One member of a seeded family, with the data it was built from.
#[derive(Debug, Clone)]
pub struct SeededFunction {
    pub handle: AnalyticHandle,
    pub degree: usize,
    pub coefficients: Vec<Complex64>,
    pub roots: Vec<Complex64>,
    pub exp_rate: Complex64,
}

fn unit_disk_sample(rng: &mut ChaCha8Rng) -> Complex64 {
    let r = rng.gen::<f64>().sqrt();
    let t = rng.gen::<f64>() * 2.0 * PI;
    Complex64::from_polar(r, t)
}

fn horner(coeffs: &[Complex64], z: Complex64) -> Complex64 {
    coeffs.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
}

/// Deterministic family of entire functions for property sweeps.
pub fn seeded_function_family(seed: u64, kind: FunctionKind, count: usize) -> Vec<SeededFunction> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|idx| match kind {
            FunctionKind::Polynomial | FunctionKind::ExponentialPolynomial => {
                let degree = rng.gen_range(1..=6usize);
                let mut coefficients: Vec<Complex64> = (0..=degree).map(|_| unit_disk_sample(&mut rng)).collect();
                let lead = coefficients[degree];
                if lead.norm() < 0.5 {
                    let phase = if lead.norm() > 0.0 { lead / lead.norm() } else { Complex64::new(1.0, 0.0) };
                    coefficients[degree] = phase * (0.5 + 0.5 * rng.gen::<f64>());
                }
                let exp_rate = match kind {
                    FunctionKind::ExponentialPolynomial => unit_disk_sample(&mut rng),
                    _ => Complex64::new(0.0, 0.0),
                };
                let c = coefficients.clone();
                let handle = AnalyticHandle::new(format!("seed{seed}-poly{idx}"), move |z| {
                    horner(&c, z) * (exp_rate * z).exp()
                });
                SeededFunction { handle, degree, coefficients, roots: Vec::new(), exp_rate }
            }
            FunctionKind::RootedPolynomial { center, radius, max_degree } => {
                let degree = rng.gen_range(1..=max_degree.max(1));
                let roots: Vec<Complex64> =
                    (0..degree).map(|_| center + unit_disk_sample(&mut rng) * radius).collect();
                let r = roots.clone();
                let handle = AnalyticHandle::new(format!("seed{seed}-rooted{idx}"), move |z| {
                    r.iter().fold(Complex64::new(1.0, 0.0), |acc, &root| acc * (z - root))
                });
                SeededFunction {
                    handle,
                    degree,
                    coefficients: Vec::new(),
                    roots,
                    exp_rate: Complex64::new(0.0, 0.0),
                }
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn cauchy_integral_of_simple_pole() {
        let center = c(0.3, -0.2);
        let f = AnalyticHandle::new("pole", move |z| 1.0 / (z - center));
        let spec = ContourSpec::circle(center, 0.5);
        let v = contour_integral(&f, &spec, 1e-12).unwrap();
        assert!((v - c(0.0, 2.0 * PI)).norm() < 1e-10, "{v}");
    }

    #[test]
    fn entire_function_integrates_to_zero() {
        let f = AnalyticHandle::new("square", |z| z * z);
        let rect = Rect::new(-1.0, 2.0, -0.5, 0.7).unwrap();
        let v = contour_integral(&f, &ContourSpec::rect(rect), 1e-12).unwrap();
        assert!(v.norm() < 1e-10, "{v}");
        let v = contour_integral(&f, &ContourSpec::circle(c(1.0, 1.0), 2.0), 1e-12).unwrap();
        assert!(v.norm() < 1e-10, "{v}");
    }

    #[test]
    fn pole_inside_rectangle() {
        let f = AnalyticHandle::new("pole", |z| 1.0 / (z - c(0.1, 0.2)));
        let rect = Rect::new(-1.0, 1.0, -1.0, 1.0).unwrap();
        let v = contour_integral(&f, &ContourSpec::rect(rect), 1e-11).unwrap();
        assert!((v - c(0.0, 2.0 * PI)).norm() < 1e-8, "{v}");
    }

    #[test]
    fn contour_spec_requires_power_of_two() {
        let shape = ContourShape::Circle(Circle::new(c(0.0, 0.0), 1.0).unwrap());
        assert!(ContourSpec::new(shape, 100, 1024).is_err());
        assert!(ContourSpec::new(shape, 32, 1024).is_err());
        assert!(ContourSpec::new(shape, 128, 64).is_err());
        assert!(ContourSpec::new(shape, 128, 1024).is_ok());
    }

    #[test]
    fn cauchy_riemann_separates_analytic_from_conjugate() {
        let pts: Vec<Complex64> = (0..25).map(|k| c(-1.0 + 0.1 * k as f64, 0.3 - 0.05 * k as f64)).collect();
        let cube = AnalyticHandle::new("cube", |z| z * z * z);
        assert!(cauchy_riemann_residual(&cube, &pts, 1e-5) < 1e-8);
        let conj = AnalyticHandle::new("conj", |z: Complex64| z.conj()).non_analytic();
        let r = cauchy_riemann_residual(&conj, &pts, 1e-5);
        assert!((r - 1.0).abs() < 1e-8, "{r}");
    }

    #[test]
    fn seeded_family_is_reproducible() {
        let a = seeded_function_family(1, FunctionKind::Polynomial, 3);
        let b = seeded_function_family(1, FunctionKind::Polynomial, 3);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.coefficients, y.coefficients);
            let z = c(0.37, -0.81);
            assert_eq!(x.handle.eval(z), y.handle.eval(z));
        }
        let other = seeded_function_family(2, FunctionKind::Polynomial, 3);
        assert_ne!(a[0].coefficients, other[0].coefficients);
    }

    #[test]
    fn seeded_members_are_entire_and_wind_by_degree() {
        let pts: Vec<Complex64> = (0..16).map(|k| c(0.2 * k as f64 - 1.5, 0.1 * k as f64 - 0.8)).collect();
        for kind in [FunctionKind::Polynomial, FunctionKind::ExponentialPolynomial] {
            for member in seeded_function_family(7, kind, 10) {
                assert!(cauchy_riemann_residual(&member.handle, &pts, 1e-5) < 1e-8);
                if kind == FunctionKind::Polynomial {
                    // all roots lie within 1 + max|c_k|/|c_d| <= 3
                    let samples = ContourSamples::new(
                        &member.handle,
                        ContourShape::Circle(Circle::new(c(0.0, 0.0), 4.0).unwrap()),
                        1024,
                    )
                    .unwrap();
                    assert_eq!(samples.phase_winding().0, member.degree as i64);
                    let raw = samples.log_derivative_winding();
                    assert!((raw - member.degree as f64).abs() < 0.25, "{raw}");
                }
            }
        }
    }

    #[test]
    fn refinement_reuses_nodes() {
        let f = AnalyticHandle::new("id", |z| z);
        let rect = Rect::new(0.0, 2.0, 0.0, 1.0).unwrap();
        let mut s = ContourSamples::new(&f, ContourShape::Rect(rect), 64).unwrap();
        let before: Vec<Complex64> = s.nodes().to_vec();
        s.refine(&f).unwrap();
        for (k, z) in before.iter().enumerate() {
            assert_eq!(s.nodes()[2 * k], *z);
        }
    }
}
