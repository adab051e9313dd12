//! Jost and regular solutions, the matching determinant and the continued
//! Green's function.
//!
//! With `σ = λ/h` the equation `-h²(a u')' + V u = λ² u` is integrated as the
//! first-order system `u' = p/a`, `p' = (V/h² - σ²) u` for `(u, p = a u')`.
//! Beyond the certified tail radius both solutions continue as free waves.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::complex_utils::{AnalyticHandle, Circle, ContourSamples, ContourShape};
use crate::error::{Error, Result};
use crate::linalg::trapezoid_weights;
use crate::model::{PotentialModel, WeightFunction};
use crate::ode::{integrate, OdeOptions, State};

fn i() -> Complex64 {
    Complex64::i()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Bound on the neglected tail `∫_{x_tail}^∞ g(y) e^{2κy} dy`.
    pub tail_tol: f64,
    /// Forces the matching radius (must not be smaller than the certified one
    /// unless the caller accepts the truncation).
    pub x_tail_override: Option<f64>,
    /// Required distance of `Im σ` above `-(γ + δ/2)`.
    pub strip_margin: f64,
    pub max_steps: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { rtol: 1e-12, atol: 1e-14, tail_tol: 1e-13, x_tail_override: None, strip_margin: 1e-3, max_steps: 2_000_000 }
    }
}

impl SolveOptions {
    fn ode(&self, sigma: Complex64) -> OdeOptions {
        OdeOptions {
            rtol: self.rtol,
            atol: self.atol,
            p_scale: sigma.norm().max(1.0),
            max_steps: self.max_steps,
            initial_step: None,
        }
    }
}

pub fn sigma_of(lambda: Complex64, h: f64) -> Result<Complex64> {
    if !(h > 0.0) {
        return Err(Error::Domain(format!("h must be positive, got {h}")));
    }
    let sigma = lambda / h;
    if sigma.norm() == 0.0 || !sigma.re.is_finite() || !sigma.im.is_finite() {
        return Err(Error::Domain(format!("lambda must be finite and nonzero, got {lambda}")));
    }
    Ok(sigma)
}

/// Lower edge of the continuation region in `Im σ`.
pub fn strip_bound(model: &PotentialModel) -> f64 {
    -(model.gamma + 0.5 * model.delta)
}

pub fn check_strip(model: &PotentialModel, sigma: Complex64, margin: f64) -> Result<()> {
    let bound = strip_bound(model) + margin;
    if sigma.im <= bound {
        return Err(Error::Strip { im_sigma: sigma.im, bound });
    }
    Ok(())
}

/// Smallest radius beyond `max(x_box, last breakpoint)` at which the weighted
/// perturbation tail `∫_x^∞ (|V|/(h²|σ|) + |a-1||σ|) e^{2κy} dy` drops below
/// `tol`, with `κ = max(0, -Im σ)`.
///
/// The integral is computed by quadrature of the actual coefficients up to a
/// far radius and closed with the declared exponential envelope.
pub fn tail_radius(model: &PotentialModel, sigma: Complex64, h: f64, tol: f64) -> f64 {
    let start = model.breakpoints().last().copied().unwrap_or(0.0).max(model.x_box);
    if model.is_free() {
        return start;
    }
    let s = sigma.norm();
    let kappa = (-sigma.im).max(0.0);
    let rate = model.decay_rate() - 2.0 * kappa;
    let weight_v = 1.0 / (h * h * s);
    let env_v: f64 = model.potential.iter().map(|t| t.envelope_sup(model.decay_rate(), start)).sum();
    let env_a: f64 = model.a_terms.iter().map(|t| t.envelope_sup(model.decay_rate(), start)).sum();
    let env = env_v.min(model.decay_const) * weight_v + env_a.min(model.decay_const) * s;
    if env == 0.0 {
        return start;
    }
    let x_far = if env > 0.0 && rate > 0.0 {
        start.max(((env / (rate * 0.1 * tol)).ln() / rate).max(start))
    } else {
        start
    };
    let remainder = if rate > 0.0 { env * (-rate * x_far).exp() / rate } else { f64::INFINITY };
    let g = |y: f64| (model.v(y).abs() * weight_v + (model.a(y) - 1.0).abs() * s) * (2.0 * kappa * y).exp();
    let steps = (((x_far - start) / 2e-3).ceil() as usize).max(1);
    let dx = (x_far - start) / steps as f64;
    let mut tail = remainder;
    let mut best = x_far;
    let mut g_hi = g(x_far);
    for k in (0..steps).rev() {
        let x = start + k as f64 * dx;
        let g_lo = g(x);
        tail += 0.5 * dx * (g_lo + g_hi);
        g_hi = g_lo;
        if tail < tol {
            best = x;
        } else {
            break;
        }
    }
    best
}

fn rhs<'a>(model: &'a PotentialModel, sigma: Complex64, h: f64) -> impl Fn(f64, &State) -> State + 'a {
    let s2 = sigma * sigma;
    let inv_h2 = 1.0 / (h * h);
    move |x: f64, y: &State| [y[1] / model.a(x), y[0] * (model.v(x) * inv_h2 - s2)]
}

/// Sorted output grid split at `x_tail`.
fn split_grid(xs: &[f64], x_tail: f64) -> Result<usize> {
    if xs.iter().any(|&x| !(x >= 0.0)) {
        return Err(Error::Domain("solution grids must lie in [0, ∞)".into()));
    }
    if xs.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Domain("solution grids must be sorted".into()));
    }
    Ok(xs.partition_point(|&x| x <= x_tail))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JostSolution {
    pub lambda: Complex64,
    pub h: f64,
    pub sigma: Complex64,
    pub x_tail: f64,
    pub xs: Vec<f64>,
    pub f: Vec<Complex64>,
    /// `a f'`.
    pub p: Vec<Complex64>,
}

impl JostSolution {
    /// `|e^{-iσx} f(x) - 1|` at every grid point.
    pub fn normalization_defect(&self) -> Vec<f64> {
        self.xs.iter().zip(&self.f).map(|(&x, &f)| ((-i() * self.sigma * x).exp() * f - 1.0).norm()).collect()
    }
}

fn jost_states(model: &PotentialModel, sigma: Complex64, h: f64, x_tail: f64, xs: &[f64], opts: &SolveOptions) -> Result<Vec<State>> {
    let k = split_grid(xs, x_tail)?;
    let mut out = vec![[Complex64::new(0.0, 0.0); 2]; xs.len()];
    for idx in k..xs.len() {
        let e = (i() * sigma * xs[idx]).exp();
        out[idx] = [e, i() * sigma * e];
    }
    if k > 0 {
        let e = (i() * sigma * x_tail).exp();
        let y0 = [e, model.a(x_tail) * i() * sigma * e];
        let outputs: Vec<f64> = xs[..k].iter().rev().cloned().collect();
        let states = integrate(rhs(model, sigma, h), y0, x_tail, &outputs, &model.breakpoints(), &opts.ode(sigma))?;
        for (j, st) in states.into_iter().enumerate() {
            out[k - 1 - j] = st;
        }
    }
    Ok(out)
}

fn resolve_tail(model: &PotentialModel, sigma: Complex64, h: f64, opts: &SolveOptions) -> f64 {
    opts.x_tail_override.unwrap_or_else(|| tail_radius(model, sigma, h, opts.tail_tol))
}

/// Outgoing solution `f ~ e^{iσx}` sampled on the sorted grid `xs`.
pub fn integrate_jost(model: &PotentialModel, lambda: Complex64, h: f64, xs: &[f64], opts: &SolveOptions) -> Result<JostSolution> {
    let sigma = sigma_of(lambda, h)?;
    check_strip(model, sigma, opts.strip_margin)?;
    let x_tail = resolve_tail(model, sigma, h, opts);
    let states = jost_states(model, sigma, h, x_tail, xs, opts)?;
    Ok(JostSolution {
        lambda,
        h,
        sigma,
        x_tail,
        xs: xs.to_vec(),
        f: states.iter().map(|s| s[0]).collect(),
        p: states.iter().map(|s| s[1]).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularSolution {
    pub lambda: Complex64,
    pub h: f64,
    pub sigma: Complex64,
    pub x_tail: f64,
    pub xs: Vec<f64>,
    pub u: Vec<Complex64>,
    /// `a u'`.
    pub p: Vec<Complex64>,
}

fn regular_states(model: &PotentialModel, sigma: Complex64, h: f64, x_tail: f64, xs: &[f64], opts: &SolveOptions) -> Result<Vec<State>> {
    let k = split_grid(xs, x_tail)?;
    let mut outputs: Vec<f64> = xs[..k].to_vec();
    let need_tail = k < xs.len();
    if need_tail && outputs.last().copied() != Some(x_tail) {
        outputs.push(x_tail);
    }
    let y0 = [Complex64::new(0.0, 0.0), Complex64::new(model.a(0.0), 0.0)];
    let states = if outputs.iter().all(|&x| x == 0.0) {
        vec![y0; outputs.len()]
    } else {
        integrate(rhs(model, sigma, h), y0, 0.0, &outputs, &model.breakpoints(), &opts.ode(sigma))?
    };
    let mut out: Vec<State> = states[..k].to_vec();
    if need_tail {
        let st = states[states.len() - 1];
        let (u, du) = (st[0], st[1] / model.a(x_tail));
        let isx = i() * sigma;
        let a = 0.5 * (u + du / isx) * (-isx * x_tail).exp();
        let b = 0.5 * (u - du / isx) * (isx * x_tail).exp();
        for &x in &xs[k..] {
            let (ep, em) = ((isx * x).exp(), (-isx * x).exp());
            out.push([a * ep + b * em, isx * (a * ep - b * em)]);
        }
    }
    Ok(out)
}

/// Dirichlet solution with `u(0) = 0`, `u'(0) = 1` on the sorted grid `xs`.
pub fn regular_solution(model: &PotentialModel, lambda: Complex64, h: f64, xs: &[f64], opts: &SolveOptions) -> Result<RegularSolution> {
    let sigma = sigma_of(lambda, h)?;
    let x_tail = resolve_tail(model, sigma, h, opts);
    let states = regular_states(model, sigma, h, x_tail, xs, opts)?;
    Ok(RegularSolution {
        lambda,
        h,
        sigma,
        x_tail,
        xs: xs.to_vec(),
        u: states.iter().map(|s| s[0]).collect(),
        p: states.iter().map(|s| s[1]).collect(),
    })
}

/// `W = a (f u0' - f' u0)` evaluated at several points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchingDeterminant {
    pub lambda: Complex64,
    pub h: f64,
    pub value: Complex64,
    pub points: Vec<f64>,
    pub samples: Vec<Complex64>,
    /// Standard deviation of the samples relative to `|value|`.
    pub relative_spread: f64,
}

pub fn wronskian(model: &PotentialModel, lambda: Complex64, h: f64, opts: &SolveOptions) -> Result<MatchingDeterminant> {
    let sigma = sigma_of(lambda, h)?;
    check_strip(model, sigma, opts.strip_margin)?;
    let x_tail = resolve_tail(model, sigma, h, opts);
    let reach = x_tail.max(1.0);
    let points: Vec<f64> = (0..8).map(|k| reach * k as f64 / 7.0).collect();
    let jost = jost_states(model, sigma, h, x_tail, &points, opts)?;
    let reg = regular_states(model, sigma, h, x_tail, &points, opts)?;
    let samples: Vec<Complex64> = jost.iter().zip(&reg).map(|(f, u)| f[0] * u[1] - f[1] * u[0]).collect();
    let n = samples.len() as f64;
    let value = samples.iter().sum::<Complex64>() / n;
    let var = samples.iter().map(|s| (s - value).norm_sqr()).sum::<f64>() / n;
    let relative_spread = if value.norm() > 0.0 { var.sqrt() / value.norm() } else { f64::INFINITY };
    Ok(MatchingDeterminant { lambda, h, value, points, samples, relative_spread })
}

/// `W(λ) = a(0) f(0)`: the matching determinant from the Jost solution alone.
pub fn wronskian_value(model: &PotentialModel, lambda: Complex64, h: f64, opts: &SolveOptions) -> Result<Complex64> {
    let sigma = sigma_of(lambda, h)?;
    check_strip(model, sigma, opts.strip_margin)?;
    let x_tail = resolve_tail(model, sigma, h, opts);
    let st = jost_states(model, sigma, h, x_tail, &[0.0], opts)?;
    Ok(st[0][0] * model.a(0.0))
}

/// `W(·, h)` as an analytic handle; failed solves evaluate to NaN.
pub fn wronskian_handle(model: &PotentialModel, h: f64, opts: &SolveOptions) -> AnalyticHandle {
    let m = model.clone();
    let o = *opts;
    AnalyticHandle::new(format!("W[{}; h={h}]", model.label), move |z| {
        wronskian_value(&m, z, h, &o).unwrap_or(Complex64::new(f64::NAN, f64::NAN))
    })
}

/// Green's function of `P(h) - λ²` on a fixed grid, optionally conjugated by
/// `e^{-γφ}`.
#[derive(Debug, Clone)]
pub struct GreenKernel {
    pub lambda: Complex64,
    pub h: f64,
    pub xs: Vec<f64>,
    pub quad: Vec<f64>,
    pub damping: Vec<f64>,
    pub u0: Vec<Complex64>,
    pub f: Vec<Complex64>,
    pub w: Complex64,
}

/// Relative threshold on `|W|` below which the Green's function is refused.
pub const DEFLATION_THRESHOLD: f64 = 1e-8;

impl GreenKernel {
    /// `deflation_scale` is a typical `|W|` for the surrounding window.
    pub fn new(
        model: &PotentialModel,
        lambda: Complex64,
        h: f64,
        xs: &[f64],
        weight: Option<(f64, &WeightFunction)>,
        opts: &SolveOptions,
        deflation_scale: f64,
    ) -> Result<Self> {
        if xs.len() < 2 {
            return Err(Error::Domain("Green's kernel needs at least two grid points".into()));
        }
        let sigma = sigma_of(lambda, h)?;
        check_strip(model, sigma, opts.strip_margin)?;
        let x_tail = resolve_tail(model, sigma, h, opts);
        let jost = jost_states(model, sigma, h, x_tail, xs, opts)?;
        let reg = regular_states(model, sigma, h, x_tail, xs, opts)?;
        let k = xs.len() / 2;
        let w = jost[k][0] * reg[k][1] - jost[k][1] * reg[k][0];
        let threshold = DEFLATION_THRESHOLD * deflation_scale.max(1.0);
        if !(w.norm() >= threshold) {
            return Err(Error::NearResonance { lambda, w_abs: w.norm(), threshold });
        }
        let damping = match weight {
            Some((gamma, wf)) => xs.iter().map(|&x| wf.damping(gamma, x)).collect(),
            None => vec![1.0; xs.len()],
        };
        Ok(Self {
            lambda,
            h,
            xs: xs.to_vec(),
            quad: trapezoid_weights(xs),
            damping,
            u0: reg.iter().map(|s| s[0]).collect(),
            f: jost.iter().map(|s| s[0]).collect(),
            w,
        })
    }

    /// `e^{-γφ} R(λ) e^{-γφ} g` with the Green's function integrated by the
    /// trapezoid rule on the grid.
    pub fn apply(&self, g: &[Complex64]) -> Vec<Complex64> {
        let n = self.xs.len();
        let c: Vec<Complex64> = (0..n).map(|k| g[k] * (self.damping[k] * self.quad[k])).collect();
        let mut left = vec![Complex64::new(0.0, 0.0); n];
        let mut acc = Complex64::new(0.0, 0.0);
        for k in 0..n {
            acc += self.u0[k] * c[k];
            left[k] = acc;
        }
        let mut out = vec![Complex64::new(0.0, 0.0); n];
        let mut right = Complex64::new(0.0, 0.0);
        let scale = 1.0 / (self.h * self.h * self.w);
        for k in (0..n).rev() {
            out[k] = (self.f[k] * left[k] + self.u0[k] * right) * scale * self.damping[k];
            right += self.f[k] * c[k];
        }
        out
    }

    /// Same operator in orthonormal coordinates `sqrt(q) g`.
    pub fn apply_l2(&self, g: &[Complex64]) -> Vec<Complex64> {
        let sq: Vec<f64> = self.quad.iter().map(|q| q.sqrt()).collect();
        let inner: Vec<Complex64> = g.iter().zip(&sq).map(|(v, s)| v / s).collect();
        self.apply(&inner).iter().zip(&sq).map(|(v, s)| v * s).collect()
    }

    /// Adjoint of [`Self::apply_l2`]; the kernel is symmetric so `B* = conj B conj`.
    pub fn apply_l2_adjoint(&self, g: &[Complex64]) -> Vec<Complex64> {
        let conj: Vec<Complex64> = g.iter().map(|v| v.conj()).collect();
        self.apply_l2(&conj).into_iter().map(|v| v.conj()).collect()
    }
}

/// `e^{-γφ} R(λ,h) e^{-γφ} g` on the grid `xs`.
#[allow(clippy::too_many_arguments)]
pub fn resolvent_apply(
    model: &PotentialModel,
    lambda: Complex64,
    h: f64,
    xs: &[f64],
    g: &[Complex64],
    gamma: f64,
    weight: &WeightFunction,
    opts: &SolveOptions,
) -> Result<Vec<Complex64>> {
    if g.len() != xs.len() {
        return Err(Error::Domain("grid function length does not match the grid".into()));
    }
    if g.iter().all(|v| v.norm() == 0.0) {
        return Ok(vec![Complex64::new(0.0, 0.0); xs.len()]);
    }
    let k = GreenKernel::new(model, lambda, h, xs, Some((gamma, weight)), opts, 1.0)?;
    Ok(k.apply(g))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidueReport {
    pub order: usize,
    pub winding: i64,
    /// `order == winding`: the test function sees the full pole.
    pub generic: bool,
    /// `|μ_k|` relative to `max|F| radius^{k+1}`, `μ_k = (1/2πi)∮ (λ-r)^k F`.
    pub moments: Vec<f64>,
}

/// Pole order of `F(λ) = ⟨g, R(λ) g⟩` at `r` from contour moments on the circle
/// `|λ - r| = radius`, compared with the winding number of `W` there.
pub fn residue_order(
    model: &PotentialModel,
    r: Complex64,
    h: f64,
    radius: f64,
    xs: &[f64],
    g: &[f64],
    opts: &SolveOptions,
) -> Result<ResidueReport> {
    if g.len() != xs.len() {
        return Err(Error::Domain("test function length does not match the grid".into()));
    }
    let circle = ContourShape::Circle(Circle::new(r, radius)?);
    let winding = crate::resonance_search::winding_count_shape(&wronskian_handle(model, h, opts), circle, radius * 1e-3)?;
    let model_c = model.clone();
    let xs_c = xs.to_vec();
    let gc: Vec<Complex64> = g.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let q = trapezoid_weights(xs);
    let o = *opts;
    let form = AnalyticHandle::new("<g, R g>", move |z| {
        match GreenKernel::new(&model_c, z, h, &xs_c, None, &o, 0.0) {
            Ok(k) => k.apply(&gc).iter().zip(&gc).zip(&q).map(|((rg, gv), w)| rg * gv.conj() * w).sum(),
            Err(_) => Complex64::new(f64::NAN, f64::NAN),
        }
    });
    let max_order = 4usize;
    let mut samples = ContourSamples::new(&form, circle, 256)?;
    let mut prev: Option<Vec<f64>> = None;
    loop {
        let fmax = samples.max_abs().max(f64::MIN_POSITIVE);
        let moments: Vec<f64> = (0..=max_order)
            .map(|k| {
                let mu = samples.integrate(|z, v| (z - r).powu(k as u32) * v) / (2.0 * std::f64::consts::PI * i());
                mu.norm() / (fmax * radius.powi(k as i32 + 1))
            })
            .collect();
        let settled = prev
            .as_ref()
            .map(|p| p.iter().zip(&moments).all(|(a, b)| (a - b).abs() <= 1e-8 + 1e-4 * b))
            .unwrap_or(false);
        if settled || samples.len() >= 4096 {
            let order = moments.iter().rposition(|&m| m > 1e-6).map(|k| k + 1).unwrap_or(0);
            if order as i64 > winding {
                return Err(Error::Isolation { order, winding });
            }
            return Ok(ResidueReport { order, winding, generic: order as i64 == winding, moments });
        }
        prev = Some(moments);
        samples.refine(&form)?;
    }
}
