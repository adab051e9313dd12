//! Bound-verification suites, each reduced to a pass flag, a status and a
//! witness for the first failure.

use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reslab_core::complex_utils::{seeded_function_family, AnalyticHandle, Circle, ContourShape, FunctionKind, Rect};
use reslab_core::free_resolvent::{
    fit_r0_scaling, r0_kernel_line, reflection_identity_residual_with, verify_m_decay, KernelGrid,
};
use reslab_core::model::{make_weight, PotentialModel};
use reslab_core::resolvent_norm::{
    hypothesis_scale, max_principle_check, spectrum_proxy, weighted_resolvent_norm_auto, FitStatus, MaxPrincipleOptions,
    MaxPrincipleParams,
};
use reslab_core::resonance_search::{blaschke_lower_bound, jensen_zero_bound, winding_count_shape};
use reslab_core::Result as CoreResult;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::ExperimentConfig;
use crate::error::HarnessResult;
use crate::pipeline::{apriori_fit, fit_data};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SuiteStatus {
    Pass,
    Fail,
    NoFit,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteResult {
    pub name: String,
    pub status: SuiteStatus,
    pub pass: bool,
    pub witness: Option<String>,
    pub detail: Value,
    pub seconds: f64,
}

impl SuiteResult {
    fn new(name: &str, status: SuiteStatus, witness: Option<String>, detail: Value, start: Instant) -> Self {
        Self {
            name: name.into(),
            pass: status == SuiteStatus::Pass,
            status,
            witness,
            detail,
            seconds: start.elapsed().as_secs_f64(),
        }
    }

    fn error(name: &str, e: impl std::fmt::Display, start: Instant) -> Self {
        Self::new(name, SuiteStatus::Error, Some(e.to_string()), Value::Null, start)
    }

    fn verdict(ok: bool) -> SuiteStatus {
        if ok {
            SuiteStatus::Pass
        } else {
            SuiteStatus::Fail
        }
    }
}

/// Residual bound for the reflection identity.
pub const REFLECTION_TOL: f64 = 1e-12;

/// Reflection identity for a line kernel at `samples` points with
/// `Re σ ∈ (0.05, 20)`, `-γ < Im σ < 0`, `x, y ∈ [0, 10]`.
pub fn reflection_suite_with<K>(kernel: K, samples: usize, gamma: f64, seed: u64) -> SuiteResult
where
    K: Fn(Complex64, f64, f64) -> CoreResult<Complex64>,
{
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = (0.0f64, Complex64::new(0.0, 0.0), 0.0, 0.0);
    for _ in 0..samples {
        let sigma = Complex64::new(rng.gen_range(0.05..20.0), -gamma * rng.gen_range(0.0..1.0f64).max(1e-9));
        let (x, y) = (rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0));
        match reflection_identity_residual_with(&kernel, sigma, x, y) {
            Ok(r) if r.is_nan() || r > worst.0 => worst = (if r.is_nan() { f64::INFINITY } else { r }, sigma, x, y),
            Ok(_) => {}
            Err(e) => return SuiteResult::error("reflection_identity", e, start),
        }
    }
    let ok = worst.0 < REFLECTION_TOL;
    let witness = (!ok).then(|| format!("residual {:.3e} at sigma = {}, x = {}, y = {}", worst.0, worst.1, worst.2, worst.3));
    let detail = json!({ "samples": samples, "max_residual": worst.0, "tolerance": REFLECTION_TOL });
    SuiteResult::new("reflection_identity", SuiteResult::verdict(ok), witness, detail, start)
}

pub fn reflection_suite(samples: usize, gamma: f64, seed: u64) -> SuiteResult {
    reflection_suite_with(r0_kernel_line, samples, gamma, seed)
}

/// Slope of `log ‖e^{-γφ} R₀(σ) e^{-γφ}‖` against `log |σ|` for the
/// whole-line kernel, required `-1 ± 0.1`.
pub fn r0_scaling_suite(sigmas: &[f64], gamma: f64) -> SuiteResult {
    let start = Instant::now();
    let run = || -> CoreResult<_> {
        let weight = make_weight(0.0, 1.0)?;
        let points: Vec<Complex64> = sigmas.iter().map(|&s| Complex64::new(s, 0.0)).collect();
        fit_r0_scaling(&points, gamma, &weight, &KernelGrid::line(), 0)
    };
    match run() {
        Ok(rep) => {
            let ok = (rep.slope + 1.0).abs() <= 0.1;
            let witness = (!ok).then(|| format!("slope {:.4}", rep.slope));
            let norms: Vec<f64> = rep.records.iter().map(|r| r.norm).collect();
            let detail = json!({ "sigmas": sigmas, "norms": norms, "slope": rep.slope, "r_squared": rep.r_squared });
            SuiteResult::new("r0_scaling", SuiteResult::verdict(ok), witness, detail, start)
        }
        Err(e) => SuiteResult::error("r0_scaling", e, start),
    }
}

/// Weighted `M(σ)` norms sharing one bound: `max/min < 10`.
pub fn m_decay_suite(sigmas: &[f64], gamma: f64, eps: f64) -> SuiteResult {
    let start = Instant::now();
    let run = || -> CoreResult<_> {
        let weight = make_weight(0.0, 1.0)?;
        let points: Vec<Complex64> = sigmas.iter().map(|&s| Complex64::new(s, 0.0)).collect();
        verify_m_decay(&points, gamma, eps, &weight, &KernelGrid::line())
    };
    match run() {
        Ok(rep) => {
            let witness = (!rep.bounded).then(|| format!("max/min = {:.3}", rep.max_over_min));
            let norms: Vec<f64> = rep.records.iter().map(|r| r.norm).collect();
            let detail = json!({ "sigmas": sigmas, "norms": norms, "max_over_min": rep.max_over_min });
            SuiteResult::new("m_decay", SuiteResult::verdict(rep.bounded), witness, detail, start)
        }
        Err(e) => SuiteResult::error("m_decay", e, start),
    }
}

/// Semiclassical parameters of the bound suites: the configured ones or `h = 1`.
fn suite_hs(cfg: &ExperimentConfig) -> Vec<f64> {
    let hs = cfg.hs();
    if hs.is_empty() {
        vec![1.0]
    } else {
        hs
    }
}

/// Scan rectangle for the a priori shape check at `h`.
fn apriori_rect(cfg: &ExperimentConfig, model: &PotentialModel, h: f64) -> HarnessResult<Rect> {
    if cfg.window.is_some() {
        cfg.window_rect(h, model.gamma)
    } else {
        Ok(Rect::new(0.5, 2.0, -0.5 * model.gamma * h, 0.5 * h)?)
    }
}

/// Exponential a priori bound fitted to norm scans outside the `S`-disks.
pub fn apriori_suite(cfg: &ExperimentConfig, model: &PotentialModel) -> SuiteResult {
    let start = Instant::now();
    let b = &cfg.bounds;
    let run = || -> HarnessResult<_> {
        let data = suite_hs(cfg)
            .iter()
            .map(|&h| fit_data(cfg, model, h, b.s, apriori_rect(cfg, model, h)?, b.norm_grid))
            .collect::<HarnessResult<Vec<_>>>()?;
        apriori_fit(&data, cfg.theorem.a_cap, None)
    };
    match run() {
        Ok(rep) => {
            let status = match rep.status {
                FitStatus::NoFit => SuiteStatus::NoFit,
                FitStatus::Fit => SuiteResult::verdict(rep.violations.is_empty()),
            };
            let witness = match status {
                SuiteStatus::NoFit => Some(format!("no p on the grid with A <= {}", cfg.theorem.a_cap)),
                SuiteStatus::Fail => rep.violations.first().map(|v| format!("{v:?}")),
                _ => None,
            };
            let detail = serde_json::to_value(&rep).unwrap_or(Value::Null);
            SuiteResult::new("apriori_bound", status, witness, detail, start)
        }
        Err(e) => SuiteResult::error("apriori_bound", e, start),
    }
}

/// Hypothesis-validated polynomials never exceed `e³ M` on the inner rectangle.
pub fn max_principle_suite(cases: usize, seed: u64) -> SuiteResult {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let family = seeded_function_family(seed, FunctionKind::Polynomial, cases);
    let opts = MaxPrincipleOptions::default();
    let mut worst_ratio = 0.0f64;
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
        let scale = match hypothesis_scale(&member.handle, &p, &opts) {
            Ok(s) => s,
            Err(e) => return SuiteResult::error("max_principle", e, start),
        };
        let g = member.handle.clone();
        let f = AnalyticHandle::new(member.handle.label.clone(), move |z| g.eval(z) * scale);
        match max_principle_check(&f, &p, &opts) {
            Ok(rep) => {
                worst_ratio = worst_ratio.max(rep.inner_max / rep.bound);
                if !rep.holds {
                    let witness = format!("{}: |F| = {:.6e} > {:.6e} at {:?}", member.handle.label, rep.inner_max, rep.bound, rep.witness);
                    let detail = json!({ "cases": cases, "params": p });
                    return SuiteResult::new("max_principle", SuiteStatus::Fail, Some(witness), detail, start);
                }
            }
            Err(e) => return SuiteResult::error("max_principle", e, start),
        }
    }
    let detail = json!({ "cases": cases, "worst_inner_over_bound": worst_ratio });
    SuiteResult::new("max_principle", SuiteStatus::Pass, None, detail, start)
}

/// Jensen bound against the exact winding count of seeded rooted polynomials.
pub fn jensen_suite(cases: usize, seed: u64) -> SuiteResult {
    let start = Instant::now();
    let center = Complex64::new(0.0, 0.0);
    let kind = FunctionKind::RootedPolynomial { center, radius: 0.45, max_degree: 6 };
    let mut slack = f64::INFINITY;
    for member in seeded_function_family(seed, kind, cases) {
        let run = || -> CoreResult<(i64, f64)> {
            let circle = ContourShape::Circle(Circle::new(center, 0.5)?);
            let count = winding_count_shape(&member.handle, circle, 1e-9)?;
            Ok((count, jensen_zero_bound(&member.handle, center, 1.0, 0.5)?))
        };
        match run() {
            Ok((count, bound)) => {
                slack = slack.min(bound - count as f64);
                if bound < count as f64 || count != member.degree as i64 {
                    let witness = format!("{}: bound {bound:.4} vs winding {count} (degree {})", member.handle.label, member.degree);
                    return SuiteResult::new("jensen", SuiteStatus::Fail, Some(witness), json!({ "cases": cases }), start);
                }
            }
            Err(e) => return SuiteResult::error("jensen", e, start),
        }
    }
    SuiteResult::new("jensen", SuiteStatus::Pass, None, json!({ "cases": cases, "min_slack": slack }), start)
}

/// Blaschke certificates for seeded rooted polynomials, each checked at `points` samples.
pub fn blaschke_suite(cases: usize, points: usize, seed: u64) -> SuiteResult {
    let start = Instant::now();
    let center = Complex64::new(0.0, 0.0);
    let kind = FunctionKind::RootedPolynomial { center, radius: 0.35, max_degree: 4 };
    let mut checked = 0usize;
    for member in seeded_function_family(seed, kind, cases) {
        match blaschke_lower_bound(&member.handle, center, (1.0, 0.6, 0.4), &member.roots, 0.05, points) {
            Ok(cert) => {
                checked += cert.samples_checked;
                if !cert.sound {
                    let witness = format!(
                        "{}: sampled min ln|f| = {:.4} below certified {:.4}",
                        member.handle.label, cert.sampled_min_log_modulus, cert.min_log_modulus
                    );
                    return SuiteResult::new("blaschke", SuiteStatus::Fail, Some(witness), json!({ "cases": cases }), start);
                }
            }
            Err(e) => return SuiteResult::error("blaschke", e, start),
        }
    }
    let detail = json!({ "cases": cases, "points_per_case": points, "samples_checked": checked });
    SuiteResult::new("blaschke", SuiteStatus::Pass, None, detail, start)
}

/// Relative slack allowed over `1/dist(λ², proxy)`.
pub const SELF_ADJOINT_SLACK: f64 = 0.05;

/// Interval of the Dirichlet spectrum proxy for `model`.
pub fn proxy_interval(model: &PotentialModel) -> f64 {
    model.x_box + 10.0
}

/// `‖e^{-γφ} R(λ) e^{-γφ}‖ ≤ (1 + 5%) / dist(λ², proxy)` at seeded `λ` with
/// `Im λ² > 0`.
pub fn upper_half_plane_suite(cfg: &ExperimentConfig, model: &PotentialModel, samples: usize, seed: u64) -> SuiteResult {
    let start = Instant::now();
    let h = suite_hs(cfg)[0];
    let run = || -> HarnessResult<_> {
        let weight = cfg.weight(model)?;
        let proxy = spectrum_proxy(model, h, proxy_interval(model))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lambdas: Vec<Complex64> = (0..samples)
            .map(|_| Complex64::from_polar(rng.gen_range(0.3..3.0), rng.gen_range(0.05..std::f64::consts::FRAC_PI_2 - 0.05)))
            .collect();
        let opts = cfg.tolerances.norm();
        use rayon::prelude::*;
        let rows = lambdas
            .par_iter()
            .map(|&l| {
                let norm = weighted_resolvent_norm_auto(model, l, h, model.gamma, &weight, &opts)?;
                Ok((l, norm, proxy.self_adjoint_bound(l)))
            })
            .collect::<CoreResult<Vec<_>>>()?;
        Ok((rows, proxy))
    };
    match run() {
        Ok((rows, proxy)) => {
            let worst = rows.iter().map(|&(_, n, b)| n / b).fold(0.0, f64::max);
            let bad = rows.iter().find(|&&(_, n, b)| n > (1.0 + SELF_ADJOINT_SLACK) * b);
            let witness = bad.map(|(l, n, b)| format!("lambda = {l}: norm {n:.6e} > bound {b:.6e}"));
            let detail = json!({ "h": h, "samples": samples, "worst_ratio": worst, "proxy_eigenvalues": proxy.eigenvalues });
            SuiteResult::new("upper_half_plane", SuiteResult::verdict(bad.is_none()), witness, detail, start)
        }
        Err(e) => SuiteResult::error("upper_half_plane", e, start),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsReport {
    pub model: String,
    pub seed: u64,
    pub suites: Vec<SuiteResult>,
    pub pass: bool,
}

/// Every bound suite for the configured model.
pub fn run_bounds(cfg: &ExperimentConfig, seed: u64) -> HarnessResult<BoundsReport> {
    let model = cfg.model()?;
    let b = &cfg.bounds;
    let gamma = model.gamma;
    let suites = vec![
        reflection_suite(b.reflection_samples, gamma, seed),
        r0_scaling_suite(&b.sigma_list, gamma),
        m_decay_suite(&b.sigma_list, gamma, b.m_decay_eps.min(0.5 * gamma)),
        apriori_suite(cfg, &model),
        max_principle_suite(b.property_cases, seed),
        jensen_suite(b.jensen_cases, seed),
        blaschke_suite(20, b.blaschke_points, seed),
        upper_half_plane_suite(cfg, &model, b.upper_half_plane_samples, seed),
    ];
    let pass = suites.iter().all(|s| s.pass);
    Ok(BoundsReport { model: model.label.clone(), seed, suites, pass })
}
