//! Per-h experiment pipelines: quasimode clusters, the resonance strip check
//! and the ℓ-sweep of the `ads_like` family.

use num_complex::Complex64;
use rayon::prelude::*;
use reslab_core::complex_utils::{Circle, ContourShape, Rect};
use reslab_core::continuation::wronskian_handle;
use reslab_core::linalg::{linear_fit, linspace, LinearFit};
use reslab_core::model::PotentialModel;
use reslab_core::quasimodes::{
    build_cluster, dirichlet_eigensolve, independence_check, matching_point, refine_dirichlet_energy, Cutoff,
    IndependenceReport, QuasimodeFamily, QuasimodeOptions,
};
use reslab_core::resolvent_norm::{
    apriori_bound_check, rect_grid, scan_norms, AprioriInput, AprioriOptions, AprioriReport, ExclusionDisk, FitStatus,
    NormScan,
};
use reslab_core::resonance_search::{scan_resonances_in, winding_count_shape, ResonanceRecord, ResonanceScan};
use reslab_core::Error as CoreError;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, HarnessResult};

/// Outer turning point: the last `x` with `V(x) ≥ E`, refined by bisection.
/// `None` when `V < E` everywhere on `[0, x_max]` or `V ≥ E` at `x_max`.
pub fn outer_turning_point(model: &PotentialModel, energy: f64, x_max: f64) -> Option<f64> {
    let xs = linspace(0.0, x_max, 60_001);
    let k = xs.iter().rposition(|&x| model.v(x) >= energy)?;
    if k + 1 == xs.len() {
        return None;
    }
    let (mut lo, mut hi) = (xs[k], xs[k + 1]);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if model.v(mid) >= energy {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Search radius for turning points.
fn turning_search_radius(model: &PotentialModel) -> f64 {
    model.x_box + 40.0 / model.decay_rate().max(0.1)
}

/// Dirichlet interval `L` and cutoff used for the cluster at `h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClusterGeometry {
    pub interval: f64,
    pub matching_point: f64,
    pub cutoff: Cutoff,
}

/// Interval from the config or the outer turning point of `energy`; cutoff
/// from the config or `width = min(default, (L - x_m)/2)`, `x_cut = L - width`.
pub fn cluster_geometry(
    model: &PotentialModel,
    h: f64,
    energy: f64,
    interval: Option<f64>,
    cutoff_x: Option<f64>,
    cutoff_width: Option<f64>,
) -> Result<ClusterGeometry, String> {
    let interval = match interval {
        Some(l) => l,
        None => outer_turning_point(model, energy, turning_search_radius(model))
            .ok_or_else(|| format!("no outer turning point V(x) = {energy}: the model has no barrier at this energy"))?,
    };
    let x_m = matching_point(model, energy, interval);
    let width = cutoff_width.unwrap_or_else(|| Cutoff::default_width(h).min(0.5 * (interval - x_m)));
    let x_cut = cutoff_x.unwrap_or(interval - width);
    let cutoff = Cutoff::new(x_cut, width).map_err(|e| e.to_string())?;
    if cutoff.end() > interval * (1.0 + 1e-12) {
        return Err(format!("cutoff end {} lies beyond the interval {interval}", cutoff.end()));
    }
    Ok(ClusterGeometry { interval, matching_point: x_m, cutoff })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MemberRecord {
    pub energy: f64,
    pub lambda: f64,
    pub accuracy: f64,
    pub cutoff_amplitude: f64,
}

/// Quasimode cluster at one `h`, or why none exists.
#[derive(Debug, Clone)]
pub enum ClusterOutcome {
    Built { geometry: ClusterGeometry, family: QuasimodeFamily, independence: IndependenceReport },
    Unmet(String),
}

impl ClusterOutcome {
    pub fn members(&self) -> Vec<MemberRecord> {
        match self {
            ClusterOutcome::Built { family, .. } => family
                .members
                .iter()
                .map(|q| MemberRecord {
                    energy: q.energy(),
                    lambda: q.lambda,
                    accuracy: q.accuracy,
                    cutoff_amplitude: q.cutoff_amplitude,
                })
                .collect(),
            ClusterOutcome::Unmet(_) => Vec::new(),
        }
    }
}

/// Builds the cluster of Dirichlet quasimodes with energies in the theorem
/// window. Failures of the quasimode hypotheses are `Unmet`; numerical
/// failures are errors.
pub fn cluster_at(cfg: &ExperimentConfig, model: &PotentialModel, h: f64) -> HarnessResult<ClusterOutcome> {
    let t = &cfg.theorem;
    let geometry = match cluster_geometry(model, h, t.target(), t.interval, t.cutoff_x, t.cutoff_width) {
        Ok(g) => g,
        Err(reason) => return Ok(ClusterOutcome::Unmet(reason)),
    };
    let opts = QuasimodeOptions {
        amplitude_limit: t.amplitude_limit,
        energy_window: Some((t.energy_window[0], t.energy_window[1])),
        ..Default::default()
    };
    let family = match build_cluster(model, geometry.interval, h, geometry.cutoff, &opts, t.max_modes, (t.n_exp, t.m_const)) {
        Ok(f) => f,
        Err(e @ (CoreError::BadCutoff { .. } | CoreError::Precondition(_) | CoreError::Domain(_))) => {
            return Ok(ClusterOutcome::Unmet(e.to_string()))
        }
        Err(e) => return Err(e.into()),
    };
    if family.members.is_empty() {
        return Ok(ClusterOutcome::Unmet(format!(
            "no Dirichlet energy on [0, {:.6}] inside [{}, {}]",
            geometry.interval, t.energy_window[0], t.energy_window[1]
        )));
    }
    let independence = independence_check(&family, h);
    if !independence.independent {
        return Ok(ClusterOutcome::Unmet(format!(
            "quasimodes not independent: margin {:.3e} <= {:.3e}",
            independence.margin, independence.threshold
        )));
    }
    Ok(ClusterOutcome::Built { geometry, family, independence })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TheoremStatus {
    Pass,
    HypothesesUnmet,
    ConclusionViolated,
    Error,
}

/// `[e_min, e_max] - i[0, depth]` in the energy plane `λ²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Strip {
    pub e_min: f64,
    pub e_max: f64,
    pub depth: f64,
}

impl Strip {
    /// `[a - c log(1/h), b + c log(1/h)] - i[0, c]`, scaled by `factor`.
    pub fn new(a: f64, b: f64, c: f64, h: f64, factor: f64) -> Self {
        let pad = factor * c * (1.0 / h).ln();
        Self { e_min: a - pad, e_max: b + pad, depth: factor * c }
    }

    pub fn contains(&self, lambda: Complex64) -> bool {
        let e = lambda * lambda;
        let slack = 1e-12 * e.norm().max(1.0);
        self.e_min <= e.re && e.re <= self.e_max && -self.depth - slack <= e.im && e.im <= slack
    }

    /// λ-rectangle holding every `λ` with `Re λ > 0` and `λ²` in the strip,
    /// the lower edge clipped above `floor`. Returns the rectangle and
    /// whether clipping occurred.
    pub fn lambda_rect(&self, top: f64, floor: f64) -> HarnessResult<(Rect, bool)> {
        let e_lo = self.e_min.max(1e-3 * self.e_max.abs().max(1e-3));
        let re_min = e_lo.sqrt();
        let re_max = (self.e_max + self.depth * self.depth / (4.0 * e_lo)).sqrt();
        let pad = 0.02 * (re_max - re_min).max(1e-6);
        let im_min = -self.depth / (2.0 * re_min) - pad;
        let clipped = im_min < floor;
        let rect = Rect::new((re_min - pad).max(1e-9), re_max + pad, im_min.max(floor), top)?;
        Ok((rect, clipped))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoremRecord {
    pub h: f64,
    pub status: TheoremStatus,
    pub reason: Option<String>,
    pub geometry: Option<ClusterGeometry>,
    pub members: Vec<MemberRecord>,
    /// Member energy nearest the target, as `λ(h) = sqrt(E)`.
    pub lambda: Option<f64>,
    /// `R(h)`, the largest member accuracy.
    pub accuracy: Option<f64>,
    /// `m(h)`, the number of members.
    pub m: usize,
    pub independence: Option<IndependenceReport>,
    pub exclusion_radius: Option<f64>,
    /// `h^{p+N+1} / (C log(1/h))`.
    pub gate_bound: Option<f64>,
    pub gate_met: Option<bool>,
    pub c: Option<f64>,
    pub strip: Option<Strip>,
    pub scan_rect: Option<[f64; 4]>,
    pub scan_clipped: bool,
    pub total_winding: Option<i64>,
    pub resonances: Vec<ResonanceRecord>,
    /// Resonances with multiplicity whose `λ²` lies in the strip.
    pub in_strip: usize,
    /// The same count for the strip enlarged by 10%.
    pub in_enlarged_strip: usize,
    pub nearest: Option<[f64; 2]>,
    pub distance: Option<f64>,
    pub pass: bool,
}

impl TheoremRecord {
    fn new(h: f64) -> Self {
        Self {
            h,
            status: TheoremStatus::Error,
            reason: None,
            geometry: None,
            members: Vec::new(),
            lambda: None,
            accuracy: None,
            m: 0,
            independence: None,
            exclusion_radius: None,
            gate_bound: None,
            gate_met: None,
            c: None,
            strip: None,
            scan_rect: None,
            scan_clipped: false,
            total_winding: None,
            resonances: Vec::new(),
            in_strip: 0,
            in_enlarged_strip: 0,
            nearest: None,
            distance: None,
            pass: false,
        }
    }

    fn finish(mut self, status: TheoremStatus, reason: Option<String>) -> Self {
        self.pass = matches!(status, TheoremStatus::Pass | TheoremStatus::HypothesesUnmet);
        self.status = status;
        self.reason = reason;
        self
    }
}

/// Fit of `log(-Im r(h))` against `1/h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit {
    pub points: usize,
    pub fit: LinearFit,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoremReport {
    pub model: String,
    pub energy_window: [f64; 2],
    pub p: Option<f64>,
    pub p_source: String,
    pub apriori: Option<AprioriReport>,
    pub records: Vec<TheoremRecord>,
    pub decay_fit: Option<DecayFit>,
    /// `|r(h) - λ(h)|` strictly decreasing along the passing records.
    pub distances_decreasing: Option<bool>,
    pub status: TheoremStatus,
    pub pass: bool,
}

/// Top edge of resonance scans, above the real axis.
fn scan_top(h: f64) -> f64 {
    0.25 * h
}

/// Rectangle used for the norm fit at `h`: the configured window when
/// present, otherwise the theorem energies with `Im λ ∈ [-γh/2, h/4]`.
pub fn fit_rect(cfg: &ExperimentConfig, model: &PotentialModel, h: f64) -> HarnessResult<Rect> {
    if cfg.window.is_some() {
        return cfg.window_rect(h, model.gamma);
    }
    let [a, b] = cfg.theorem.energy_window;
    Ok(Rect::new(a.max(1e-6).sqrt(), b.sqrt(), -0.5 * model.gamma * h, scan_top(h))?)
}

/// Norm scan and resonance scan of one fit rectangle.
pub struct FitData {
    pub h: f64,
    pub s: f64,
    pub norms: NormScan,
    pub resonances: ResonanceScan,
}

pub fn fit_data(
    cfg: &ExperimentConfig,
    model: &PotentialModel,
    h: f64,
    s: f64,
    rect: Rect,
    grid: [usize; 2],
) -> HarnessResult<FitData> {
    let tol = &cfg.tolerances;
    let resonances = scan_resonances_in(model, rect, h, &tol.solve(), &tol.scan(), None)?;
    let weight = cfg.weight(model)?;
    let exclusions: Vec<ExclusionDisk> = resonances
        .resonances
        .iter()
        .map(|r| r.lambda)
        .chain(resonances.spurious.iter().map(|z| z.lambda))
        .map(|center| ExclusionDisk { center, radius: s })
        .collect();
    let lambdas = rect_grid(&rect, grid[0], grid[1]);
    let norms = scan_norms(model, &lambdas, h, model.gamma, &weight, &exclusions, &tol.norm())?;
    Ok(FitData { h, s, norms, resonances })
}

pub fn apriori_fit(data: &[FitData], a_cap: f64, fixed: Option<(f64, f64)>) -> HarnessResult<AprioriReport> {
    let inputs: Vec<AprioriInput<'_>> =
        data.iter().map(|d| AprioriInput { scan: &d.norms, resonances: &d.resonances, s: d.s }).collect();
    let opts = AprioriOptions { a_cap, fixed, ..Default::default() };
    Ok(apriori_bound_check(&inputs, &opts)?)
}

/// Cluster, accuracy gate, `c(h)` and the strip count at every `h`.
pub fn theorem_check(cfg: &ExperimentConfig) -> HarnessResult<TheoremReport> {
    let model = cfg.model()?;
    let t = &cfg.theorem;
    let hs = cfg.hs();
    if hs.is_empty() {
        return Err(HarnessError::Config("theorem-check needs a nonempty `h_list`".into()));
    }
    let clusters: Vec<HarnessResult<ClusterOutcome>> = hs.par_iter().map(|&h| cluster_at(cfg, &model, h)).collect();

    let mut records: Vec<TheoremRecord> = Vec::with_capacity(hs.len());
    for (&h, outcome) in hs.iter().zip(&clusters) {
        let mut rec = TheoremRecord::new(h);
        match outcome {
            Err(e) => rec = rec.finish(TheoremStatus::Error, Some(e.to_string())),
            Ok(ClusterOutcome::Unmet(reason)) => rec = rec.finish(TheoremStatus::HypothesesUnmet, Some(reason.clone())),
            Ok(out @ ClusterOutcome::Built { geometry, family, independence }) => {
                let accuracy = family.members.iter().map(|q| q.accuracy).fold(0.0, f64::max);
                let target = t.target();
                let nearest = family
                    .members
                    .iter()
                    .min_by(|a, b| (a.energy() - target).abs().total_cmp(&(b.energy() - target).abs()))
                    .expect("nonempty cluster");
                rec.geometry = Some(*geometry);
                rec.members = out.members();
                rec.m = family.members.len();
                rec.lambda = Some(nearest.lambda);
                rec.accuracy = Some(accuracy);
                rec.independence = Some(*independence);
                rec.exclusion_radius = Some(cfg.exclusion.radius(accuracy, h));
                rec.status = TheoremStatus::Pass;
            }
        }
        records.push(rec);
    }

    // p: from the config, else the smallest feasible exponent of the a priori fit
    let built: Vec<usize> = (0..records.len()).filter(|&i| records[i].status == TheoremStatus::Pass).collect();
    let (p, p_source, apriori) = match t.p {
        Some(p) => (Some(p), "config".to_string(), None),
        None if built.is_empty() => (None, "none".to_string(), None),
        None => {
            let scans: Vec<(usize, HarnessResult<FitData>)> = built
                .par_iter()
                .map(|&i| {
                    let rec = &records[i];
                    let s = rec.exclusion_radius.expect("radius of a built cluster").min(0.5);
                    let data = fit_rect(cfg, &model, rec.h).and_then(|r| fit_data(cfg, &model, rec.h, s, r, t.norm_grid));
                    (i, data)
                })
                .collect();
            let mut data = Vec::new();
            for (i, d) in scans {
                match d {
                    Ok(d) => data.push(d),
                    Err(e) => {
                        let rec = std::mem::replace(&mut records[i], TheoremRecord::new(0.0));
                        records[i] = rec.finish(TheoremStatus::Error, Some(format!("norm fit: {e}")));
                    }
                }
            }
            if data.is_empty() {
                (None, "fit".to_string(), None)
            } else {
                let report = apriori_fit(&data, t.a_cap, None)?;
                let p = match report.status {
                    FitStatus::Fit => report.fit.map(|f| f.p),
                    FitStatus::NoFit => None,
                };
                (p, "fit".to_string(), Some(report))
            }
        }
    };

    let strip_results: Vec<(usize, TheoremRecord)> = records
        .par_iter()
        .enumerate()
        .filter(|(_, r)| r.status == TheoremStatus::Pass)
        .map(|(i, r)| (i, strip_stage(cfg, &model, r.clone(), p)))
        .collect();
    for (i, r) in strip_results {
        records[i] = r;
    }

    let passing: Vec<&TheoremRecord> = records.iter().filter(|r| r.status == TheoremStatus::Pass).collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = passing
        .iter()
        .filter_map(|r| r.nearest.and_then(|n| (n[1] < 0.0).then(|| (1.0 / r.h, (-n[1]).ln()))))
        .unzip();
    let decay_fit = linear_fit(&xs, &ys).ok().map(|fit| DecayFit { points: xs.len(), fit });
    let distances: Vec<f64> = passing.iter().filter_map(|r| r.distance).collect();
    let distances_decreasing = (distances.len() >= 2).then(|| distances.windows(2).all(|w| w[1] < w[0]));

    let status = if records.iter().any(|r| r.status == TheoremStatus::ConclusionViolated) {
        TheoremStatus::ConclusionViolated
    } else if records.iter().any(|r| r.status == TheoremStatus::Error) {
        TheoremStatus::Error
    } else if records.iter().any(|r| r.status == TheoremStatus::HypothesesUnmet) {
        TheoremStatus::HypothesesUnmet
    } else {
        TheoremStatus::Pass
    };
    Ok(TheoremReport {
        model: model.label.clone(),
        energy_window: t.energy_window,
        p,
        p_source,
        apriori,
        records,
        decay_fit,
        distances_decreasing,
        pass: matches!(status, TheoremStatus::Pass | TheoremStatus::HypothesesUnmet),
        status,
    })
}

/// Gate, `c(h)`, strip scan and count for a record with a built cluster.
fn strip_stage(cfg: &ExperimentConfig, model: &PotentialModel, mut rec: TheoremRecord, p: Option<f64>) -> TheoremRecord {
    let t = &cfg.theorem;
    let h = rec.h;
    let Some(p) = p else {
        return rec.finish(TheoremStatus::HypothesesUnmet, Some("no feasible a priori exponent p".into()));
    };
    if !(h < 1.0) {
        return rec.finish(TheoremStatus::HypothesesUnmet, Some(format!("accuracy gate needs h < 1, got {h}")));
    }
    let accuracy = rec.accuracy.expect("accuracy of a built cluster");
    let log_inv_h = (1.0 / h).ln();
    let order = p + t.n_exp + 1.0;
    let gate_bound = h.powf(order) / (t.gate_const * log_inv_h);
    rec.gate_bound = Some(gate_bound);
    rec.gate_met = Some(accuracy <= gate_bound);
    if accuracy > gate_bound {
        return rec.finish(
            TheoremStatus::HypothesesUnmet,
            Some(format!("accuracy gate: R = {accuracy:.3e} > {gate_bound:.3e}")),
        );
    }
    let c = (t.c0 * t.b_const * t.m_const * accuracy * h.powf(-order)).max((-t.b_const / h).exp());
    rec.c = Some(c);
    let [a, b] = t.energy_window;
    let strip = Strip::new(a, b, c, h, 1.0);
    let enlarged = Strip::new(a, b, c, h, 1.1);
    rec.strip = Some(strip);
    let floor = -(model.gamma * h) * 0.95;
    let (rect, clipped) = match enlarged.lambda_rect(scan_top(h), floor) {
        Ok(r) => r,
        Err(e) => return rec.finish(TheoremStatus::Error, Some(e.to_string())),
    };
    rec.scan_rect = Some([rect.re_min, rect.re_max, rect.im_min, rect.im_max]);
    rec.scan_clipped = clipped;
    let tol = &cfg.tolerances;
    let scan = match scan_resonances_in(model, rect, h, &tol.solve(), &tol.scan(), None) {
        Ok(s) => s,
        Err(e) => return rec.finish(TheoremStatus::Error, Some(format!("strip scan: {e}"))),
    };
    rec.total_winding = Some(scan.total_winding);
    rec.resonances = scan.resonances.iter().map(|r| r.to_record()).collect();
    let count = |s: &Strip| scan.resonances.iter().filter(|r| s.contains(r.lambda)).map(|r| r.multiplicity).sum();
    rec.in_strip = count(&strip);
    rec.in_enlarged_strip = count(&enlarged);
    let lambda = rec.lambda.expect("lambda of a built cluster");
    if let Some(r) = scan
        .resonances
        .iter()
        .min_by(|x, y| (x.lambda - lambda).norm().total_cmp(&(y.lambda - lambda).norm()))
    {
        rec.nearest = Some([r.lambda.re, r.lambda.im]);
        rec.distance = Some((r.lambda - lambda).norm());
    }
    if rec.in_strip >= rec.m {
        rec.finish(TheoremStatus::Pass, None)
    } else {
        let reason = format!("{} resonances in the strip, need m = {}", rec.in_strip, rec.m);
        rec.finish(TheoremStatus::ConclusionViolated, Some(reason))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepStatus {
    Ok,
    MissingResonance,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdsRecord {
    pub ell: f64,
    pub h: f64,
    pub status: SweepStatus,
    pub reason: Option<String>,
    pub interval: Option<f64>,
    pub dirichlet_energy: Option<f64>,
    pub quasimode_lambda: Option<f64>,
    pub scan_rect: Option<[f64; 4]>,
    pub resonance: Option<[f64; 2]>,
    pub multiplicity: Option<usize>,
    /// `-Im λ / h = -Im σ`.
    pub width: Option<f64>,
    /// `-Im λ / h²`.
    pub width_h2: Option<f64>,
    /// Winding count on the circle of radius `|Im r|/2` about `r`.
    pub off_axis_winding: Option<i64>,
    pub off_axis: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdsReport {
    pub model: String,
    pub target_energy: f64,
    pub records: Vec<AdsRecord>,
    /// `log width` against `ℓ`.
    pub fit: Option<LinearFit>,
    /// Least `C` with `width_ℓ < C e^{-ℓ/C}` for every ℓ.
    pub c_min: Option<f64>,
    pub all_positive: bool,
    pub pass: bool,
}

/// Dirichlet energy nearest `target` on `[0, L]` and its neighbours' gap in λ.
fn nearest_dirichlet(model: &PotentialModel, interval: f64, h: f64, target: f64) -> HarnessResult<(f64, f64)> {
    let mut count = 8usize;
    loop {
        let modes = dirichlet_eigensolve(model, interval, h, count, None)?;
        let n_max = modes.first().map(|m| m.xs.len()).unwrap_or(0);
        if modes.last().map(|m| m.energy > target).unwrap_or(false) || count >= n_max {
            let energies: Vec<f64> = modes.iter().map(|m| m.energy).collect();
            let k = (0..energies.len())
                .min_by(|&i, &j| (energies[i] - target).abs().total_cmp(&(energies[j] - target).abs()))
                .ok_or_else(|| HarnessError::Internal("empty Dirichlet spectrum".into()))?;
            let e = refine_dirichlet_energy(model, interval, h, energies[k], 0.5e-2 * energies[k].abs().max(1.0))?;
            let lam = |x: f64| x.max(0.0).sqrt();
            let mut gap = f64::INFINITY;
            if k > 0 {
                gap = gap.min(lam(e) - lam(energies[k - 1]));
            }
            if k + 1 < energies.len() {
                gap = gap.min(lam(energies[k + 1]) - lam(e));
            }
            return Ok((e, gap));
        }
        count = (2 * count).min(n_max);
    }
}

fn ads_record(cfg: &ExperimentConfig, ell: f64) -> AdsRecord {
    let h = 1.0 / ell;
    let mut rec = AdsRecord {
        ell,
        h,
        status: SweepStatus::Error,
        reason: None,
        interval: None,
        dirichlet_energy: None,
        quasimode_lambda: None,
        scan_rect: None,
        resonance: None,
        multiplicity: None,
        width: None,
        width_h2: None,
        off_axis_winding: None,
        off_axis: false,
    };
    match ads_record_inner(cfg, &mut rec) {
        Ok(()) => rec,
        Err(e) => {
            rec.status = SweepStatus::Error;
            rec.reason = Some(e.to_string());
            rec
        }
    }
}

fn ads_record_inner(cfg: &ExperimentConfig, rec: &mut AdsRecord) -> HarnessResult<()> {
    let model = cfg.model_for_ell(rec.ell)?;
    let h = rec.h;
    let target = cfg.ads.target_energy;
    let interval = match cfg.ads.interval {
        Some(l) => l,
        None => outer_turning_point(&model, target, turning_search_radius(&model)).ok_or_else(|| {
            HarnessError::Internal(format!("no turning point of {} at energy {target}", model.label))
        })?,
    };
    rec.interval = Some(interval);
    let (energy, gap) = nearest_dirichlet(&model, interval, h, target)?;
    rec.dirichlet_energy = Some(energy);
    let lq = energy.sqrt();
    rec.quasimode_lambda = Some(lq);
    let half = (0.25 * gap).min(0.1 * lq);
    let rect = Rect::new(lq - half, lq + half, -0.5 * model.gamma * h, scan_top(h))?;
    rec.scan_rect = Some([rect.re_min, rect.re_max, rect.im_min, rect.im_max]);
    let tol = &cfg.tolerances;
    let scan = scan_resonances_in(&model, rect, h, &tol.solve(), &tol.scan(), None)?;
    let Some(r) = scan.resonances.iter().min_by(|a, b| (a.lambda - lq).norm().total_cmp(&(b.lambda - lq).norm())) else {
        rec.status = SweepStatus::MissingResonance;
        rec.reason = Some(format!("no resonance in [{:.6}, {:.6}] + i[{:.3e}, {:.3e}]", rect.re_min, rect.re_max, rect.im_min, rect.im_max));
        return Ok(());
    };
    rec.resonance = Some([r.lambda.re, r.lambda.im]);
    rec.multiplicity = Some(r.multiplicity);
    rec.width = Some(-r.lambda.im / h);
    rec.width_h2 = Some(-r.lambda.im / (h * h));
    if r.lambda.im < 0.0 {
        let radius = 0.5 * r.lambda.im.abs();
        let handle = wronskian_handle(&model, h, &tol.solve());
        let circle = ContourShape::Circle(Circle::new(r.lambda, radius)?);
        let w = winding_count_shape(&handle, circle, 1e-6 * radius)?;
        rec.off_axis_winding = Some(w);
        rec.off_axis = w == r.multiplicity as i64;
    }
    rec.status = SweepStatus::Ok;
    Ok(())
}

/// Smallest `C` (to relative precision 1e-12) with `w_ℓ < C e^{-ℓ/C}` for all pairs.
pub fn smallest_c(points: &[(f64, f64)]) -> Option<f64> {
    if points.is_empty() || points.iter().any(|&(_, w)| !(w > 0.0)) {
        return None;
    }
    let g = |c: f64| points.iter().map(|&(l, w)| c.ln() - l / c - w.ln()).fold(f64::INFINITY, f64::min);
    let (mut lo, mut hi) = (1e-6f64, 1.0f64);
    while g(hi) <= 0.0 {
        hi *= 2.0;
        if hi > 1e300 {
            return None;
        }
    }
    if g(lo) > 0.0 {
        return Some(lo);
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if mid <= lo || mid >= hi || hi / lo - 1.0 < 1e-12 {
            break;
        }
        if g(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

pub fn ads_sweep(cfg: &ExperimentConfig) -> HarnessResult<AdsReport> {
    if cfg.ell_list.len() < 4 {
        return Err(HarnessError::Config(format!("ads-sweep needs at least 4 entries in `ell_list`, got {}", cfg.ell_list.len())));
    }
    let records: Vec<AdsRecord> = cfg.ell_list.par_iter().map(|&ell| ads_record(cfg, ell)).collect();
    let ok: Vec<(f64, f64)> = records.iter().filter_map(|r| r.width.map(|w| (r.ell, w))).collect();
    let all_positive = records.iter().all(|r| r.status == SweepStatus::Ok && r.width.map(|w| w > 0.0).unwrap_or(false) && r.off_axis);
    let fit = if ok.iter().all(|&(_, w)| w > 0.0) {
        let (ls, lw): (Vec<f64>, Vec<f64>) = ok.iter().map(|&(l, w)| (l, w.ln())).unzip();
        linear_fit(&ls, &lw).ok()
    } else {
        None
    };
    let c_min = smallest_c(&ok);
    let pass = all_positive && fit.map(|f| f.slope < 0.0).unwrap_or(false);
    Ok(AdsReport {
        model: cfg.model.name.clone(),
        target_energy: cfg.ads.target_energy,
        records,
        fit,
        c_min,
        all_positive,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use reslab_core::model::builtin_model;

    #[test]
    fn turning_point_of_the_barrier() {
        let m = builtin_model("gauss_barrier", &[2.0, 2.0, 0.5]).unwrap();
        // 2 exp(-(x-2)²/0.25) = 1
        let exact = 2.0 + 0.5 * 2f64.ln().sqrt();
        assert!((outer_turning_point(&m, 1.0, 20.0).unwrap() - exact).abs() < 1e-12);
        assert!(outer_turning_point(&m, 3.0, 20.0).is_none());
        let free = builtin_model("free", &[]).unwrap();
        assert!(outer_turning_point(&free, 1.0, 20.0).is_none());
    }

    #[test]
    fn strip_membership_and_rectangle() {
        let s = Strip::new(0.9, 1.1, 0.01, 0.1, 1.0);
        let pad = 0.01 * 10f64.ln();
        assert!((s.e_min - (0.9 - pad)).abs() < 1e-15 && (s.e_max - (1.1 + pad)).abs() < 1e-15);
        assert!(s.contains(Complex64::new(1.0, -1e-3)));
        assert!(!s.contains(Complex64::new(1.0, -0.01)));
        assert!(!s.contains(Complex64::new(1.0, 1e-3)));
        let (rect, clipped) = s.lambda_rect(0.025, -0.095).unwrap();
        assert!(!clipped);
        // every λ with λ² in the strip lies in the rectangle
        for k in 0..=40 {
            for j in 0..=10 {
                let e = Complex64::new(s.e_min + (s.e_max - s.e_min) * k as f64 / 40.0, -s.depth * j as f64 / 10.0);
                assert!(rect.contains(e.sqrt()), "{e}");
            }
        }
    }

    #[test]
    fn smallest_c_is_tight() {
        let pts: Vec<(f64, f64)> = (4..=12).map(|l| (l as f64, 3.0 * (-(l as f64) / 3.0).exp() * 0.5)).collect();
        let c = smallest_c(&pts).unwrap();
        assert!(pts.iter().all(|&(l, w)| w < c * (-l / c).exp()));
        let c2 = c * (1.0 - 1e-9);
        assert!(pts.iter().any(|&(l, w)| w >= c2 * (-l / c2).exp()));
        assert!(c < 3.0);
        assert!(smallest_c(&[(4.0, 0.0)]).is_none());
    }
}
