//! Subcommands: run a pipeline, write its JSON and CSV files, then the manifest.

use rayon::prelude::*;
use reslab_core::complex_utils::Rect;
use reslab_core::continuation::{check_strip, sigma_of};
use reslab_core::linalg::linspace;
use reslab_core::model::{validate_decay, DecayReport, PotentialModel, Term};
use reslab_core::resolvent_norm::norm_grid;
use reslab_core::resonance_search::{scan_resonances_in, ResonanceRecord};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, HarnessResult};
use crate::output::{Cell, OutputDir};
use crate::pipeline::{
    ads_sweep, cluster_at, fit_rect, theorem_check, ClusterOutcome, MemberRecord, SweepStatus, TheoremStatus,
};
use crate::suites::run_bounds;

/// Run-wide settings shared by every subcommand.
#[derive(Debug, Clone, Copy)]
pub struct RunSettings {
    pub seed: u64,
    pub threads: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Validate,
    Scan,
    Quasimode,
    TheoremCheck,
    AdsSweep,
    Bounds,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Scan => "scan",
            Command::Quasimode => "quasimode",
            Command::TheoremCheck => "theorem-check",
            Command::AdsSweep => "ads-sweep",
            Command::Bounds => "bounds",
        }
    }
}

/// Runs `command`, writes its files under `out` and returns the pass flag.
pub fn run(command: Command, cfg: &ExperimentConfig, out: &OutputDir, settings: RunSettings) -> HarnessResult<bool> {
    let result = match command {
        Command::Validate => cmd_validate(cfg, out),
        Command::Scan => cmd_scan(cfg, out),
        Command::Quasimode => cmd_quasimode(cfg, out),
        Command::TheoremCheck => cmd_theorem_check(cfg, out),
        Command::AdsSweep => cmd_ads_sweep(cfg, out),
        Command::Bounds => cmd_bounds(cfg, out, settings.seed),
    };
    let pass = matches!(result, Ok(true));
    out.finish(command.name(), settings.seed, settings.threads, cfg, pass)?;
    result
}

/// `(h, model)` pairs of the run: `h_list` with the configured model, or
/// `h = 1/ℓ` with `ads_like(ℓ)`.
fn runs(cfg: &ExperimentConfig) -> HarnessResult<Vec<(f64, Option<f64>, PotentialModel)>> {
    if cfg.ell_list.is_empty() {
        let model = cfg.model()?;
        Ok(cfg.h_list.iter().map(|&h| (h, None, model.clone())).collect())
    } else {
        cfg.ell_list.iter().map(|&l| Ok((1.0 / l, Some(l), cfg.model_for_ell(l)?))).collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct WeightCheck {
    pub x_box: f64,
    pub x_linear: f64,
    pub ok: bool,
    pub reason: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResolutionCheck {
    pub h: f64,
    pub ell: Option<f64>,
    pub rect: Option<[f64; 4]>,
    /// Largest norm grid over the rectangle corners.
    pub grid_points: Option<usize>,
    pub ok: bool,
    pub reason: Option<String>,
}

/// Least-squares tail rate of `|V|` against the declared `2γ + δ`.
#[derive(Debug, Clone, Serialize)]
pub struct TailCheck {
    pub grid: [f64; 2],
    pub declared_rate: f64,
    pub fitted_rate: Option<f64>,
    pub ok: bool,
    pub reason: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidateReport {
    pub model: String,
    pub decay_grid: [f64; 2],
    pub decay: Option<DecayReport>,
    pub decay_error: Option<String>,
    pub tail: TailCheck,
    pub weight: WeightCheck,
    pub resolution: Vec<ResolutionCheck>,
    pub pass: bool,
}

fn weight_check(cfg: &ExperimentConfig, model: &PotentialModel) -> WeightCheck {
    let w = match cfg.weight(model) {
        Ok(w) => w,
        Err(e) => return WeightCheck { x_box: f64::NAN, x_linear: f64::NAN, ok: false, reason: Some(e.to_string()) },
    };
    let xs = linspace(0.0, w.x_linear + 2.0, 4001);
    let mut reason = None;
    for pair in xs.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let (pa, pb) = (w.eval(a), w.eval(b));
        if pb < pa {
            reason = Some(format!("phi decreases between {a} and {b}"));
        } else if a <= w.x_box && pa != 0.0 {
            reason = Some(format!("phi({a}) = {pa} inside the box"));
        } else if a >= w.x_linear && (pa - a).abs() > 1e-12 * a.max(1.0) {
            reason = Some(format!("phi({a}) = {pa} differs from x beyond x_linear"));
        }
        if reason.is_some() {
            break;
        }
    }
    WeightCheck { x_box: w.x_box, x_linear: w.x_linear, ok: reason.is_none(), reason }
}

/// Rectangle whose corners must be resolvable at `h`.
fn resolution_rect(cfg: &ExperimentConfig, model: &PotentialModel, h: f64) -> HarnessResult<Rect> {
    if cfg.window.is_some() {
        cfg.window_rect(h, model.gamma)
    } else {
        fit_rect(cfg, model, h)
    }
}

fn resolution_check(cfg: &ExperimentConfig, model: &PotentialModel, h: f64, ell: Option<f64>) -> ResolutionCheck {
    let mut rec = ResolutionCheck { h, ell, rect: None, grid_points: None, ok: false, reason: None };
    let run = || -> HarnessResult<(Rect, usize)> {
        let rect = resolution_rect(cfg, model, h)?;
        let weight = cfg.weight(model)?;
        let opts = cfg.tolerances.norm();
        let mut points = 0usize;
        for z in rect.corners() {
            check_strip(model, sigma_of(z, h)?, 0.0)?;
            points = points.max(norm_grid(model, z, h, model.gamma, &weight, &opts)?.len());
        }
        Ok((rect, points))
    };
    match run() {
        Ok((rect, points)) => {
            rec.rect = Some([rect.re_min, rect.re_max, rect.im_min, rect.im_max]);
            rec.grid_points = Some(points);
            rec.ok = true;
        }
        Err(e) => rec.reason = Some(e.to_string()),
    }
    rec
}

/// Abscissa past which every term of the model is in its exponential tail.
fn feature_extent(model: &PotentialModel) -> f64 {
    model
        .potential
        .iter()
        .chain(&model.a_terms)
        .map(|t| match *t {
            Term::Well { width, .. } => width,
            Term::Gaussian { center, width, .. } => center + 4.0 * width.abs(),
            Term::Exponential { .. } | Term::Algebraic { .. } => 0.0,
        })
        .fold(model.x_box, f64::max)
}

/// Relative shortfall of the fitted tail rate tolerated against `2γ + δ`.
const TAIL_RATE_SLACK: f64 = 1e-6;

fn tail_check(model: &PotentialModel, h: f64) -> TailCheck {
    let rate = model.decay_rate();
    let start = feature_extent(model);
    let grid = [start, start + 6.0 / rate];
    let mut check = TailCheck { grid, declared_rate: rate, fitted_rate: None, ok: false, reason: None };
    match validate_decay(model, &linspace(grid[0], grid[1], 400), h) {
        Ok(d) => {
            check.fitted_rate = d.fitted_rate;
            check.ok = d.fitted_rate.is_none_or(|r| r >= rate * (1.0 - TAIL_RATE_SLACK));
            if !check.ok {
                check.reason = d
                    .fitted_rate
                    .map(|r| format!("fitted tail rate {r:.6} is below the declared 2 gamma + delta = {rate:.6}"));
            }
        }
        Err(e) => check.reason = Some(e.to_string()),
    }
    check
}

pub fn validate_report(cfg: &ExperimentConfig) -> HarnessResult<ValidateReport> {
    let runs = runs(cfg)?;
    let model = match runs.first() {
        Some((_, _, m)) => m.clone(),
        None => cfg.model()?,
    };
    let h = runs.first().map(|r| r.0).unwrap_or(1.0);
    let rate = model.decay_rate();
    let decay_grid = [model.x_box, feature_extent(&model) + 6.0 / rate];
    let (decay, decay_error) = match validate_decay(&model, &linspace(decay_grid[0], decay_grid[1], 400), h) {
        Ok(d) => (Some(d), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let tail = tail_check(&model, h);
    let weight = weight_check(cfg, &model);
    let resolution: Vec<ResolutionCheck> = runs.iter().map(|(h, ell, m)| resolution_check(cfg, m, *h, *ell)).collect();
    let pass =
        decay.as_ref().map(|d| d.passes).unwrap_or(false) && tail.ok && weight.ok && resolution.iter().all(|r| r.ok);
    Ok(ValidateReport { model: model.label.clone(), decay_grid, decay, decay_error, tail, weight, resolution, pass })
}

fn cmd_validate(cfg: &ExperimentConfig, out: &OutputDir) -> HarnessResult<bool> {
    let report = validate_report(cfg)?;
    out.write_json("validate.json", &report)?;
    Ok(report.pass)
}

#[derive(Debug, Clone, Serialize)]
pub struct ScanEntry {
    pub h: f64,
    pub ell: Option<f64>,
    pub model: String,
    pub rect: Option<[f64; 4]>,
    pub total_winding: Option<i64>,
    /// Listed multiplicities, spurious zeros included, equal the winding.
    pub winding_consistent: bool,
    pub resonances: Vec<ResonanceRecord>,
    pub spurious: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScanReport {
    pub entries: Vec<ScanEntry>,
    pub pass: bool,
}

pub fn scan_report(cfg: &ExperimentConfig) -> HarnessResult<ScanReport> {
    let runs = runs(cfg)?;
    if runs.is_empty() {
        return Err(HarnessError::Config("scan needs a nonempty `h_list` or `ell_list`".into()));
    }
    if cfg.window.is_none() {
        return Err(HarnessError::Config("scan needs a `window`".into()));
    }
    let tol = cfg.tolerances;
    let entries: Vec<ScanEntry> = runs
        .par_iter()
        .map(|(h, ell, model)| {
            let mut entry = ScanEntry {
                h: *h,
                ell: *ell,
                model: model.label.clone(),
                rect: None,
                total_winding: None,
                winding_consistent: false,
                resonances: Vec::new(),
                spurious: 0,
                error: None,
            };
            let result = cfg.window_rect(*h, model.gamma).and_then(|rect| {
                entry.rect = Some([rect.re_min, rect.re_max, rect.im_min, rect.im_max]);
                let window = cfg.frequency_window(*h, model.gamma)?;
                Ok(scan_resonances_in(model, rect, *h, &tol.solve(), &tol.scan(), Some(&window))?)
            });
            match result {
                Ok(scan) => {
                    let listed: i64 = scan.resonances.iter().map(|r| r.multiplicity as i64).sum::<i64>()
                        + scan.spurious.iter().map(|z| z.multiplicity as i64).sum::<i64>();
                    entry.total_winding = Some(scan.total_winding);
                    entry.winding_consistent = listed == scan.total_winding;
                    entry.resonances = scan.resonances.iter().map(|r| r.to_record()).collect();
                    entry.spurious = scan.spurious.len();
                }
                Err(e) => entry.error = Some(e.to_string()),
            }
            entry
        })
        .collect();
    let pass = entries.iter().all(|e| e.error.is_none() && e.winding_consistent);
    Ok(ScanReport { entries, pass })
}

fn cmd_scan(cfg: &ExperimentConfig, out: &OutputDir) -> HarnessResult<bool> {
    let report = scan_report(cfg)?;
    out.write_json("resonances.json", &report)?;
    let rows: Vec<Vec<Cell>> = report
        .entries
        .iter()
        .flat_map(|e| {
            e.resonances.iter().map(move |r| {
                vec![Cell::Num(e.h), Cell::Num(e.ell.unwrap_or(f64::NAN)), Cell::Num(r.re), Cell::Num(r.im), Cell::Int(r.multiplicity as i64)]
            })
        })
        .collect();
    out.write_csv("resonances.csv", &["h", "ell", "re", "im", "multiplicity"], &rows)?;
    Ok(report.pass)
}

#[derive(Debug, Clone, Serialize)]
pub struct QuasimodeEntry {
    pub h: f64,
    pub status: String,
    pub reason: Option<String>,
    pub interval: Option<f64>,
    pub x_cut: Option<f64>,
    pub cutoff_width: Option<f64>,
    pub members: Vec<MemberRecord>,
    pub independence_margin: Option<f64>,
    pub independence_threshold: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct QuasimodeReport {
    pub model: String,
    pub energy_window: [f64; 2],
    pub entries: Vec<QuasimodeEntry>,
}

/// Profile samples written per quasimode.
const PROFILE_POINTS: usize = 400;

fn cmd_quasimode(cfg: &ExperimentConfig, out: &OutputDir) -> HarnessResult<bool> {
    let model = cfg.model()?;
    let hs = cfg.hs();
    if hs.is_empty() {
        return Err(HarnessError::Config("quasimode needs a nonempty `h_list`".into()));
    }
    let outcomes = hs.par_iter().map(|&h| cluster_at(cfg, &model, h)).collect::<HarnessResult<Vec<_>>>()?;
    let mut entries = Vec::new();
    let mut profile = Vec::new();
    for (&h, outcome) in hs.iter().zip(&outcomes) {
        let mut entry = QuasimodeEntry {
            h,
            status: "built".into(),
            reason: None,
            interval: None,
            x_cut: None,
            cutoff_width: None,
            members: outcome.members(),
            independence_margin: None,
            independence_threshold: None,
        };
        match outcome {
            ClusterOutcome::Unmet(reason) => {
                entry.status = "hypotheses_unmet".into();
                entry.reason = Some(reason.clone());
            }
            ClusterOutcome::Built { geometry, family, independence } => {
                entry.interval = Some(geometry.interval);
                entry.x_cut = Some(geometry.cutoff.x_cut);
                entry.cutoff_width = Some(geometry.cutoff.width);
                entry.independence_margin = Some(independence.margin);
                entry.independence_threshold = Some(independence.threshold);
                for (k, q) in family.members.iter().enumerate() {
                    let stride = (q.xs.len() / PROFILE_POINTS).max(1);
                    for j in (0..q.xs.len()).step_by(stride) {
                        profile.push(vec![Cell::Num(h), Cell::Int(k as i64), Cell::Num(q.xs[j]), Cell::Num(q.u[j]), Cell::Num(q.residual[j])]);
                    }
                }
            }
        }
        entries.push(entry);
    }
    let summary: Vec<Vec<Cell>> = entries
        .iter()
        .flat_map(|e| {
            e.members.iter().map(move |m| {
                vec![Cell::Num(e.h), Cell::Num(m.energy), Cell::Num(m.lambda), Cell::Num(m.accuracy), Cell::Num(m.cutoff_amplitude)]
            })
        })
        .collect();
    let report = QuasimodeReport { model: model.label.clone(), energy_window: cfg.theorem.energy_window, entries };
    out.write_json("quasimodes.json", &report)?;
    out.write_csv("quasimodes.csv", &["h", "energy", "lambda", "accuracy", "cutoff_amplitude"], &summary)?;
    out.write_csv("quasimode_profiles.csv", &["h", "member", "x", "u", "residual"], &profile)?;
    Ok(true)
}

fn cmd_theorem_check(cfg: &ExperimentConfig, out: &OutputDir) -> HarnessResult<bool> {
    let report = theorem_check(cfg)?;
    out.write_json("theorem.json", &report)?;
    let opt = |v: Option<f64>| Cell::Num(v.unwrap_or(f64::NAN));
    let rows: Vec<Vec<Cell>> = report
        .records
        .iter()
        .map(|r| {
            vec![
                Cell::Num(r.h),
                Cell::Text(serde_json::to_value(r.status).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()),
                opt(r.lambda),
                opt(r.accuracy),
                opt(r.c),
                Cell::Int(r.m as i64),
                Cell::Int(r.in_strip as i64),
                opt(r.nearest.map(|n| n[0])),
                opt(r.nearest.map(|n| n[1])),
                opt(r.distance),
            ]
        })
        .collect();
    out.write_csv(
        "theorem.csv",
        &["h", "status", "lambda", "accuracy", "c", "m", "in_strip", "re_r", "im_r", "distance"],
        &rows,
    )?;
    if report.status == TheoremStatus::Error {
        let reasons: Vec<String> = report
            .records
            .iter()
            .filter(|r| r.status == TheoremStatus::Error)
            .map(|r| format!("h = {}: {}", r.h, r.reason.clone().unwrap_or_default()))
            .collect();
        return Err(HarnessError::Internal(reasons.join("; ")));
    }
    Ok(report.pass)
}

fn cmd_ads_sweep(cfg: &ExperimentConfig, out: &OutputDir) -> HarnessResult<bool> {
    let report = ads_sweep(cfg)?;
    out.write_json("ads_sweep.json", &report)?;
    let opt = |v: Option<f64>| Cell::Num(v.unwrap_or(f64::NAN));
    let rows: Vec<Vec<Cell>> = report
        .records
        .iter()
        .map(|r| {
            let status = match r.status {
                SweepStatus::Ok => "ok",
                SweepStatus::MissingResonance => "missing_resonance",
                SweepStatus::Error => "error",
            };
            vec![
                Cell::Num(r.ell),
                Cell::Num(r.h),
                Cell::Text(status.into()),
                opt(r.quasimode_lambda),
                opt(r.resonance.map(|z| z[0])),
                opt(r.resonance.map(|z| z[1])),
                opt(r.width),
                opt(r.width_h2),
            ]
        })
        .collect();
    out.write_csv("ads_sweep.csv", &["ell", "h", "status", "quasimode_lambda", "re", "im", "width", "width_h2"], &rows)?;
    Ok(report.pass)
}

fn cmd_bounds(cfg: &ExperimentConfig, out: &OutputDir, seed: u64) -> HarnessResult<bool> {
    let report = run_bounds(cfg, seed)?;
    out.write_json("bounds.json", &report)?;
    let rows: Vec<Vec<Cell>> = report
        .suites
        .iter()
        .map(|s| {
            let status = serde_json::to_value(s.status).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
            vec![Cell::Text(s.name.clone()), Cell::Text(status), Cell::Int(s.pass as i64), Cell::Num(s.seconds)]
        })
        .collect();
    out.write_csv("bounds.csv", &["suite", "status", "pass", "seconds"], &rows)?;
    Ok(report.pass)
}
