//! TOML experiment configuration.

use std::path::{Path, PathBuf};

use reslab_core::complex_utils::Rect;
use reslab_core::model::{make_weight, FrequencyWindow, ModelSpec, PotentialModel, WeightFunction};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, HarnessResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    #[serde(default)]
    pub window: Option<WindowSpec>,
    /// Semiclassical parameters, strictly decreasing.
    #[serde(default)]
    pub h_list: Vec<f64>,
    /// Angular momenta of the `ads_like` family; `h = 1/ℓ`.
    #[serde(default)]
    pub ell_list: Vec<f64>,
    /// Weight exponent and continuation depth; overrides the model default.
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub weight: Option<WeightSpec>,
    #[serde(default)]
    pub exclusion: ExclusionRule,
    #[serde(default)]
    pub theorem: TheoremParams,
    #[serde(default)]
    pub ads: AdsParams,
    #[serde(default)]
    pub bounds: BoundsParams,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

/// `(a0 + eps, b0 - eps) + i((-γ + eps0 + eps) h, im_max)` in the λ-plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSpec {
    pub a0: f64,
    pub b0: f64,
    pub eps0: f64,
    #[serde(default)]
    pub eps: f64,
    #[serde(default = "default_im_max")]
    pub im_max: f64,
}

fn default_im_max() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightSpec {
    pub x_box: f64,
    pub x_linear: f64,
}

/// Exclusion radius `S(h)` around resonances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExclusionRule {
    /// `S(h) = max(R(h) h^{-power}, floor)`.
    Accuracy {
        #[serde(default = "default_power")]
        power: f64,
        #[serde(default = "default_floor")]
        floor: f64,
    },
    Fixed { value: f64 },
}

fn default_power() -> f64 {
    2.0
}

fn default_floor() -> f64 {
    1e-10
}

impl Default for ExclusionRule {
    fn default() -> Self {
        ExclusionRule::Accuracy { power: default_power(), floor: default_floor() }
    }
}

impl ExclusionRule {
    pub fn radius(&self, accuracy: f64, h: f64) -> f64 {
        match *self {
            ExclusionRule::Accuracy { power, floor } => (accuracy * h.powf(-power)).max(floor),
            ExclusionRule::Fixed { value } => value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TheoremParams {
    /// `[a(h), b(h)]`, the energies `λ²` of the quasimode cluster.
    pub energy_window: [f64; 2],
    /// Energy fixing the Dirichlet interval; defaults to the window midpoint.
    pub target_energy: Option<f64>,
    /// Dirichlet interval `[0, L]`; defaults to the outer turning point of the target energy.
    pub interval: Option<f64>,
    pub cutoff_x: Option<f64>,
    pub cutoff_width: Option<f64>,
    pub amplitude_limit: f64,
    pub max_modes: usize,
    /// `N` in the independence radius `h^N / M`.
    pub n_exp: f64,
    /// `M` in the independence radius and in `c(h)`.
    pub m_const: f64,
    pub b_const: f64,
    pub c0: f64,
    /// `C` in the accuracy gate `R(h) <= h^{p+N+1} / (C log(1/h))`.
    pub gate_const: f64,
    /// Fixed `p`; fitted from weighted resolvent norms when absent.
    pub p: Option<f64>,
    /// Norm-scan points along `Re λ` and `Im λ` for the fit.
    pub norm_grid: [usize; 2],
    pub a_cap: f64,
}

impl Default for TheoremParams {
    fn default() -> Self {
        Self {
            energy_window: [0.9, 1.1],
            target_energy: None,
            interval: None,
            cutoff_x: None,
            cutoff_width: None,
            amplitude_limit: 5e-2,
            max_modes: 4,
            n_exp: 0.0,
            m_const: 10.0,
            b_const: 1.0,
            c0: 1.0,
            gate_const: 1.0,
            p: None,
            norm_grid: [5, 3],
            a_cap: 100.0,
        }
    }
}

impl TheoremParams {
    pub fn target(&self) -> f64 {
        self.target_energy.unwrap_or(0.5 * (self.energy_window[0] + self.energy_window[1]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdsParams {
    pub target_energy: f64,
    /// Dirichlet interval; defaults to the outer turning point of the target energy.
    pub interval: Option<f64>,
}

impl Default for AdsParams {
    fn default() -> Self {
        Self { target_energy: 1.0, interval: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundsParams {
    pub reflection_samples: usize,
    /// `|σ|` values for the free-resolvent scaling fits.
    pub sigma_list: Vec<f64>,
    pub m_decay_eps: f64,
    pub property_cases: usize,
    pub jensen_cases: usize,
    pub blaschke_points: usize,
    /// Fixed exclusion radius for the a priori shape check.
    pub s: f64,
    pub norm_grid: [usize; 2],
    pub upper_half_plane_samples: usize,
}

impl Default for BoundsParams {
    fn default() -> Self {
        Self {
            reflection_samples: 1000,
            sigma_list: (0..=6).map(|k| 2f64.powi(k)).collect(),
            m_decay_eps: 0.1,
            property_cases: 200,
            jensen_cases: 100,
            blaschke_points: 500,
            s: 0.05,
            norm_grid: [5, 3],
            upper_half_plane_samples: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub ode_rtol: f64,
    pub newton_tol: f64,
    pub boundary_tol_rel: f64,
    pub dedup_tol: f64,
    pub norm_rtol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { ode_rtol: 1e-12, newton_tol: 1e-13, boundary_tol_rel: 1e-4, dedup_tol: 1e-10, norm_rtol: 1e-4 }
    }
}

impl Tolerances {
    pub fn solve(&self) -> reslab_core::continuation::SolveOptions {
        reslab_core::continuation::SolveOptions { rtol: self.ode_rtol, ..Default::default() }
    }

    pub fn scan(&self) -> reslab_core::resonance_search::ScanOptions {
        reslab_core::resonance_search::ScanOptions {
            newton_tol: self.newton_tol,
            boundary_tol_rel: self.boundary_tol_rel,
            dedup_tol: self.dedup_tol,
            ..Default::default()
        }
    }

    pub fn norm(&self) -> reslab_core::resolvent_norm::NormOptions {
        reslab_core::resolvent_norm::NormOptions { rtol: self.norm_rtol, solve: self.solve(), ..Default::default() }
    }
}

fn config_err(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> HarnessResult<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> HarnessResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            HarnessError::Config(m) => config_err(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Model with the top-level `gamma` folded in.
    pub fn model(&self) -> HarnessResult<PotentialModel> {
        let mut spec = self.model.clone();
        if let Some(g) = self.gamma {
            spec.gamma = Some(g);
        }
        spec.build().map_err(|e| config_err(format!("model: {e}")))
    }

    /// `ads_like(ℓ)` with the configured profile.
    pub fn model_for_ell(&self, ell: f64) -> HarnessResult<PotentialModel> {
        let mut spec = self.model.clone();
        if let Some(g) = self.gamma {
            spec.gamma = Some(g);
        }
        if spec.params.is_empty() {
            spec.params.push(ell);
        } else {
            spec.params[0] = ell;
        }
        spec.build().map_err(|e| config_err(format!("model: {e}")))
    }

    pub fn weight(&self, model: &PotentialModel) -> HarnessResult<WeightFunction> {
        let (x_box, x_linear) = match self.weight {
            Some(w) => (w.x_box, w.x_linear),
            None => (model.x_box, model.x_box + 1.0),
        };
        make_weight(x_box, x_linear).map_err(|e| config_err(format!("weight: {e}")))
    }

    pub fn frequency_window(&self, h: f64, gamma: f64) -> HarnessResult<FrequencyWindow> {
        let w = self.window.ok_or_else(|| config_err("missing field `window`"))?;
        let radius = ((w.b0 - w.a0) / 8.0).min(1e-2);
        FrequencyWindow::new(w.a0, w.b0, w.eps0, w.eps, h, gamma, radius).map_err(|e| config_err(format!("window: {e}")))
    }

    /// Scan rectangle of the window at `h`, with the configured top edge.
    pub fn window_rect(&self, h: f64, gamma: f64) -> HarnessResult<Rect> {
        let fw = self.frequency_window(h, gamma)?;
        let mut rect = fw.rect();
        rect.im_max = self.window.map(|w| w.im_max).unwrap_or(1.0);
        if !(rect.im_max > rect.im_min) {
            return Err(config_err(format!("window: im_max {} lies below the lower edge {}", rect.im_max, rect.im_min)));
        }
        Ok(rect)
    }

    /// Semiclassical parameters of the run: `h_list`, or `1/ℓ` for `ell_list`.
    pub fn hs(&self) -> Vec<f64> {
        if self.ell_list.is_empty() {
            self.h_list.clone()
        } else {
            self.ell_list.iter().map(|l| 1.0 / l).collect()
        }
    }

    fn check(&self) -> HarnessResult<()> {
        if let (Some(_), Some(_)) = (self.gamma, self.model.gamma) {
            return Err(config_err("`gamma` given both at top level and in `model`"));
        }
        if !self.h_list.is_empty() && !self.ell_list.is_empty() {
            return Err(config_err("give either `h_list` or `ell_list`, not both"));
        }
        if let Some(bad) = self.h_list.iter().find(|h| !(**h > 0.0)) {
            return Err(config_err(format!("h_list: entries must be positive, got {bad}")));
        }
        if self.h_list.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(config_err("h_list: must be strictly decreasing"));
        }
        if let Some(bad) = self.ell_list.iter().find(|l| !(**l > 0.0)) {
            return Err(config_err(format!("ell_list: entries must be positive, got {bad}")));
        }
        if self.ell_list.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(config_err("ell_list: must be strictly increasing"));
        }
        if !self.ell_list.is_empty() && self.model.name != "ads_like" {
            return Err(config_err(format!("ell_list needs model `ads_like`, got `{}`", self.model.name)));
        }
        let model = match self.ell_list.first() {
            Some(&ell) => self.model_for_ell(ell)?,
            None => self.model()?,
        };
        self.weight(&model)?;
        if let Some(g) = self.gamma {
            if !(g > 0.0) {
                return Err(config_err(format!("gamma: must be positive, got {g}")));
            }
        }
        // window consistent with gamma at the largest h
        if self.window.is_some() {
            if let Some(h) = self.hs().iter().cloned().reduce(f64::max) {
                let rect = self.window_rect(h, model.gamma)?;
                if !(rect.im_min > -model.gamma * h) {
                    return Err(config_err(format!(
                        "window: lower edge {} must lie above -gamma h = {}",
                        rect.im_min,
                        -model.gamma * h
                    )));
                }
            }
        }
        let t = &self.theorem;
        if !(0.0 < t.energy_window[0] && t.energy_window[0] < t.energy_window[1]) {
            return Err(config_err("theorem.energy_window: need 0 < a < b"));
        }
        if t.max_modes == 0 {
            return Err(config_err("theorem.max_modes: must be at least 1"));
        }
        if !(t.m_const > 0.0 && t.b_const > 0.0 && t.c0 > 0.0 && t.gate_const > 0.0 && t.n_exp >= 0.0) {
            return Err(config_err("theorem: need M, B, C0, C > 0 and N >= 0"));
        }
        if let ExclusionRule::Fixed { value } = self.exclusion {
            if !(value > 0.0 && value < 1.0) {
                return Err(config_err(format!("exclusion.value: must lie in (0, 1), got {value}")));
            }
        }
        if !(self.bounds.s > 0.0 && self.bounds.s < 1.0) {
            return Err(config_err(format!("bounds.s: must lie in (0, 1), got {}", self.bounds.s)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GAUSS: &str = r#"
h_list = [0.12, 0.1, 0.08, 0.06]

[model]
name = "gauss_barrier"
params = [2.0, 2.0, 0.5]

[window]
a0 = 0.8
b0 = 1.2
eps0 = 0.1

[weight]
x_box = 2.5
x_linear = 3.5
"#;

    #[test]
    fn parses_a_full_config() {
        let cfg = ExperimentConfig::from_toml(GAUSS).unwrap();
        assert_eq!(cfg.hs(), vec![0.12, 0.1, 0.08, 0.06]);
        assert_eq!(cfg.theorem.energy_window, [0.9, 1.1]);
        assert_eq!(cfg.exclusion, ExclusionRule::Accuracy { power: 2.0, floor: 1e-10 });
        let rect = cfg.window_rect(0.1, 1.0).unwrap();
        assert!((rect.im_min + 0.09).abs() < 1e-15);
        assert_eq!(rect.im_max, 1.0);
    }

    #[test]
    fn missing_field_is_named() {
        let err = ExperimentConfig::from_toml("[model]\nparams = []\n").unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("name"), "{err}");
        let err = ExperimentConfig::from_toml(&GAUSS.replace("eps0 = 0.1", "")).unwrap_err();
        assert!(err.to_string().contains("eps0"), "{err}");
    }

    #[test]
    fn unknown_field_reports_its_line() {
        let text = GAUSS.replace("eps0 = 0.1", "eps0 = 0.1\nepsilon = 3");
        let err = ExperimentConfig::from_toml(&text).unwrap_err().to_string();
        assert!(err.contains("epsilon") && err.contains("line"), "{err}");
    }

    #[test]
    fn h_list_must_decrease() {
        let err = ExperimentConfig::from_toml(&GAUSS.replace("[0.12, 0.1, 0.08, 0.06]", "[0.1, 0.12]")).unwrap_err();
        assert!(err.to_string().contains("decreasing"));
    }

    #[test]
    fn window_must_clear_the_strip() {
        let text = GAUSS.replace("eps0 = 0.1", "eps0 = 0.1\neps = 0.0\nim_max = -0.5");
        assert!(ExperimentConfig::from_toml(&text).is_err());
        let text = GAUSS.replace("b0 = 1.2", "b0 = 0.7");
        assert!(ExperimentConfig::from_toml(&text).is_err());
    }

    #[test]
    fn exclusion_rules() {
        let text = format!("{GAUSS}\n[exclusion]\nrule = \"fixed\"\nvalue = 0.05\n");
        let cfg = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(cfg.exclusion.radius(1.0, 0.1), 0.05);
        let acc = ExclusionRule::default();
        assert!((acc.radius(1e-4, 0.1) - 1e-2).abs() < 1e-15);
        assert_eq!(acc.radius(1e-30, 0.1), 1e-10);
    }
}
