//! Half-line operators `P(h) = -(h d/dx) a (h d/dx) + V` with a Dirichlet
//! wall at the origin, their decay envelopes, weights and frequency windows.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::complex_utils::Rect;
use crate::error::{Error, Result};

/// One additive piece of a coefficient profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Term {
    /// `-depth` on `[0, width)`, zero beyond.
    Well { depth: f64, width: f64 },
    /// `height * exp(-(x - center)^2 / width^2)`.
    Gaussian { height: f64, center: f64, width: f64 },
    /// `amplitude * exp(-rate x)`.
    Exponential { amplitude: f64, rate: f64 },
    /// `amplitude / (1 + x^2)`; decays too slowly for any exponential envelope.
    Algebraic { amplitude: f64 },
}

impl Term {
    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        match *self {
            Term::Well { depth, width } => {
                if x < width {
                    -depth
                } else {
                    0.0
                }
            }
            Term::Gaussian { height, center, width } => {
                let t = (x - center) / width;
                height * (-t * t).exp()
            }
            Term::Exponential { amplitude, rate } => amplitude * (-rate * x).exp(),
            Term::Algebraic { amplitude } => amplitude / (1.0 + x * x),
        }
    }

    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        match *self {
            Term::Well { .. } => 0.0,
            Term::Gaussian { height, center, width } => {
                let t = (x - center) / width;
                -2.0 * t / width * height * (-t * t).exp()
            }
            Term::Exponential { amplitude, rate } => -rate * amplitude * (-rate * x).exp(),
            Term::Algebraic { amplitude } => -2.0 * x * amplitude / (1.0 + x * x).powi(2),
        }
    }

    pub fn breakpoint(&self) -> Option<f64> {
        match *self {
            Term::Well { width, .. } => Some(width),
            _ => None,
        }
    }

    /// `sup_{x >= x0} |term(x)| e^{rate x}`, infinite when unbounded.
    pub fn envelope_sup(&self, rate: f64, x0: f64) -> f64 {
        match *self {
            Term::Well { depth, width } => {
                if x0 >= width {
                    0.0
                } else {
                    depth.abs() * (rate * width).exp()
                }
            }
            Term::Gaussian { height, center, width } => {
                let xs = x0.max(center + 0.5 * rate * width * width);
                let t = (xs - center) / width;
                height.abs() * (rate * xs - t * t).exp()
            }
            Term::Exponential { amplitude, rate: k } => {
                if amplitude == 0.0 {
                    0.0
                } else if k >= rate {
                    amplitude.abs() * ((rate - k) * x0).exp()
                } else {
                    f64::INFINITY
                }
            }
            Term::Algebraic { amplitude } => {
                if amplitude == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    fn check(&self) -> Result<()> {
        let ok = match *self {
            Term::Well { depth, width } => depth.is_finite() && width > 0.0 && width.is_finite(),
            Term::Gaussian { height, center, width } => {
                height.is_finite() && center.is_finite() && width > 0.0 && width.is_finite()
            }
            Term::Exponential { amplitude, rate } => amplitude.is_finite() && rate.is_finite(),
            Term::Algebraic { amplitude } => amplitude.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("invalid coefficient term {self:?}")))
        }
    }
}

/// Coefficients `a = 1 + Σ a_terms`, `V = Σ potential` plus decay data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialModel {
    pub label: String,
    pub potential: Vec<Term>,
    pub a_terms: Vec<Term>,
    pub x_box: f64,
    pub gamma: f64,
    pub delta: f64,
    pub decay_const: f64,
    /// Semiclassical parameter carried by the model, if it fixes one.
    pub h: Option<f64>,
    a_min: f64,
}

impl PotentialModel {
    pub fn new(
        label: impl Into<String>,
        potential: Vec<Term>,
        a_terms: Vec<Term>,
        x_box: f64,
        gamma: f64,
        delta: f64,
        decay_const: f64,
    ) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::Domain(format!("gamma must be positive, got {gamma}")));
        }
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::Domain(format!("delta must be positive, got {delta}")));
        }
        if !(x_box >= 0.0 && x_box.is_finite()) {
            return Err(Error::Domain(format!("x_box must be nonnegative, got {x_box}")));
        }
        if !(decay_const >= 0.0) {
            return Err(Error::Domain(format!("decay constant must be nonnegative, got {decay_const}")));
        }
        for t in potential.iter().chain(&a_terms) {
            t.check()?;
        }
        let mut model = Self {
            label: label.into(),
            potential,
            a_terms,
            x_box,
            gamma,
            delta,
            decay_const,
            h: None,
            a_min: 1.0,
        };
        let reach = x_box + 20.0 / model.decay_rate() + model.breakpoints().last().copied().unwrap_or(0.0);
        let a_min = (0..=4000)
            .map(|i| model.a(reach * i as f64 / 4000.0))
            .fold(f64::INFINITY, f64::min);
        if !(a_min > 0.0) {
            return Err(Error::Domain(format!("coefficient a is not uniformly positive (min {a_min})")));
        }
        model.a_min = a_min;
        Ok(model)
    }

    pub fn with_h(mut self, h: f64) -> Self {
        self.h = Some(h);
        self
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    /// Adds a potential term, e.g. a perturbation far from the support of a quasimode.
    pub fn with_extra_potential(mut self, term: Term) -> Self {
        self.potential.push(term);
        self
    }

    pub fn a_min(&self) -> f64 {
        self.a_min
    }

    /// `2 gamma + delta`.
    pub fn decay_rate(&self) -> f64 {
        2.0 * self.gamma + self.delta
    }

    #[inline]
    pub fn a(&self, x: f64) -> f64 {
        1.0 + self.a_terms.iter().map(|t| t.value(x)).sum::<f64>()
    }

    #[inline]
    pub fn a_prime(&self, x: f64) -> f64 {
        self.a_terms.iter().map(|t| t.derivative(x)).sum()
    }

    #[inline]
    pub fn v(&self, x: f64) -> f64 {
        self.potential.iter().map(|t| t.value(x)).sum()
    }

    pub fn is_free(&self) -> bool {
        self.potential.is_empty() && self.a_terms.is_empty()
    }

    /// Sorted coefficient discontinuities.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut b: Vec<f64> = self.potential.iter().chain(&self.a_terms).filter_map(|t| t.breakpoint()).collect();
        b.sort_by(|a, b| a.partial_cmp(b).unwrap());
        b.dedup();
        b
    }

    /// Largest `|V|` and `|a - 1|` seen on a fine grid of `[0, x_max]`.
    pub fn sup_coefficients(&self, x_max: f64) -> (f64, f64) {
        let n = 4000;
        (0..=n).fold((0.0f64, 0.0f64), |(sv, sa), i| {
            let x = x_max * i as f64 / n as f64;
            (sv.max(self.v(x).abs()), sa.max((self.a(x) - 1.0).abs()))
        })
    }

    /// Sum of the per-term envelope constants beyond `x_box`.
    pub fn envelope_constant(&self) -> f64 {
        let r = self.decay_rate();
        self.potential.iter().chain(&self.a_terms).map(|t| t.envelope_sup(r, self.x_box)).sum()
    }

    pub fn eval_coefficients(&self, x: f64, h: f64) -> Result<(f64, f64)> {
        if !(x >= 0.0) {
            return Err(Error::Domain(format!("x must be nonnegative, got {x}")));
        }
        if !(h > 0.0) {
            return Err(Error::Domain(format!("h must be positive, got {h}")));
        }
        Ok((self.a(x), self.v(x)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub passes: bool,
    /// Least-squares exponential rate of `|V|`; `None` when `V` vanishes on the grid.
    pub fitted_rate: Option<f64>,
    /// Grid point with the largest ratio to the envelope.
    pub worst_x: f64,
    pub worst_ratio: f64,
}

pub fn validate_decay(model: &PotentialModel, grid: &[f64], h: f64) -> Result<DecayReport> {
    if !(h > 0.0) {
        return Err(Error::Domain(format!("h must be positive, got {h}")));
    }
    if grid.len() < 10 {
        return Err(Error::Precondition(format!("decay grid needs at least 10 points, got {}", grid.len())));
    }
    let lo = grid.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = grid.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if lo < model.x_box {
        return Err(Error::Precondition(format!("decay grid starts at {lo}, inside the box radius {}", model.x_box)));
    }
    let rate = model.decay_rate();
    if (hi - lo) * rate < 3.0 - 1e-12 {
        return Err(Error::Precondition(format!(
            "decay grid spans {:.3} decay lengths, need at least 3",
            (hi - lo) * rate
        )));
    }
    let mut worst = (f64::NEG_INFINITY, lo);
    for &x in grid {
        let envelope = model.decay_const * (-rate * x).exp();
        let size = model.v(x).abs().max((model.a(x) - 1.0).abs());
        let ratio = if size == 0.0 {
            0.0
        } else if envelope == 0.0 {
            f64::INFINITY
        } else {
            size / envelope
        };
        if ratio > worst.0 {
            worst = (ratio, x);
        }
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = grid
        .iter()
        .filter_map(|&x| {
            let v = model.v(x).abs();
            (v > 1e-300).then(|| (x, v.ln()))
        })
        .unzip();
    let fitted_rate = crate::linalg::linear_fit(&xs, &ys).ok().map(|f| -f.slope);
    Ok(DecayReport { passes: worst.0 <= 1.0 + 1e-12, fitted_rate, worst_x: worst.1, worst_ratio: worst.0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Taper {
    /// Quintic blend with C² matching at both ends.
    Quintic,
}

/// Smooth weight with `phi = 0` on `[0, x_box]` and `phi(x) = x` beyond `x_linear`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightFunction {
    pub x_box: f64,
    pub x_linear: f64,
    pub taper: Taper,
}

/// `10t³ - 15t⁴ + 6t⁵` on `[0, 1]`, clamped outside.
#[inline]
pub fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * t * (10.0 + t * (-15.0 + 6.0 * t))
}

#[inline]
pub fn smoothstep_d1(t: f64) -> f64 {
    if !(0.0..=1.0).contains(&t) {
        return 0.0;
    }
    30.0 * t * t * (1.0 - t) * (1.0 - t)
}

#[inline]
pub fn smoothstep_d2(t: f64) -> f64 {
    if !(0.0..=1.0).contains(&t) {
        return 0.0;
    }
    60.0 * t * (1.0 - t) * (1.0 - 2.0 * t)
}

impl WeightFunction {
    fn len(&self) -> f64 {
        self.x_linear - self.x_box
    }

    pub fn eval(&self, x: f64) -> f64 {
        let x = x.abs();
        if x <= self.x_box {
            0.0
        } else if x >= self.x_linear {
            x
        } else {
            let l = self.len();
            let t = (x - self.x_box) / l;
            let q = t * t * t * (-4.0 + t * (7.0 - 3.0 * t));
            self.x_linear * smoothstep(t) + l * q
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let s = x.signum();
        let x = x.abs();
        let d = if x <= self.x_box {
            0.0
        } else if x >= self.x_linear {
            1.0
        } else {
            let l = self.len();
            let t = (x - self.x_box) / l;
            let dq = t * t * (-12.0 + t * (28.0 - 15.0 * t));
            (self.x_linear * smoothstep_d1(t) + l * dq) / l
        };
        d * s
    }

    /// `e^{-gamma phi(x)}`.
    #[inline]
    pub fn damping(&self, gamma: f64, x: f64) -> f64 {
        (-gamma * self.eval(x)).exp()
    }
}

pub fn make_weight(x_box: f64, x_linear: f64) -> Result<WeightFunction> {
    if !(x_box >= 0.0) || !x_linear.is_finite() {
        return Err(Error::Domain(format!("invalid weight radii ({x_box}, {x_linear})")));
    }
    if !(x_linear > x_box) {
        return Err(Error::Domain(format!("x_linear = {x_linear} must exceed x_box = {x_box}")));
    }
    Ok(WeightFunction { x_box, x_linear, taper: Taper::Quintic })
}

/// Rectangle `(a0+eps, b0-eps) + i((-gamma+eps0+eps)h, 1)` with exclusion disks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyWindow {
    pub a0: f64,
    pub b0: f64,
    pub eps0: f64,
    pub eps: f64,
    pub h: f64,
    pub gamma: f64,
    pub exclusion_radius: f64,
    pub exclusion_centers: Vec<Complex64>,
}

impl FrequencyWindow {
    pub fn new(a0: f64, b0: f64, eps0: f64, eps: f64, h: f64, gamma: f64, exclusion_radius: f64) -> Result<Self> {
        if !(0.0 < a0 && a0 < b0) {
            return Err(Error::Domain(format!("need 0 < a0 < b0, got ({a0}, {b0})")));
        }
        if !(eps0 > 0.0 && eps >= 0.0 && h > 0.0 && gamma > 0.0) {
            return Err(Error::Domain("need eps0 > 0, eps >= 0, h > 0, gamma > 0".into()));
        }
        if a0 + eps >= b0 - eps {
            return Err(Error::Domain("shrink margin eps empties the window".into()));
        }
        if (-gamma + eps0 + eps) * h >= 1.0 {
            return Err(Error::Domain("window lower edge lies above its top edge".into()));
        }
        if !(exclusion_radius > 0.0 && exclusion_radius < (b0 - a0) / 4.0) {
            return Err(Error::Domain(format!(
                "exclusion radius {exclusion_radius} must lie in (0, (b0 - a0)/4)"
            )));
        }
        Ok(Self { a0, b0, eps0, eps, h, gamma, exclusion_radius, exclusion_centers: Vec::new() })
    }

    pub fn rect(&self) -> Rect {
        Rect {
            re_min: self.a0 + self.eps,
            re_max: self.b0 - self.eps,
            im_min: (-self.gamma + self.eps0 + self.eps) * self.h,
            im_max: 1.0,
        }
    }

    pub fn is_excluded(&self, lambda: Complex64) -> bool {
        self.exclusion_centers.iter().any(|c| (lambda - c).norm() < self.exclusion_radius)
    }
}

/// Text-config form of a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub name: String,
    #[serde(default)]
    pub params: Vec<f64>,
    pub gamma: Option<f64>,
    pub delta: Option<f64>,
    pub x_box: Option<f64>,
    pub decay_const: Option<f64>,
}

impl ModelSpec {
    pub fn build(&self) -> Result<PotentialModel> {
        let mut m = builtin_model(&self.name, &self.params)?;
        if let Some(g) = self.gamma {
            m.gamma = g;
        }
        if let Some(d) = self.delta {
            m.delta = d;
        }
        if let Some(x) = self.x_box {
            m.x_box = x;
        }
        m.decay_const = match self.decay_const {
            Some(c) => c,
            None if self.gamma.is_some() || self.delta.is_some() || self.x_box.is_some() => {
                default_decay_const(&self.name, &m)
            }
            None => m.decay_const,
        };
        PotentialModel::new(m.label.clone(), m.potential.clone(), m.a_terms.clone(), m.x_box, m.gamma, m.delta, m.decay_const)
            .map(|mm| PotentialModel { h: m.h, ..mm })
    }
}

fn default_decay_const(name: &str, m: &PotentialModel) -> f64 {
    match name {
        "free" => 1.0,
        "square_well" => m.potential.iter().map(|t| t.envelope_sup(0.0, 0.0)).sum(),
        _ => m.envelope_constant(),
    }
}

fn arity(name: &str, params: &[f64], allowed: &[usize]) -> Result<()> {
    if allowed.contains(&params.len()) {
        Ok(())
    } else {
        Err(Error::Domain(format!("model '{name}' takes {allowed:?} parameters, got {}", params.len())))
    }
}

/// Built-in model library: `free`, `square_well(V0, width)`,
/// `gauss_barrier(B0, xc, w)` and `ads_like(ell[, B0, xc, w, V_tail, kappa])`.
pub fn builtin_model(name: &str, params: &[f64]) -> Result<PotentialModel> {
    match name {
        "free" => {
            arity(name, params, &[0])?;
            PotentialModel::new("free", vec![], vec![], 0.0, 1.0, 1.0, 1.0)
        }
        "square_well" => {
            arity(name, params, &[2])?;
            let (depth, width) = (params[0], params[1]);
            if !(width > 0.0) {
                return Err(Error::Domain(format!("square well width must be positive, got {width}")));
            }
            PotentialModel::new(
                format!("square_well(V0={depth}, width={width})"),
                vec![Term::Well { depth, width }],
                vec![],
                width,
                3.0,
                1.0,
                depth.abs(),
            )
        }
        "gauss_barrier" => {
            arity(name, params, &[3])?;
            let (height, center, width) = (params[0], params[1], params[2]);
            if !(width > 0.0) {
                return Err(Error::Domain(format!("barrier width must be positive, got {width}")));
            }
            if !(center >= 0.0) {
                return Err(Error::Domain(format!("barrier center must be nonnegative, got {center}")));
            }
            let mut m = PotentialModel::new(
                format!("gauss_barrier(B0={height}, xc={center}, w={width})"),
                vec![Term::Gaussian { height, center, width }],
                vec![],
                0.0,
                1.0,
                1.0,
                0.0,
            )?;
            m.decay_const = m.envelope_constant();
            Ok(m)
        }
        "ads_like" => {
            arity(name, params, &[1, 6])?;
            let ell = params[0];
            if !(ell > 0.0) {
                return Err(Error::Domain(format!("ell must be positive, got {ell}")));
            }
            let (height, center, width, tail, kappa) =
                if params.len() == 6 { (params[1], params[2], params[3], params[4], params[5]) } else { (2.0, 2.0, 0.5, 0.5, 3.0) };
            if !(width > 0.0 && kappa > 0.0) {
                return Err(Error::Domain("ads_like needs positive barrier width and tail rate".into()));
            }
            // 2 gamma + delta may not exceed the tail rate
            let gamma = (kappa / 3.0).min(1.0);
            let delta = kappa - 2.0 * gamma;
            let mut m = PotentialModel::new(
                format!("ads_like(ell={ell})"),
                vec![
                    Term::Gaussian { height, center, width },
                    Term::Exponential { amplitude: tail, rate: kappa },
                ],
                vec![],
                0.0,
                gamma,
                delta,
                0.0,
            )?;
            m.decay_const = m.envelope_constant();
            Ok(m.with_h(1.0 / ell))
        }
        other => Err(Error::UnknownModel(other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn coefficient_examples() {
        let free = builtin_model("free", &[]).unwrap();
        assert_eq!(free.eval_coefficients(3.7, 0.1).unwrap(), (1.0, 0.0));
        let sw = builtin_model("square_well", &[10.0, 1.0]).unwrap();
        assert_eq!(sw.eval_coefficients(0.5, 1.0).unwrap(), (1.0, -10.0));
        let gb = builtin_model("gauss_barrier", &[2.0, 2.0, 0.5]).unwrap();
        assert_eq!(gb.eval_coefficients(2.0, 1.0).unwrap(), (1.0, 2.0));
        assert!(free.eval_coefficients(-0.1, 1.0).is_err());
        assert!(free.eval_coefficients(0.1, 0.0).is_err());
    }

    #[test]
    fn eval_is_bit_reproducible() {
        let gb = builtin_model("ads_like", &[8.0]).unwrap();
        for i in 0..100 {
            let x = 0.037 * i as f64;
            let a = gb.eval_coefficients(x, 0.125).unwrap();
            let b = gb.eval_coefficients(x, 0.125).unwrap();
            assert_eq!(a.0.to_bits(), b.0.to_bits());
            assert_eq!(a.1.to_bits(), b.1.to_bits());
        }
    }

    #[test]
    fn builtin_library() {
        let sw = builtin_model("square_well", &[10.0, 1.0]).unwrap();
        assert_eq!(sw.decay_const, 10.0);
        assert_eq!(sw.v(1.0), 0.0);
        assert_eq!(sw.v(7.5), 0.0);
        let ads = builtin_model("ads_like", &[8.0]).unwrap();
        assert_eq!(ads.h, Some(0.125));
        let ads4 = builtin_model("ads_like", &[4.0]).unwrap();
        for i in 0..50 {
            let x = 0.1 * i as f64;
            assert_eq!(ads.v(x), ads4.v(x));
        }
        assert!(matches!(builtin_model("harmonic", &[]), Err(Error::UnknownModel(_))));
        assert!(builtin_model("square_well", &[10.0, 0.0]).is_err());
        assert!(builtin_model("square_well", &[10.0]).is_err());
        assert!(builtin_model("gauss_barrier", &[2.0, 2.0, -0.5]).is_err());
    }

    fn decay_grid(m: &PotentialModel) -> Vec<f64> {
        let span = 10.0 / m.decay_rate();
        (0..200).map(|i| m.x_box + span * i as f64 / 199.0).collect()
    }

    #[test]
    fn builtins_satisfy_declared_decay() {
        for (name, p) in [
            ("free", vec![]),
            ("square_well", vec![10.0, 1.0]),
            ("gauss_barrier", vec![2.0, 2.0, 0.5]),
            ("ads_like", vec![6.0]),
        ] {
            let m = builtin_model(name, &p).unwrap();
            let rep = validate_decay(&m, &decay_grid(&m), 0.1).unwrap();
            assert!(rep.passes, "{name}: {rep:?}");
        }
    }

    #[test]
    fn exact_exponential_passes_with_its_rate() {
        let m = PotentialModel::new("exp", vec![Term::Exponential { amplitude: 1.0, rate: 3.0 }], vec![], 0.0, 1.0, 1.0, 1.0)
            .unwrap();
        let rep = validate_decay(&m, &decay_grid(&m), 1.0).unwrap();
        assert!(rep.passes);
        assert!((rep.fitted_rate.unwrap() - 3.0).abs() < 1e-10);
    }

    #[test]
    fn algebraic_decay_fails_at_large_x() {
        let m = PotentialModel::new("alg", vec![Term::Algebraic { amplitude: 1.0 }], vec![], 0.0, 1.0, 1.0, 1.0).unwrap();
        let grid = decay_grid(&m);
        let rep = validate_decay(&m, &grid, 1.0).unwrap();
        assert!(!rep.passes);
        assert_eq!(rep.worst_x, *grid.last().unwrap());
    }

    #[test]
    fn gauss_barrier_with_grid_sup_constant() {
        let mut m = builtin_model("gauss_barrier", &[2.0, 2.0, 0.5]).unwrap();
        let grid = decay_grid(&m);
        // oracle: sup of V e^{(2 gamma + delta) x} over the grid
        let sup = grid.iter().map(|&x| m.v(x) * (3.0 * x).exp()).fold(0.0, f64::max);
        m.decay_const = sup;
        let rep = validate_decay(&m, &grid, 0.1).unwrap();
        assert!(rep.passes, "{rep:?}");
        m.decay_const = 0.99 * sup;
        assert!(!validate_decay(&m, &grid, 0.1).unwrap().passes);
    }

    #[test]
    fn decay_grid_preconditions() {
        let m = builtin_model("free", &[]).unwrap();
        assert!(validate_decay(&m, &[0.0, 1.0, 2.0], 1.0).is_err());
        let short: Vec<f64> = (0..20).map(|i| 0.01 * i as f64).collect();
        assert!(validate_decay(&m, &short, 1.0).is_err());
    }

    #[test]
    fn weight_examples() {
        let w = make_weight(0.0, 1.0).unwrap();
        assert_eq!(w.eval(2.0), 2.0);
        let w = make_weight(1.0, 3.0).unwrap();
        assert_eq!(w.eval(0.5), 0.0);
        assert!((w.eval(3.0) - 3.0).abs() < 1e-15);
        assert!(make_weight(2.0, 2.0).is_err());
        assert!(make_weight(2.0, 1.0).is_err());
    }

    #[test]
    fn weight_taper_is_monotone_with_bounded_slope() {
        let w = make_weight(1.0, 3.0).unwrap();
        let d = 1e-4;
        let mut prev = w.eval(1.0);
        let mut max_slope: f64 = 0.0;
        for i in 1..=20000 {
            let x = 1.0 + 2.0 * i as f64 / 20000.0;
            let v = w.eval(x);
            assert!(v >= prev - 1e-15, "not monotone at {x}");
            prev = v;
            let fd = (w.eval(x + d) - w.eval(x - d)) / (2.0 * d);
            assert!((fd - w.derivative(x)).abs() < 1e-6);
            max_slope = max_slope.max(fd);
        }
        // the blend must climb from 0 to x_linear over a length x_linear - x_box
        let mean_slope = 3.0 / 2.0;
        assert!(max_slope >= mean_slope && max_slope < 2.5, "{max_slope}");
    }

    #[test]
    fn weight_is_c1_at_the_joins() {
        let w = make_weight(0.7, 2.1).unwrap();
        // second-order one-sided differences, Richardson-extrapolated
        let one_sided = |x0: f64, d: f64, dir: f64| {
            let q = |d: f64| dir * (-3.0 * w.eval(x0) + 4.0 * w.eval(x0 + dir * d) - w.eval(x0 + 2.0 * dir * d)) / (2.0 * d);
            (4.0 * q(d / 2.0) - q(d)) / 3.0
        };
        let d = 1e-3;
        for x0 in [0.7, 2.1] {
            let left = one_sided(x0, d, -1.0);
            let right = one_sided(x0, d, 1.0);
            assert!((left - right).abs() < 1e-6, "{x0}: {left} vs {right}");
        }
        assert!((w.eval(2.1) - 2.1).abs() < 1e-15);
    }

    #[test]
    fn frequency_window_geometry() {
        let w = FrequencyWindow::new(1.0, 3.0, 0.1, 0.05, 0.2, 1.0, 0.1).unwrap();
        let r = w.rect();
        assert!((r.re_min - 1.05).abs() < 1e-15 && (r.re_max - 2.95).abs() < 1e-15);
        assert!(r.im_min > -w.gamma * w.h);
        assert!((r.im_min - (-1.0 + 0.15) * 0.2).abs() < 1e-15);
        assert!(FrequencyWindow::new(1.0, 3.0, 0.1, 0.0, 0.2, 1.0, 0.6).is_err());
        assert!(FrequencyWindow::new(1.0, 3.0, 0.0, 0.0, 0.2, 1.0, 0.1).is_err());
    }

    #[test]
    fn model_spec_round_trip() {
        let spec = ModelSpec {
            name: "gauss_barrier".into(),
            params: vec![2.0, 2.0, 0.5],
            gamma: Some(1.0),
            delta: None,
            x_box: None,
            decay_const: None,
        };
        let m = spec.build().unwrap();
        assert!((m.decay_const - builtin_model("gauss_barrier", &[2.0, 2.0, 0.5]).unwrap().decay_const).abs() < 1e-9);
        let text = serde_json::to_string(&m).unwrap();
        let back: PotentialModel = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
    }

    proptest! {
        #[test]
        fn weight_invariants(x_box in 0.0f64..3.0, len in 0.1f64..4.0, x in 0.0f64..10.0) {
            let w = make_weight(x_box, x_box + len).unwrap();
            let v = w.eval(x);
            prop_assert!(v >= 0.0);
            if x <= x_box { prop_assert_eq!(v, 0.0); }
            if x >= x_box + len { prop_assert_eq!(v, x); }
            prop_assert!(w.derivative(x) >= 0.0);
            prop_assert!(v <= x.max(x_box + len));
        }

        #[test]
        fn envelope_constant_bounds_builtins(h0 in 0.1f64..4.0, c0 in 0.0f64..4.0, w0 in 0.1f64..1.5, x in 0.0f64..15.0) {
            let m = builtin_model("gauss_barrier", &[h0, c0, w0]).unwrap();
            prop_assert!(m.v(x).abs() <= m.decay_const * (-m.decay_rate() * x).exp() * (1.0 + 1e-12));
        }
    }
}
