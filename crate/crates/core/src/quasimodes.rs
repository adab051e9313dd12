//! Compactly supported real quasimodes from truncated Dirichlet problems.
//!
//! Seeds come from a symmetric fourth-order finite-difference eigensolve on
//! `[0, L]`; each energy is then sharpened by shooting, and the quasimode is
//! the shooting solution times a quintic cutoff. Its accuracy is the norm of
//! the exact cutoff commutator `-h²[(a'χ' + aχ'')v + 2χ'(a v')]`.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::simpson_weights;
use crate::model::{smoothstep, smoothstep_d1, smoothstep_d2, PotentialModel};
use crate::ode::{integrate, OdeOptions, State};

/// One eigenpair of the discretized Dirichlet problem on `[0, L]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirichletMode {
    pub energy: f64,
    pub interval: f64,
    pub h: f64,
    /// Interior nodes and the eigenvector on them, normalized in the grid norm.
    pub xs: Vec<f64>,
    pub v: Vec<f64>,
}

/// Staggered fourth-order derivative `(27(u_{i+1}-u_i) - (u_{i+2}-u_{i-1}))/(24Δ)`
/// at midpoints, with odd reflection across both walls.
fn staggered_derivative(n: usize, d: f64) -> DMatrix<f64> {
    // unknowns u_1..u_{n-1}; midpoints i + 1/2 for i = 0..n-1
    let m = n - 1;
    let mut dm = DMatrix::<f64>::zeros(n, m);
    let mut put = |row: usize, j: isize, c: f64| {
        let (idx, sign) = if j == -1 {
            (1, -1.0)
        } else if j == n as isize + 1 {
            (n - 1, -1.0)
        } else {
            (j as usize, 1.0)
        };
        if idx >= 1 && idx <= m {
            dm[(row, idx - 1)] += sign * c / (24.0 * d);
        }
    };
    for i in 0..n {
        let i = i as isize;
        put(i as usize, i + 1, 27.0);
        put(i as usize, i, -27.0);
        put(i as usize, i + 2, -1.0);
        put(i as usize, i - 1, 1.0);
    }
    dm
}

/// Lowest `count` eigenpairs of `-h²(a u')' + V u` on `[0, L]` with Dirichlet
/// ends, sorted by energy.
///
/// `spacing` defaults to `h/10`; the grid must carry at least 12 points per
/// local wavelength `2πh/sqrt(E - min V)` at the largest returned energy.
pub fn dirichlet_eigensolve(model: &PotentialModel, interval: f64, h: f64, count: usize, spacing: Option<f64>) -> Result<Vec<DirichletMode>> {
    if !(interval > 0.0 && h > 0.0) {
        return Err(Error::Domain(format!("need L > 0 and h > 0, got ({interval}, {h})")));
    }
    let n = (interval / spacing.unwrap_or(h / 10.0)).ceil().max(4.0) as usize;
    let d = interval / n as f64;
    if count == 0 || count > n - 1 {
        return Err(Error::Domain(format!("requested {count} eigenpairs from a grid with {} unknowns", n - 1)));
    }
    let dm = staggered_derivative(n, d);
    let a_mid = DMatrix::<f64>::from_diagonal(&nalgebra::DVector::from_fn(n, |i, _| model.a((i as f64 + 0.5) * d)));
    let mut op = dm.transpose() * a_mid * &dm * (h * h);
    let xs: Vec<f64> = (1..n).map(|j| j as f64 * d).collect();
    let mut v_min = f64::INFINITY;
    for (k, &x) in xs.iter().enumerate() {
        let v = model.v(x);
        v_min = v_min.min(v);
        op[(k, k)] += v;
    }
    let eig = SymmetricEigen::new(op);
    let mut order: Vec<usize> = (0..n - 1).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).unwrap());
    let top = eig.eigenvalues[order[count - 1]];
    if top > v_min {
        let wavelength = 2.0 * std::f64::consts::PI * h / (top - v_min).sqrt();
        if wavelength < 12.0 * d {
            return Err(Error::Resolution(format!(
                "spacing {d:.3e} gives {:.1} points per wavelength at E = {top:.4}, need 12",
                wavelength / d
            )));
        }
    }
    Ok(order[..count]
        .iter()
        .map(|&k| {
            let col = eig.eigenvectors.column(k);
            let norm = (col.iter().map(|c| c * c).sum::<f64>() * d).sqrt();
            let sign = if col.iter().cloned().fold(0.0, |acc: f64, c| if acc.abs() >= c.abs() { acc } else { c }) < 0.0 { -1.0 } else { 1.0 };
            DirichletMode {
                energy: eig.eigenvalues[k],
                interval,
                h,
                xs: xs.clone(),
                v: col.iter().map(|c| sign * c / norm).collect(),
            }
        })
        .collect())
}

fn shooting_rhs<'a>(model: &'a PotentialModel, energy: f64, h: f64) -> impl Fn(f64, &State) -> State + 'a {
    let inv_h2 = 1.0 / (h * h);
    move |x: f64, y: &State| [y[1] / model.a(x), y[0] * ((model.v(x) - energy) * inv_h2)]
}

fn shooting_options(model: &PotentialModel, energy: f64, h: f64, x_max: f64) -> OdeOptions {
    let (v_sup, _) = model.sup_coefficients(x_max);
    OdeOptions { p_scale: ((v_sup + energy.abs()).sqrt() / h).max(1.0), ..OdeOptions::default() }
}

/// `(u, a u')` of the solution with `u(0) = 0`, `a u'(0) = a(0)` at each output.
pub fn shoot(model: &PotentialModel, energy: f64, h: f64, outputs: &[f64]) -> Result<Vec<(f64, f64)>> {
    let x_max = outputs.last().copied().unwrap_or(0.0);
    let y0 = [Complex64::new(0.0, 0.0), Complex64::new(model.a(0.0), 0.0)];
    let states = integrate(
        shooting_rhs(model, energy, h),
        y0,
        0.0,
        outputs,
        &model.breakpoints(),
        &shooting_options(model, energy, h, x_max),
    )?;
    Ok(states.iter().map(|s| (s[0].re, s[1].re)).collect())
}

/// Left end of the classically forbidden stretch `V > E` that reaches `L`,
/// or `L` itself when `V(L) ≤ E`.
pub fn matching_point(model: &PotentialModel, energy: f64, interval: f64) -> f64 {
    let n = 4000;
    let mut x_m = interval;
    for k in (0..n).rev() {
        let x = interval * k as f64 / n as f64;
        if model.v(x) <= energy {
            break;
        }
        x_m = x;
    }
    x_m.max(interval / n as f64)
}

/// Solution with `u(0) = 0` and `u(L) = 0` glued at `x_m`: forward shooting on
/// `[0, x_m]`, backward shooting on `[x_m, L]`, the latter rescaled to match.
/// Returns the normalized Wronskian mismatch at `x_m` and the glued states.
fn two_sided(model: &PotentialModel, energy: f64, h: f64, interval: f64, outputs: &[f64]) -> Result<(f64, Vec<(f64, f64)>)> {
    let x_m = matching_point(model, energy, interval);
    let opts = shooting_options(model, energy, h, interval);
    let s = opts.p_scale;
    let split = outputs.partition_point(|&x| x < x_m);
    let mut left_out: Vec<f64> = outputs[..split].to_vec();
    left_out.push(x_m);
    let y0 = [Complex64::new(0.0, 0.0), Complex64::new(model.a(0.0), 0.0)];
    let left = integrate(shooting_rhs(model, energy, h), y0, 0.0, &left_out, &model.breakpoints(), &opts)?;
    let mut right_out: Vec<f64> = vec![x_m];
    right_out.extend(outputs[split..].iter().rev().filter(|&&x| x <= interval));
    right_out.sort_by(|a, b| b.partial_cmp(a).unwrap());
    right_out.dedup();
    let yl = [Complex64::new(0.0, 0.0), Complex64::new(-model.a(interval), 0.0)];
    let right = integrate(shooting_rhs(model, energy, h), yl, interval, &right_out, &model.breakpoints(), &opts)?;
    let (ul, pl) = (left[left.len() - 1][0].re, left[left.len() - 1][1].re);
    let km = right_out.iter().position(|&r| r == x_m).expect("matching point kept");
    let (ur, pr) = (right[km][0].re, right[km][1].re);
    let nl = (ul * ul + pl * pl / (s * s)).sqrt();
    let nr = (ur * ur + pr * pr / (s * s)).sqrt();
    let mismatch = (ul * pr - pl * ur) / (s * nl * nr);
    let c = (ul * ur + pl * pr / (s * s)) / (nr * nr);
    let mut states: Vec<(f64, f64)> = left[..split].iter().map(|st| (st[0].re, st[1].re)).collect();
    for &x in &outputs[split..] {
        if x > interval {
            states.push((f64::NAN, f64::NAN));
            continue;
        }
        let k = right_out.iter().position(|&r| r == x).expect("output kept");
        states.push((c * right[k][0].re, c * right[k][1].re));
    }
    Ok((mismatch, states))
}

/// Dirichlet energy on `[0, L]` next to `seed`: zero of the two-sided
/// shooting mismatch, bracketed and then found by the Illinois rule.
pub fn refine_dirichlet_energy(model: &PotentialModel, interval: f64, h: f64, seed: f64, max_shift: f64) -> Result<f64> {
    let end = |e: f64| -> Result<f64> { Ok(two_sided(model, e, h, interval, &[])?.0) };
    let scale = seed.abs().max(f64::MIN_POSITIVE);
    let f0 = end(seed)?;
    if f0 == 0.0 {
        return Ok(seed);
    }
    let mut delta = 1e-10 * scale;
    let (mut lo, mut hi, mut flo, mut fhi);
    loop {
        let (a, b) = (seed - delta, seed + delta);
        let (fa, fb) = (end(a)?, end(b)?);
        if fa.signum() != f0.signum() {
            (lo, hi, flo, fhi) = (a, seed, fa, f0);
            break;
        }
        if fb.signum() != f0.signum() {
            (lo, hi, flo, fhi) = (seed, b, f0, fb);
            break;
        }
        delta *= 4.0;
        if delta > max_shift {
            return Err(Error::Divergence { best: Complex64::new(seed, 0.0), residual: f0.abs() });
        }
    }
    let mut side = 0i8;
    for _ in 0..200 {
        if (hi - lo).abs() <= 4.0 * f64::EPSILON * scale {
            break;
        }
        let mid = (lo * fhi - hi * flo) / (fhi - flo);
        let fm = end(mid)?;
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
            if side == -1 {
                fhi *= 0.5;
            }
            side = -1;
        } else {
            hi = mid;
            fhi = fm;
            if side == 1 {
                flo *= 0.5;
            }
            side = 1;
        }
    }
    Ok(if flo.abs() < fhi.abs() { lo } else { hi })
}

/// Smooth cutoff `χ ≡ 1` on `[0, x_cut]`, `χ ≡ 0` beyond `x_cut + width`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cutoff {
    pub x_cut: f64,
    pub width: f64,
}

impl Cutoff {
    /// Width `4 h^{1/2}` clipped to `[0.2, 1]`.
    pub fn default_width(h: f64) -> f64 {
        (4.0 * h.sqrt()).clamp(0.2, 1.0)
    }

    pub fn new(x_cut: f64, width: f64) -> Result<Self> {
        if !(x_cut > 0.0 && width > 0.0) {
            return Err(Error::Domain(format!("cutoff needs x_cut > 0 and width > 0, got ({x_cut}, {width})")));
        }
        Ok(Self { x_cut, width })
    }

    pub fn end(&self) -> f64 {
        self.x_cut + self.width
    }

    /// `(χ, χ', χ'')` at `x`.
    pub fn eval(&self, x: f64) -> (f64, f64, f64) {
        let t = (x - self.x_cut) / self.width;
        (1.0 - smoothstep(t), -smoothstep_d1(t) / self.width, -smoothstep_d2(t) / (self.width * self.width))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuasimodeOptions {
    /// Largest admissible `max_{x ≥ x_cut} |v| / max |v|`.
    pub amplitude_limit: f64,
    /// Admissible energies `λ² ∈ [e_min, e_max]`.
    pub energy_window: Option<(f64, f64)>,
    /// Grid spacing as a fraction of `h`.
    pub spacing_over_h: f64,
}

impl Default for QuasimodeOptions {
    fn default() -> Self {
        Self { amplitude_limit: 5e-2, energy_window: None, spacing_over_h: 1.0 / 40.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quasimode {
    pub xs: Vec<f64>,
    pub u: Vec<f64>,
    /// Grid values of `(P(h) - λ²) u`.
    pub residual: Vec<f64>,
    pub lambda: f64,
    pub h: f64,
    pub accuracy: f64,
    pub support_radius: f64,
    pub cutoff: Cutoff,
    /// `max_{x ≥ x_cut} |v| / max |v|` for the uncut solution.
    pub cutoff_amplitude: f64,
    pub interval: f64,
}

impl Quasimode {
    pub fn energy(&self) -> f64 {
        self.lambda * self.lambda
    }

    pub fn weights(&self) -> Vec<f64> {
        simpson_weights(&self.xs)
    }

    pub fn norm(&self) -> f64 {
        grid_norm(&self.u, &self.weights())
    }

    /// Recomputes `‖(P(h) - λ²)u‖` from the stored residual.
    pub fn residual_norm(&self) -> f64 {
        grid_norm(&self.residual, &self.weights())
    }

    /// `⟨u, P u⟩ = ∫ h² a |u'|² + V |u|²`, with `u'` by fourth-order differences.
    pub fn energy_form(&self, model: &PotentialModel) -> f64 {
        let n = self.xs.len();
        let d = self.xs[1] - self.xs[0];
        let du: Vec<f64> = (0..n)
            .map(|k| {
                if k >= 2 && k + 2 < n {
                    (8.0 * (self.u[k + 1] - self.u[k - 1]) - (self.u[k + 2] - self.u[k - 2])) / (12.0 * d)
                } else if k + 4 < n {
                    (-25.0 * self.u[k] + 48.0 * self.u[k + 1] - 36.0 * self.u[k + 2] + 16.0 * self.u[k + 3] - 3.0 * self.u[k + 4]) / (12.0 * d)
                } else {
                    (25.0 * self.u[k] - 48.0 * self.u[k - 1] + 36.0 * self.u[k - 2] - 16.0 * self.u[k - 3] + 3.0 * self.u[k - 4]) / (12.0 * d)
                }
            })
            .collect();
        let w = self.weights();
        (0..n)
            .map(|k| w[k] * (self.h * self.h * model.a(self.xs[k]) * du[k] * du[k] + model.v(self.xs[k]) * self.u[k] * self.u[k]))
            .sum()
    }
}

fn grid_norm(v: &[f64], w: &[f64]) -> f64 {
    v.iter().zip(w).map(|(x, q)| x * x * q).sum::<f64>().sqrt()
}

/// Quasimode `χ v / ‖χ v‖` from the Dirichlet mode `mode`, whose energy is
/// first refined by shooting.
pub fn build_quasimode(model: &PotentialModel, mode: &DirichletMode, cutoff: Cutoff, opts: &QuasimodeOptions) -> Result<Quasimode> {
    let h = mode.h;
    let gap = 0.5 * mode.energy.abs().max(1.0) * 1e-2;
    let energy = refine_dirichlet_energy(model, mode.interval, h, mode.energy, gap)?;
    build_quasimode_at(model, energy, h, mode.interval, cutoff, opts)
}

/// Quasimode from the regular solution at a given energy.
pub fn build_quasimode_at(model: &PotentialModel, energy: f64, h: f64, interval: f64, cutoff: Cutoff, opts: &QuasimodeOptions) -> Result<Quasimode> {
    if !(energy > 0.0) {
        return Err(Error::Domain(format!("quasimode energy must be positive for real lambda, got {energy}")));
    }
    if let Some((lo, hi)) = opts.energy_window {
        if !(lo <= energy && energy <= hi) {
            return Err(Error::Precondition(format!("energy {energy:.6} outside the window [{lo}, {hi}]")));
        }
    }
    let x_end = cutoff.end();
    if x_end > interval * (1.0 + 1e-12) {
        return Err(Error::Domain(format!("cutoff end {x_end} lies beyond the Dirichlet interval {interval}")));
    }
    let x_end = x_end.min(interval);
    let target = (opts.spacing_over_h * h).min(cutoff.width / 200.0);
    let mut n = (x_end / target).ceil() as usize;
    if n % 2 == 1 {
        n += 1;
    }
    let xs: Vec<f64> = (0..=n).map(|k| x_end * k as f64 / n as f64).collect();
    let (_, states) = two_sided(model, energy, h, interval, &xs)?;
    let v_max = states.iter().map(|s| s.0.abs()).fold(0.0, f64::max);
    let tail = xs.iter().zip(&states).filter(|(x, _)| **x >= cutoff.x_cut).map(|(_, s)| s.0.abs()).fold(0.0, f64::max);
    let amplitude = tail / v_max;
    if amplitude > opts.amplitude_limit {
        return Err(Error::BadCutoff { x_cut: cutoff.x_cut, amplitude, limit: opts.amplitude_limit });
    }
    let mut u = Vec::with_capacity(xs.len());
    let mut r = Vec::with_capacity(xs.len());
    for (&x, &(v, p)) in xs.iter().zip(&states) {
        let (chi, d1, d2) = cutoff.eval(x);
        u.push(chi * v);
        r.push(-h * h * ((model.a_prime(x) * d1 + model.a(x) * d2) * v + 2.0 * d1 * p));
    }
    let w = simpson_weights(&xs);
    let norm = grid_norm(&u, &w);
    u.iter_mut().for_each(|v| *v /= norm);
    r.iter_mut().for_each(|v| *v /= norm);
    let accuracy = grid_norm(&r, &w);
    Ok(Quasimode {
        xs,
        u,
        residual: r,
        lambda: energy.sqrt(),
        h,
        accuracy,
        support_radius: x_end,
        cutoff,
        cutoff_amplitude: amplitude,
        interval,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuasimodeFamily {
    pub members: Vec<Quasimode>,
    /// Exponent `N` and constant `M` of the perturbation size `h^N / M`.
    pub n_exp: f64,
    pub m_const: f64,
}

/// Quasimodes from consecutive Dirichlet energies inside `[e_min, e_max]`.
pub fn build_cluster(
    model: &PotentialModel,
    interval: f64,
    h: f64,
    cutoff: Cutoff,
    opts: &QuasimodeOptions,
    max_modes: usize,
    independence: (f64, f64),
) -> Result<QuasimodeFamily> {
    let (lo, hi) = opts
        .energy_window
        .ok_or_else(|| Error::Precondition("a cluster needs an energy window".into()))?;
    let mut count = 4usize;
    let modes = loop {
        let modes = dirichlet_eigensolve(model, interval, h, count, None)?;
        if modes.last().map(|m| m.energy > hi).unwrap_or(true) || count >= modes[0].xs.len() {
            break modes;
        }
        count = (2 * count).min(modes[0].xs.len());
    };
    let members = modes
        .iter()
        .filter(|m| lo <= m.energy && m.energy <= hi)
        .take(max_modes)
        .map(|m| build_quasimode(model, m, cutoff, opts))
        .collect::<Result<Vec<_>>>()?;
    Ok(QuasimodeFamily { members, n_exp: independence.0, m_const: independence.1 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndependenceReport {
    pub independent: bool,
    /// Smallest singular value of the members in orthonormal coordinates.
    pub margin: f64,
    /// `2 m h^N / M`.
    pub threshold: f64,
}

fn resample(q: &Quasimode, xs: &[f64]) -> Vec<f64> {
    xs.iter()
        .map(|&x| {
            if x <= q.xs[0] || x >= q.xs[q.xs.len() - 1] {
                return if x == q.xs[0] { q.u[0] } else { 0.0 };
            }
            let k = q.xs.partition_point(|&t| t <= x) - 1;
            let t = (x - q.xs[k]) / (q.xs[k + 1] - q.xs[k]);
            q.u[k] * (1.0 - t) + q.u[k + 1] * t
        })
        .collect()
}

/// Gram-matrix test: any `h^N/M` perturbation of the family stays linearly
/// independent when the smallest singular value exceeds `2 m h^N / M`.
pub fn independence_check(family: &QuasimodeFamily, h: f64) -> IndependenceReport {
    let m = family.members.len();
    let threshold = 2.0 * m as f64 * h.powf(family.n_exp) / family.m_const;
    if m == 0 {
        return IndependenceReport { independent: false, margin: 0.0, threshold };
    }
    let base = &family.members[0];
    let w = base.weights();
    let cols: Vec<Vec<f64>> = family
        .members
        .iter()
        .map(|q| if q.xs == base.xs { q.u.clone() } else { resample(q, &base.xs) })
        .collect();
    let gram = DMatrix::<f64>::from_fn(m, m, |i, j| (0..w.len()).map(|k| w[k] * cols[i][k] * cols[j][k]).sum());
    let lmin = SymmetricEigen::new(gram).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let margin = lmin.max(0.0).sqrt();
    IndependenceReport { independent: margin > threshold, margin, threshold }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin_model, Term};

    fn gb() -> PotentialModel {
        builtin_model("gauss_barrier", &[2.0, 2.0, 0.5]).unwrap()
    }

    /// Right turning point of the barrier at unit energy.
    fn turning() -> f64 {
        2.0 + 0.5 * 2f64.ln().sqrt()
    }

    fn gb_mode(h: f64) -> DirichletMode {
        let modes = dirichlet_eigensolve(&gb(), turning(), h, 20, None).unwrap();
        modes.into_iter().min_by(|a, b| (a.energy - 1.0).abs().partial_cmp(&(b.energy - 1.0).abs()).unwrap()).unwrap()
    }

    #[test]
    fn free_dirichlet_eigenvalues() {
        let free = builtin_model("free", &[]).unwrap();
        let pi = std::f64::consts::PI;
        let coarse = dirichlet_eigensolve(&free, pi, 1.0, 4, Some(pi / 100.0)).unwrap();
        let fine = dirichlet_eigensolve(&free, pi, 1.0, 4, Some(pi / 200.0)).unwrap();
        for (k, (c, f)) in coarse.iter().zip(&fine).enumerate() {
            let exact = ((k + 1) * (k + 1)) as f64;
            assert!((f.energy - exact).abs() < 1e-6 * exact, "{} vs {exact}", f.energy);
            // fourth order: halving the spacing divides the error by ~16
            let ratio = (c.energy - exact).abs() / (f.energy - exact).abs();
            assert!(ratio > 12.0 && ratio < 20.0, "ratio {ratio}");
        }
    }

    #[test]
    fn square_well_dirichlet_eigenvalues() {
        let sw = builtin_model("square_well", &[10.0, 1.0]).unwrap();
        let modes = dirichlet_eigensolve(&sw, 1.0, 1.0, 3, Some(1.0 / 400.0)).unwrap();
        for (n, m) in modes.iter().enumerate() {
            let k = (n + 1) as f64 * std::f64::consts::PI;
            assert!((m.energy - (k * k - 10.0)).abs() < 1e-6, "{} vs {}", m.energy, k * k - 10.0);
        }
    }

    #[test]
    fn eigensolve_rejects_bad_requests() {
        let free = builtin_model("free", &[]).unwrap();
        assert!(dirichlet_eigensolve(&free, 1.0, 1.0, 1000, Some(0.1)).is_err());
        assert!(matches!(dirichlet_eigensolve(&free, 1.0, 0.05, 10, Some(0.05)), Err(Error::Resolution(_))));
    }

    #[test]
    fn gauss_barrier_has_mode_below_barrier() {
        for h in [0.12, 0.1] {
            let modes = dirichlet_eigensolve(&gb(), 3.0, h, 1, None).unwrap();
            assert!(modes[0].energy < 2.0);
            // Bohr–Sommerfeld: the well [0, ~1.5] with a hard wall holds its
            // lowest state near (π h / 1.5)²
            let bs = (std::f64::consts::PI * h / 1.5).powi(2);
            assert!(modes[0].energy > 0.5 * bs && modes[0].energy < 2.0 * bs, "{} vs {bs}", modes[0].energy);
        }
    }

    #[test]
    fn shooting_sharpens_the_energy() {
        let free = builtin_model("free", &[]).unwrap();
        let pi = std::f64::consts::PI;
        let mode = &dirichlet_eigensolve(&free, pi, 1.0, 2, Some(pi / 40.0)).unwrap()[1];
        let e = refine_dirichlet_energy(&free, pi, 1.0, mode.energy, 0.1).unwrap();
        assert!((e - 4.0).abs() < 1e-11, "{e}");
    }

    #[test]
    fn inactive_cutoff_leaves_only_rounding() {
        // tunneling exponent about 19 at x = 2.2: the lowest mode is below 1e-7 there
        let model = builtin_model("gauss_barrier", &[8.0, 2.5, 0.5]).unwrap();
        let mode = &dirichlet_eigensolve(&model, 2.4, 0.05, 1, None).unwrap()[0];
        let opts = QuasimodeOptions { amplitude_limit: 1e-6, ..Default::default() };
        let q = build_quasimode(&model, mode, Cutoff::new(2.2, 0.2).unwrap(), &opts).unwrap();
        assert!(q.cutoff_amplitude < 1e-7, "{}", q.cutoff_amplitude);
        assert!(q.accuracy < 1e-8, "{}", q.accuracy);
    }

    #[test]
    fn quasimode_invariants() {
        let h = 0.1;
        let q = build_quasimode(&gb(), &gb_mode(h), Cutoff::new(2.05, 0.3).unwrap(), &QuasimodeOptions::default()).unwrap();
        assert!((q.norm() - 1.0).abs() < 1e-12);
        assert!((q.residual_norm() - q.accuracy).abs() <= 1e-12 * q.accuracy.max(1.0));
        assert!(q.accuracy > 0.0);
        for (&x, &u) in q.xs.iter().zip(&q.u) {
            if x > q.support_radius {
                assert_eq!(u, 0.0);
            }
        }
        assert_eq!(q.u[q.u.len() - 1], 0.0);
        // Rayleigh quotient against an independent quadratic-form evaluation
        let rq = q.energy_form(&gb());
        assert!((rq - q.energy()).abs() <= q.accuracy, "{rq} vs {} (R = {})", q.energy(), q.accuracy);
    }

    #[test]
    fn accuracy_is_mesh_independent() {
        let h = 0.08;
        let mode = gb_mode(h);
        let cut = Cutoff::new(2.05, 0.3).unwrap();
        let coarse = build_quasimode(&gb(), &mode, cut, &QuasimodeOptions::default()).unwrap();
        let fine = build_quasimode(&gb(), &mode, cut, &QuasimodeOptions { spacing_over_h: 1.0 / 80.0, ..Default::default() }).unwrap();
        let ratio = coarse.accuracy / fine.accuracy;
        assert!(ratio > 0.5 && ratio < 2.0, "{ratio}");
    }

    #[test]
    fn accuracy_decays_with_h() {
        let cut = Cutoff::new(2.05, 0.3).unwrap();
        let acc: Vec<f64> = [0.12, 0.1, 0.08, 0.06]
            .iter()
            .map(|&h| build_quasimode(&gb(), &gb_mode(h), cut, &QuasimodeOptions::default()).unwrap().accuracy)
            .collect();
        let inv_h: Vec<f64> = [0.12f64, 0.1, 0.08, 0.06].iter().map(|h| 1.0 / h).collect();
        let logs: Vec<f64> = acc.iter().map(|a| a.ln()).collect();
        let fit = crate::linalg::linear_fit(&inv_h, &logs).unwrap();
        assert!(fit.slope < 0.0, "{acc:?}");
    }

    #[test]
    fn cutoff_is_local() {
        let h = 0.1;
        let mode = gb_mode(h);
        let cut = Cutoff::new(2.05, 0.3).unwrap();
        let q = build_quasimode(&gb(), &mode, cut, &QuasimodeOptions::default()).unwrap();
        let far = gb().with_extra_potential(Term::Gaussian { height: 3.0, center: q.support_radius + 1.5, width: 0.2 });
        let q2 = build_quasimode(&far, &mode, cut, &QuasimodeOptions::default()).unwrap();
        assert!((q2.accuracy - q.accuracy).abs() < 0.01 * q.accuracy);
    }

    #[test]
    fn cutoff_in_the_well_is_rejected() {
        let r = build_quasimode(&gb(), &gb_mode(0.1), Cutoff::new(0.8, 0.3).unwrap(), &QuasimodeOptions::default());
        assert!(matches!(r, Err(Error::BadCutoff { .. })));
    }

    #[test]
    fn energy_window_is_enforced() {
        let opts = QuasimodeOptions { energy_window: Some((1.5, 1.8)), ..Default::default() };
        let r = build_quasimode(&gb(), &gb_mode(0.1), Cutoff::new(2.05, 0.3).unwrap(), &opts);
        assert!(matches!(r, Err(Error::Precondition(_))));
    }

    fn synthetic(xs: Vec<f64>, u: Vec<f64>) -> Quasimode {
        Quasimode {
            residual: vec![0.0; xs.len()],
            xs,
            u,
            lambda: 1.0,
            h: 0.1,
            accuracy: 0.0,
            support_radius: 1.0,
            cutoff: Cutoff::new(1.0, 0.2).unwrap(),
            cutoff_amplitude: 0.0,
            interval: 1.0,
        }
    }

    #[test]
    fn independence_examples() {
        let pi = std::f64::consts::PI;
        let xs: Vec<f64> = (0..=400).map(|k| k as f64 / 400.0).collect();
        let s1: Vec<f64> = xs.iter().map(|x| 2f64.sqrt() * (pi * x).sin()).collect();
        let s2: Vec<f64> = xs.iter().map(|x| 2f64.sqrt() * (2.0 * pi * x).sin()).collect();
        let pair = QuasimodeFamily { members: vec![synthetic(xs.clone(), s1.clone()), synthetic(xs.clone(), s2)], n_exp: 2.0, m_const: 1.0 };
        let rep = independence_check(&pair, 0.1);
        assert!(rep.independent && (rep.margin - 1.0).abs() < 1e-9, "{rep:?}");
        let dup = QuasimodeFamily { members: vec![synthetic(xs.clone(), s1.clone()), synthetic(xs, s1)], n_exp: 2.0, m_const: 1.0 };
        let rep = independence_check(&dup, 0.1);
        assert!(!rep.independent && rep.margin < 1e-7, "{rep:?}");
    }

    #[test]
    fn distinct_gauss_barrier_modes_are_nearly_orthogonal() {
        let h = 0.1;
        let opts = QuasimodeOptions { energy_window: Some((0.3, 1.1)), ..Default::default() };
        let fam = build_cluster(&gb(), turning(), h, Cutoff::new(2.05, 0.3).unwrap(), &opts, 2, (1.0, 1.0)).unwrap();
        assert_eq!(fam.members.len(), 2);
        let rep = independence_check(&fam, h);
        assert!(rep.margin > 0.9, "{rep:?}");
    }
}
