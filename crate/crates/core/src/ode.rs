//! Dormand–Prince 5(4) integrator for the two-component complex systems used
//! by the shooting and Jost solves.
//!
//! Steps land exactly on requested output points and on coefficient
//! breakpoints. Inside a segment the right-hand side is only ever evaluated
//! on the interior side of a breakpoint, so piecewise coefficients are seen
//! from the correct side.

use num_complex::Complex64;

use crate::error::{Error, Result};

pub type State = [Complex64; 2];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Weight of the second component in the error norm is `1 / p_scale`.
    pub p_scale: f64,
    pub max_steps: usize,
    pub initial_step: Option<f64>,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self { rtol: 1e-12, atol: 1e-14, p_scale: 1.0, max_steps: 2_000_000, initial_step: None }
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

#[inline]
fn axpy(y: &State, h: f64, terms: &[(f64, &State)]) -> State {
    let mut out = *y;
    for (c, k) in terms {
        out[0] += k[0] * (h * c);
        out[1] += k[1] * (h * c);
    }
    out
}

fn state_norm(y: &State, p_scale: f64) -> f64 {
    (y[0].norm_sqr() + y[1].norm_sqr() / (p_scale * p_scale)).sqrt()
}

/// Integrates `y' = rhs(x, y)` from `x0` through every point of `outputs`
/// (monotone in the direction of travel) and returns the state at each.
///
/// `breakpoints` are coefficient discontinuities; the integrator stops on
/// them and restarts the derivative from the far side.
pub fn integrate<F>(rhs: F, y0: State, x0: f64, outputs: &[f64], breakpoints: &[f64], opts: &OdeOptions) -> Result<Vec<State>>
where
    F: Fn(f64, &State) -> State,
{
    if outputs.is_empty() {
        return Ok(Vec::new());
    }
    let dir = if outputs[outputs.len() - 1] >= x0 { 1.0 } else { -1.0 };
    if outputs.windows(2).any(|w| (w[1] - w[0]) * dir < 0.0) || (outputs[0] - x0) * dir < 0.0 {
        return Err(Error::Domain("output points must be monotone in the direction of integration".into()));
    }
    let x_end = outputs[outputs.len() - 1];
    let mut stops: Vec<(f64, bool)> = outputs.iter().map(|&x| (x, true)).collect();
    for &b in breakpoints {
        if (b - x0) * dir > 0.0 && (x_end - b) * dir > 0.0 && !outputs.contains(&b) {
            stops.push((b, false));
        }
    }
    stops.sort_by(|a, b| (a.0 * dir).partial_cmp(&(b.0 * dir)).unwrap());

    let mut result = Vec::with_capacity(outputs.len());
    let mut x = x0;
    let mut y = y0;
    let span = (x_end - x0).abs().max(f64::MIN_POSITIVE);
    let mut h_prop = opts.initial_step.unwrap_or(span / 64.0).min(span);
    let mut steps = 0usize;

    for &(target, record) in &stops {
        let seg_lo = x;
        let seg_hi = target;
        let seg_len = (seg_hi - seg_lo).abs();
        if seg_len > 0.0 {
            // evaluation points are nudged inside the open segment
            let nudge = 8.0 * f64::EPSILON * seg_lo.abs().max(seg_hi.abs()).max(1.0);
            let (lo, hi) = if dir > 0.0 { (seg_lo, seg_hi) } else { (seg_hi, seg_lo) };
            let inner = |x: f64| -> f64 {
                if seg_len > 4.0 * nudge {
                    x.clamp(lo + nudge, hi - nudge)
                } else {
                    0.5 * (lo + hi)
                }
            };
            let f = |x: f64, y: &State| rhs(inner(x), y);
            let mut k1 = f(x, &y);
            loop {
                let remaining = (seg_hi - x) * dir;
                if remaining <= 0.0 {
                    break;
                }
                steps += 1;
                if steps > opts.max_steps {
                    return Err(Error::Stiffness { x, reason: format!("exceeded {} steps", opts.max_steps) });
                }
                let last = h_prop >= remaining * (1.0 - 1e-12);
                let h_mag = if last { remaining } else { h_prop };
                if h_mag < 1e-14 * span.max(x.abs()) && !last {
                    return Err(Error::Stiffness { x, reason: "step size underflow".into() });
                }
                let h = h_mag * dir;
                let k2 = f(x + C2 * h, &axpy(&y, h, &[(A21, &k1)]));
                let k3 = f(x + C3 * h, &axpy(&y, h, &[(A31, &k1), (A32, &k2)]));
                let k4 = f(x + C4 * h, &axpy(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]));
                let k5 = f(x + C5 * h, &axpy(&y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]));
                let k6 = f(x + h, &axpy(&y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]));
                let y_new = axpy(&y, h, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
                let x_new = if last { seg_hi } else { x + h };
                let k7 = f(x_new, &y_new);
                let err_vec = axpy(
                    &[Complex64::new(0.0, 0.0); 2],
                    h,
                    &[(E1, &k1), (E3, &k3), (E4, &k4), (E5, &k5), (E6, &k6), (E7, &k7)],
                );
                let scale = opts.atol
                    + opts.rtol * state_norm(&y, opts.p_scale).max(state_norm(&y_new, opts.p_scale));
                let err = state_norm(&err_vec, opts.p_scale) / scale;
                if !err.is_finite() {
                    return Err(Error::Stiffness { x, reason: "non-finite error estimate".into() });
                }
                let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                if err <= 1.0 {
                    x = x_new;
                    y = y_new;
                    k1 = k7;
                    // a clamped final step says nothing about the natural step size
                    if !last || factor < 1.0 {
                        h_prop = h_mag * factor;
                    }
                } else {
                    h_prop = h_mag * factor.min(1.0);
                }
            }
        }
        x = target;
        if record {
            result.push(y);
        }
    }
    Ok(result)
}
