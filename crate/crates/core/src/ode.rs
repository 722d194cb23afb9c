//! Dormand–Prince 5(4) integrator with PI step-size control.
//!
//! State is a fixed-size array so the hot loop never allocates. Accepted
//! steps are handed to an observer, which decides what (if anything) to
//! keep; long runs can therefore stream statistics instead of storing a
//! full trajectory.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Largest step the controller may take.
    pub h_max: f64,
    /// Initial step; chosen automatically when `None`.
    pub h_init: Option<f64>,
    pub max_steps: usize,
}

impl SolverOptions {
    pub fn with_tol(tol: f64) -> Self {
        SolverOptions { rtol: tol, atol: tol, ..Self::default() }
    }
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { rtol: 1e-6, atol: 1e-6, h_max: f64::INFINITY, h_init: None, max_steps: usize::MAX }
    }
}

/// One accepted step, with enough information for cubic Hermite dense output.
#[derive(Debug, Clone, Copy)]
pub struct Step<'a, const N: usize> {
    pub t0: f64,
    pub t1: f64,
    pub y0: &'a [f64; N],
    pub y1: &'a [f64; N],
    pub f0: &'a [f64; N],
    pub f1: &'a [f64; N],
}

impl<const N: usize> Step<'_, N> {
    pub fn h(&self) -> f64 {
        self.t1 - self.t0
    }

    /// Cubic Hermite interpolant of component `i` at `t` in `[t0, t1]`.
    pub fn interp(&self, i: usize, t: f64) -> f64 {
        let h = self.h();
        if h == 0.0 {
            return self.y1[i];
        }
        let th = (t - self.t0) / h;
        let th2 = th * th;
        let th3 = th2 * th;
        let h00 = 2.0 * th3 - 3.0 * th2 + 1.0;
        let h10 = th3 - 2.0 * th2 + th;
        let h01 = -2.0 * th3 + 3.0 * th2;
        let h11 = th3 - th2;
        h00 * self.y0[i] + h10 * h * self.f0[i] + h01 * self.y1[i] + h11 * h * self.f1[i]
    }

    pub fn interp_all(&self, t: f64) -> [f64; N] {
        std::array::from_fn(|i| self.interp(i, t))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flow {
    Continue,
    Stop,
}

#[derive(Debug, Clone, Copy)]
pub struct Summary<const N: usize> {
    pub t: f64,
    pub y: [f64; N],
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
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
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

// PI controller constants (Hairer & Wanner, DOPRI5).
const SAFETY: f64 = 0.9;
const BETA: f64 = 0.04;
const EXPO1: f64 = 0.2 - BETA * 0.75;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

#[inline]
fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for (c, k) in terms {
        let hc = h * c;
        for i in 0..N {
            out[i] += hc * k[i];
        }
    }
    out
}

fn check_finite<const N: usize>(t: f64, y: &[f64; N]) -> Result<()> {
    if y.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { tau: t, state: y.to_vec() })
    }
}

fn initial_step<const N: usize, F>(f: &mut F, t0: f64, y0: &[f64; N], f0: &[f64; N], opts: &SolverOptions) -> f64
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
{
    let norm = |v: &[f64; N], y: &[f64; N]| -> f64 {
        let s: f64 = (0..N)
            .map(|i| {
                let sc = opts.atol + opts.rtol * y[i].abs();
                (v[i] / sc).powi(2)
            })
            .sum();
        (s / N as f64).sqrt()
    };
    let d0 = norm(y0, y0);
    let d1 = norm(f0, y0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let y1 = axpy(y0, h0, &[(1.0, f0)]);
    let f1 = f(t0 + h0, &y1);
    let diff: [f64; N] = std::array::from_fn(|i| f1[i] - f0[i]);
    let d2 = norm(&diff, y0) / h0;
    let h1 = if d1.max(d2) <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / d1.max(d2)).powf(0.2) };
    (100.0 * h0).min(h1).min(opts.h_max)
}

/// Integrates `y' = f(t, y)` from `t0` to `t_end`.
///
/// Steps never cross any time listed in `stops` (which must be ascending);
/// use them for kinks in the forcing. `f` is evaluated right-continuously
/// at a stop. The observer sees every accepted step and may end the run early.
pub fn integrate<const N: usize, F, O>(
    mut f: F,
    t0: f64,
    y0: [f64; N],
    t_end: f64,
    stops: &[f64],
    opts: &SolverOptions,
    mut observer: O,
) -> Result<Summary<N>>
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
    O: FnMut(&Step<'_, N>) -> Flow,
{
    if !(opts.rtol > 0.0 && opts.atol > 0.0) {
        return Err(Error::InvalidParameter("tolerances must be positive".into()));
    }
    check_finite(t0, &y0)?;
    let mut t = t0;
    let mut y = y0;
    let mut k1 = f(t, &y);
    let mut evaluations = 1;
    check_finite(t, &k1)?;
    let mut h = match opts.h_init {
        Some(h) => h,
        None => {
            evaluations += 1;
            initial_step(&mut f, t, &y, &k1, opts)
        }
    };
    let mut fac_old: f64 = 1e-4;
    let mut accepted = 0;
    let mut rejected = 0;
    let mut stop_idx = stops.partition_point(|&s| s <= t0);
    let mut last_rejected = false;

    while t < t_end {
        if accepted + rejected >= opts.max_steps {
            return Err(Error::NonConvergence { tau: t, step: h });
        }
        while stop_idx < stops.len() && stops[stop_idx] <= t {
            stop_idx += 1;
        }
        let limit = if stop_idx < stops.len() { stops[stop_idx].min(t_end) } else { t_end };
        h = h.min(opts.h_max);
        let mut t_new = t + h;
        if t_new >= limit || limit - t_new < 1e-10 * h {
            h = limit - t;
            t_new = limit;
        }
        if h <= 1e-14 * t.abs().max(1.0) {
            return Err(Error::NonConvergence { tau: t, step: h });
        }

        let k2 = f(t + C2 * h, &axpy(&y, h, &[(A21, &k1)]));
        let k3 = f(t + C3 * h, &axpy(&y, h, &[(A31, &k1), (A32, &k2)]));
        let k4 = f(t + C4 * h, &axpy(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]));
        let k5 = f(t + C5 * h, &axpy(&y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]));
        let k6 = f(t_new, &axpy(&y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]));
        let y_new = axpy(&y, h, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
        let k7 = f(t_new, &y_new);
        evaluations += 6;

        let mut err = 0.0;
        for i in 0..N {
            let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs());
            err += (e / sc).powi(2);
        }
        let err = (err / N as f64).sqrt();
        if !err.is_finite() {
            // A blown-up trial step is not a solution failure; shrink and retry.
            h *= FAC_MIN;
            rejected += 1;
            last_rejected = true;
            continue;
        }

        let fac11 = err.powf(EXPO1);
        if err <= 1.0 {
            let mut fac = fac11 / fac_old.powf(BETA);
            fac = (fac / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            fac_old = err.max(1e-4);
            let mut h_new = h / fac;
            if last_rejected {
                h_new = h_new.min(h);
            }
            last_rejected = false;
            accepted += 1;
            check_finite(t_new, &y_new)?;
            let step = Step { t0: t, t1: t_new, y0: &y, y1: &y_new, f0: &k1, f1: &k7 };
            let flow = observer(&step);
            t = t_new;
            y = y_new;
            k1 = k7;
            h = h_new;
            if flow == Flow::Stop {
                break;
            }
        } else {
            h /= (fac11 / SAFETY).min(1.0 / FAC_MIN);
            rejected += 1;
            last_rejected = true;
        }
    }
    Ok(Summary { t, y, accepted, rejected, evaluations })
}
