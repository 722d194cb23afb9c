//! Applied-flux waveforms shared by both backends.
//!
//! A drive is a function of time in whatever unit the caller uses. The
//! circuit solver interprets it in units of τ; the phenomenological engine
//! in seconds. [`TimeScaled`] converts between the two.

use serde::{Deserialize, Serialize};

pub trait FluxDrive: Send + Sync {
    fn flux(&self, t: f64) -> f64;
    /// Time derivative of [`FluxDrive::flux`], right-continuous at kinks.
    fn flux_rate(&self, t: f64) -> f64;
    /// Times at which the derivative jumps. Integrators step exactly onto these.
    fn kinks(&self) -> Vec<f64> {
        Vec::new()
    }
    /// Fills `out[k]` with the flux at `(first_step + k) as f64 * dt`.
    /// Implementations must agree exactly with [`FluxDrive::flux`].
    fn sample_steps(&self, first_step: u64, dt: f64, out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            *o = self.flux((first_step + k as u64) as f64 * dt);
        }
    }
}

/// One trapezoidal flux pulse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pulse {
    pub start: f64,
    pub rise: f64,
    /// Length of the flat top.
    pub top: f64,
    pub fall: f64,
    pub amplitude: f64,
}

impl Pulse {
    pub fn end(&self) -> f64 {
        self.start + self.rise + self.top + self.fall
    }

    fn eval(&self, t: f64) -> (f64, f64) {
        let t = t - self.start;
        if t < 0.0 {
            (0.0, 0.0)
        } else if t < self.rise {
            (self.amplitude * t / self.rise, self.amplitude / self.rise)
        } else if t < self.rise + self.top {
            (self.amplitude, 0.0)
        } else if t < self.rise + self.top + self.fall {
            let u = t - self.rise - self.top;
            (self.amplitude * (1.0 - u / self.fall), -self.amplitude / self.fall)
        } else {
            (0.0, 0.0)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Drive {
    Constant { flux: f64 },
    /// Linear from `from` at `t_start` to `to` at `t_end`, held outside.
    Ramp { t_start: f64, t_end: f64, from: f64, to: f64 },
    /// Non-overlapping pulses sorted by start time.
    PulseTrain { pulses: Vec<Pulse> },
    /// Piecewise-linear through samples; held constant outside.
    Tabulated { times: Vec<f64>, values: Vec<f64> },
}

impl Drive {
    pub fn zero() -> Self {
        Drive::Constant { flux: 0.0 }
    }

    /// Last time at which the drive changes.
    pub fn end(&self) -> f64 {
        match self {
            Drive::Constant { .. } => 0.0,
            Drive::Ramp { t_end, .. } => *t_end,
            Drive::PulseTrain { pulses } => pulses.last().map_or(0.0, Pulse::end),
            Drive::Tabulated { times, .. } => times.last().copied().unwrap_or(0.0),
        }
    }

    fn eval(&self, t: f64) -> (f64, f64) {
        match self {
            Drive::Constant { flux } => (*flux, 0.0),
            Drive::Ramp { t_start, t_end, from, to } => {
                if t < *t_start {
                    (*from, 0.0)
                } else if t >= *t_end {
                    (*to, 0.0)
                } else {
                    let slope = (to - from) / (t_end - t_start);
                    (from + slope * (t - t_start), slope)
                }
            }
            Drive::PulseTrain { pulses } => {
                let i = pulses.partition_point(|p| p.start <= t);
                if i == 0 {
                    (0.0, 0.0)
                } else {
                    pulses[i - 1].eval(t)
                }
            }
            Drive::Tabulated { times, values } => {
                if times.is_empty() {
                    return (0.0, 0.0);
                }
                let i = times.partition_point(|&x| x <= t);
                if i == 0 {
                    (values[0], 0.0)
                } else if i == times.len() {
                    (values[i - 1], 0.0)
                } else {
                    let (t0, t1) = (times[i - 1], times[i]);
                    let slope = (values[i] - values[i - 1]) / (t1 - t0);
                    (values[i - 1] + slope * (t - t0), slope)
                }
            }
        }
    }
}

impl FluxDrive for Drive {
    fn flux(&self, t: f64) -> f64 {
        self.eval(t).0
    }

    fn flux_rate(&self, t: f64) -> f64 {
        self.eval(t).1
    }

    fn sample_steps(&self, first_step: u64, dt: f64, out: &mut [f64]) {
        let Drive::PulseTrain { pulses } = self else {
            for (k, o) in out.iter_mut().enumerate() {
                *o = self.flux((first_step + k as u64) as f64 * dt);
            }
            return;
        };
        // Sweep a cursor forward instead of searching at every sample.
        let mut i = pulses.partition_point(|p| p.start <= first_step as f64 * dt);
        for (k, o) in out.iter_mut().enumerate() {
            let t = (first_step + k as u64) as f64 * dt;
            while i < pulses.len() && pulses[i].start <= t {
                i += 1;
            }
            *o = if i == 0 { 0.0 } else { pulses[i - 1].eval(t).0 };
        }
    }

    fn kinks(&self) -> Vec<f64> {
        match self {
            Drive::Constant { .. } => Vec::new(),
            Drive::Ramp { t_start, t_end, .. } => vec![*t_start, *t_end],
            Drive::PulseTrain { pulses } => pulses
                .iter()
                .flat_map(|p| {
                    [p.start, p.start + p.rise, p.start + p.rise + p.top, p.end()]
                })
                .collect(),
            Drive::Tabulated { times, .. } => times.clone(),
        }
    }
}

/// Evaluates `inner` at `t / scale`; with `scale = ω_c` this turns a drive
/// in seconds into one in τ.
pub struct TimeScaled<'a, D: FluxDrive + ?Sized> {
    pub inner: &'a D,
    pub scale: f64,
}

impl<D: FluxDrive + ?Sized> FluxDrive for TimeScaled<'_, D> {
    fn flux(&self, t: f64) -> f64 {
        self.inner.flux(t / self.scale)
    }

    fn flux_rate(&self, t: f64) -> f64 {
        self.inner.flux_rate(t / self.scale) / self.scale
    }

    fn kinks(&self) -> Vec<f64> {
        self.inner.kinks().into_iter().map(|k| k * self.scale).collect()
    }
}
