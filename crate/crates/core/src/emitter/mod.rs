//! Light-emitting transmitter: circuit, emitter rate equations and the
//! resulting photon-delay distribution.
//!
//! These models run offline, once per neuron design; the network engine
//! only ever sees an [`EmissionDistribution`].

mod distribution;
mod source;
mod transmitter;

pub use distribution::EmissionDistribution;
pub use source::{
    simulate_ec, simulate_qd, tail_lifetime, EcParams, LightSource, QdParams, SourceTrace, Preset,
};
pub use transmitter::{
    simulate_transmitter, DiodeParams, Mosfet, TransmitterParams, TransmitterTrace, TronProfile,
    CAPACITANCE_PER_AREA, DEFAULT_EMITTER_DENSITY, LED_RC, Q_E,
};

use crate::error::{Error, Result};
use crate::ode::{integrate, Flow, SolverOptions};

/// Piecewise-linear current (A) against time (s); zero outside the samples.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CurrentTrace {
    pub times: Vec<f64>,
    pub current: Vec<f64>,
}

impl CurrentTrace {
    /// Rectangular pulse of `amplitude` from `start` for `width`.
    pub fn square(start: f64, width: f64, amplitude: f64) -> Self {
        let e = width * 1e-6;
        CurrentTrace {
            times: vec![start - e, start, start + width, start + width + e],
            current: vec![0.0, amplitude, amplitude, 0.0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.times.len() != self.current.len() || self.times.is_empty() {
            return Err(Error::InvalidParameter("current trace needs matching, non-empty columns".into()));
        }
        if self.times.windows(2).any(|w| !(w[1] >= w[0])) {
            return Err(Error::InvalidParameter("current trace times must be ascending".into()));
        }
        if self.current.iter().any(|i| !(*i >= 0.0) || !i.is_finite()) {
            return Err(Error::InvalidParameter("injection current must be finite and non-negative".into()));
        }
        Ok(())
    }

    pub fn at(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&x| x <= t);
        if k == 0 || k == self.times.len() {
            return 0.0;
        }
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let (i0, i1) = (self.current[k - 1], self.current[k]);
        if t1 == t0 {
            i1
        } else {
            i0 + (i1 - i0) * (t - t0) / (t1 - t0)
        }
    }

    /// Total injected charge (C), trapezoidal.
    pub fn charge(&self) -> f64 {
        self.times
            .windows(2)
            .zip(self.current.windows(2))
            .map(|(t, i)| 0.5 * (i[0] + i[1]) * (t[1] - t[0]))
            .sum()
    }

    pub fn end(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }
}

/// Integrates from `t = 0` and samples the dense output every `dt` up to
/// `t_end` inclusive.
fn sample_uniform<const N: usize, F>(
    f: F,
    y0: [f64; N],
    t_end: f64,
    dt: f64,
    stops: &[f64],
    opts: &SolverOptions,
) -> Result<(Vec<f64>, Vec<[f64; N]>)>
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
{
    let n = (t_end / dt).floor() as usize + 1;
    let mut times = Vec::with_capacity(n);
    let mut states = Vec::with_capacity(n);
    times.push(0.0);
    states.push(y0);
    let mut next = 1;
    integrate(f, 0.0, y0, t_end, stops, opts, |st| {
        while next < n && next as f64 * dt <= st.t1 {
            let t = next as f64 * dt;
            times.push(t);
            states.push(st.interp_all(t));
            next += 1;
        }
        Flow::Continue
    })?;
    Ok((times, states))
}

/// Full offline chain: transmitter, light source, delay distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainConfig {
    pub preset: Preset,
    pub n_emitters: f64,
    /// Capacitance per junction area (F/cm²).
    pub c_a: f64,
    pub switch_time: f64,
    /// Simulated span after the switch (s).
    pub span: f64,
    pub dt_out: f64,
}

impl ChainConfig {
    pub fn new(preset: Preset) -> Self {
        let span = match preset {
            Preset::QdDefault => 40e-9,
            Preset::WcenterDefault => 800e-9,
        };
        ChainConfig {
            preset,
            n_emitters: 1e3,
            c_a: CAPACITANCE_PER_AREA[0],
            switch_time: 1e-9,
            span,
            dt_out: span / 8000.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Chain {
    pub transmitter: TransmitterTrace,
    pub source: SourceTrace,
    /// Delays measured from the tron switching.
    pub distribution: EmissionDistribution,
}

pub fn run_chain(c: &ChainConfig) -> Result<Chain> {
    let source = c.preset.source(c.n_emitters);
    let (tp, dp) = TransmitterParams::one_micron(c.n_emitters, source.areal_density(), c.c_a);
    let t_end = c.switch_time + c.span;
    let transmitter = simulate_transmitter(&tp, &dp, c.switch_time, t_end, c.dt_out)?;
    let trace = source.simulate(&transmitter.diode_current(), t_end, c.dt_out)?;
    let delays: Vec<f64> = trace.times.iter().map(|t| t - c.switch_time).collect();
    let mut distribution = EmissionDistribution::from_el(&delays, &trace.el)?;
    if let EmissionDistribution::Tabulated { n_photons, efficiency, .. } = &mut distribution {
        *n_photons = Some(trace.n_photons);
        *efficiency = trace.efficiency();
    }
    Ok(Chain { transmitter, source: trace, distribution })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn current_trace_interpolates_and_integrates() {
        let c = CurrentTrace::square(1.0, 2.0, 3.0);
        assert_eq!(c.at(0.5), 0.0);
        assert_eq!(c.at(2.0), 3.0);
        assert_eq!(c.at(10.0), 0.0);
        assert!((c.charge() - 6.0).abs() < 1e-5);
    }

    #[test]
    fn default_qd_chain() {
        let chain = run_chain(&ChainConfig::new(Preset::QdDefault)).unwrap();
        let s = &chain.source;
        let life = tail_lifetime(&s.times, &s.el, 0.3, 3e-3).unwrap();
        assert!((life - 1e-9).abs() < 0.05e-9, "{life:e}");
        // light never precedes the transmitter delay
        let delay = chain.transmitter.diode_delay().unwrap();
        assert!(chain.distribution.min_delay() > 0.5 * delay);
        let (_, ks) = chain.distribution.fit_parametric();
        assert!(ks < 0.1, "{ks}");
    }
}
