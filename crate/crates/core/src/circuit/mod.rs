//! First-principles circuit model of RI and RTTI dendrites.
//!
//! Every junction obeys the RCSJ equation `β_c δ'' = i − sin δ − δ'` in
//! dimensionless time τ = ω_c t. The branch currents `i` are algebraic
//! functions of the junction phases, the applied flux and the
//! integration-loop current.

mod ri;
mod rtti;

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::drive::FluxDrive;
use crate::error::{Error, Result};
use crate::ode::{self, Flow, SolverOptions, Step};

pub use ri::RiParams;
pub use rtti::RttiParams;

pub const TWO_PI: f64 = 2.0 * PI;

/// Magnetic flux quantum h/2e in V·s.
pub const PHI0: f64 = 2.067_833_848_461_929e-15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    pub phi0: f64,
    /// Junction critical current (A).
    pub ic: f64,
    /// Junction shunt resistance (Ω).
    pub rj: f64,
    /// Characteristic Josephson frequency 2π r_j I_c / Φ₀ (rad/s).
    pub omega_c: f64,
}

impl PhysicalConstants {
    pub fn new(ic: f64, rj: f64) -> Result<Self> {
        if !(ic > 0.0 && rj > 0.0) {
            return Err(Error::InvalidParameter("I_c and r_j must be positive".into()));
        }
        Ok(PhysicalConstants { phi0: PHI0, ic, rj, omega_c: TWO_PI * rj * ic / PHI0 })
    }

    pub fn tau(&self, seconds: f64) -> f64 {
        seconds * self.omega_c
    }

    pub fn seconds(&self, tau: f64) -> f64 {
        tau / self.omega_c
    }

    /// Leak parameter α giving decay time `tau_di` (s) for a loop of inductance parameter `beta`.
    pub fn alpha_for(&self, beta: f64, tau_di: f64) -> f64 {
        beta / (self.omega_c * tau_di)
    }

    pub fn tau_di(&self, beta: f64, alpha: f64) -> f64 {
        beta / (self.omega_c * alpha)
    }
}

impl Default for PhysicalConstants {
    /// I_c = 100 µA with r_j chosen so that ω_c/2π = 123 GHz, i.e. 100 ps is 12.3 in units of 2π/ω_c.
    fn default() -> Self {
        let ic = 100e-6;
        let rj = 1.23e11 * PHI0 / ic;
        PhysicalConstants::new(ic, rj).expect("positive constants")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum DendriteKind {
    Ri,
    Rtti,
}

impl std::fmt::Display for DendriteKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DendriteKind::Ri => "RI",
            DendriteKind::Rtti => "RTTI",
        })
    }
}

impl std::str::FromStr for DendriteKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "RI" => Ok(DendriteKind::Ri),
            "RTTI" => Ok(DendriteKind::Rtti),
            _ => Err(Error::Unknown { what: "dendrite kind", name: s.into() }),
        }
    }
}

/// A dendrite circuit with `N` state variables laid out as
/// `[δ₁, δ₁', δ₂, δ₂', …, i_di]`.
pub trait Circuit<const N: usize>: Sync {
    const JUNCTIONS: usize = (N - 1) / 2;

    /// Branch currents through each junction, in junction order.
    fn junction_currents(&self, y: &[f64; N], phi: f64) -> [f64; 4];

    /// dy/dτ given the applied flux and its τ-derivative.
    fn rhs(&self, y: &[f64; N], phi: f64, dphi: f64) -> [f64; N];

    fn beta_c(&self) -> f64;

    /// Junction whose fluxons enter the integration loop.
    fn output_junction(&self) -> usize;

    /// Dimensionless voltage across the element feeding the integration
    /// loop; its integral over one fluxon period is 2π.
    fn output_voltage(&self, y: &[f64; N]) -> f64;

    /// Total bias injected into the circuit.
    fn total_bias(&self) -> f64;

    fn beta_di(&self) -> f64;
}

pub(crate) fn junction_rhs<const N: usize>(y: &[f64; N], currents: &[f64; 4], beta_c: f64, n_junctions: usize, out: &mut [f64; N]) {
    for j in 0..n_junctions {
        let d = y[2 * j];
        let v = y[2 * j + 1];
        out[2 * j] = v;
        out[2 * j + 1] = (currents[j] - d.sin() - v) / beta_c;
    }
}

/// Streams upward 2π crossings of one phase.
#[derive(Debug, Clone)]
pub struct FluxonCounter {
    level: i64,
}

impl FluxonCounter {
    pub fn new(delta0: f64) -> Self {
        FluxonCounter { level: (delta0 / TWO_PI).floor() as i64 }
    }

    /// Feeds the segment `(t0, d0) → (t1, d1)`; returns crossing times of
    /// levels above the highest seen so far, interpolated linearly.
    pub fn advance(&mut self, t0: f64, d0: f64, t1: f64, d1: f64, out: &mut Vec<f64>) {
        let top = (d1 / TWO_PI).floor() as i64;
        while top > self.level {
            self.level += 1;
            let target = self.level as f64 * TWO_PI;
            let frac = if d1 != d0 { ((target - d0) / (d1 - d0)).clamp(0.0, 1.0) } else { 1.0 };
            out.push(t0 + frac * (t1 - t0));
        }
    }
}

/// Times at which `phase` crosses successive multiples of 2π going upward,
/// by linear interpolation between samples.
pub fn detect_fluxons(tau: &[f64], phase: &[f64]) -> Vec<f64> {
    let mut out = Vec::new();
    if phase.is_empty() {
        return out;
    }
    let mut counter = FluxonCounter::new(phase[0]);
    for k in 1..phase.len() {
        counter.advance(tau[k - 1], phase[k - 1], tau[k], phase[k], &mut out);
    }
    out
}

/// Full solution on the adaptive mesh.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CircuitTrace {
    pub kind: Option<DendriteKind>,
    pub tau: Vec<f64>,
    pub flux: Vec<f64>,
    /// Per junction.
    pub phases: Vec<Vec<f64>>,
    pub voltages: Vec<Vec<f64>>,
    pub i_di: Vec<f64>,
    /// Per junction branch current.
    pub currents: Vec<Vec<f64>>,
    pub total_bias: f64,
    /// Dimensionless voltage feeding the integration loop.
    pub output_voltage: Vec<f64>,
}

impl CircuitTrace {
    pub fn junctions(&self) -> usize {
        self.phases.len()
    }

    pub fn fluxon_times(&self, junction: usize) -> Vec<f64> {
        detect_fluxons(&self.tau, &self.phases[junction])
    }

    /// Largest |Σ branch currents − total bias| over the mesh.
    pub fn current_law_residual(&self) -> f64 {
        (0..self.tau.len())
            .map(|k| {
                let sum: f64 = self.currents.iter().map(|c| c[k]).sum::<f64>() + self.i_di[k];
                (sum - self.total_bias).abs()
            })
            .fold(0.0, f64::max)
    }

    /// ∫ output voltage dτ between consecutive fluxons of `junction`,
    /// using trapezoidal quadrature on the mesh with interpolated end points.
    pub fn flux_per_fluxon(&self, junction: usize) -> Vec<f64> {
        let times = self.fluxon_times(junction);
        let cumulative = cumulative_trapezoid(&self.tau, &self.output_voltage);
        let at = |t: f64| interp_linear(&self.tau, &cumulative, t);
        times.windows(2).map(|w| at(w[1]) - at(w[0])).collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        let mut header = vec!["tau".to_string(), "phi".to_string()];
        for j in 0..self.junctions() {
            header.push(format!("delta{}", j + 1));
        }
        header.push("i_di".into());
        for j in 0..self.junctions() {
            header.push(format!("i{}", j + 1));
        }
        writeln!(buf, "{}", header.join(",")).map_err(|e| Error::io(path, e))?;
        for k in 0..self.tau.len() {
            let mut row = vec![self.tau[k], self.flux[k]];
            row.extend(self.phases.iter().map(|p| p[k]));
            row.push(self.i_di[k]);
            row.extend(self.currents.iter().map(|c| c[k]));
            let line: Vec<String> = row.iter().map(|v| format!("{v:.9e}")).collect();
            writeln!(buf, "{}", line.join(",")).map_err(|e| Error::io(path, e))?;
        }
        crate::io_util::write_atomic(path, &buf)
    }
}

pub(crate) fn cumulative_trapezoid(x: &[f64], y: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    let mut acc = 0.0;
    for k in 0..x.len() {
        if k > 0 {
            acc += 0.5 * (y[k] + y[k - 1]) * (x[k] - x[k - 1]);
        }
        out.push(acc);
    }
    out
}

/// Linear interpolation on ascending `x`; clamps outside the range.
pub fn interp_linear(x: &[f64], y: &[f64], t: f64) -> f64 {
    let i = x.partition_point(|&v| v <= t);
    if i == 0 {
        return y[0];
    }
    if i == x.len() {
        return y[x.len() - 1];
    }
    let (x0, x1) = (x[i - 1], x[i]);
    if x1 == x0 {
        return y[i];
    }
    y[i - 1] + (y[i] - y[i - 1]) * (t - x0) / (x1 - x0)
}

/// Integrates `circuit` from rest under `drive` (a function of τ) and hands
/// each accepted step to `observer`.
pub fn run<const N: usize, C, D, O>(
    circuit: &C,
    drive: &D,
    tau_end: f64,
    opts: &SolverOptions,
    observer: O,
) -> Result<ode::Summary<N>>
where
    C: Circuit<N>,
    D: FluxDrive + ?Sized,
    O: FnMut(&Step<'_, N>) -> Flow,
{
    if !(tau_end > 0.0) {
        return Err(Error::InvalidParameter(format!("tau_end must be positive, got {tau_end}")));
    }
    let mut stops: Vec<f64> = drive.kinks().into_iter().filter(|&k| k > 0.0 && k < tau_end).collect();
    stops.sort_by(f64::total_cmp);
    stops.dedup();
    let rhs = |t: f64, y: &[f64; N]| circuit.rhs(y, drive.flux(t), drive.flux_rate(t));
    ode::integrate(rhs, 0.0, [0.0; N], tau_end, &stops, opts, observer)
}

/// Integrates and keeps every accepted step.
pub fn simulate<const N: usize, C, D>(circuit: &C, drive: &D, tau_end: f64, tol: f64, kind: DendriteKind) -> Result<CircuitTrace>
where
    C: Circuit<N>,
    D: FluxDrive + ?Sized,
{
    let nj = C::JUNCTIONS;
    let mut trace = CircuitTrace {
        kind: Some(kind),
        phases: vec![Vec::new(); nj],
        voltages: vec![Vec::new(); nj],
        currents: vec![Vec::new(); nj],
        total_bias: circuit.total_bias(),
        ..Default::default()
    };
    let push = |trace: &mut CircuitTrace, t: f64, y: &[f64; N]| {
        let phi = drive.flux(t);
        let cur = circuit.junction_currents(y, phi);
        trace.tau.push(t);
        trace.flux.push(phi);
        for j in 0..nj {
            trace.phases[j].push(y[2 * j]);
            trace.voltages[j].push(y[2 * j + 1]);
            trace.currents[j].push(cur[j]);
        }
        trace.i_di.push(y[N - 1]);
        trace.output_voltage.push(circuit.output_voltage(y));
    };
    push(&mut trace, 0.0, &[0.0; N]);
    run(circuit, drive, tau_end, &SolverOptions::with_tol(tol), |st| {
        push(&mut trace, st.t1, st.y1);
        Flow::Continue
    })?;
    Ok(trace)
}

pub fn simulate_ri<D: FluxDrive + ?Sized>(params: &RiParams, drive: &D, tau_end: f64, tol: f64) -> Result<CircuitTrace> {
    params.validate()?;
    simulate(params, drive, tau_end, tol, DendriteKind::Ri)
}

pub fn simulate_rtti<D: FluxDrive + ?Sized>(params: &RttiParams, drive: &D, tau_end: f64, tol: f64) -> Result<CircuitTrace> {
    params.validate()?;
    simulate(params, drive, tau_end, tol, DendriteKind::Rtti)
}

/// Steady-state SQUID response at one operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SquidPoint {
    pub ib: f64,
    pub phi: f64,
    /// Mean dimensionless voltage between two consecutive fluxons.
    pub voltage: f64,
    /// Fluxons per unit τ.
    pub fluxon_rate: f64,
}

/// Time-averaged voltage and fluxon rate of the receiving SQUID with the
/// integration loop made so large that no signal accumulates.
pub fn squid_response(base: &RiParams, ib_list: &[f64], phi_list: &[f64], tol: f64) -> Result<Vec<SquidPoint>> {
    let mut out = Vec::with_capacity(ib_list.len() * phi_list.len());
    for &ib in ib_list {
        for &phi in phi_list {
            let params = RiParams { ib, alpha: 0.0, beta_di: 1e9, ..*base };
            params.validate()?;
            out.push(squid_point(&params, phi, tol)?);
        }
    }
    Ok(out)
}

fn squid_point(params: &RiParams, phi: f64, tol: f64) -> Result<SquidPoint> {
    const SETTLE_FLUXONS: usize = 3;
    const TAU_LIMIT: f64 = 4000.0;
    let drive = crate::drive::Drive::Constant { flux: phi };
    let j = params.output_junction();
    let mut counter = FluxonCounter::new(0.0);
    let mut times = Vec::new();
    let mut integral = 0.0;
    let mut marks = Vec::new();
    run(params, &drive, TAU_LIMIT, &SolverOptions::with_tol(tol), |st| {
        let before = times.len();
        counter.advance(st.t0, st.y0[2 * j], st.t1, st.y1[2 * j], &mut times);
        let v0 = params.output_voltage(st.y0);
        let v1 = params.output_voltage(st.y1);
        let h = st.h();
        // integral at each crossing, interpolating the trapezoid within the step
        for &tc in &times[before..] {
            let f = (tc - st.t0) / h;
            let vc = v0 + f * (v1 - v0);
            marks.push(integral + 0.5 * (v0 + vc) * (tc - st.t0));
        }
        integral += 0.5 * (v0 + v1) * h;
        if times.len() > SETTLE_FLUXONS + 1 {
            Flow::Stop
        } else {
            Flow::Continue
        }
    })?;
    if times.len() <= SETTLE_FLUXONS {
        return Ok(SquidPoint { ib: params.ib, phi, voltage: 0.0, fluxon_rate: 0.0 });
    }
    let n = times.len();
    let dt = times[n - 1] - times[n - 2];
    let voltage = (marks[n - 1] - marks[n - 2]) / dt;
    Ok(SquidPoint { ib: params.ib, phi, voltage, fluxon_rate: 1.0 / dt })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn omega_c_consistent_with_definition() {
        let c = PhysicalConstants::default();
        let expected = TWO_PI * c.rj * c.ic / c.phi0;
        assert!((c.omega_c - expected).abs() <= 1e-15 * expected);
        // 100 ps corresponds to 12.3 units of 2π/ω_c
        assert!((c.tau(100e-12) / TWO_PI - 12.3).abs() < 1e-9);
    }

    #[test]
    fn alpha_round_trip() {
        let c = PhysicalConstants::default();
        let beta = TWO_PI * 1e3;
        let a = c.alpha_for(beta, 50e-9);
        assert!((c.tau_di(beta, a) - 50e-9).abs() < 1e-20);
    }

    #[test]
    fn phase_ramp_fluxon_rate() {
        let omega = 0.37;
        let tau: Vec<f64> = (0..=10_000).map(|k| k as f64 * 0.1).collect();
        let phase: Vec<f64> = tau.iter().map(|t| omega * t).collect();
        let found = detect_fluxons(&tau, &phase);
        let expected = omega * 1000.0 / TWO_PI;
        assert!((found.len() as f64 - expected).abs() <= 1.0);
        for (k, t) in found.iter().enumerate() {
            let exact = (k + 1) as f64 * TWO_PI / omega;
            assert!((t - exact).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_phase_has_no_fluxons() {
        let tau = [0.0, 1.0, 2.0];
        assert!(detect_fluxons(&tau, &[3.0, 3.0, 3.0]).is_empty());
        assert!(detect_fluxons(&[], &[]).is_empty());
    }

    #[test]
    fn oscillation_about_a_level_counts_once() {
        let tau = [0.0, 1.0, 2.0, 3.0, 4.0];
        let phase = [6.0, 6.5, 6.0, 6.5, 6.0];
        assert_eq!(detect_fluxons(&tau, &phase).len(), 1);
    }
}
