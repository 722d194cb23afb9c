//! Comparison of the phenomenological engine against the circuit solver.

use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::{self, PhysicalConstants, RiParams};
use crate::drive::{Drive, FluxDrive, Pulse, TimeScaled};
use crate::error::{Error, Result};
use crate::network::{check_stability, DendriteSpec, NetworkSpec};
use crate::ode::{Flow, SolverOptions};
use crate::rate_array::{extract_thresholds, CircuitSpec, RateArray};

/// Solver tolerance used when none is given.
pub const DEFAULT_TOL: f64 = 1e-5;

/// Randomized sequence of trapezoidal flux pulses. All times in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SquareTrain {
    pub pulses: usize,
    /// Lower amplitude bound; `None` uses the dendrite's flux threshold.
    #[serde(default)]
    pub amplitude_min: Option<f64>,
    #[serde(default = "half")]
    pub amplitude_max: f64,
    /// Time from the start of the rising edge to the start of the falling edge.
    pub duration: (f64, f64),
    /// Time from the end of one pulse to the start of the next; the train
    /// opens with a pause.
    pub pause: (f64, f64),
    pub edge: f64,
    pub seed: u64,
}

fn half() -> f64 {
    0.5
}

impl SquareTrain {
    pub fn new(pulses: usize, seed: u64) -> Self {
        SquareTrain {
            pulses,
            amplitude_min: None,
            amplitude_max: 0.5,
            duration: (5e-9, 40e-9),
            pause: (10e-9, 100e-9),
            edge: 200e-12,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DriveSpec {
    Constant { flux: f64 },
    LinearRamp { t_start: f64, t_end: f64, from: f64, to: f64 },
    SquareTrain(SquareTrain),
}

impl DriveSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.into()));
        match self {
            DriveSpec::Constant { flux } if !flux.is_finite() => bad("constant flux must be finite"),
            DriveSpec::LinearRamp { t_start, t_end, from, to } => {
                if !(t_start < t_end) || !from.is_finite() || !to.is_finite() {
                    return bad("ramp needs t_start < t_end and finite endpoints");
                }
                Ok(())
            }
            DriveSpec::SquareTrain(s) => {
                let ordered = |(a, b): (f64, f64)| a > 0.0 && a <= b;
                if !(ordered(s.duration) && ordered(s.pause)) {
                    return bad("duration and pause ranges must be positive and ordered");
                }
                if !(s.edge > 0.0 && s.edge <= s.duration.0) {
                    return bad("edge time must be positive and no longer than the shortest pulse");
                }
                if !(s.amplitude_max <= 0.5 && s.amplitude_min.is_none_or(|a| a > 0.0 && a <= s.amplitude_max)) {
                    return bad("amplitude range must satisfy 0 < min <= max <= 1/2");
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// Builds the drive as a function of time in seconds. `threshold` is the
/// flux threshold used when a square train has no explicit lower amplitude.
pub fn generate_drive(spec: &DriveSpec, threshold: Option<f64>) -> Result<Drive> {
    spec.validate()?;
    Ok(match spec {
        DriveSpec::Constant { flux } => Drive::Constant { flux: *flux },
        DriveSpec::LinearRamp { t_start, t_end, from, to } => {
            Drive::Ramp { t_start: *t_start, t_end: *t_end, from: *from, to: *to }
        }
        DriveSpec::SquareTrain(s) => {
            let lo = match (s.amplitude_min, threshold) {
                (Some(a), _) => a,
                (None, Some(th)) if th < s.amplitude_max => th,
                (None, Some(th)) => {
                    return Err(Error::InvalidParameter(format!("flux threshold {th} leaves no amplitude range")))
                }
                (None, None) => return Err(Error::InvalidParameter("square train needs a flux threshold".into())),
            };
            let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
            let mut t = 0.0;
            let mut pulses = Vec::with_capacity(s.pulses);
            for _ in 0..s.pulses {
                t += rng.random_range(s.pause.0..=s.pause.1);
                let duration = rng.random_range(s.duration.0..=s.duration.1);
                let amplitude = rng.random_range(lo..=s.amplitude_max);
                let p = Pulse { start: t, rise: s.edge, top: duration - s.edge, fall: s.edge, amplitude };
                t = p.end();
                pulses.push(p);
            }
            Drive::PulseTrain { pulses }
        }
    })
}

/// Streaming form of the accuracy metric: the denominator accumulates over
/// the reference mesh as it is produced, the numerator over a uniform mesh.
#[derive(Debug, Clone)]
pub struct ChiSquared {
    den: f64,
    last: Option<(f64, f64)>,
}

impl Default for ChiSquared {
    fn default() -> Self {
        Self::new()
    }
}

impl ChiSquared {
    pub fn new() -> Self {
        ChiSquared { den: 0.0, last: None }
    }

    /// Adds a reference sample; samples must arrive in time order.
    pub fn push_reference(&mut self, t: f64, s: f64) {
        if let Some((t0, s0)) = self.last {
            self.den += s0 * s0 * (t - t0);
        }
        self.last = Some((t, s));
    }

    pub fn denominator(&self) -> f64 {
        self.den
    }

    /// Finishes with the candidate series and the reference interpolated
    /// onto the same uniform mesh.
    pub fn finish(&self, times: &[f64], candidate: &[f64], reference: &[f64]) -> Result<f64> {
        if times.len() < 2 || candidate.len() != times.len() || reference.len() != times.len() {
            return Err(Error::EmptyOverlap);
        }
        let num: f64 = (0..times.len() - 1)
            .map(|i| (candidate[i] - reference[i]).powi(2) * (times[i + 1] - times[i]))
            .sum();
        ratio(num, self.den)
    }
}

fn ratio(num: f64, den: f64) -> Result<f64> {
    if den > 0.0 {
        Ok(num / den)
    } else if num == 0.0 {
        Ok(0.0)
    } else {
        Err(Error::ZeroIntegral)
    }
}

/// Accuracy metric between a uniformly sampled series and a reference on
/// its own (adaptive) mesh. The reference is interpolated linearly onto the
/// uniform points inside the overlap; the denominator uses the reference
/// on its native mesh.
pub fn chi_squared(t_soen: &[f64], s_soen: &[f64], t_ode: &[f64], s_ode: &[f64]) -> Result<f64> {
    if t_soen.len() != s_soen.len() || t_ode.len() != s_ode.len() || t_ode.len() < 2 {
        return Err(Error::EmptyOverlap);
    }
    let (lo, hi) = (t_ode[0], t_ode[t_ode.len() - 1]);
    let inside: Vec<usize> = (0..t_soen.len()).filter(|&i| t_soen[i] >= lo && t_soen[i] <= hi).collect();
    if inside.len() < 2 {
        return Err(Error::EmptyOverlap);
    }
    let mut num = 0.0;
    for w in inside.windows(2) {
        let i = w[0];
        let d = s_soen[i] - circuit::interp_linear(t_ode, s_ode, t_soen[i]);
        num += d * d * (t_soen[w[1]] - t_soen[i]);
    }
    let den: f64 = (0..t_ode.len() - 1).map(|i| s_ode[i] * s_ode[i] * (t_ode[i + 1] - t_ode[i])).sum();
    ratio(num, den)
}

/// One comparison point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompareParams {
    /// Integration-loop inductance 2π I_c L_di / Φ₀.
    pub beta: f64,
    /// Decay time (s); `None` means no leak.
    pub tau_di: Option<f64>,
    pub ib: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub beta: f64,
    pub tau_di: Option<f64>,
    pub ib: f64,
    pub dt: f64,
    pub pulses: usize,
    pub seed: Option<u64>,
    pub tol: f64,
    pub chi_squared: f64,
    pub chi_squared_drive: f64,
    /// Wall-clock seconds spent integrating the circuit.
    pub t_ode: f64,
    /// Wall-clock seconds spent stepping the phenomenological model.
    pub t_soen: f64,
    pub ode_steps: usize,
    pub soen_steps: usize,
    /// The step-size guard flagged this configuration.
    pub flagged: bool,
}

impl ComparisonReport {
    pub fn speedup(&self) -> f64 {
        self.t_ode / self.t_soen
    }

    pub const CSV_HEADER: &'static str =
        "beta,tau_di,i_b,dt,pulses,chi2,chi2_drive,t_ode,t_soen,ratio,seed,tol,ode_steps,soen_steps,flagged";

    pub fn csv_row(&self) -> String {
        format!(
            "{:.6e},{},{},{:.6e},{},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e},{},{:e},{},{},{}",
            self.beta,
            self.tau_di.map_or("inf".to_string(), |t| format!("{t:.6e}")),
            self.ib,
            self.dt,
            self.pulses,
            self.chi_squared,
            self.chi_squared_drive,
            self.t_ode,
            self.t_soen,
            self.speedup(),
            self.seed.map_or(String::new(), |s| s.to_string()),
            self.tol,
            self.ode_steps,
            self.soen_steps,
            self.flagged
        )
    }
}

pub fn reports_csv(reports: &[ComparisonReport]) -> String {
    let mut out = format!("{}\n", ComparisonReport::CSV_HEADER);
    for r in reports {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

/// Full description of one comparison run.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub params: CompareParams,
    pub drive: DriveSpec,
    pub dt: f64,
    /// Simulated time after the drive ends (s).
    pub tail: f64,
    pub tol: f64,
    pub constants: PhysicalConstants,
    /// Times the phenomenological run is repeated for timing.
    pub soen_repeats: usize,
}

impl Comparison {
    pub fn new(params: CompareParams, drive: DriveSpec, dt: f64) -> Self {
        Comparison {
            params,
            drive,
            dt,
            tail: 20e-9,
            tol: DEFAULT_TOL,
            constants: PhysicalConstants::default(),
            soen_repeats: 1,
        }
    }
}

/// Both backends' signal and flux on the uniform mesh; the circuit values
/// are interpolated linearly from its adaptive mesh.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ComparisonTraces {
    pub times: Vec<f64>,
    pub s_soen: Vec<f64>,
    pub s_ode: Vec<f64>,
    pub phi_soen: Vec<f64>,
    pub phi_ode: Vec<f64>,
}

impl ComparisonTraces {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("time_s,s_soen,s_ode,phi_soen,phi_ode\n");
        for k in 0..self.times.len() {
            out.push_str(&format!(
                "{:.12e},{:.9e},{:.9e},{:.9e},{:.9e}\n",
                self.times[k], self.s_soen[k], self.s_ode[k], self.phi_soen[k], self.phi_ode[k]
            ));
        }
        out
    }
}

/// Runs both backends on the same drive and reports accuracy and timing.
/// The rate array must describe an RI dendrite and cover `params.ib`.
pub fn compare(c: &Comparison, table: &Arc<RateArray>) -> Result<ComparisonReport> {
    compare_with_traces(c, table).map(|(r, _)| r)
}

pub fn compare_with_traces(c: &Comparison, table: &Arc<RateArray>) -> Result<(ComparisonReport, ComparisonTraces)> {
    compare_inner(c, table).map_err(|e| match e {
        Error::InvalidParameter(m) => Error::InvalidParameter(format!("{} ({})", m, describe(&c.params, c.dt))),
        Error::Unstable(m) => Error::Unstable(format!("{} ({})", m, describe(&c.params, c.dt))),
        other => other,
    })
}

fn describe(p: &CompareParams, dt: f64) -> String {
    format!("beta/2pi = {:.4e}, tau_di = {:?}, i_b = {}, dt = {:e}", p.beta / circuit::TWO_PI, p.tau_di, p.ib, dt)
}

fn compare_inner(c: &Comparison, table: &Arc<RateArray>) -> Result<(ComparisonReport, ComparisonTraces)> {
    let CircuitSpec::Ri(base) = table.circuit() else {
        return Err(Error::InvalidParameter("comparison needs an RI rate array".into()));
    };
    let consts = &c.constants;
    let p = &c.params;
    let ib_idx = table.bias_index(p.ib)?;
    let (threshold, _) = extract_thresholds(table).at(table.ib_grid()[ib_idx])?;
    let drive = generate_drive(&c.drive, Some(threshold))?;
    let duration = drive.end() + c.tail;
    let n = (duration / c.dt).ceil() as usize;
    if n < 2 {
        return Err(Error::InvalidParameter("run shorter than two steps".into()));
    }
    let times: Vec<f64> = (0..=n).map(|k| k as f64 * c.dt).collect();

    let alpha = p.tau_di.map_or(0.0, |t| consts.alpha_for(p.beta, t));
    let ri = RiParams { beta_di: p.beta, alpha, ib: p.ib, ..*base };
    ri.validate()?;
    let drive_tau = TimeScaled { inner: &drive, scale: consts.omega_c };
    let mut chi = ChiSquared::new();
    let mut chi_drive = ChiSquared::new();
    chi.push_reference(0.0, 0.0);
    chi_drive.push_reference(0.0, drive.flux(0.0));
    // Filled explicitly so both backends start with touched output buffers.
    let mut ode_s: Vec<f64> = (0..=n).map(|_| 0.0).collect();
    let mut ode_phi: Vec<f64> = (0..=n).map(|_| 0.0).collect();
    ode_phi[0] = drive.flux(0.0);
    let mut next = 1;
    let inv_wc = 1.0 / consts.omega_c;
    let opts = SolverOptions::with_tol(c.tol);
    let start = Instant::now();
    let summary = circuit::run(&ri, &drive_tau, consts.tau(times[n]), &opts, |st| {
        let (t0, t1) = (st.t0 * inv_wc, st.t1 * inv_wc);
        let (s0, s1) = (st.y0[4], st.y1[4]);
        let (f0, f1) = (drive_tau.flux(st.t0), drive_tau.flux(st.t1));
        while next <= n && times[next] <= t1 * (1.0 + 1e-14) {
            let w = if t1 > t0 { ((times[next] - t0) / (t1 - t0)).clamp(0.0, 1.0) } else { 1.0 };
            ode_s[next] = s0 + w * (s1 - s0);
            ode_phi[next] = f0 + w * (f1 - f0);
            next += 1;
        }
        chi.push_reference(t1, s1);
        chi_drive.push_reference(t1, f1);
        Flow::Continue
    })?;
    let t_ode = start.elapsed().as_secs_f64();

    let mut spec = NetworkSpec::new(c.dt);
    spec.constants = *consts;
    let mut d = DendriteSpec::new("d", table.clone(), p.beta, alpha, p.ib);
    d.drive = Some(Arc::new(drive));
    let flagged = check_stability(&d, c.dt, consts)?.flagged();
    spec.add_dendrite(d);
    spec.record = vec![0];
    // The stepping run is short enough to repeat; the fastest repeat is
    // reported. Every repeat produces the same trajectory.
    let mut t_soen = f64::INFINITY;
    let mut last = None;
    for _ in 0..c.soen_repeats.max(1) {
        let (mut net, _) = spec.clone().build()?;
        net.reserve_steps(n as u64);
        let start = Instant::now();
        net.run_steps(n as u64);
        t_soen = t_soen.min(start.elapsed().as_secs_f64());
        last = Some(net);
    }
    let mut log = last.expect("at least one repeat").finish();
    let s_soen = log.signals.remove(&0).ok_or(Error::NotRecorded(0))?;
    let phi_soen = log.fluxes.remove(&0).ok_or(Error::NotRecorded(0))?;

    let chi_squared = chi.finish(&times, &s_soen, &ode_s)?;
    let chi_squared_drive = chi_drive.finish(&times, &phi_soen, &ode_phi)?;
    let (pulses, seed) = match &c.drive {
        DriveSpec::SquareTrain(s) => (s.pulses, Some(s.seed)),
        _ => (0, None),
    };
    let report = ComparisonReport {
        beta: p.beta,
        tau_di: p.tau_di,
        ib: p.ib,
        dt: c.dt,
        pulses,
        seed,
        tol: c.tol,
        chi_squared,
        chi_squared_drive,
        t_ode,
        t_soen: t_soen.max(1e-9),
        ode_steps: summary.accepted,
        soen_steps: n,
        flagged,
    };
    let traces = ComparisonTraces { times, s_soen, s_ode: ode_s, phi_soen, phi_ode: ode_phi };
    Ok((report, traces))
}

/// Grid of comparisons: every parameter tuple at every step size for every
/// pulse count, all sharing `template` for the remaining settings.
#[derive(Debug, Clone)]
pub struct Sweep {
    pub params: Vec<CompareParams>,
    pub dts: Vec<f64>,
    pub pulse_counts: Vec<usize>,
    pub seed: u64,
    pub tail: f64,
    pub tol: f64,
    pub constants: PhysicalConstants,
    pub soen_repeats: usize,
}

impl Sweep {
    pub fn new(params: Vec<CompareParams>, dts: Vec<f64>, pulse_counts: Vec<usize>, seed: u64) -> Self {
        Sweep {
            params,
            dts,
            pulse_counts,
            seed,
            tail: 20e-9,
            tol: DEFAULT_TOL,
            constants: PhysicalConstants::default(),
            soen_repeats: 1,
        }
    }

    pub fn comparisons(&self) -> Vec<Comparison> {
        let mut out = Vec::new();
        for &pulses in &self.pulse_counts {
            for p in &self.params {
                for &dt in &self.dts {
                    out.push(Comparison {
                        params: *p,
                        drive: DriveSpec::SquareTrain(SquareTrain::new(pulses, self.seed)),
                        dt,
                        tail: self.tail,
                        tol: self.tol,
                        constants: self.constants,
                        soen_repeats: self.soen_repeats,
                    });
                }
            }
        }
        out
    }
}

/// Runs a sweep. With `parallel` the entries run concurrently, which skews
/// wall-clock timings; timing runs should pass `false`.
pub fn sweep(s: &Sweep, table: &Arc<RateArray>, parallel: bool) -> Result<Vec<ComparisonReport>> {
    let jobs = s.comparisons();
    if parallel {
        jobs.par_iter().map(|c| compare(c, table)).collect()
    } else {
        jobs.iter().map(|c| compare(c, table)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_series_give_zero() {
        let t: Vec<f64> = (0..50).map(|k| k as f64).collect();
        let s: Vec<f64> = t.iter().map(|x| (x * 0.1).sin()).collect();
        assert_eq!(chi_squared(&t, &s, &t, &s).unwrap(), 0.0);
    }

    #[test]
    fn relative_error_squared() {
        let eps = 1e-3;
        let t: Vec<f64> = (0..200).map(|k| k as f64 * 0.1).collect();
        let ode: Vec<f64> = t.iter().map(|x| 1.0 + x.cos() * 0.5).collect();
        let soen: Vec<f64> = ode.iter().map(|v| v * (1.0 + eps)).collect();
        let chi = chi_squared(&t, &soen, &t, &ode).unwrap();
        assert!((chi - eps * eps).abs() < 1e-12 * eps * eps / 1e-6);
    }

    #[test]
    fn scale_invariant() {
        let t: Vec<f64> = (0..100).map(|k| k as f64).collect();
        let a: Vec<f64> = t.iter().map(|x| x.sqrt()).collect();
        let b: Vec<f64> = t.iter().map(|x| x.sqrt() + 0.01 * x.sin()).collect();
        let c = chi_squared(&t, &a, &t, &b).unwrap();
        let a2: Vec<f64> = a.iter().map(|v| v / 7.0).collect();
        let b2: Vec<f64> = b.iter().map(|v| v / 7.0).collect();
        assert!((chi_squared(&t, &a2, &t, &b2).unwrap() - c).abs() < 1e-12 * c);
    }

    #[test]
    fn disjoint_ranges_rejected() {
        let a = [0.0, 1.0, 2.0];
        let b = [5.0, 6.0, 7.0];
        assert!(matches!(chi_squared(&a, &a, &b, &a), Err(Error::EmptyOverlap)));
    }

    #[test]
    fn streaming_matches_batch() {
        let t_ode: Vec<f64> = (0..300).map(|k| (k as f64 * 0.05).powf(1.3)).collect();
        let s_ode: Vec<f64> = t_ode.iter().map(|x| (x * 0.7).sin().abs()).collect();
        let t_end = t_ode[t_ode.len() - 1];
        let times: Vec<f64> = (0..=40).map(|k| k as f64 * t_end / 40.0).collect();
        let reference: Vec<f64> = times.iter().map(|&t| circuit::interp_linear(&t_ode, &s_ode, t)).collect();
        let soen: Vec<f64> = reference.iter().map(|v| v + 0.01).collect();
        let mut acc = ChiSquared::new();
        for (t, s) in t_ode.iter().zip(&s_ode) {
            acc.push_reference(*t, *s);
        }
        let a = acc.finish(&times, &soen, &reference).unwrap();
        let b = chi_squared(&times, &soen, &t_ode, &s_ode).unwrap();
        assert!((a - b).abs() < 1e-12 * b);
    }

    #[test]
    fn train_is_deterministic_and_in_range() {
        let spec = DriveSpec::SquareTrain(SquareTrain::new(10, 7));
        let a = generate_drive(&spec, Some(0.2)).unwrap();
        assert_eq!(a, generate_drive(&spec, Some(0.2)).unwrap());
        let Drive::PulseTrain { pulses } = a else { panic!("expected pulse train") };
        assert_eq!(pulses.len(), 10);
        assert!(pulses[0].start >= 10e-9);
        for w in pulses.windows(2) {
            let gap = w[1].start - w[0].end();
            assert!(gap >= 10e-9 * (1.0 - 1e-12) && gap <= 100e-9 * (1.0 + 1e-12));
        }
        for p in &pulses {
            assert!(p.amplitude >= 0.2 && p.amplitude <= 0.5);
            let d = p.rise + p.top;
            assert!(d >= 5e-9 * (1.0 - 1e-12) && d <= 40e-9 * (1.0 + 1e-12));
        }
        assert!(generate_drive(&spec, None).is_err());
    }

    #[test]
    fn ramp_and_constant() {
        let d = generate_drive(&DriveSpec::Constant { flux: 0.0 }, None).unwrap();
        assert_eq!(d.flux(3.0), 0.0);
        let r = generate_drive(&DriveSpec::LinearRamp { t_start: 0.0, t_end: 1e-6, from: 0.0, to: 0.5 }, None).unwrap();
        assert!((r.flux(0.5e-6) - 0.25).abs() < 1e-15);
        assert!(generate_drive(&DriveSpec::LinearRamp { t_start: 1.0, t_end: 0.0, from: 0.0, to: 0.5 }, None).is_err());
    }
}
