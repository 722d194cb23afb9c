//! Phenomenological network engine.
//!
//! Each dendrite carries one signal `s` obeying `β ds/dτ = r(φ, s; i_b) − α s`,
//! stepped with forward Euler on a fixed mesh. Applied flux `φ` combines a
//! constant offset, an optional external drive, couplings `J·s` from other
//! dendrites, synaptic detector pulses and spike-triggered refractory pulses.

mod analysis;
mod spd;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::circuit::{DendriteKind, PhysicalConstants, TWO_PI};
use crate::drive::FluxDrive;
use crate::emitter::EmissionDistribution;
use crate::error::{Error, Result};
use crate::io_util;
use crate::rate_array::{RateArray, SaturationTable, ThresholdTable};

pub use analysis::{
    correlation_cross, correlation_neuron, correlation_self, frustration, frustration_of, network_frustration,
    state_distance, Neuron,
};
pub use spd::{spd_flux, SpdParams};

/// Configurations with `Δτ·α/β` at or above this are rejected.
pub const LEAK_LIMIT: f64 = 0.5;

/// A single step that can move the signal by this fraction of its
/// saturation range or more is flagged as under-resolved.
pub const DRIVE_RESOLUTION_LIMIT: f64 = 0.25;

#[derive(Clone)]
pub struct DendriteSpec {
    pub name: String,
    /// Integration-loop inductance parameter 2π I_c L_di / Φ₀.
    pub beta: f64,
    /// Leak parameter R_di / r_j.
    pub alpha: f64,
    pub ib: f64,
    pub table: Arc<RateArray>,
    pub flux_offset: f64,
    /// Externally applied flux as a function of time in seconds.
    pub drive: Option<Arc<dyn FluxDrive>>,
}

impl fmt::Debug for DendriteSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DendriteSpec")
            .field("name", &self.name)
            .field("kind", &self.kind())
            .field("beta", &self.beta)
            .field("alpha", &self.alpha)
            .field("ib", &self.ib)
            .field("flux_offset", &self.flux_offset)
            .field("driven", &self.drive.is_some())
            .finish()
    }
}

impl DendriteSpec {
    pub fn new(name: impl Into<String>, table: Arc<RateArray>, beta: f64, alpha: f64, ib: f64) -> Self {
        DendriteSpec { name: name.into(), beta, alpha, ib, table, flux_offset: 0.0, drive: None }
    }

    /// Dendrite with leak chosen to give decay time `tau_di` (s); `None` means no leak.
    pub fn with_tau_di(
        name: impl Into<String>,
        table: Arc<RateArray>,
        beta: f64,
        tau_di: Option<f64>,
        ib: f64,
        consts: &PhysicalConstants,
    ) -> Self {
        let alpha = tau_di.map_or(0.0, |t| consts.alpha_for(beta, t));
        Self::new(name, table, beta, alpha, ib)
    }

    pub fn kind(&self) -> DendriteKind {
        self.table.kind()
    }

    pub fn tau_di(&self, consts: &PhysicalConstants) -> Option<f64> {
        (self.alpha > 0.0).then(|| consts.tau_di(self.beta, self.alpha))
    }

    /// Largest saturation signal over all flux values at this bias.
    pub fn s_max(&self) -> Result<f64> {
        Ok(self.table.max_saturation(self.table.bias_index(self.ib)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    pub source: usize,
    pub target: usize,
    pub j: f64,
}

/// Transformer chain from the output of dendrite `j` through the collection
/// coil into the receiving loop of dendrite `i`, in dimensionless inductances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformerChain {
    /// Coupling efficiency collection coil → receiving loop.
    pub k_receive: f64,
    /// Coupling efficiency source output → collection coil.
    pub k_collect: f64,
    pub beta_receive: f64,
    pub beta_collection_out: f64,
    pub beta_collection_in: f64,
    pub beta_source_out: f64,
    /// Total inductance of the collection coil.
    pub beta_collection_total: f64,
}

impl Coupling {
    pub fn from_transformers(source: usize, target: usize, t: &TransformerChain) -> Self {
        let j = t.k_receive * t.k_collect / TWO_PI
            * (t.beta_receive * t.beta_collection_out * t.beta_collection_in * t.beta_source_out).sqrt()
            / t.beta_collection_total;
        Coupling { source, target, j }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynapseSpec {
    pub name: String,
    pub target: usize,
    pub spd: SpdParams,
    /// Couples with negative sign.
    #[serde(default)]
    pub inhibitory: bool,
    /// Detection times in seconds, ascending.
    #[serde(default)]
    pub event_times: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefractorySpec {
    pub dendrite: usize,
    /// Spike-triggered pulse into the refractory dendrite.
    pub pulse: SpdParams,
}

impl RefractorySpec {
    pub fn with_default_pulse(dendrite: usize) -> Self {
        RefractorySpec { dendrite, pulse: SpdParams { tau_fall: 50e-9, ..SpdParams::default() } }
    }
}

#[derive(Debug, Clone)]
pub struct SomaSpec {
    pub name: String,
    pub dendrite: usize,
    pub threshold: f64,
    pub refractory: Option<RefractorySpec>,
    pub n_photons: usize,
    /// Transmitter delay distribution; `None` delivers photons with no delay.
    pub emission: Option<Arc<EmissionDistribution>>,
    /// Synapses receiving this soma's photons.
    pub downstream: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct NetworkSpec {
    pub constants: PhysicalConstants,
    pub dendrites: Vec<DendriteSpec>,
    pub couplings: Vec<Coupling>,
    pub synapses: Vec<SynapseSpec>,
    pub somas: Vec<SomaSpec>,
    /// Fixed step in seconds.
    pub dt: f64,
    pub seed: u64,
    /// Dendrites whose signal and flux are recorded every step.
    pub record: Vec<usize>,
}

impl NetworkSpec {
    pub fn new(dt: f64) -> Self {
        NetworkSpec {
            constants: PhysicalConstants::default(),
            dendrites: Vec::new(),
            couplings: Vec::new(),
            synapses: Vec::new(),
            somas: Vec::new(),
            dt,
            seed: 0,
            record: Vec::new(),
        }
    }

    pub fn add_dendrite(&mut self, d: DendriteSpec) -> usize {
        self.dendrites.push(d);
        self.dendrites.len() - 1
    }

    pub fn couple(&mut self, source: usize, target: usize, j: f64) {
        self.couplings.push(Coupling { source, target, j });
    }

    pub fn add_synapse(&mut self, s: SynapseSpec) -> usize {
        self.synapses.push(s);
        self.synapses.len() - 1
    }

    pub fn add_soma(&mut self, s: SomaSpec) -> usize {
        self.somas.push(s);
        self.somas.len() - 1
    }

    pub fn build(self) -> Result<(Network, Vec<Warning>)> {
        Network::new(self)
    }
}

/// Outcome of the step-size checks for one dendrite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityCheck {
    /// Δτ·α/β, the per-step leak fraction.
    pub leak: f64,
    /// Δτ·r_max/(β·s_max), the largest per-step move relative to saturation.
    pub drive: f64,
}

impl StabilityCheck {
    pub fn unstable(&self) -> bool {
        self.leak >= LEAK_LIMIT
    }

    pub fn under_resolved(&self) -> bool {
        self.drive >= DRIVE_RESOLUTION_LIMIT
    }

    pub fn flagged(&self) -> bool {
        self.unstable() || self.under_resolved()
    }
}

pub fn check_stability(dendrite: &DendriteSpec, dt: f64, consts: &PhysicalConstants) -> Result<StabilityCheck> {
    let dtau = consts.tau(dt);
    let idx = dendrite.table.bias_index(dendrite.ib)?;
    let s_max = dendrite.table.max_saturation(idx);
    let r_max = dendrite.table.max_rate(idx);
    let drive = if s_max > 0.0 { dtau * r_max / (dendrite.beta * s_max) } else { 0.0 };
    Ok(StabilityCheck { leak: dtau * dendrite.alpha / dendrite.beta, drive })
}

#[derive(Debug, Clone, PartialEq)]
pub enum Warning {
    /// A single step can move the signal by a large fraction of its range.
    DriveResolution { dendrite: usize, ratio: f64 },
    /// At full refractory saturation and zero drive the soma flux falls
    /// below its negative threshold.
    RefractoryOverInhibits { soma: usize, min_flux: f64, threshold_minus: f64 },
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Warning::DriveResolution { dendrite, ratio } => write!(
                f,
                "dendrite {dendrite}: one step may move the signal by {ratio:.2} of its saturation range"
            ),
            Warning::RefractoryOverInhibits { soma, min_flux, threshold_minus } => write!(
                f,
                "soma {soma}: refractory inhibition reaches flux {min_flux:.3}, beyond negative threshold {threshold_minus:.3}"
            ),
        }
    }
}

/// Coupling from a refractory dendrite to its soma: `−(φ_th⁺ − φ_th⁻)/s_max`,
/// with the soma's thresholds and the refractory dendrite's saturation.
pub fn refractory_coupling(
    soma_thresholds: &ThresholdTable,
    soma_ib: f64,
    refractory_saturations: &SaturationTable,
    refractory_ib: f64,
    refractory_flux: f64,
) -> Result<f64> {
    let (plus, minus) = soma_thresholds.at(soma_ib)?;
    let s_max = refractory_saturations.at(refractory_ib, refractory_flux)?;
    if !(s_max > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "refractory dendrite does not saturate at bias {refractory_ib}, flux {refractory_flux}"
        )));
    }
    Ok(-(plus - minus) / s_max)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EventLog {
    /// Spike times per soma (s).
    pub spikes: Vec<Vec<f64>>,
    /// Accepted detection events per synapse (s).
    pub synapse_events: Vec<Vec<f64>>,
    /// Events dropped because they arrived while the detector was still resistive.
    pub dropped_events: usize,
    pub names: BTreeMap<usize, String>,
    /// Mesh times for recorded series.
    pub times: Vec<f64>,
    pub signals: BTreeMap<usize, Vec<f64>>,
    pub fluxes: BTreeMap<usize, Vec<f64>>,
}

impl EventLog {
    pub fn signal(&self, dendrite: usize) -> Result<&[f64]> {
        self.signals.get(&dendrite).map(Vec::as_slice).ok_or(Error::NotRecorded(dendrite))
    }

    pub fn flux(&self, dendrite: usize) -> Result<&[f64]> {
        self.fluxes.get(&dendrite).map(Vec::as_slice).ok_or(Error::NotRecorded(dendrite))
    }

    pub fn peak(&self, dendrite: usize) -> Result<f64> {
        Ok(self.signal(dendrite)?.iter().copied().fold(0.0, f64::max))
    }

    pub fn spikes_csv(&self) -> String {
        let mut out = String::from("soma,time_s\n");
        for (k, times) in self.spikes.iter().enumerate() {
            for t in times {
                out.push_str(&format!("{k},{t:.12e}\n"));
            }
        }
        out
    }

    pub fn traces_csv(&self) -> String {
        let ids: Vec<usize> = self.signals.keys().copied().collect();
        let label = |i: &usize| self.names.get(i).cloned().unwrap_or_else(|| i.to_string());
        let mut out = String::from("time_s");
        for i in &ids {
            out.push_str(&format!(",s_{}", label(i)));
        }
        for i in &ids {
            out.push_str(&format!(",phi_{}", label(i)));
        }
        out.push('\n');
        for k in 0..self.times.len() {
            out.push_str(&format!("{:.12e}", self.times[k]));
            for i in &ids {
                out.push_str(&format!(",{:.9e}", self.signals[i][k]));
            }
            for i in &ids {
                out.push_str(&format!(",{:.9e}", self.fluxes[i][k]));
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, spikes: &Path, traces: &Path) -> Result<()> {
        io_util::write_atomic(spikes, self.spikes_csv().as_bytes())?;
        io_util::write_atomic(traces, self.traces_csv().as_bytes())
    }
}

#[derive(Debug, Clone)]
struct DendriteState {
    table: Arc<RateArray>,
    ib_idx: usize,
    offset: f64,
    /// Slot in the drive buffer, or `NO_DRIVE`.
    drive_slot: usize,
    /// Receives coupling, synaptic or refractory flux.
    has_inputs: bool,
    /// 1 − Δτ·α/β
    keep: f64,
    /// Δτ/β
    gain: f64,
    /// Largest breakpoint in the table at this bias.
    ceiling: f64,
    /// Breakpoint search position from the previous step.
    hint: usize,
}

#[derive(Debug, Clone)]
struct SynapseState {
    /// Future events, latest first.
    pending: Vec<f64>,
    active: Option<f64>,
    sign: f64,
}

#[derive(Debug, Clone)]
pub struct Network {
    spec: NetworkSpec,
    dtau: f64,
    state: Vec<DendriteState>,
    incoming: Vec<Vec<(usize, f64)>>,
    synapses_into: Vec<Vec<usize>>,
    refractory_into: Vec<Vec<usize>>,
    syn: Vec<SynapseState>,
    refractory_start: Vec<Option<f64>>,
    s: Vec<f64>,
    phi: Vec<f64>,
    steps: u64,
    rng: ChaCha8Rng,
    log: EventLog,
    rec_s: Vec<Vec<f64>>,
    rec_phi: Vec<Vec<f64>>,
    /// Externally driven dendrites and their pre-sampled drive values,
    /// `DRIVE_CHUNK` steps per dendrite starting at step `drive_first`.
    driven: Vec<usize>,
    drive_buf: Vec<f64>,
    drive_first: u64,
    drive_valid: usize,
    /// Earliest pending synapse event, or infinity.
    next_event: f64,
}

const DRIVE_CHUNK: usize = 1024;
const NO_DRIVE: usize = usize::MAX;

impl Network {
    pub fn new(spec: NetworkSpec) -> Result<(Self, Vec<Warning>)> {
        let n = spec.dendrites.len();
        if !(spec.dt > 0.0 && spec.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {}", spec.dt)));
        }
        let consts = spec.constants;
        let dtau = consts.tau(spec.dt);
        let mut warnings = Vec::new();
        let mut state = Vec::with_capacity(n);
        for (i, d) in spec.dendrites.iter().enumerate() {
            if !(d.beta > 0.0 && d.alpha >= 0.0 && d.flux_offset.is_finite()) {
                return Err(Error::InvalidParameter(format!("dendrite {i} ('{}'): need beta > 0, alpha >= 0", d.name)));
            }
            let ib_idx = d.table.bias_index(d.ib)?;
            let check = check_stability(d, spec.dt, &consts)?;
            if check.unstable() {
                return Err(Error::Unstable(format!(
                    "dendrite {i} ('{}'): dt*alpha/beta = {:.3} >= {LEAK_LIMIT}",
                    d.name, check.leak
                )));
            }
            if check.under_resolved() {
                warnings.push(Warning::DriveResolution { dendrite: i, ratio: check.drive });
            }
            state.push(DendriteState {
                table: d.table.clone(),
                ib_idx,
                offset: d.flux_offset,
                drive_slot: NO_DRIVE,
                has_inputs: false,
                keep: 1.0 - check.leak,
                gain: dtau / d.beta,
                ceiling: d.table.max_breakpoint(ib_idx),
                hint: 0,
            });
        }
        let mut incoming = vec![Vec::new(); n];
        for (k, c) in spec.couplings.iter().enumerate() {
            if c.source >= n || c.target >= n {
                return Err(Error::InvalidParameter(format!("coupling {k} references a missing dendrite")));
            }
            if !c.j.is_finite() {
                return Err(Error::InvalidParameter(format!("coupling {k} has non-finite J")));
            }
            incoming[c.target].push((c.source, c.j));
        }
        let mut synapses_into = vec![Vec::new(); n];
        let mut syn = Vec::with_capacity(spec.synapses.len());
        for (k, s) in spec.synapses.iter().enumerate() {
            if s.target >= n {
                return Err(Error::InvalidParameter(format!("synapse {k} ('{}') targets a missing dendrite", s.name)));
            }
            s.spd.validate().map_err(|e| Error::InvalidParameter(format!("synapse {k} ('{}'): {e}", s.name)))?;
            if s.event_times.iter().any(|t| !t.is_finite()) {
                return Err(Error::InvalidParameter(format!("synapse {k}: non-finite event time")));
            }
            synapses_into[s.target].push(k);
            let mut pending = s.event_times.clone();
            pending.sort_by(|a, b| b.total_cmp(a));
            syn.push(SynapseState { pending, active: None, sign: if s.inhibitory { -1.0 } else { 1.0 } });
        }
        let mut refractory_into = vec![Vec::new(); n];
        for (k, soma) in spec.somas.iter().enumerate() {
            if soma.dendrite >= n {
                return Err(Error::InvalidParameter(format!("soma {k} ('{}') references a missing dendrite", soma.name)));
            }
            let d = &spec.dendrites[soma.dendrite];
            let ceiling = state[soma.dendrite].ceiling;
            if !(soma.threshold > 0.0 && soma.threshold < ceiling) {
                return Err(Error::InvalidParameter(format!(
                    "soma {k} ('{}'): threshold {} must lie in (0, {ceiling:.4})",
                    soma.name, soma.threshold
                )));
            }
            if soma.downstream.iter().any(|&s| s >= spec.synapses.len()) {
                return Err(Error::InvalidParameter(format!("soma {k}: downstream synapse missing")));
            }
            if let Some(r) = &soma.refractory {
                if r.dendrite >= n || r.dendrite == soma.dendrite {
                    return Err(Error::InvalidParameter(format!("soma {k}: invalid refractory dendrite")));
                }
                r.pulse.validate()?;
                refractory_into[r.dendrite].push(k);
                let j: f64 = incoming[soma.dendrite].iter().filter(|(src, _)| *src == r.dendrite).map(|(_, j)| j).sum();
                if j > 0.0 {
                    return Err(Error::InvalidParameter(format!("soma {k}: refractory coupling must be inhibitory")));
                }
                // Soma flux at full refractory saturation with no other drive.
                let rd = &spec.dendrites[r.dendrite];
                let min_flux = d.flux_offset + j * rd.s_max()?;
                let th = crate::rate_array::extract_thresholds(&d.table);
                if let Ok((_, minus)) = th.at(d.ib) {
                    if min_flux < minus {
                        warnings.push(Warning::RefractoryOverInhibits { soma: k, min_flux, threshold_minus: minus });
                    }
                }
            }
        }
        for &r in &spec.record {
            if r >= n {
                return Err(Error::InvalidParameter(format!("record list references missing dendrite {r}")));
            }
        }
        let log = EventLog {
            spikes: vec![Vec::new(); spec.somas.len()],
            synapse_events: vec![Vec::new(); spec.synapses.len()],
            names: spec.record.iter().map(|&i| (i, spec.dendrites[i].name.clone())).collect(),
            ..Default::default()
        };
        let net = Network {
            dtau,
            state,
            incoming,
            synapses_into,
            refractory_into,
            syn,
            refractory_start: vec![None; spec.somas.len()],
            s: vec![0.0; n],
            phi: vec![0.0; n],
            steps: 0,
            rng: ChaCha8Rng::seed_from_u64(spec.seed),
            log,
            rec_s: vec![Vec::new(); spec.record.len()],
            rec_phi: vec![Vec::new(); spec.record.len()],
            driven: Vec::new(),
            drive_buf: Vec::new(),
            drive_first: 0,
            drive_valid: 0,
            next_event: f64::INFINITY,
            spec,
        };
        let mut net = net;
        net.driven = (0..n).filter(|&i| net.spec.dendrites[i].drive.is_some()).collect();
        for (slot, &i) in net.driven.iter().enumerate() {
            net.state[i].drive_slot = slot;
        }
        for i in 0..n {
            net.state[i].has_inputs =
                !(net.incoming[i].is_empty() && net.synapses_into[i].is_empty() && net.refractory_into[i].is_empty());
        }
        net.drive_buf = vec![0.0; net.driven.len() * DRIVE_CHUNK];
        net.refresh_next_event();
        Ok((net, warnings))
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn time(&self) -> f64 {
        self.steps as f64 * self.spec.dt
    }

    pub fn dtau(&self) -> f64 {
        self.dtau
    }

    pub fn signals(&self) -> &[f64] {
        &self.s
    }

    pub fn set_signal(&mut self, dendrite: usize, s: f64) {
        self.s[dendrite] = s;
    }

    /// Events so far; recorded series are attached by [`Network::finish`].
    pub fn log(&self) -> &EventLog {
        &self.log
    }

    /// Schedules a detection event on a synapse.
    pub fn add_event(&mut self, synapse: usize, time: f64) {
        let p = &mut self.syn[synapse].pending;
        let at = p.partition_point(|&x| x > time);
        p.insert(at, time);
        self.next_event = self.next_event.min(time);
    }

    fn refresh_next_event(&mut self) {
        self.next_event = self.syn.iter().filter_map(|s| s.pending.last().copied()).fold(f64::INFINITY, f64::min);
    }

    /// Applied flux to dendrite `i` at the current time and state.
    pub fn total_flux(&self, i: usize) -> f64 {
        let t = self.time();
        let external = self.spec.dendrites[i].drive.as_ref().map_or(0.0, |d| d.flux(t));
        self.flux_with(i, t, external)
    }

    #[inline(always)]
    fn flux_with(&self, i: usize, t: f64, external: f64) -> f64 {
        let phi = self.state[i].offset + external;
        if self.state[i].has_inputs {
            self.add_inputs(i, t, phi)
        } else {
            phi
        }
    }

    fn add_inputs(&self, i: usize, t: f64, mut phi: f64) -> f64 {
        for &(src, j) in &self.incoming[i] {
            phi += j * self.s[src];
        }
        for &k in &self.synapses_into[i] {
            if let Some(start) = self.syn[k].active {
                phi += self.syn[k].sign * spd_flux(t - start, &self.spec.synapses[k].spd);
            }
        }
        for &k in &self.refractory_into[i] {
            if let (Some(start), Some(r)) = (self.refractory_start[k], &self.spec.somas[k].refractory) {
                phi += spd_flux(t - start, &r.pulse);
            }
        }
        phi
    }

    fn activate_events(&mut self, t: f64) {
        if self.next_event > t {
            return;
        }
        for (k, st) in self.syn.iter_mut().enumerate() {
            while let Some(&e) = st.pending.last() {
                if e > t {
                    break;
                }
                st.pending.pop();
                match st.active {
                    Some(a) if e - a < self.spec.synapses[k].spd.t0 => self.log.dropped_events += 1,
                    _ => {
                        st.active = Some(e);
                        self.log.synapse_events[k].push(e);
                    }
                }
            }
        }
        self.refresh_next_event();
    }

    fn refill_drives(&mut self) {
        self.drive_first = self.steps;
        self.drive_valid = DRIVE_CHUNK;
        let dt = self.spec.dt;
        for (slot, &i) in self.driven.iter().enumerate() {
            let out = &mut self.drive_buf[slot * DRIVE_CHUNK..(slot + 1) * DRIVE_CHUNK];
            if let Some(d) = &self.spec.dendrites[i].drive {
                d.sample_steps(self.steps, dt, out);
            }
        }
    }

    /// Advances every dendrite by one step.
    pub fn step(&mut self) {
        let t = self.time();
        if self.next_event <= t {
            self.activate_events(t);
        }
        if !self.driven.is_empty() && (self.steps - self.drive_first) as usize >= self.drive_valid {
            self.refill_drives();
        }
        let k = (self.steps - self.drive_first) as usize;
        for i in 0..self.s.len() {
            let slot = self.state[i].drive_slot;
            let external = if slot == NO_DRIVE { 0.0 } else { self.drive_buf[slot * DRIVE_CHUNK + k] };
            self.phi[i] = self.flux_with(i, t, external);
        }
        if !self.rec_s.is_empty() {
            self.record(t);
        }
        for ((st, s), &phi) in self.state.iter_mut().zip(self.s.iter_mut()).zip(&self.phi) {
            let r = st.table.rate_from(st.ib_idx, phi, *s, &mut st.hint);
            *s = (*s * st.keep + st.gain * r).min(st.ceiling);
        }
        self.steps += 1;
        if self.spec.somas.is_empty() {
            return;
        }
        let t1 = self.time();
        for k in 0..self.spec.somas.len() {
            let d = self.spec.somas[k].dendrite;
            if self.s[d] >= self.spec.somas[k].threshold {
                self.fire(k, t1);
            }
        }
    }

    fn fire(&mut self, k: usize, t: f64) {
        let soma = &self.spec.somas[k];
        self.log.spikes[k].push(t);
        self.s[soma.dendrite] = 0.0;
        if soma.refractory.is_some() {
            self.refractory_start[k] = Some(t);
        }
        if soma.downstream.is_empty() {
            return;
        }
        let mut earliest: Vec<Option<f64>> = vec![None; soma.downstream.len()];
        for _ in 0..soma.n_photons {
            let delay = soma.emission.as_ref().map_or(0.0, |e| e.sample(&mut self.rng));
            let slot = self.rng.random_range(0..soma.downstream.len());
            earliest[slot] = Some(earliest[slot].map_or(delay, |d: f64| d.min(delay)));
        }
        let targets = soma.downstream.clone();
        for (slot, delay) in earliest.into_iter().enumerate() {
            if let Some(delay) = delay {
                self.add_event(targets[slot], t + delay);
            }
        }
    }

    fn record(&mut self, t: f64) {
        if self.spec.record.is_empty() {
            return;
        }
        self.log.times.push(t);
        for (k, &i) in self.spec.record.iter().enumerate() {
            self.rec_s[k].push(self.s[i]);
            self.rec_phi[k].push(self.phi[i]);
        }
    }

    /// Allocates recording space for `n` more steps and touches it, so that
    /// a following run does not pay for page faults.
    pub fn reserve_steps(&mut self, n: u64) {
        if self.spec.record.is_empty() {
            return;
        }
        let n = n as usize + 1;
        for v in std::iter::once(&mut self.log.times).chain(self.rec_s.iter_mut()).chain(self.rec_phi.iter_mut()) {
            let len = v.len();
            v.resize(len + n, 0.0);
            v.truncate(len);
        }
    }

    /// Runs `n` steps.
    pub fn run_steps(&mut self, n: u64) {
        if !self.spec.record.is_empty() {
            let n = n as usize;
            self.log.times.reserve(n);
            self.rec_s.iter_mut().chain(self.rec_phi.iter_mut()).for_each(|v| v.reserve(n));
        }
        for _ in 0..n {
            self.step();
        }
    }

    /// Runs for `duration` seconds, rounded to whole steps.
    pub fn run_for(&mut self, duration: f64) {
        let n = (duration / self.spec.dt).round().max(0.0) as u64;
        self.run_steps(n);
    }

    /// Records the final state and returns the log with recorded series.
    pub fn finish(mut self) -> EventLog {
        let t = self.time();
        self.activate_events(t);
        for i in 0..self.s.len() {
            self.phi[i] = self.total_flux(i);
        }
        self.record(t);
        let mut log = self.log;
        for ((&i, s), phi) in self.spec.record.iter().zip(self.rec_s).zip(self.rec_phi) {
            log.signals.insert(i, s);
            log.fluxes.insert(i, phi);
        }
        log
    }
}
