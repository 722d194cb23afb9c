//! Transfer functions: dendrite peak signal against synaptic burst length or
//! rate, and neuron firing rate against applied flux.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use soen_core::circuit::{DendriteKind, TWO_PI};
use soen_core::drive::Drive;
use soen_core::network::{refractory_coupling, DendriteSpec, NetworkSpec, RefractorySpec, SomaSpec, SpdParams, SynapseSpec};
use soen_core::rate_array::{extract_saturations, extract_thresholds, RateArray};

use crate::config::{check_positive, tabulated_bias, ArrayPaths, ArraySet, Grid};
use crate::error::{config_err, CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransferMode {
    BurstCount,
    BurstRate,
    NeuronRate,
}

impl TransferMode {
    pub const ALL: [TransferMode; 3] = [TransferMode::BurstCount, TransferMode::BurstRate, TransferMode::NeuronRate];

    pub fn name(self) -> &'static str {
        match self {
            TransferMode::BurstCount => "burst-count",
            TransferMode::BurstRate => "burst-rate",
            TransferMode::NeuronRate => "neuron-rate",
        }
    }
}

impl fmt::Display for TransferMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TransferMode {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase();
        match key.as_str() {
            "burstcount" => Ok(TransferMode::BurstCount),
            "burstrate" => Ok(TransferMode::BurstRate),
            "neuronrate" => Ok(TransferMode::NeuronRate),
            _ => config_err(format!("unknown transfer mode '{s}' (expected burst-count, burst-rate, neuron-rate)")),
        }
    }
}

/// Peak signal against the number of events in a periodic burst.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BurstCountConfig {
    pub kind: DendriteKind,
    pub ib: Vec<f64>,
    pub beta_over_2pi: f64,
    #[serde(default)]
    pub tau_di: Option<f64>,
    #[serde(default)]
    pub spd: SpdParams,
    /// Event rate within the burst (Hz).
    pub rate: f64,
    pub counts: Vec<usize>,
    #[serde(default = "default_tail")]
    pub tail: f64,
}

/// Peak signal against event rate for a burst of fixed duration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BurstRateConfig {
    pub kind: DendriteKind,
    pub ib: Vec<f64>,
    pub beta_over_2pi: f64,
    #[serde(default)]
    pub tau_di: Option<f64>,
    #[serde(default)]
    pub spd: SpdParams,
    /// Event rates (Hz).
    pub rates: Vec<f64>,
    /// Length of the burst (s).
    pub duration: f64,
    #[serde(default = "default_tail")]
    pub tail: f64,
}

fn default_tail() -> f64 {
    200e-9
}

const LEAD: f64 = 10e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefractoryConfig {
    pub ib: f64,
    pub beta_over_2pi: f64,
    pub tau_di: f64,
    #[serde(default = "default_refractory_pulse")]
    pub pulse: SpdParams,
    /// Coupling into the soma; derived from the threshold and saturation
    /// tables when omitted.
    #[serde(default)]
    pub j: Option<f64>,
}

fn default_refractory_pulse() -> SpdParams {
    SpdParams { tau_fall: 50e-9, ..SpdParams::default() }
}

/// Firing rate of a soma under constant applied flux.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeuronRateConfig {
    pub kind: DendriteKind,
    pub ib: Vec<f64>,
    pub beta_over_2pi: Vec<f64>,
    pub tau_di: Vec<f64>,
    pub flux: Grid,
    pub threshold: f64,
    pub refractory: RefractoryConfig,
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct TransferFile {
    pub dt: f64,
    #[serde(default)]
    pub arrays: ArrayPaths,
    pub burst_count: BurstCountConfig,
    pub burst_rate: BurstRateConfig,
    pub neuron_rate: NeuronRateConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BurstRow {
    pub ib: f64,
    pub rate: f64,
    pub events: usize,
    pub peak: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeuronRateRow {
    pub ib: f64,
    pub beta_over_2pi: f64,
    pub tau_di: f64,
    pub flux: f64,
    pub spikes: usize,
    /// Inverse mean inter-spike interval (Hz); zero with fewer than two spikes.
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TransferResult {
    Burst { mode: TransferMode, rows: Vec<BurstRow> },
    NeuronRate(Vec<NeuronRateRow>),
}

impl TransferResult {
    pub fn to_csv(&self) -> String {
        match self {
            TransferResult::Burst { mode, rows } => {
                let mut out = String::from("mode,i_b,rate_hz,events,peak_s\n");
                for r in rows {
                    out.push_str(&format!("{mode},{},{:.6e},{},{:.9e}\n", r.ib, r.rate, r.events, r.peak));
                }
                out
            }
            TransferResult::NeuronRate(rows) => {
                let mut out = String::from("i_b,beta_over_2pi,tau_di_s,flux,spikes,rate_hz\n");
                for r in rows {
                    out.push_str(&format!(
                        "{},{},{:.6e},{:.6},{},{:.9e}\n",
                        r.ib, r.beta_over_2pi, r.tau_di, r.flux, r.spikes, r.rate
                    ));
                }
                out
            }
        }
    }
}

struct Burst<'a> {
    table: &'a Arc<RateArray>,
    beta_over_2pi: f64,
    tau_di: Option<f64>,
    spd: SpdParams,
    tail: f64,
}

impl Burst<'_> {
    fn peak(&self, dt: f64, ib: f64, events: &[f64]) -> Result<f64> {
        let mut spec = NetworkSpec::new(dt);
        let d = DendriteSpec::with_tau_di(
            "target",
            self.table.clone(),
            TWO_PI * self.beta_over_2pi,
            self.tau_di,
            ib,
            &spec.constants,
        );
        spec.add_dendrite(d);
        spec.add_synapse(SynapseSpec {
            name: "in".into(),
            target: 0,
            spd: self.spd,
            inhibitory: false,
            event_times: events.to_vec(),
        });
        spec.record = vec![0];
        let (mut net, _) = spec.build()?;
        net.run_for(events.last().copied().unwrap_or(LEAD) + self.tail);
        Ok(net.finish().peak(0)?)
    }
}

fn periodic(rate: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| LEAD + k as f64 / rate).collect()
}

fn check_biases(table: &RateArray, ib: &[f64]) -> Result<()> {
    if ib.is_empty() {
        return config_err("at least one bias value is required");
    }
    ib.iter().try_for_each(|&b| tabulated_bias(table, b).map(|_| ()))
}

pub fn run_burst_count(cfg: &BurstCountConfig, arrays: &ArraySet, dt: f64) -> Result<TransferResult> {
    let table = arrays.get(cfg.kind)?;
    check_biases(&table, &cfg.ib)?;
    check_positive("dt", dt)?;
    check_positive("rate", cfg.rate)?;
    check_positive("beta_over_2pi", cfg.beta_over_2pi)?;
    cfg.spd.validate()?;
    let burst = Burst { table: &table, beta_over_2pi: cfg.beta_over_2pi, tau_di: cfg.tau_di, spd: cfg.spd, tail: cfg.tail };
    let jobs: Vec<(f64, usize)> = cfg.ib.iter().flat_map(|&ib| cfg.counts.iter().map(move |&n| (ib, n))).collect();
    let rows = jobs
        .par_iter()
        .map(|&(ib, n)| {
            let peak = burst.peak(dt, ib, &periodic(cfg.rate, n))?;
            Ok(BurstRow { ib, rate: cfg.rate, events: n, peak })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TransferResult::Burst { mode: TransferMode::BurstCount, rows })
}

pub fn run_burst_rate(cfg: &BurstRateConfig, arrays: &ArraySet, dt: f64) -> Result<TransferResult> {
    let table = arrays.get(cfg.kind)?;
    check_biases(&table, &cfg.ib)?;
    check_positive("dt", dt)?;
    check_positive("duration", cfg.duration)?;
    check_positive("beta_over_2pi", cfg.beta_over_2pi)?;
    for &r in &cfg.rates {
        check_positive("rates", r)?;
    }
    cfg.spd.validate()?;
    let burst = Burst { table: &table, beta_over_2pi: cfg.beta_over_2pi, tau_di: cfg.tau_di, spd: cfg.spd, tail: cfg.tail };
    let jobs: Vec<(f64, f64)> = cfg.ib.iter().flat_map(|&ib| cfg.rates.iter().map(move |&r| (ib, r))).collect();
    let rows = jobs
        .par_iter()
        .map(|&(ib, rate)| {
            // Events strictly inside the burst window, first one at its start.
            let n = (cfg.duration * rate - 1e-9).ceil().max(1.0) as usize;
            let peak = burst.peak(dt, ib, &periodic(rate, n))?;
            Ok(BurstRow { ib, rate, events: n, peak })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TransferResult::Burst { mode: TransferMode::BurstRate, rows })
}

fn neuron_rate_once(
    cfg: &NeuronRateConfig,
    table: &Arc<RateArray>,
    j_refractory: f64,
    dt: f64,
    point: (f64, f64, f64, f64),
) -> Result<NeuronRateRow> {
    let (ib, beta_over_2pi, tau_di, flux) = point;
    let mut spec = NetworkSpec::new(dt);
    let mut soma = DendriteSpec::with_tau_di("soma", table.clone(), TWO_PI * beta_over_2pi, Some(tau_di), ib, &spec.constants);
    soma.drive = Some(Arc::new(Drive::Constant { flux }));
    let r = &cfg.refractory;
    let refractory = DendriteSpec::with_tau_di(
        "refractory",
        table.clone(),
        TWO_PI * r.beta_over_2pi,
        Some(r.tau_di),
        r.ib,
        &spec.constants,
    );
    let s = spec.add_dendrite(soma);
    let rd = spec.add_dendrite(refractory);
    spec.couple(rd, s, j_refractory);
    spec.add_soma(SomaSpec {
        name: "soma".into(),
        dendrite: s,
        threshold: cfg.threshold,
        refractory: Some(RefractorySpec { dendrite: rd, pulse: r.pulse }),
        n_photons: 0,
        emission: None,
        downstream: Vec::new(),
    });
    let (mut net, _) = spec.build()?;
    net.run_for(cfg.duration);
    let spikes = &net.log().spikes[0];
    let rate = match spikes.as_slice() {
        [first, .., last] => (spikes.len() - 1) as f64 / (last - first),
        _ => 0.0,
    };
    Ok(NeuronRateRow { ib, beta_over_2pi, tau_di, flux, spikes: spikes.len(), rate })
}

pub fn run_neuron_rate(cfg: &NeuronRateConfig, arrays: &ArraySet, dt: f64) -> Result<TransferResult> {
    let table = arrays.get(cfg.kind)?;
    check_biases(&table, &cfg.ib)?;
    tabulated_bias(&table, cfg.refractory.ib)?;
    check_positive("dt", dt)?;
    check_positive("duration", cfg.duration)?;
    cfg.flux.validate("flux")?;
    cfg.refractory.pulse.validate()?;
    for &b in &cfg.beta_over_2pi {
        check_positive("beta_over_2pi", b)?;
    }
    for &t in &cfg.tau_di {
        check_positive("tau_di", t)?;
    }
    let j_refractory = |ib: f64| -> Result<f64> {
        match cfg.refractory.j {
            Some(j) => Ok(j),
            None => Ok(refractory_coupling(
                &extract_thresholds(&table),
                ib,
                &extract_saturations(&table),
                cfg.refractory.ib,
                cfg.refractory.pulse.phi_peak,
            )?),
        }
    };
    let mut jobs = Vec::new();
    for &ib in &cfg.ib {
        let j = j_refractory(ib)?;
        for &b in &cfg.beta_over_2pi {
            for &t in &cfg.tau_di {
                for f in cfg.flux.values() {
                    jobs.push((j, (ib, b, t, f)));
                }
            }
        }
    }
    let rows = jobs
        .par_iter()
        .map(|&(j, point)| neuron_rate_once(cfg, &table, j, dt, point))
        .collect::<Result<Vec<_>>>()?;
    Ok(TransferResult::NeuronRate(rows))
}

pub fn run_transfer(mode: TransferMode, file: &TransferFile, arrays: &ArraySet) -> Result<TransferResult> {
    match mode {
        TransferMode::BurstCount => run_burst_count(&file.burst_count, arrays, file.dt),
        TransferMode::BurstRate => run_burst_rate(&file.burst_rate, arrays, file.dt),
        TransferMode::NeuronRate => run_neuron_rate(&file.neuron_rate, arrays, file.dt),
    }
}
