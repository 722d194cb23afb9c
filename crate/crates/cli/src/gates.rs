//! Two-synapse logic gates and their response against the delay between
//! the two detection events.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use soen_core::circuit::{DendriteKind, TWO_PI};
use soen_core::network::{DendriteSpec, NetworkSpec, SpdParams, SynapseSpec};
use soen_core::rate_array::RateArray;

use crate::config::{check_positive, tabulated_bias, ArrayPaths, ArraySet, Grid};
use crate::error::{config_err, CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Gate {
    And,
    Or,
    AndNot,
    Xor,
}

impl Gate {
    pub const ALL: [Gate; 4] = [Gate::And, Gate::Or, Gate::AndNot, Gate::Xor];

    pub fn name(self) -> &'static str {
        match self {
            Gate::And => "and",
            Gate::Or => "or",
            Gate::AndNot => "and-not",
            Gate::Xor => "xor",
        }
    }
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Gate {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase();
        match key.as_str() {
            "and" => Ok(Gate::And),
            "or" => Ok(Gate::Or),
            "andnot" => Ok(Gate::AndNot),
            "xor" => Ok(Gate::Xor),
            _ => config_err(format!("unknown gate '{s}' (expected and, or, and-not, xor)")),
        }
    }
}

/// One synaptic input to a gate dendrite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateInput {
    pub phi_peak: f64,
    #[serde(default)]
    pub inhibitory: bool,
    #[serde(default)]
    pub tau_rise: Option<f64>,
    #[serde(default)]
    pub tau_fall: Option<f64>,
}

impl GateInput {
    pub fn spd(&self) -> SpdParams {
        let d = SpdParams::default();
        SpdParams {
            phi_peak: self.phi_peak,
            tau_rise: self.tau_rise.unwrap_or(d.tau_rise),
            tau_fall: self.tau_fall.unwrap_or(d.tau_fall),
            ..d
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateConfig {
    pub kind: DendriteKind,
    /// Biases to sweep; each must be tabulated in the rate array.
    pub ib: Vec<f64>,
    pub beta_over_2pi: f64,
    #[serde(default)]
    pub tau_di: Option<f64>,
    #[serde(default)]
    pub flux_offset: f64,
    pub inputs: [GateInput; 2],
    /// Delay of the second event relative to the first (s).
    pub delays: Grid,
    /// Time before the earlier event (s).
    #[serde(default = "default_lead")]
    pub lead: f64,
    /// Time simulated after the later event (s).
    #[serde(default = "default_tail")]
    pub tail: f64,
}

fn default_lead() -> f64 {
    20e-9
}

fn default_tail() -> f64 {
    200e-9
}

impl GateConfig {
    /// Longest single-synapse decay time; used as the pulse width.
    pub fn pulse_width(&self) -> f64 {
        self.inputs.iter().map(|i| i.spd().tau_fall).fold(0.0, f64::max)
    }

    fn validate(&self, table: &RateArray) -> Result<()> {
        if self.ib.is_empty() {
            return config_err("gate needs at least one bias value");
        }
        for &ib in &self.ib {
            tabulated_bias(table, ib)?;
        }
        check_positive("beta_over_2pi", self.beta_over_2pi)?;
        self.delays.validate("delays")?;
        for i in &self.inputs {
            i.spd().validate()?;
        }
        Ok(())
    }
}

/// The shipped gate file: shared settings plus one block per gate.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GatesFile {
    pub dt: f64,
    #[serde(default)]
    pub arrays: ArrayPaths,
    pub and: GateConfig,
    pub or: GateConfig,
    #[serde(rename = "and-not")]
    pub and_not: GateConfig,
    pub xor: GateConfig,
}

impl GatesFile {
    pub fn gate(&self, g: Gate) -> &GateConfig {
        match g {
            Gate::And => &self.and,
            Gate::Or => &self.or,
            Gate::AndNot => &self.and_not,
            Gate::Xor => &self.xor,
        }
    }
}

/// Which synapses receive an event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Inputs {
    Both,
    First,
    Second,
}

impl Inputs {
    fn name(self) -> &'static str {
        match self {
            Inputs::Both => "both",
            Inputs::First => "first",
            Inputs::Second => "second",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateRow {
    pub ib: f64,
    pub inputs: Inputs,
    /// Second event time minus first (s); zero for single-input rows.
    pub delay: f64,
    pub peak: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateResult {
    pub gate: Gate,
    pub pulse_width: f64,
    pub rows: Vec<GateRow>,
}

impl GateResult {
    pub fn biases(&self) -> Vec<f64> {
        let mut v: Vec<f64> = Vec::new();
        for r in &self.rows {
            if !v.contains(&r.ib) {
                v.push(r.ib);
            }
        }
        v
    }

    /// Peak for a single-input run.
    pub fn lone(&self, ib: f64, inputs: Inputs) -> Option<f64> {
        self.rows.iter().find(|r| r.ib == ib && r.inputs == inputs).map(|r| r.peak)
    }

    /// Peak with both inputs at the sweep delay closest to `delay`.
    pub fn at_delay(&self, ib: f64, delay: f64) -> Option<f64> {
        self.sweep(ib)
            .into_iter()
            .min_by(|a, b| (a.0 - delay).abs().total_cmp(&(b.0 - delay).abs()))
            .map(|(_, p)| p)
    }

    /// `(delay, peak)` pairs with both inputs, ascending in delay.
    pub fn sweep(&self, ib: f64) -> Vec<(f64, f64)> {
        self.rows.iter().filter(|r| r.ib == ib && r.inputs == Inputs::Both).map(|r| (r.delay, r.peak)).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("gate,i_b,inputs,delay_s,peak_s\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{},{:.6e},{:.9e}\n", self.gate, r.ib, r.inputs.name(), r.delay, r.peak));
        }
        out
    }
}

fn run_once(cfg: &GateConfig, table: &Arc<RateArray>, dt: f64, ib: f64, inputs: Inputs, delay: f64) -> Result<f64> {
    let mut spec = NetworkSpec::new(dt);
    let mut d =
        DendriteSpec::with_tau_di("gate", table.clone(), TWO_PI * cfg.beta_over_2pi, cfg.tau_di, ib, &spec.constants);
    d.flux_offset = cfg.flux_offset;
    spec.add_dendrite(d);
    let t1 = cfg.lead + (-delay).max(0.0);
    let times = [t1, t1 + delay];
    for (k, input) in cfg.inputs.iter().enumerate() {
        let fires = match inputs {
            Inputs::Both => true,
            Inputs::First => k == 0,
            Inputs::Second => k == 1,
        };
        spec.add_synapse(SynapseSpec {
            name: format!("in{}", k + 1),
            target: 0,
            spd: input.spd(),
            inhibitory: input.inhibitory,
            event_times: if fires { vec![times[k]] } else { Vec::new() },
        });
    }
    spec.record = vec![0];
    let (mut net, _) = spec.build()?;
    net.run_for(cfg.lead + delay.abs() + cfg.tail);
    Ok(net.finish().peak(0)?)
}

/// Runs the delay sweep and both single-input runs at every configured bias.
pub fn run_gate(gate: Gate, cfg: &GateConfig, arrays: &ArraySet, dt: f64) -> Result<GateResult> {
    let table = arrays.get(cfg.kind)?;
    cfg.validate(&table)?;
    check_positive("dt", dt)?;
    let mut jobs = Vec::new();
    for &ib in &cfg.ib {
        jobs.push((ib, Inputs::First, 0.0));
        jobs.push((ib, Inputs::Second, 0.0));
        for d in cfg.delays.values() {
            jobs.push((ib, Inputs::Both, d));
        }
    }
    let rows = jobs
        .par_iter()
        .map(|&(ib, inputs, delay)| {
            run_once(cfg, &table, dt, ib, inputs, delay).map(|peak| GateRow { ib, inputs, delay, peak })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GateResult { gate, pulse_width: cfg.pulse_width(), rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gate_names_parse() {
        for g in Gate::ALL {
            assert_eq!(g.name().parse::<Gate>().unwrap(), g);
        }
        assert_eq!("AND_NOT".parse::<Gate>().unwrap(), Gate::AndNot);
        assert!("nand".parse::<Gate>().is_err());
    }
}
