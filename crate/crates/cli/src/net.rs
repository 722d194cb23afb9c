//! Network descriptions with dendrites, synapses and somas referred to by name.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use soen_core::circuit::{DendriteKind, TWO_PI};
use soen_core::emitter::{run_chain, ChainConfig, EmissionDistribution, Preset};
use soen_core::network::{DendriteSpec, NetworkSpec, RefractorySpec, SomaSpec, SpdParams, SynapseSpec};
use soen_core::validate::{generate_drive, DriveSpec};

use crate::config::{check_positive, resolve, tabulated_bias, ArraySet};
use crate::error::{config_err, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DendriteConfig {
    pub name: String,
    pub kind: DendriteKind,
    pub ib: f64,
    /// β/2π of the integration loop.
    pub beta_over_2pi: f64,
    /// Decay time (s); omitted means no leak.
    #[serde(default)]
    pub tau_di: Option<f64>,
    #[serde(default)]
    pub flux_offset: f64,
    #[serde(default)]
    pub drive: Option<DriveSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingConfig {
    pub source: String,
    pub target: String,
    pub j: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynapseConfig {
    pub name: String,
    pub target: String,
    #[serde(default)]
    pub spd: SpdParams,
    #[serde(default)]
    pub inhibitory: bool,
    /// Detection times (s).
    #[serde(default)]
    pub events: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EmissionConfig {
    /// Fixed delay followed by an exponential tail.
    Parametric { delay: f64, lifetime: f64 },
    /// Distribution file written by the emitter chain.
    File { path: PathBuf },
    /// Runs the transmitter and light-source chain for a named preset.
    Chain { preset: Preset },
}

impl EmissionConfig {
    pub fn load(&self, base: &Path) -> Result<EmissionDistribution> {
        Ok(match self {
            EmissionConfig::Parametric { delay, lifetime } => EmissionDistribution::parametric(*delay, *lifetime)?,
            EmissionConfig::File { path } => {
                let p = resolve(base, path);
                if !p.exists() {
                    return config_err(format!("emission file {} does not exist", p.display()));
                }
                EmissionDistribution::load(&p)?
            }
            EmissionConfig::Chain { preset } => run_chain(&ChainConfig::new(*preset))?.distribution,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SomaConfig {
    pub name: String,
    /// Integrating dendrite whose signal is compared with the threshold.
    pub dendrite: String,
    pub threshold: f64,
    /// Dendrite receiving the spike-triggered refractory pulse.
    #[serde(default)]
    pub refractory: Option<String>,
    #[serde(default)]
    pub refractory_pulse: Option<SpdParams>,
    #[serde(default)]
    pub n_photons: usize,
    #[serde(default)]
    pub emission: Option<EmissionConfig>,
    #[serde(default)]
    pub downstream: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub dendrites: Vec<DendriteConfig>,
    #[serde(default)]
    pub couplings: Vec<CouplingConfig>,
    #[serde(default)]
    pub synapses: Vec<SynapseConfig>,
    #[serde(default)]
    pub somas: Vec<SomaConfig>,
}

/// Built network plus name lookups.
#[derive(Debug, Clone)]
pub struct BuiltNetwork {
    pub spec: NetworkSpec,
    pub dendrites: HashMap<String, usize>,
    pub synapses: HashMap<String, usize>,
}

impl BuiltNetwork {
    pub fn dendrite(&self, name: &str) -> Result<usize> {
        lookup(&self.dendrites, "dendrite", name)
    }

    pub fn synapse(&self, name: &str) -> Result<usize> {
        lookup(&self.synapses, "synapse", name)
    }
}

fn lookup(map: &HashMap<String, usize>, what: &str, name: &str) -> Result<usize> {
    match map.get(name) {
        Some(&i) => Ok(i),
        None => config_err(format!("unknown {what} '{name}'")),
    }
}

fn index(names: impl Iterator<Item = String>, what: &str) -> Result<HashMap<String, usize>> {
    let mut map = HashMap::new();
    for (i, n) in names.enumerate() {
        if map.insert(n.clone(), i).is_some() {
            return config_err(format!("duplicate {what} name '{n}'"));
        }
    }
    Ok(map)
}

impl NetworkConfig {
    /// Builds the engine description; every dendrite is recorded. Emission
    /// distributions are loaded relative to `base`.
    pub fn build(&self, arrays: &ArraySet, dt: f64, seed: u64, base: &Path) -> Result<BuiltNetwork> {
        check_positive("dt", dt)?;
        let dendrites = index(self.dendrites.iter().map(|d| d.name.clone()), "dendrite")?;
        let synapses = index(self.synapses.iter().map(|s| s.name.clone()), "synapse")?;
        index(self.somas.iter().map(|s| s.name.clone()), "soma")?;
        let mut spec = NetworkSpec::new(dt);
        spec.seed = seed;
        for d in &self.dendrites {
            let table = arrays.get(d.kind)?;
            tabulated_bias(&table, d.ib)?;
            check_positive(&format!("dendrite '{}': beta_over_2pi", d.name), d.beta_over_2pi)?;
            if let Some(t) = d.tau_di {
                check_positive(&format!("dendrite '{}': tau_di", d.name), t)?;
            }
            let mut ds = DendriteSpec::with_tau_di(
                d.name.clone(),
                table.clone(),
                TWO_PI * d.beta_over_2pi,
                d.tau_di,
                d.ib,
                &spec.constants,
            );
            ds.flux_offset = d.flux_offset;
            if let Some(drive) = &d.drive {
                let threshold = soen_core::rate_array::extract_thresholds(&table).at(d.ib).ok().map(|t| t.0);
                ds.drive = Some(Arc::new(generate_drive(drive, threshold)?));
            }
            spec.add_dendrite(ds);
        }
        for c in &self.couplings {
            let (s, t) = (lookup(&dendrites, "dendrite", &c.source)?, lookup(&dendrites, "dendrite", &c.target)?);
            spec.couple(s, t, c.j);
        }
        for s in &self.synapses {
            s.spd.validate()?;
            let mut events = s.events.clone();
            events.sort_by(f64::total_cmp);
            spec.add_synapse(SynapseSpec {
                name: s.name.clone(),
                target: lookup(&dendrites, "dendrite", &s.target)?,
                spd: s.spd,
                inhibitory: s.inhibitory,
                event_times: events,
            });
        }
        for s in &self.somas {
            let refractory = match &s.refractory {
                Some(name) => {
                    let mut r = RefractorySpec::with_default_pulse(lookup(&dendrites, "dendrite", name)?);
                    if let Some(p) = s.refractory_pulse {
                        p.validate()?;
                        r.pulse = p;
                    }
                    Some(r)
                }
                None => None,
            };
            let emission = match &s.emission {
                Some(e) => Some(Arc::new(e.load(base)?)),
                None => None,
            };
            let downstream =
                s.downstream.iter().map(|n| lookup(&synapses, "synapse", n)).collect::<Result<Vec<_>>>()?;
            spec.add_soma(SomaSpec {
                name: s.name.clone(),
                dendrite: lookup(&dendrites, "dendrite", &s.dendrite)?,
                threshold: s.threshold,
                refractory,
                n_photons: s.n_photons,
                emission,
                downstream,
            });
        }
        spec.record = (0..self.dendrites.len()).collect();
        Ok(BuiltNetwork { spec, dendrites, synapses })
    }
}
