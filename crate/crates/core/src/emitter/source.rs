//! Rate equations for quantum-dot and silicon emissive-center LEDs.
//!
//! Concentrations are per volume (m⁻³); internally everything is divided
//! by the emitter density and time runs in ns so a single tolerance suits
//! every component.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ode::SolverOptions;

use super::transmitter::Q_E;
use super::{sample_uniform, CurrentTrace};

const NS: f64 = 1e-9;
const BOLTZMANN_EV: f64 = 8.617_333_262e-5;
/// Populations may dip this far below zero (relative to the emitter
/// density) from integration error before a run is rejected.
const NEGATIVE_TOL: f64 = 1e-6;

/// Geometry of the active region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    /// Recombining surface area A_LED (m²).
    pub area: f64,
    /// Active volume V_LED (m³).
    pub volume: f64,
}

impl Geometry {
    /// Slab sized to hold `n_emitters` at `density` (m⁻³) with the given
    /// thickness; both faces count as surface.
    pub fn slab(n_emitters: f64, density: f64, thickness: f64) -> Self {
        let volume = n_emitters / density;
        Geometry { area: 2.0 * volume / thickness, volume }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QdParams {
    pub density: f64,
    pub c01_p: f64,
    pub c01_n: f64,
    pub c12_p: f64,
    pub c12_n: f64,
    pub e20: f64,
    /// Not given a value by the source model; 1.0 by default.
    pub eta_inj: f64,
    pub surface_velocity: f64,
    pub auger_n: f64,
    pub auger_p: f64,
    pub geometry: Geometry,
}

/// Areal dot density of the default preset (m⁻²).
pub const QD_AREAL_DENSITY: f64 = 600e12;
/// Dot-layer thickness used to turn the areal density into a volume one (m).
pub const QD_LAYER_THICKNESS: f64 = 20e-9;

impl QdParams {
    pub fn preset(n_emitters: f64) -> Self {
        let density = QD_AREAL_DENSITY / QD_LAYER_THICKNESS;
        QdParams {
            density,
            c01_p: 1e-10,
            c01_n: 1e-10,
            c12_p: 1e-10,
            c12_n: 1e-10,
            e20: 1e9,
            eta_inj: 1.0,
            surface_velocity: 2.5e3 * 1e-2,
            auger_n: 7e-30 * 1e-12,
            auger_p: 7e-30 * 1e-12,
            geometry: Geometry::slab(n_emitters, density, QD_LAYER_THICKNESS),
        }
    }

    pub fn n_emitters(&self) -> f64 {
        self.density * self.geometry.volume
    }

    pub fn validate(&self) -> Result<()> {
        positive(&[
            ("density", self.density),
            ("c01_p", self.c01_p),
            ("c01_n", self.c01_n),
            ("c12_p", self.c12_p),
            ("c12_n", self.c12_n),
            ("e20", self.e20),
            ("eta_inj", self.eta_inj),
            ("surface_velocity", self.surface_velocity),
            ("auger_n", self.auger_n),
            ("auger_p", self.auger_p),
            ("area", self.geometry.area),
            ("volume", self.geometry.volume),
        ])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EcParams {
    pub density: f64,
    pub c01: f64,
    pub c12: f64,
    pub e20: f64,
    pub k01: f64,
    pub k12: f64,
    pub nr_density: f64,
    pub e20_nr: f64,
    pub eta_inj: f64,
    pub surface_velocity: f64,
    pub auger_n: f64,
    pub auger_p: f64,
    pub geometry: Geometry,
    /// Emitted photon energy (eV); metadata only.
    pub photon_energy: f64,
}

/// Inputs to the detailed-balance factors k01 and k12.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandParams {
    /// Valence and conduction band effective densities of states (m⁻³).
    pub n_v: f64,
    pub n_c: f64,
    pub g_n: f64,
    pub g_e: f64,
    /// Band gap, hole level and electron level above the valence band edge (eV).
    pub e_g: f64,
    pub e_h: f64,
    pub e_e: f64,
    pub temperature: f64,
}

impl BandParams {
    /// Silicon at 4.2 K with W-center levels (1.018 eV emission).
    pub fn w_center() -> Self {
        let t = 4.2;
        let scale = (t / 300.0f64).powf(1.5);
        let e_g = 1.17;
        let e_e = e_g - 7.7e-3;
        BandParams {
            n_v: 1.04e25 * scale,
            n_c: 2.8e25 * scale,
            g_n: 2.0,
            g_e: 2.0,
            e_g,
            e_h: e_e - 1.018,
            e_e,
            temperature: t,
        }
    }

    /// `(k01, k12)` in m⁻³.
    pub fn factors(&self) -> (f64, f64) {
        let kt = BOLTZMANN_EV * self.temperature;
        let k01 = self.n_v / self.g_n * (-self.e_h / kt).exp();
        let k12 = self.n_c / self.g_e * ((self.e_e - self.e_g) / kt).exp();
        (k01, k12)
    }
}

/// Emissive-center density of the default preset (m⁻³).
pub const EC_DENSITY: f64 = 1e22;
pub const EC_LAYER_THICKNESS: f64 = 100e-9;

impl EcParams {
    pub fn preset(n_emitters: f64) -> Self {
        let bands = BandParams::w_center();
        let (k01, k12) = bands.factors();
        EcParams {
            density: EC_DENSITY,
            c01: 5e-14,
            c12: 1.8e-11,
            e20: 2.5e7,
            k01,
            k12,
            nr_density: 10.0 * EC_DENSITY,
            e20_nr: 1e9,
            eta_inj: 1.0,
            surface_velocity: 2.5e-2,
            auger_n: 2.8e-31 * 1e-12,
            auger_p: 1e-31 * 1e-12,
            geometry: Geometry::slab(n_emitters, EC_DENSITY, EC_LAYER_THICKNESS),
            photon_energy: bands.e_e - bands.e_h,
        }
    }

    pub fn n_emitters(&self) -> f64 {
        self.density * self.geometry.volume
    }

    /// Emission against exciton dissociation, e20 / (c12 k12).
    pub fn dissociation_ratio(&self) -> f64 {
        self.e20 / (self.c12 * self.k12)
    }

    pub fn validate(&self) -> Result<()> {
        positive(&[
            ("density", self.density),
            ("c01", self.c01),
            ("c12", self.c12),
            ("e20", self.e20),
            ("nr_density", self.nr_density),
            ("e20_nr", self.e20_nr),
            ("eta_inj", self.eta_inj),
            ("surface_velocity", self.surface_velocity),
            ("auger_n", self.auger_n),
            ("auger_p", self.auger_p),
            ("area", self.geometry.area),
            ("volume", self.geometry.volume),
        ])?;
        if !(self.k01 >= 0.0 && self.k12 >= 0.0) {
            return Err(Error::InvalidParameter("equilibrium factors must be non-negative".into()));
        }
        Ok(())
    }
}

fn positive(vals: &[(&str, f64)]) -> Result<()> {
    for (name, v) in vals {
        if !(*v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidParameter(format!("{name} must be positive (got {v})")));
        }
    }
    Ok(())
}

/// Simulated source response. Populations are normalized to the emitter
/// density (non-radiative populations too, so they can exceed one).
#[derive(Debug, Clone, Default)]
pub struct SourceTrace {
    pub times: Vec<f64>,
    /// Photon emission rate (1/s).
    pub el: Vec<f64>,
    pub populations: Vec<(&'static str, Vec<f64>)>,
    pub electrons: Vec<f64>,
    pub holes: Vec<f64>,
    pub n_photons: f64,
    pub n_eh: f64,
}

impl SourceTrace {
    /// Photons per injected electron-hole pair; `None` without injection.
    pub fn efficiency(&self) -> Option<f64> {
        (self.n_eh > 0.0).then(|| self.n_photons / self.n_eh)
    }

    pub fn population(&self, name: &str) -> Option<&[f64]> {
        self.populations.iter().find(|(n, _)| *n == name).map(|(_, v)| v.as_slice())
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,el");
        for (n, _) in &self.populations {
            s.push(',');
            s.push_str(n);
        }
        s.push_str(",n,p\n");
        for k in 0..self.times.len() {
            s.push_str(&format!("{:e},{:e}", self.times[k], self.el[k]));
            for (_, v) in &self.populations {
                s.push_str(&format!(",{:e}", v[k]));
            }
            s.push_str(&format!(",{:e},{:e}\n", self.electrons[k], self.holes[k]));
        }
        s
    }
}

fn injection_stops(current: &CurrentTrace) -> Vec<f64> {
    if current.times.len() <= 64 {
        current.times.iter().map(|t| t / NS).filter(|t| *t > 0.0).collect()
    } else {
        Vec::new()
    }
}

fn check_populations(t: f64, names: &[&'static str], vals: &[f64]) -> Result<()> {
    for (name, v) in names.iter().zip(vals) {
        if *v < -NEGATIVE_TOL {
            return Err(Error::NegativePopulation { t, which: name, value: *v });
        }
    }
    Ok(())
}

fn source_opts(dt_out: f64) -> SolverOptions {
    SolverOptions { rtol: 1e-8, atol: 1e-12, h_max: dt_out / NS, ..SolverOptions::default() }
}

/// Quantum-dot source driven by `current`, from all dots empty, sampled every
/// `dt_out` up to `t_end` (s).
pub fn simulate_qd(p: &QdParams, current: &CurrentTrace, t_end: f64, dt_out: f64) -> Result<SourceTrace> {
    p.validate()?;
    current.validate()?;
    check_window(t_end, dt_out)?;
    let nd = p.density;
    let v = p.geometry.volume;
    let surf = p.surface_velocity * p.geometry.area / v;
    let deriv = |t: f64, y: &[f64; 7]| -> [f64; 7] {
        let [x0, x1p, x1n, x2, xn, xp, _] = *y;
        let (n, pp) = (xn * nd, xp * nd);
        let g = p.eta_inj * current.at(t * NS) / (Q_E * v) / nd;
        let cap01p = x0 * pp * p.c01_p;
        let cap01n = x0 * n * p.c01_n;
        let cap12p = x1n * pp * p.c12_p;
        let cap12n = x1p * n * p.c12_n;
        let emit = x2 * p.e20;
        let auger = (p.auger_n * n * n * pp + p.auger_p * pp * pp * n) / nd;
        let d = [
            -cap01p - cap01n + emit,
            cap01p - cap12n,
            cap01n - cap12p,
            cap12p + cap12n - emit,
            g - cap01n - cap12n - surf * xn - auger,
            g - cap01p - cap12p - surf * xp - auger,
            emit,
        ];
        d.map(|x| x * NS)
    };
    let y0 = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
    let stops = injection_stops(current);
    let (times, states) = sample_uniform(deriv, y0, t_end / NS, dt_out / NS, &stops, &source_opts(dt_out))?;
    let names = ["n0", "n1p", "n1n", "n2"];
    let mut tr = SourceTrace { n_eh: p.eta_inj * current.charge() / Q_E, ..Default::default() };
    let mut pops: Vec<Vec<f64>> = (0..4).map(|_| Vec::with_capacity(times.len())).collect();
    for (t, y) in times.iter().zip(&states) {
        check_populations(t * NS, &names, &y[..6])?;
        tr.times.push(t * NS);
        tr.el.push(v * nd * y[3].max(0.0) * p.e20);
        for i in 0..4 {
            pops[i].push(y[i]);
        }
        tr.electrons.push(y[4]);
        tr.holes.push(y[5]);
    }
    tr.n_photons = v * nd * states.last().map_or(0.0, |y| y[6]);
    tr.populations = names.into_iter().zip(pops).collect();
    Ok(tr)
}

/// Silicon emissive-center source with one dominant non-radiative center.
pub fn simulate_ec(p: &EcParams, current: &CurrentTrace, t_end: f64, dt_out: f64) -> Result<SourceTrace> {
    p.validate()?;
    current.validate()?;
    check_window(t_end, dt_out)?;
    let nd = p.density;
    let v = p.geometry.volume;
    let surf = p.surface_velocity * p.geometry.area / v;
    let deriv = |t: f64, y: &[f64; 10]| -> [f64; 10] {
        let [x0, x1, x2, r0, r1, r2, xn, xp, _, _] = *y;
        let (n, pp) = (xn * nd, xp * nd);
        let g = p.eta_inj * current.at(t * NS) / (Q_E * v) / nd;
        let cap01 = x0 * pp * p.c01;
        let rel01 = x1 * p.c01 * p.k01;
        let cap12 = x1 * n * p.c12;
        let rel12 = x2 * p.c12 * p.k12;
        let emit = x2 * p.e20;
        let both = n + pp;
        let nr01 = r0 * p.c01 * both;
        let nr12 = r1 * p.c12 * both;
        let nr_emit = r2 * p.e20_nr;
        let auger = (p.auger_n * n * n * pp + p.auger_p * pp * pp * n) / nd;
        let d = [
            -cap01 + rel01 + emit,
            cap01 - rel01 - cap12 + rel12,
            cap12 - rel12 - emit,
            -nr01 + nr_emit,
            nr01 - nr12,
            nr12 - nr_emit,
            g - cap12 + rel12 - r0 * n * p.c01 - r1 * n * p.c12 - surf * xn - auger,
            g - cap01 - r0 * pp * p.c01 - r1 * pp * p.c12 - surf * xp - auger,
            emit,
            0.0,
        ];
        d.map(|x| x * NS)
    };
    let r = p.nr_density / nd;
    let y0 = [1.0, 0.0, 0.0, r, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
    let stops = injection_stops(current);
    let (times, states) = sample_uniform(deriv, y0, t_end / NS, dt_out / NS, &stops, &source_opts(dt_out))?;
    let names = ["n0", "n1", "n2", "n0_nr", "n1_nr", "n2_nr"];
    let mut tr = SourceTrace { n_eh: p.eta_inj * current.charge() / Q_E, ..Default::default() };
    let mut pops: Vec<Vec<f64>> = (0..6).map(|_| Vec::with_capacity(times.len())).collect();
    for (t, y) in times.iter().zip(&states) {
        check_populations(t * NS, &names, &y[..8])?;
        tr.times.push(t * NS);
        tr.el.push(v * nd * y[2].max(0.0) * p.e20);
        for i in 0..6 {
            pops[i].push(y[i]);
        }
        tr.electrons.push(y[6]);
        tr.holes.push(y[7]);
    }
    tr.n_photons = v * nd * states.last().map_or(0.0, |y| y[8]);
    tr.populations = names.into_iter().zip(pops).collect();
    Ok(tr)
}

fn check_window(t_end: f64, dt_out: f64) -> Result<()> {
    if t_end > 0.0 && dt_out > 0.0 && dt_out <= t_end {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("bad output window t_end={t_end}, dt={dt_out}")))
    }
}

/// Exponential lifetime of the EL tail: least-squares slope of `ln EL`
/// over samples after the peak that lie between `lo` and `hi` times the peak.
pub fn tail_lifetime(times: &[f64], el: &[f64], hi: f64, lo: f64) -> Option<f64> {
    let (k_peak, peak) = el.iter().enumerate().fold((0, 0.0), |a, (k, &v)| if v > a.1 { (k, v) } else { a });
    if !(peak > 0.0) {
        return None;
    }
    let pts: Vec<(f64, f64)> = (k_peak..el.len())
        .filter(|&k| el[k] <= hi * peak && el[k] >= lo * peak)
        .map(|k| (times[k], el[k].ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope < 0.0).then(|| -1.0 / slope)
}

/// Named parameter sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    QdDefault,
    WcenterDefault,
}

impl Preset {
    pub const ALL: [Preset; 2] = [Preset::QdDefault, Preset::WcenterDefault];

    pub fn name(self) -> &'static str {
        match self {
            Preset::QdDefault => "qd-default",
            Preset::WcenterDefault => "wcenter-default",
        }
    }

    pub fn source(self, n_emitters: f64) -> LightSource {
        match self {
            Preset::QdDefault => LightSource::Qd(QdParams::preset(n_emitters)),
            Preset::WcenterDefault => LightSource::Ec(EcParams::preset(n_emitters)),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Unknown { what: "emitter preset", name: s.to_string() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LightSource {
    Qd(QdParams),
    Ec(EcParams),
}

impl LightSource {
    pub fn simulate(&self, current: &CurrentTrace, t_end: f64, dt_out: f64) -> Result<SourceTrace> {
        match self {
            LightSource::Qd(p) => simulate_qd(p, current, t_end, dt_out),
            LightSource::Ec(p) => simulate_ec(p, current, t_end, dt_out),
        }
    }

    /// Emitters per junction area (m⁻²), which sets the LED capacitance.
    pub fn areal_density(&self) -> f64 {
        let (n, g) = match self {
            LightSource::Qd(p) => (p.n_emitters(), p.geometry),
            LightSource::Ec(p) => (p.n_emitters(), p.geometry),
        };
        2.0 * n / g.area
    }

    pub fn lifetime(&self) -> f64 {
        match self {
            LightSource::Qd(p) => 1.0 / p.e20,
            LightSource::Ec(p) => 1.0 / p.e20,
        }
    }
}
