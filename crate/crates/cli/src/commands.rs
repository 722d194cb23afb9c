//! Subcommand implementations. Every output is written atomically and listed
//! in a JSON manifest in the output directory.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use soen_core::circuit::{DendriteKind, TWO_PI};
use soen_core::emitter::{run_chain, ChainConfig, Preset};
use soen_core::rate_array::{
    extract_saturations, extract_thresholds, generate_rate_array, linspace, CircuitSpec, GenerationConfig,
};
use soen_core::validate::{reports_csv, sweep, CompareParams, ComparisonReport, Sweep};

use crate::config::{base_dir, check_positive, load_toml, tabulated_bias, ArrayPaths, ArraySet};
use crate::error::{config_err, Result};
use crate::gates::{run_gate, Gate, GatesFile};
use crate::manifest::Manifest;
use crate::net::{EmissionConfig, NetworkConfig};
use crate::ninepixel::{run_nine_pixel, NinePixelConfig, NinePixelReport};
use crate::transfer::{run_transfer, TransferFile, TransferMode};

/// Settings given on the command line that override the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub dt: Option<f64>,
    pub arrays_dir: Option<PathBuf>,
    pub preset: Option<String>,
}

impl Overrides {
    fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    fn arrays(&self, paths: &ArrayPaths, base: &Path) -> Result<ArraySet> {
        match &self.arrays_dir {
            Some(dir) => ArraySet::load(&ArrayPaths::in_dir(dir)),
            None => ArraySet::load(&paths.resolved(base)),
        }
    }

    fn dt(&self, configured: f64) -> Result<f64> {
        let dt = self.dt.unwrap_or(configured);
        check_positive("dt", dt)?;
        Ok(dt)
    }
}

pub fn parse_preset(name: &str) -> Result<Preset> {
    match Preset::ALL.into_iter().find(|p| p.name() == name) {
        Some(p) => Ok(p),
        None => {
            let names: Vec<&str> = Preset::ALL.iter().map(|p| p.name()).collect();
            config_err(format!("unknown emitter preset '{name}' (expected one of {})", names.join(", ")))
        }
    }
}

// ---- gen-rates ----

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayJob {
    pub ib: Vec<f64>,
    /// Number of flux points; defaults to 200 on [0, 1/2] for RI and 401 on
    /// [−1/2, 1/2] for RTTI.
    #[serde(default)]
    pub phi_points: Option<usize>,
    #[serde(default)]
    pub tol: Option<f64>,
    /// β_di/2π of the generating circuit.
    #[serde(default)]
    pub beta_di_over_2pi: Option<f64>,
}

impl ArrayJob {
    fn generation(&self, kind: DendriteKind) -> Result<GenerationConfig> {
        if self.ib.is_empty() {
            return config_err(format!("{kind}: ib grid is empty"));
        }
        if self.ib.windows(2).any(|w| !(w[0] < w[1])) {
            return config_err(format!("{kind}: ib grid must be strictly ascending"));
        }
        let mut g = match kind {
            DendriteKind::Ri => GenerationConfig::default_ri(),
            DendriteKind::Rtti => GenerationConfig::default_rtti(),
        };
        g.ib_grid = self.ib.clone();
        if let Some(n) = self.phi_points {
            if n == 0 {
                return config_err(format!("{kind}: phi_points must be positive"));
            }
            g.phi_grid = match kind {
                DendriteKind::Ri => linspace(0.0, 0.5, n),
                DendriteKind::Rtti => linspace(-0.5, 0.5, n),
            };
        }
        if let Some(t) = self.tol {
            check_positive("tol", t)?;
            g.tol = t;
        }
        if let Some(b) = self.beta_di_over_2pi {
            check_positive("beta_di_over_2pi", b)?;
            match &mut g.circuit {
                CircuitSpec::Ri(p) => p.beta_di = TWO_PI * b,
                CircuitSpec::Rtti(p) => p.beta_di = TWO_PI * b,
            }
        }
        Ok(g)
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenRatesConfig {
    /// Output directory, relative to the config file.
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub ri: Option<ArrayJob>,
    #[serde(default)]
    pub rtti: Option<ArrayJob>,
}

fn tables_csv(array: &soen_core::rate_array::RateArray) -> String {
    let th = extract_thresholds(array);
    let sat = extract_saturations(array);
    let mut out = String::from("i_b,phi_th_plus,phi_th_minus,s_max_peak\n");
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.6}"));
    for (k, &ib) in array.ib_grid().iter().enumerate() {
        let peak = sat.max_at(ib).ok();
        out.push_str(&format!("{ib},{},{},{}\n", opt(th.plus[k]), opt(th.minus[k]), opt(peak)));
    }
    out
}

pub fn cmd_gen_rates(config: &Path, o: &Overrides) -> Result<PathBuf> {
    let cfg: GenRatesConfig = load_toml(config)?;
    let dir = match (&o.out, &cfg.out_dir) {
        (Some(d), _) => d.clone(),
        (None, Some(d)) => crate::config::resolve(&base_dir(config), d),
        (None, None) => o.out_dir(),
    };
    let mut m = Manifest::start("gen-rates", Some(config));
    let jobs = [(DendriteKind::Ri, &cfg.ri), (DendriteKind::Rtti, &cfg.rtti)];
    if jobs.iter().all(|(_, j)| j.is_none()) {
        return config_err("nothing to generate: give an [ri] or [rtti] block");
    }
    for (kind, job) in jobs {
        let Some(job) = job else { continue };
        let g = job.generation(kind)?;
        let (array, failures) = generate_rate_array(&g)?;
        for (ib, phi, e) in &failures {
            eprintln!("warning: {kind} cell (i_b {ib}, phi {phi}) failed: {e}");
        }
        let name = kind.to_string().to_ascii_lowercase();
        let path = dir.join(format!("{name}.soen"));
        array.save(&path)?;
        m.outputs.push(path);
        m.output(dir.join(format!("{name}_tables.csv")), tables_csv(&array).as_bytes())?;
        m.set(&format!("{name}_failed_cells"), failures.len());
        println!("{kind}: {} biases x {} flux points, {} failed cells", g.ib_grid.len(), g.phi_grid.len(), failures.len());
    }
    m.finish(&dir)
}

// ---- simulate ----

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub dt: f64,
    pub duration: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub arrays: ArrayPaths,
    pub network: NetworkConfig,
}

pub fn cmd_simulate(config: &Path, o: &Overrides) -> Result<PathBuf> {
    let cfg: SimulateConfig = load_toml(config)?;
    let base = base_dir(config);
    let arrays = o.arrays(&cfg.arrays, &base)?;
    let dt = o.dt(cfg.dt)?;
    check_positive("duration", cfg.duration)?;
    let seed = o.seed.unwrap_or(cfg.seed);
    let built = cfg.network.build(&arrays, dt, seed, &base)?;
    let (mut net, warnings) = built.spec.build()?;
    for w in warnings {
        eprintln!("warning: {w}");
    }
    net.run_for(cfg.duration);
    let log = net.finish();
    let dir = o.out_dir();
    let mut m = Manifest::start("simulate", Some(config));
    m.seeds.push(seed);
    m.dt = Some(dt);
    m.output(dir.join("spikes.csv"), log.spikes_csv().as_bytes())?;
    m.output(dir.join("traces.csv"), log.traces_csv().as_bytes())?;
    for (k, s) in log.spikes.iter().enumerate() {
        println!("soma {k}: {} spikes", s.len());
    }
    if log.dropped_events > 0 {
        println!("{} synapse events arrived while the detector was recovering and were dropped", log.dropped_events);
    }
    m.finish(&dir)
}

// ---- validate / bench ----

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub name: String,
    pub kind: DendriteKind,
    pub ib: f64,
    pub beta_over_2pi: Vec<f64>,
    /// Decay times (s); `inf` means no leak.
    pub tau_di: Vec<f64>,
    pub dt: Vec<f64>,
    pub pulses: Vec<usize>,
    pub seed: u64,
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub tail: Option<f64>,
    /// Repeats of the phenomenological run used for timing.
    #[serde(default)]
    pub soen_repeats: Option<usize>,
}

impl SweepConfig {
    pub fn sweep(&self) -> Result<Sweep> {
        let mut params = Vec::new();
        for &b in &self.beta_over_2pi {
            check_positive("beta_over_2pi", b)?;
            for &t in &self.tau_di {
                if !(t > 0.0) {
                    return config_err(format!("sweep '{}': tau_di must be positive or inf", self.name));
                }
                let tau_di = t.is_finite().then_some(t);
                params.push(CompareParams { beta: TWO_PI * b, tau_di, ib: self.ib });
            }
        }
        for &dt in &self.dt {
            check_positive("dt", dt)?;
        }
        if params.is_empty() || self.dt.is_empty() || self.pulses.is_empty() {
            return config_err(format!("sweep '{}' has an empty grid", self.name));
        }
        let mut s = Sweep::new(params, self.dt.clone(), self.pulses.clone(), self.seed);
        if let Some(t) = self.tol {
            check_positive("tol", t)?;
            s.tol = t;
        }
        if let Some(t) = self.tail {
            s.tail = t;
        }
        if let Some(r) = self.soen_repeats {
            s.soen_repeats = r.max(1);
        }
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepFile {
    #[serde(default)]
    pub arrays: ArrayPaths,
    pub sweeps: Vec<SweepConfig>,
}

impl SweepFile {
    /// Sweeps selected by `--preset`, or all of them.
    pub fn selected(&self, o: &Overrides) -> Result<Vec<SweepConfig>> {
        let mut out: Vec<SweepConfig> = match &o.preset {
            Some(name) => self.sweeps.iter().filter(|s| &s.name == name).cloned().collect(),
            None => self.sweeps.clone(),
        };
        if out.is_empty() {
            let names: Vec<&str> = self.sweeps.iter().map(|s| s.name.as_str()).collect();
            return config_err(format!("no sweep named '{}' (available: {})", o.preset.as_deref().unwrap_or(""), names.join(", ")));
        }
        for s in &mut out {
            if let Some(seed) = o.seed {
                s.seed = seed;
            }
            if let Some(dt) = o.dt {
                s.dt = vec![dt];
            }
        }
        Ok(out)
    }
}

fn run_sweeps(command: &str, config: &Path, o: &Overrides, parallel: bool) -> Result<(Manifest, Vec<(String, Vec<ComparisonReport>)>)> {
    let file: SweepFile = load_toml(config)?;
    let arrays = o.arrays(&file.arrays, &base_dir(config))?;
    let mut m = Manifest::start(command, Some(config));
    let mut results = Vec::new();
    for s in file.selected(o)? {
        let table = arrays.get(s.kind)?;
        tabulated_bias(&table, s.ib)?;
        let reports = sweep(&s.sweep()?, &table, parallel)?;
        m.seeds.push(s.seed);
        m.set("sweep", &s.name);
        results.push((s.name, reports));
    }
    Ok((m, results))
}

pub fn cmd_validate(config: &Path, o: &Overrides) -> Result<PathBuf> {
    let (mut m, results) = run_sweeps("validate", config, o, true)?;
    let dir = o.out_dir();
    for (name, reports) in &results {
        m.output(dir.join(format!("validate_{name}.csv")), reports_csv(reports).as_bytes())?;
        for r in reports {
            println!(
                "{name}: beta/2pi {:.0} tau_di {} dt {:.0e} pulses {} chi2 {:.3e}{}",
                r.beta / TWO_PI,
                r.tau_di.map_or("inf".into(), |t| format!("{t:.2e}")),
                r.dt,
                r.pulses,
                r.chi_squared,
                if r.flagged { " (step guard flagged)" } else { "" }
            );
        }
    }
    m.finish(&dir)
}

pub fn bench_csv(reports: &[ComparisonReport]) -> String {
    let mut out = String::from("beta,tau_di,i_b,dt,pulses,seed,t_ode,t_soen,ratio\n");
    for r in reports {
        out.push_str(&format!(
            "{:.6e},{},{},{:.6e},{},{},{:.6e},{:.6e},{:.6e}\n",
            r.beta,
            r.tau_di.map_or("inf".to_string(), |t| format!("{t:.6e}")),
            r.ib,
            r.dt,
            r.pulses,
            r.seed.map_or(String::new(), |s| s.to_string()),
            r.t_ode,
            r.t_soen,
            r.speedup()
        ));
    }
    out
}

pub fn cmd_bench(config: &Path, o: &Overrides) -> Result<PathBuf> {
    // Timing runs go one at a time so they do not compete for cores.
    let (mut m, results) = run_sweeps("bench", config, o, false)?;
    let dir = o.out_dir();
    for (name, reports) in &results {
        m.output(dir.join(format!("bench_{name}.csv")), bench_csv(reports).as_bytes())?;
        for r in reports {
            println!(
                "{name}: beta/2pi {:.0} dt {:.0e} pulses {} t_ode {:.3}s t_soen {:.2e}s ratio {:.0}",
                r.beta / TWO_PI,
                r.dt,
                r.pulses,
                r.t_ode,
                r.t_soen,
                r.speedup()
            );
        }
    }
    m.finish(&dir)
}

// ---- demos ----

pub fn cmd_demo_gates(config: &Path, gate: Option<Gate>, o: &Overrides) -> Result<PathBuf> {
    let file: GatesFile = load_toml(config)?;
    let arrays = o.arrays(&file.arrays, &base_dir(config))?;
    let dt = o.dt(file.dt)?;
    let dir = o.out_dir();
    let mut m = Manifest::start("demo-gates", Some(config));
    m.dt = Some(dt);
    let gates = match gate {
        Some(g) => vec![g],
        None => Gate::ALL.to_vec(),
    };
    for g in gates {
        let r = run_gate(g, file.gate(g), &arrays, dt)?;
        m.set("gate", g);
        m.output(dir.join(format!("gates_{g}.csv")), r.to_csv().as_bytes())?;
        for ib in r.biases() {
            let coincident = r.at_delay(ib, 0.0).unwrap_or(f64::NAN);
            let first = r.lone(ib, crate::gates::Inputs::First).unwrap_or(f64::NAN);
            let second = r.lone(ib, crate::gates::Inputs::Second).unwrap_or(f64::NAN);
            println!("{g} i_b {ib}: peak first {first:.4}, second {second:.4}, both at zero delay {coincident:.4}");
        }
    }
    m.finish(&dir)
}

pub fn cmd_demo_transfer(config: &Path, mode: Option<TransferMode>, o: &Overrides) -> Result<PathBuf> {
    let mut file: TransferFile = load_toml(config)?;
    let arrays = o.arrays(&file.arrays, &base_dir(config))?;
    file.dt = o.dt(file.dt)?;
    let dir = o.out_dir();
    let mut m = Manifest::start("demo-transfer", Some(config));
    m.dt = Some(file.dt);
    let modes = match mode {
        Some(x) => vec![x],
        None => TransferMode::ALL.to_vec(),
    };
    for mode in modes {
        let r = run_transfer(mode, &file, &arrays)?;
        m.set("mode", mode);
        m.output(dir.join(format!("transfer_{mode}.csv")), r.to_csv().as_bytes())?;
        println!("{mode}: wrote transfer_{mode}.csv");
    }
    m.finish(&dir)
}

pub fn run_ninepixel_config(config: &Path, o: &Overrides) -> Result<(NinePixelConfig, NinePixelReport)> {
    let mut cfg: NinePixelConfig = load_toml(config)?;
    let base = base_dir(config);
    let arrays = o.arrays(&cfg.arrays, &base)?;
    cfg.dt = o.dt(cfg.dt)?;
    if let Some(seed) = o.seed {
        cfg.seeds = vec![seed];
    }
    if let Some(p) = &o.preset {
        cfg.jitter = Some(EmissionConfig::Chain { preset: parse_preset(p)? });
    }
    let report = run_nine_pixel(&cfg, &arrays, &base)?;
    Ok((cfg, report))
}

pub fn cmd_demo_ninepixel(config: &Path, o: &Overrides) -> Result<PathBuf> {
    let (cfg, report) = run_ninepixel_config(config, o)?;
    let dir = o.out_dir();
    let mut m = Manifest::start("demo-ninepixel", Some(config));
    m.seeds = cfg.seeds.clone();
    m.dt = Some(cfg.dt);
    if let Some(p) = &o.preset {
        m.set("preset", p);
    }
    m.output(dir.join("ninepixel.csv"), report.to_csv().as_bytes())?;
    let correct = report.results.iter().filter(|r| r.correct()).count();
    println!(
        "{correct}/{} images classified correctly over {} seeds; worst crosstalk {:.4}",
        report.results.len(),
        cfg.seeds.len(),
        report.worst_crosstalk()
    );
    m.finish(&dir)
}

/// Runs the light-source chain for a preset and exports its traces and the
/// resulting delay distribution.
pub fn cmd_emit(preset: &str, o: &Overrides) -> Result<PathBuf> {
    let p = parse_preset(preset)?;
    let chain = run_chain(&ChainConfig::new(p))?;
    let dir = o.out_dir();
    let mut m = Manifest::start("emit", None);
    m.set("preset", p.name());
    m.output(dir.join(format!("transmitter_{}.csv", p.name())), chain.transmitter.to_csv().as_bytes())?;
    m.output(dir.join(format!("el_{}.csv", p.name())), chain.source.to_csv().as_bytes())?;
    let dist = dir.join(format!("{}.emd", p.name()));
    chain.distribution.save(&dist)?;
    m.outputs.push(dist);
    match chain.transmitter.diode_delay() {
        Some(d) => println!("{}: switch-to-diode delay {:.3} ns", p.name(), d * 1e9),
        None => println!("{}: diode current never rose", p.name()),
    }
    m.finish(&dir)
}
