use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{CellStatus, CircuitSpec, RateArray};
use crate::circuit::{self, Circuit, FluxonCounter, RiParams, RttiParams, TWO_PI};
use crate::drive::Drive;
use crate::error::{Error, Result};
use crate::ode::{Flow, SolverOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    /// Circuit template; its bias is replaced by each grid value and its
    /// leak is forced to zero.
    pub circuit: CircuitSpec,
    pub ib_grid: Vec<f64>,
    pub phi_grid: Vec<f64>,
    pub tol: f64,
    /// Fluxons after which a cell is cut off; defaults to `3·β_di/2π`.
    pub fluxon_budget: Option<usize>,
    /// A cell is saturated once no fluxon has appeared for this many of the
    /// last inter-fluxon intervals...
    pub quiet_factor: f64,
    /// ...and for at least this long (τ).
    pub quiet_min: f64,
    /// Give up waiting for the first fluxon after this long (τ).
    pub startup_limit: f64,
}

impl GenerationConfig {
    pub fn new(circuit: CircuitSpec, ib_grid: Vec<f64>, phi_grid: Vec<f64>) -> Self {
        GenerationConfig {
            circuit,
            ib_grid,
            phi_grid,
            tol: 1e-6,
            fluxon_budget: None,
            quiet_factor: 20.0,
            quiet_min: 500.0,
            startup_limit: 3000.0,
        }
    }

    /// Bias grid of 41 points on [1.35, 1.95].
    pub fn default_ib_grid() -> Vec<f64> {
        linspace(1.35, 1.95, 41)
    }

    /// 200 points on [0, 1/2] for RI; 401 points on [−1/2, 1/2] for RTTI,
    /// so both share the same spacing.
    pub fn default_phi_grid(kind: crate::circuit::DendriteKind) -> Vec<f64> {
        match kind {
            crate::circuit::DendriteKind::Ri => linspace(0.0, 0.5, 200),
            crate::circuit::DendriteKind::Rtti => linspace(-0.5, 0.5, 401),
        }
    }

    pub fn default_ri() -> Self {
        Self::new(
            CircuitSpec::Ri(RiParams::default()),
            Self::default_ib_grid(),
            Self::default_phi_grid(crate::circuit::DendriteKind::Ri),
        )
    }

    pub fn default_rtti() -> Self {
        Self::new(
            CircuitSpec::Rtti(RttiParams::default()),
            Self::default_ib_grid(),
            Self::default_phi_grid(crate::circuit::DendriteKind::Rtti),
        )
    }

    fn beta_di(&self) -> f64 {
        match &self.circuit {
            CircuitSpec::Ri(p) => p.beta_di,
            CircuitSpec::Rtti(p) => p.beta_di,
        }
    }

    pub fn budget(&self) -> usize {
        self.fluxon_budget.unwrap_or_else(|| (3.0 * self.beta_di() / TWO_PI).ceil() as usize)
    }
}

pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub s: Vec<f64>,
    pub r: Vec<f64>,
    pub status: CellStatus,
    /// Fluxons produced at the output junction.
    pub fluxons: Vec<f64>,
    pub tau_end: f64,
}

/// Runs one circuit at constant flux with no leak and converts the fluxon
/// train into `(s, r)` breakpoints: each inter-fluxon interval Δτ gives
/// `r = 2π/Δτ` at the loop current when the interval's first fluxon appears.
pub fn generate_cell(circuit: &CircuitSpec, phi: f64, cfg: &GenerationConfig) -> Result<CellResult> {
    match circuit {
        CircuitSpec::Ri(p) => {
            let p = RiParams { alpha: 0.0, ..*p };
            p.validate()?;
            cell_run::<5, _>(&p, phi, cfg)
        }
        CircuitSpec::Rtti(p) => {
            let p = RttiParams { alpha: 0.0, ..*p };
            p.validate()?;
            cell_run::<9, _>(&p, phi, cfg)
        }
    }
}

fn cell_run<const N: usize, C: Circuit<N>>(c: &C, phi: f64, cfg: &GenerationConfig) -> Result<CellResult> {
    let drive = Drive::Constant { flux: phi };
    let j = c.output_junction();
    let budget = cfg.budget();
    let mut counter = FluxonCounter::new(0.0);
    let mut times: Vec<f64> = Vec::new();
    let mut currents: Vec<f64> = Vec::new();
    let mut truncated = false;
    let mut last_idi = 0.0;
    let opts = SolverOptions { h_max: 50.0, ..SolverOptions::with_tol(cfg.tol) };
    // The run is bounded by the stopping rules below; this is only a backstop.
    let tau_limit = cfg.startup_limit + (budget as f64 + 10.0) * cfg.startup_limit;
    let summary = circuit::run(c, &drive, tau_limit, &opts, |st| {
        let before = times.len();
        counter.advance(st.t0, st.y0[2 * j], st.t1, st.y1[2 * j], &mut times);
        let (i0, i1) = (st.y0[N - 1], st.y1[N - 1]);
        let h = st.h();
        for &tc in &times[before..] {
            let f = if h > 0.0 { (tc - st.t0) / h } else { 1.0 };
            currents.push(i0 + f * (i1 - i0));
        }
        last_idi = i1;
        match times.last() {
            None if st.t1 > cfg.startup_limit => Flow::Stop,
            None => Flow::Continue,
            Some(&last) => {
                if times.len() > budget {
                    truncated = true;
                    return Flow::Stop;
                }
                let interval = if times.len() >= 2 { last - times[times.len() - 2] } else { last };
                let quiet = (cfg.quiet_factor * interval).max(cfg.quiet_min);
                if st.t1 - last > quiet {
                    Flow::Stop
                } else {
                    Flow::Continue
                }
            }
        }
    })?;

    let mut s = Vec::with_capacity(times.len());
    let mut r = Vec::with_capacity(times.len());
    for k in 1..times.len() {
        let dt = times[k] - times[k - 1];
        let at = currents[k - 1];
        if dt > 0.0 && s.last().is_none_or(|&p| at > p) {
            s.push(at);
            r.push(TWO_PI / dt);
        }
    }
    if s.is_empty() {
        s.push(0.0);
        r.push(0.0);
    } else {
        let last = *s.last().unwrap();
        let end = if last_idi > last { last_idi } else { last + last.abs().max(1.0) * 1e-12 };
        s.push(end);
        r.push(0.0);
    }
    Ok(CellResult {
        s,
        r,
        status: if truncated { CellStatus::Truncated } else { CellStatus::Complete },
        fluxons: times,
        tau_end: summary.t,
    })
}

/// Generates every `(i_b, φ)` cell. Cells whose circuit run fails are kept
/// as invalid (empty) entries; their positions are returned alongside.
pub fn generate_rate_array(cfg: &GenerationConfig) -> Result<(RateArray, Vec<(f64, f64, Error)>)> {
    super::check_grid("bias", &cfg.ib_grid)?;
    super::check_grid("flux", &cfg.phi_grid)?;
    if !(cfg.tol > 0.0) {
        return Err(Error::InvalidParameter("tolerance must be positive".into()));
    }
    let n_phi = cfg.phi_grid.len();
    let jobs: Vec<(f64, f64)> =
        cfg.ib_grid.iter().flat_map(|&ib| cfg.phi_grid.iter().map(move |&phi| (ib, phi))).collect();
    let results: Vec<Result<CellResult>> = jobs
        .par_iter()
        .map(|&(ib, phi)| generate_cell(&cfg.circuit.with_bias(ib), phi, cfg))
        .collect();
    let mut cells = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (k, res) in results.into_iter().enumerate() {
        match res {
            Ok(c) => cells.push((c.s, c.r, c.status)),
            Err(e) if e.is_numerical() => {
                failures.push((cfg.ib_grid[k / n_phi], cfg.phi_grid[k % n_phi], e));
                cells.push((Vec::new(), Vec::new(), CellStatus::Invalid));
            }
            Err(e) => return Err(e),
        }
    }
    let array = RateArray::from_cells(cfg.circuit, cfg.ib_grid.clone(), cfg.phi_grid.clone(), cells)?;
    Ok((array, failures))
}
