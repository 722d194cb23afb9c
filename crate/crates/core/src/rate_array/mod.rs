//! Fluxon-rate lookup tables ("r-shells").
//!
//! A rate array stores, for each bias `i_b` and applied flux `φ`, the rate
//! `r` at which the dendrite's SQUID drives its integration loop as a
//! function of the loop signal `s`. Rates are in units of dimensionless
//! voltage: one fluxon per unit τ is `r = 2π`, so that `β ds/dτ = r` adds
//! exactly `2π/β` per fluxon, as in the circuit.

mod generate;
mod io;
mod tables;

use serde::{Deserialize, Serialize};

use crate::circuit::{DendriteKind, RiParams, RttiParams};
use crate::error::{Error, Result};

pub use generate::{generate_cell, generate_rate_array, linspace, CellResult, GenerationConfig};
pub use tables::{extract_saturations, extract_thresholds, SaturationTable, ThresholdTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CellStatus {
    /// Generation ran until fluxon production stopped, or never started.
    Complete,
    /// The fluxon budget ran out before saturation.
    Truncated,
    /// The circuit solver failed; the cell holds no data.
    Invalid,
}

impl CellStatus {
    fn code(self) -> u8 {
        match self {
            CellStatus::Complete => 0,
            CellStatus::Truncated => 1,
            CellStatus::Invalid => 2,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(CellStatus::Complete),
            1 => Some(CellStatus::Truncated),
            2 => Some(CellStatus::Invalid),
            _ => None,
        }
    }
}

/// Circuit the array was generated from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CircuitSpec {
    Ri(RiParams),
    Rtti(RttiParams),
}

impl CircuitSpec {
    pub fn kind(&self) -> DendriteKind {
        match self {
            CircuitSpec::Ri(_) => DendriteKind::Ri,
            CircuitSpec::Rtti(_) => DendriteKind::Rtti,
        }
    }

    /// Copy of the circuit at bias `ib` (the SQUID bias for RTTI).
    pub fn with_bias(&self, ib: f64) -> Self {
        match *self {
            CircuitSpec::Ri(p) => CircuitSpec::Ri(RiParams { ib, ..p }),
            CircuitSpec::Rtti(p) => CircuitSpec::Rtti(RttiParams { ib1: ib, ..p }),
        }
    }

    pub(crate) fn to_values(self) -> Vec<f64> {
        match self {
            CircuitSpec::Ri(p) => vec![p.beta_1, p.beta_2, p.beta_di, p.alpha, p.beta_c, p.ib],
            CircuitSpec::Rtti(p) => vec![
                p.beta_1, p.beta_2, p.beta_3, p.beta_4, p.beta_di, p.alpha, p.beta_c, p.ib1, p.ib2, p.ib3,
            ],
        }
    }

    pub(crate) fn from_values(kind: DendriteKind, v: &[f64]) -> Option<Self> {
        match (kind, v.len()) {
            (DendriteKind::Ri, 6) => Some(CircuitSpec::Ri(RiParams {
                beta_1: v[0],
                beta_2: v[1],
                beta_di: v[2],
                alpha: v[3],
                beta_c: v[4],
                ib: v[5],
            })),
            (DendriteKind::Rtti, 10) => Some(CircuitSpec::Rtti(RttiParams {
                beta_1: v[0],
                beta_2: v[1],
                beta_3: v[2],
                beta_4: v[3],
                beta_di: v[4],
                alpha: v[5],
                beta_c: v[6],
                ib1: v[7],
                ib2: v[8],
                ib3: v[9],
            })),
            _ => None,
        }
    }
}

/// Nearest-value index into an ascending grid, O(1) when the grid is uniform.
#[derive(Debug, Clone, PartialEq)]
struct GridIndex {
    start: f64,
    step: f64,
    inv_step: f64,
    uniform: bool,
}

impl GridIndex {
    fn new(grid: &[f64]) -> Self {
        let n = grid.len();
        if n < 2 {
            return GridIndex { start: grid.first().copied().unwrap_or(0.0), step: 0.0, inv_step: 0.0, uniform: true };
        }
        let step = (grid[n - 1] - grid[0]) / (n - 1) as f64;
        let uniform = grid.iter().enumerate().all(|(k, &g)| (g - (grid[0] + k as f64 * step)).abs() <= 1e-9 * step);
        GridIndex { start: grid[0], step, inv_step: 1.0 / step, uniform }
    }

    #[inline]
    fn nearest(&self, grid: &[f64], x: f64) -> usize {
        let n = grid.len();
        if n < 2 {
            return 0;
        }
        if self.uniform {
            // Truncating the shifted value rounds half up without a libm call.
            let k = (x - self.start) * self.inv_step + 0.5;
            // NaN falls into the first branch; the i32 cast is cheaper than a saturating usize cast.
            return if !(k >= 1.0) { 0 } else if k >= (n - 1) as f64 { n - 1 } else { k as i32 as usize };
        }
        nearest_sorted(grid, x)
    }
}

/// Index of the element of ascending `v` closest to `x`; ties go to the lower.
#[inline]
pub(crate) fn nearest_sorted(v: &[f64], x: f64) -> usize {
    let i = v.partition_point(|&g| g < x);
    if i == 0 {
        0
    } else if i == v.len() {
        v.len() - 1
    } else if x - v[i - 1] <= v[i] - x {
        i - 1
    } else {
        i
    }
}

#[derive(Debug, Clone)]
pub struct RateArray {
    kind: DendriteKind,
    circuit: CircuitSpec,
    ib_grid: Vec<f64>,
    phi_grid: Vec<f64>,
    /// Cell `(i, j)` (bias `i`, flux `j`) occupies `offsets[c]..offsets[c + 1]`
    /// with `c = i * phi_grid.len() + j`.
    offsets: Vec<usize>,
    s: Vec<f64>,
    r: Vec<f64>,
    status: Vec<CellStatus>,
    ib_index: GridIndex,
    phi_index: GridIndex,
}

impl PartialEq for RateArray {
    fn eq(&self, o: &Self) -> bool {
        self.kind == o.kind
            && self.circuit == o.circuit
            && self.ib_grid == o.ib_grid
            && self.phi_grid == o.phi_grid
            && self.offsets == o.offsets
            && self.s == o.s
            && self.r == o.r
            && self.status == o.status
    }
}

/// Breakpoints of one cell.
#[derive(Debug, Clone, Copy)]
pub struct Cell<'a> {
    pub s: &'a [f64],
    pub r: &'a [f64],
    pub status: CellStatus,
}

impl Cell<'_> {
    /// Rate at the breakpoint nearest to `s`, or 0 beyond the last one.
    #[inline]
    pub fn rate(&self, s: f64) -> f64 {
        match self.s.last() {
            None => 0.0,
            Some(&last) if s > last => 0.0,
            Some(_) => self.r[nearest_sorted(self.s, s)],
        }
    }

    /// Same as [`Cell::rate`], reusing `hint` (the insertion position found
    /// by the previous call) when it still brackets `s`. Signals change
    /// little per step, so this usually skips the binary search.
    #[inline]
    pub fn rate_from(&self, s: f64, hint: &mut usize) -> f64 {
        let v = self.s;
        let n = v.len();
        if n == 0 || s > v[n - 1] {
            return 0.0;
        }
        // i = number of breakpoints below s, as in nearest_sorted
        let h = (*hint).min(n - 1);
        let i = if (h == 0 || v[h - 1] < s) && v[h] >= s { h } else { v.partition_point(|&g| g < s) };
        *hint = i;
        let k = if i == 0 || s - v[i - 1] > v[i] - s { i } else { i - 1 };
        self.r[k]
    }

    /// Largest breakpoint with a positive rate (0 if none).
    pub fn s_max(&self) -> f64 {
        self.s.iter().zip(self.r).filter(|(_, r)| **r > 0.0).map(|(s, _)| *s).fold(0.0, f64::max)
    }
}

fn check_grid(name: &str, g: &[f64]) -> Result<()> {
    if g.is_empty() {
        return Err(Error::InvalidGrid(format!("{name} grid is empty")));
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidGrid(format!("{name} grid has non-finite values")));
    }
    if g.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidGrid(format!("{name} grid must be strictly ascending")));
    }
    Ok(())
}

impl RateArray {
    /// Assembles an array from per-cell breakpoints listed bias-major.
    pub fn from_cells(
        circuit: CircuitSpec,
        ib_grid: Vec<f64>,
        phi_grid: Vec<f64>,
        cells: Vec<(Vec<f64>, Vec<f64>, CellStatus)>,
    ) -> Result<Self> {
        let kind = circuit.kind();
        check_grid("bias", &ib_grid)?;
        check_grid("flux", &phi_grid)?;
        let (lo, hi) = match kind {
            DendriteKind::Ri => (0.0, 0.5),
            DendriteKind::Rtti => (-0.5, 0.5),
        };
        if phi_grid[0] < lo - 1e-12 || phi_grid[phi_grid.len() - 1] > hi + 1e-12 {
            return Err(Error::InvalidGrid(format!("{kind} flux grid must lie within [{lo}, {hi}]")));
        }
        if cells.len() != ib_grid.len() * phi_grid.len() {
            return Err(Error::InvalidGrid(format!(
                "expected {} cells, got {}",
                ib_grid.len() * phi_grid.len(),
                cells.len()
            )));
        }
        let mut offsets = Vec::with_capacity(cells.len() + 1);
        let mut s = Vec::new();
        let mut r = Vec::new();
        let mut status = Vec::with_capacity(cells.len());
        offsets.push(0);
        for (k, (cs, cr, st)) in cells.into_iter().enumerate() {
            if cs.len() != cr.len() {
                return Err(Error::InvalidGrid(format!("cell {k}: breakpoint and rate lengths differ")));
            }
            if cs.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::InvalidGrid(format!("cell {k}: breakpoints not strictly ascending")));
            }
            if cr.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                return Err(Error::InvalidGrid(format!("cell {k}: rates must be finite and non-negative")));
            }
            s.extend(cs);
            r.extend(cr);
            offsets.push(s.len());
            status.push(st);
        }
        let ib_index = GridIndex::new(&ib_grid);
        let phi_index = GridIndex::new(&phi_grid);
        Ok(RateArray { kind, circuit, ib_grid, phi_grid, offsets, s, r, status, ib_index, phi_index })
    }

    pub fn kind(&self) -> DendriteKind {
        self.kind
    }

    pub fn circuit(&self) -> &CircuitSpec {
        &self.circuit
    }

    pub fn ib_grid(&self) -> &[f64] {
        &self.ib_grid
    }

    pub fn phi_grid(&self) -> &[f64] {
        &self.phi_grid
    }

    #[inline]
    pub fn cell(&self, ib_idx: usize, phi_idx: usize) -> Cell<'_> {
        let c = ib_idx * self.phi_grid.len() + phi_idx;
        let (a, b) = (self.offsets[c], self.offsets[c + 1]);
        Cell { s: &self.s[a..b], r: &self.r[a..b], status: self.status[c] }
    }

    pub fn invalid_cells(&self) -> Vec<(usize, usize)> {
        let n = self.phi_grid.len();
        self.status
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == CellStatus::Invalid)
            .map(|(c, _)| (c / n, c % n))
            .collect()
    }

    pub fn truncated_cells(&self) -> usize {
        self.status.iter().filter(|s| **s == CellStatus::Truncated).count()
    }

    pub fn breakpoint_count(&self) -> usize {
        self.s.len()
    }

    /// Index of the tabulated bias nearest `ib`, or an error outside the grid.
    pub fn bias_index(&self, ib: f64) -> Result<usize> {
        let (min, max) = (self.ib_grid[0], self.ib_grid[self.ib_grid.len() - 1]);
        let slack = 1e-9 * (1.0 + max.abs());
        if !(ib >= min - slack && ib <= max + slack) {
            return Err(Error::BiasOutOfRange { ib, min, max });
        }
        Ok(self.ib_index.nearest(&self.ib_grid, ib))
    }

    /// Folds `phi` by periodicity (and symmetry for RI) into the tabulated range.
    #[inline]
    pub fn fold_flux(&self, phi: f64) -> f64 {
        let p = if phi.abs() < 0.5 { phi } else { phi - phi.round() };
        match self.kind {
            DendriteKind::Ri => p.abs(),
            DendriteKind::Rtti => p,
        }
    }

    #[inline]
    pub fn flux_index(&self, phi: f64) -> usize {
        self.phi_index.nearest(&self.phi_grid, self.fold_flux(phi))
    }

    /// Rate at a known bias index; the hot path of the phenomenological engine.
    #[inline]
    pub fn rate_at(&self, ib_idx: usize, phi: f64, s: f64) -> f64 {
        self.cell(ib_idx, self.flux_index(phi)).rate(s)
    }

    /// [`RateArray::rate_at`] with a search hint; see [`Cell::rate_from`].
    #[inline]
    pub fn rate_from(&self, ib_idx: usize, phi: f64, s: f64, hint: &mut usize) -> f64 {
        self.cell(ib_idx, self.flux_index(phi)).rate_from(s, hint)
    }

    /// Nearest-neighbour lookup of `r(φ, s; i_b)`.
    pub fn lookup(&self, phi: f64, s: f64, ib: f64) -> Result<f64> {
        Ok(self.rate_at(self.bias_index(ib)?, phi, s))
    }

    /// Largest saturation signal over all flux values at bias index `ib_idx`.
    pub fn max_saturation(&self, ib_idx: usize) -> f64 {
        (0..self.phi_grid.len()).map(|j| self.cell(ib_idx, j).s_max()).fold(0.0, f64::max)
    }

    /// Largest tabulated breakpoint at bias index `ib_idx`; no signal can exceed it.
    pub fn max_breakpoint(&self, ib_idx: usize) -> f64 {
        (0..self.phi_grid.len()).filter_map(|j| self.cell(ib_idx, j).s.last().copied()).fold(0.0, f64::max)
    }

    /// Largest rate anywhere at bias index `ib_idx`.
    pub fn max_rate(&self, ib_idx: usize) -> f64 {
        (0..self.phi_grid.len()).flat_map(|j| self.cell(ib_idx, j).r.iter().copied()).fold(0.0, f64::max)
    }

    /// Writes one cell as `s,r` rows.
    pub fn cell_csv(&self, ib_idx: usize, phi_idx: usize) -> String {
        let cell = self.cell(ib_idx, phi_idx);
        let mut out = String::from("s,r\n");
        for (s, r) in cell.s.iter().zip(cell.r) {
            out.push_str(&format!("{s:.12e},{r:.12e}\n"));
        }
        out
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        io::save(self, path)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        io::load(path)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// Small hand-built RI array: rate grows with flux above 0.2 and bias,
    /// falls linearly with signal to zero at a flux-dependent saturation.
    pub(crate) fn synthetic_ri() -> RateArray {
        let ib_grid = vec![1.5, 1.7, 1.9];
        let phi_grid: Vec<f64> = (0..=10).map(|k| k as f64 * 0.05).collect();
        let mut cells = Vec::new();
        for &ib in &ib_grid {
            for &phi in &phi_grid {
                let th = 0.45 - 0.15 * (ib - 1.5) / 0.2;
                if phi < th - 1e-9 {
                    cells.push((vec![0.0], vec![0.0], CellStatus::Complete));
                    continue;
                }
                let smax = 0.2 + (phi - th) + 0.3 * (ib - 1.5);
                let n = 20;
                let s: Vec<f64> = (0..=n).map(|k| smax * k as f64 / n as f64).collect();
                let r: Vec<f64> = s.iter().map(|v| (ib - 1.0) * (phi - th + 0.05) * (1.0 - v / smax)).collect();
                cells.push((s, r, CellStatus::Complete));
            }
        }
        RateArray::from_cells(CircuitSpec::Ri(RiParams { ib: 1.7, ..RiParams::default() }), ib_grid, phi_grid, cells).unwrap()
    }

    #[test]
    fn lookup_basics() {
        let a = synthetic_ri();
        assert_eq!(a.lookup(0.0, 0.1, 1.7).unwrap(), 0.0);
        let r = a.lookup(0.5, 0.0, 1.7).unwrap();
        assert!(r > 0.0);
        assert_eq!(a.lookup(-0.5, 0.0, 1.7).unwrap(), r);
        assert_eq!(a.lookup(1.5, 0.0, 1.7).unwrap(), r);
        assert_eq!(a.lookup(0.5, 100.0, 1.7).unwrap(), 0.0);
        assert!(matches!(a.lookup(0.5, 0.0, 2.5), Err(Error::BiasOutOfRange { .. })));
        assert!(matches!(a.lookup(0.5, 0.0, 1.2), Err(Error::BiasOutOfRange { .. })));
    }

    #[test]
    fn lookup_rounds_to_nearest() {
        let a = synthetic_ri();
        // bias 1.79 rounds to 1.7, 1.81 to 1.9
        assert_eq!(a.lookup(0.5, 0.0, 1.79).unwrap(), a.lookup(0.5, 0.0, 1.7).unwrap());
        assert_eq!(a.lookup(0.5, 0.0, 1.81).unwrap(), a.lookup(0.5, 0.0, 1.9).unwrap());
        assert_eq!(a.lookup(0.474, 0.0, 1.7).unwrap(), a.lookup(0.45, 0.0, 1.7).unwrap());
        assert_eq!(a.lookup(0.476, 0.0, 1.7).unwrap(), a.lookup(0.5, 0.0, 1.7).unwrap());
    }

    #[test]
    fn malformed_cells_rejected() {
        let c = CircuitSpec::Ri(RiParams::default());
        let bad_order = vec![(vec![0.2, 0.1], vec![1.0, 0.0], CellStatus::Complete)];
        assert!(RateArray::from_cells(c, vec![1.7], vec![0.1], bad_order).is_err());
        let negative = vec![(vec![0.0], vec![-1.0], CellStatus::Complete)];
        assert!(RateArray::from_cells(c, vec![1.7], vec![0.1], negative).is_err());
        assert!(RateArray::from_cells(c, vec![1.7, 1.6], vec![0.1], vec![]).is_err());
        assert!(RateArray::from_cells(c, vec![1.7], vec![-0.1], vec![(vec![0.0], vec![0.0], CellStatus::Complete)]).is_err());
    }

    #[test]
    fn nearest_sorted_edges() {
        let v = [0.0, 1.0, 3.0];
        assert_eq!(nearest_sorted(&v, -5.0), 0);
        assert_eq!(nearest_sorted(&v, 0.5), 0);
        assert_eq!(nearest_sorted(&v, 0.51), 1);
        assert_eq!(nearest_sorted(&v, 2.1), 2);
        assert_eq!(nearest_sorted(&v, 9.0), 2);
    }

    #[test]
    fn uniform_and_general_index_agree() {
        let g: Vec<f64> = (0..200).map(|k| 0.5 * k as f64 / 199.0).collect();
        let idx = GridIndex::new(&g);
        assert!(idx.uniform);
        for k in 0..1000 {
            let x = -0.1 + 0.7 * k as f64 / 999.0;
            let a = idx.nearest(&g, x);
            let b = nearest_sorted(&g, x);
            assert!(a == b || (g[a] - x).abs() == (g[b] - x).abs(), "{x}: {a} vs {b}");
        }
    }
}
