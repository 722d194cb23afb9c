use serde::{Deserialize, Serialize};

use super::{CellStatus, RateArray};
use crate::circuit::DendriteKind;
use crate::error::{Error, Result};

/// Activation thresholds at zero signal, per bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdTable {
    pub ib: Vec<f64>,
    pub plus: Vec<Option<f64>>,
    pub minus: Vec<Option<f64>>,
}

impl ThresholdTable {
    pub fn is_empty(&self) -> bool {
        self.plus.iter().chain(&self.minus).all(Option::is_none)
    }

    fn index(&self, ib: f64) -> Result<usize> {
        let (min, max) = (self.ib[0], self.ib[self.ib.len() - 1]);
        if !(ib >= min - 1e-9 && ib <= max + 1e-9) {
            return Err(Error::BiasOutOfRange { ib, min, max });
        }
        Ok(super::nearest_sorted(&self.ib, ib))
    }

    /// `(φ_th⁺, φ_th⁻)` at the nearest tabulated bias.
    pub fn at(&self, ib: f64) -> Result<(f64, f64)> {
        let k = self.index(ib)?;
        match (self.plus[k], self.minus[k]) {
            (Some(p), Some(m)) => Ok((p, m)),
            _ => Err(Error::InvalidParameter(format!("no activation threshold at bias {}", self.ib[k]))),
        }
    }
}

/// Saturation signal per `(i_b, φ)`; `None` marks cells that failed to generate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaturationTable {
    pub ib: Vec<f64>,
    pub phi: Vec<f64>,
    pub s_max: Vec<Option<f64>>,
}

impl SaturationTable {
    pub fn get(&self, ib_idx: usize, phi_idx: usize) -> Option<f64> {
        self.s_max[ib_idx * self.phi.len() + phi_idx]
    }

    /// Saturation at the tabulated point nearest `(ib, |phi|)` for RI or `(ib, phi)` for RTTI.
    pub fn at(&self, ib: f64, phi: f64) -> Result<f64> {
        let (min, max) = (self.ib[0], self.ib[self.ib.len() - 1]);
        if !(ib >= min - 1e-9 && ib <= max + 1e-9) {
            return Err(Error::BiasOutOfRange { ib, min, max });
        }
        let i = super::nearest_sorted(&self.ib, ib);
        let p = if self.phi[0] >= 0.0 { phi.abs() } else { phi };
        let j = super::nearest_sorted(&self.phi, p);
        self.get(i, j).ok_or_else(|| Error::InvalidParameter(format!("no saturation entry at ({}, {})", self.ib[i], self.phi[j])))
    }

    /// Largest saturation over all flux values at the nearest tabulated bias.
    pub fn max_at(&self, ib: f64) -> Result<f64> {
        let (min, max) = (self.ib[0], self.ib[self.ib.len() - 1]);
        if !(ib >= min - 1e-9 && ib <= max + 1e-9) {
            return Err(Error::BiasOutOfRange { ib, min, max });
        }
        let i = super::nearest_sorted(&self.ib, ib);
        Ok((0..self.phi.len()).filter_map(|j| self.get(i, j)).fold(0.0, f64::max))
    }
}

pub fn extract_thresholds(array: &RateArray) -> ThresholdTable {
    let phi = array.phi_grid();
    let mut plus = Vec::new();
    let mut minus = Vec::new();
    for i in 0..array.ib_grid().len() {
        let active = |j: usize| {
            let c = array.cell(i, j);
            c.status != CellStatus::Invalid && c.rate(0.0) > 0.0
        };
        let p = (0..phi.len()).find(|&j| phi[j] > 0.0 && active(j)).map(|j| phi[j]);
        let m = match array.kind() {
            DendriteKind::Ri => p.map(|v| -v),
            DendriteKind::Rtti => (0..phi.len()).rev().find(|&j| phi[j] < 0.0 && active(j)).map(|j| phi[j]),
        };
        plus.push(p);
        minus.push(m);
    }
    ThresholdTable { ib: array.ib_grid().to_vec(), plus, minus }
}

pub fn extract_saturations(array: &RateArray) -> SaturationTable {
    let n_ib = array.ib_grid().len();
    let n_phi = array.phi_grid().len();
    let mut s_max = Vec::with_capacity(n_ib * n_phi);
    for i in 0..n_ib {
        for j in 0..n_phi {
            let c = array.cell(i, j);
            s_max.push(if c.status == CellStatus::Invalid { None } else { Some(c.s_max()) });
        }
    }
    SaturationTable { ib: array.ib_grid().to_vec(), phi: array.phi_grid().to_vec(), s_max }
}
