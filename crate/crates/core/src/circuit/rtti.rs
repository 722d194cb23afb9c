use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{junction_rhs, Circuit, TWO_PI};
use crate::error::{Error, Result};

/// Receive–transfer–transfer–integrate dendrite: the receiving SQUID
/// (J1, J2) feeds the integration loop through two transfer stages (J3, J4)
/// coupled by inductors L3 and L4. Bias `ib1` feeds the SQUID node, `ib2`
/// the J3 node and `ib3` the J4 node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RttiParams {
    pub beta_1: f64,
    pub beta_2: f64,
    pub beta_3: f64,
    pub beta_4: f64,
    pub beta_di: f64,
    pub alpha: f64,
    pub beta_c: f64,
    pub ib1: f64,
    pub ib2: f64,
    pub ib3: f64,
}

impl Default for RttiParams {
    fn default() -> Self {
        RttiParams {
            beta_1: 0.5 * PI,
            beta_2: 0.5 * PI,
            beta_3: 2.0 * PI,
            beta_4: 2.0 * PI,
            beta_di: TWO_PI * 1e3,
            alpha: 0.0,
            beta_c: 0.95,
            ib1: 1.71,
            ib2: 0.6,
            ib3: 0.8,
        }
    }
}

impl RttiParams {
    pub fn validate(&self) -> Result<()> {
        let betas = [self.beta_1, self.beta_2, self.beta_3, self.beta_4, self.beta_di];
        let ok = betas.iter().all(|b| *b > 0.0)
            && self.alpha >= 0.0
            && self.beta_c > 0.0
            && [self.ib1, self.ib2, self.ib3].iter().all(|b| b.is_finite());
        if !ok {
            return Err(Error::InvalidParameter(format!("RTTI parameters out of range: {self:?}")));
        }
        Ok(())
    }

    fn beta_bar(&self) -> f64 {
        self.beta_1 * self.beta_2 + self.beta_1 * self.beta_3 + self.beta_2 * self.beta_3
    }

    /// Current through L3, from the SQUID node towards J3.
    fn i_l3(&self, y: &[f64; 9], phi: f64) -> f64 {
        let (d1, d2, d3) = (y[0], y[2], y[4]);
        (self.beta_1 * (d2 - d3) + self.beta_2 * (d1 - d3 - TWO_PI * phi) + self.beta_1 * self.beta_2 * self.ib1)
            / self.beta_bar()
    }
}

impl Circuit<9> for RttiParams {
    fn junction_currents(&self, y: &[f64; 9], phi: f64) -> [f64; 4] {
        let i_di = y[8];
        let x = self.i_l3(y, phi);
        let i4 = (y[4] - y[6]) / self.beta_4 + self.ib3 - i_di;
        let i3 = x + self.ib2 + self.ib3 - i4 - i_di;
        let br = self.beta_1 + self.beta_2;
        let i2 = (y[0] - y[2] - TWO_PI * phi) / br + self.beta_1 / br * (self.ib1 - x);
        let i1 = self.total_bias() - i2 - i3 - i4 - i_di;
        [i1, i2, i3, i4]
    }

    fn rhs(&self, y: &[f64; 9], phi: f64, _dphi: f64) -> [f64; 9] {
        let cur = self.junction_currents(y, phi);
        let mut out = [0.0; 9];
        junction_rhs(y, &cur, self.beta_c, 4, &mut out);
        out[8] = (y[7] - self.alpha * y[8]) / self.beta_di;
        out
    }

    fn beta_c(&self) -> f64 {
        self.beta_c
    }

    fn output_junction(&self) -> usize {
        3
    }

    fn output_voltage(&self, y: &[f64; 9]) -> f64 {
        y[7]
    }

    fn total_bias(&self) -> f64 {
        self.ib1 + self.ib2 + self.ib3
    }

    fn beta_di(&self) -> f64 {
        self.beta_di
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Fluxoid quantization around each loop, written independently of the
    /// current relations: SQUID loop, SQUID–L3–J3 loop, J3–L4–J4 loop and
    /// the J4–integration loop.
    #[test]
    fn loop_fluxoids_are_consistent() {
        let p = RttiParams { alpha: 0.0, ..RttiParams::default() };
        let y = [0.3, 0.0, -0.4, 0.0, 0.25, 0.0, 0.1, 0.0, 0.02];
        let phi = 0.17;
        let [i1, i2, i3, i4] = p.junction_currents(&y, phi);
        let i_di = y[8];
        // node balance at each node
        let x = i1 + i2 - p.ib1; // current leaving the SQUID node through L3 is ib1 - i1 - i2
        let l3 = -x;
        let l4 = l3 + p.ib2 - i3;
        assert!((l4 + p.ib3 - i4 - i_di).abs() < 1e-12);
        // SQUID loop: δ1 + β1 i1 − β2 i2 − δ2 − 2πφ = 0
        let squid = y[0] + p.beta_1 * i1 - p.beta_2 * i2 - y[2] - TWO_PI * phi;
        assert!(squid.abs() < 1e-12, "{squid}");
        // J2 branch – L3 – J3: δ2 + β2 i2 − β3 i_L3 − δ3 = 0
        let transfer1 = y[2] + p.beta_2 * i2 - p.beta_3 * l3 - y[4];
        assert!(transfer1.abs() < 1e-12, "{transfer1}");
        // J3 – L4 – J4: δ3 − β4 i_L4 − δ4 = 0
        let transfer2 = y[4] - p.beta_4 * l4 - y[6];
        assert!(transfer2.abs() < 1e-12, "{transfer2}");
    }

    #[test]
    fn current_law() {
        let p = RttiParams::default();
        let y = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.05];
        let c = p.junction_currents(&y, 0.3);
        let total: f64 = c.iter().sum::<f64>() + y[8];
        assert!((total - p.total_bias()).abs() < 1e-12);
    }
}
