use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{junction_rhs, Circuit, TWO_PI};
use crate::error::{Error, Result};

/// Receive–integrate dendrite: a two-junction SQUID whose junction branches
/// share a bias node with the L–R integration loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiParams {
    pub beta_1: f64,
    pub beta_2: f64,
    pub beta_di: f64,
    pub alpha: f64,
    pub beta_c: f64,
    pub ib: f64,
}

impl Default for RiParams {
    fn default() -> Self {
        RiParams { beta_1: 0.5 * PI, beta_2: 0.5 * PI, beta_di: TWO_PI * 1e3, alpha: 0.0, beta_c: 0.95, ib: 1.71 }
    }
}

impl RiParams {
    pub fn beta_r(&self) -> f64 {
        self.beta_1 + self.beta_2
    }

    pub fn beta_bar(&self) -> f64 {
        self.beta_1 * self.beta_2 + self.beta_1 * self.beta_di + self.beta_2 * self.beta_di
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.beta_1 > 0.0
            && self.beta_2 > 0.0
            && self.beta_di > 0.0
            && self.alpha >= 0.0
            && self.beta_c > 0.0
            && self.ib.is_finite();
        if !ok {
            return Err(Error::InvalidParameter(format!("RI parameters out of range: {self:?}")));
        }
        if self.beta_di < 10.0 * self.beta_r() {
            return Err(Error::InvalidParameter(format!(
                "integration loop (beta_di = {}) must dominate the receiving loop (beta_r = {})",
                self.beta_di,
                self.beta_r()
            )));
        }
        Ok(())
    }

    fn i1(&self, y: &[f64; 5], phi: f64) -> f64 {
        let br = self.beta_r();
        (y[2] - y[0] + TWO_PI * phi) / br + self.beta_2 / br * (self.ib - y[4])
    }
}

impl Circuit<5> for RiParams {
    fn junction_currents(&self, y: &[f64; 5], phi: f64) -> [f64; 4] {
        let i1 = self.i1(y, phi);
        [i1, self.ib - i1 - y[4], 0.0, 0.0]
    }

    fn rhs(&self, y: &[f64; 5], phi: f64, dphi: f64) -> [f64; 5] {
        let cur = self.junction_currents(y, phi);
        let mut out = [0.0; 5];
        junction_rhs(y, &cur, self.beta_c, 2, &mut out);
        out[4] = (self.beta_1 * y[3] + self.beta_2 * y[1] - TWO_PI * self.beta_2 * dphi - self.alpha * self.beta_r() * y[4])
            / self.beta_bar();
        out
    }

    fn beta_c(&self) -> f64 {
        self.beta_c
    }

    fn output_junction(&self) -> usize {
        1
    }

    fn output_voltage(&self, y: &[f64; 5]) -> f64 {
        (self.beta_1 * y[3] + self.beta_2 * y[1]) / self.beta_r()
    }

    fn total_bias(&self) -> f64 {
        self.ib
    }

    fn beta_di(&self) -> f64 {
        self.beta_di
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Kirchhoff's voltage law around the receiving loop and the integration
    /// loop, evaluated with finite differences of the branch currents.
    #[test]
    fn loop_equations_hold() {
        let p = RiParams { alpha: 0.3, beta_di: 200.0, ..RiParams::default() };
        let y = [0.4, 0.7, -0.2, 1.1, 0.05];
        let (phi, dphi) = (0.21, 0.013);
        let f = p.rhs(&y, phi, dphi);
        let h = 1e-6;
        let y2: [f64; 5] = std::array::from_fn(|i| y[i] + h * f[i]);
        let c0 = p.junction_currents(&y, phi);
        let c1 = p.junction_currents(&y2, phi + h * dphi);
        let di1 = (c1[0] - c0[0]) / h;
        let di2 = (c1[1] - c0[1]) / h;
        let didi = f[4];
        let r_loop = y[1] + p.beta_1 * di1 - p.beta_2 * di2 - y[3] - TWO_PI * dphi;
        let i_loop = y[3] + p.beta_2 * di2 - p.beta_di * didi - p.alpha * y[4];
        assert!(r_loop.abs() < 1e-5, "receiving loop residual {r_loop}");
        assert!(i_loop.abs() < 1e-5, "integration loop residual {i_loop}");
    }

    #[test]
    fn bias_splits_evenly_at_rest() {
        let p = RiParams::default();
        let c = p.junction_currents(&[0.0; 5], 0.0);
        assert!((c[0] - p.ib / 2.0).abs() < 1e-15);
        assert!((c[1] - p.ib / 2.0).abs() < 1e-15);
    }

    #[test]
    fn small_integration_loop_rejected() {
        let p = RiParams { beta_di: 1.0, ..RiParams::default() };
        assert!(p.validate().is_err());
    }
}
