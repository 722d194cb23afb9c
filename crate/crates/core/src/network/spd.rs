use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Flux waveform of a single-photon-detector synapse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpdParams {
    /// Peak applied flux (units of Φ₀).
    pub phi_peak: f64,
    /// Rise time constant L_tot/(r₁+r₂) in seconds.
    pub tau_rise: f64,
    /// Recovery time constant L_tot/r₂ in seconds.
    pub tau_fall: f64,
    /// Duration of the resistive state in seconds.
    pub t0: f64,
}

impl Default for SpdParams {
    fn default() -> Self {
        SpdParams { phi_peak: 0.5, tau_rise: 20e-12, tau_fall: 35e-9, t0: 200e-12 }
    }
}

impl SpdParams {
    /// Time constants from the detector circuit: hotspot resistance `r1`,
    /// series resistance `r2` and total loop inductance `l_tot`.
    pub fn from_circuit(phi_peak: f64, r1: f64, r2: f64, l_tot: f64, t0: f64) -> Result<Self> {
        if !(r1 > 0.0 && r2 > 0.0 && l_tot > 0.0) {
            return Err(Error::InvalidParameter("detector resistances and inductance must be positive".into()));
        }
        let p = SpdParams { phi_peak, tau_rise: l_tot / (r1 + r2), tau_fall: l_tot / r2, t0 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.phi_peak > 0.0 && self.phi_peak <= 0.5) {
            return Err(Error::InvalidParameter(format!("phi_peak must lie in (0, 1/2], got {}", self.phi_peak)));
        }
        if !(self.tau_rise > 0.0 && self.tau_rise < self.tau_fall) {
            return Err(Error::InvalidParameter("need 0 < tau_rise < tau_fall".into()));
        }
        if !(self.t0 > 0.0) {
            return Err(Error::InvalidParameter("t0 must be positive".into()));
        }
        Ok(())
    }

    /// Largest value of the response, reached at `t0`.
    pub fn peak(&self) -> f64 {
        spd_flux(self.t0, self)
    }
}

/// Applied flux a time `t` (s) after a detection event; zero for `t < 0`.
#[inline]
pub fn spd_flux(t: f64, p: &SpdParams) -> f64 {
    if t < 0.0 {
        return 0.0;
    }
    let amp = p.phi_peak * (1.0 - p.tau_rise / p.tau_fall);
    if t <= p.t0 {
        amp * (1.0 - (-t / p.tau_rise).exp())
    } else {
        amp * (1.0 - (-p.t0 / p.tau_rise).exp()) * (-(t - p.t0) / p.tau_fall).exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints() {
        let p = SpdParams::default();
        assert_eq!(spd_flux(0.0, &p), 0.0);
        assert_eq!(spd_flux(-1e-9, &p), 0.0);
        assert!(spd_flux(10.0, &p) < 1e-300);
    }

    #[test]
    fn continuous_at_t0() {
        let p = SpdParams::default();
        let amp = p.phi_peak * (1.0 - p.tau_rise / p.tau_fall);
        let rise = amp * (1.0 - (-p.t0 / p.tau_rise).exp());
        let fall = amp * (1.0 - (-p.t0 / p.tau_rise).exp()) * (-(0.0f64) / p.tau_fall).exp();
        assert!((rise - fall).abs() <= f64::EPSILON * rise);
        let eps = 1e-21;
        assert!((spd_flux(p.t0 - eps, &p) - spd_flux(p.t0 + eps, &p)).abs() < 1e-12);
        assert_eq!(p.peak(), rise);
    }

    #[test]
    fn circuit_constructor() {
        let p = SpdParams::from_circuit(0.5, 4000.0, 10.0, 350e-9, 200e-12).unwrap();
        assert!((p.tau_fall - 35e-9).abs() < 1e-20);
        assert!((p.tau_rise - 350e-9 / 4010.0).abs() < 1e-22);
        assert!(SpdParams::from_circuit(0.6, 1.0, 1.0, 1.0, 1.0).is_err());
    }
}
