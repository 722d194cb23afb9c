//! hTron → two CMOS inverters → LED driver → diode.
//!
//! State: node voltages V1..V4, tron-branch current I1 and reset-branch
//! current I3. The tron branch is integrated in first-order form,
//! `L_t dI1/dt = V1 - r_t I1`, which is equivalent to differentiating the
//! node equation but never needs the derivative of a stepped `r_t`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ode::SolverOptions;

use super::{sample_uniform, CurrentTrace};

/// Electron charge (C).
pub const Q_E: f64 = 1.602_176_634e-19;

/// Charge-control MOSFET; subthreshold conduction is ignored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mosfet {
    pub w_over_l: f64,
    /// Mobility times gate capacitance per area (A/V²).
    pub mu_ci: f64,
    /// Threshold magnitude (V).
    pub v_t: f64,
}

impl Mosfet {
    fn k(&self) -> f64 {
        self.w_over_l * self.mu_ci
    }

    /// NMOS drain-source current for `vds >= 0`; reverse bias by symmetry.
    pub fn ids(&self, vds: f64, vgs: f64) -> f64 {
        if vds < 0.0 {
            return -self.ids(-vds, vgs - vds);
        }
        let vgt = vgs - self.v_t;
        if vgt <= 0.0 {
            0.0
        } else if vds <= vgt {
            self.k() * (vgt - 0.5 * vds) * vds
        } else {
            0.5 * self.k() * vgt * vgt
        }
    }

    /// PMOS form: arguments are negative in normal operation and the result
    /// is negative when current flows source to drain.
    pub fn ids_p(&self, vds: f64, vgs: f64) -> f64 {
        -self.ids(-vds, -vgs)
    }

    fn validate(&self, name: &str) -> Result<()> {
        if self.w_over_l > 0.0 && self.mu_ci > 0.0 && self.v_t > 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("MOSFET {name} needs positive W/L, mu*c_i and V_t")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiodeParams {
    /// Junction area (m²).
    pub area: f64,
    /// D_p/L_p · p_n (m⁻² s⁻¹).
    pub hole_term: f64,
    /// D_n/L_n · n_p (m⁻² s⁻¹).
    pub electron_term: f64,
    /// k_B T / e (V).
    pub thermal_voltage: f64,
}

impl DiodeParams {
    pub fn saturation_current(&self) -> f64 {
        Q_E * self.area * (self.hole_term + self.electron_term)
    }

    pub fn current(&self, v: f64) -> f64 {
        self.saturation_current() * (v / self.thermal_voltage).exp_m1()
    }

    pub fn validate(&self) -> Result<()> {
        if self.area > 0.0 && self.hole_term > 0.0 && self.electron_term > 0.0 && self.thermal_voltage > 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidParameter("diode parameters must be positive".into()))
        }
    }
}

/// Ideal time-programmed tron: zero resistance, then `resistance` for
/// `hold`, then zero again while the reset branch drains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TronProfile {
    pub resistance: f64,
    pub hold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransmitterParams {
    pub v_dd: f64,
    pub c_inverter: f64,
    pub c_driver: f64,
    pub c_led: f64,
    pub r_led: f64,
    pub l_tron: f64,
    pub l_reset: f64,
    pub r_reset: f64,
    pub i_bias: f64,
    pub tron: TronProfile,
    /// First inverter (gate on V1).
    pub m1_p: Mosfet,
    pub m1_n: Mosfet,
    /// Second inverter (gate on V2).
    pub m2_p: Mosfet,
    pub m2_n: Mosfet,
    pub m_led: Mosfet,
}

/// Emitters per junction area used by the default chain (m⁻²).
pub const DEFAULT_EMITTER_DENSITY: f64 = 600e12;
/// The two capacitance-per-area presets (F/cm²).
pub const CAPACITANCE_PER_AREA: [f64; 2] = [1e-7, 1e-5];
/// LED block RC time constant (s).
pub const LED_RC: f64 = 100e-9;

// driver width per emitter; sets the injected charge per emitter
const LED_DRIVER_W_OVER_L_PER_EMITTER: f64 = 1e-5;

impl TransmitterParams {
    /// 1 µm CMOS defaults sized for `n_emitters` emitters at
    /// `emitter_density` (m⁻²) and capacitance per area `c_a` (F/cm²).
    ///
    /// The LED capacitance, diode area, shunt conductance and driver width
    /// all scale with the emitter count, so the LED node sees the same
    /// dynamics at every size.
    pub fn one_micron(n_emitters: f64, emitter_density: f64, c_a: f64) -> (TransmitterParams, DiodeParams) {
        let area = n_emitters / emitter_density;
        let c_led = c_a * area * 1e4;
        let nmos = Mosfet { w_over_l: 2.0, mu_ci: 8.6e-5, v_t: 0.7 };
        let pmos = Mosfet { w_over_l: 5.0, mu_ci: 3.4e-5, v_t: 0.7 };
        let t = TransmitterParams {
            v_dd: 3.3,
            c_inverter: 50e-15,
            c_driver: 600e-15,
            c_led,
            r_led: LED_RC / c_led,
            l_tron: 10e-9,
            l_reset: 100e-9,
            r_reset: 20e3,
            i_bias: 200e-6,
            tron: TronProfile { resistance: 20e3, hold: 6e-9 },
            m1_p: pmos,
            m1_n: nmos,
            m2_p: pmos,
            m2_n: nmos,
            m_led: Mosfet { w_over_l: LED_DRIVER_W_OVER_L_PER_EMITTER * n_emitters, ..nmos },
        };
        let d = DiodeParams { area, hole_term: 1e-128, electron_term: 1e-128, thermal_voltage: 2e-3 };
        (t, d)
    }

    pub fn validate(&self) -> Result<()> {
        let pos = [
            ("v_dd", self.v_dd),
            ("c_inverter", self.c_inverter),
            ("c_driver", self.c_driver),
            ("c_led", self.c_led),
            ("r_led", self.r_led),
            ("l_tron", self.l_tron),
            ("l_reset", self.l_reset),
            ("r_reset", self.r_reset),
            ("i_bias", self.i_bias),
            ("tron.hold", self.tron.hold),
        ];
        for (name, v) in pos {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("transmitter {name} must be positive (got {v})")));
            }
        }
        if !(self.tron.resistance >= 0.0) {
            return Err(Error::InvalidParameter("tron resistance must be non-negative".into()));
        }
        for (n, m) in [("m1_p", &self.m1_p), ("m1_n", &self.m1_n), ("m2_p", &self.m2_p), ("m2_n", &self.m2_n), ("m_led", &self.m_led)] {
            m.validate(n)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct TransmitterTrace {
    pub times: Vec<f64>,
    pub v: [Vec<f64>; 4],
    pub i_tron: Vec<f64>,
    pub i_reset: Vec<f64>,
    /// Current into the diode itself.
    pub i_diode: Vec<f64>,
    /// Current charging the LED capacitance.
    pub i_cap: Vec<f64>,
    pub switch_time: f64,
}

impl TransmitterTrace {
    /// First time `series` reaches `fraction` of its peak.
    fn onset(&self, series: &[f64], fraction: f64) -> Option<f64> {
        let peak = series.iter().cloned().fold(0.0, f64::max);
        if !(peak > 0.0) {
            return None;
        }
        series.iter().position(|&x| x >= fraction * peak).map(|k| self.times[k])
    }

    /// Time from the tron switching to the diode current reaching 1% of its peak.
    pub fn diode_delay(&self) -> Option<f64> {
        self.onset(&self.i_diode, 0.01).map(|t| t - self.switch_time)
    }

    pub fn capacitor_delay(&self) -> Option<f64> {
        self.onset(&self.i_cap, 0.01).map(|t| t - self.switch_time)
    }

    /// Diode current as a drive for the source rate equations.
    pub fn diode_current(&self) -> CurrentTrace {
        CurrentTrace { times: self.times.clone(), current: self.i_diode.clone() }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,v1,v2,v3,v4,i_tron,i_reset,i_diode,i_cap\n");
        for k in 0..self.times.len() {
            s.push_str(&format!(
                "{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}\n",
                self.times[k],
                self.v[0][k],
                self.v[1][k],
                self.v[2][k],
                self.v[3][k],
                self.i_tron[k],
                self.i_reset[k],
                self.i_diode[k],
                self.i_cap[k]
            ));
        }
        s
    }
}

/// Integrates the transmitter from rest with the tron switching at
/// `switch_time` (s), sampling every `dt_out` up to `t_end`.
pub fn simulate_transmitter(
    p: &TransmitterParams,
    diode: &DiodeParams,
    switch_time: f64,
    t_end: f64,
    dt_out: f64,
) -> Result<TransmitterTrace> {
    p.validate()?;
    diode.validate()?;
    if !(switch_time >= 0.0 && t_end > switch_time && dt_out > 0.0) {
        return Err(Error::InvalidParameter("need 0 <= switch_time < t_end and dt_out > 0".into()));
    }
    // time in ns, currents in units of the bias
    const NS: f64 = 1e-9;
    let ib = p.i_bias;
    let on = switch_time / NS;
    let off = (switch_time + p.tron.hold) / NS;
    let r_t = |t: f64| if t >= on && t < off { p.tron.resistance } else { 0.0 };
    let deriv = |t: f64, y: &[f64; 6]| -> [f64; 6] {
        let [v1, v2, v3, v4, i1, i3] = *y;
        let rt = r_t(t);
        let dv1 = ib * (1.0 - i1 - i3) / p.c_inverter;
        let dv2 = -(p.m1_p.ids_p(v2 - p.v_dd, v1 - p.v_dd) + p.m1_n.ids(v2, v1)) / p.c_inverter;
        let dv3 = -(p.m2_p.ids_p(v3 - p.v_dd, v2 - p.v_dd) + p.m2_n.ids(v3, v2)) / p.c_driver;
        let dv4 = (p.m_led.ids(p.v_dd - v4, v3) - diode.current(v4) - v4 / p.r_led) / p.c_led;
        let di1 = (v1 - rt * ib * i1) / (p.l_tron * ib);
        let di3 = (v1 - p.r_reset * ib * i3) / (p.l_reset * ib);
        [dv1 * NS, dv2 * NS, dv3 * NS, dv4 * NS, di1 * NS, di3 * NS]
    };
    // superconducting tron carries the whole bias; the first inverter output is high
    let y0 = [0.0, p.v_dd, 0.0, 0.0, 1.0, 0.0];
    let opts = SolverOptions { rtol: 1e-8, atol: 1e-10, h_max: dt_out / NS, ..SolverOptions::default() };
    let (times, states) = sample_uniform(deriv, y0, t_end / NS, dt_out / NS, &[on, off], &opts)?;
    let mut tr = TransmitterTrace { switch_time, ..Default::default() };
    for (t, y) in times.iter().zip(&states) {
        tr.times.push(t * NS);
        for i in 0..4 {
            tr.v[i].push(y[i]);
        }
        tr.i_tron.push(y[4] * ib);
        tr.i_reset.push(y[5] * ib);
        let id = diode.current(y[3]);
        tr.i_diode.push(id);
        tr.i_cap.push(p.m_led.ids(p.v_dd - y[3], y[2]) - id - y[3] / p.r_led);
    }
    Ok(tr)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn defaults(n: f64) -> (TransmitterParams, DiodeParams) {
        TransmitterParams::one_micron(n, DEFAULT_EMITTER_DENSITY, CAPACITANCE_PER_AREA[0])
    }

    #[test]
    fn mosfet_regions_join() {
        let m = Mosfet { w_over_l: 3.0, mu_ci: 1e-4, v_t: 0.5 };
        assert_eq!(m.ids(1.0, 0.4), 0.0);
        let vgt = 1.2;
        let below = m.ids(vgt - 1e-9, vgt + 0.5);
        let above = m.ids(vgt + 1e-9, vgt + 0.5);
        assert!((below - above).abs() < 1e-12);
        assert!((above - 0.5 * 3e-4 * vgt * vgt).abs() < 1e-15);
        assert!(m.ids_p(-1.0, -2.0) < 0.0);
    }

    #[test]
    fn diode_current_increases_with_voltage() {
        let (_, d) = defaults(1e3);
        let mut last = d.current(0.0);
        assert_eq!(last, 0.0);
        for k in 1..100 {
            let i = d.current(k as f64 * 0.01);
            assert!(i > last);
            last = i;
        }
    }

    #[test]
    fn no_switch_no_diode_current() {
        let (mut t, d) = defaults(1e3);
        t.tron.resistance = 0.0;
        let tr = simulate_transmitter(&t, &d, 1e-9, 20e-9, 10e-12).unwrap();
        assert!(tr.i_diode.iter().all(|&i| i.abs() < 1e-30));
        assert_eq!(tr.diode_delay(), None);
    }

    #[test]
    fn delay_is_a_few_nanoseconds() {
        let (t, d) = defaults(1e3);
        let tr = simulate_transmitter(&t, &d, 2e-9, 30e-9, 5e-12).unwrap();
        let delay = tr.diode_delay().unwrap();
        assert!((delay - 5e-9).abs() <= 0.4 * 5e-9, "{delay:e}");
        // the LED capacitance charges before the diode conducts
        assert!(tr.capacitor_delay().unwrap() < delay);
    }

    #[test]
    fn traces_scale_with_emitter_count() {
        let run = |n| {
            let (t, d) = defaults(n);
            let tr = simulate_transmitter(&t, &d, 1e-9, 25e-9, 10e-12).unwrap();
            let peak = tr.i_diode.iter().cloned().fold(0.0, f64::max);
            tr.i_diode.iter().map(|i| i / peak).collect::<Vec<_>>()
        };
        let base = run(1e2);
        for n in [1e3, 1e4, 1e5] {
            let dev = run(n).iter().zip(&base).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(dev < 0.1, "n = {n}: {dev}");
        }
    }

    #[test]
    fn rejects_bad_window() {
        let (t, d) = defaults(1e3);
        assert!(simulate_transmitter(&t, &d, 5e-9, 4e-9, 1e-12).is_err());
        let mut bad = t;
        bad.c_led = 0.0;
        assert!(simulate_transmitter(&bad, &d, 0.0, 1e-9, 1e-12).is_err());
    }
}
