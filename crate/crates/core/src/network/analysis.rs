//! Frustration, correlation functions and state distances.

use super::{EventLog, Network};
use crate::error::{Error, Result};

/// A neuron as the set of dendrites in its arbor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Neuron {
    pub dendrites: Vec<usize>,
}

/// Frustration from `(J, s, s_max)` input triples. Zero unless the dendrite
/// has both excitatory and inhibitory input.
pub fn frustration(inputs: &[(f64, f64, f64)]) -> f64 {
    let (mut ex, mut inh, mut ex_max, mut inh_max) = (0.0, 0.0, 0.0, 0.0);
    for &(j, s, s_max) in inputs {
        if j > 0.0 {
            ex += j * s;
            ex_max += j * s_max;
        } else if j < 0.0 {
            inh += -j * s;
            inh_max += -j * s_max;
        }
    }
    let den = ex_max * inh_max;
    if den > 0.0 {
        ex * inh / den
    } else {
        0.0
    }
}

/// Frustration of dendrite `i` with the network's current signals.
pub fn frustration_of(net: &Network, i: usize) -> Result<f64> {
    let spec = net.spec();
    if i >= spec.dendrites.len() {
        return Err(Error::InvalidParameter(format!("no dendrite {i}")));
    }
    let s = net.signals();
    let mut inputs = Vec::new();
    for c in spec.couplings.iter().filter(|c| c.target == i) {
        inputs.push((c.j, s[c.source], spec.dendrites[c.source].s_max()?));
    }
    Ok(frustration(&inputs))
}

/// Sum of dendrite frustrations over each neuron, then over neurons.
pub fn network_frustration(net: &Network, neurons: &[Neuron]) -> Result<f64> {
    let mut total = 0.0;
    for n in neurons {
        for &i in &n.dendrites {
            total += frustration_of(net, i)?;
        }
    }
    Ok(total)
}

fn mesh_index(log: &EventLog, t: f64) -> Result<usize> {
    let times = &log.times;
    if times.is_empty() {
        return Err(Error::InvalidParameter("no recorded mesh".into()));
    }
    let (t0, t1) = (times[0], times[times.len() - 1]);
    let dt = if times.len() > 1 { (t1 - t0) / (times.len() - 1) as f64 } else { 1.0 };
    if t < t0 - 0.5 * dt || t > t1 + 0.5 * dt {
        return Err(Error::InvalidParameter(format!("time {t} outside recorded range [{t0}, {t1}]")));
    }
    Ok((((t - t0) / dt).round() as usize).min(times.len() - 1))
}

fn state(log: &EventLog, dendrites: &[usize], t: f64) -> Result<Vec<f64>> {
    let k = mesh_index(log, t)?;
    dendrites.iter().map(|&i| Ok(log.signal(i)?[k])).collect()
}

/// G_i(t, t′) = s_i(t)·s_i(t′)
pub fn correlation_self(log: &EventLog, i: usize, t: f64, t_prime: f64) -> Result<f64> {
    correlation_cross(log, i, i, t, t_prime)
}

/// G_ij(t, t′) = s_i(t)·s_j(t′)
pub fn correlation_cross(log: &EventLog, i: usize, j: usize, t: f64, t_prime: f64) -> Result<f64> {
    Ok(state(log, &[i], t)?[0] * state(log, &[j], t_prime)?[0])
}

/// Dot product of neuron state vectors, S_p(t)·S_q(t′). Both neurons need
/// the same number of dendrites.
pub fn correlation_neuron(log: &EventLog, p: &Neuron, q: &Neuron, t: f64, t_prime: f64) -> Result<f64> {
    if p.dendrites.len() != q.dendrites.len() {
        return Err(Error::InvalidParameter("neuron state vectors differ in length".into()));
    }
    let a = state(log, &p.dendrites, t)?;
    let b = state(log, &q.dendrites, t_prime)?;
    Ok(a.iter().zip(&b).map(|(x, y)| x * y).sum())
}

/// Euclidean distance between two state vectors.
pub fn state_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidParameter("state vectors differ in length".into()));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn two_dendrite_log() -> EventLog {
        let mut signals = BTreeMap::new();
        signals.insert(0, vec![0.1, 0.2, 0.3]);
        signals.insert(1, vec![0.5, 0.4, 0.0]);
        EventLog { times: vec![0.0, 1e-9, 2e-9], signals, ..Default::default() }
    }

    #[test]
    fn frustration_limits() {
        assert_eq!(frustration(&[(0.3, 0.5, 0.6), (-0.2, 0.0, 0.6)]), 0.0);
        assert_eq!(frustration(&[(0.3, 0.6, 0.6), (-0.2, 0.6, 0.6)]), 1.0);
        assert_eq!(frustration(&[(0.3, 0.6, 0.6)]), 0.0);
    }

    #[test]
    fn frustration_hand_computed() {
        // (0.2·0.3 + 0.1·0.5)(0.4·0.2) / ((0.2·0.6 + 0.1·0.6)(0.4·0.9))
        let f = frustration(&[(0.2, 0.3, 0.6), (0.1, 0.5, 0.6), (-0.4, 0.2, 0.9)]);
        let expected = (0.06 + 0.05) * 0.08 / (0.18 * 0.36);
        assert!((f - expected).abs() < 1e-15);
    }

    #[test]
    fn correlations_hand_computed() {
        let log = two_dendrite_log();
        assert!((correlation_self(&log, 0, 1e-9, 1e-9).unwrap() - 0.04).abs() < 1e-15);
        assert!((correlation_cross(&log, 0, 1, 2e-9, 0.0).unwrap() - 0.15).abs() < 1e-15);
        let p = Neuron { dendrites: vec![0, 1] };
        // [0.1, 0.5]·[0.3, 0.0]
        assert!((correlation_neuron(&log, &p, &p, 0.0, 2e-9).unwrap() - 0.03).abs() < 1e-15);
        assert!(matches!(correlation_self(&log, 5, 0.0, 0.0), Err(Error::NotRecorded(5))));
        assert!(correlation_self(&log, 0, 5e-9, 0.0).is_err());
    }

    #[test]
    fn distance() {
        assert_eq!(state_distance(&[0.0, 3.0], &[4.0, 0.0]).unwrap(), 5.0);
        assert!(state_distance(&[0.0], &[1.0, 2.0]).is_err());
    }
}
