//! Photon-delay distributions consumed by somas.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io_util;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EmissionDistribution {
    /// CDF tabulated against delay, built from a simulated EL trace.
    Tabulated {
        times: Vec<f64>,
        cdf: Vec<f64>,
        /// Photons per spike implied by the source simulation, if known.
        n_photons: Option<f64>,
        efficiency: Option<f64>,
    },
    /// A fixed delay followed by an exponential decay.
    ShiftedExponential { delay: f64, lifetime: f64 },
}

impl EmissionDistribution {
    /// Normalizes an electroluminescence trace into a CDF by trapezoidal
    /// integration.
    pub fn from_el(times: &[f64], el: &[f64]) -> Result<Self> {
        if times.len() != el.len() || times.len() < 2 {
            return Err(Error::InvalidParameter("EL trace needs matching times and values, at least two".into()));
        }
        if times.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidParameter("EL times must be non-decreasing".into()));
        }
        if el.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidParameter("EL must be finite and non-negative".into()));
        }
        let mut cdf = Vec::with_capacity(el.len());
        let mut acc = 0.0;
        cdf.push(0.0);
        for k in 1..el.len() {
            acc += 0.5 * (el[k] + el[k - 1]) * (times[k] - times[k - 1]);
            cdf.push(acc);
        }
        if !(acc > 0.0) {
            return Err(Error::ZeroIntegral);
        }
        for c in &mut cdf {
            *c /= acc;
        }
        // trim the flat head and tail so the support is explicit
        let first = cdf.iter().position(|&c| c > 0.0).unwrap_or(1).saturating_sub(1);
        let last = cdf.iter().position(|&c| c >= 1.0).unwrap_or(cdf.len() - 1);
        let times = times[first..=last].to_vec();
        let mut cdf = cdf[first..=last].to_vec();
        *cdf.last_mut().unwrap() = 1.0;
        Ok(EmissionDistribution::Tabulated { times, cdf, n_photons: None, efficiency: None })
    }

    pub fn parametric(delay: f64, lifetime: f64) -> Result<Self> {
        if !(delay > 0.0 && lifetime > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "delay and lifetime must be positive (got {delay}, {lifetime})"
            )));
        }
        Ok(EmissionDistribution::ShiftedExponential { delay, lifetime })
    }

    pub fn cdf(&self, t: f64) -> f64 {
        match self {
            EmissionDistribution::Tabulated { times, cdf, .. } => {
                let i = times.partition_point(|&x| x <= t);
                if i == 0 {
                    0.0
                } else if i == times.len() {
                    1.0
                } else {
                    let (t0, t1) = (times[i - 1], times[i]);
                    cdf[i - 1] + (cdf[i] - cdf[i - 1]) * (t - t0) / (t1 - t0)
                }
            }
            EmissionDistribution::ShiftedExponential { delay, lifetime } => {
                if t <= *delay {
                    0.0
                } else {
                    1.0 - (-(t - delay) / lifetime).exp()
                }
            }
        }
    }

    /// Inverse of [`Self::cdf`], linear between stored points.
    pub fn quantile(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        match self {
            EmissionDistribution::Tabulated { times, cdf, .. } => {
                let i = cdf.partition_point(|&c| c < u);
                if i == 0 {
                    times[0]
                } else if i == cdf.len() {
                    times[times.len() - 1]
                } else {
                    let (c0, c1) = (cdf[i - 1], cdf[i]);
                    if c1 == c0 {
                        times[i]
                    } else {
                        times[i - 1] + (times[i] - times[i - 1]) * (u - c0) / (c1 - c0)
                    }
                }
            }
            EmissionDistribution::ShiftedExponential { delay, lifetime } => delay - lifetime * (1.0 - u).ln(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.quantile(rng.random::<f64>())
    }

    pub fn sample_delays<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        (0..n).map(|_| self.sample(rng)).collect()
    }

    /// Earliest possible delay.
    pub fn min_delay(&self) -> f64 {
        match self {
            EmissionDistribution::Tabulated { times, .. } => times[0],
            EmissionDistribution::ShiftedExponential { delay, .. } => *delay,
        }
    }

    /// Kolmogorov–Smirnov distance between the empirical CDF of `samples`
    /// and this distribution.
    pub fn ks_distance(&self, samples: &[f64]) -> f64 {
        let mut v = samples.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len() as f64;
        let mut d: f64 = 0.0;
        for (k, x) in v.iter().enumerate() {
            let f = self.cdf(*x);
            d = d.max((f - k as f64 / n).abs()).max(((k + 1) as f64 / n - f).abs());
        }
        d
    }

    /// Largest CDF gap between two distributions, checked on a fine grid
    /// spanning both supports.
    pub fn ks_between(&self, other: &EmissionDistribution) -> f64 {
        let lo = self.min_delay().min(other.min_delay());
        let hi = self.quantile(1.0 - 1e-9).max(other.quantile(1.0 - 1e-9));
        let n = 20_000;
        (0..=n)
            .map(|k| lo + (hi - lo) * k as f64 / n as f64)
            .map(|t| (self.cdf(t) - other.cdf(t)).abs())
            .fold(0.0, f64::max)
    }

    /// Shifted exponential closest to `self` in KS distance, by a coarse
    /// grid search refined twice around the best point.
    pub fn fit_parametric(&self) -> (EmissionDistribution, f64) {
        let t0 = self.min_delay();
        let spread = (self.quantile(0.9) - t0).max(f64::MIN_POSITIVE);
        let (mut delay, mut life, mut width) = (t0 + 0.5 * spread, 0.5 * spread, spread);
        let mut best = (f64::INFINITY, delay, life);
        for _ in 0..3 {
            for i in -10..=10 {
                for j in -10..=10 {
                    let d = delay + width * i as f64 / 20.0;
                    let l = life + width * j as f64 / 20.0;
                    if let Ok(p) = EmissionDistribution::parametric(d, l) {
                        let k = self.ks_between(&p);
                        if k < best.0 {
                            best = (k, d, l);
                        }
                    }
                }
            }
            (delay, life) = (best.1, best.2);
            width /= 8.0;
        }
        (EmissionDistribution::ShiftedExponential { delay: best.1, lifetime: best.2 }, best.0)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let (times, cdf, n_ph, eff) = match self {
            EmissionDistribution::Tabulated { times, cdf, n_photons, efficiency } => {
                (times.clone(), cdf.clone(), *n_photons, *efficiency)
            }
            other => {
                // store the closed form on a fine grid so the file format has one shape
                let t_end = other.quantile(1.0 - 1e-9);
                let t0 = other.min_delay();
                let times: Vec<f64> = (0..=4000).map(|k| t0 + (t_end - t0) * k as f64 / 4000.0).collect();
                let cdf = times.iter().map(|&t| other.cdf(t)).collect();
                (times, cdf, None, None)
            }
        };
        let mut p = Vec::new();
        p.extend_from_slice(&(times.len() as u64).to_le_bytes());
        for v in times.iter().chain(&cdf) {
            p.extend_from_slice(&v.to_le_bytes());
        }
        for v in [n_ph, eff] {
            p.extend_from_slice(&v.unwrap_or(f64::NAN).to_le_bytes());
        }
        let mut out = Vec::with_capacity(p.len() + 24);
        out.extend_from_slice(DIST_MAGIC);
        out.extend_from_slice(&DIST_VERSION.to_le_bytes());
        out.extend_from_slice(&(p.len() as u64).to_le_bytes());
        out.extend_from_slice(&p);
        out.extend_from_slice(&crc32fast::hash(&p).to_le_bytes());
        io_util::write_atomic(path, &out)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let b = io_util::read(path)?;
        let truncated = || Error::Truncated { path: path.to_path_buf() };
        if b.len() < 20 {
            return Err(truncated());
        }
        if &b[..8] != DIST_MAGIC {
            return Err(Error::BadMagic { path: path.to_path_buf(), expected: "emission distribution" });
        }
        let version = u32::from_le_bytes(b[8..12].try_into().unwrap());
        if version != DIST_VERSION {
            return Err(Error::VersionMismatch { path: path.to_path_buf(), found: version, expected: DIST_VERSION });
        }
        let len = u64::from_le_bytes(b[12..20].try_into().unwrap()) as usize;
        if b.len() < 20 + len + 4 {
            return Err(truncated());
        }
        let p = &b[20..20 + len];
        let stored = u32::from_le_bytes(b[20 + len..24 + len].try_into().unwrap());
        let computed = crc32fast::hash(p);
        if stored != computed {
            return Err(Error::Checksum { path: path.to_path_buf(), stored, computed });
        }
        let malformed = || Error::Malformed { path: path.to_path_buf(), reason: "inconsistent lengths".into() };
        if p.len() < 8 {
            return Err(malformed());
        }
        let n = u64::from_le_bytes(p[..8].try_into().unwrap()) as usize;
        if p.len() != 8 + 8 * (2 * n + 2) {
            return Err(malformed());
        }
        let vals: Vec<f64> = p[8..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        let opt = |v: f64| if v.is_nan() { None } else { Some(v) };
        Ok(EmissionDistribution::Tabulated {
            times: vals[..n].to_vec(),
            cdf: vals[n..2 * n].to_vec(),
            n_photons: opt(vals[2 * n]),
            efficiency: opt(vals[2 * n + 1]),
        })
    }
}

const DIST_MAGIC: &[u8; 8] = b"SOENDIST";
const DIST_VERSION: u32 = 1;

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn parametric_median() {
        let d = EmissionDistribution::parametric(5e-9, 1e-9).unwrap();
        let m = d.quantile(0.5);
        assert!((m - (5e-9 + 1e-9 * std::f64::consts::LN_2)).abs() < 1e-20);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(d.sample_delays(10_000, &mut rng).iter().all(|&t| t >= 5e-9));
    }

    #[test]
    fn delta_like_trace() {
        let d = 3e-9;
        let e = 1e-15;
        let dist = EmissionDistribution::from_el(&[0.0, d - e, d, d + e, 2.0 * d], &[0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for t in dist.sample_delays(1000, &mut rng) {
            assert!((t - d).abs() <= e);
        }
    }

    #[test]
    fn million_samples_follow_stored_cdf() {
        let times: Vec<f64> = (0..2000).map(|k| k as f64 * 0.01).collect();
        let el: Vec<f64> = times.iter().map(|t| if *t > 2.0 { (-(t - 2.0) / 1.5).exp() * (t - 2.0).min(0.5) } else { 0.0 }).collect();
        let d = EmissionDistribution::from_el(&times, &el).unwrap();
        let samples = d.sample_delays(1_000_000, &mut ChaCha8Rng::seed_from_u64(11));
        assert!(d.ks_distance(&samples) <= 0.005);
        assert!(samples.iter().all(|&t| t >= d.min_delay()));
    }

    #[test]
    fn fit_recovers_shifted_exponential() {
        let truth = EmissionDistribution::parametric(4.0, 1.5).unwrap();
        let times: Vec<f64> = (0..4000).map(|k| k as f64 * 0.01).collect();
        let el: Vec<f64> = times.iter().map(|t| if *t >= 4.0 { (-(t - 4.0) / 1.5).exp() } else { 0.0 }).collect();
        let tab = EmissionDistribution::from_el(&times, &el).unwrap();
        assert!(tab.ks_between(&truth) < 0.01);
        let (fit, ks) = tab.fit_parametric();
        assert!(ks < 0.01, "{ks}");
        let EmissionDistribution::ShiftedExponential { delay, lifetime } = fit else { panic!() };
        assert!((delay - 4.0).abs() < 0.05 && (lifetime - 1.5).abs() < 0.05, "{delay} {lifetime}");
    }

    #[test]
    fn zero_trace_rejected() {
        assert!(matches!(EmissionDistribution::from_el(&[0.0, 1.0], &[0.0, 0.0]), Err(Error::ZeroIntegral)));
    }

    #[test]
    fn sampling_is_deterministic() {
        let d = EmissionDistribution::parametric(1.0, 2.0).unwrap();
        let a = d.sample_delays(100, &mut ChaCha8Rng::seed_from_u64(3));
        let b = d.sample_delays(100, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(a, b);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.dist");
        let times: Vec<f64> = (0..100).map(|k| k as f64 * 0.1).collect();
        let el: Vec<f64> = times.iter().map(|t| if *t > 1.0 { (-(t - 1.0)).exp() } else { 0.0 }).collect();
        let d = EmissionDistribution::from_el(&times, &el).unwrap();
        d.save(&path).unwrap();
        assert_eq!(EmissionDistribution::load(&path).unwrap(), d);
        let mut bytes = std::fs::read(&path).unwrap();
        let n = bytes.len();
        bytes[n / 2] ^= 1;
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(EmissionDistribution::load(&path), Err(Error::Checksum { .. })));
    }
}
