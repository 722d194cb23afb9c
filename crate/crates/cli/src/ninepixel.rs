//! Nine-pixel letter classifier: a dendritic arbor that answers z, v or n
//! with one, two or three spikes.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use soen_core::emitter::EmissionDistribution;
use soen_core::network::{EventLog, SpdParams};

use crate::config::{check_positive, ArrayPaths, ArraySet};
use crate::error::{config_err, CliError, Result};
use crate::net::{BuiltNetwork, EmissionConfig, NetworkConfig, SynapseConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Letter {
    Z,
    V,
    N,
}

impl Letter {
    pub const ALL: [Letter; 3] = [Letter::Z, Letter::V, Letter::N];

    pub fn name(self) -> &'static str {
        match self {
            Letter::Z => "z",
            Letter::V => "v",
            Letter::N => "n",
        }
    }
}

impl fmt::Display for Letter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Letter {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "z" => Ok(Letter::Z),
            "v" => Ok(Letter::V),
            "n" => Ok(Letter::N),
            _ => config_err(format!("unknown letter '{s}'")),
        }
    }
}

/// Active pixels of each letter, numbered 1 to 9 row by row from the top left.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LetterSet {
    pub z: Vec<u8>,
    pub v: Vec<u8>,
    pub n: Vec<u8>,
}

impl Default for LetterSet {
    /// ```text
    /// z: # # #    v: # . #    n: # # #
    ///    . # .       # . #       # . #
    ///    # # #       . # .       # . #
    /// ```
    fn default() -> Self {
        LetterSet { z: vec![1, 2, 3, 5, 7, 8, 9], v: vec![1, 3, 4, 6, 8], n: vec![1, 2, 3, 4, 6, 7, 9] }
    }
}

impl LetterSet {
    pub fn pixels(&self, l: Letter) -> &[u8] {
        match l {
            Letter::Z => &self.z,
            Letter::V => &self.v,
            Letter::N => &self.n,
        }
    }

    pub fn pattern(&self, l: Letter) -> Result<[bool; 9]> {
        let mut p = [false; 9];
        for &k in self.pixels(l) {
            if !(1..=9).contains(&k) {
                return config_err(format!("letter {l}: pixel {k} outside 1..=9"));
            }
            p[k as usize - 1] = true;
        }
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NinePixelInput {
    pub pixels: [bool; 9],
    pub label: Letter,
    /// 0 for the ideal letter, otherwise the (1-based) pixel that was flipped.
    pub variant: u8,
}

impl NinePixelInput {
    pub fn render(&self) -> String {
        self.pixels
            .chunks(3)
            .map(|r| r.iter().map(|&p| if p { '#' } else { '.' }).collect::<String>())
            .collect::<Vec<_>>()
            .join("/")
    }
}

/// The three ideal letters and every single-pixel flip of each: 30 inputs.
pub fn generate_nine_pixel_inputs(letters: &LetterSet) -> Result<Vec<NinePixelInput>> {
    let mut out = Vec::with_capacity(30);
    for label in Letter::ALL {
        let ideal = letters.pattern(label)?;
        out.push(NinePixelInput { pixels: ideal, label, variant: 0 });
        for k in 0..9 {
            let mut pixels = ideal;
            pixels[k] = !pixels[k];
            out.push(NinePixelInput { pixels, label, variant: k as u8 + 1 });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerLetter<T> {
    pub z: T,
    pub v: T,
    pub n: T,
}

impl<T: Copy> PerLetter<T> {
    pub fn get(&self, l: Letter) -> T {
        match l {
            Letter::Z => self.z,
            Letter::V => self.v,
            Letter::N => self.n,
        }
    }
}

/// Synapse driven by one pixel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PixelInput {
    pub pixel: u8,
    pub target: String,
    pub phi_peak: f64,
    #[serde(default)]
    pub inhibitory: bool,
}

impl PixelInput {
    fn synapse_name(&self) -> String {
        format!("pixel{}->{}", self.pixel, self.target)
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NinePixelConfig {
    pub dt: f64,
    /// Simulated time per image (s).
    pub duration: f64,
    /// Time at which the pixel neurons fire (s).
    pub input_time: f64,
    /// One full pass over the 30 inputs per seed.
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub arrays: ArrayPaths,
    /// Photon delay of the pixel neurons' transmitters; omitted means none.
    #[serde(default)]
    pub jitter: Option<EmissionConfig>,
    #[serde(default)]
    pub letters: LetterSet,
    pub expected_spikes: PerLetter<usize>,
    /// Final dendrite of each letter.
    pub finals: PerLetter<String>,
    pub soma: String,
    /// Detector response shared by all pixel synapses, apart from amplitude.
    #[serde(default)]
    pub spd: SpdParams,
    pub inputs: Vec<PixelInput>,
    pub network: NetworkConfig,
}

/// Outcome for one image under one seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ImageResult {
    pub seed: u64,
    pub input: NinePixelInput,
    pub spikes: usize,
    pub expected: usize,
    /// Peak signal of each final dendrite.
    pub peaks: PerLetter<f64>,
}

impl ImageResult {
    pub fn correct(&self) -> bool {
        self.spikes == self.expected
    }

    /// Largest non-target final peak divided by the target's peak.
    pub fn crosstalk(&self) -> f64 {
        let target = self.peaks.get(self.input.label);
        let other = Letter::ALL
            .iter()
            .filter(|&&l| l != self.input.label)
            .map(|&l| self.peaks.get(l))
            .fold(0.0, f64::max);
        if target > 0.0 {
            other / target
        } else {
            f64::INFINITY
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NinePixelReport {
    pub results: Vec<ImageResult>,
}

impl NinePixelReport {
    pub fn all_correct(&self) -> bool {
        self.results.iter().all(ImageResult::correct)
    }

    pub fn worst_crosstalk(&self) -> f64 {
        self.results.iter().map(ImageResult::crosstalk).fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "seed,label,variant,pixels,spikes,expected,correct,peak_final_z,peak_final_v,peak_final_n\n",
        );
        for r in &self.results {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{:.6e},{:.6e},{:.6e}\n",
                r.seed,
                r.input.label,
                r.input.variant,
                r.input.render(),
                r.spikes,
                r.expected,
                r.correct(),
                r.peaks.z,
                r.peaks.v,
                r.peaks.n
            ));
        }
        out
    }
}

struct Prepared {
    net: BuiltNetwork,
    finals: PerLetter<usize>,
    soma: usize,
    /// Synapse indices of each pixel (0-based).
    pixel_synapses: Vec<Vec<usize>>,
    jitter: Option<EmissionDistribution>,
}

impl NinePixelConfig {
    fn prepare(&self, arrays: &ArraySet, base: &Path) -> Result<Prepared> {
        check_positive("dt", self.dt)?;
        check_positive("duration", self.duration)?;
        if self.seeds.is_empty() {
            return config_err("at least one seed is required");
        }
        self.spd.validate()?;
        let mut network = self.network.clone();
        for p in &self.inputs {
            if !(1..=9).contains(&p.pixel) {
                return config_err(format!("input pixel {} outside 1..=9", p.pixel));
            }
            network.synapses.push(SynapseConfig {
                name: p.synapse_name(),
                target: p.target.clone(),
                spd: SpdParams { phi_peak: p.phi_peak, ..self.spd },
                inhibitory: p.inhibitory,
                events: Vec::new(),
            });
        }
        let net = network.build(arrays, self.dt, 0, base)?;
        let mut pixel_synapses = vec![Vec::new(); 9];
        for p in &self.inputs {
            pixel_synapses[p.pixel as usize - 1].push(net.synapse(&p.synapse_name())?);
        }
        let soma = match self.network.somas.iter().position(|s| s.name == self.soma) {
            Some(k) => k,
            None => return config_err(format!("unknown soma '{}'", self.soma)),
        };
        let finals = PerLetter {
            z: net.dendrite(&self.finals.z)?,
            v: net.dendrite(&self.finals.v)?,
            n: net.dendrite(&self.finals.n)?,
        };
        let jitter = match &self.jitter {
            Some(j) => Some(j.load(base)?),
            None => None,
        };
        Ok(Prepared { net, finals, soma, pixel_synapses, jitter })
    }
}

fn run_image(
    p: &Prepared,
    cfg: &NinePixelConfig,
    seed: u64,
    index: usize,
    input: &NinePixelInput,
    record_all: bool,
) -> Result<(ImageResult, EventLog)> {
    let mut spec = p.net.spec.clone();
    spec.seed = seed;
    if !record_all {
        spec.record = vec![p.finals.z, p.finals.v, p.finals.n];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    for (k, syns) in p.pixel_synapses.iter().enumerate() {
        if !input.pixels[k] {
            continue;
        }
        for &s in syns {
            let delay = p.jitter.as_ref().map_or(0.0, |j| j.sample(&mut rng));
            spec.synapses[s].event_times = vec![cfg.input_time + delay];
        }
    }
    let (mut net, _) = spec.build()?;
    net.run_for(cfg.duration);
    let log = net.finish();
    let result = ImageResult {
        seed,
        input: *input,
        spikes: log.spikes[p.soma].len(),
        expected: cfg.expected_spikes.get(input.label),
        peaks: PerLetter { z: log.peak(p.finals.z)?, v: log.peak(p.finals.v)?, n: log.peak(p.finals.n)? },
    };
    Ok((result, log))
}

/// Runs input number `index` (as ordered by [`generate_nine_pixel_inputs`])
/// under `seed`, recording every dendrite.
pub fn trace_image(
    cfg: &NinePixelConfig,
    arrays: &ArraySet,
    base: &Path,
    seed: u64,
    index: usize,
) -> Result<(ImageResult, EventLog)> {
    let prepared = cfg.prepare(arrays, base)?;
    let inputs = generate_nine_pixel_inputs(&cfg.letters)?;
    let Some(input) = inputs.get(index) else {
        return config_err(format!("input index {index} outside 0..{}", inputs.len()));
    };
    run_image(&prepared, cfg, seed, index, input, true)
}

/// Runs all 30 inputs under every configured seed.
pub fn run_nine_pixel(cfg: &NinePixelConfig, arrays: &ArraySet, base: &Path) -> Result<NinePixelReport> {
    let prepared = cfg.prepare(arrays, base)?;
    let inputs = generate_nine_pixel_inputs(&cfg.letters)?;
    let jobs: Vec<(u64, usize)> =
        cfg.seeds.iter().flat_map(|&s| (0..inputs.len()).map(move |i| (s, i))).collect();
    let results = jobs
        .par_iter()
        .map(|&(seed, i)| run_image(&prepared, cfg, seed, i, &inputs[i], false).map(|(r, _)| r))
        .collect::<Result<Vec<_>>>()?;
    Ok(NinePixelReport { results })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thirty_inputs_one_flip_each() {
        let letters = LetterSet::default();
        let inputs = generate_nine_pixel_inputs(&letters).unwrap();
        assert_eq!(inputs.len(), 30);
        for x in &inputs {
            let ideal = letters.pattern(x.label).unwrap();
            let diff = ideal.iter().zip(&x.pixels).filter(|(a, b)| a != b).count();
            assert_eq!(diff, usize::from(x.variant != 0));
            if x.variant > 0 {
                assert_ne!(ideal[x.variant as usize - 1], x.pixels[x.variant as usize - 1]);
            }
        }
    }

    #[test]
    fn letters_are_three_flips_apart() {
        let l = LetterSet::default();
        for a in Letter::ALL {
            for b in Letter::ALL {
                if a < b {
                    let (pa, pb) = (l.pattern(a).unwrap(), l.pattern(b).unwrap());
                    let d = pa.iter().zip(&pb).filter(|(x, y)| x != y).count();
                    assert!(d >= 3, "{a} {b} {d}");
                }
            }
        }
    }

    #[test]
    fn render_rows() {
        let l = LetterSet::default();
        let z = NinePixelInput { pixels: l.pattern(Letter::Z).unwrap(), label: Letter::Z, variant: 0 };
        assert_eq!(z.render(), "###/.#./###");
    }

    #[test]
    fn pixel_out_of_range_rejected() {
        let l = LetterSet { z: vec![0], ..LetterSet::default() };
        assert!(l.pattern(Letter::Z).is_err());
    }
}
