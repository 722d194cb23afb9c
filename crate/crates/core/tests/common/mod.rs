#![allow(dead_code)]

use std::sync::{Arc, OnceLock};

use soen_core::circuit::{RiParams, RttiParams};
use soen_core::rate_array::{generate_rate_array, linspace, CircuitSpec, GenerationConfig, RateArray};

/// Coarse RI array at two biases, generated once per test binary.
pub fn ri() -> Arc<RateArray> {
    static A: OnceLock<Arc<RateArray>> = OnceLock::new();
    A.get_or_init(|| {
        let cfg = GenerationConfig::new(CircuitSpec::Ri(RiParams::default()), vec![1.71, 1.95], linspace(0.0, 0.5, 26));
        let (a, failed) = generate_rate_array(&cfg).expect("generation");
        assert!(failed.is_empty());
        Arc::new(a)
    })
    .clone()
}

/// Coarse RTTI array at one bias.
pub fn rtti() -> Arc<RateArray> {
    static A: OnceLock<Arc<RateArray>> = OnceLock::new();
    A.get_or_init(|| {
        let cfg =
            GenerationConfig::new(CircuitSpec::Rtti(RttiParams::default()), vec![1.95], linspace(-0.5, 0.5, 41));
        let (a, failed) = generate_rate_array(&cfg).expect("generation");
        assert!(failed.is_empty());
        Arc::new(a)
    })
    .clone()
}
