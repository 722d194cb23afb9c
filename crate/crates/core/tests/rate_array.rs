mod common;

use proptest::prelude::*;
use soen_core::rate_array::{extract_saturations, extract_thresholds, RateArray};

#[test]
fn save_load_round_trip_is_exact() {
    let a = common::ri();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ri.soen");
    a.save(&path).unwrap();
    let b = RateArray::load(&path).unwrap();
    assert_eq!(a.ib_grid(), b.ib_grid());
    assert_eq!(a.phi_grid(), b.phi_grid());
    for k in 0..a.ib_grid().len() {
        for j in 0..a.phi_grid().len() {
            let (ca, cb) = (a.cell(k, j), b.cell(k, j));
            assert_eq!(ca.s, cb.s);
            assert_eq!(ca.r, cb.r);
        }
    }
}

#[test]
fn corrupted_file_is_rejected() {
    let a = common::ri();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ri.soen");
    a.save(&path).unwrap();
    let mut bytes = std::fs::read(&path).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0xff;
    std::fs::write(&path, &bytes).unwrap();
    assert!(RateArray::load(&path).is_err());
}

#[test]
fn no_rate_without_flux() {
    let a = common::ri();
    for k in 0..a.ib_grid().len() {
        for s in [0.0, 0.1, 0.3, 0.6] {
            assert_eq!(a.rate_at(k, 0.0, s), 0.0);
        }
    }
}

#[test]
fn higher_bias_lowers_threshold_and_raises_saturation() {
    let a = common::ri();
    let th = extract_thresholds(&a);
    let (lo, hi) = (th.at(1.71).unwrap().0, th.at(1.95).unwrap().0);
    assert!(hi < lo, "{hi} vs {lo}");
    let sat = extract_saturations(&a);
    assert!(sat.at(1.95, 0.5).unwrap() > sat.at(1.71, 0.5).unwrap());
}

#[test]
fn rtti_is_not_symmetric_in_flux() {
    let a = common::rtti();
    let th = extract_thresholds(&a);
    let (plus, minus) = th.at(1.95).unwrap();
    assert!(plus > 0.0 && minus < 0.0);
    assert!((plus + minus).abs() > 0.01, "thresholds {plus} {minus}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn lookup_is_pure_and_hint_independent(phi in -0.6f64..0.6, s in 0.0f64..1.0, hint in 0usize..10_000) {
        let a = common::ri();
        let first = a.lookup(phi, s, 1.71).unwrap();
        let again = a.lookup(phi, s, 1.71).unwrap();
        prop_assert_eq!(first.to_bits(), again.to_bits());
        let mut h = hint;
        prop_assert_eq!(a.rate_from(0, phi, s, &mut h).to_bits(), first.to_bits());
    }

    #[test]
    fn rates_are_finite_and_non_negative(phi in -0.5f64..0.5, s in 0.0f64..2.0, k in 0usize..2) {
        let a = common::ri();
        let r = a.rate_at(k, phi, s);
        prop_assert!(r.is_finite() && r >= 0.0);
    }

    #[test]
    fn no_rate_beyond_last_breakpoint(j in 0usize..26, k in 0usize..2, extra in 1e-9f64..1.0) {
        let a = common::ri();
        let c = a.cell(k, j);
        let last = c.s.last().copied().unwrap_or(0.0);
        prop_assert_eq!(c.rate(last + extra), 0.0);
        prop_assert!(c.s_max() <= last);
    }

    #[test]
    fn rate_falls_as_signal_grows(j in 0usize..26, s1 in 0.0f64..0.9, ds in 0.0f64..0.3) {
        let a = common::ri();
        let c = a.cell(0, j);
        prop_assert!(c.rate(s1 + ds) <= c.rate(s1) + 1e-12);
    }
}
