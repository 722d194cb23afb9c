mod common;

use proptest::prelude::*;
use soen_core::circuit::TWO_PI;
use soen_core::drive::{Drive, FluxDrive};
use soen_core::validate::{chi_squared, compare, generate_drive, sweep, CompareParams, Comparison, DriveSpec, SquareTrain, Sweep};

fn train(pulses: usize, seed: u64) -> Drive {
    generate_drive(&DriveSpec::SquareTrain(SquareTrain::new(pulses, seed)), Some(0.2)).unwrap()
}

#[test]
fn zero_constant_drive_is_zero_everywhere() {
    let d = generate_drive(&DriveSpec::Constant { flux: 0.0 }, None).unwrap();
    for k in 0..100 {
        assert_eq!(d.flux(k as f64 * 1e-9), 0.0);
    }
}

#[test]
fn ramp_is_linear_between_its_endpoints() {
    let d = generate_drive(&DriveSpec::LinearRamp { t_start: 0.0, t_end: 100e-9, from: 0.0, to: 0.5 }, None).unwrap();
    for k in 0..=100 {
        let t = k as f64 * 1e-9;
        assert!((d.flux(t) - 0.5 * t / 100e-9).abs() < 1e-12);
    }
}

#[test]
fn unordered_train_ranges_are_rejected() {
    let mut s = SquareTrain::new(5, 1);
    s.duration = (40e-9, 5e-9);
    assert!(generate_drive(&DriveSpec::SquareTrain(s), Some(0.2)).is_err());
    let mut s = SquareTrain::new(5, 1);
    s.amplitude_max = 0.7;
    assert!(generate_drive(&DriveSpec::SquareTrain(s), Some(0.2)).is_err());
}

#[test]
fn single_compare_equals_sweep_entry() {
    let table = common::ri();
    let params = CompareParams { beta: TWO_PI * 1000.0, tau_di: Some(250e-9), ib: 1.71 };
    let mut s = Sweep::new(vec![params], vec![1e-10], vec![3], 5);
    s.tail = 10e-9;
    let from_sweep = sweep(&s, &table, false).unwrap();
    let single = compare(&s.comparisons()[0], &table).unwrap();
    assert_eq!(from_sweep.len(), 1);
    assert_eq!(from_sweep[0].chi_squared, single.chi_squared);
    assert_eq!(from_sweep[0].chi_squared_drive, single.chi_squared_drive);
    assert_eq!(single.seed, Some(5));
}

#[test]
fn backends_see_the_same_drive() {
    let table = common::ri();
    let c = Comparison::new(
        CompareParams { beta: TWO_PI * 1000.0, tau_di: Some(250e-9), ib: 1.71 },
        DriveSpec::SquareTrain(SquareTrain::new(4, 9)),
        1e-10,
    );
    let r = compare(&c, &table).unwrap();
    assert!(r.chi_squared_drive < 1e-4, "{}", r.chi_squared_drive);
    assert!(r.chi_squared >= 0.0 && r.t_ode > 0.0 && r.t_soen > 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn chi_squared_ignores_common_scale(scale in 1e-3f64..1e3, eps in -0.1f64..0.1, n in 20usize..200) {
        let t: Vec<f64> = (0..n).map(|k| k as f64 * 0.5).collect();
        let ode: Vec<f64> = t.iter().map(|x| 1.0 + 0.5 * (0.3 * x).sin()).collect();
        let soen: Vec<f64> = ode.iter().enumerate().map(|(k, v)| v * (1.0 + eps * (k as f64 * 0.7).cos())).collect();
        let base = chi_squared(&t, &soen, &t, &ode).unwrap();
        let s2: Vec<f64> = soen.iter().map(|v| v * scale).collect();
        let o2: Vec<f64> = ode.iter().map(|v| v * scale).collect();
        let scaled = chi_squared(&t, &s2, &t, &o2).unwrap();
        prop_assert!((base - scaled).abs() <= 1e-9 * base.max(1e-300));
    }

    #[test]
    fn proportional_error_gives_epsilon_squared(eps in -0.05f64..0.05, n in 10usize..300) {
        let t: Vec<f64> = (0..n).map(|k| k as f64).collect();
        let ode: Vec<f64> = t.iter().map(|x| 2.0 + x.cos()).collect();
        let soen: Vec<f64> = ode.iter().map(|v| v * (1.0 + eps)).collect();
        let chi = chi_squared(&t, &soen, &t, &ode).unwrap();
        prop_assert!((chi - eps * eps).abs() <= 1e-12 + 1e-9 * eps * eps);
    }

    #[test]
    fn seeded_trains_regenerate_identically(seed in any::<u64>(), pulses in 1usize..30) {
        let (a, b) = (train(pulses, seed), train(pulses, seed));
        for k in 0..2000 {
            let t = k as f64 * 1e-9;
            prop_assert_eq!(a.flux(t).to_bits(), b.flux(t).to_bits());
        }
    }

    #[test]
    fn train_amplitudes_stay_between_threshold_and_half(seed in any::<u64>(), pulses in 1usize..30) {
        let d = train(pulses, seed);
        let Drive::PulseTrain { pulses: ps } = &d else { panic!("expected a pulse train") };
        prop_assert_eq!(ps.len(), pulses);
        for (p, q) in ps.iter().zip(ps.iter().skip(1)) {
            prop_assert!(q.start >= p.end());
        }
        for p in ps {
            prop_assert!(p.amplitude >= 0.2 && p.amplitude <= 0.5);
        }
    }
}
