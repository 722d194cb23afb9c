use std::path::{Path, PathBuf};

use proptest::prelude::*;
use soen_cli::commands::{GenRatesConfig, SimulateConfig, SweepFile};
use soen_cli::config::{load_toml, parse_toml, Grid};
use soen_cli::gates::GatesFile;
use soen_cli::ninepixel::{generate_nine_pixel_inputs, LetterSet, NinePixelConfig};
use soen_cli::transfer::TransferFile;
use soen_cli::CliError;

fn shipped(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

#[test]
fn every_shipped_config_parses() {
    load_toml::<GenRatesConfig>(&shipped("arrays.toml")).unwrap();
    load_toml::<SimulateConfig>(&shipped("simulate.toml")).unwrap();
    load_toml::<GatesFile>(&shipped("gates.toml")).unwrap();
    load_toml::<TransferFile>(&shipped("transfer.toml")).unwrap();
    load_toml::<NinePixelConfig>(&shipped("ninepixel.toml")).unwrap();
    for f in ["validate.toml", "bench.toml"] {
        let file: SweepFile = load_toml(&shipped(f)).unwrap();
        for s in &file.sweeps {
            s.sweep().unwrap();
        }
    }
}

#[test]
fn unknown_field_is_reported_with_its_path() {
    let text = std::fs::read_to_string(shipped("simulate.toml")).unwrap().replacen("tau_di = 250e-9", "tau_id = 250e-9", 1);
    let err = parse_toml::<SimulateConfig>(&text, Path::new("bad.toml")).unwrap_err();
    let CliError::Schema { field, message, .. } = &err else { panic!("expected a schema error, got {err}") };
    assert!(field.starts_with("network.dendrites[0]"), "{field}");
    assert!(message.contains("tau_id"), "{message}");
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn wrong_type_names_the_field() {
    let err = parse_toml::<SweepFile>("[[sweeps]]\nname = 3\n", Path::new("v.toml")).unwrap_err();
    assert!(err.to_string().contains("sweeps[0].name"), "{err}");
}

#[test]
fn malformed_toml_is_a_parse_error() {
    let err = parse_toml::<GenRatesConfig>("[ri\nib = [1.7]", Path::new("a.toml")).unwrap_err();
    assert!(matches!(err, CliError::Parse { .. }), "{err}");
}

#[test]
fn missing_file_is_reported() {
    let err = load_toml::<GenRatesConfig>(Path::new("/nonexistent/arrays.toml")).unwrap_err();
    assert!(err.to_string().contains("/nonexistent/arrays.toml"));
}

#[test]
fn nine_pixel_inputs_are_letters_with_at_most_one_flip() {
    let letters = LetterSet::default();
    let inputs = generate_nine_pixel_inputs(&letters).unwrap();
    assert_eq!(inputs.len(), 30);
    for input in &inputs {
        let base = letters.pattern(input.label).unwrap();
        let flips = base.iter().zip(input.pixels.iter()).filter(|(a, b)| a != b).count();
        assert!(flips <= 1, "{}", input.render());
    }
    for (k, a) in inputs.iter().enumerate() {
        for b in &inputs[k + 1..] {
            assert_ne!(a.pixels, b.pixels, "duplicate image\n{}", a.render());
        }
    }
}

proptest! {
    #[test]
    fn grid_spans_its_range(min in -1.0f64..1.0, span in 0.0f64..2.0, step in 1e-3f64..0.5) {
        let g = Grid { min, max: min + span, step };
        let v = g.values();
        prop_assert_eq!(v[0], min);
        prop_assert!(v.windows(2).all(|w| w[1] > w[0]));
        let last = *v.last().unwrap();
        prop_assert!(last <= g.max + 1e-9 * step.max(1.0));
        prop_assert!(g.max - last < step * (1.0 + 1e-6));
    }
}
