use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use soen_cli::commands::{self, Overrides};
use soen_cli::gates::Gate;
use soen_cli::transfer::TransferMode;
use soen_cli::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "soen", version, about = "Loop-neuron simulator: rate arrays, network runs, validation and demos")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Output directory [default: out, or the configured directory for gen-rates].
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Override the configured seed(s).
    #[arg(long)]
    seed: Option<u64>,
    /// Override the configured time step (s).
    #[arg(long)]
    dt: Option<f64>,
    /// Directory holding ri.soen and rtti.soen, replacing the configured paths.
    #[arg(long)]
    arrays_dir: Option<PathBuf>,
    /// Named preset: a sweep name for validate/bench, an emitter preset for
    /// demo-ninepixel.
    #[arg(long)]
    preset: Option<String>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            out: self.out.clone(),
            seed: self.seed,
            dt: self.dt,
            arrays_dir: self.arrays_dir.clone(),
            preset: self.preset.clone(),
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate rate arrays from the circuit model.
    GenRates {
        #[arg(long, short, default_value = "configs/arrays.toml")]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run a network and write spike and trace CSVs.
    Simulate {
        #[arg(long, short, default_value = "configs/simulate.toml")]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Compare the phenomenological model against the circuit model.
    Validate {
        #[arg(long, short, default_value = "configs/validate.toml")]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Time both backends serially.
    Bench {
        #[arg(long, short, default_value = "configs/bench.toml")]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Delay sweeps of the two-input logic gates.
    DemoGates {
        #[arg(long, short, default_value = "configs/gates.toml")]
        config: PathBuf,
        /// and, or, and-not or xor; all gates when omitted.
        #[arg(long)]
        gate: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Dendrite and neuron transfer functions.
    DemoTransfer {
        #[arg(long, short, default_value = "configs/transfer.toml")]
        config: PathBuf,
        /// burst-count, burst-rate or neuron-rate; all modes when omitted.
        #[arg(long)]
        mode: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Nine-pixel letter classifier over all 30 inputs.
    DemoNinepixel {
        #[arg(long, short, default_value = "configs/ninepixel.toml")]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run the transmitter and light-source chain for an emitter preset.
    Emit {
        #[command(flatten)]
        common: Common,
    },
}

fn run(cmd: Command) -> Result<PathBuf> {
    match cmd {
        Command::GenRates { config, common } => commands::cmd_gen_rates(&config, &common.overrides()),
        Command::Simulate { config, common } => commands::cmd_simulate(&config, &common.overrides()),
        Command::Validate { config, common } => commands::cmd_validate(&config, &common.overrides()),
        Command::Bench { config, common } => commands::cmd_bench(&config, &common.overrides()),
        Command::DemoGates { config, gate, common } => {
            let gate = gate.map(|g| g.parse::<Gate>()).transpose()?;
            commands::cmd_demo_gates(&config, gate, &common.overrides())
        }
        Command::DemoTransfer { config, mode, common } => {
            let mode = mode.map(|m| m.parse::<TransferMode>()).transpose()?;
            commands::cmd_demo_transfer(&config, mode, &common.overrides())
        }
        Command::DemoNinepixel { config, common } => commands::cmd_demo_ninepixel(&config, &common.overrides()),
        Command::Emit { common } => {
            let preset = common.preset.clone().unwrap_or_else(|| "qd-default".into());
            commands::cmd_emit(&preset, &common.overrides())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(manifest) => {
            println!("manifest: {}", manifest.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &CliError) -> u8 {
    e.exit_code() as u8
}
