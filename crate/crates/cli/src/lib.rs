//! Command-line front end for `nskrt-core`: config parsing, subcommand
//! dispatch and deterministic CSV/JSON export.

pub mod check;
pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::config::{parse_config, ConfigError, Overrides};

#[derive(Parser, Debug)]
#[command(name = "nskrt", version, about = "Rayleigh-Taylor spectra of capillary stratified fluids")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (default: [output] dir, else the working directory).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for parallel sweeps.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Wavenumber override; the wavevector becomes (k, 0).
    #[arg(long, global = true)]
    pub k: Option<f64>,
    /// Mode index override.
    #[arg(long, global = true)]
    pub j: Option<usize>,
    /// Growth-rate override for `gamma-spectrum`.
    #[arg(long, global = true)]
    pub lambda: Option<f64>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// Critical capillary number and its wavenumber table.
    SigmaCritical,
    /// Top of the gamma spectrum at (k, lambda, sigma).
    GammaSpectrum,
    /// Dispersion curves and the unstable lattice set.
    Dispersion,
    /// Normal-mode profiles as JSON documents.
    Modes,
    /// Linear evolution of one wavenumber.
    Evolve,
    /// Mode-combination plan from `modes` documents.
    InstabilityPlan,
    /// Run the invariant suite.
    Check,
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

/// Runs the CLI; returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    match execute(cli) {
        Ok(rep) => {
            print!("{}", rep.stdout);
            for w in &rep.warnings {
                eprintln!("warning: {w}");
            }
            for f in &rep.files {
                eprintln!("wrote {}", f.display());
            }
            if rep.ok {
                EXIT_OK
            } else {
                EXIT_FAILURE
            }
        }
        Err(e) => {
            if let Some(c) = e.downcast_ref::<ConfigError>() {
                eprintln!("error: {c}");
                EXIT_CONFIG
            } else {
                eprintln!("error: {e:#}");
                EXIT_FAILURE
            }
        }
    }
}

fn execute(cli: &Cli) -> anyhow::Result<commands::Report> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| ConfigError::new("--config PATH is required"))?;
    let mut cfg = parse_config(path)?;
    cfg.apply(&Overrides {
        k: cli.k,
        j: cli.j,
        lambda: cli.lambda,
    })?;
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(ConfigError::new("--threads must be at least 1").into());
        }
        // Fails only if a pool already exists, in which case it is kept.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    match cli.command {
        Command::SigmaCritical => commands::sigma_critical_cmd(&cfg, &out),
        Command::GammaSpectrum => commands::gamma_spectrum_cmd(&cfg, &out),
        Command::Dispersion => commands::dispersion_cmd(&cfg, &out),
        Command::Modes => commands::modes_cmd(&cfg, &out),
        Command::Evolve => commands::evolve_cmd(&cfg, &out),
        Command::InstabilityPlan => commands::instability_plan_cmd(&cfg, &out),
        Command::Check => check::check_cmd(&cfg),
    }
}
