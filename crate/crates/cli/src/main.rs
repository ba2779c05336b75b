//! Batch driver for the torus advection-diffusion laboratory.

mod config;
mod runner;

use clap::Parser;
use config::{ExperimentKind, RunConfig};

#[derive(Parser, Debug)]
#[command(
    name = "eddylab",
    about = "Multi-scale shear hierarchies, spectral advection-diffusion solves, \
             and homogenization experiments on the periodic 2-torus",
    after_help = "Experiments: taylor, cell, cascade-params, field-snapshot, simulate, \
                  sweep, twoscale, sweeping, rho-chain, selection"
)]
struct Cli {
    /// Experiment to run.
    experiment: String,
    /// TOML configuration file (overrides the preset).
    #[arg(long)]
    config: Option<String>,
    /// Named preset: desk-m1, desk-m2, or desk-m3.
    #[arg(long, default_value = "desk-m1")]
    preset: String,
    /// Output directory.
    #[arg(long)]
    out: Option<String>,
    /// Grid size override (power of two).
    #[arg(long)]
    grid: Option<usize>,
    /// Worker threads (defaults to the available parallelism).
    #[arg(long)]
    threads: Option<usize>,
}

fn main() {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .expect("thread pool");
    }
    let Some(kind) = ExperimentKind::parse(&cli.experiment) else {
        eprintln!("unknown experiment {:?}", cli.experiment);
        std::process::exit(2);
    };
    let mut cfg: RunConfig = if let Some(path) = &cli.config {
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) => {
                eprintln!("read {path}: {e}");
                std::process::exit(2);
            }
        };
        match RunConfig::parse(&text) {
            Ok(mut c) => {
                c.experiment = kind;
                c
            }
            Err(e) => {
                eprintln!("{e}");
                std::process::exit(2);
            }
        }
    } else {
        match config::preset(&cli.preset, kind) {
            Some(c) => c,
            None => {
                eprintln!("unknown preset {:?}", cli.preset);
                std::process::exit(2);
            }
        }
    };
    if let Some(out) = cli.out {
        cfg.output.dir = out;
    }
    if let Some(grid) = cli.grid {
        cfg.grid_size = grid;
    }
    if let Err(e) = cfg.validate() {
        eprintln!("{e}");
        std::process::exit(2);
    }
    match runner::run(&cfg) {
        Ok(outcome) => {
            print!("{}", outcome.summary);
            println!("artifacts in {}", outcome.dir.display());
            std::process::exit(if outcome.gates_passed { 0 } else { 1 });
        }
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(1);
        }
    }
}
