use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mumimo_core::cli::{
    complexity_table, emit_complexity, emit_results, figure_plan, parse_config_with, secrecy_defaults,
    RunManifest, COMPLEXITY_SWEEP,
};
use mumimo_core::simulator::run_experiment_with_threads;
use mumimo_core::{Error, ExperimentConfig, Result};

#[derive(Parser)]
#[command(name = "mumimo", version, about = "Secure MU-MIMO precoding simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Config file with `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the seed from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Worker threads. Affects run time only.
    #[arg(long, default_value_t = default_threads())]
    threads: usize,
}

#[derive(Subcommand)]
enum Command {
    /// BER versus SNR for the configured algorithms.
    BerSweep(Common),
    /// Secrecy rate versus SNR (defaults: 0-40 dB, 500 draws per point).
    SecrecySweep(Common),
    /// FLOP counts for n_t in {4, 6, 8}.
    Complexity {
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// Desk-scale run of one of the figures 2 to 6.
    ReproduceFigure {
        figure: u32,
        #[command(flatten)]
        common: Common,
        /// Overrides the frames per SNR point.
        #[arg(long)]
        frames: Option<usize>,
    },
}

fn default_threads() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn load(common: &Common, base: ExperimentConfig) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|source| Error::Io {
                path: path.clone(),
                source,
            })?;
            parse_config_with(&text, base)?
        }
        None => base,
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn simulate(command: &str, cfg: &ExperimentConfig, threads: usize, out: &Path, stem: &str) -> Result<()> {
    let mut manifest = RunManifest::new(command, cfg, threads);
    let result = run_experiment_with_threads(cfg, threads)?;
    manifest.finish();
    for p in emit_results(&result, &mut manifest, out, stem)? {
        println!("{}", p.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::BerSweep(c) => simulate("ber-sweep", &load(&c, ExperimentConfig::default())?, c.threads, &c.out, "ber"),
        Command::SecrecySweep(c) => simulate("secrecy-sweep", &load(&c, secrecy_defaults())?, c.threads, &c.out, "secrecy"),
        Command::Complexity { out } => {
            let path = emit_complexity(&complexity_table(&COMPLEXITY_SWEEP)?, &out, "complexity")?;
            println!("{}", path.display());
            Ok(())
        }
        Command::ReproduceFigure { figure: 2, common, .. } => {
            let path = emit_complexity(&complexity_table(&COMPLEXITY_SWEEP)?, &common.out, "fig2_complexity")?;
            println!("{}", path.display());
            Ok(())
        }
        Command::ReproduceFigure { figure, common, frames } => {
            let seed = common.seed.unwrap_or(ExperimentConfig::default().seed);
            for (stem, mut cfg) in figure_plan(figure, seed)? {
                if let Some(f) = frames {
                    cfg.frames_per_point = f;
                }
                let cfg = load(&common, cfg)?;
                simulate(&format!("reproduce-figure {figure}"), &cfg, common.threads, &common.out, &stem)?;
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
