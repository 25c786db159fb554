use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use wanpf::commands::{self, DEFAULT_SAMPLE_COUNT};
use wanpf::config::TrainConfig;
use wanpf::Error;

/// Weak adversarial neural pushforward solver for Fokker-Planck equations on manifolds.
#[derive(Debug, Parser)]
#[command(name = "wanpf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a generator; writes the log, checkpoints and a run manifest.
    Train {
        /// TOML (or JSON) configuration; all keys default to the S^2 double-well run.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the configured seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Draw samples from a trained checkpoint into a CSV file.
    Sample {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = DEFAULT_SAMPLE_COUNT)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize a sample CSV on S^2 against the Gibbs law.
    Diagnose {
        samples: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Take the physics from this checkpoint instead of a config file.
        #[arg(long, conflicts_with = "config")]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare generator, exact Gibbs and long-run SDE samples.
    CompareOracle {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Physics override; defaults to the checkpoint's configuration.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_SAMPLE_COUNT)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERIC: u8 = 3;
const EXIT_IO: u8 = 4;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => EXIT_CONFIG,
        Error::Training { .. } | Error::NonFinite { .. } | Error::Degenerate(_) => EXIT_NUMERIC,
        Error::Io(_) | Error::Read { .. } | Error::Format { .. } | Error::Json(_) => EXIT_IO,
        Error::Unsupported(_) | Error::Contract(_) => EXIT_FAILURE,
    }
}

/// `WANPF_THREADS` caps internal parallelism; evaluation is currently
/// sequential, so any valid value behaves like 1.
fn check_threads() -> wanpf::Result<()> {
    match std::env::var("WANPF_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(()),
            _ => Err(Error::Config(format!("WANPF_THREADS must be a positive integer, got {v:?}"))),
        },
        Err(_) => Ok(()),
    }
}

fn run(cli: Cli) -> wanpf::Result<()> {
    check_threads()?;
    match cli.command {
        Command::Train { config, out, seed } => {
            let cfg = commands::load_config(config.as_deref(), seed)?;
            let m = commands::cmd_train(cfg, &out)?;
            println!("trained {} steps, config {}", m.metrics.steps, &m.config_hash[..12]);
            if let Some(l) = m.metrics.trailing_median_loss {
                println!("trailing median loss {l:.6e}");
            }
            if let Some(d) = &m.metrics.diagnostics {
                print_summary("generator", d);
            }
            println!("wrote {}", out.join(commands::MANIFEST_FILE).display());
        }
        Command::Sample { checkpoint, count, seed, out } => {
            commands::cmd_sample(&checkpoint, count, seed, &out)?;
            println!("wrote {count} samples to {}", out.display());
        }
        Command::Diagnose { samples, config, checkpoint, out } => {
            let cfg: TrainConfig = match checkpoint {
                Some(ck) => wanpf::io::read_checkpoint(&ck)?.config,
                None => commands::load_config(config.as_deref(), None)?,
            };
            let s = commands::cmd_diagnose(&samples, &cfg, &out)?;
            print_summary("samples", &s);
            println!("wrote {}", out.join(commands::DIAGNOSTICS_FILE).display());
        }
        Command::CompareOracle { checkpoint, config, count, seed, out } => {
            let cfg = config.as_deref().map(TrainConfig::load).transpose()?;
            let c = commands::cmd_compare_oracle(&checkpoint, cfg.as_ref(), count, seed, &out)?;
            for r in &c.rows {
                print_summary(&r.source, &r.summary);
            }
            println!("gibbs rejection acceptance rate {:.4}", c.gibbs_acceptance_rate);
            println!("wrote {}", out.join(commands::COMPARISON_FILE).display());
        }
    }
    Ok(())
}

fn print_summary(label: &str, s: &wanpf::diagnostics::DiagnosticsSummary) {
    println!(
        "{label:<16} n={:<7} hemisphere(x>0)={:.4} polar(|z|>0.8)={:.4} tv={:.4}",
        s.sample_count, s.hemisphere_mass_pos_x, s.polar_mass_absz_gt_0_8, s.tv_distance_to_gibbs
    );
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
