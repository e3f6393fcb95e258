use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rydtomo::pipeline::{self, ExperimentConfig, Provenance};
use rydtomo::{Error, Result};

#[derive(Parser)]
#[command(name = "rydtomo", version, about = "RBM state reconstruction for Rydberg chains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides `output_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads, 0 = one per core.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate every checkpoint and write datasets and exact states.
    Generate,
    /// Apply the readout-error channel to the datasets.
    Corrupt {
        #[arg(long)]
        checkpoint: Option<usize>,
    },
    /// Fit the configured model variants.
    Train {
        #[arg(long)]
        checkpoint: Option<usize>,
    },
    /// Estimate observables and fidelities of the trained models.
    Evaluate {
        #[arg(long)]
        checkpoint: Option<usize>,
    },
    /// Run every stage in order.
    Sweep,
    /// Merge evaluations into report tables.
    Report,
    /// Print the effective configuration.
    Config,
}

fn load_config(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(o) = &c.out {
        cfg.output_dir = o.clone();
    }
    Ok(cfg)
}

fn print_summary(s: &pipeline::ReportSummary) {
    println!("checkpoint  delta_MHz  model        fidelity  fd_fidelity");
    for f in &s.fidelities {
        let delta = s
            .checkpoints
            .iter()
            .find(|c| c.index == f.checkpoint)
            .map_or(f64::NAN, |c| c.delta_mhz);
        let fd = f.fd_fidelity.map_or("-".to_string(), |x| format!("{x:.4}"));
        println!("{:>10}  {delta:>9.3}  {:<11}  {:>8.4}  {fd:>11}", f.checkpoint, f.variant, f.rbm_fidelity);
    }
}

fn run(cli: Cli) -> Result<()> {
    let c = &cli.common;
    rayon::ThreadPoolBuilder::new()
        .num_threads(c.threads)
        .build_global()
        .map_err(|e| Error::argument(format!("thread pool: {e}")))?;
    let cfg = load_config(c)?;
    let out = cfg.output_dir.clone();
    match cli.command {
        Command::Generate => {
            let m = pipeline::cmd_generate(&cfg, &out)?;
            log::info!("wrote {} checkpoints to {}", m.checkpoints.len(), out.display());
        }
        Command::Corrupt { checkpoint } => {
            let files = pipeline::cmd_corrupt(&cfg, &out, checkpoint)?;
            log::info!("wrote {} corrupted datasets", files.len());
        }
        Command::Train { checkpoint } => {
            let files = pipeline::cmd_train(&cfg, &out, checkpoint)?;
            log::info!("wrote {} models", files.len());
        }
        Command::Evaluate { checkpoint } => {
            let files = pipeline::cmd_evaluate(&cfg, &out, checkpoint)?;
            log::info!("wrote {} evaluations", files.len());
        }
        Command::Sweep => {
            let s = pipeline::cmd_sweep(&cfg, &out)?;
            if !c.quiet {
                print_summary(&s);
            }
        }
        Command::Report => {
            // Without --config the manifest's own provenance is trusted.
            let expected = c.config.is_some().then(|| Provenance {
                config_hash: cfg.hash(),
                master_seed: cfg.seed,
            });
            let s = pipeline::cmd_report(&out, expected.as_ref())?;
            if !c.quiet {
                print_summary(&s);
            }
        }
        Command::Config => print!("{}", cfg.to_toml()),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.common.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
