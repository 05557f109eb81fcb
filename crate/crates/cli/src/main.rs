use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use btai_core::experiment::{emit_csv, load_config, preset, report::write_csv, run_experiment, ExperimentConfig, PRESETS};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "btai-lab", version, about = "Run branching-time active inference experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every batch of an experiment and write one CSV row per batch.
    Run {
        /// `KEY = value` config file.
        #[arg(long, conflicts_with = "preset")]
        config: Option<PathBuf>,
        /// Built-in preset instead of a config file.
        #[arg(long)]
        preset: Option<String>,
        /// CSV output path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides SEED.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides NB_SIMULATIONS.
        #[arg(long)]
        simulations: Option<usize>,
        /// Directory holding the maze and lake layout files.
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
    /// List the built-in presets.
    Presets,
    /// Check a config file without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn resolve(config: Option<PathBuf>, preset_name: Option<String>) -> Result<ExperimentConfig> {
    match (config, preset_name) {
        (Some(path), _) => load_config(&path).with_context(|| format!("loading {}", path.display())),
        (None, Some(name)) => match preset(&name) {
            Some(p) => Ok(p.config()),
            None => bail!("unknown preset `{name}` (see `btai-lab presets`)"),
        },
        (None, None) => bail!("give --config or --preset"),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            preset,
            out,
            seed,
            simulations,
            data_dir,
        } => {
            let mut cfg = resolve(config, preset)?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            if let Some(n) = simulations {
                cfg.nb_simulations = n;
            }
            cfg.validate()?;
            let summaries = run_experiment(&cfg, data_dir.as_deref())?;
            match out {
                Some(path) => {
                    emit_csv(&summaries, &path)?;
                    for s in &summaries {
                        eprintln!(
                            "{} {} {:>5}: success {:.2}, failure {:.2}{}, {:.3}s ± {:.3}s",
                            s.env,
                            s.agent,
                            s.planning_iterations,
                            s.p_success,
                            s.p_failure,
                            s.p_solved.map(|p| format!(", solved {p:.3}")).unwrap_or_default(),
                            s.mean_time_s,
                            s.std_time_s
                        );
                    }
                }
                None => write_csv(&summaries, std::io::stdout().lock())?,
            }
        }
        Command::Presets => {
            for p in PRESETS {
                println!("{:<20} {}", p.name, p.description);
            }
        }
        Command::Validate { config } => {
            let cfg = load_config(&config).with_context(|| format!("loading {}", config.display()))?;
            println!(
                "{}: env {}, agent {}, {} simulations, batches {:?}",
                config.display(),
                cfg.env,
                cfg.agent,
                cfg.nb_simulations,
                cfg.sweep()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
