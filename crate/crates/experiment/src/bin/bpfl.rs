use std::path::PathBuf;
use std::process::ExitCode;

use bpfl_experiment::config::{presets, resolve, TransportKind};
use bpfl_experiment::runner::run_experiment;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bpfl", version, about = "Run federated learning experiments with proof-checked masked aggregation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment.
    Run {
        /// JSON config file, applied on top of the preset.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        preset: Option<String>,
        /// Output directory for metrics.jsonl, summary.csv and resolved_config.json.
        #[arg(long, default_value = "runs/latest")]
        out: PathBuf,
        #[arg(long)]
        transport: Option<TransportKind>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// List the built-in presets.
    Presets,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Presets => {
            for (name, value) in presets() {
                println!("{name}\t{value}");
            }
            ExitCode::SUCCESS
        }
        Command::Run {
            config,
            preset,
            out,
            transport,
            seed,
        } => {
            let mut env: Vec<(String, String)> = std::env::vars().collect();
            if let Some(t) = transport {
                let t = serde_json::to_string(&t).expect("transport serializes");
                env.push(("BPFL_TRANSPORT".into(), t));
            }
            if let Some(s) = seed {
                env.push(("BPFL_SEED".into(), s.to_string()));
            }
            let resolved = match resolve(preset.as_deref(), config.as_deref(), env) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            match run_experiment(&resolved, &out) {
                Ok(summary) => {
                    println!(
                        "{}: {} rounds, final accuracy {:.4}, results in {}",
                        summary.name,
                        summary.rounds.len(),
                        summary.final_accuracy,
                        out.display()
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(1)
                }
            }
        }
    }
}
