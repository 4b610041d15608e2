use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use vrjp_lab::experiments::{list_experiments, run, ExperimentConfig, Params};

/// Seeded numerical experiments on one-dimensional random Schrödinger
/// operators built from geometric Brownian motion and inverse Gaussian fields.
#[derive(Parser, Debug)]
#[command(name = "vrjp-lab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one experiment and write its CSV tables and manifest.
    Run {
        /// Registry name, see `list`.
        #[arg(long)]
        name: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Experiment parameter as key=value; repeatable.
        #[arg(long = "param", value_name = "KEY=VALUE")]
        params: Vec<String>,
        /// Output directory.
        #[arg(long, env = "VRJP_LAB_OUT", default_value = "vrjp-lab-out")]
        out: PathBuf,
    },
    /// List registered experiments.
    List,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match cli.command {
        Command::List => {
            for line in list_experiments() {
                println!("{line}");
            }
            ExitCode::SUCCESS
        }
        Command::Run { name, seed, params, out } => {
            let config = match Params::parse(&params) {
                Ok(params) => ExperimentConfig {
                    name,
                    seed,
                    params,
                    output_dir: out,
                },
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            match run(&config) {
                Ok(manifest) => {
                    for r in &manifest.verdicts {
                        println!("{:<4} {}  statistic={:.6e} critical={:.6e}", r.verdict, r.label, r.statistic, r.critical);
                    }
                    println!("wrote {} files to {}", manifest.result_files.len() + 1, config.output_dir.display());
                    if manifest.passed {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(1)
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
            }
        }
    }
}
