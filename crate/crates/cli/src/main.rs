use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use serde_json::json;

use young_taylor_cli::{config_base, resolve_out_dir, run, ExperimentConfig, OUT_ENV};

#[derive(Parser)]
#[command(
    name = "young-taylor",
    version,
    about = "Taylor expansions for Young differential equations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Worker threads (0 picks the rayon default).
        #[arg(long, default_value_t = 0)]
        threads: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse and check a config without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            threads,
            out,
        } => {
            young_taylor::exec::configure_threads(threads);
            let cfg = ExperimentConfig::load(&config)?;
            let base = config_base(&config);
            let env = std::env::var(OUT_ENV).ok();
            let dir = resolve_out_dir(out.as_deref(), env.as_deref(), &cfg, &base);
            let manifest = run(&cfg, &base, &dir)?;
            println!(
                "{}",
                serde_json::to_string(&json!({ "out": dir, "files": manifest.files }))?
            );
        }
        Command::Validate { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            cfg.validate(&config_base(&config))?;
            println!(
                "{}",
                serde_json::to_string(
                    &json!({ "valid": true, "experiment": cfg.experiment.name() })
                )?
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let chain: Vec<String> = e.chain().map(|c| c.to_string()).collect();
            eprintln!("{}", json!({ "error": chain.join(": "), "causes": chain }));
            ExitCode::FAILURE
        }
    }
}
