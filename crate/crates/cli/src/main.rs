use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use atl_cli::server::{self, ServeOptions};

#[derive(Parser)]
#[command(name = "atl", version, about = "Tape laying cell twin: run jobs, plan trajectories, serve the operator API")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a job as fast as possible and print the summary as JSON.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Trace CSV; events go beside it as .events.jsonl. Overrides the config.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// No progress output, only the summary.
        #[arg(long)]
        headless: bool,
        /// JSON list of scheduled inputs. Default: start at t = 0.
        #[arg(long)]
        commands: Option<PathBuf>,
    },
    /// Write the mold trajectories of all tracks as CSV.
    Plan {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run paced to the wall clock behind the HTTP/WS API.
    Serve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Real-time factor.
        #[arg(long, default_value_t = 1.0)]
        rate: f64,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Load and check a config, including planning every track.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ATL_LOG_LEVEL", "warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.cmd) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cmd: Cmd) -> anyhow::Result<ExitCode> {
    match cmd {
        Cmd::Validate { config } => {
            println!("{}", atl_cli::validate(&config)?);
        }
        Cmd::Plan { config, out } => {
            let n = atl_cli::plan(&config, &out)?;
            eprintln!("wrote {n} samples to {}", out.display());
        }
        Cmd::Run {
            config,
            trace,
            headless,
            commands,
        } => {
            let cfg = atl_cli::load(&config)?;
            let mut source = atl_cli::commands_from(commands.as_deref())?;
            let trace = trace.or_else(|| cfg.trace.clone());
            let summary = atl_cli::run(cfg, &mut source, trace.as_deref(), headless)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
            if !atl_cli::success(summary.outcome) {
                eprintln!("error: run ended with {:?} after {:.2} s", summary.outcome, summary.sim_time);
                return Ok(ExitCode::FAILURE);
            }
        }
        Cmd::Serve {
            config,
            port,
            host,
            rate,
            trace,
        } => {
            let cfg = atl_cli::load(&config)?;
            let rt = tokio::runtime::Runtime::new().context("starting the async runtime")?;
            rt.block_on(server::serve(cfg, ServeOptions { rate, trace }, &format!("{host}:{port}")))?;
        }
    }
    Ok(ExitCode::SUCCESS)
}
