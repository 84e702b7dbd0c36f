use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use kemosim::cli::{self, exit, Axis};
use kemosim::config::{parse_config, ExperimentConfig};
use kemosim::Error;

#[derive(Parser)]
#[command(name = "kemosim", version, about = "Chemotaxis model laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(short, long)]
    config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Seed for the initial-data noise; overrides `initial.seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Check the structural conditions on the motility pair.
    Audit(Common),
    /// Integrate one configuration and record the monitors.
    Run(Common),
    /// Run a parameter grid in parallel.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// `name=start:stop:count`; repeat for a cross product.
        #[arg(long = "axis")]
        axes: Vec<String>,
        #[arg(long, default_value_t = default_threads())]
        threads: usize,
    },
}

fn default_threads() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

fn load(common: &Common) -> Result<(ExperimentConfig, PathBuf), Error> {
    let mut cfg = parse_config(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.initial.seed = seed;
    }
    let out = common
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    Ok((cfg, out))
}

fn execute(cmd: Command) -> Result<i32, Error> {
    match cmd {
        Command::Audit(common) => {
            let (cfg, out) = load(&common)?;
            let res = cli::cmd_audit(&cfg, &out)?;
            let r = &res.document.report;
            println!(
                "h1={} h2={} inf_F={} h3={} margin={}",
                r.h1_ok, r.h2_ok, r.inf_f, r.h3_ok, r.h3_margin
            );
            Ok(res.exit_code)
        }
        Command::Run(common) => {
            let (cfg, out) = load(&common)?;
            let s = cli::cmd_run(&cfg, &out)?;
            println!(
                "status={} steps={} t={} sup_u={} p={} q={}",
                s.status.as_str(),
                s.steps_taken,
                s.final_t,
                s.final_sup_u,
                s.p,
                s.q
            );
            Ok(s.exit_code)
        }
        Command::Sweep {
            common,
            axes,
            threads,
        } => {
            let (cfg, out) = load(&common)?;
            let axes = axes
                .iter()
                .map(|a| a.parse::<Axis>())
                .collect::<Result<Vec<_>, _>>()?;
            let res = cli::cmd_sweep(&cfg, &axes, &out, threads)?;
            println!("{} points -> {}", res.rows.len(), res.table.display());
            Ok(res.exit_code)
        }
    }
}

fn main() -> ExitCode {
    let args = Cli::parse();
    match execute(args.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            let code = cli::exit_code_for(&e);
            let err = anyhow::Error::new(e).context(match code {
                exit::CONFIG => "invalid configuration",
                exit::IO => "i/o failure",
                _ => "model evaluation failed",
            });
            eprintln!("error: {err:#}");
            ExitCode::from(code as u8)
        }
    }
}
