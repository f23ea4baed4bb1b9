use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use focusim::{parse_config, run, CliError, Command, Overrides, RayonExecutor};

#[derive(Parser)]
#[command(
    name = "focusim",
    version,
    about = "Hydrodynamic focusing and impedance cytometry simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve the steady flow field and dump it per fluid cell.
    Flow(Common),
    /// Trace a cell population and report focusing metrics.
    Trace(Common),
    /// Run the configured one-axis parameter sweep.
    Sweep(Common),
    /// Impedance spectra of each configured species.
    Impedance(Common),
    /// Classify a sampled population as CTC or WBC.
    Classify(Common),
    /// Fixture trend checks, the configured sweep and figure data.
    Report(Common),
}

#[derive(Args)]
struct Common {
    /// Run configuration (JSON).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output directory [default: output_dir from the config, else ./out].
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Master seed, overriding the tracer and sweep seeds.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Grid spacing for the flow and impedance solvers.
    #[arg(long, value_name = "H_UM")]
    resolution: Option<f64>,
    /// Worker threads [default: one per core].
    #[arg(long, value_name = "K")]
    workers: Option<usize>,
}

fn execute(cmd: Command, args: &Common) -> Result<Vec<PathBuf>, CliError> {
    let cfg = parse_config(&args.config)?.resolve(Overrides {
        seed: args.seed,
        resolution_um: args.resolution,
    })?;
    let exec = RayonExecutor::new(args.workers)?;
    let dir = args
        .out
        .clone()
        .or_else(|| cfg.config.output_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    run(cmd, &cfg, &exec)?.commit(&dir)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cmd, args) = match &cli.command {
        Cmd::Flow(a) => (Command::Flow, a),
        Cmd::Trace(a) => (Command::Trace, a),
        Cmd::Sweep(a) => (Command::Sweep, a),
        Cmd::Impedance(a) => (Command::Impedance, a),
        Cmd::Classify(a) => (Command::Classify, a),
        Cmd::Report(a) => (Command::Report, a),
    };
    match execute(cmd, args) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("focusim {}: {e}", cmd.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
