use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use roadflow_core::pipeline::{
    cmd_assign, cmd_link_demand, cmd_microsim, cmd_network, cmd_report, load_config, AssignArgs,
    LinkDemandArgs, MicrosimArgs, NetworkArgs, PipelineError, ReportArgs,
};

#[derive(Parser)]
#[command(
    name = "roadflow",
    version,
    about = "Road network preparation, equilibrium assignment, and microsimulation"
)]
struct Cli {
    /// TOML file with model parameters; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every randomized stage (required by `microsim`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Prepare a routable network from raw node and edge tables.
    Network(NetworkArgs),
    /// Convert zone-to-zone demand into node-to-node demand.
    LinkDemand(LinkDemandArgs),
    /// Solve static user equilibrium over the prepared network.
    Assign(AssignArgs),
    /// Run the per-vehicle simulation with iterated rerouting.
    Microsim(MicrosimArgs),
    /// Summarize per-vehicle results into histogram tables.
    Report(ReportArgs),
}

fn run(cli: &Cli) -> Result<(), PipelineError> {
    let file = load_config(cli.config.as_deref())?;

    if let Some(n) = cli.workers.or(file.workers) {
        if n == 0 {
            return Err(PipelineError::Validation("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| PipelineError::Runtime(e.to_string()))?;
    }
    let seed = cli.seed.or(file.seed);

    match &cli.cmd {
        Cmd::Network(a) => cmd_network(a, &file),
        Cmd::LinkDemand(a) => cmd_link_demand(a, &file),
        Cmd::Assign(a) => cmd_assign(a, &file),
        Cmd::Microsim(a) => cmd_microsim(a, &file, seed),
        Cmd::Report(a) => cmd_report(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
