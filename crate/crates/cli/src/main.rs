use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use eflow_cli::config::{load_config, RunConfig, SolverKind};
use eflow_cli::run::{run, EXIT_ERROR};

#[derive(Parser)]
#[command(
    name = "eflow",
    version,
    about = "Delay-minimal power and energy-transfer allocation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load and check a config without solving.
    Validate { config: PathBuf },
    /// Run the solver named in the config.
    Run(RunArgs),
    /// Sweep the Pareto frontier of path delays, with and without energy links.
    Pareto(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    config: PathBuf,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Flow-split cells per source for the Pareto sweep.
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    parallel: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn load(path: &Path) -> Result<RunConfig, ExitCode> {
    load_config(path).map_err(|e| {
        eprintln!("error: {}: {e}", path.display());
        ExitCode::from(EXIT_ERROR as u8)
    })
}

fn execute(args: RunArgs, force_pareto: bool) -> Result<ExitCode, ExitCode> {
    let mut cfg = load(&args.config)?;
    if force_pareto {
        if cfg.description.supply.is_none() || cfg.harvest.slots() != 1 {
            eprintln!("error: the Pareto sweep needs `supply` and a single slot");
            return Err(ExitCode::from(EXIT_ERROR as u8));
        }
        cfg.solver = SolverKind::Pareto;
    }
    let o = &mut cfg.options;
    if args.tol.is_some() {
        o.tol = args.tol;
    }
    if args.max_iters.is_some() {
        o.max_iters = args.max_iters;
    }
    if let Some(g) = args.grid {
        o.grid = g;
    }
    if let Some(s) = args.seed {
        o.seed = s;
    }
    o.parallel |= args.parallel;
    match run(&cfg, &args.out) {
        Ok(report) => {
            print!("{}", report.summary);
            if let Some(d) = &report.diagnostics {
                eprint!("{d}");
                if !d.ends_with('\n') {
                    eprintln!();
                }
            }
            Ok(ExitCode::from(report.exit_code as u8))
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            Err(ExitCode::from(EXIT_ERROR as u8))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Validate { config } => load(&config).map(|cfg| {
            println!(
                "ok: {} nodes, {} data links, {} energy links, {} slot(s), solver {:?}",
                cfg.network.node_count(),
                cfg.network.data_links().len(),
                cfg.network.energy_links().len(),
                cfg.harvest.slots(),
                cfg.solver
            );
            ExitCode::SUCCESS
        }),
        Command::Run(args) => execute(args, false),
        Command::Pareto(args) => execute(args, true),
    };
    result.unwrap_or_else(|code| code)
}
