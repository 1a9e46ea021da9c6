use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cnpdg_cli::config::{ExperimentKind, RunConfig};
use cnpdg_cli::solvecheck::pc_name;
use cnpdg_cli::{mms, reactor, solvecheck, CliError};

#[derive(Parser)]
#[command(name = "cnpdg", version, about = "DG solver for electroneutral multi-ion transport")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Manufactured-solution convergence study
    Mms(RunArgs),
    /// Parallel-plate reactor with Butler–Volmer electrodes
    Reactor(RunArgs),
    /// Compare multigrid and Schwarz preconditioners on the first Newton step
    Solvecheck(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration
    #[arg(long)]
    config: PathBuf,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    /// Worker threads (0: all cores)
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Fix subdomain counts that otherwise follow the thread count
    #[arg(long)]
    deterministic: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (kind, args) = match cli.command {
        Command::Mms(a) => (ExperimentKind::Mms, a),
        Command::Reactor(a) => (ExperimentKind::Reactor, a),
        Command::Solvecheck(a) => (ExperimentKind::Solvecheck, a),
    };
    let mut cfg = RunConfig::load(&args.config)?;
    if cfg.kind != kind {
        return Err(CliError::Config(format!(
            "{} declares kind = {:?}, not {kind:?}",
            args.config.display(),
            cfg.kind
        )));
    }
    if args.deterministic {
        cfg.solver.make_deterministic();
    }
    set_threads(args.threads)?;
    let out = &args.out;
    match kind {
        ExperimentKind::Mms => {
            let r = mms::run_mms(&cfg, out)?;
            for row in &r.rows {
                let errs: Vec<String> = row.errors.iter().map(|e| format!("{e:.3e}")).collect();
                let rates: Vec<String> = row.rates.iter().map(|r| r.map_or("-".into(), |v| format!("{v:.2}"))).collect();
                println!(
                    "level {} ({} elements): errors [{}] rates [{}]",
                    row.level,
                    row.elements,
                    errs.join(", "),
                    rates.join(", ")
                );
            }
        }
        ExperimentKind::Reactor => {
            let r = reactor::run_reactor(&cfg, out)?;
            print!("{}", r.report.summary());
            println!("anode current   {:+.6e} A", r.anode_current);
            println!("cathode current {:+.6e} A", r.cathode_current);
            println!("current balance {:.3e}", r.current_balance);
        }
        ExperimentKind::Solvecheck => {
            let r = solvecheck::run_solvecheck(&cfg, out)?;
            for row in &r.rows {
                println!(
                    "{:>7} elements  {} {:>3}: outer {:>3}{}  inner mean {:?}  {:.2} s",
                    row.elements,
                    pc_name(row.concentration_pc),
                    row.asm_subdomains,
                    row.outer_iterations,
                    if row.outer_converged { "" } else { " (not converged)" },
                    row.inner_mean.iter().map(|m| (m * 10.0).round() / 10.0).collect::<Vec<_>>(),
                    row.wall_time
                );
            }
        }
    }
    Ok(())
}

#[cfg(feature = "parallel")]
fn set_threads(n: usize) -> Result<(), CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(e.to_string()))
}

#[cfg(not(feature = "parallel"))]
fn set_threads(n: usize) -> Result<(), CliError> {
    if n > 1 {
        eprintln!("warning: built without the `parallel` feature; --threads {n} ignored");
    }
    Ok(())
}
