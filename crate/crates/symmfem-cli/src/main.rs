use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use symmfem::acceptance::{run_all, AcceptanceOptions};
use symmfem_cli::config::RunConfig;
use symmfem_cli::{print_reports, run};

#[derive(Parser)]
#[command(name = "symmfem", version, about = "Symmetrized two-scale finite element benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a convergence/timing experiment and write CSV files + plot script
    Run(RunArgs),
    /// Run the acceptance criteria and print one pass/fail line each
    Verify(VerifyArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Key-value config file; command-line flags override its entries
    #[arg(long)]
    config: Option<PathBuf>,
    /// Problem key: ex1, ex2, ex3, poisson2d
    #[arg(long)]
    problem: Option<String>,
    /// Method: fem, two-scale, sym-two-scale
    #[arg(long)]
    method: Option<String>,
    /// Comma-separated n:N pairs (fine:coarse), e.g. 16:4,36:6
    #[arg(long)]
    grids: Option<String>,
    /// Solver relative tolerance
    #[arg(long)]
    tol: Option<String>,
    /// Rayon thread-pool size (default: one per core)
    #[arg(long)]
    threads: Option<String>,
    /// Output directory
    #[arg(long)]
    out: Option<String>,
    /// Gauss points per direction for assembly
    #[arg(long = "quad-assembly")]
    quad_assembly: Option<String>,
    /// Gauss points per direction for error norms
    #[arg(long = "quad-error")]
    quad_error: Option<String>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Run the eigenvalue criterion over its full grid sequence
    #[arg(long)]
    full: bool,
    /// Rayon thread-pool size
    #[arg(long)]
    threads: Option<usize>,
}

fn build_config(args: &RunArgs) -> Result<RunConfig, String> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let pairs = symmfem_cli::config::parse_config_text(&text).map_err(|e| e.to_string())?;
        for (k, v) in &pairs {
            cfg.apply(k, v).map_err(|e| e.to_string())?;
        }
    }
    let flags: [(&str, &Option<String>); 8] = [
        ("problem", &args.problem),
        ("method", &args.method),
        ("grids", &args.grids),
        ("tol", &args.tol),
        ("threads", &args.threads),
        ("out", &args.out),
        ("quad-assembly", &args.quad_assembly),
        ("quad-error", &args.quad_error),
    ];
    for (key, value) in flags {
        if let Some(value) = value {
            cfg.apply(key, value).map_err(|e| e.to_string())?;
        }
    }
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

fn init_threads(threads: Option<usize>) {
    if let Some(t) = threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("could not pin thread pool: {e}");
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => {
            let cfg = match build_config(&args) {
                Ok(cfg) => cfg,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            init_threads(cfg.threads);
            match run::execute(&cfg) {
                Ok(out) => {
                    let p = symmfem::problems::by_key(cfg.problem.as_str()).unwrap();
                    print!("{}", run::to_table(&p, &out.rows));
                    println!("wrote {}", out.convergence_csv.display());
                    println!("wrote {}", out.timings_csv.display());
                    println!("wrote {}", out.plot_script.display());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::FAILURE
                }
            }
        }
        Command::Verify(args) => {
            init_threads(args.threads);
            let reports = run_all(&AcceptanceOptions {
                full_eigen_sequence: args.full,
            });
            ExitCode::from(print_reports(&reports) as u8)
        }
    }
}
