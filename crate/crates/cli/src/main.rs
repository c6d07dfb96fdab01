use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use vctl::config::{parse_config, RunConfig};
use vctl::suite::SUITES;
use vctl::{commands, AppError, AppResult};

/// Optimal control of a relativistic Vlasov-Maxwell plasma by external coils.
///
/// Every configuration key can be overridden with an environment variable
/// `VCTL_<SECTION>__<KEY>`, e.g. `VCTL_GRID__NX=48`.
#[derive(Parser)]
#[command(name = "vctl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads (defaults to `solver.threads` of the configuration).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory (defaults to `output.dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Write density and field snapshots every k steps.
    #[arg(long, global = true, value_name = "K")]
    snapshot_stride: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Forward run with diagnostics.
    Simulate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Adjoint gradient against finite differences.
    Gradcheck {
        #[arg(long)]
        config: PathBuf,
    },
    /// Minimize the tracking objective over the coil currents.
    Optimize {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run validation suites and report each check.
    Validate {
        /// Suite name, or `all`.
        #[arg(long, default_value = "all")]
        suite: String,
    },
}

fn load(path: &PathBuf, cli: &Cli) -> AppResult<(RunConfig, PathBuf)> {
    let mut cfg = parse_config(path)?;
    if let Some(k) = cli.snapshot_stride {
        cfg.output.snapshot_stride = k;
    }
    if let Some(t) = cli.threads {
        cfg.solver.threads = t;
    }
    let out = cli.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
    Ok((cfg, out))
}

fn init_threads(n: usize) -> AppResult<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n.max(1))
        .build_global()
        .map_err(|e| AppError::config(format!("thread pool: {e}")))
}

fn run(cli: &Cli) -> AppResult<bool> {
    match &cli.command {
        Command::Simulate { config } => {
            let (cfg, out) = load(config, cli)?;
            init_threads(cfg.solver.threads)?;
            commands::simulate(&cfg, &out)?;
            println!("wrote {}", out.join("diagnostics.csv").display());
            Ok(true)
        }
        Command::Gradcheck { config } => {
            let (cfg, out) = load(config, cli)?;
            init_threads(cfg.solver.threads)?;
            let rows = commands::gradcheck(&cfg, &out)?;
            for r in &rows {
                println!("direction {} eps {:e}: fd {:e} adjoint {:e} rel err {:e}", r.direction, r.epsilon, r.fd_value, r.adjoint_value, r.rel_err);
            }
            Ok(true)
        }
        Command::Optimize { config } => {
            let (cfg, out) = load(config, cli)?;
            init_threads(cfg.solver.threads)?;
            let res = commands::optimize(&cfg, &out)?;
            println!("stopped after {} iterations ({:?}), objective {:e}", res.history.len() - 1, res.reason, res.value);
            Ok(true)
        }
        Command::Validate { suite } => {
            let names: Vec<&str> = if suite == "all" { SUITES.to_vec() } else { vec![suite.as_str()] };
            let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));
            let threads = cli.threads.unwrap_or(1);
            let mut ok = true;
            for name in names {
                let report = commands::validate(name, threads, &out)?;
                for c in &report.checks {
                    println!("[{name}] {c}");
                }
                ok &= report.passed();
            }
            Ok(ok)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
