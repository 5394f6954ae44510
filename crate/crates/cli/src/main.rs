use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fsmpc_cli::commands::{self, Overrides};
use fsmpc_cli::CliError;

/// Finite-step control Lyapunov function based MPC experiments.
#[derive(Debug, Parser)]
#[command(name = "fsmpc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate the closed loop of the configured algorithm.
    Run(Common),
    /// Run every configured variant on the same scenario and compare.
    Compare(Common),
    /// Certify the candidate on sampled level-set states (exit 1 if it fails).
    Verify(Common),
    /// Classic MPC horizon bound from explicit or fitted constants.
    Bound(BoundArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// Scenario file (JSON).
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Debug, Args)]
struct Flags {
    /// Output directory; overrides `output_dir` of the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for the randomized sample rotation.
    #[arg(long)]
    seed: Option<u64>,
    /// Feasibility tolerance of the solver.
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Debug, Args)]
struct BoundArgs {
    #[arg(long = "M", requires_all = ["c", "d"], conflicts_with = "from_fit")]
    m: Option<usize>,
    #[arg(long, requires = "m")]
    c: Option<f64>,
    #[arg(long, requires = "m")]
    d: Option<f64>,
    /// Fit `c` and `d` on the verification samples of this scenario.
    #[arg(long = "from-fit", value_name = "CONFIG")]
    from_fit: Option<PathBuf>,
    #[command(flatten)]
    flags: Flags,
}

impl From<Flags> for Overrides {
    fn from(f: Flags) -> Self {
        Overrides {
            out: f.out,
            seed: f.seed,
            tol: f.tol,
        }
    }
}

fn print_files(files: &[PathBuf]) {
    for f in files {
        println!("{}", f.display());
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run(c) => {
            let out = commands::run(&commands::load(&c.config)?, &c.flags.into())?;
            print_files(&out.files);
        }
        Command::Compare(c) => {
            let out = commands::compare(&commands::load(&c.config)?, &c.flags.into())?;
            print_files(&out.files);
        }
        Command::Verify(c) => {
            let out = commands::verify(&commands::load(&c.config)?, &c.flags.into())?;
            print_files(&out.files);
        }
        Command::Bound(b) => {
            let report = match (b.from_fit, b.m, b.c, b.d) {
                (Some(path), _, _, _) => commands::bound_from_fit(&commands::load(&path)?, &b.flags.into())?,
                (None, Some(m), Some(c), Some(d)) => commands::bound(m, c, d)?,
                _ => return Err(CliError::Usage("`bound` needs --M, --c and --d, or --from-fit".into())),
            };
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FSMPC_LOG", "warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
