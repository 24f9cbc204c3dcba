use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use kpcert_cli::config::Overrides;
use kpcert_cli::{cmd_check, cmd_harnack, cmd_miranda, cmd_solve, finish, Invocation, EXIT_CONFIG};

/// Numerical certificates for cone compression/expansion fixed-point
/// problems.
#[derive(Parser)]
#[command(name = "kpcert", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Problem configuration (JSON, "schema": 1).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Multistart seed; overrides `solver.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Solution grid nodes; overrides `solver.nodes`.
    #[arg(long)]
    grid: Option<usize>,
}

impl Common {
    fn invocation(self) -> Invocation {
        Invocation { config: self.config, overrides: Overrides { seed: self.seed, grid: self.grid, out: self.out } }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate every hypothesis and write certificate.json.
    Check(Common),
    /// Check, then compute solutions.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Search even when the certificate fails.
        #[arg(long)]
        skip_check: bool,
    },
    /// Face conditions and zero of a Miranda config.
    Miranda(Common),
    /// Check a radial solution CSV (columns r, u1, u2) against the cone inequality.
    Harnack {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        /// Tolerance relative to the sup-norm of each component.
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            return ExitCode::from(code as u8);
        }
    };
    let code = match cli.command {
        Command::Check(c) => finish(cmd_check(&c.invocation())),
        Command::Solve { common, skip_check } => finish(cmd_solve(&common.invocation(), skip_check)),
        Command::Miranda(c) => finish(cmd_miranda(&c.invocation())),
        Command::Harnack { common, input, tol } => finish(cmd_harnack(&common.invocation(), &input, tol)),
    };
    ExitCode::from(code as u8)
}
