use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use momineq_cli::{cmd_representation, cmd_sweep, cmd_verify, VerifyConfig};

/// Verify the moment inequality E|X+Y|^r >= E|X-Y|^r on model files.
#[derive(Parser)]
#[command(name = "momineq", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Exact,
    Quadrature,
    Mc,
}

#[derive(Subcommand)]
enum Command {
    /// Run positivity and moment checks over an r grid, emit a JSON report.
    Verify {
        /// Model file (JSON).
        file: PathBuf,
        /// Comma-separated r values; defaults to the file's list, the
        /// model's intrinsic exponent, or {0.25, 0.5, 1, 1.5, 1.9, 2}.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        r: Option<Vec<f64>>,
        /// Moment computation channel (default: exact for discrete models,
        /// quadrature for densities).
        #[arg(long, value_enum)]
        method: Option<MethodArg>,
        /// Monte Carlo sample count.
        #[arg(long)]
        mc_n: Option<u64>,
        /// Monte Carlo seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Monte Carlo worker threads (output is identical for any count).
        #[arg(long)]
        workers: Option<usize>,
        /// Quadrature relative tolerance.
        #[arg(long)]
        rel_tol: Option<f64>,
        /// Attach the truncated-window representation cross-check to each
        /// discrete record with 0.05 <= r < 2.
        #[arg(long)]
        channels: bool,
        /// Report path (stdout when absent).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Truncated-window convergence table (CSV) for a discrete model.
    Representation {
        /// Model file (JSON), discrete kind.
        file: PathBuf,
        /// Exponent, 0 < r < 2.
        #[arg(long, allow_hyphen_values = true)]
        r: f64,
        /// Comma-separated window sizes.
        #[arg(long, value_delimiter = ',')]
        n: Vec<u32>,
        /// Table path (stdout when absent).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Scan two-point product laws (atoms a and -1) for inequality failures.
    Sweep {
        /// Exponent, r > 0.
        #[arg(long, allow_hyphen_values = true)]
        r: f64,
        /// Grid for the free atom, lo:hi:steps.
        #[arg(long, allow_hyphen_values = true)]
        a: String,
        /// Grid for its probability, lo:hi:steps inside (0, 1).
        #[arg(long)]
        p: String,
        /// Table path (stdout when absent).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Verify {
            file,
            r,
            method,
            mc_n,
            seed,
            workers,
            rel_tol,
            channels,
            out,
        } => cmd_verify(&VerifyConfig {
            file,
            r_list: r,
            method: method.map(|m| match m {
                MethodArg::Exact => momineq::modelfile::MethodChoice::Exact,
                MethodArg::Quadrature => momineq::modelfile::MethodChoice::Quadrature,
                MethodArg::Mc => momineq::modelfile::MethodChoice::MonteCarlo,
            }),
            mc_n,
            seed,
            workers,
            rel_tol,
            channels,
            out,
        }),
        Command::Representation { file, r, n, out } => cmd_representation(&file, r, &n, &out),
        Command::Sweep { r, a, p, out } => cmd_sweep(r, &a, &p, &out),
    };
    ExitCode::from(code)
}
