use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use snapens::analysis::DEFAULT_GRID_POINTS;
use snapens::ensemble::Order;
use snapens_cli::commands::{self, GenData, GenKind, InterpTarget};
use snapens_cli::sweep;
use snapens_cli::CliError;

#[derive(Parser)]
#[command(name = "snapens", version, about = "Snapshot-ensemble training and analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Spirals,
    Moons,
    Blobs,
}

#[derive(Clone, Copy, ValueEnum)]
enum OrderArg {
    Latest,
    Earliest,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset as CSV.
    GenData {
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long)]
        n: usize,
        /// Gaussian noise scale (cluster spread for blobs).
        #[arg(long, default_value_t = 0.1)]
        noise: f64,
        #[arg(long, default_value_t = 1.5)]
        turns: f64,
        /// Number of clusters (blobs only).
        #[arg(long, default_value_t = 3)]
        classes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one run from a config file.
    Train { config: PathBuf },
    /// Ensemble error for one m, or for every m when --m is omitted.
    Ensemble {
        manifest: PathBuf,
        data: PathBuf,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long, value_enum, default_value = "latest")]
        order: OrderArg,
        #[arg(long, default_value = "label")]
        label: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Single-snapshot and earliest-k ensemble error for k = 1..M.
    Curve {
        manifest: PathBuf,
        data: PathBuf,
        #[arg(long, default_value = "label")]
        label: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Test error along the line between two snapshots' parameters.
    Interpolate {
        manifest: PathBuf,
        data: PathBuf,
        /// Snapshot indices (1-based); the first is at lambda = 1.
        #[arg(long, num_args = 2, value_names = ["I", "J"], conflicts_with = "against_final")]
        pair: Option<Vec<usize>>,
        /// Final snapshot (lambda = 1) against every snapshot (lambda = 0).
        #[arg(long)]
        against_final: bool,
        #[arg(long, default_value_t = DEFAULT_GRID_POINTS)]
        grid: usize,
        #[arg(long, default_value = "label")]
        label: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pairwise correlation of the snapshots' softmax outputs.
    Correlate {
        manifest: PathBuf,
        data: PathBuf,
        #[arg(long, default_value = "label")]
        label: String,
        /// Where to write the `i,j,corr` triples (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Where to write the M x M grid.
        #[arg(long)]
        grid_out: Option<PathBuf>,
    },
    /// Train every .cfg in a directory and write summary.csv there.
    Sweep {
        config_dir: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Build a manifest from the final snapshot of each given run.
    Combine {
        #[arg(long)]
        out: PathBuf,
        #[arg(required = true)]
        manifests: Vec<PathBuf>,
    },
}

fn emit(text: &str, out: Option<&Path>) -> Result<(), CliError> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| CliError::io(format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn order(o: OrderArg) -> Order {
    match o {
        OrderArg::Latest => Order::Latest,
        OrderArg::Earliest => Order::Earliest,
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::GenData { kind, n, noise, turns, classes, seed, out } => {
            let kind = match kind {
                Kind::Spirals => GenKind::Spirals,
                Kind::Moons => GenKind::Moons,
                Kind::Blobs => GenKind::Blobs,
            };
            commands::gen_data(&GenData { kind, n, noise, turns, classes, seed }, &out)
        }
        Command::Train { config } => {
            let outcome = commands::train(&config)?;
            eprintln!("wrote {} snapshots to {}", outcome.snapshots, outcome.dir.display());
            Ok(())
        }
        Command::Ensemble { manifest, data, m, order: o, label, out } => {
            let csv = commands::ensemble(&manifest, &data, &label, m, order(o))?;
            emit(&csv, out.as_deref())
        }
        Command::Curve { manifest, data, label, out } => {
            emit(&commands::curve(&manifest, &data, &label)?, out.as_deref())
        }
        Command::Interpolate { manifest, data, pair, against_final, grid, label, out } => {
            let target = match (pair, against_final) {
                (Some(p), false) => InterpTarget::Pair(p[0], p[1]),
                (None, true) => InterpTarget::AgainstFinal,
                _ => return Err(CliError::usage("give exactly one of --pair I J or --against-final")),
            };
            emit(&commands::interpolate(&manifest, &data, &label, target, grid)?, out.as_deref())
        }
        Command::Correlate { manifest, data, label, out, grid_out } => {
            let (triples, grid) = commands::correlate(&manifest, &data, &label)?;
            if let Some(path) = grid_out {
                emit(&grid, Some(&path))?;
            }
            emit(&triples, out.as_deref())
        }
        Command::Sweep { config_dir, jobs } => {
            let rows = sweep::run_sweep(&config_dir, jobs)?;
            emit(&sweep::summary_csv(&rows), Some(&config_dir.join(sweep::SUMMARY_FILE)))?;
            emit(&sweep::run_index(&rows), Some(&config_dir.join(sweep::RUN_INDEX_FILE)))?;
            eprintln!("{} runs summarized in {}", rows.len(), config_dir.join(sweep::SUMMARY_FILE).display());
            Ok(())
        }
        Command::Combine { out, manifests } => {
            let m = commands::combine(&manifests, &out)?;
            eprintln!("{} snapshots listed in {}", m.snapshots.len(), out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.code as u8)
        }
    }
}
