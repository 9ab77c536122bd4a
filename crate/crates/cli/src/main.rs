use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use dpn_cli::commands::{self, FilterArgs, ForecastArgs, SmoothArgs};
use dpn_cli::records::OutputFormat;

/// Exact inference for discrete dynamic probabilistic networks: sliding-
/// window filtering, backward smoothing, and forecasting.
#[derive(Parser)]
#[command(name = "dpn", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a model file; prints one line per violation.
    Validate {
        /// Model file (JSON).
        model: PathBuf,
    },
    /// Run sliding-window filtering over an evidence stream and emit one
    /// marginal record per variable per slice.
    Filter {
        /// Model file (JSON); omit when resuming with --load-series.
        #[arg(required_unless_present = "load_series")]
        model: Option<PathBuf>,
        /// Evidence file, one JSON object per line, sorted by slice.
        #[arg(short, long)]
        evidence: PathBuf,
        /// Window width in slices.
        #[arg(short, long, default_value_t = 1)]
        width: u32,
        /// Triangulation heuristic: min-weight or min-fill.
        #[arg(long, default_value = "min-weight")]
        heuristic: String,
        /// Output format: json-lines or csv.
        #[arg(long, default_value = "json-lines")]
        format: OutputFormat,
        /// Resume from a saved series instead of a model file.
        #[arg(long, conflicts_with = "model")]
        load_series: Option<PathBuf>,
        /// Save the final series state to this path.
        #[arg(long)]
        save_series: Option<PathBuf>,
    },
    /// Filter all evidence, then emit smoothed marginals for the requested
    /// slice:variable targets (default: every variable at every slice).
    Smooth {
        model: PathBuf,
        #[arg(short, long)]
        evidence: PathBuf,
        #[arg(short, long, default_value_t = 1)]
        width: u32,
        #[arg(long, default_value = "min-weight")]
        heuristic: String,
        /// Comma-separated t:variable pairs, e.g. "0:x,3:y".
        #[arg(long)]
        targets: Option<String>,
        #[arg(long, default_value = "json-lines")]
        format: OutputFormat,
    },
    /// Filter all evidence, then forecast past the window.
    Forecast {
        model: PathBuf,
        #[arg(short, long)]
        evidence: PathBuf,
        #[arg(short, long, default_value_t = 1)]
        width: u32,
        #[arg(long, default_value = "min-weight")]
        heuristic: String,
        /// Slices to look ahead.
        #[arg(short = 'k', long)]
        horizon: u32,
        /// exact, mc, or linear.
        #[arg(long, default_value = "exact")]
        method: String,
        /// Trajectory count for the mc method.
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        /// Seed for the mc method.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Comma-separated offset:variable pairs within the horizon
        /// (default: every variable at every offset).
        #[arg(long)]
        targets: Option<String>,
        /// Cap on exact-forecast table cells (also DPN_RESOURCE_CAP).
        #[arg(long)]
        cap: Option<usize>,
        #[arg(long, default_value = "json-lines")]
        format: OutputFormat,
    },
}

fn main() {
    let cli = Cli::parse();
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let result = match cli.command {
        Command::Validate { model } => commands::cmd_validate(&model, &mut out),
        Command::Filter {
            model,
            evidence,
            width,
            heuristic,
            format,
            load_series,
            save_series,
        } => commands::cmd_filter(
            &FilterArgs { model, evidence, width, heuristic, format, load_series, save_series },
            &mut out,
        ),
        Command::Smooth { model, evidence, width, heuristic, targets, format } => {
            commands::cmd_smooth(
                &SmoothArgs { model, evidence, width, heuristic, targets, format },
                &mut out,
            )
        }
        Command::Forecast {
            model,
            evidence,
            width,
            heuristic,
            horizon,
            method,
            samples,
            seed,
            targets,
            cap,
            format,
        } => commands::cmd_forecast(
            &ForecastArgs {
                model,
                evidence,
                width,
                heuristic,
                horizon,
                method,
                samples,
                seed,
                targets,
                cap,
                format,
            },
            &mut out,
        ),
    };
    if let Err(e) = result {
        let _ = out.flush();
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
