//! `egvp run | sweep | check`.
//!
//! Exit codes: 0 success, 1 configuration error, 2 runtime failure
//! (including a failed acceptance criterion).

use clap::{Parser, Subcommand, ValueEnum};
use egvp::acceptance;
use egvp::config::{parse_config, OutputFormat, RunConfig};
use egvp::results::{aggregates_to_csv, emit_results, run_experiment, sweep_figures, Figure, ResultTable};
use egvp::Error;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Overrides the output directory of `run` and `sweep` when `--out` is absent.
const OUT_DIR_ENV: &str = "EGVP_OUT_DIR";

#[derive(Parser)]
#[command(name = "egvp", version, about = "Eigenvector-prediction precoding experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum FigureArg {
    Speed,
    Cycle,
    Noise,
}

#[derive(Subcommand)]
enum Command {
    /// Run every sweep point and drop of a config and write the result table.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Replaces `master_seed` from the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Output format; repeat for several. Defaults to the config's list.
        #[arg(long, value_enum)]
        format: Vec<Format>,
    },
    /// Aggregate one figure's sweep (mean and standard error per point and
    /// scheme) and print it as CSV.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        figure: FigureArg,
        /// Aggregate an existing results.csv instead of running the config.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Also write `<figure>.csv` into this directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the acceptance suite and print one line per criterion.
    Check,
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => Failure::Config(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn load(path: &Path, seed: Option<u64>) -> Result<RunConfig, Failure> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut config = parse_config(&text)?;
    if let Some(s) = seed {
        config.master_seed = s;
    }
    Ok(config)
}

fn out_dir(flag: Option<PathBuf>, config: &RunConfig) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(&config.output.dir))
}

fn execute(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run { config, out, seed, format } => {
            let config = load(&config, seed)?;
            let formats: Vec<OutputFormat> = if format.is_empty() {
                config.output.formats.clone()
            } else {
                format
                    .into_iter()
                    .map(|f| match f {
                        Format::Csv => OutputFormat::Csv,
                        Format::Json => OutputFormat::Json,
                    })
                    .collect()
            };
            let table = run_experiment(&config)?;
            let failed = table.rows.iter().filter(|r| r.se.is_nan()).count();
            let dir = out_dir(out, &config);
            for path in emit_results(&table, &dir, &formats)? {
                println!("{}", path.display());
            }
            eprintln!("{} rows, config hash {}, {failed} failed-drop rows", table.rows.len(), config.hash());
        }
        Command::Sweep { config, figure, input, out, seed } => {
            let config = load(&config, seed)?;
            let figure = match figure {
                FigureArg::Speed => Figure::Speed,
                FigureArg::Cycle => Figure::Cycle,
                FigureArg::Noise => Figure::Noise,
            };
            let table = match input {
                Some(path) => {
                    let text = std::fs::read_to_string(&path)
                        .map_err(|e| Failure::Runtime(format!("cannot read {}: {e}", path.display())))?;
                    ResultTable::from_csv(&text)?
                }
                None => run_experiment(&config)?,
            };
            let csv = aggregates_to_csv(&sweep_figures(&table, figure)?)?;
            print!("{csv}");
            let dir = out.or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from));
            if let Some(dir) = dir {
                std::fs::create_dir_all(&dir).map_err(|e| Failure::Runtime(e.to_string()))?;
                let path = dir.join(format!("{}.csv", figure_name(figure)));
                std::fs::write(&path, csv).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
                eprintln!("{}", path.display());
            }
        }
        Command::Check => {
            let reports = acceptance::run_all();
            for r in &reports {
                println!("{r}");
            }
            let failed = reports.iter().filter(|r| !r.pass).count();
            println!("acceptance: {} passed, {failed} failed", reports.len() - failed);
            if failed > 0 {
                return Err(Failure::Runtime(format!("{failed} acceptance criteria failed")));
            }
        }
    }
    Ok(())
}

fn figure_name(f: Figure) -> &'static str {
    match f {
        Figure::Speed => "speed",
        Figure::Cycle => "cycle",
        Figure::Noise => "noise",
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("egvp: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("egvp: {msg}");
            ExitCode::from(2)
        }
    }
}
