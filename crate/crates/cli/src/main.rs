use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use qpnet_cli::commands::{self, parse_point, SolveArgs, StudyArgs};
use qpnet_cli::CliError;

#[derive(Parser)]
#[command(name = "qpnet", version, about = "Equilibria of networks of quadratic programs")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a problem file for structural errors.
    Validate { file: PathBuf },
    /// Search for an equilibrium.
    Solve {
        file: PathBuf,
        /// Starting point as a comma-separated list; overrides the file's init.
        #[arg(long, value_parser = parse_point_arg, allow_hyphen_values = true)]
        init: Option<Point>,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        max_restarts: Option<usize>,
        /// Write the search trace as JSON lines.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Print the local solution graph of a node at a point.
    Graph {
        file: PathBuf,
        /// Node index, 1-based.
        #[arg(long)]
        node: usize,
        #[arg(long, value_parser = parse_point_arg, allow_hyphen_values = true)]
        point: Point,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Check whether a point is an equilibrium.
    Check {
        file: PathBuf,
        #[arg(long, value_parser = parse_point_arg, allow_hyphen_values = true)]
        point: Point,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Run the satellite constellation study and write per-config statistics as CSV.
    Constellation {
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        jobs: Option<usize>,
        /// CSV destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        max_restarts: Option<usize>,
    },
    /// Write a built-in example problem file.
    Example {
        #[arg(value_parser = commands::EXAMPLES)]
        name: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// A whole comma-separated point; a bare `Vec` would make clap expect many values.
#[derive(Clone, Debug)]
struct Point(Vec<f64>);

fn parse_point_arg(s: &str) -> Result<Point, String> {
    parse_point(s).map(Point).map_err(|e| e.to_string())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let mut err = io::stderr();
    match cli.cmd {
        Command::Validate { file } => commands::cmd_validate(&file, &mut out, &mut err),
        Command::Solve { file, init, tol, max_restarts, trace } => {
            let args = SolveArgs { init: init.map(|p| p.0), tol, max_restarts, trace };
            commands::cmd_solve(&file, &args, &mut out, &mut err)
        }
        Command::Graph { file, node, point, tol } => commands::cmd_graph(&file, node, &point.0, tol, &mut out, &mut err),
        Command::Check { file, point, tol } => commands::cmd_check(&file, &point.0, tol, &mut out, &mut err),
        Command::Constellation { samples, seed, jobs, out: path, tol, max_restarts } => {
            let jobs = jobs.unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
            let args = StudyArgs { samples, seed, jobs, out: path, tol, max_restarts };
            commands::cmd_constellation(&args, &mut out, &mut err)
        }
        Command::Example { name, out: path } => commands::cmd_example(&name, path.as_deref(), &mut out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(3) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => {
            let _ = io::stdout().flush();
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("qpnet: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
