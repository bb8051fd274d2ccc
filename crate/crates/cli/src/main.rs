mod commands;
mod render;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Execution-grounded credit assignment for generated programs.
#[derive(Debug, Parser)]
#[command(name = "egca", version)]
pub struct Cli {
    /// Human-readable output instead of JSON.
    #[arg(long, global = true)]
    pub pretty: bool,
    /// Leave wall-clock timings out of reports.
    #[arg(long, global = true)]
    pub no_timing: bool,
    /// Worker threads for per-problem parallelism.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// JSON configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Execution budget in events.
    #[arg(long, global = true)]
    pub fuel: Option<usize>,
    /// External localizer endpoint. Overrides EGCA_LOCALIZER_URL.
    #[arg(long, global = true)]
    pub localizer_url: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Execute a program and print its trace as JSON Lines.
    Trace {
        program: PathBuf,
        /// JSON input: the argument itself for one-parameter functions,
        /// otherwise an array of arguments.
        args: String,
    },
    /// Locate the earliest divergence of a candidate from a reference.
    Diff(DiffArgs),
    /// Route one candidate for a problem and print its failure mode.
    Route { candidate: PathBuf, problem: PathBuf },
    /// Credit a directory of candidates as one group.
    Credit { group: PathBuf, problem: PathBuf },
    /// Route and credit a corpus of candidate groups.
    Run(RunArgs),
    /// Render a saved pipeline report.
    Report { run_dir: PathBuf },
    /// Training simulator.
    Sim {
        #[command(subcommand)]
        command: SimCommand,
    },
}

#[derive(Debug, Args)]
pub struct DiffArgs {
    /// Candidate program, or candidate trace with --from-traces.
    pub candidate: PathBuf,
    /// Reference program, or reference trace with --from-traces.
    pub reference: PathBuf,
    /// JSON input; not used with --from-traces.
    #[arg(required_unless_present = "from_traces")]
    pub input: Option<String>,
    /// Compare two JSON Lines traces instead of executing programs.
    #[arg(long)]
    pub from_traces: bool,
    /// Candidate source, enabling static alignment.
    #[arg(long, requires = "from_traces")]
    pub candidate_source: Option<PathBuf>,
    /// Reference source, enabling static alignment.
    #[arg(long, requires = "from_traces")]
    pub reference_source: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Problem directory root; may be repeated.
    #[arg(long, default_value = "corpus/problems")]
    pub corpus: Vec<PathBuf>,
    /// Directory with one subdirectory of candidates per problem id.
    #[arg(long, default_value = "corpus/candidates")]
    pub candidates: PathBuf,
    /// Write `report.json` here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum SimCommand {
    /// Train every credit strategy on every seed and summarize.
    Ablate {
        /// Ablation configuration; defaults apply when omitted.
        #[arg(value_name = "CONFIG")]
        ablation: Option<PathBuf>,
        #[arg(long, default_value = "corpus/problems")]
        corpus: Vec<PathBuf>,
        /// Write `summary.json` and per-strategy curve CSVs here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::dispatch(&cli) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(commands::Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(commands::Failure::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
