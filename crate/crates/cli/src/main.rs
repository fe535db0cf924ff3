use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod config;

/// Build, query and evaluate personal knowledge graphs.
#[derive(Debug, Parser)]
#[command(name = "lifegraph", version, about)]
struct Cli {
    /// TOML config file.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Use a scripted mock model instead of the HTTP backend.
    #[arg(long, global = true, value_name = "SCRIPT")]
    mock: Option<PathBuf>,
    /// Directory media ids resolve against (ask, retrieve, analyze).
    #[arg(long, global = true, value_name = "DIR")]
    media_dir: Option<PathBuf>,
    /// Log filter, e.g. `info` or `lifegraph=debug`.
    #[arg(long, global = true, value_name = "LEVEL")]
    log_level: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Default, Args)]
struct RetrievalArgs {
    /// Maximum path depth d.
    #[arg(long)]
    depth: Option<usize>,
    /// Beam width k.
    #[arg(long)]
    width: Option<usize>,
    /// Fetch source records for retained paths.
    #[arg(long, overrides_with = "no_refs")]
    with_refs: bool,
    /// Do not fetch source records.
    #[arg(long)]
    no_refs: bool,
    /// Cap on fetched source records.
    #[arg(long)]
    max_refs: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum JudgeKind {
    /// Normalized string match, offline.
    Mock,
    /// The configured model.
    Live,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a graph from a vaccount document.
    Build {
        vaccount: PathBuf,
        #[arg(short, long, value_name = "GRAPH")]
        output: PathBuf,
        /// Also write the full build report as JSON.
        #[arg(long, value_name = "FILE")]
        report: Option<PathBuf>,
        #[arg(long)]
        capacity: Option<u64>,
    },
    /// Answer a question from the graph.
    Ask {
        graph: PathBuf,
        question: String,
        /// Image attached to the question; repeatable.
        #[arg(long, value_name = "FILE")]
        image: Vec<PathBuf>,
        /// Print the answer and its retrieved context as JSON.
        #[arg(long)]
        json: bool,
        #[command(flatten)]
        retrieval: RetrievalArgs,
    },
    /// Print the retrieved context for a question as JSON.
    Retrieve {
        graph: PathBuf,
        question: String,
        #[command(flatten)]
        retrieval: RetrievalArgs,
    },
    /// Run an answerer over a vaccount's QA items.
    Eval {
        #[arg(long)]
        vaccount: PathBuf,
        /// QA file; defaults to `<stem>.qa.jsonl` next to the vaccount.
        #[arg(long)]
        qa: Option<PathBuf>,
        /// `lifegraph`, `echo` or `script:<file>`.
        #[arg(long, default_value = "lifegraph", value_parser = parse_answerer)]
        answerer: String,
        /// Prebuilt graph for the lifegraph answerer; built on the fly otherwise.
        #[arg(long)]
        graph: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "mock")]
        judge: JudgeKind,
        /// Write the JSON report here and print the table instead.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
        #[command(flatten)]
        retrieval: RetrievalArgs,
    },
    /// Structural statistics as JSON.
    Analyze {
        graph: PathBuf,
        /// Write gnuplot-ready `degree frequency` rows here.
        #[arg(long, value_name = "FILE")]
        degree_data: Option<PathBuf>,
        /// Sweep effective depth over these questions, one per line.
        #[arg(long, value_name = "FILE")]
        queries: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
        limits: Vec<usize>,
        #[command(flatten)]
        retrieval: RetrievalArgs,
    },
    /// Export the graph in Graphviz format.
    Export {
        graph: PathBuf,
        /// Output file; stdout when omitted.
        #[arg(long, value_name = "FILE")]
        dot: Option<PathBuf>,
    },
}

fn parse_answerer(s: &str) -> Result<String, String> {
    match s {
        "lifegraph" | "echo" => Ok(s.to_string()),
        _ if s.strip_prefix("script:").is_some_and(|p| !p.is_empty()) => Ok(s.to_string()),
        _ => Err("expected lifegraph, echo or script:<file>".to_string()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
