//! `gwm`: command-line orchestrator for graph world model runs.
//!
//! Exit codes: 0 on success, 1 on a usage error, 2 on a runtime error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use gwm_core::step::Pipeline;

#[derive(Debug, Parser)]
#[command(name = "gwm", about = "Graph world model runtime: build, embed, propagate, prompt and step graph states")]
pub struct Cli {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Seed for mock embeddings and random projectors [default: 0].
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Prompt budget in tokens [default: 2048].
    #[arg(long, global = true, value_name = "TOKENS")]
    pub budget: Option<usize>,
    /// Decoder service base URL; selects the HTTP client instead of the in-process mock.
    #[arg(long, global = true, value_name = "URL")]
    pub decoder_url: Option<String>,
    /// Drop unknown keys when reading graph files instead of rejecting them.
    #[arg(long, global = true)]
    pub lenient: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a graph from a task fixture or a plain-text document.
    BuildGraph(BuildGraphArgs),
    /// Fill missing embedding slots through the embedder client.
    Embed(EmbedArgs),
    /// Write the hop-L propagated embedding matrix.
    Propagate(PropagateArgs),
    /// Rank nodes by cosine similarity to a query.
    Retrieve(RetrieveArgs),
    /// Render the decoder prompt for an action without calling the decoder.
    Prompt(PromptArgs),
    /// Run one transition: prompt, decode, parse, apply.
    Step(StepArgs),
    /// Probe accuracy against message-passing depth on a synthetic graph.
    AblateHops(AblateArgs),
    /// Serve the deterministic mock decoder over HTTP.
    MockServe(MockServeArgs),
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["fixture", "document"])))]
pub struct BuildGraphArgs {
    /// Task fixture (`*.task.json`).
    #[arg(long, value_name = "FILE")]
    pub fixture: Option<PathBuf>,
    /// Plain-text document to chunk into a similarity graph.
    #[arg(long, value_name = "FILE")]
    pub document: Option<PathBuf>,
    /// Whitespace tokens per document chunk [default: 128].
    #[arg(long)]
    pub chunk_tokens: Option<usize>,
    /// Similarity neighbours per chunk [default: 5].
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(short, long, value_name = "FILE")]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[arg(long, value_name = "FILE")]
    pub graph: PathBuf,
    /// Output graph file.
    #[arg(short, long, value_name = "FILE")]
    pub output: PathBuf,
    /// Also write the concatenated embeddings as a binary store.
    #[arg(long, value_name = "FILE")]
    pub store: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PropagateArgs {
    #[arg(long, value_name = "FILE")]
    pub graph: PathBuf,
    /// Input embedding store; defaults to the graph's own embeddings.
    #[arg(long, value_name = "FILE")]
    pub embeddings: Option<PathBuf>,
    /// Message-passing depth L [default: 4].
    #[arg(long)]
    pub hops: Option<usize>,
    #[arg(short, long, value_name = "FILE")]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct RetrieveArgs {
    #[arg(long, value_name = "FILE")]
    pub graph: PathBuf,
    #[arg(long)]
    pub query: String,
    /// Number of results [default: 5].
    #[arg(long)]
    pub k: Option<usize>,
}

/// Where the graph, task and action of a prompt or step come from.
#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("input").required(true).args(["fixture", "graph"])))]
pub struct ActionArgs {
    /// Task fixture providing graph, task and action.
    #[arg(long, value_name = "FILE", conflicts_with_all = ["action", "target", "query", "param"])]
    pub fixture: Option<PathBuf>,
    #[arg(long, value_name = "FILE", requires = "action")]
    pub graph: Option<PathBuf>,
    /// Action template id.
    #[arg(long, value_name = "TEMPLATE")]
    pub action: Option<String>,
    /// Target node id; repeat for edge and multi-node scopes.
    #[arg(long, value_name = "ID", conflicts_with = "query")]
    pub target: Vec<String>,
    /// Query text for a retrieval-based action.
    #[arg(long)]
    pub query: Option<String>,
    /// Template slot value as `slot=value`.
    #[arg(long, value_name = "SLOT=VALUE", value_parser = parse_param)]
    pub param: Vec<(String, String)>,
    /// Line appended to the prompt.
    #[arg(long)]
    pub instruction: Option<String>,
    #[arg(long, default_value_t = Pipeline::Token)]
    pub pipeline: Pipeline,
    /// Message-passing depth L [default: 4].
    #[arg(long)]
    pub hops: Option<usize>,
    /// Retrieval depth for query actions [default: 5].
    #[arg(long)]
    pub k: Option<usize>,
    /// Projector checkpoint for the embed pipeline; a seeded random projector otherwise.
    #[arg(long, value_name = "FILE")]
    pub projector: Option<PathBuf>,
}

fn parse_param(s: &str) -> Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .ok_or_else(|| format!("`{s}` is not of the form slot=value"))
}

#[derive(Debug, Args)]
pub struct PromptArgs {
    #[command(flatten)]
    pub action: ActionArgs,
}

#[derive(Debug, Args)]
pub struct StepArgs {
    #[command(flatten)]
    pub action: ActionArgs,
    /// Output graph file with the transition applied.
    #[arg(short, long, value_name = "FILE")]
    pub output: PathBuf,
    /// Transition log to append to (JSON lines).
    #[arg(long, value_name = "FILE")]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// Depths to compare.
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,4")]
    pub hops: Vec<usize>,
    /// Fixture seeds.
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
    pub seeds: Vec<u64>,
    /// Synthetic graph description (JSON); a planted neighbourhood-majority graph otherwise.
    #[arg(long, value_name = "FILE")]
    pub fixture: Option<PathBuf>,
    /// CSV output; stdout otherwise.
    #[arg(short, long, value_name = "FILE")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MockServeArgs {
    #[arg(long, default_value = "127.0.0.1:8077")]
    pub addr: String,
}

fn version_text() -> String {
    let formats: Vec<String> = gwm_core::store::format_versions()
        .iter()
        .map(|(name, v)| format!("{name} v{v}"))
        .collect();
    format!("{} ({})", env!("CARGO_PKG_VERSION"), formats.join(", "))
}

fn main() -> ExitCode {
    let cmd = Cli::command().version(version_text());
    let cli = match cmd.try_get_matches().and_then(|m| Cli::from_arg_matches(&m)) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
