//! `coverage`: build concept lists, generate, embed, score and report.
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 pipeline failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use coverage_core::lang::Lang;

#[derive(Parser, Debug)]
#[command(name = "coverage", version, about = "Multilingual concept-coverage benchmark")]
struct Cli {
    /// Config file (.toml or .json). Built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build the aligned concept list.
    BuildConcepts(BuildConceptsArgs),
    /// Generate images for every (concept, language) pair.
    Generate(GenerateArgs),
    /// Run the embedder over a run's images and concept texts.
    Embed(EmbedArgs),
    /// Score a run.
    Score(ScoreArgs),
    /// Aggregate score tables into a report.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
pub struct BuildConceptsArgs {
    /// Replay recorded sources and service responses from this directory.
    #[arg(long)]
    pub fixtures: Option<PathBuf>,
    /// One term per line; defaults to no denylist.
    #[arg(long)]
    pub denylist: Option<PathBuf>,
    /// Output TSV; its sidecar goes to `<out>.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Version label prefix.
    #[arg(long)]
    pub label: Option<String>,
}

#[derive(Args, Debug)]
#[command(group = clap::ArgGroup::new("adapter").args(["adapter_url", "stub"]))]
pub struct GenerateArgs {
    #[arg(long)]
    pub model: Option<String>,
    /// HTTP generator endpoint.
    #[arg(long)]
    pub adapter_url: Option<String>,
    /// Use the built-in procedural generator.
    #[arg(long)]
    pub stub: bool,
    /// Images per (concept, language).
    #[arg(long)]
    pub n: Option<u32>,
    /// Keep finished entries of an existing run and complete the rest.
    #[arg(long)]
    pub resume: bool,
    /// Concept list TSV.
    #[arg(long)]
    pub concepts: Option<PathBuf>,
    /// Output root; the run goes to `<root>/runs/<model>/<variant>`.
    #[arg(long)]
    pub root: Option<PathBuf>,
    /// Only the first K concepts.
    #[arg(long)]
    pub limit: Option<usize>,
    /// Prompt template variant.
    #[arg(long)]
    pub variant: Option<String>,
    /// Restrict to these languages (comma-separated).
    #[arg(long, value_delimiter = ',')]
    pub languages: Option<Vec<Lang>>,
    #[arg(long)]
    pub width: Option<u32>,
    #[arg(long)]
    pub height: Option<u32>,
}

#[derive(Args, Debug)]
pub struct EmbedArgs {
    /// Run directory (holds manifest.json).
    #[arg(long)]
    pub run: PathBuf,
    /// Embedder program and leading arguments, split on whitespace.
    #[arg(long)]
    pub embedder_cmd: Option<String>,
    /// Languages to embed concept text for; defaults to the source language.
    #[arg(long, value_delimiter = ',')]
    pub text_langs: Option<Vec<Lang>>,
}

#[derive(Args, Debug)]
pub struct ScoreArgs {
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub source_lang: Option<Lang>,
    /// `sampled`, `sampled:<m>` or `exhaustive`.
    #[arg(long)]
    pub dt_mode: Option<String>,
    /// Output directory; defaults to the run directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Score tables (.json or .csv). Two tables over identical keys are
    /// treated as baseline and variant.
    #[arg(long, num_args = 1.., required = true)]
    pub tables: Vec<PathBuf>,
    /// Explicit ablation baseline table.
    #[arg(long)]
    pub baseline: Option<PathBuf>,
    /// Comma-separated subset of csv, json, html.
    #[arg(long, default_value = "csv,json,html")]
    pub formats: String,
    #[arg(long, default_value = "report")]
    pub out: PathBuf,
    /// Run directories to take sample thumbnails from.
    #[arg(long, num_args = 1..)]
    pub runs: Vec<PathBuf>,
    #[arg(long)]
    pub title: Option<String>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = config::Config::load(cli.config.as_deref())
        .map_err(commands::Failure::config)
        .and_then(|cfg| match &cli.command {
            Command::BuildConcepts(a) => commands::build_concepts(&cfg, a),
            Command::Generate(a) => commands::generate(&cfg, a),
            Command::Embed(a) => commands::embed(&cfg, a),
            Command::Score(a) => commands::score(&cfg, a),
            Command::Report(a) => commands::report(&cfg, a),
        });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
