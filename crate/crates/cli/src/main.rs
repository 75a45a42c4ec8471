use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use qevo::RunArgs;
use qevo_core::eval::LossParams;

#[derive(Parser)]
#[command(name = "qevo", version, about = "Evolve boolean search queries against a labeled corpus")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build the n-gram index of a JSONL corpus and write it to disk.
    Index {
        corpus: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        /// Minimum number of documents a phrase must occur in.
        #[arg(long, default_value_t = 2)]
        min_doc_freq: u32,
    },
    /// Start or resume a run described by a TOML config.
    Run {
        #[arg(short, long)]
        config: PathBuf,
        /// Override a config value, e.g. `--set ga.rng_seed=7`. Repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Continue from the checkpoint in the configured checkpoint_dir.
        #[arg(long)]
        resume: bool,
    },
    /// Score a query against a labeled corpus.
    Eval {
        corpus: PathBuf,
        query: String,
        /// CSV of `id,label` rows applied over the corpus labels.
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long, default_value_t = LossParams::default().eps_fp)]
        eps: f64,
        #[arg(long, default_value_t = LossParams::default().delta_fp)]
        delta: f64,
        #[arg(long, default_value_t = LossParams::default().lambda_len)]
        lambda: f64,
    },
    /// Print the clause-structured form of a query.
    Normalize {
        query: String,
        /// Encode against this corpus's vocabulary and print the genome.
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Write a synthetic corpus with a planted target query and a run config.
    Synth {
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long, default_value_t = 5000)]
        docs: usize,
        #[arg(long, default_value_t = 2000)]
        hidden: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Cmd::Index { corpus, out, min_doc_freq } => qevo::index(&corpus, &out, min_doc_freq).map(print),
        Cmd::Run { config, overrides, resume } => qevo::run(&RunArgs { config, overrides, resume }),
        Cmd::Eval { corpus, query, labels, eps, delta, lambda } => {
            let params = LossParams { eps_fp: eps, eps_fn: eps, delta_fp: delta, delta_fn: delta, lambda_len: lambda };
            qevo::eval(&corpus, labels.as_deref(), &query, &params).map(print)
        }
        Cmd::Normalize { query, corpus } => qevo::normalize_query(&query, corpus.as_deref()).map(print),
        Cmd::Synth { out, docs, hidden, seed } => qevo::synth(&out, docs, hidden, seed).map(print),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn print(text: String) -> i32 {
    println!("{text}");
    0
}
