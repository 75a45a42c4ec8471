//! Command-line driver: index building, runs, one-off scoring and
//! normalization, synthetic bundles, and the HTTP control server.

pub mod api;

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::info;

use qevo_core::corpus::{read_jsonl, write_index, CorpusIndex, IndexOptions, Phrase, VocabularyIndex};
use qevo_core::eval::{evaluate_corpus, loss, LossParams};
use qevo_core::orchestrator::{compile_query, read_labels, Engine, Mode, RunConfig, RunOutcome};
use qevo_core::query::{normalize, parse, serialize, to_phrase_cnf, DEFAULT_CLAUSE_CAP};
use qevo_core::synthetic::write_bundle;

/// Exit status of a batch run that paused on a provider error.
pub const EXIT_PAUSED: i32 = 3;

/// Builds the index for `corpus` and writes the binary container to `out`.
pub fn index(corpus: &Path, out: &Path, min_doc_freq: u32) -> Result<String> {
    let docs = read_jsonl(corpus).with_context(|| format!("reading {}", corpus.display()))?;
    let index = CorpusIndex::build(docs, IndexOptions { min_doc_freq })?;
    let file = File::create(out).with_context(|| format!("creating {}", out.display()))?;
    write_index(BufWriter::new(file), index.vocab(), index.vectors())?;
    Ok(format!("{} documents, {} phrases -> {}", index.len(), index.vocab().len(), out.display()))
}

/// Scores `query` against a labeled corpus.
pub fn eval(corpus: &Path, labels: Option<&Path>, query: &str, params: &LossParams) -> Result<String> {
    let docs = read_jsonl(corpus).with_context(|| format!("reading {}", corpus.display()))?;
    let mut index = CorpusIndex::build(docs, IndexOptions::default())?;
    if let Some(path) = labels {
        for (id, label) in read_labels(path)? {
            index.set_label(&id, label)?;
        }
    }
    let genome = compile_query(query, index.vocab())?;
    let clauses = genome.decode(index.vocab().len())?;
    let counts = evaluate_corpus(&clauses, index.vectors(), &index.label_map())?;
    let (relevant, irrelevant) = (counts.labeled_relevant(), counts.labeled_irrelevant());
    if relevant == 0 || irrelevant == 0 {
        bail!("corpus needs both relevant and irrelevant labels ({relevant} relevant, {irrelevant} irrelevant)");
    }
    let value = loss(&counts, genome.len(), params)?;
    Ok(format!(
        "f_p {:.6}\nf_n {:.6}\nloss {:.9}\nf1 {:.6}\ntp {} fp {} tn {} fn {}\ngenome {:?}",
        counts.fp_rate().unwrap_or(0.0),
        counts.fn_rate().unwrap_or(0.0),
        value,
        counts.f1(),
        counts.tp,
        counts.fp,
        counts.tn,
        counts.fn_,
        genome.values()
    ))
}

/// Clause-structured form of `query`. Without a corpus the phrases of the
/// query itself serve as the vocabulary.
pub fn normalize_query(query: &str, corpus: Option<&Path>) -> Result<String> {
    let ast = parse(query)?;
    let vocab = match corpus {
        Some(path) => CorpusIndex::build(read_jsonl(path)?, IndexOptions::default())?.vocab().clone(),
        None => {
            let cnf = to_phrase_cnf(&ast, DEFAULT_CLAUSE_CAP)?;
            let mut phrases: Vec<Phrase> = Vec::new();
            for p in cnf.phrases() {
                if !phrases.contains(p) {
                    phrases.push(p.clone());
                }
            }
            VocabularyIndex::from_entries(phrases.into_iter().map(|p| (p, 0)).collect())?
        }
    };
    let clauses = normalize(&ast, &vocab)?;
    let text = serialize(&clauses, &vocab, usize::MAX)?;
    let mut out = if text.match_all { "(matches everything)".to_string() } else { text.text };
    if corpus.is_some() {
        out.push_str(&format!("\ngenome {:?}", clauses.encode().values()));
    }
    Ok(out)
}

/// Writes a synthetic corpus bundle with a ready-to-run config.
pub fn synth(out: &Path, docs: usize, hidden: usize, seed: u64) -> Result<String> {
    let bundle = write_bundle(out, docs, hidden, seed)?;
    Ok(format!("target query: {}\nconfig: {}", bundle.target, bundle.config.display()))
}

pub struct RunArgs {
    pub config: PathBuf,
    pub overrides: Vec<String>,
    pub resume: bool,
}

/// Runs to completion and returns the process exit status. Interactive
/// runs serve the control API until the engine stops.
pub fn run(args: &RunArgs) -> Result<i32> {
    let config = RunConfig::load(&args.config, &args.overrides)?;
    config.validate()?;
    let mode = config.mode;
    let listen = config.http_listen_address.clone();
    let mut engine = if args.resume { Engine::resume(config)? } else { Engine::new(config)? };
    info!(
        "corpus {} documents, vocabulary {} phrases, generation {}",
        engine.index().len(),
        engine.index().vocab().len(),
        engine.state().generation
    );
    let (outcome, engine) = match mode {
        Mode::Batch => (engine.run()?, engine),
        Mode::Interactive => serve(engine, &listen)?,
    };
    let best = engine.history().last();
    match best {
        Some(m) => println!(
            "generation {}  best loss {}  F1 {:.4}  tokens {}/{}\nbest query: {}",
            m.generation,
            m.best_loss.map_or("-".into(), |l| format!("{l:.6}")),
            m.best_f1,
            m.tokens_spent,
            m.tokens_total,
            m.best_query.text
        ),
        None => println!("no generations run"),
    }
    println!("checkpoint: {}", engine.checkpoint_path().display());
    Ok(match outcome {
        RunOutcome::Completed | RunOutcome::Stopped => 0,
        RunOutcome::Paused { reason } => {
            eprintln!("run paused: {reason}; continue with --resume");
            EXIT_PAUSED
        }
    })
}

fn serve(mut engine: Engine, listen: &str) -> Result<(RunOutcome, Engine)> {
    let ctl = engine.controller();
    let rt = tokio::runtime::Runtime::new()?;
    let listener = rt.block_on(tokio::net::TcpListener::bind(listen)).with_context(|| format!("binding {listen}"))?;
    info!("control API listening on http://{}", listener.local_addr()?);
    let (done_tx, done_rx) = tokio::sync::oneshot::channel::<()>();
    let worker = std::thread::spawn(move || {
        let outcome = engine.run();
        let _ = done_tx.send(());
        outcome.map(|o| (o, engine))
    });
    rt.block_on(async {
        axum::serve(listener, api::router(ctl))
            .with_graceful_shutdown(async {
                let _ = done_rx.await;
            })
            .await
    })?;
    let result = worker.join().map_err(|_| anyhow::anyhow!("engine thread panicked"))??;
    Ok(result)
}
