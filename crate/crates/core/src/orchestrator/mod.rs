//! Run lifecycle: configuration, the generation loop with its fetch
//! schedule, checkpoints, metrics, and the command queue used by the
//! control API.

mod config;
mod control;
mod engine;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CorpusError, CorpusIndex, Label, VocabularyIndex};
use crate::eval::{loss, ColumnEvaluator, ConfusionCounts, EvalError, LossParams};
use crate::ga::{Fitness, GaError, RunStatus};
use crate::query::{normalize, parse, serialize, ClauseQuery, Genome, QueryError};

pub use config::{apply_override, Mode, RunConfig, DEFAULT_BATCH_GENERATIONS};
pub use control::{Ack, Command, ControlError, Controller, RunView};
pub use engine::{Engine, FetchRecord, RunMeta, RunOutcome, CHECKPOINT_FILE, FETCHED_FILE, METRICS_FILE};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("{context}: {source}")]
    Query {
        context: String,
        #[source]
        source: QueryError,
    },
    #[error(transparent)]
    Ga(#[from] GaError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Loss of genomes against one labeled snapshot of the local database.
#[derive(Debug, Clone)]
pub struct Scorer {
    evaluator: ColumnEvaluator,
    params: LossParams,
}

impl Scorer {
    pub fn new(index: &CorpusIndex, params: LossParams) -> Self {
        Scorer { evaluator: ColumnEvaluator::from_index(index), params }
    }

    pub fn params(&self) -> &LossParams {
        &self.params
    }

    pub fn counts(&self, genome: &Genome) -> Result<ConfusionCounts, EvalError> {
        let query = genome.decode(self.evaluator.n_phrases()).map_err(|e| match e {
            QueryError::PhraseIdOutOfRange { id, len } => {
                EvalError::PhraseIdOutOfRange { id: u32::try_from(id).unwrap_or(u32::MAX), len }
            }
            other => unreachable!("decode only fails on range: {other}"),
        })?;
        self.evaluator.counts(&query)
    }
}

impl Fitness for Scorer {
    fn version(&self) -> u64 {
        self.evaluator.version()
    }

    fn loss(&self, genome: &Genome) -> Result<f64, EvalError> {
        loss(&self.counts(genome)?, genome.len(), &self.params)
    }
}

/// A query in both forms: clause JSON and the provider string.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryView {
    pub clauses: ClauseQuery,
    pub text: String,
    pub match_all: bool,
}

impl QueryView {
    pub fn of(genome: &Genome, vocab: &VocabularyIndex) -> Self {
        let clauses = genome.decode(vocab.len()).unwrap_or_default();
        if clauses.is_match_all() {
            return QueryView { clauses, text: String::new(), match_all: true };
        }
        let text = serialize(&clauses, vocab, usize::MAX).map(|s| s.text).unwrap_or_default();
        QueryView { clauses, text, match_all: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LengthStats {
    pub min: usize,
    pub mean: f64,
    pub max: usize,
}

/// Per-generation summary, also one row of `metrics.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSnapshot {
    pub generation: u64,
    pub status: RunStatus,
    #[serde(with = "crate::ga::loss_repr")]
    pub best_loss: Option<f64>,
    #[serde(with = "crate::ga::loss_repr")]
    pub median_loss: Option<f64>,
    pub best_query: QueryView,
    pub best_fp_rate: Option<f64>,
    pub best_fn_rate: Option<f64>,
    pub best_f1: f64,
    pub population_length: LengthStats,
    pub tokens_spent: u64,
    pub tokens_total: u64,
    pub corpus_size: usize,
    pub vocabulary_size: usize,
    pub labeled_relevant: usize,
    pub labeled_irrelevant: usize,
}

/// One row of the population listing served to the UI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationEntry {
    pub rank: usize,
    pub genome: Genome,
    pub query: QueryView,
    #[serde(with = "crate::ga::loss_repr")]
    pub loss: Option<f64>,
    pub fp_rate: Option<f64>,
    pub fn_rate: Option<f64>,
    pub length: usize,
    pub injected: bool,
}

/// Parses, normalizes against `vocab` and encodes one query string.
pub fn compile_query(text: &str, vocab: &VocabularyIndex) -> Result<Genome, QueryError> {
    Ok(normalize(&parse(text)?, vocab)?.encode())
}

/// Seed query file: one query per line, `#` starts a comment line.
pub fn read_seed_queries(path: &Path, vocab: &VocabularyIndex) -> Result<Vec<Genome>, RunError> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let genome = compile_query(line, vocab).map_err(|source| RunError::Query {
            context: format!("{} line {}", path.display(), n + 1),
            source,
        })?;
        out.push(genome);
    }
    Ok(out)
}

/// `id,label` CSV with a header row.
pub fn read_labels(path: &Path) -> Result<Vec<(String, Label)>, RunError> {
    #[derive(Deserialize)]
    struct Row {
        id: String,
        label: Label,
    }
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let row: Row = row?;
        out.push((row.id, row.label));
    }
    Ok(out)
}

/// Seeds first (truncated to `size`), then one-phrase genomes walking the
/// vocabulary from the most frequent phrase.
pub fn initial_population(seeds: Vec<Genome>, vocab_len: usize, size: usize) -> Result<Vec<Genome>, RunError> {
    let mut out: Vec<Genome> = seeds.into_iter().take(size).collect();
    if out.len() < size && vocab_len == 0 {
        return Err(RunError::Ga(GaError::EmptyVocabulary));
    }
    let mut k = 0usize;
    while out.len() < size {
        out.push(Genome(vec![(k % vocab_len) as i32 + 1]));
        k += 1;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_index, Document};

    fn index() -> CorpusIndex {
        let docs = vec![
            Document::new("1", "crash on the bridge").with_label(Label::Relevant),
            Document::new("2", "crash test dummy").with_label(Label::Irrelevant),
            Document::new("3", "bridge traffic").with_label(Label::Relevant),
            Document::new("4", "movie night").with_label(Label::Irrelevant),
            Document::new("5", "movie crash"),
        ];
        build_index(docs).unwrap()
    }

    #[test]
    fn scorer_matches_direct_loss() {
        let idx = index();
        let scorer = Scorer::new(&idx, LossParams::default());
        let g = compile_query("crash AND NOT movie", idx.vocab()).unwrap();
        let c = scorer.counts(&g).unwrap();
        assert_eq!((c.tp, c.fp, c.tn, c.fn_), (1, 1, 1, 1));
        let expected = crate::eval::loss_from_rates(0.5, 0.5, g.len(), &LossParams::default());
        assert_eq!(scorer.loss(&g).unwrap(), expected);
        assert!(matches!(scorer.loss(&Genome(vec![99])), Err(EvalError::PhraseIdOutOfRange { id: 98, .. })));
    }

    #[test]
    fn initial_population_fills_from_top_phrases() {
        let pop = initial_population(vec![Genome(vec![2, 0, -1])], 3, 5).unwrap();
        assert_eq!(pop, vec![Genome(vec![2, 0, -1]), Genome(vec![1]), Genome(vec![2]), Genome(vec![3]), Genome(vec![1])]);
        assert_eq!(initial_population(vec![Genome(vec![1]); 4], 3, 2).unwrap().len(), 2);
        assert!(initial_population(vec![], 0, 2).is_err());
    }

    #[test]
    fn seed_and_label_files() {
        let idx = index();
        let dir = tempfile::tempdir().unwrap();
        let seeds = dir.path().join("seeds.txt");
        std::fs::write(&seeds, "# seeds\ncrash OR bridge\n\n(movie)\n").unwrap();
        let got = read_seed_queries(&seeds, idx.vocab()).unwrap();
        assert_eq!(got.len(), 2);
        std::fs::write(&seeds, "crash\nzeppelin\n").unwrap();
        let err = read_seed_queries(&seeds, idx.vocab()).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");

        let labels = dir.path().join("labels.csv");
        std::fs::write(&labels, "id,label\n5, relevant\n1,irrelevant\n").unwrap();
        assert_eq!(
            read_labels(&labels).unwrap(),
            vec![("5".to_string(), Label::Relevant), ("1".to_string(), Label::Irrelevant)]
        );
        std::fs::write(&labels, "id,label\n5,maybe\n").unwrap();
        assert!(read_labels(&labels).is_err());
    }

    #[test]
    fn query_view_forms() {
        let idx = index();
        let g = compile_query("(crash OR bridge) AND NOT movie", idx.vocab()).unwrap();
        let v = QueryView::of(&g, idx.vocab());
        assert_eq!(v.text, "(crash OR bridge) AND (NOT movie)");
        assert!(!v.match_all);
        assert!(QueryView::of(&Genome(vec![0]), idx.vocab()).match_all);
    }
}
