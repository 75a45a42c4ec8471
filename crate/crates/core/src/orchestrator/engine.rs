use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::sync::mpsc::{self, TryRecvError};
use std::sync::{Arc, PoisonError, RwLock};

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::corpus::{read_jsonl, CorpusIndex, Document, IndexOptions, Label};
use crate::eval::ConfusionCounts;
use crate::ga::{
    read_checkpoint, select_fetch_candidate, step_generation, write_checkpoint, Checkpoint, Fitness, PhraseSampler,
    RunState, RunStatus,
};
use crate::provider::{
    ingest_response, InteractiveLabeler, LabelQueue, Labeler, NullLabeler, OracleLabeler, PendingLabel,
    ProviderRequest, SearchProvider, SimulatedProvider, TokenBudget,
};
use crate::query::{Genome, DEFAULT_LENGTH_LIMIT};

use super::control::Envelope;
use super::{
    initial_population, read_labels, read_seed_queries, Command, Controller, LengthStats, MetricsSnapshot, Mode,
    PopulationEntry, QueryView, RunConfig, RunError, RunView, Scorer,
};

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const METRICS_FILE: &str = "metrics.csv";
/// Every document appended by a fetch, in ingestion order.
pub const FETCHED_FILE: &str = "fetched.jsonl";

const METRICS_HEADER: [&str; 15] = [
    "generation",
    "status",
    "best_loss",
    "median_loss",
    "best_fp_rate",
    "best_fn_rate",
    "best_f1",
    "min_length",
    "mean_length",
    "max_length",
    "tokens_spent",
    "corpus_size",
    "labeled_relevant",
    "labeled_irrelevant",
    "best_query",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FetchRecord {
    /// Generation boundary at which the fetch ran.
    pub generation: u64,
    pub query: String,
    pub tokens_charged: u64,
    /// Ids the provider returned, new or not.
    pub returned: Vec<String>,
    /// How many of them were appended to the local corpus.
    pub appended: usize,
    pub exhausted: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Run-level state stored next to the population in each checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub loss: crate::eval::LossParams,
    pub budget: TokenBudget,
    pub corpus_size: usize,
    pub fetches: Vec<FetchRecord>,
    /// Labels set through the control API.
    pub label_overrides: BTreeMap<String, Label>,
    pub history: Vec<MetricsSnapshot>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunOutcome {
    /// Generation limit reached.
    Completed,
    Stopped,
    /// Batch run halted on a provider error; resumable from the checkpoint.
    Paused { reason: String },
}

struct ControlPort {
    rx: mpsc::Receiver<Envelope>,
    view: Arc<RwLock<RunView>>,
}

pub struct Engine {
    config: RunConfig,
    index: CorpusIndex,
    state: RunState,
    scorer: Scorer,
    sampler: PhraseSampler,
    provider: Option<Box<dyn SearchProvider>>,
    labeler: Box<dyn Labeler>,
    labels: LabelQueue,
    meta: RunMeta,
    control: Option<ControlPort>,
    metrics: Option<csv::Writer<File>>,
    last_error: Option<String>,
}

fn load_index(config: &RunConfig) -> Result<CorpusIndex, RunError> {
    let docs = read_jsonl(&config.corpus_path)?;
    let mut index = CorpusIndex::build(docs, IndexOptions::default())?;
    if let Some(path) = &config.labels_path {
        for (id, label) in read_labels(path)? {
            index.set_label(&id, label)?;
        }
    }
    Ok(index)
}

fn load_provider(config: &RunConfig) -> Result<Option<Box<dyn SearchProvider>>, RunError> {
    match &config.hidden_corpus_path {
        Some(path) => Ok(Some(Box::new(SimulatedProvider::new(read_jsonl(path)?)?))),
        None => Ok(None),
    }
}

fn sampler_for(index: &CorpusIndex, gamma: f64) -> Result<PhraseSampler, RunError> {
    if index.vocab().is_empty() {
        return Err(RunError::Ga(crate::ga::GaError::EmptyVocabulary));
    }
    Ok(PhraseSampler::new(index.vocab().len(), gamma))
}

impl Engine {
    /// Fresh run from the files named in `config`.
    pub fn new(config: RunConfig) -> Result<Self, RunError> {
        config.validate()?;
        let index = load_index(&config)?;
        let seeds = match &config.seed_queries_path {
            Some(p) => read_seed_queries(p, index.vocab())?,
            None => Vec::new(),
        };
        let provider = load_provider(&config)?;
        Self::build(config, index, seeds, provider)
    }

    /// Fresh run over an already built index.
    pub fn build(
        config: RunConfig,
        index: CorpusIndex,
        seeds: Vec<Genome>,
        provider: Option<Box<dyn SearchProvider>>,
    ) -> Result<Self, RunError> {
        config.ga.validate()?;
        if seeds.len() > config.ga.population_size {
            warn!("{} seed queries for a population of {}; extra seeds dropped", seeds.len(), config.ga.population_size);
        }
        let genomes = initial_population(seeds, index.vocab().len(), config.ga.population_size)?;
        let state = RunState::new(&config.ga, genomes)?;
        let meta = RunMeta {
            loss: config.loss,
            budget: TokenBudget::new(config.budget),
            corpus_size: index.len(),
            fetches: Vec::new(),
            label_overrides: BTreeMap::new(),
            history: Vec::new(),
        };
        std::fs::create_dir_all(&config.checkpoint_dir)?;
        File::create(config.checkpoint_dir.join(FETCHED_FILE))?;
        let metrics = Self::open_metrics(&config, true)?;
        Self::assemble(config, index, state, meta, provider, metrics)
    }

    /// Continues the run checkpointed in `config.checkpoint_dir`. The GA
    /// settings stored in the checkpoint win over those in `config`.
    pub fn resume(mut config: RunConfig) -> Result<Self, RunError> {
        config.validate()?;
        let path = config.checkpoint_dir.join(CHECKPOINT_FILE);
        let cp: Checkpoint<RunMeta> =
            read_checkpoint(&path).map_err(|e| RunError::Checkpoint(format!("{}: {e}", path.display())))?;
        if cp.config != config.ga {
            warn!("using GA settings from the checkpoint, not the config file");
        }
        config.ga = cp.config.clone();
        config.loss = cp.run.loss;

        let mut index = load_index(&config)?;
        let seed_len = index.len();
        let mut provider = load_provider(&config)?;
        let mut fetched = read_jsonl(config.checkpoint_dir.join(FETCHED_FILE))?.into_iter();
        for rec in &cp.run.fetches {
            let batch: Vec<Document> = fetched.by_ref().take(rec.appended).collect();
            if batch.len() != rec.appended {
                return Err(RunError::Checkpoint(format!("{FETCHED_FILE} is shorter than the fetch log")));
            }
            if !batch.is_empty() {
                index.append_documents(batch)?;
            }
            if let Some(p) = provider.as_mut() {
                p.mark_returned(&rec.returned);
            }
        }
        // appends past the checkpoint are dropped so the file matches the log
        crate::corpus::write_jsonl(config.checkpoint_dir.join(FETCHED_FILE), &index.documents()[seed_len..])?;
        for (id, label) in &cp.run.label_overrides {
            index.set_label(id, *label)?;
        }
        if index.len() != cp.run.corpus_size {
            return Err(RunError::Checkpoint(format!(
                "replayed corpus has {} documents, checkpoint expects {}",
                index.len(),
                cp.run.corpus_size
            )));
        }
        let mut state = cp.restore();
        state.status = RunStatus::Running;
        let metrics = Self::open_metrics(&config, false)?;
        let engine = Self::assemble(config, index, state, cp.run, provider, metrics)?;
        if engine.config.mode == Mode::Interactive && engine.config.oracle_query.is_none() {
            let pending: Vec<PendingLabel> = engine.index.documents()[seed_len..]
                .iter()
                .filter(|d| d.label == Label::Unlabeled)
                .map(|d| PendingLabel { id: d.id.clone(), text: d.text.clone() })
                .collect();
            engine.labels.extend(pending);
        }
        Ok(engine)
    }

    fn assemble(
        config: RunConfig,
        index: CorpusIndex,
        state: RunState,
        meta: RunMeta,
        provider: Option<Box<dyn SearchProvider>>,
        metrics: csv::Writer<File>,
    ) -> Result<Self, RunError> {
        let labels = LabelQueue::default();
        let labeler: Box<dyn Labeler> = match (&config.oracle_query, config.mode) {
            (Some(q), _) => Box::new(
                OracleLabeler::from_query(q)
                    .map_err(|source| RunError::Query { context: "oracle_query".into(), source })?,
            ),
            (None, Mode::Interactive) => Box::new(InteractiveLabeler::new(labels.clone())),
            (None, Mode::Batch) => Box::new(NullLabeler),
        };
        let scorer = Scorer::new(&index, meta.loss);
        let sampler = sampler_for(&index, config.ga.phrase_sample_gamma)?;
        Ok(Engine {
            config,
            index,
            state,
            scorer,
            sampler,
            provider,
            labeler,
            labels,
            meta,
            control: None,
            metrics: Some(metrics),
            last_error: None,
        })
    }

    fn open_metrics(config: &RunConfig, fresh: bool) -> Result<csv::Writer<File>, RunError> {
        let path = config.checkpoint_dir.join(METRICS_FILE);
        let write_header = fresh || !path.exists();
        let file = OpenOptions::new().create(true).write(true).append(!fresh).truncate(fresh).open(&path)?;
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
        if write_header {
            w.write_record(METRICS_HEADER)?;
            w.flush()?;
        }
        Ok(w)
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn index(&self) -> &CorpusIndex {
        &self.index
    }

    pub fn state(&self) -> &RunState {
        &self.state
    }

    pub fn meta(&self) -> &RunMeta {
        &self.meta
    }

    pub fn budget(&self) -> TokenBudget {
        self.meta.budget
    }

    pub fn history(&self) -> &[MetricsSnapshot] {
        &self.meta.history
    }

    pub fn label_queue(&self) -> LabelQueue {
        self.labels.clone()
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.config.checkpoint_dir.join(CHECKPOINT_FILE)
    }

    /// Opens the command queue. Commands are applied between generations.
    pub fn controller(&mut self) -> Controller {
        let (tx, rx) = mpsc::channel();
        let view = Arc::new(RwLock::new(self.view()));
        self.control = Some(ControlPort { rx, view: Arc::clone(&view) });
        Controller::new(tx, view, self.labels.clone())
    }

    /// Rebuilds the evaluator and phrase sampler after the index changed.
    fn refresh_scorer(&mut self) -> Result<(), RunError> {
        if self.scorer.version() != self.index.version() {
            self.scorer = Scorer::new(&self.index, self.meta.loss);
        }
        if self.sampler.vocab_len() != self.index.vocab().len() {
            self.sampler = sampler_for(&self.index, self.config.ga.phrase_sample_gamma)?;
        }
        Ok(())
    }

    pub fn scorer(&mut self) -> Result<&Scorer, RunError> {
        self.refresh_scorer()?;
        Ok(&self.scorer)
    }

    fn fetch_due(&self) -> bool {
        let g = self.state.generation;
        let every = self.config.ga.fetch_every;
        every > 0 && g > 0 && g % every == 0 && self.meta.fetches.last().map(|f| f.generation) != Some(g)
    }

    /// Sends the best serviceable query to the provider and ingests the
    /// result. Provider failures pause the run.
    fn fetch(&mut self) -> Result<(), RunError> {
        let g = self.state.generation;
        let Some(provider) = self.provider.as_mut() else {
            return Ok(());
        };
        let tokens = self.config.tokens_per_fetch;
        if !self.meta.budget.can_afford(tokens) {
            warn!(
                "generation {g}: fetch skipped, budget has {} of {} tokens left",
                self.meta.budget.remaining(),
                self.meta.budget.total
            );
            return Ok(());
        }
        let genome = match select_fetch_candidate(&self.state, self.index.vocab(), DEFAULT_LENGTH_LIMIT) {
            Ok(g) => g,
            Err(e) => {
                warn!("generation {g}: fetch skipped, {e}");
                return Ok(());
            }
        };
        let query = QueryView::of(&genome, self.index.vocab()).text;
        let request = ProviderRequest::new(query.clone(), tokens);
        let mut record = FetchRecord {
            generation: g,
            query,
            tokens_charged: 0,
            returned: Vec::new(),
            appended: 0,
            exhausted: false,
            error: None,
        };
        match provider.fetch(&request, &mut self.meta.budget) {
            Ok(response) => {
                let before = self.index.len();
                let appended = ingest_response(&response, &mut self.index, self.labeler.as_mut())?;
                let mut out = BufWriter::new(
                    OpenOptions::new().append(true).create(true).open(self.config.checkpoint_dir.join(FETCHED_FILE))?,
                );
                for doc in &self.index.documents()[before..] {
                    serde_json::to_writer(&mut out, doc).map_err(std::io::Error::from)?;
                    out.write_all(b"\n")?;
                }
                out.flush()?;
                info!(
                    "generation {g}: fetched {} documents ({appended} new) for {} token(s): {}",
                    response.documents.len(),
                    response.tokens_charged,
                    request.content_query
                );
                record.tokens_charged = response.tokens_charged;
                record.returned = response.documents.iter().map(|d| d.id.clone()).collect();
                record.appended = appended;
                record.exhausted = response.exhausted;
                self.meta.corpus_size = self.index.len();
                self.meta.fetches.push(record);
            }
            Err(e) => {
                warn!("generation {g}: provider error, pausing: {e}");
                record.error = Some(e.to_string());
                self.meta.fetches.push(record);
                self.last_error = Some(e.to_string());
                self.state.status = RunStatus::Paused;
                self.checkpoint()?;
            }
        }
        Ok(())
    }

    /// One generation boundary: a scheduled fetch if due, then breeding.
    /// Returns without stepping if the fetch paused the run.
    pub fn step(&mut self) -> Result<(), RunError> {
        if self.fetch_due() {
            self.fetch()?;
            if self.state.status != RunStatus::Running {
                return Ok(());
            }
        }
        self.refresh_scorer()?;
        step_generation(&mut self.state, &self.scorer, &self.config.ga, &self.sampler)?;
        let snap = self.snapshot()?;
        self.write_metrics(&snap)?;
        self.meta.history.push(snap);
        let every = self.config.ga.checkpoint_every;
        if every > 0 && self.state.generation % every == 0 {
            self.checkpoint()?;
        }
        Ok(())
    }

    fn best_counts(&self) -> Result<(usize, Option<ConfusionCounts>), RunError> {
        let best = self.state.ranking()[0];
        let genome = &self.state.population[best].genome;
        Ok((best, Some(self.scorer.counts(genome)?)))
    }

    /// Metrics for the current population (which must be evaluated).
    pub fn snapshot(&self) -> Result<MetricsSnapshot, RunError> {
        let pop = &self.state.population;
        let (best, counts) = self.best_counts()?;
        let mut losses: Vec<f64> = pop.iter().filter_map(|i| i.loss).collect();
        losses.sort_by(f64::total_cmp);
        let median = (!losses.is_empty()).then(|| {
            let n = losses.len();
            if n % 2 == 1 {
                losses[n / 2]
            } else {
                (losses[n / 2 - 1] + losses[n / 2]) / 2.0
            }
        });
        let lens: Vec<usize> = pop.iter().map(|i| i.genome.len()).collect();
        let (relevant, irrelevant) = self.index.labeled_counts();
        Ok(MetricsSnapshot {
            generation: self.state.generation,
            status: self.state.status,
            best_loss: pop[best].loss,
            median_loss: median,
            best_query: QueryView::of(&pop[best].genome, self.index.vocab()),
            best_fp_rate: counts.and_then(|c| c.fp_rate()),
            best_fn_rate: counts.and_then(|c| c.fn_rate()),
            best_f1: counts.map_or(0.0, |c| c.f1()),
            population_length: LengthStats {
                min: lens.iter().copied().min().unwrap_or(0),
                mean: lens.iter().sum::<usize>() as f64 / lens.len().max(1) as f64,
                max: lens.iter().copied().max().unwrap_or(0),
            },
            tokens_spent: self.meta.budget.spent,
            tokens_total: self.meta.budget.total,
            corpus_size: self.index.len(),
            vocabulary_size: self.index.vocab().len(),
            labeled_relevant: relevant,
            labeled_irrelevant: irrelevant,
        })
    }

    fn write_metrics(&mut self, s: &MetricsSnapshot) -> Result<(), RunError> {
        let Some(w) = self.metrics.as_mut() else { return Ok(()) };
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let status = serde_json::to_value(s.status).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
        w.write_record([
            s.generation.to_string(),
            status,
            opt(s.best_loss),
            opt(s.median_loss),
            opt(s.best_fp_rate),
            opt(s.best_fn_rate),
            s.best_f1.to_string(),
            s.population_length.min.to_string(),
            s.population_length.mean.to_string(),
            s.population_length.max.to_string(),
            s.tokens_spent.to_string(),
            s.corpus_size.to_string(),
            s.labeled_relevant.to_string(),
            s.labeled_irrelevant.to_string(),
            s.best_query.text.clone(),
        ])?;
        w.flush()?;
        Ok(())
    }

    pub fn checkpoint(&self) -> Result<(), RunError> {
        let cp = Checkpoint::capture(&self.state, &self.config.ga, self.meta.clone());
        write_checkpoint(&self.checkpoint_path(), &cp)?;
        Ok(())
    }

    fn population_entries(&self) -> Vec<PopulationEntry> {
        let vocab = self.index.vocab();
        self.state
            .ranked()
            .into_iter()
            .enumerate()
            .map(|(rank, ind)| {
                let counts = self.scorer.counts(&ind.genome).ok();
                PopulationEntry {
                    rank,
                    genome: ind.genome.clone(),
                    query: QueryView::of(&ind.genome, vocab),
                    loss: ind.loss,
                    fp_rate: counts.and_then(|c| c.fp_rate()),
                    fn_rate: counts.and_then(|c| c.fn_rate()),
                    length: ind.genome.len(),
                    injected: ind.injected,
                }
            })
            .collect()
    }

    fn view(&self) -> RunView {
        RunView {
            status: self.state.status,
            snapshot: self.snapshot().ok(),
            history: self.meta.history.clone(),
            population: self.population_entries(),
            last_error: self.last_error.clone(),
            vocab: Arc::new(self.index.vocab().clone()),
            max_genome_len: self.config.ga.max_genome_len,
        }
    }

    fn publish(&self) {
        if let Some(port) = &self.control {
            let view = self.view();
            *port.view.write().unwrap_or_else(PoisonError::into_inner) = view;
        }
    }

    fn apply(&mut self, command: Command) -> Result<(), RunError> {
        match command {
            Command::Pause => {
                if self.state.status == RunStatus::Running {
                    self.state.status = RunStatus::Paused;
                    self.checkpoint()?;
                }
            }
            Command::Resume => {
                if self.state.status == RunStatus::Paused {
                    self.state.status = RunStatus::Running;
                    self.last_error = None;
                }
            }
            Command::Stop => self.state.status = RunStatus::Stopped,
            Command::Inject(genomes) => {
                for g in genomes {
                    self.state.inject(g);
                }
            }
            Command::Label { id, label } => {
                self.index.set_label(&id, label)?;
                self.meta.label_overrides.insert(id, label);
            }
        }
        Ok(())
    }

    /// Applies queued commands; blocks while paused. Returns after any
    /// command changed what the view shows.
    fn handle_commands(&mut self) -> Result<(), RunError> {
        loop {
            let Some(port) = &self.control else { return Ok(()) };
            let envelope = if self.state.status == RunStatus::Paused {
                match port.rx.recv() {
                    Ok(e) => e,
                    Err(_) => {
                        self.state.status = RunStatus::Stopped;
                        return Ok(());
                    }
                }
            } else {
                match port.rx.try_recv() {
                    Ok(e) => e,
                    Err(TryRecvError::Empty) => return Ok(()),
                    Err(TryRecvError::Disconnected) => {
                        self.control = None;
                        return Ok(());
                    }
                }
            };
            self.apply(envelope.command)?;
            self.refresh_scorer()?;
            if self.state.population.iter().any(|i| i.loss_at(self.scorer.version()).is_none()) {
                self.state.evaluate(&self.scorer)?;
            }
            self.publish();
            let _ = envelope.ack.send(());
            if self.state.status == RunStatus::Stopped {
                return Ok(());
            }
        }
    }

    /// Runs until the generation limit, a stop command, or (batch only) a
    /// provider error. Writes a final checkpoint in every case.
    pub fn run(&mut self) -> Result<RunOutcome, RunError> {
        self.refresh_scorer()?;
        self.state.evaluate(&self.scorer)?;
        self.publish();
        let limit = self.config.generation_limit();
        let outcome = loop {
            self.handle_commands()?;
            match self.state.status {
                RunStatus::Stopped => break RunOutcome::Stopped,
                RunStatus::Paused if self.control.is_none() => {
                    break RunOutcome::Paused { reason: self.last_error.clone().unwrap_or_else(|| "paused".into()) }
                }
                RunStatus::Paused => continue,
                RunStatus::Running => {}
            }
            if limit.is_some_and(|l| self.state.generation >= l) {
                break RunOutcome::Completed;
            }
            self.step()?;
            if let Some(every) = self.config.pause_every {
                if self.control.is_some() && self.state.status == RunStatus::Running && self.state.generation % every == 0 {
                    info!("generation {}: scheduled pause", self.state.generation);
                    self.state.status = RunStatus::Paused;
                    self.checkpoint()?;
                }
            }
            self.publish();
        };
        if outcome == RunOutcome::Completed && self.control.is_some() {
            self.state.status = RunStatus::Stopped;
        }
        self.checkpoint()?;
        self.publish();
        Ok(outcome)
    }
}
