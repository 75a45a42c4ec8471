//! Population management: selection, breeding, injections and the pick of
//! the query sent to the remote provider.

mod checkpoint;
pub mod operators;

use std::cmp::Ordering;
use std::collections::VecDeque;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::VocabularyIndex;
use crate::eval::EvalError;
use crate::query::{serialize, Genome};

pub use checkpoint::{read_checkpoint, write_atomic, write_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use operators::PhraseSampler;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GaError {
    #[error("vocabulary is empty")]
    EmptyVocabulary,
    #[error("genome too short to swap")]
    GenomeTooShort,
    #[error("genome has no terms to negate")]
    NoTerms,
    #[error("no genome in the population serializes within the length limit")]
    NoServiceableQuery,
    #[error("run is not in the running state")]
    NotRunning,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Per-operator application probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OperatorRates {
    pub crossover: f64,
    pub swatch_insert: f64,
    pub phrase_add: f64,
    pub clause_add: f64,
    pub swap: f64,
    pub negate: f64,
    pub simplify: f64,
}

impl OperatorRates {
    pub fn zero() -> Self {
        OperatorRates { crossover: 0.0, swatch_insert: 0.0, phrase_add: 0.0, clause_add: 0.0, swap: 0.0, negate: 0.0, simplify: 0.0 }
    }

    fn all(&self) -> [(&'static str, f64); 7] {
        [
            ("crossover", self.crossover),
            ("swatch_insert", self.swatch_insert),
            ("phrase_add", self.phrase_add),
            ("clause_add", self.clause_add),
            ("swap", self.swap),
            ("negate", self.negate),
            ("simplify", self.simplify),
        ]
    }
}

impl Default for OperatorRates {
    fn default() -> Self {
        OperatorRates {
            crossover: 0.5,
            swatch_insert: 0.2,
            phrase_add: 0.5,
            clause_add: 0.2,
            swap: 0.2,
            negate: 0.3,
            simplify: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaConfig {
    pub population_size: usize,
    pub operator_rates: OperatorRates,
    pub tournament_size: usize,
    pub elitism: usize,
    /// Generations between provider fetches; 0 disables fetching.
    pub fetch_every: u64,
    /// Mean of the exponential part of the swap distance.
    pub swap_distance_mean: f64,
    /// Frequency bias of Phrase+; 0 is uniform.
    pub phrase_sample_gamma: f64,
    /// Relative weight of cut points at genome ends or next to separators.
    pub cut_boundary_weight: f64,
    pub max_genome_len: usize,
    /// Generations between checkpoints; 0 disables periodic checkpoints.
    pub checkpoint_every: u64,
    pub rng_seed: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            population_size: 200,
            operator_rates: OperatorRates::default(),
            tournament_size: 3,
            elitism: 2,
            fetch_every: 25,
            swap_distance_mean: 2.0,
            phrase_sample_gamma: 0.5,
            cut_boundary_weight: 4.0,
            max_genome_len: 256,
            checkpoint_every: 50,
            rng_seed: 0,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<(), GaError> {
        let bad = |m: String| Err(GaError::Config(m));
        if self.population_size < 2 {
            return bad("population_size must be at least 2".into());
        }
        for (name, rate) in self.operator_rates.all() {
            if !(0.0..=1.0).contains(&rate) {
                return bad(format!("operator rate {name} = {rate} is outside [0, 1]"));
            }
        }
        if self.tournament_size == 0 {
            return bad("tournament_size must be positive".into());
        }
        if self.elitism > self.population_size {
            return bad("elitism exceeds population_size".into());
        }
        if !(self.swap_distance_mean > 0.0 && self.swap_distance_mean.is_finite()) {
            return bad("swap_distance_mean must be positive".into());
        }
        if !(self.phrase_sample_gamma >= 0.0 && self.phrase_sample_gamma.is_finite()) {
            return bad("phrase_sample_gamma must be non-negative".into());
        }
        if !(self.cut_boundary_weight > 0.0 && self.cut_boundary_weight.is_finite()) {
            return bad("cut_boundary_weight must be positive".into());
        }
        if self.max_genome_len == 0 {
            return bad("max_genome_len must be positive".into());
        }
        Ok(())
    }
}

/// Scores genomes against some snapshot of the local database.
pub trait Fitness: Sync {
    /// Identifies the snapshot; cached losses from another version are stale.
    fn version(&self) -> u64;
    fn loss(&self, genome: &Genome) -> Result<f64, EvalError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub genome: Genome,
    #[serde(with = "loss_repr")]
    pub loss: Option<f64>,
    pub evaluated_against: u64,
    /// Entered through a human injection (kept while it survives unchanged).
    #[serde(default)]
    pub injected: bool,
}

impl Individual {
    pub fn new(genome: Genome) -> Self {
        Individual { genome, loss: None, evaluated_against: 0, injected: false }
    }

    pub fn loss_at(&self, version: u64) -> Option<f64> {
        self.loss.filter(|_| self.evaluated_against == version)
    }
}

/// JSON has no infinity; `+inf` is written as the string `"inf"`.
pub(crate) mod loss_repr {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            None => s.serialize_none(),
            Some(x) if x.is_finite() => s.serialize_f64(*x),
            Some(x) if *x > 0.0 => s.serialize_str("inf"),
            Some(_) => Err(serde::ser::Error::custom("loss must be finite or +inf")),
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        match Option::<Repr>::deserialize(d)? {
            None => Ok(None),
            Some(Repr::Num(x)) => Ok(Some(x)),
            Some(Repr::Str(s)) if s == "inf" => Ok(Some(f64::INFINITY)),
            Some(Repr::Str(s)) => Err(serde::de::Error::custom(format!("bad loss `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Running,
    Paused,
    Stopped,
}

#[derive(Debug, Clone)]
pub struct RunState {
    pub generation: u64,
    pub population: Vec<Individual>,
    pub status: RunStatus,
    pub pending_injections: VecDeque<Genome>,
    pub rng: ChaCha8Rng,
}

/// Lower loss first, then shorter genome, then smaller sequence. Unscored
/// individuals sort last.
pub fn rank_order(a: &Individual, b: &Individual) -> Ordering {
    let la = a.loss.unwrap_or(f64::INFINITY);
    let lb = b.loss.unwrap_or(f64::INFINITY);
    a.loss
        .is_none()
        .cmp(&b.loss.is_none())
        .then(la.total_cmp(&lb))
        .then(a.genome.len().cmp(&b.genome.len()))
        .then_with(|| a.genome.cmp(&b.genome))
}

impl RunState {
    pub fn new(config: &GaConfig, genomes: Vec<Genome>) -> Result<Self, GaError> {
        config.validate()?;
        if genomes.len() != config.population_size {
            return Err(GaError::Config(format!(
                "initial population has {} genomes, expected {}",
                genomes.len(),
                config.population_size
            )));
        }
        Ok(RunState {
            generation: 0,
            population: genomes.into_iter().map(Individual::new).collect(),
            status: RunStatus::Running,
            pending_injections: VecDeque::new(),
            rng: ChaCha8Rng::seed_from_u64(config.rng_seed),
        })
    }

    /// Population indices, best first.
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.population.len()).collect();
        idx.sort_by(|&a, &b| rank_order(&self.population[a], &self.population[b]));
        idx
    }

    pub fn ranked(&self) -> Vec<&Individual> {
        self.ranking().into_iter().map(|i| &self.population[i]).collect()
    }

    /// Scores every individual without a loss for `fitness.version()`.
    pub fn evaluate(&mut self, fitness: &impl Fitness) -> Result<(), GaError> {
        let version = fitness.version();
        self.population
            .par_iter_mut()
            .filter(|ind| ind.loss_at(version).is_none())
            .try_for_each(|ind| {
                ind.loss = Some(fitness.loss(&ind.genome)?);
                ind.evaluated_against = version;
                Ok::<(), EvalError>(())
            })?;
        Ok(())
    }

    pub fn inject(&mut self, genome: Genome) {
        self.pending_injections.push_back(genome);
    }

    fn tournament(&mut self, rank_of: &[usize], size: usize) -> usize {
        let n = self.population.len();
        let mut best = self.rng.gen_range(0..n);
        for _ in 1..size {
            let c = self.rng.gen_range(0..n);
            if rank_of[c] < rank_of[best] {
                best = c;
            }
        }
        best
    }

    fn breed(&mut self, p1: usize, p2: usize, config: &GaConfig, sampler: &PhraseSampler) -> Genome {
        let rates = &config.operator_rates;
        let (w, cap) = (config.cut_boundary_weight, config.max_genome_len);
        let a = self.population[p1].genome.clone();
        let b = &self.population[p2].genome;
        let rng = &mut self.rng;

        let r: f64 = rng.gen();
        let mut child = if r < rates.crossover {
            operators::crossover(&a, b, w, cap, rng)
        } else if r < rates.crossover + rates.swatch_insert {
            operators::swatch_insert(b, &a, w, cap, rng)
        } else {
            a
        };

        // Inapplicable operators (too short, no terms) leave the child as is.
        if rng.gen_bool(rates.phrase_add) {
            child = operators::phrase_add(&child, sampler, cap, rng).unwrap_or(child);
        }
        if rng.gen_bool(rates.clause_add) {
            child = operators::clause_add(&child, cap, rng);
        }
        if rng.gen_bool(rates.swap) {
            child = operators::swap(&child, config.swap_distance_mean, rng).unwrap_or(child);
        }
        if rng.gen_bool(rates.negate) {
            child = operators::negate(&child, rng).unwrap_or(child);
        }
        if rng.gen_bool(rates.simplify) {
            child = operators::simplify(&child);
        }
        child
    }
}

/// One generation: score, keep the elite, fill the rest by tournament
/// selection, recombination and mutation, score the newcomers, then let
/// pending injections replace the worst non-elite individuals.
///
/// All random draws happen here on the state's own generator; only scoring
/// runs in parallel, so results depend on the seed alone.
pub fn step_generation(
    state: &mut RunState,
    fitness: &impl Fitness,
    config: &GaConfig,
    sampler: &PhraseSampler,
) -> Result<(), GaError> {
    if state.status != RunStatus::Running {
        return Err(GaError::NotRunning);
    }
    state.evaluate(fitness)?;

    let ranking = state.ranking();
    let mut rank_of = vec![0usize; ranking.len()];
    for (r, &i) in ranking.iter().enumerate() {
        rank_of[i] = r;
    }

    let size = config.population_size;
    let elite = config.elitism.min(size);
    let mut next: Vec<Individual> = ranking.iter().take(elite).map(|&i| state.population[i].clone()).collect();
    while next.len() < size {
        let p1 = state.tournament(&rank_of, config.tournament_size);
        let p2 = state.tournament(&rank_of, config.tournament_size);
        let child = state.breed(p1, p2, config, sampler);
        next.push(Individual::new(child));
    }
    state.population = next;
    state.evaluate(fitness)?;

    if !state.pending_injections.is_empty() {
        let mut order: Vec<usize> = (elite..size).collect();
        order.sort_by(|&a, &b| rank_order(&state.population[b], &state.population[a]));
        for slot in order {
            let Some(genome) = state.pending_injections.pop_front() else { break };
            state.population[slot] = Individual { injected: true, ..Individual::new(genome) };
        }
        state.evaluate(fitness)?;
    }

    state.generation += 1;
    Ok(())
}

/// The best-ranked genome that renders to a non-empty provider query within
/// `limit` characters.
pub fn select_fetch_candidate(state: &RunState, vocab: &VocabularyIndex, limit: usize) -> Result<Genome, GaError> {
    for ind in state.ranked() {
        if ind.loss.is_none() {
            continue;
        }
        let Ok(query) = ind.genome.decode(vocab.len()) else { continue };
        match serialize(&query, vocab, limit) {
            Ok(s) if !s.match_all => return Ok(ind.genome.clone()),
            _ => continue,
        }
    }
    Err(GaError::NoServiceableQuery)
}
