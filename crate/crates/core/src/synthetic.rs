//! Labeled synthetic corpora built around a hidden target query.
//!
//! Every document is a handful of lexicon words, each followed by a token
//! unique to that document. The unique tokens never reach document
//! frequency 2, and neither does any n-gram containing one, so the
//! vocabulary of a large enough corpus is exactly the lexicon.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{write_jsonl, Document, Label};
use crate::orchestrator::{RunConfig, RunError};
use crate::provider::OracleLabeler;

const ONSETS: &[&str] = &["b", "d", "f", "g", "k", "l", "m", "p", "r", "s", "t", "v", "z"];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u"];
const CODAS: &[&str] = &["", "n", "r", "s", "k"];

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub n_docs: usize,
    pub lexicon_size: usize,
    /// Document frequency of the most common word; rank r gets
    /// `top_frequency * (r+1)^-zipf_exponent`.
    pub top_frequency: f64,
    pub zipf_exponent: f64,
    /// Lexicon ranks of the target's four words, in the order they fill
    /// `(A OR B) AND (C OR NOT D)`.
    pub target_ranks: [usize; 4],
    pub id_prefix: String,
    /// Stamp documents with `fetched_at = base + position`.
    pub timestamp_base: Option<i64>,
    /// Fixes the lexicon; corpora sharing it share a vocabulary and target.
    pub lexicon_seed: u64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_docs: 5000,
            lexicon_size: 500,
            top_frequency: 0.3,
            zipf_exponent: 0.6,
            target_ranks: [5, 9, 2, 1],
            id_prefix: "s".into(),
            timestamp_base: None,
            lexicon_seed: 1,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlantedCorpus {
    /// Lexicon in rank order.
    pub lexicon: Vec<String>,
    pub target: String,
    pub documents: Vec<Document>,
}

impl PlantedCorpus {
    pub fn relevant_count(&self) -> usize {
        self.documents.iter().filter(|d| d.label == Label::Relevant).count()
    }
}

/// `size` distinct pronounceable words, fixed by `size` and `seed`.
pub fn lexicon(size: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x1e71c0);
    let mut seen = BTreeSet::new();
    let mut words = Vec::with_capacity(size);
    let syllable = |rng: &mut ChaCha8Rng| {
        format!(
            "{}{}",
            ONSETS.choose(rng).expect("non-empty"),
            VOWELS.choose(rng).expect("non-empty")
        )
    };
    while words.len() < size {
        let n = rng.gen_range(2..=3);
        let mut w: String = (0..n).map(|_| syllable(&mut rng)).collect();
        w.push_str(CODAS.choose(&mut rng).expect("non-empty"));
        if seen.insert(w.clone()) {
            words.push(w);
        }
    }
    words
}

/// Generates the corpus, labeling each document by the target query.
pub fn planted_corpus(cfg: &SyntheticConfig) -> PlantedCorpus {
    assert!(cfg.lexicon_size >= 4, "lexicon must hold the four target words");
    assert!(cfg.target_ranks.iter().all(|&r| r < cfg.lexicon_size));
    let lexicon = lexicon(cfg.lexicon_size, cfg.lexicon_seed);
    let [a, b, c, d] = cfg.target_ranks.map(|r| lexicon[r].as_str());
    let target = format!("({a} OR {b}) AND ({c} OR NOT {d})");
    let oracle = OracleLabeler::from_query(&target).expect("generated target parses");

    let freq: Vec<f64> = (0..cfg.lexicon_size)
        .map(|r| (cfg.top_frequency * ((r + 1) as f64).powf(-cfg.zipf_exponent)).clamp(0.0, 1.0))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut bags: Vec<Vec<usize>> = (0..cfg.n_docs)
        .map(|_| (0..cfg.lexicon_size).filter(|&r| rng.gen_bool(freq[r])).collect())
        .collect();
    // top up rare words so each one makes the vocabulary
    if cfg.n_docs >= 2 {
        let mut df = vec![0usize; cfg.lexicon_size];
        for bag in &bags {
            for &r in bag {
                df[r] += 1;
            }
        }
        for (r, &n) in df.iter().enumerate() {
            for _ in n..2 {
                let bag = loop {
                    let bag = &mut bags[rng.gen_range(0..cfg.n_docs)];
                    if !bag.contains(&r) {
                        break bag;
                    }
                };
                bag.push(r);
            }
        }
    }
    let mut documents = Vec::with_capacity(cfg.n_docs);
    for (i, mut words) in bags.into_iter().enumerate() {
        if words.is_empty() {
            words.push(rng.gen_range(0..cfg.lexicon_size));
        }
        words.shuffle(&mut rng);
        let id = format!("{}{i:05}", cfg.id_prefix);
        let text = words
            .iter()
            .enumerate()
            .map(|(j, &r)| format!("{} {id}n{j}", lexicon[r]))
            .collect::<Vec<_>>()
            .join(" ");
        let mut doc = Document::new(id, text);
        doc.label = oracle.label_of(&doc);
        doc.fetched_at = cfg.timestamp_base.map(|t| t + i as i64);
        documents.push(doc);
    }
    PlantedCorpus { lexicon, target, documents }
}

/// Paths of a generated run directory.
#[derive(Debug, Clone)]
pub struct Bundle {
    pub corpus: PathBuf,
    pub hidden: PathBuf,
    pub seeds: PathBuf,
    pub config: PathBuf,
    pub target: String,
}

/// Writes a local corpus, a timestamped hidden corpus sharing its target,
/// a few seed queries and a `run.toml` that ties them together.
pub fn write_bundle(dir: &Path, n_docs: usize, n_hidden: usize, seed: u64) -> Result<Bundle, RunError> {
    std::fs::create_dir_all(dir)?;
    let local = planted_corpus(&SyntheticConfig { n_docs, lexicon_seed: seed, seed, ..SyntheticConfig::default() });
    let hidden = planted_corpus(&SyntheticConfig {
        n_docs: n_hidden,
        id_prefix: "h".into(),
        timestamp_base: Some(1_600_000_000),
        lexicon_seed: seed,
        seed: seed.wrapping_add(1),
        ..SyntheticConfig::default()
    });
    let corpus = dir.join("corpus.jsonl");
    let hidden_path = dir.join("hidden.jsonl");
    write_jsonl(&corpus, &local.documents)?;
    write_jsonl(&hidden_path, &hidden.documents)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let lex = &local.lexicon;
    let mut seeds_text = String::from("# starting queries, one per line\n");
    for _ in 0..4 {
        let a = lex.choose(&mut rng).expect("non-empty lexicon");
        let b = lex.choose(&mut rng).expect("non-empty lexicon");
        seeds_text.push_str(&format!("{a} OR {b}\n"));
    }
    let seeds = dir.join("seeds.txt");
    std::fs::write(&seeds, seeds_text)?;

    let mut cfg = RunConfig::new("corpus.jsonl", "run");
    cfg.hidden_corpus_path = Some("hidden.jsonl".into());
    cfg.seed_queries_path = Some("seeds.txt".into());
    cfg.oracle_query = Some(local.target.clone());
    cfg.max_generations = Some(200);
    cfg.budget = 10;
    cfg.ga.rng_seed = seed;
    let config = dir.join("run.toml");
    std::fs::write(&config, cfg.to_toml())?;
    Ok(Bundle { corpus, hidden: hidden_path, seeds, config, target: local.target })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_index, Phrase};

    #[test]
    fn vocabulary_is_the_lexicon() {
        let cfg = SyntheticConfig { n_docs: 300, ..SyntheticConfig::default() };
        let pc = planted_corpus(&cfg);
        let index = build_index(pc.documents.clone()).unwrap();
        let vocab: BTreeSet<String> = index.vocab().entries().iter().map(|(p, _)| p.joined()).collect();
        let lex: BTreeSet<String> = pc.lexicon.iter().cloned().collect();
        assert_eq!(vocab, lex);
        assert_eq!(index.vocab().len(), 500);
        assert!(index.vocab().entries().iter().all(|(p, _)| p.len() == 1));
    }

    #[test]
    fn labels_follow_the_target() {
        let pc = planted_corpus(&SyntheticConfig { n_docs: 400, ..SyntheticConfig::default() });
        let words: Vec<&str> = pc.target.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()).collect();
        let (a, b, c, d) = (words[0], words[2], words[4], words[7]);
        assert_eq!(pc.target, format!("({a} OR {b}) AND ({c} OR NOT {d})"));
        for doc in &pc.documents {
            let has = |w: &str| doc.phrases().contains(&Phrase::parse(w).unwrap());
            let expected = (has(a) || has(b)) && (has(c) || !has(d));
            assert_eq!(doc.label == Label::Relevant, expected, "{}", doc.id);
        }
        let rel = pc.relevant_count();
        assert!(rel > 20 && rel < 200, "{rel}");
    }

    #[test]
    fn deterministic_and_keyword_free() {
        let cfg = SyntheticConfig { n_docs: 50, ..SyntheticConfig::default() };
        assert_eq!(planted_corpus(&cfg).documents, planted_corpus(&cfg).documents);
        let other = planted_corpus(&SyntheticConfig { seed: 2, ..cfg.clone() });
        assert_eq!(other.target, planted_corpus(&cfg).target);
        assert_ne!(other.documents, planted_corpus(&cfg).documents);
        let lex = lexicon(2000, 3);
        assert_eq!(lex.iter().collect::<BTreeSet<_>>().len(), 2000);
        assert!(lex.iter().all(|w| !["and", "or", "not"].contains(&w.as_str())));
    }

    #[test]
    fn bundle_loads() {
        let dir = tempfile::tempdir().unwrap();
        let b = write_bundle(dir.path(), 300, 200, 4).unwrap();
        let cfg = RunConfig::load(&b.config, &[]).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.oracle_query.as_deref(), Some(b.target.as_str()));
        assert_eq!(cfg.checkpoint_dir, dir.path().join("run"));
        let hidden = crate::corpus::read_jsonl(&b.hidden).unwrap();
        assert_eq!(hidden.len(), 200);
        assert!(hidden.iter().all(|d| d.fetched_at.is_some() && d.id.starts_with('h')));
    }
}
