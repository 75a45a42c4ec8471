use std::collections::{BTreeSet, HashMap};

use super::{CorpusError, Document, Label, Phrase};

/// Frequency-ordered phrase list with its inverse mapping.
///
/// Ids are 0-based. At build time a lower id never has a lower document
/// frequency; phrases appended later take the next free ids, so ordering is
/// only guaranteed for the initially built prefix.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VocabularyIndex {
    entries: Vec<(Phrase, u32)>,
    ids: HashMap<Phrase, u32>,
}

impl VocabularyIndex {
    /// Rebuilds the inverse map. Fails on a repeated phrase.
    pub fn from_entries(entries: Vec<(Phrase, u32)>) -> Result<Self, CorpusError> {
        let mut ids = HashMap::with_capacity(entries.len());
        for (i, (phrase, _)) in entries.iter().enumerate() {
            if ids.insert(phrase.clone(), i as u32).is_some() {
                return Err(CorpusError::Format(format!("duplicate vocabulary phrase `{phrase}`")));
            }
        }
        Ok(VocabularyIndex { entries, ids })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn id(&self, phrase: &Phrase) -> Option<u32> {
        self.ids.get(phrase).copied()
    }

    pub fn phrase(&self, id: u32) -> Option<&Phrase> {
        self.entries.get(id as usize).map(|(p, _)| p)
    }

    pub fn frequency(&self, id: u32) -> Option<u32> {
        self.entries.get(id as usize).map(|&(_, f)| f)
    }

    pub fn entries(&self) -> &[(Phrase, u32)] {
        &self.entries
    }

    fn push(&mut self, phrase: Phrase, freq: u32) -> u32 {
        let id = self.entries.len() as u32;
        self.ids.insert(phrase.clone(), id);
        self.entries.push((phrase, freq));
        id
    }
}

/// Presence bitmap of one document over the vocabulary, packed into `u64`
/// words little-end first: bit `i` lives in word `i / 64` at position `i % 64`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocBitVector {
    doc_id: String,
    words: Vec<u64>,
    bit_length: usize,
}

pub(crate) fn word_count(bits: usize) -> usize {
    bits.div_ceil(64)
}

impl DocBitVector {
    pub fn new(doc_id: impl Into<String>, bit_length: usize) -> Self {
        DocBitVector { doc_id: doc_id.into(), words: vec![0; word_count(bit_length)], bit_length }
    }

    /// Checks the word count and that no bit at or beyond `bit_length` is set.
    pub fn from_words(doc_id: impl Into<String>, words: Vec<u64>, bit_length: usize) -> Result<Self, CorpusError> {
        let doc_id = doc_id.into();
        if words.len() != word_count(bit_length) {
            return Err(CorpusError::Format(format!(
                "vector `{doc_id}` has {} words, expected {}",
                words.len(),
                word_count(bit_length)
            )));
        }
        let tail = bit_length % 64;
        if tail != 0 && words.last().is_some_and(|w| w >> tail != 0) {
            return Err(CorpusError::Format(format!("vector `{doc_id}` has bits past its length")));
        }
        Ok(DocBitVector { doc_id, words, bit_length })
    }

    pub fn doc_id(&self) -> &str {
        &self.doc_id
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn bit_length(&self) -> usize {
        self.bit_length
    }

    /// # Panics
    /// If `i >= bit_length`.
    #[inline]
    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.bit_length, "bit {i} out of range {}", self.bit_length);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize) {
        assert!(i < self.bit_length, "bit {i} out of range {}", self.bit_length);
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn count_ones(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    fn grow(&mut self, bit_length: usize) {
        debug_assert!(bit_length >= self.bit_length);
        self.words.resize(word_count(bit_length), 0);
        self.bit_length = bit_length;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IndexOptions {
    /// A phrase enters the vocabulary once this many documents contain it.
    pub min_doc_freq: u32,
}

impl Default for IndexOptions {
    fn default() -> Self {
        IndexOptions { min_doc_freq: 2 }
    }
}

/// The local document database: vocabulary, presence vectors and the
/// documents themselves (for labels and provenance).
///
/// `version` changes on every mutation, so cached fitness values can tell
/// which snapshot they were computed against.
#[derive(Debug, Clone)]
pub struct CorpusIndex {
    options: IndexOptions,
    vocab: VocabularyIndex,
    vectors: Vec<DocBitVector>,
    documents: Vec<Document>,
    positions: HashMap<String, usize>,
    // n-grams still below the frequency threshold, with the documents holding them
    pending: HashMap<Phrase, Vec<usize>>,
    version: u64,
}

pub fn build_index(corpus: Vec<Document>) -> Result<CorpusIndex, CorpusError> {
    CorpusIndex::build(corpus, IndexOptions::default())
}

fn frequency_order(a: &(Phrase, Vec<usize>), b: &(Phrase, Vec<usize>)) -> std::cmp::Ordering {
    b.1.len().cmp(&a.1.len()).then_with(|| a.0.joined().cmp(&b.0.joined()))
}

impl CorpusIndex {
    pub fn build(corpus: Vec<Document>, options: IndexOptions) -> Result<Self, CorpusError> {
        if corpus.is_empty() {
            return Err(CorpusError::EmptyCorpus);
        }
        let mut index = CorpusIndex {
            options,
            vocab: VocabularyIndex::default(),
            vectors: Vec::new(),
            documents: Vec::new(),
            positions: HashMap::new(),
            pending: HashMap::new(),
            version: 1,
        };
        index.ingest(corpus)?;
        index.version = 1;
        Ok(index)
    }

    /// Adds documents without disturbing existing phrase ids. N-grams that
    /// reach the frequency threshold (old and new documents counted together)
    /// get the next free ids; existing vectors grow with zero bits and gain
    /// bits for the newly admitted phrases they contain.
    pub fn append_documents(&mut self, docs: Vec<Document>) -> Result<(), CorpusError> {
        self.ingest(docs)
    }

    fn ingest(&mut self, docs: Vec<Document>) -> Result<(), CorpusError> {
        let mut seen = BTreeSet::new();
        for doc in &docs {
            doc.validate()?;
            if self.positions.contains_key(&doc.id) || !seen.insert(doc.id.as_str()) {
                return Err(CorpusError::DuplicateDocumentId(doc.id.clone()));
            }
        }

        let first_new = self.documents.len();
        let mut known_hits: Vec<Vec<u32>> = Vec::with_capacity(docs.len());
        let mut touched: BTreeSet<Phrase> = BTreeSet::new();
        for (offset, doc) in docs.iter().enumerate() {
            let pos = first_new + offset;
            let mut hits = Vec::new();
            for phrase in doc.phrases() {
                match self.vocab.id(&phrase) {
                    Some(id) => {
                        self.vocab.entries[id as usize].1 += 1;
                        hits.push(id);
                    }
                    None => {
                        self.pending.entry(phrase.clone()).or_default().push(pos);
                        touched.insert(phrase);
                    }
                }
            }
            known_hits.push(hits);
        }

        let threshold = self.options.min_doc_freq as usize;
        let mut admitted: Vec<(Phrase, Vec<usize>)> = Vec::new();
        for p in touched {
            if self.pending[&p].len() >= threshold {
                let holders = self.pending.remove(&p).unwrap_or_default();
                admitted.push((p, holders));
            }
        }
        admitted.sort_by(frequency_order);

        let mut new_bits: Vec<(u32, Vec<usize>)> = Vec::with_capacity(admitted.len());
        for (phrase, holders) in admitted {
            let id = self.vocab.push(phrase, holders.len() as u32);
            new_bits.push((id, holders));
        }

        let n = self.vocab.len();
        for v in &mut self.vectors {
            v.grow(n);
        }
        for (doc, hits) in docs.iter().zip(&known_hits) {
            let mut v = DocBitVector::new(doc.id.clone(), n);
            for &id in hits {
                v.set(id as usize);
            }
            self.vectors.push(v);
        }
        for (id, holders) in new_bits {
            for pos in holders {
                self.vectors[pos].set(id as usize);
            }
        }
        for (offset, doc) in docs.into_iter().enumerate() {
            self.positions.insert(doc.id.clone(), first_new + offset);
            self.documents.push(doc);
        }
        self.version += 1;
        Ok(())
    }

    pub fn set_label(&mut self, doc_id: &str, label: Label) -> Result<(), CorpusError> {
        let pos = *self.positions.get(doc_id).ok_or_else(|| CorpusError::UnknownDocument(doc_id.to_string()))?;
        if self.documents[pos].label != label {
            self.documents[pos].label = label;
            self.version += 1;
        }
        Ok(())
    }

    pub fn vocab(&self) -> &VocabularyIndex {
        &self.vocab
    }

    pub fn vectors(&self) -> &[DocBitVector] {
        &self.vectors
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn document(&self, id: &str) -> Option<&Document> {
        self.positions.get(id).map(|&p| &self.documents[p])
    }

    /// Position of `id` in [`documents`](Self::documents) and [`vectors`](Self::vectors).
    pub fn position(&self, id: &str) -> Option<usize> {
        self.positions.get(id).copied()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.positions.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn options(&self) -> IndexOptions {
        self.options
    }

    /// Labels aligned with `vectors()`.
    pub fn labels(&self) -> Vec<Label> {
        self.documents.iter().map(|d| d.label).collect()
    }

    pub fn label_map(&self) -> HashMap<String, Label> {
        self.documents.iter().map(|d| (d.id.clone(), d.label)).collect()
    }

    /// (relevant, irrelevant) counts.
    pub fn labeled_counts(&self) -> (usize, usize) {
        self.documents.iter().fold((0, 0), |(r, i), d| match d.label {
            Label::Relevant => (r + 1, i),
            Label::Irrelevant => (r, i + 1),
            Label::Unlabeled => (r, i),
        })
    }
}
