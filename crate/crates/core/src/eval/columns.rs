use crate::corpus::{CorpusIndex, DocBitVector, Label};
use crate::query::{ClauseQuery, Literal};

use super::{ConfusionCounts, EvalError};

/// Phrase-major transpose of the document vectors plus label masks.
///
/// Column `p` holds one bit per document (in corpus order). A clause is the
/// OR of its literal columns (complemented for negative literals), a query
/// the AND of its clause results, one 64-document word at a time. Always
/// derivable from the row vectors; `version` records which snapshot.
#[derive(Debug, Clone)]
pub struct ColumnEvaluator {
    n_docs: usize,
    n_words: usize,
    n_phrases: usize,
    columns: Vec<u64>,
    relevant: Vec<u64>,
    irrelevant: Vec<u64>,
    version: u64,
}

impl ColumnEvaluator {
    pub fn from_index(index: &CorpusIndex) -> Self {
        Self::from_parts(index.vectors(), &index.labels(), index.vocab().len(), index.version())
    }

    /// `labels` is aligned with `vectors`.
    pub fn from_parts(vectors: &[DocBitVector], labels: &[Label], n_phrases: usize, version: u64) -> Self {
        assert_eq!(vectors.len(), labels.len());
        let n_docs = vectors.len();
        let n_words = n_docs.div_ceil(64);
        let mut columns = vec![0u64; n_phrases * n_words];
        let mut relevant = vec![0u64; n_words];
        let mut irrelevant = vec![0u64; n_words];
        for (d, (v, label)) in vectors.iter().zip(labels).enumerate() {
            let (w, bit) = (d / 64, 1u64 << (d % 64));
            for (wi, &word) in v.words().iter().enumerate() {
                let mut bits = word;
                while bits != 0 {
                    let p = wi * 64 + bits.trailing_zeros() as usize;
                    bits &= bits - 1;
                    if p < n_phrases {
                        columns[p * n_words + w] |= bit;
                    }
                }
            }
            match label {
                Label::Relevant => relevant[w] |= bit,
                Label::Irrelevant => irrelevant[w] |= bit,
                Label::Unlabeled => {}
            }
        }
        ColumnEvaluator { n_docs, n_words, n_phrases, columns, relevant, irrelevant, version }
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn n_phrases(&self) -> usize {
        self.n_phrases
    }

    fn column(&self, id: u32) -> &[u64] {
        let start = id as usize * self.n_words;
        &self.columns[start..start + self.n_words]
    }

    fn tail_mask(&self) -> u64 {
        match self.n_docs % 64 {
            0 => u64::MAX,
            r => (1u64 << r) - 1,
        }
    }

    /// Bitmap of matching documents in corpus order.
    pub fn match_mask(&self, query: &ClauseQuery) -> Result<Vec<u64>, EvalError> {
        if let Some(id) = query.max_id().filter(|&id| id as usize >= self.n_phrases) {
            return Err(EvalError::PhraseIdOutOfRange { id, len: self.n_phrases });
        }
        let mut acc = vec![u64::MAX; self.n_words];
        if let Some(last) = acc.last_mut() {
            *last = self.tail_mask();
        }
        let mut clause_bits = vec![0u64; self.n_words];
        for clause in query.non_empty_clauses() {
            clause_bits.fill(0);
            for &Literal { id, neg } in clause.literals() {
                let col = self.column(id);
                if neg {
                    clause_bits.iter_mut().zip(col).for_each(|(c, &x)| *c |= !x);
                } else {
                    clause_bits.iter_mut().zip(col).for_each(|(c, &x)| *c |= x);
                }
            }
            acc.iter_mut().zip(&clause_bits).for_each(|(a, &c)| *a &= c);
        }
        Ok(acc)
    }

    pub fn counts(&self, query: &ClauseQuery) -> Result<ConfusionCounts, EvalError> {
        let hits = self.match_mask(query)?;
        let mut c = ConfusionCounts::default();
        for ((&h, &r), &i) in hits.iter().zip(&self.relevant).zip(&self.irrelevant) {
            c.tp += (h & r).count_ones() as u64;
            c.fn_ += (!h & r).count_ones() as u64;
            c.fp += (h & i).count_ones() as u64;
            c.tn += (!h & i).count_ones() as u64;
        }
        Ok(c)
    }

    /// Positions of matching documents.
    pub fn matching_positions(&self, query: &ClauseQuery) -> Result<Vec<usize>, EvalError> {
        let hits = self.match_mask(query)?;
        let mut out = Vec::new();
        for (w, &word) in hits.iter().enumerate() {
            let mut bits = word;
            while bits != 0 {
                out.push(w * 64 + bits.trailing_zeros() as usize);
                bits &= bits - 1;
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_index, Document};
    use crate::eval::{evaluate_corpus, matches};
    use proptest::prelude::*;

    fn corpus(n: usize) -> CorpusIndex {
        let docs = (0..n)
            .map(|i| {
                let words: Vec<String> = (0..6).filter(|b| i >> b & 1 == 1).map(|b| format!("w{b}")).collect();
                let text = if words.is_empty() { "none".to_string() } else { words.join(" z ") };
                let label = match i % 3 {
                    0 => Label::Relevant,
                    1 => Label::Irrelevant,
                    _ => Label::Unlabeled,
                };
                Document::new(format!("d{i}"), text).with_label(label)
            })
            .collect();
        build_index(docs).unwrap()
    }

    #[test]
    fn empty_query_matches_everything_but_padding() {
        let idx = corpus(70);
        let ev = ColumnEvaluator::from_index(&idx);
        let mask = ev.match_mask(&ClauseQuery::default()).unwrap();
        assert_eq!(mask.iter().map(|w| w.count_ones()).sum::<u32>(), 70);
        let neg_only = ClauseQuery::from_pairs(&[&[(0, true)], &[]]);
        let m = ev.match_mask(&neg_only).unwrap();
        assert_eq!(m[1] >> 6, 0);
    }

    proptest! {
        #[test]
        fn agrees_with_row_evaluation(
            clauses in proptest::collection::vec(
                proptest::collection::vec((0u32..8, any::<bool>()), 0..4), 0..4)
        ) {
            let idx = corpus(130);
            let n = idx.vocab().len() as u32;
            let q = ClauseQuery::from_pairs(&clauses.iter().map(|c| c.iter().map(|&(id, neg)| (id % n, neg)).collect::<Vec<_>>()).collect::<Vec<_>>().iter().map(Vec::as_slice).collect::<Vec<_>>());
            let ev = ColumnEvaluator::from_index(&idx);
            prop_assert_eq!(ev.counts(&q).unwrap(), evaluate_corpus(&q, idx.vectors(), &idx.label_map()).unwrap());
            let positions = ev.matching_positions(&q).unwrap();
            let rows: Vec<usize> = idx.vectors().iter().enumerate().filter(|(_, v)| matches(&q, v).unwrap()).map(|(i, _)| i).collect();
            prop_assert_eq!(positions, rows);
        }
    }
}
