//! Clause-structured queries, their integer genome encoding, and conversion
//! from/to free-form boolean query strings.
//!
//! A [`ClauseQuery`] is a conjunction of clauses, each clause a disjunction
//! of literals, each literal a phrase that must be present (`neg == false`)
//! or absent (`neg == true`). A [`Genome`] is the same thing flattened into
//! signed integers: `v > 0` is phrase `v - 1`, `v < 0` is NOT phrase
//! `-v - 1`, and `0` ends a clause.

mod normalize;
mod parse;
mod serialize;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use normalize::{normalize, normalize_with_cap, to_phrase_cnf, PhraseCnf, PhraseLiteral, DEFAULT_CLAUSE_CAP};
pub use parse::{parse, QueryAst};
pub use serialize::{serialize, Serialized, DEFAULT_LENGTH_LIMIT};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum QueryError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("phrase id {id} out of range for a vocabulary of {len}")]
    PhraseIdOutOfRange { id: u64, len: usize },
    #[error("unknown phrase `{0}`")]
    UnknownPhrase(String),
    #[error("normal form needs more than {cap} clauses")]
    BlowupLimitExceeded { cap: usize },
    #[error("query is {actual} characters, limit is {limit}")]
    LengthExceeded { actual: usize, limit: usize },
    #[error("empty OR group")]
    EmptyDisjunction,
}

/// A phrase id with its sign.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Literal {
    pub id: u32,
    pub neg: bool,
}

impl Literal {
    pub fn pos(id: u32) -> Self {
        Literal { id, neg: false }
    }

    pub fn neg(id: u32) -> Self {
        Literal { id, neg: true }
    }

    /// Sign XNOR presence: a positive literal holds when the phrase is
    /// present, a negative one when it is absent.
    #[inline]
    pub fn holds(self, present: bool) -> bool {
        present != self.neg
    }

    fn gene(self) -> i32 {
        let v = self.id as i32 + 1;
        if self.neg {
            -v
        } else {
            v
        }
    }
}

/// One OR-group. Order is kept for display only; semantics are set-like.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Clause(pub Vec<Literal>);

impl Clause {
    pub fn literals(&self) -> &[Literal] {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn literal_set(&self) -> BTreeSet<Literal> {
        self.0.iter().copied().collect()
    }
}

impl FromIterator<Literal> for Clause {
    fn from_iter<I: IntoIterator<Item = Literal>>(iter: I) -> Self {
        Clause(iter.into_iter().collect())
    }
}

/// JSON form: `{"clauses":[[{"id":4,"neg":false}],...]}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct ClauseQuery {
    pub clauses: Vec<Clause>,
}

impl ClauseQuery {
    pub fn new(clauses: Vec<Clause>) -> Self {
        ClauseQuery { clauses }
    }

    /// Convenience constructor from `(id, neg)` pairs.
    pub fn from_pairs(clauses: &[&[(u32, bool)]]) -> Self {
        ClauseQuery {
            clauses: clauses
                .iter()
                .map(|c| c.iter().map(|&(id, neg)| Literal { id, neg }).collect())
                .collect(),
        }
    }

    pub fn decode(genome: &Genome, vocab_len: usize) -> Result<Self, QueryError> {
        if genome.0.is_empty() {
            return Ok(ClauseQuery::default());
        }
        let mut clauses = Vec::new();
        for segment in genome.0.split(|&v| v == 0) {
            let mut clause = Vec::with_capacity(segment.len());
            for &v in segment {
                let id = v.unsigned_abs() as u64 - 1;
                if id >= vocab_len as u64 {
                    return Err(QueryError::PhraseIdOutOfRange { id, len: vocab_len });
                }
                clause.push(Literal { id: id as u32, neg: v < 0 });
            }
            clauses.push(Clause(clause));
        }
        Ok(ClauseQuery { clauses })
    }

    pub fn encode(&self) -> Genome {
        let mut seq = Vec::new();
        for (i, clause) in self.clauses.iter().enumerate() {
            if i > 0 {
                seq.push(0);
            }
            seq.extend(clause.0.iter().map(|l| l.gene()));
        }
        Genome(seq)
    }

    pub fn non_empty_clauses(&self) -> impl Iterator<Item = &Clause> {
        self.clauses.iter().filter(|c| !c.is_empty())
    }

    /// True when no clause constrains anything.
    pub fn is_match_all(&self) -> bool {
        self.clauses.iter().all(Clause::is_empty)
    }

    pub fn max_id(&self) -> Option<u32> {
        self.clauses.iter().flat_map(|c| c.0.iter().map(|l| l.id)).max()
    }

    pub fn check_range(&self, vocab_len: usize) -> Result<(), QueryError> {
        match self.max_id() {
            Some(id) if id as usize >= vocab_len => Err(QueryError::PhraseIdOutOfRange { id: id as u64, len: vocab_len }),
            _ => Ok(()),
        }
    }

    /// Clause-by-clause literal-set equality.
    pub fn same_clauses(&self, other: &ClauseQuery) -> bool {
        self.clauses.len() == other.clauses.len()
            && self.clauses.iter().zip(&other.clauses).all(|(a, b)| a.literal_set() == b.literal_set())
    }

    /// Direct evaluation over a presence predicate; the reference semantics.
    pub fn eval_with(&self, mut present: impl FnMut(u32) -> bool) -> bool {
        self.clauses
            .iter()
            .filter(|c| !c.is_empty())
            .all(|c| c.0.iter().any(|l| l.holds(present(l.id))))
    }
}

/// Signed-integer encoding of a [`ClauseQuery`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Genome(pub Vec<i32>);

impl Genome {
    pub fn values(&self) -> &[i32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn decode(&self, vocab_len: usize) -> Result<ClauseQuery, QueryError> {
        ClauseQuery::decode(self, vocab_len)
    }

    /// Largest referenced phrase magnitude; 0 if none.
    pub fn max_magnitude(&self) -> u32 {
        self.0.iter().map(|v| v.unsigned_abs()).max().unwrap_or(0)
    }
}

impl From<Vec<i32>> for Genome {
    fn from(v: Vec<i32>) -> Self {
        Genome(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn decode_examples() {
        let q = Genome(vec![5, -3, 0, 7]).decode(10).unwrap();
        assert_eq!(q, ClauseQuery::from_pairs(&[&[(4, false), (2, true)], &[(6, false)]]));
        assert_eq!(Genome(vec![]).decode(10).unwrap().clauses.len(), 0);
    }

    // Segments of a sequence split on zeros, by explicit scanning.
    fn brute_split(seq: &[i32]) -> Vec<Vec<i32>> {
        if seq.is_empty() {
            return vec![];
        }
        let mut out = vec![vec![]];
        for &v in seq {
            if v == 0 {
                out.push(vec![]);
            } else {
                out.last_mut().unwrap().push(v);
            }
        }
        out
    }

    #[test]
    fn separator_convention() {
        assert_eq!(brute_split(&[0, 0]), vec![Vec::<i32>::new(); 3]);
        let q = Genome(vec![0, 0]).decode(1).unwrap();
        assert_eq!(q.clauses, vec![Clause::default(); 3]);
        assert!(q.is_match_all());
        let q = Genome(vec![1, 0]).decode(1).unwrap();
        assert_eq!(q.clauses.len(), 2);
    }

    #[test]
    fn decode_range_check() {
        assert_eq!(
            Genome(vec![3]).decode(2),
            Err(QueryError::PhraseIdOutOfRange { id: 2, len: 2 })
        );
        assert!(Genome(vec![-2]).decode(2).is_ok());
        assert!(Genome(vec![i32::MIN]).decode(2).is_err());
    }

    #[test]
    fn encode_examples() {
        assert_eq!(ClauseQuery::from_pairs(&[&[(0, false)]]).encode(), Genome(vec![1]));
        assert_eq!(
            ClauseQuery::from_pairs(&[&[(4, false), (2, true)], &[(6, false)]]).encode(),
            Genome(vec![5, -3, 0, 7])
        );
        assert_eq!(ClauseQuery::default().encode(), Genome(vec![]));
    }

    #[test]
    fn json_form() {
        let q = ClauseQuery::from_pairs(&[&[(4, false), (2, true)], &[(6, false)]]);
        let json = serde_json::to_string(&q).unwrap();
        assert_eq!(
            json,
            r#"{"clauses":[[{"id":4,"neg":false},{"id":2,"neg":true}],[{"id":6,"neg":false}]]}"#
        );
        assert_eq!(serde_json::from_str::<ClauseQuery>(&json).unwrap(), q);
    }

    #[test]
    fn empty_clauses_are_vacuous() {
        let q = ClauseQuery::from_pairs(&[&[], &[(0, true)]]);
        assert!(q.eval_with(|_| false));
        assert!(!q.eval_with(|_| true));
        assert!(ClauseQuery::default().eval_with(|_| false));
    }

    proptest! {
        #[test]
        fn codec_round_trip(seq in proptest::collection::vec(-20i32..=20, 0..40)) {
            let g = Genome(seq.clone());
            let q = g.decode(20).unwrap();
            prop_assert_eq!(q.clauses.len(), brute_split(&seq).len());
            let again = q.encode().decode(20).unwrap();
            prop_assert!(again.same_clauses(&q));
            prop_assert_eq!(q.encode(), g);
        }
    }
}
