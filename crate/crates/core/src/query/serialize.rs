use log::warn;

use crate::corpus::{Phrase, VocabularyIndex};

use super::{Clause, ClauseQuery, Literal, QueryError};

pub const DEFAULT_LENGTH_LIMIT: usize = 1024;

/// A rendered provider query. `match_all` is set (and `text` empty) when the
/// query had no non-empty clause.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Serialized {
    pub text: String,
    pub match_all: bool,
}

fn needs_quotes(phrase: &Phrase) -> bool {
    phrase.len() > 1
        || matches!(phrase.tokens()[0].to_ascii_uppercase().as_str(), "AND" | "OR" | "NOT")
}

fn render_literal(lit: Literal, vocab: &VocabularyIndex, out: &mut String) -> Result<(), QueryError> {
    let phrase = vocab
        .phrase(lit.id)
        .ok_or(QueryError::PhraseIdOutOfRange { id: lit.id as u64, len: vocab.len() })?;
    if lit.neg {
        out.push_str("NOT ");
    }
    if needs_quotes(phrase) {
        out.push('"');
        out.push_str(&phrase.joined());
        out.push('"');
    } else {
        out.push_str(&phrase.tokens()[0]);
    }
    Ok(())
}

fn render_clause(clause: &Clause, vocab: &VocabularyIndex, out: &mut String) -> Result<(), QueryError> {
    let mixed = clause.0.len() > 1;
    for (i, &lit) in clause.0.iter().enumerate() {
        if i > 0 {
            out.push_str(" OR ");
        }
        if lit.neg && mixed {
            out.push('(');
            render_literal(lit, vocab, out)?;
            out.push(')');
        } else {
            render_literal(lit, vocab, out)?;
        }
    }
    Ok(())
}

/// Renders `(a OR b) AND (NOT c)`. A lone clause is left unparenthesized,
/// empty clauses are skipped, multi-token phrases are double-quoted.
pub fn serialize(query: &ClauseQuery, vocab: &VocabularyIndex, limit: usize) -> Result<Serialized, QueryError> {
    let clauses: Vec<&Clause> = query.non_empty_clauses().collect();
    if clauses.is_empty() {
        warn!("serializing a query with no constraints; emitting the match-all sentinel");
        return Ok(Serialized { text: String::new(), match_all: true });
    }
    let mut out = String::new();
    if let [only] = clauses.as_slice() {
        render_clause(only, vocab, &mut out)?;
    } else {
        for (i, clause) in clauses.iter().enumerate() {
            if i > 0 {
                out.push_str(" AND ");
            }
            out.push('(');
            render_clause(clause, vocab, &mut out)?;
            out.push(')');
        }
    }
    let actual = out.chars().count();
    if actual > limit {
        return Err(QueryError::LengthExceeded { actual, limit });
    }
    Ok(Serialized { text: out, match_all: false })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::{normalize, parse};
    use proptest::prelude::*;

    fn vocab(words: &[&str]) -> VocabularyIndex {
        VocabularyIndex::from_entries(words.iter().map(|w| (Phrase::parse(w).unwrap(), 2)).collect()).unwrap()
    }

    #[test]
    fn display_example() {
        let v = vocab(&["phrase1", "phrase2", "phrase3"]);
        let q = ClauseQuery::from_pairs(&[&[(0, false), (1, false)], &[(2, true)]]);
        assert_eq!(serialize(&q, &v, 1024).unwrap().text, "(phrase1 OR phrase2) AND (NOT phrase3)");
    }

    #[test]
    fn single_literal_and_quoting() {
        let v = vocab(&["a", "black ice", "or"]);
        assert_eq!(serialize(&ClauseQuery::from_pairs(&[&[(0, false)]]), &v, 1024).unwrap().text, "a");
        let q = ClauseQuery::from_pairs(&[&[(1, false), (0, true)], &[], &[(2, false)]]);
        assert_eq!(serialize(&q, &v, 1024).unwrap().text, "(\"black ice\" OR (NOT a)) AND (\"or\")");
    }

    #[test]
    fn empty_query_sentinel() {
        let v = vocab(&["a"]);
        let s = serialize(&ClauseQuery::from_pairs(&[&[], &[]]), &v, 1024).unwrap();
        assert_eq!(s, Serialized { text: String::new(), match_all: true });
    }

    #[test]
    fn length_boundary() {
        // a literals "x" and b literals "xy" in one clause: 5a + 6b - 4 chars
        let v = vocab(&["x", "xy"]);
        let clause = |a: usize, b: usize| {
            let mut c = vec![(0u32, false); a];
            c.extend(vec![(1u32, false); b]);
            c
        };
        let at_limit = ClauseQuery::from_pairs(&[&clause(202, 3)]);
        assert_eq!(serialize(&at_limit, &v, 1024).unwrap().text.chars().count(), 1024);
        let over = ClauseQuery::from_pairs(&[&clause(201, 4)]);
        assert_eq!(serialize(&over, &v, 1024), Err(QueryError::LengthExceeded { actual: 1025, limit: 1024 }));
        assert_eq!(serialize(&over, &v, 1025).unwrap().text.len(), 1025);
    }

    fn truth_table_equal(a: &ClauseQuery, b: &ClauseQuery, n: usize) -> bool {
        (0u32..1 << n).all(|m| a.eval_with(|id| m >> id & 1 == 1) == b.eval_with(|id| m >> id & 1 == 1))
    }

    proptest! {
        #[test]
        fn parse_serialize_round_trip(
            clauses in proptest::collection::vec(
                proptest::collection::vec((0u32..5, any::<bool>()), 0..4), 0..4)
        ) {
            let v = vocab(&["crash", "black ice", "i-64", "not", "@lmpd"]);
            let q = ClauseQuery::new(clauses.into_iter().map(|c| c.into_iter().map(|(id, neg)| Literal { id, neg }).collect()).collect());
            let s = serialize(&q, &v, 1024).unwrap();
            if s.match_all {
                prop_assert!(q.is_match_all());
            } else {
                let back = normalize(&parse(&s.text).unwrap(), &v).unwrap();
                prop_assert!(truth_table_equal(&q, &back, 5));
            }
        }
    }
}
