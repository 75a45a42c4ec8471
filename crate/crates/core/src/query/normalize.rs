//! Conversion of arbitrary boolean trees into clause-structured form.
//!
//! Negations are pushed to the leaves with De Morgan's laws while descending
//! (double negations cancel), AND concatenates clause lists, and OR takes the
//! cross product of its children's clause lists. Clauses that contain a
//! phrase both ways are always true and are dropped; repeated literals and
//! repeated clauses are collapsed.

use std::collections::{BTreeSet, HashSet};

use crate::corpus::{Phrase, VocabularyIndex};

use super::{Clause, ClauseQuery, Literal, QueryAst, QueryError};

pub const DEFAULT_CLAUSE_CAP: usize = 64;

// Abort a single cross product before dedup if it gets this many times past the cap.
const RAW_PRODUCT_SLACK: usize = 1024;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PhraseLiteral {
    pub phrase: Phrase,
    pub neg: bool,
}

/// Clause-structured form over phrases rather than vocabulary ids.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PhraseCnf {
    pub clauses: Vec<Vec<PhraseLiteral>>,
}

impl PhraseCnf {
    /// Evaluates against a document's n-gram set.
    pub fn matches(&self, phrases: &BTreeSet<Phrase>) -> bool {
        self.clauses
            .iter()
            .filter(|c| !c.is_empty())
            .all(|c| c.iter().any(|l| phrases.contains(&l.phrase) != l.neg))
    }

    pub fn phrases(&self) -> impl Iterator<Item = &Phrase> {
        self.clauses.iter().flatten().map(|l| &l.phrase)
    }
}

type Cnf = Vec<Vec<PhraseLiteral>>;

fn push_unique(clause: &mut Vec<PhraseLiteral>, lit: &PhraseLiteral) {
    if !clause.contains(lit) {
        clause.push(lit.clone());
    }
}

fn is_tautology(clause: &[PhraseLiteral]) -> bool {
    clause.iter().any(|a| a.neg && clause.iter().any(|b| !b.neg && b.phrase == a.phrase))
}

fn tidy(clauses: Cnf, cap: usize) -> Result<Cnf, QueryError> {
    let mut seen: HashSet<BTreeSet<PhraseLiteral>> = HashSet::new();
    let mut out = Vec::new();
    for clause in clauses {
        if is_tautology(&clause) {
            continue;
        }
        if seen.insert(clause.iter().cloned().collect()) {
            out.push(clause);
        }
    }
    if out.len() > cap {
        return Err(QueryError::BlowupLimitExceeded { cap });
    }
    Ok(out)
}

fn conjunction(children: &[QueryAst], negated: bool, cap: usize) -> Result<Cnf, QueryError> {
    let mut out = Vec::new();
    for child in children {
        out.extend(cnf(child, negated, cap)?);
    }
    tidy(out, cap)
}

fn disjunction(children: &[QueryAst], negated: bool, cap: usize) -> Result<Cnf, QueryError> {
    if children.is_empty() {
        return Err(QueryError::EmptyDisjunction);
    }
    // The single empty clause is FALSE here, the identity of OR.
    let mut acc: Cnf = vec![Vec::new()];
    for child in children {
        let rhs = cnf(child, negated, cap)?;
        if acc.len().saturating_mul(rhs.len()) > cap.saturating_mul(RAW_PRODUCT_SLACK) {
            return Err(QueryError::BlowupLimitExceeded { cap });
        }
        let mut next = Vec::with_capacity(acc.len() * rhs.len());
        for a in &acc {
            for b in &rhs {
                let mut merged = a.clone();
                for lit in b {
                    push_unique(&mut merged, lit);
                }
                next.push(merged);
            }
        }
        acc = tidy(next, cap)?;
    }
    Ok(acc)
}

fn cnf(ast: &QueryAst, negated: bool, cap: usize) -> Result<Cnf, QueryError> {
    match ast {
        QueryAst::Phrase(p) => Ok(vec![vec![PhraseLiteral { phrase: p.clone(), neg: negated }]]),
        QueryAst::Not(child) => cnf(child, !negated, cap),
        QueryAst::And(cs) if !negated => conjunction(cs, false, cap),
        QueryAst::And(cs) => disjunction(cs, true, cap),
        QueryAst::Or(cs) if !negated => disjunction(cs, false, cap),
        QueryAst::Or(cs) => conjunction(cs, true, cap),
    }
}

pub fn to_phrase_cnf(ast: &QueryAst, cap: usize) -> Result<PhraseCnf, QueryError> {
    Ok(PhraseCnf { clauses: cnf(ast, false, cap)? })
}

pub fn normalize(ast: &QueryAst, vocab: &VocabularyIndex) -> Result<ClauseQuery, QueryError> {
    normalize_with_cap(ast, vocab, DEFAULT_CLAUSE_CAP)
}

pub fn normalize_with_cap(ast: &QueryAst, vocab: &VocabularyIndex, cap: usize) -> Result<ClauseQuery, QueryError> {
    let cnf = to_phrase_cnf(ast, cap)?;
    let clauses = cnf
        .clauses
        .into_iter()
        .map(|c| {
            c.into_iter()
                .map(|l| {
                    vocab
                        .id(&l.phrase)
                        .map(|id| Literal { id, neg: l.neg })
                        .ok_or_else(|| QueryError::UnknownPhrase(l.phrase.joined()))
                })
                .collect::<Result<Clause, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ClauseQuery { clauses })
}
