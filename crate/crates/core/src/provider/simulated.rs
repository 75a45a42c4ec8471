use std::cmp::Reverse;

use crate::corpus::{CorpusError, CorpusIndex, Document, IndexOptions, Label, Source};
use crate::eval::ColumnEvaluator;
use crate::query::{parse, to_phrase_cnf, Clause, ClauseQuery, Literal, DEFAULT_CLAUSE_CAP, DEFAULT_LENGTH_LIMIT};

use super::{ProviderError, ProviderRequest, ProviderResponse, SearchProvider, TokenBudget, DOCS_PER_TOKEN};

/// Serves queries from a hidden corpus the optimizer never reads directly.
///
/// Matches come back newest first (`fetched_at` descending, undated last,
/// then by id), and a document is returned at most once per provider
/// instance, whatever query later matches it. Every accepted request is
/// charged its declared tokens, even when nothing new is left.
#[derive(Debug, Clone)]
pub struct SimulatedProvider {
    index: CorpusIndex,
    evaluator: ColumnEvaluator,
    order: Vec<usize>,
    returned: Vec<bool>,
    length_limit: usize,
}

#[derive(Debug, Clone, Copy, Default)]
struct TimeWindow {
    since: Option<i64>,
    until: Option<i64>,
}

impl TimeWindow {
    fn parse(metadata: &str) -> Result<Self, ProviderError> {
        let mut w = TimeWindow::default();
        for pair in metadata.split('&').filter(|s| !s.trim().is_empty()) {
            let (key, value) = pair.split_once('=').unwrap_or((pair, ""));
            let ts = || {
                value
                    .trim()
                    .parse::<i64>()
                    .map_err(|_| ProviderError::InvalidRequest(format!("bad timestamp in `{pair}`")))
            };
            match key.trim() {
                "since" => w.since = Some(ts()?),
                "until" => w.until = Some(ts()?),
                _ => {}
            }
        }
        Ok(w)
    }

    fn admits(&self, doc: &Document) -> bool {
        if self.since.is_none() && self.until.is_none() {
            return true;
        }
        match doc.fetched_at {
            None => false,
            Some(t) => self.since.is_none_or(|s| t >= s) && self.until.is_none_or(|u| t <= u),
        }
    }
}

impl SimulatedProvider {
    pub fn new(hidden: Vec<Document>) -> Result<Self, CorpusError> {
        // Every n-gram of the hidden corpus is addressable, not just repeated ones.
        let index = CorpusIndex::build(hidden, IndexOptions { min_doc_freq: 1 })?;
        let labels = vec![Label::Unlabeled; index.len()];
        let evaluator = ColumnEvaluator::from_parts(index.vectors(), &labels, index.vocab().len(), index.version());
        let docs = index.documents();
        let mut order: Vec<usize> = (0..docs.len()).collect();
        order.sort_by(|&a, &b| {
            let (da, db) = (&docs[a], &docs[b]);
            (da.fetched_at.is_none(), Reverse(da.fetched_at), &da.id).cmp(&(db.fetched_at.is_none(), Reverse(db.fetched_at), &db.id))
        });
        let returned = vec![false; docs.len()];
        Ok(SimulatedProvider { index, evaluator, order, returned, length_limit: DEFAULT_LENGTH_LIMIT })
    }

    pub fn with_length_limit(mut self, limit: usize) -> Self {
        self.length_limit = limit;
        self
    }

    pub fn hidden_len(&self) -> usize {
        self.index.len()
    }

    pub fn returned_count(&self) -> usize {
        self.returned.iter().filter(|&&r| r).count()
    }

    /// Resolves a query string against the hidden vocabulary. `None` means
    /// no document can match (a clause made only of absent phrases).
    fn resolve(&self, content: &str) -> Result<Option<ClauseQuery>, ProviderError> {
        let ast = parse(content).map_err(|e| ProviderError::MalformedQuery(e.to_string()))?;
        let cnf = to_phrase_cnf(&ast, DEFAULT_CLAUSE_CAP).map_err(|e| ProviderError::MalformedQuery(e.to_string()))?;
        let vocab = self.index.vocab();
        let mut clauses = Vec::new();
        'clauses: for clause in cnf.clauses {
            let mut lits = Vec::new();
            for lit in clause {
                match vocab.id(&lit.phrase) {
                    Some(id) => lits.push(Literal { id, neg: lit.neg }),
                    // NOT <absent phrase> is always true
                    None if lit.neg => continue 'clauses,
                    // <absent phrase> is always false
                    None => {}
                }
            }
            if lits.is_empty() {
                return Ok(None);
            }
            clauses.push(Clause(lits));
        }
        Ok(Some(ClauseQuery::new(clauses)))
    }

    /// Positions (in hidden-corpus order) matching `content`, ignoring
    /// de-duplication and time filters.
    pub fn matching_ids(&self, content: &str) -> Result<Vec<String>, ProviderError> {
        let positions = match self.resolve(content)? {
            Some(q) => self.evaluator.matching_positions(&q).expect("ids resolved against this vocabulary"),
            None => Vec::new(),
        };
        Ok(positions.into_iter().map(|p| self.index.documents()[p].id.clone()).collect())
    }
}

impl SearchProvider for SimulatedProvider {
    fn fetch(&mut self, request: &ProviderRequest, budget: &mut TokenBudget) -> Result<ProviderResponse, ProviderError> {
        if request.tokens_spent == 0 {
            return Err(ProviderError::InvalidRequest("tokens_spent must be positive".into()));
        }
        let actual = request.content_query.chars().count();
        if actual > self.length_limit {
            return Err(ProviderError::QueryTooLong { actual, limit: self.length_limit });
        }
        let window = TimeWindow::parse(&request.metadata_query)?;
        let query = self.resolve(&request.content_query)?;
        budget.charge(request.tokens_spent)?;

        let mut hit = vec![false; self.index.len()];
        if let Some(q) = &query {
            for p in self.evaluator.matching_positions(q).expect("ids resolved against this vocabulary") {
                hit[p] = true;
            }
        }
        let docs = self.index.documents();
        let cap = DOCS_PER_TOKEN.saturating_mul(request.tokens_spent as usize);
        let mut out = Vec::new();
        let mut remaining = 0usize;
        for &p in &self.order {
            if !hit[p] || self.returned[p] || !window.admits(&docs[p]) {
                continue;
            }
            if out.len() < cap {
                self.returned[p] = true;
                out.push(Document { label: Label::Unlabeled, source: Source::ProviderFetch, ..docs[p].clone() });
            } else {
                remaining += 1;
            }
        }
        Ok(ProviderResponse { documents: out, tokens_charged: request.tokens_spent, exhausted: remaining == 0 })
    }

    fn mark_returned(&mut self, ids: &[String]) {
        for id in ids {
            if let Some(p) = self.index.position(id) {
                self.returned[p] = true;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hidden(n_match: usize, n_other: usize) -> Vec<Document> {
        let mut docs = Vec::new();
        for i in 0..n_match {
            let mut d = Document::new(format!("m{i:05}"), format!("crash on road {i}"));
            d.fetched_at = Some(i as i64);
            docs.push(d);
        }
        for i in 0..n_other {
            docs.push(Document::new(format!("o{i:05}"), format!("sunny day {i}")).with_label(Label::Relevant));
        }
        docs
    }

    #[test]
    fn one_token_caps_at_500() {
        let mut p = SimulatedProvider::new(hidden(1200, 50)).unwrap();
        let mut b = TokenBudget::new(10);
        let r = p.fetch(&ProviderRequest::new("crash", 1), &mut b).unwrap();
        assert_eq!(r.documents.len(), 500);
        assert!(!r.exhausted);
        assert_eq!(r.tokens_charged, 1);
        // newest first
        assert_eq!(r.documents[0].id, "m01199");
        assert!(r.documents.iter().all(|d| d.source == Source::ProviderFetch && d.label == Label::Unlabeled));
        let r = p.fetch(&ProviderRequest::new("crash", 2), &mut b).unwrap();
        assert_eq!(r.documents.len(), 700);
        assert!(r.exhausted);
        assert_eq!(b.spent, 3);
    }

    #[test]
    fn few_matches_exhaust() {
        let mut p = SimulatedProvider::new(hidden(3, 10)).unwrap();
        let mut b = TokenBudget::new(5);
        let r = p.fetch(&ProviderRequest::new("crash", 1), &mut b).unwrap();
        assert_eq!(r.documents.len(), 3);
        assert!(r.exhausted);
        let again = p.fetch(&ProviderRequest::new("crash", 1), &mut b).unwrap();
        assert!(again.documents.is_empty());
        assert!(again.exhausted);
        assert_eq!(again.tokens_charged, 1);
        assert_eq!(b.spent, 2);
    }

    #[test]
    fn errors_do_not_charge() {
        let mut p = SimulatedProvider::new(hidden(3, 3)).unwrap();
        let mut b = TokenBudget::new(1);
        assert!(matches!(p.fetch(&ProviderRequest::new("(crash", 1), &mut b), Err(ProviderError::MalformedQuery(_))));
        // 5 * 114 + 4 * 113 = 1022, then " OR x" pushes it to 1027
        let mut long = vec!["crash"; 114].join(" OR ");
        assert!(p.fetch(&ProviderRequest::new(long.clone(), 1), &mut TokenBudget::new(1)).is_ok());
        long.push_str(" OR x");
        assert_eq!(
            p.fetch(&ProviderRequest::new(long, 1), &mut b),
            Err(ProviderError::QueryTooLong { actual: 1027, limit: 1024 })
        );
        assert!(matches!(p.fetch(&ProviderRequest::new("crash", 2), &mut b), Err(ProviderError::BudgetExhausted { .. })));
        assert!(matches!(p.fetch(&ProviderRequest::new("crash", 0), &mut b), Err(ProviderError::InvalidRequest(_))));
        assert_eq!(b.spent, 0);
    }

    #[test]
    fn unknown_phrases_fold_to_constants() {
        let p = SimulatedProvider::new(hidden(3, 2)).unwrap();
        assert_eq!(p.matching_ids("zeppelin").unwrap().len(), 0);
        assert_eq!(p.matching_ids("NOT zeppelin").unwrap().len(), 5);
        assert_eq!(p.matching_ids("crash OR zeppelin").unwrap().len(), 3);
        assert_eq!(p.matching_ids("crash AND NOT zeppelin").unwrap().len(), 3);
        assert_eq!(p.matching_ids("\"crash on\" AND NOT \"road 1\"").unwrap(), vec!["m00000", "m00002"]);
    }

    #[test]
    fn metadata_time_window() {
        let mut p = SimulatedProvider::new(hidden(10, 0)).unwrap();
        let mut b = TokenBudget::new(5);
        let req = ProviderRequest { content_query: "crash".into(), metadata_query: "since=3&until=5".into(), tokens_spent: 1 };
        let r = p.fetch(&req, &mut b).unwrap();
        let ids: Vec<&str> = r.documents.iter().map(|d| d.id.as_str()).collect();
        assert_eq!(ids, vec!["m00005", "m00004", "m00003"]);
        let bad = ProviderRequest { metadata_query: "since=yesterday".into(), ..req };
        assert!(matches!(p.fetch(&bad, &mut b), Err(ProviderError::InvalidRequest(_))));
    }
}
