//! Remote search under a token budget, and ingestion of what comes back.
//!
//! One token buys up to [`DOCS_PER_TOKEN`] matching documents. The
//! [`SimulatedProvider`] answers from a held-out corpus with the same
//! matching semantics as the local evaluator; [`HttpProvider`] is the
//! contract for a live service and ships disabled.

mod labeler;
mod simulated;

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CorpusError, CorpusIndex, Document};

pub use labeler::{InteractiveLabeler, Labeler, LabelQueue, NullLabeler, OracleLabeler, PendingLabel};
pub use simulated::SimulatedProvider;

pub const DOCS_PER_TOKEN: usize = 500;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProviderError {
    #[error("token budget exhausted: requested {requested}, remaining {remaining}")]
    BudgetExhausted { requested: u64, remaining: u64 },
    #[error("malformed query: {0}")]
    MalformedQuery(String),
    #[error("query is {actual} characters, limit is {limit}")]
    QueryTooLong { actual: usize, limit: usize },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("provider disabled: {0}")]
    Disabled(String),
}

/// HTTP body of a search call: `{"content_query": .., "metadata_query": .., "tokens_spent": n}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderRequest {
    pub content_query: String,
    #[serde(default)]
    pub metadata_query: String,
    pub tokens_spent: u64,
}

impl ProviderRequest {
    pub fn new(content_query: impl Into<String>, tokens_spent: u64) -> Self {
        ProviderRequest { content_query: content_query.into(), metadata_query: String::new(), tokens_spent }
    }
}

/// HTTP body of a search reply.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderResponse {
    pub documents: Vec<Document>,
    pub tokens_charged: u64,
    /// No further unreturned matches exist.
    pub exhausted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenBudget {
    pub total: u64,
    pub spent: u64,
}

impl TokenBudget {
    pub fn new(total: u64) -> Self {
        TokenBudget { total, spent: 0 }
    }

    pub fn remaining(&self) -> u64 {
        self.total - self.spent
    }

    pub fn can_afford(&self, tokens: u64) -> bool {
        tokens <= self.remaining()
    }

    pub fn charge(&mut self, tokens: u64) -> Result<(), ProviderError> {
        if !self.can_afford(tokens) {
            return Err(ProviderError::BudgetExhausted { requested: tokens, remaining: self.remaining() });
        }
        self.spent += tokens;
        Ok(())
    }
}

pub trait SearchProvider: Send {
    fn fetch(&mut self, request: &ProviderRequest, budget: &mut TokenBudget) -> Result<ProviderResponse, ProviderError>;

    /// Replays de-duplication state when a run resumes from a checkpoint.
    fn mark_returned(&mut self, _ids: &[String]) {}
}

/// Settings for a live search endpoint. Requests and responses travel as
/// the JSON forms of [`ProviderRequest`] and [`ProviderResponse`]; the
/// adapter is responsible for authentication, rate-limit backoff and for
/// mapping result pages to tokens.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct HttpProviderConfig {
    pub endpoint: String,
    /// Environment variable holding the bearer token.
    pub api_key_env: String,
}

/// Placeholder for a live adapter. Every call fails with
/// [`ProviderError::Disabled`] and spends nothing.
#[derive(Debug, Clone)]
pub struct HttpProvider {
    config: HttpProviderConfig,
}

impl HttpProvider {
    pub fn new(config: HttpProviderConfig) -> Self {
        HttpProvider { config }
    }
}

impl SearchProvider for HttpProvider {
    fn fetch(&mut self, _request: &ProviderRequest, _budget: &mut TokenBudget) -> Result<ProviderResponse, ProviderError> {
        Err(ProviderError::Disabled(format!("live endpoint `{}` is not enabled in this build", self.config.endpoint)))
    }
}

/// Appends fetched documents to the local index. Ids already present (or
/// repeated within the response) and empty texts are skipped; the labeler
/// sees only what is appended. Returns the number of new documents.
pub fn ingest_response(
    response: &ProviderResponse,
    index: &mut CorpusIndex,
    labeler: &mut dyn Labeler,
) -> Result<usize, CorpusError> {
    let mut seen = std::collections::HashSet::new();
    let mut fresh: Vec<Document> = Vec::new();
    for doc in &response.documents {
        if index.contains(&doc.id) || !seen.insert(doc.id.as_str()) {
            continue;
        }
        if let Err(e) = doc.validate() {
            warn!("skipping fetched document: {e}");
            continue;
        }
        fresh.push(doc.clone());
    }
    labeler.assign(&mut fresh);
    let n = fresh.len();
    let queued: Vec<PendingLabel> = fresh
        .iter()
        .filter(|d| d.label == crate::corpus::Label::Unlabeled)
        .map(|d| PendingLabel { id: d.id.clone(), text: d.text.clone() })
        .collect();
    if n > 0 {
        index.append_documents(fresh)?;
    }
    labeler.appended(queued);
    Ok(n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_index, Label, Source};

    fn fetched(id: &str, text: &str) -> Document {
        Document { source: Source::ProviderFetch, ..Document::new(id, text) }
    }

    #[test]
    fn budget_accounting() {
        let mut b = TokenBudget::new(3);
        b.charge(2).unwrap();
        assert_eq!(b.remaining(), 1);
        assert_eq!(b.charge(2), Err(ProviderError::BudgetExhausted { requested: 2, remaining: 1 }));
        assert_eq!(b.spent, 2);
    }

    #[test]
    fn ingest_skips_duplicates() {
        let local: Vec<Document> = (0..20).map(|i| Document::new(format!("x{i}"), "traffic report")).collect();
        let mut index = build_index(local).unwrap();
        let mut docs: Vec<Document> = (0..20).map(|i| fetched(&format!("x{i}"), "dup")).collect();
        docs.extend((0..480).map(|i| fetched(&format!("n{i}"), &format!("crash near exit {i}"))));
        let response = ProviderResponse { documents: docs, tokens_charged: 1, exhausted: false };
        let added = ingest_response(&response, &mut index, &mut NullLabeler).unwrap();
        assert_eq!(added, 480);
        assert_eq!(index.len(), 500);
        assert_eq!(index.document("x3").unwrap().text, "traffic report");
        // again: all duplicates now
        assert_eq!(ingest_response(&response, &mut index, &mut NullLabeler).unwrap(), 0);
    }

    #[test]
    fn interactive_labeler_queues_new_documents() {
        let mut index = build_index(vec![Document::new("a", "x"), Document::new("b", "x")]).unwrap();
        let queue = LabelQueue::default();
        let mut labeler = InteractiveLabeler::new(queue.clone());
        let docs = vec![fetched("a", "dup"), fetched("c", "crash"), fetched("c", "crash again"), fetched("d", "jam")];
        let response = ProviderResponse { documents: docs, tokens_charged: 1, exhausted: true };
        assert_eq!(ingest_response(&response, &mut index, &mut labeler).unwrap(), 2);
        let pending = queue.snapshot();
        assert_eq!(pending.iter().map(|p| p.id.as_str()).collect::<Vec<_>>(), vec!["c", "d"]);
        assert!(index.documents().iter().all(|d| d.label == Label::Unlabeled));
    }

    #[test]
    fn http_stub_is_disabled_and_free() {
        let mut p = HttpProvider::new(HttpProviderConfig { endpoint: "https://search.invalid/v1".into(), api_key_env: "KEY".into() });
        let mut b = TokenBudget::new(5);
        let err = p.fetch(&ProviderRequest::new("a", 1), &mut b).unwrap_err();
        assert!(matches!(err, ProviderError::Disabled(_)));
        assert_eq!(b.spent, 0);
    }

    #[test]
    fn wire_format() {
        let req = ProviderRequest { content_query: "(a OR b)".into(), metadata_query: "since=5".into(), tokens_spent: 2 };
        assert_eq!(
            serde_json::to_value(&req).unwrap(),
            serde_json::json!({"content_query": "(a OR b)", "metadata_query": "since=5", "tokens_spent": 2})
        );
        let resp: ProviderResponse = serde_json::from_value(serde_json::json!({
            "documents": [{"id": "t1", "text": "crash", "source": "provider-fetch", "fetched_at": 10}],
            "tokens_charged": 2,
            "exhausted": true
        }))
        .unwrap();
        assert_eq!(resp.documents[0].label, Label::Unlabeled);
        assert_eq!(resp.documents[0].fetched_at, Some(10));
    }
}
