use std::collections::VecDeque;
use std::sync::{Arc, Mutex, PoisonError};

use serde::{Deserialize, Serialize};

use crate::corpus::{Document, Label};
use crate::query::{parse, to_phrase_cnf, PhraseCnf, QueryError, DEFAULT_CLAUSE_CAP};

/// Decides labels for freshly fetched documents.
pub trait Labeler: Send {
    /// Called before the documents are appended; may set `label`.
    fn assign(&mut self, docs: &mut [Document]);

    /// Called after appending, with the documents still unlabeled.
    fn appended(&mut self, _unlabeled: Vec<PendingLabel>) {}
}

/// Leaves everything unlabeled.
#[derive(Debug, Default, Clone, Copy)]
pub struct NullLabeler;

impl Labeler for NullLabeler {
    fn assign(&mut self, _docs: &mut [Document]) {}
}

/// Labels by a hidden ground-truth query, for synthetic runs.
#[derive(Debug, Clone)]
pub struct OracleLabeler {
    target: PhraseCnf,
}

impl OracleLabeler {
    pub fn new(target: PhraseCnf) -> Self {
        OracleLabeler { target }
    }

    pub fn from_query(query: &str) -> Result<Self, QueryError> {
        Ok(OracleLabeler { target: to_phrase_cnf(&parse(query)?, DEFAULT_CLAUSE_CAP)? })
    }

    pub fn label_of(&self, doc: &Document) -> Label {
        if self.target.matches(&doc.phrases()) {
            Label::Relevant
        } else {
            Label::Irrelevant
        }
    }
}

impl Labeler for OracleLabeler {
    fn assign(&mut self, docs: &mut [Document]) {
        for doc in docs {
            doc.label = self.label_of(doc);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingLabel {
    pub id: String,
    pub text: String,
}

/// FIFO of documents waiting for a human label, shared with the control API.
#[derive(Debug, Clone, Default)]
pub struct LabelQueue {
    inner: Arc<Mutex<VecDeque<PendingLabel>>>,
}

impl LabelQueue {
    fn lock(&self) -> std::sync::MutexGuard<'_, VecDeque<PendingLabel>> {
        self.inner.lock().unwrap_or_else(PoisonError::into_inner)
    }

    pub fn extend(&self, items: impl IntoIterator<Item = PendingLabel>) {
        self.lock().extend(items);
    }

    pub fn snapshot(&self) -> Vec<PendingLabel> {
        self.lock().iter().cloned().collect()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.lock().iter().any(|p| p.id == id)
    }

    /// Removes and returns the entry for `id`.
    pub fn take(&self, id: &str) -> Option<PendingLabel> {
        let mut q = self.lock();
        let pos = q.iter().position(|p| p.id == id)?;
        q.remove(pos)
    }

    pub fn len(&self) -> usize {
        self.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.lock().is_empty()
    }
}

/// Leaves fetched documents unlabeled and queues them for the operator.
#[derive(Debug, Clone)]
pub struct InteractiveLabeler {
    queue: LabelQueue,
}

impl InteractiveLabeler {
    pub fn new(queue: LabelQueue) -> Self {
        InteractiveLabeler { queue }
    }
}

impl Labeler for InteractiveLabeler {
    fn assign(&mut self, _docs: &mut [Document]) {}

    fn appended(&mut self, unlabeled: Vec<PendingLabel>) {
        self.queue.extend(unlabeled);
    }
}
