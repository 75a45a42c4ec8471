use std::sync::mpsc;
use std::sync::{Arc, PoisonError, RwLock, RwLockReadGuard};
use std::time::Duration;

use thiserror::Error;

use crate::corpus::{Label, VocabularyIndex};
use crate::ga::RunStatus;
use crate::provider::{LabelQueue, PendingLabel};
use crate::query::{Genome, QueryError};

use super::{compile_query, MetricsSnapshot, PopulationEntry};

/// Requests applied by the engine between generations.
#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    Pause,
    Resume,
    Stop,
    Inject(Vec<Genome>),
    Label { id: String, label: Label },
}

pub(crate) struct Envelope {
    pub command: Command,
    pub ack: mpsc::Sender<()>,
}

/// Signalled once the engine has applied the command.
#[derive(Debug)]
pub struct Ack(mpsc::Receiver<()>);

impl Ack {
    pub fn wait(&self, timeout: Duration) -> bool {
        self.0.recv_timeout(timeout).is_ok()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlError {
    #[error("query {index}: {error}")]
    Parse { index: usize, query: String, error: QueryError },
    #[error("query {index} encodes to {len} genes, limit is {limit}")]
    TooLong { index: usize, len: usize, limit: usize },
    #[error("nothing to inject")]
    Empty,
    #[error("run is stopped")]
    Stopped,
    #[error("document `{0}` is not waiting for a label")]
    UnknownDocument(String),
    #[error("label must be relevant or irrelevant")]
    BadLabel,
    #[error("engine is gone")]
    Disconnected,
}

/// Read side shared with the HTTP handlers; replaced wholesale by the
/// engine after each generation and each applied command.
#[derive(Debug, Clone)]
pub struct RunView {
    pub status: RunStatus,
    pub snapshot: Option<MetricsSnapshot>,
    pub history: Vec<MetricsSnapshot>,
    pub population: Vec<PopulationEntry>,
    pub last_error: Option<String>,
    pub vocab: Arc<VocabularyIndex>,
    pub max_genome_len: usize,
}

/// Cloneable handle to a running engine.
#[derive(Clone)]
pub struct Controller {
    tx: mpsc::Sender<Envelope>,
    view: Arc<RwLock<RunView>>,
    labels: LabelQueue,
}

impl Controller {
    pub(crate) fn new(tx: mpsc::Sender<Envelope>, view: Arc<RwLock<RunView>>, labels: LabelQueue) -> Self {
        Controller { tx, view, labels }
    }

    pub fn view(&self) -> RwLockReadGuard<'_, RunView> {
        self.view.read().unwrap_or_else(PoisonError::into_inner)
    }

    pub fn status(&self) -> RunStatus {
        self.view().status
    }

    /// Latest metrics, with the live status.
    pub fn snapshot(&self) -> Option<MetricsSnapshot> {
        let v = self.view();
        v.snapshot.clone().map(|s| MetricsSnapshot { status: v.status, ..s })
    }

    pub fn top(&self, k: usize) -> Vec<PopulationEntry> {
        self.view().population.iter().take(k).cloned().collect()
    }

    pub fn history(&self) -> Vec<MetricsSnapshot> {
        self.view().history.clone()
    }

    pub fn pending_labels(&self) -> Vec<PendingLabel> {
        self.labels.snapshot()
    }

    fn send(&self, command: Command) -> Result<Ack, ControlError> {
        let (ack, rx) = mpsc::channel();
        self.tx.send(Envelope { command, ack }).map_err(|_| ControlError::Disconnected)?;
        Ok(Ack(rx))
    }

    fn live(&self) -> Result<(), ControlError> {
        match self.status() {
            RunStatus::Stopped => Err(ControlError::Stopped),
            _ => Ok(()),
        }
    }

    pub fn pause(&self) -> Result<Ack, ControlError> {
        self.live()?;
        self.send(Command::Pause)
    }

    pub fn resume(&self) -> Result<Ack, ControlError> {
        self.live()?;
        self.send(Command::Resume)
    }

    pub fn stop(&self) -> Result<Ack, ControlError> {
        self.send(Command::Stop)
    }

    /// Parses and encodes every query against the current vocabulary; queues
    /// them only if all succeed.
    pub fn inject(&self, queries: &[String]) -> Result<Ack, ControlError> {
        self.live()?;
        if queries.is_empty() {
            return Err(ControlError::Empty);
        }
        let genomes = {
            let v = self.view();
            let mut out = Vec::with_capacity(queries.len());
            for (index, q) in queries.iter().enumerate() {
                let g = compile_query(q, &v.vocab)
                    .map_err(|error| ControlError::Parse { index, query: q.clone(), error })?;
                if g.len() > v.max_genome_len {
                    return Err(ControlError::TooLong { index, len: g.len(), limit: v.max_genome_len });
                }
                out.push(g);
            }
            out
        };
        self.send(Command::Inject(genomes))
    }

    /// Takes `id` off the pending queue and hands the label to the engine.
    pub fn label(&self, id: &str, label: Label) -> Result<Ack, ControlError> {
        if label == Label::Unlabeled {
            return Err(ControlError::BadLabel);
        }
        let item = self.labels.take(id).ok_or_else(|| ControlError::UnknownDocument(id.to_string()))?;
        self.send(Command::Label { id: item.id, label })
    }
}
