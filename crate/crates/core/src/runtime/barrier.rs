//! End-of-document acknowledgement bookkeeping for the direct barrier.

use std::collections::HashSet;

use thiserror::Error;

use crate::ingest::DocumentId;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BarrierError {
    #[error("task {task} acked document {got} while the barrier is open for {expected}")]
    WrongDocument {
        task: usize,
        got: DocumentId,
        expected: DocumentId,
    },
    #[error("task {task} acked document {doc} twice")]
    DuplicateAck { task: usize, doc: DocumentId },
    #[error("ack for document {doc} arrived while no barrier is open")]
    NotOpen { doc: DocumentId },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AckOutcome {
    /// Still waiting on this many tasks.
    Pending(usize),
    /// Every task has acknowledged; the spout may proceed.
    Complete,
}

/// Tracks which tasks have acknowledged the end of the current document.
/// The spout opens the barrier when it finishes emitting a document and is
/// unblocked once every task of every bolt has acknowledged it.
#[derive(Debug)]
pub struct EodBarrier {
    total_tasks: usize,
    open: Option<(DocumentId, HashSet<usize>)>,
}

impl EodBarrier {
    pub fn new(total_tasks: usize) -> Self {
        Self {
            total_tasks,
            open: None,
        }
    }

    /// Open the barrier for a document. Any previously open barrier must have
    /// completed; the spout never has two documents in flight.
    pub fn open(&mut self, doc: DocumentId) {
        debug_assert!(self.open.is_none(), "barrier reopened while pending");
        self.open = Some((doc, HashSet::with_capacity(self.total_tasks)));
    }

    pub fn is_open(&self) -> bool {
        self.open.is_some()
    }

    pub fn ack(&mut self, task: usize, doc: DocumentId) -> Result<AckOutcome, BarrierError> {
        let (expected, acked) = match self.open.as_mut() {
            Some(state) => state,
            None => return Err(BarrierError::NotOpen { doc }),
        };
        if doc != *expected {
            return Err(BarrierError::WrongDocument {
                task,
                got: doc,
                expected: *expected,
            });
        }
        if !acked.insert(task) {
            return Err(BarrierError::DuplicateAck { task, doc });
        }
        if acked.len() == self.total_tasks {
            self.open = None;
            Ok(AckOutcome::Complete)
        } else {
            Ok(AckOutcome::Pending(self.total_tasks - acked.len()))
        }
    }
}
