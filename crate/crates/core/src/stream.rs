//! The concrete tuple payload flowing through the detector topologies.

use crate::clustering::Cluster;
use crate::ingest::DocumentId;
use crate::preprocess::TweetVector;
use crate::runtime::Payload;

/// Counting state attached to a common-word signal at emission time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateStats {
    /// The emitting count task.
    pub task: usize,
    /// Occurrences of the term at the moment the threshold was reached.
    pub count: u64,
    /// Tokens this count task has seen in the current document so far.
    pub partition_tokens: u64,
}

/// One count task's final tallies for a document, emitted at the document
/// boundary: every term it counted plus the partition's token total. The
/// detector needs final counts and true document frequencies to evaluate the
/// tf-idf equations exactly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountSummary {
    pub task: usize,
    pub doc: DocumentId,
    pub total_tokens: u64,
    /// Term tallies in term order.
    pub counts: Vec<(String, u64)>,
}

/// One clustering task's local clusters for a document, emitted at the
/// document boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalClusters {
    pub task: usize,
    pub doc: DocumentId,
    pub clusters: Vec<Cluster>,
}

/// Everything that can ride a data tuple.
#[derive(Debug, Clone, PartialEq)]
pub enum TuplePayload {
    /// One token occurrence (keybased topology).
    Word { term: String, doc: DocumentId },
    /// One vectorized tweet (clustering topology).
    Vector(TweetVector),
    /// A word just crossed the common-word threshold.
    Candidate {
        term: String,
        doc: DocumentId,
        stats: CandidateStats,
    },
    CountSummary(CountSummary),
    LocalClusters(LocalClusters),
}

impl TuplePayload {
    /// Key used by fields grouping.
    pub fn routing_key(&self) -> &str {
        match self {
            TuplePayload::Word { term, .. } | TuplePayload::Candidate { term, .. } => term,
            TuplePayload::Vector(v) => &v.id,
            TuplePayload::CountSummary(_) | TuplePayload::LocalClusters(_) => "",
        }
    }
}

impl Payload for TuplePayload {
    fn doc(&self) -> DocumentId {
        match self {
            TuplePayload::Word { doc, .. } | TuplePayload::Candidate { doc, .. } => *doc,
            TuplePayload::Vector(v) => v.doc,
            TuplePayload::CountSummary(s) => s.doc,
            TuplePayload::LocalClusters(l) => l.doc,
        }
    }
}
