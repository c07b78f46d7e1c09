//! A miniature dataflow runtime: one spout feeding bolts that run as parallel
//! tasks, wired by edges with configurable grouping strategies.
//!
//! Tuples of consecutive documents must not interleave inside bolts, so the
//! runtime offers two end-of-document protocols. With [`BarrierMode::DirectBarrier`]
//! the spout suspends until every task of every bolt has acknowledged the
//! document marker; with [`BarrierMode::Sleep`] the spout just pauses for a
//! fixed duration and offers no guarantee.
//!
//! Document markers flow through the topology itself: each task forwards the
//! marker downstream only after it has received one from every upstream
//! producer, which (channels being FIFO) proves it has consumed every tuple of
//! that document first.

mod barrier;
mod exec;
mod route;

pub use barrier::{AckOutcome, BarrierError, EodBarrier};
pub use exec::run;
pub use route::{Routed, Router};

use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::DocumentId;

/// Name under which the spout appears in edge definitions.
pub const SPOUT: &str = "spout";

/// Payload carried by data tuples. The runtime itself only needs the document
/// stamp for windowing bookkeeping; everything else is opaque.
pub trait Payload: Clone + Send + 'static {
    fn doc(&self) -> DocumentId;
}

/// A data tuple: a payload plus the index of the task that emitted it
/// (`usize::MAX` for the spout).
#[derive(Debug, Clone)]
pub struct Tuple<P> {
    pub payload: P,
    pub source_task: usize,
}

/// What travels on the wire between tasks.
#[derive(Debug, Clone)]
pub enum Message<P> {
    Data(Tuple<P>),
    /// Every tuple of this document has been emitted upstream.
    Eod(DocumentId),
}

/// How tuples are routed from a producer to the tasks of a consumer bolt.
pub enum Grouping<P> {
    /// One uniformly random task per tuple.
    Shuffle,
    /// The extracted key decides the task; the same key always lands on the
    /// same task for a given task count and hash seed.
    Fields(fn(&P) -> &str),
    /// Every task receives every tuple.
    All,
    /// Everything goes to task 0.
    Global,
    /// The producer deals tuples out round-robin in emission order.
    Direct,
}

impl<P> Clone for Grouping<P> {
    fn clone(&self) -> Self {
        match self {
            Grouping::Shuffle => Grouping::Shuffle,
            Grouping::Fields(f) => Grouping::Fields(*f),
            Grouping::All => Grouping::All,
            Grouping::Global => Grouping::Global,
            Grouping::Direct => Grouping::Direct,
        }
    }
}

impl<P> fmt::Debug for Grouping<P> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Grouping::Shuffle => "Shuffle",
            Grouping::Fields(_) => "Fields",
            Grouping::All => "All",
            Grouping::Global => "Global",
            Grouping::Direct => "Direct",
        };
        f.write_str(name)
    }
}

/// End-of-document synchronization protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BarrierMode {
    /// The spout does not emit document d+1 until every task acknowledged
    /// the end of document d.
    DirectBarrier,
    /// The spout sleeps for the given duration after each document and hopes
    /// for the best. Kept as the weaker protocol to demonstrate the hazard.
    Sleep(Duration),
}

/// Where a bolt task can send tuples while processing.
pub trait Emitter<P> {
    fn emit(&mut self, payload: P) -> Result<(), EmitError>;
}

/// Emission failed because the run is shutting down.
#[derive(Debug, Error)]
#[error("emission aborted: run is shutting down")]
pub struct EmitError;

/// Boxed error type for user bolt and spout failures.
pub type DynError = Box<dyn std::error::Error + Send + Sync + 'static>;

/// Per-task identity handed to bolt factories.
#[derive(Debug, Clone)]
pub struct TaskContext {
    pub bolt: String,
    pub task: usize,
    pub task_count: usize,
}

/// Processing logic of one bolt task. Each task owns its instance exclusively;
/// bolts must not share mutable state across tasks.
pub trait Bolt<P: Payload>: Send {
    fn process(&mut self, payload: &P, out: &mut dyn Emitter<P>) -> Result<(), DynError>;

    /// Called once per document after every upstream tuple of that document
    /// has been consumed by this task.
    fn on_document_end(
        &mut self,
        _doc: DocumentId,
        _out: &mut dyn Emitter<P>,
    ) -> Result<(), DynError> {
        Ok(())
    }
}

/// What the spout hands to the runtime next.
pub enum SpoutItem<P> {
    Emit(P),
    DocumentEnd(DocumentId),
    Finished,
}

/// Source of the stream. Runs on the driving thread; never shares mutable
/// state with bolt tasks.
pub trait Spout<P: Payload>: Send {
    fn next(&mut self) -> Result<SpoutItem<P>, DynError>;
}

pub type BoltFactory<P> = Box<dyn Fn(&TaskContext) -> Box<dyn Bolt<P>> + Send + Sync>;

pub(crate) struct BoltSpec<P> {
    pub name: String,
    pub task_count: usize,
    pub factory: BoltFactory<P>,
}

#[derive(Clone)]
pub(crate) struct EdgeSpec<P> {
    /// `SPOUT` or a bolt name.
    pub from: String,
    pub to: String,
    pub grouping: Grouping<P>,
}

/// A validated topology: one spout, bolts with task parallelism, and the
/// acyclic edge set wiring them together.
pub struct Topology<P: Payload> {
    pub(crate) spout: Box<dyn Spout<P>>,
    pub(crate) bolts: Vec<BoltSpec<P>>,
    pub(crate) edges: Vec<EdgeSpec<P>>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TopologyError {
    #[error("duplicate bolt name {0:?}")]
    DuplicateBolt(String),
    #[error("bolt {0:?} must have at least one task")]
    ZeroTasks(String),
    #[error("edge references unknown bolt {0:?}")]
    UnknownBolt(String),
    #[error("edges must terminate at a bolt, not the spout")]
    EdgeIntoSpout,
    #[error("bolt {0:?} is not reachable from the spout")]
    Unreachable(String),
    #[error("topology contains a cycle")]
    Cycle,
}

pub struct TopologyBuilder<P: Payload> {
    spout: Box<dyn Spout<P>>,
    bolts: Vec<BoltSpec<P>>,
    edges: Vec<EdgeSpec<P>>,
}

impl<P: Payload> TopologyBuilder<P> {
    pub fn new(spout: impl Spout<P> + 'static) -> Self {
        Self {
            spout: Box::new(spout),
            bolts: Vec::new(),
            edges: Vec::new(),
        }
    }

    pub fn bolt<F>(mut self, name: &str, task_count: usize, factory: F) -> Self
    where
        F: Fn(&TaskContext) -> Box<dyn Bolt<P>> + Send + Sync + 'static,
    {
        self.bolts.push(BoltSpec {
            name: name.to_string(),
            task_count,
            factory: Box::new(factory),
        });
        self
    }

    /// Wire the spout's output into a bolt.
    pub fn wire_spout(self, to: &str, grouping: Grouping<P>) -> Self {
        self.wire(SPOUT, to, grouping)
    }

    pub fn wire(mut self, from: &str, to: &str, grouping: Grouping<P>) -> Self {
        self.edges.push(EdgeSpec {
            from: from.to_string(),
            to: to.to_string(),
            grouping,
        });
        self
    }

    pub fn build(self) -> Result<Topology<P>, TopologyError> {
        let mut names = std::collections::HashSet::new();
        for bolt in &self.bolts {
            if bolt.task_count == 0 {
                return Err(TopologyError::ZeroTasks(bolt.name.clone()));
            }
            if !names.insert(bolt.name.as_str()) || bolt.name == SPOUT {
                return Err(TopologyError::DuplicateBolt(bolt.name.clone()));
            }
        }
        for edge in &self.edges {
            if edge.to == SPOUT {
                return Err(TopologyError::EdgeIntoSpout);
            }
            if !names.contains(edge.to.as_str()) {
                return Err(TopologyError::UnknownBolt(edge.to.clone()));
            }
            if edge.from != SPOUT && !names.contains(edge.from.as_str()) {
                return Err(TopologyError::UnknownBolt(edge.from.clone()));
            }
        }
        validate_graph(&self.bolts, &self.edges)?;
        Ok(Topology {
            spout: self.spout,
            bolts: self.bolts,
            edges: self.edges,
        })
    }
}

fn validate_graph<P>(bolts: &[BoltSpec<P>], edges: &[EdgeSpec<P>]) -> Result<(), TopologyError> {
    use std::collections::{HashMap, HashSet, VecDeque};

    let mut adjacency: HashMap<&str, Vec<&str>> = HashMap::new();
    for edge in edges {
        adjacency
            .entry(edge.from.as_str())
            .or_default()
            .push(edge.to.as_str());
    }

    // Reachability from the spout.
    let mut reached: HashSet<&str> = HashSet::new();
    let mut queue: VecDeque<&str> = VecDeque::from([SPOUT]);
    while let Some(node) = queue.pop_front() {
        for &next in adjacency.get(node).into_iter().flatten() {
            if reached.insert(next) {
                queue.push_back(next);
            }
        }
    }
    for bolt in bolts {
        if !reached.contains(bolt.name.as_str()) {
            return Err(TopologyError::Unreachable(bolt.name.clone()));
        }
    }

    // Cycle detection over the bolt graph (DFS, three colors).
    #[derive(Clone, Copy, PartialEq)]
    enum Color {
        White,
        Gray,
        Black,
    }
    let mut colors: HashMap<&str, Color> = bolts
        .iter()
        .map(|b| (b.name.as_str(), Color::White))
        .collect();
    fn visit<'a>(
        node: &'a str,
        adjacency: &HashMap<&'a str, Vec<&'a str>>,
        colors: &mut HashMap<&'a str, Color>,
    ) -> Result<(), TopologyError> {
        colors.insert(node, Color::Gray);
        for &next in adjacency.get(node).into_iter().flatten() {
            match colors.get(next) {
                Some(Color::Gray) => return Err(TopologyError::Cycle),
                Some(Color::White) => visit(next, adjacency, colors)?,
                _ => {}
            }
        }
        colors.insert(node, Color::Black);
        Ok(())
    }
    let names: Vec<&str> = bolts.iter().map(|b| b.name.as_str()).collect();
    for name in names {
        if colors[name] == Color::White {
            visit(name, &adjacency, &mut colors)?;
        }
    }
    Ok(())
}

/// Runtime configuration for one run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub barrier: BarrierMode,
    /// Capacity of each task's input queue; senders block when it is full.
    pub queue_bound: usize,
    /// Seed for shuffle routing and fields hashing. `None` draws from OS
    /// entropy, making shuffle placement vary run to run.
    pub seed: Option<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            barrier: BarrierMode::DirectBarrier,
            queue_bound: 10_000,
            seed: None,
        }
    }
}

/// Post-run statistics of one bolt task.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskReport {
    pub bolt: String,
    pub task: usize,
    /// Data tuples processed.
    pub processed: u64,
    /// Documents for which this task completed the end-of-document hook.
    pub documents_completed: u64,
    /// Times a tuple of an earlier document arrived after a later document's
    /// tuple had already been processed - cross-document interleaving.
    pub interleaving_violations: u64,
}

/// Outcome of a completed run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub documents: u64,
    pub wall_time_secs: f64,
    /// Tuples emitted by the spout, total and per document.
    pub spout_tuples: u64,
    pub per_document_tuples: std::collections::BTreeMap<u64, u64>,
    pub tasks: Vec<TaskReport>,
    pub interleaving_violations: u64,
}

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error("bolt {bolt:?} task {task} failed at document {doc}: {message}")]
    BoltFailed {
        bolt: String,
        task: usize,
        doc: DocumentId,
        message: String,
    },
    #[error("bolt {bolt:?} task {task} panicked")]
    BoltPanicked { bolt: String, task: usize },
    #[error("spout failed: {0}")]
    SpoutFailed(String),
    #[error("barrier protocol violated: {0}")]
    Barrier(#[from] BarrierError),
    #[error("all workers disconnected while the run was in progress")]
    WorkersLost,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Clone)]
    struct Unit;
    impl Payload for Unit {
        fn doc(&self) -> DocumentId {
            DocumentId(0)
        }
    }

    struct NoSpout;
    impl Spout<Unit> for NoSpout {
        fn next(&mut self) -> Result<SpoutItem<Unit>, DynError> {
            Ok(SpoutItem::Finished)
        }
    }

    struct Sink;
    impl Bolt<Unit> for Sink {
        fn process(&mut self, _: &Unit, _: &mut dyn Emitter<Unit>) -> Result<(), DynError> {
            Ok(())
        }
    }

    fn builder() -> TopologyBuilder<Unit> {
        TopologyBuilder::new(NoSpout)
    }

    #[test]
    fn accepts_linear_topology() {
        let t = builder()
            .bolt("a", 2, |_| Box::new(Sink))
            .bolt("b", 1, |_| Box::new(Sink))
            .wire_spout("a", Grouping::Shuffle)
            .wire("a", "b", Grouping::Global)
            .build();
        assert!(t.is_ok());
    }

    #[test]
    fn rejects_duplicate_bolt_names() {
        let err = builder()
            .bolt("a", 1, |_| Box::new(Sink))
            .bolt("a", 1, |_| Box::new(Sink))
            .wire_spout("a", Grouping::All)
            .build()
            .err()
            .unwrap();
        assert_eq!(err, TopologyError::DuplicateBolt("a".into()));
    }

    #[test]
    fn rejects_zero_tasks() {
        let err = builder()
            .bolt("a", 0, |_| Box::new(Sink))
            .wire_spout("a", Grouping::All)
            .build()
            .err()
            .unwrap();
        assert_eq!(err, TopologyError::ZeroTasks("a".into()));
    }

    #[test]
    fn rejects_unknown_edge_targets() {
        let err = builder()
            .bolt("a", 1, |_| Box::new(Sink))
            .wire_spout("missing", Grouping::All)
            .build()
            .err()
            .unwrap();
        assert_eq!(err, TopologyError::UnknownBolt("missing".into()));
    }

    #[test]
    fn rejects_unreachable_bolts() {
        let err = builder()
            .bolt("a", 1, |_| Box::new(Sink))
            .bolt("island", 1, |_| Box::new(Sink))
            .wire_spout("a", Grouping::All)
            .build()
            .err()
            .unwrap();
        assert_eq!(err, TopologyError::Unreachable("island".into()));
    }

    #[test]
    fn rejects_cycles() {
        let err = builder()
            .bolt("a", 1, |_| Box::new(Sink))
            .bolt("b", 1, |_| Box::new(Sink))
            .wire_spout("a", Grouping::All)
            .wire("a", "b", Grouping::All)
            .wire("b", "a", Grouping::All)
            .build()
            .err()
            .unwrap();
        assert_eq!(err, TopologyError::Cycle);
    }
}
