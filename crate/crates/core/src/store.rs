//! Pluggable persistence for global clusters, event records, and tf-idf word
//! histories. The event-detector task is the only writer and commits exactly
//! once per document; the file-backed implementation rewrites its snapshot
//! through a temp-file rename so a crash between commits loses at most the
//! uncommitted document.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::{Cluster, ClusterEvent, ClusterId};
use crate::ingest::DocumentId;
use crate::keybased::WordEvent;

/// Snapshot format version; bumped on layout changes.
pub const SNAPSHOT_VERSION: u32 = 1;

/// A detected event of either method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EventRecord {
    Word(WordEvent),
    Cluster(ClusterEvent),
}

impl EventRecord {
    pub fn doc(&self) -> DocumentId {
        match self {
            EventRecord::Word(e) => e.doc,
            EventRecord::Cluster(e) => e.doc,
        }
    }
}

/// Full store contents at a document boundary.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StoreSnapshot {
    pub last_doc: Option<DocumentId>,
    pub clusters: Vec<Cluster>,
    pub word_histories: BTreeMap<String, Vec<(DocumentId, f64)>>,
    pub events: Vec<EventRecord>,
}

/// Changes of one document, applied atomically.
#[derive(Debug, Clone, Default)]
pub struct DocumentCommit {
    pub upserts: Vec<Cluster>,
    pub deletes: Vec<ClusterId>,
    pub word_histories: Vec<(String, Vec<(DocumentId, f64)>)>,
    pub events: Vec<EventRecord>,
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("document {doc} already committed (last committed {last:?})")]
    DuplicateCommit {
        doc: DocumentId,
        last: Option<DocumentId>,
    },
    #[error("snapshot record {index}: {message}")]
    Corrupt { index: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Cluster, history, and event persistence at document granularity.
pub trait Store: Send {
    /// All live clusters in insertion order.
    fn load_clusters(&self) -> Result<Vec<Cluster>, StoreError>;

    /// Apply one document's changes. Commits must arrive once per document in
    /// increasing document order.
    fn commit_document(&mut self, doc: DocumentId, commit: DocumentCommit)
        -> Result<(), StoreError>;

    fn snapshot(&self) -> Result<StoreSnapshot, StoreError>;

    fn commit_count(&self) -> u64;

    fn last_committed(&self) -> Option<DocumentId>;
}

/// Shared handle: the detector task writes, the driver reads afterwards.
pub type SharedStore = Arc<Mutex<dyn Store>>;

pub fn shared(store: impl Store + 'static) -> SharedStore {
    Arc::new(Mutex::new(store))
}

fn apply(state: &mut StoreSnapshot, doc: DocumentId, commit: DocumentCommit) {
    for upsert in commit.upserts {
        match state.clusters.iter_mut().find(|c| c.id == upsert.id) {
            Some(existing) => *existing = upsert,
            None => state.clusters.push(upsert),
        }
    }
    state
        .clusters
        .retain(|c| !commit.deletes.contains(&c.id));
    for (term, history) in commit.word_histories {
        state.word_histories.insert(term, history);
    }
    state.events.extend(commit.events);
    state.last_doc = Some(doc);
}

fn check_order(last: Option<DocumentId>, doc: DocumentId) -> Result<(), StoreError> {
    if last.is_some_and(|l| doc <= l) {
        return Err(StoreError::DuplicateCommit { doc, last });
    }
    Ok(())
}

/// Test and default store: everything lives in memory.
#[derive(Debug, Default)]
pub struct MemoryStore {
    state: StoreSnapshot,
    commits: u64,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Store for MemoryStore {
    fn load_clusters(&self) -> Result<Vec<Cluster>, StoreError> {
        Ok(self.state.clusters.clone())
    }

    fn commit_document(
        &mut self,
        doc: DocumentId,
        commit: DocumentCommit,
    ) -> Result<(), StoreError> {
        check_order(self.state.last_doc, doc)?;
        apply(&mut self.state, doc, commit);
        self.commits += 1;
        Ok(())
    }

    fn snapshot(&self) -> Result<StoreSnapshot, StoreError> {
        Ok(self.state.clone())
    }

    fn commit_count(&self) -> u64 {
        self.commits
    }

    fn last_committed(&self) -> Option<DocumentId> {
        self.state.last_doc
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct SnapshotHeader {
    version: u32,
    last_doc: Option<DocumentId>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum SnapshotRecord {
    Cluster(Cluster),
    History {
        term: String,
        points: Vec<(DocumentId, f64)>,
    },
    Event(EventRecord),
}

/// File-backed store. The whole snapshot is rewritten on every commit and
/// swapped in with an atomic rename.
#[derive(Debug)]
pub struct FileStore {
    path: PathBuf,
    state: StoreSnapshot,
    commits: u64,
}

impl FileStore {
    /// Open an existing snapshot or start empty if the file does not exist.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let path = path.into();
        let state = if path.exists() {
            read_snapshot(&path)?
        } else {
            StoreSnapshot::default()
        };
        Ok(Self {
            path,
            state,
            commits: 0,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn persist(&self) -> Result<(), StoreError> {
        let tmp = self.path.with_extension("tmp");
        {
            let mut file = fs::File::create(&tmp)?;
            write_snapshot(&mut file, &self.state)?;
            file.sync_all()?;
        }
        fs::rename(&tmp, &self.path)?;
        Ok(())
    }
}

impl Store for FileStore {
    fn load_clusters(&self) -> Result<Vec<Cluster>, StoreError> {
        Ok(self.state.clusters.clone())
    }

    fn commit_document(
        &mut self,
        doc: DocumentId,
        commit: DocumentCommit,
    ) -> Result<(), StoreError> {
        check_order(self.state.last_doc, doc)?;
        apply(&mut self.state, doc, commit);
        self.persist()?;
        self.commits += 1;
        Ok(())
    }

    fn snapshot(&self) -> Result<StoreSnapshot, StoreError> {
        Ok(self.state.clone())
    }

    fn commit_count(&self) -> u64 {
        self.commits
    }

    fn last_committed(&self) -> Option<DocumentId> {
        self.state.last_doc
    }
}

/// Serialize a snapshot: a header line, then one record per line.
pub fn write_snapshot(out: &mut impl Write, state: &StoreSnapshot) -> Result<(), StoreError> {
    let header = SnapshotHeader {
        version: SNAPSHOT_VERSION,
        last_doc: state.last_doc,
    };
    writeln!(out, "{}", serde_json::to_string(&header).map_err(io_err)?)?;
    for cluster in &state.clusters {
        let record = SnapshotRecord::Cluster(cluster.clone());
        writeln!(out, "{}", serde_json::to_string(&record).map_err(io_err)?)?;
    }
    for (term, points) in &state.word_histories {
        let record = SnapshotRecord::History {
            term: term.clone(),
            points: points.clone(),
        };
        writeln!(out, "{}", serde_json::to_string(&record).map_err(io_err)?)?;
    }
    for event in &state.events {
        let record = SnapshotRecord::Event(event.clone());
        writeln!(out, "{}", serde_json::to_string(&record).map_err(io_err)?)?;
    }
    Ok(())
}

fn io_err(e: serde_json::Error) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, e)
}

/// Read a snapshot back; a malformed record reports its index (the header is
/// record 0).
pub fn read_snapshot(path: &Path) -> Result<StoreSnapshot, StoreError> {
    let corrupt = |index: usize, message: String| StoreError::Corrupt { index, message };
    let reader = BufReader::new(fs::File::open(path)?);
    let mut lines = reader.lines().enumerate();
    let (_, header_line) = lines
        .next()
        .ok_or_else(|| corrupt(0, "empty snapshot".into()))?;
    let header: SnapshotHeader = serde_json::from_str(&header_line?)
        .map_err(|e| corrupt(0, e.to_string()))?;
    if header.version != SNAPSHOT_VERSION {
        return Err(corrupt(0, format!("unsupported version {}", header.version)));
    }
    let mut state = StoreSnapshot {
        last_doc: header.last_doc,
        ..StoreSnapshot::default()
    };
    for (index, line) in lines {
        let line = line?;
        if line.is_empty() {
            return Err(corrupt(index, "truncated record".into()));
        }
        let record: SnapshotRecord =
            serde_json::from_str(&line).map_err(|e| corrupt(index, e.to_string()))?;
        match record {
            SnapshotRecord::Cluster(c) => state.clusters.push(c),
            SnapshotRecord::History { term, points } => {
                state.word_histories.insert(term, points);
            }
            SnapshotRecord::Event(e) => state.events.push(e),
        }
    }
    Ok(state)
}
