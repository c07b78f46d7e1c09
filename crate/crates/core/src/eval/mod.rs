//! Experiment driver: wire up a detector topology, run it over a corpus,
//! collect a run report, export events, and compare the two methods.

pub mod synth;

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::clustering::{ClusterDetector, ClusterEvent, ClusterParams, ClusteringBolt, VectorSpout};
use crate::ingest::{CorpusReader, IngestError, RawTweet, ReplayConfig, ReplayItem, Replayer};
use crate::keybased::{CountBolt, EvalMode, KeyParams, KeybasedDetector, WordEvent, WordSpout};
use crate::preprocess::Preprocessor;
use crate::runtime::{self, BarrierMode, Grouping, RunConfig, RuntimeError, TopologyBuilder};
use crate::store::{EventRecord, SharedStore, StoreError, StoreSnapshot};
use crate::stream::TuplePayload;

/// Which experiment produced a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    KeybasedSleep,
    KeybasedDirect,
    Clustering,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Method::KeybasedSleep => "keybased-sleep",
            Method::KeybasedDirect => "keybased-direct",
            Method::Clustering => "clustering",
        };
        f.write_str(name)
    }
}

/// Summary of one detector run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub method: Method,
    pub wall_time_secs: f64,
    pub documents: u64,
    pub event_count: u64,
    pub store_commits: u64,
    pub corpus_fingerprint: String,
    /// Tweets whose vectors were empty after preprocessing (clustering only).
    pub skipped_empty_tweets: u64,
    pub runtime: runtime::RunReport,
}

/// Full outcome of a run: the report plus everything the store accumulated.
#[derive(Debug)]
pub struct DetectionRun {
    pub report: RunReport,
    pub word_events: Vec<WordEvent>,
    pub cluster_events: Vec<ClusterEvent>,
    pub snapshot: StoreSnapshot,
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("event file {path}: {message}")]
    BadEventFile { path: String, message: String },
    #[error("corpus fingerprints differ: {left} vs {right}; events come from different corpora")]
    FingerprintMismatch { left: String, right: String },
}

/// SHA-256 of a byte slice, hex-encoded.
pub fn fingerprint_bytes(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hex(&hasher.finalize())
}

/// SHA-256 of a file's contents, hex-encoded.
pub fn fingerprint_file(path: &Path) -> std::io::Result<String> {
    let mut hasher = Sha256::new();
    let mut file = File::open(path)?;
    let mut buffer = [0u8; 64 * 1024];
    loop {
        let n = file.read(&mut buffer)?;
        if n == 0 {
            break;
        }
        hasher.update(&buffer[..n]);
    }
    Ok(hex(&hasher.finalize()))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Options shared by both detector drivers.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub barrier: BarrierMode,
    /// Task parallelism of the counting/clustering bolt.
    pub worker_tasks: usize,
    pub queue_bound: usize,
    pub seed: Option<u64>,
    pub replay: ReplayConfig,
    pub country: Option<String>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            barrier: BarrierMode::DirectBarrier,
            worker_tasks: 2,
            queue_bound: 10_000,
            seed: None,
            replay: ReplayConfig::default(),
            country: None,
        }
    }
}

/// Replay over an in-memory tweet list.
pub type VecReplayer =
    Replayer<std::iter::Map<std::vec::IntoIter<RawTweet>, fn(RawTweet) -> Result<RawTweet, IngestError>>>;

/// Replay adapter over an in-memory tweet list.
pub fn replay_tweets(tweets: Vec<RawTweet>, config: ReplayConfig) -> VecReplayer {
    Replayer::new(tweets.into_iter().map(Ok as fn(_) -> _), config)
}

/// Run the keybased detector over a replay stream.
pub fn run_keybased_stream<I>(
    replay: I,
    corpus_fingerprint: String,
    preprocessor: Arc<Preprocessor>,
    params: KeyParams,
    store: SharedStore,
    options: &RunOptions,
) -> Result<DetectionRun, EvalError>
where
    I: Iterator<Item = Result<ReplayItem, IngestError>> + Send + 'static,
{
    let spout = WordSpout::new(replay, preprocessor, options.country.clone());
    let mode = match options.barrier {
        BarrierMode::DirectBarrier => EvalMode::AtDocumentEnd,
        BarrierMode::Sleep(_) => EvalMode::PerEmission,
    };
    let method = match options.barrier {
        BarrierMode::DirectBarrier => Method::KeybasedDirect,
        BarrierMode::Sleep(_) => Method::KeybasedSleep,
    };
    let count_params = params.clone();
    let detector_store = Arc::clone(&store);
    let topology = TopologyBuilder::new(spout)
        .bolt("count", options.worker_tasks, move |ctx| {
            Box::new(CountBolt::new(ctx.task, &count_params))
        })
        .bolt("detect", 1, move |_| {
            Box::new(KeybasedDetector::new(
                params.clone(),
                mode,
                Arc::clone(&detector_store),
            ))
        })
        .wire_spout("count", Grouping::Fields(|p: &TuplePayload| p.routing_key()))
        .wire("count", "detect", Grouping::Global)
        .build()
        .expect("keybased topology is statically valid");

    let runtime_report = runtime::run(
        topology,
        RunConfig {
            barrier: options.barrier,
            queue_bound: options.queue_bound,
            seed: options.seed,
        },
    )?;

    finish_run(method, corpus_fingerprint, runtime_report, 0, store)
}

/// Run the clustering detector over a replay stream.
pub fn run_clustering_stream<I>(
    replay: I,
    corpus_fingerprint: String,
    preprocessor: Arc<Preprocessor>,
    params: ClusterParams,
    store: SharedStore,
    options: &RunOptions,
) -> Result<DetectionRun, EvalError>
where
    I: Iterator<Item = Result<ReplayItem, IngestError>> + Send + 'static,
{
    let spout = VectorSpout::new(replay, preprocessor, options.country.clone());
    let skipped = Arc::new(AtomicU64::new(0));
    // Load once up front so store failures surface here, not inside a worker.
    let initial_clusters = store.lock().expect("store lock").load_clusters()?;
    let bolt_params = params.clone();
    let bolt_skipped = Arc::clone(&skipped);
    let detector_store = Arc::clone(&store);
    let topology = TopologyBuilder::new(spout)
        .bolt("cluster", options.worker_tasks, move |ctx| {
            Box::new(ClusteringBolt::new(
                ctx.task,
                bolt_params.clone(),
                Arc::clone(&bolt_skipped),
            ))
        })
        .bolt("detect", 1, move |_| {
            Box::new(ClusterDetector::with_clusters(
                params.clone(),
                initial_clusters.clone(),
                Arc::clone(&detector_store),
            ))
        })
        .wire_spout("cluster", Grouping::Direct)
        .wire("cluster", "detect", Grouping::Global)
        .build()
        .expect("clustering topology is statically valid");

    let runtime_report = runtime::run(
        topology,
        RunConfig {
            barrier: options.barrier,
            queue_bound: options.queue_bound,
            seed: options.seed,
        },
    )?;

    finish_run(
        Method::Clustering,
        corpus_fingerprint,
        runtime_report,
        skipped.load(Ordering::Relaxed),
        store,
    )
}

fn finish_run(
    method: Method,
    corpus_fingerprint: String,
    runtime_report: runtime::RunReport,
    skipped_empty_tweets: u64,
    store: SharedStore,
) -> Result<DetectionRun, EvalError> {
    let guard = store.lock().expect("store lock");
    let snapshot = guard.snapshot()?;
    let store_commits = guard.commit_count();
    drop(guard);
    let mut word_events = Vec::new();
    let mut cluster_events = Vec::new();
    for event in &snapshot.events {
        match event {
            EventRecord::Word(e) => word_events.push(e.clone()),
            EventRecord::Cluster(e) => cluster_events.push(e.clone()),
        }
    }
    let report = RunReport {
        method,
        wall_time_secs: runtime_report.wall_time_secs,
        documents: runtime_report.documents,
        event_count: (word_events.len() + cluster_events.len()) as u64,
        store_commits,
        corpus_fingerprint,
        skipped_empty_tweets,
        runtime: runtime_report,
    };
    Ok(DetectionRun {
        report,
        word_events,
        cluster_events,
        snapshot,
    })
}

/// File-based convenience wrapper around [`run_keybased_stream`].
pub fn run_keybased(
    corpus: &Path,
    preprocessor: Arc<Preprocessor>,
    params: KeyParams,
    store: SharedStore,
    options: &RunOptions,
) -> Result<DetectionRun, EvalError> {
    let fingerprint = fingerprint_file(corpus)?;
    let replay = Replayer::new(CorpusReader::open(corpus)?, options.replay);
    run_keybased_stream(replay, fingerprint, preprocessor, params, store, options)
}

/// File-based convenience wrapper around [`run_clustering_stream`].
pub fn run_clustering(
    corpus: &Path,
    preprocessor: Arc<Preprocessor>,
    params: ClusterParams,
    store: SharedStore,
    options: &RunOptions,
) -> Result<DetectionRun, EvalError> {
    let fingerprint = fingerprint_file(corpus)?;
    let replay = Replayer::new(CorpusReader::open(corpus)?, options.replay);
    run_clustering_stream(replay, fingerprint, preprocessor, params, store, options)
}

// ---------------------------------------------------------------------------
// Event files
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EventFileHeader {
    pub format: String,
    pub version: u32,
    pub method: Method,
    pub corpus_fingerprint: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum EventLine {
    Header(EventFileHeader),
    WordEvent(WordEvent),
    ClusterEvent(ClusterEvent),
}

const EVENT_FORMAT: &str = "squall-events";

/// Write an event file: a header line followed by one event per line.
pub fn write_event_file(
    path: &Path,
    method: Method,
    corpus_fingerprint: &str,
    word_events: &[WordEvent],
    cluster_events: &[ClusterEvent],
) -> Result<(), EvalError> {
    let mut out = BufWriter::new(File::create(path)?);
    let header = EventLine::Header(EventFileHeader {
        format: EVENT_FORMAT.into(),
        version: 1,
        method,
        corpus_fingerprint: corpus_fingerprint.into(),
    });
    writeln!(out, "{}", serde_json::to_string(&header).expect("header json"))?;
    for event in word_events {
        let line = EventLine::WordEvent(event.clone());
        writeln!(out, "{}", serde_json::to_string(&line).expect("event json"))?;
    }
    for event in cluster_events {
        let line = EventLine::ClusterEvent(event.clone());
        writeln!(out, "{}", serde_json::to_string(&line).expect("event json"))?;
    }
    out.flush()?;
    Ok(())
}

/// Parsed event file.
pub struct EventFile {
    pub header: EventFileHeader,
    pub word_events: Vec<WordEvent>,
    pub cluster_events: Vec<ClusterEvent>,
}

pub fn read_event_file(path: &Path) -> Result<EventFile, EvalError> {
    let bad = |message: String| EvalError::BadEventFile {
        path: path.display().to_string(),
        message,
    };
    let reader = BufReader::new(File::open(path)?);
    let mut header = None;
    let mut word_events = Vec::new();
    let mut cluster_events = Vec::new();
    for (index, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: EventLine = serde_json::from_str(&line)
            .map_err(|e| bad(format!("line {}: {e}", index + 1)))?;
        match parsed {
            EventLine::Header(h) => {
                if h.format != EVENT_FORMAT {
                    return Err(bad(format!("unexpected format {:?}", h.format)));
                }
                header = Some(h);
            }
            EventLine::WordEvent(e) => word_events.push(e),
            EventLine::ClusterEvent(e) => cluster_events.push(e),
        }
    }
    let header = header.ok_or_else(|| bad("missing header line".into()))?;
    Ok(EventFile {
        header,
        word_events,
        cluster_events,
    })
}

// ---------------------------------------------------------------------------
// Cross-method comparison
// ---------------------------------------------------------------------------

/// Overlap statistics between keybased keywords and cluster events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    /// Cluster events whose top terms contain at least one detected keyword.
    pub clusters_containing_keywords: u64,
    pub total_clusters: u64,
    /// Distinct keywords appearing in at least one cluster's top terms.
    pub keywords_in_clusters: u64,
    pub total_keywords: u64,
    pub cluster_overlap_rate: f64,
    pub keyword_coverage_rate: f64,
}

/// A cluster "includes" a keyword when the keyword is among its top terms.
/// Rates are computed in both directions.
pub fn compare(word_events: &[WordEvent], cluster_events: &[ClusterEvent]) -> OverlapReport {
    let keywords: BTreeSet<&str> = word_events.iter().map(|e| e.term.as_str()).collect();
    let clusters_containing = cluster_events
        .iter()
        .filter(|c| c.top_terms.iter().any(|(t, _)| keywords.contains(t.as_str())))
        .count() as u64;
    let covered = keywords
        .iter()
        .filter(|k| {
            cluster_events
                .iter()
                .any(|c| c.top_terms.iter().any(|(t, _)| t == *k))
        })
        .count() as u64;
    let total_clusters = cluster_events.len() as u64;
    let total_keywords = keywords.len() as u64;
    let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    OverlapReport {
        clusters_containing_keywords: clusters_containing,
        total_clusters,
        keywords_in_clusters: covered,
        total_keywords,
        cluster_overlap_rate: ratio(clusters_containing, total_clusters),
        keyword_coverage_rate: ratio(covered, total_keywords),
    }
}

/// Compare two event files, refusing mismatched corpora.
pub fn compare_files(keybased: &Path, clustering: &Path) -> Result<OverlapReport, EvalError> {
    let left = read_event_file(keybased)?;
    let right = read_event_file(clustering)?;
    if left.header.corpus_fingerprint != right.header.corpus_fingerprint {
        return Err(EvalError::FingerprintMismatch {
            left: left.header.corpus_fingerprint,
            right: right.header.corpus_fingerprint,
        });
    }
    Ok(compare(&left.word_events, &right.cluster_events))
}

// ---------------------------------------------------------------------------
// Chart export
// ---------------------------------------------------------------------------

/// Write one CSV per word event: `doc,tfidf` rows of its trailing history.
pub fn export_charts(events: &[WordEvent], dir: &Path) -> Result<usize, EvalError> {
    fs::create_dir_all(dir)?;
    let mut written = 0;
    for event in events {
        let name = format!("{}-{}.csv", sanitize(&event.term), event.doc);
        let mut out = BufWriter::new(File::create(dir.join(name))?);
        writeln!(out, "doc,tfidf")?;
        for (doc, value) in &event.history {
            writeln!(out, "{},{}", doc.0, value)?;
        }
        out.flush()?;
        written += 1;
    }
    Ok(written)
}

fn sanitize(term: &str) -> String {
    term.chars()
        .map(|c| {
            if c.is_alphanumeric() || c == '#' || c == '@' || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::ClusterId;
    use crate::ingest::DocumentId;

    fn word_event(term: &str) -> WordEvent {
        WordEvent {
            term: term.into(),
            doc: DocumentId(3),
            increment_rate: 2.5,
            history: vec![(DocumentId(2), 0.1), (DocumentId(3), 0.3)],
        }
    }

    fn cluster_event(id: u64, terms: &[&str]) -> ClusterEvent {
        ClusterEvent {
            cluster: ClusterId(id),
            doc: DocumentId(3),
            growth_rate: 0.7,
            top_terms: terms.iter().map(|t| (t.to_string(), 0.2)).collect(),
        }
    }

    #[test]
    fn compare_counts_both_directions() {
        let words = vec![word_event("fire"), word_event("quake"), word_event("rain")];
        let clusters = vec![
            cluster_event(1, &["fire", "downtown"]),
            cluster_event(2, &["concert", "night"]),
            cluster_event(3, &["quake", "fire"]),
        ];
        let report = compare(&words, &clusters);
        assert_eq!(report.total_keywords, 3);
        assert_eq!(report.total_clusters, 3);
        assert_eq!(report.clusters_containing_keywords, 2);
        assert_eq!(report.keywords_in_clusters, 2);
        assert!((report.cluster_overlap_rate - 2.0 / 3.0).abs() < 1e-12);
        assert!((report.keyword_coverage_rate - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn compare_matches_published_rate_arithmetic() {
        // 24 of 290 clusters include a keyword.
        let words = vec![word_event("kw")];
        let mut clusters = Vec::new();
        for i in 0..290u64 {
            let terms: &[&str] = if i < 24 { &["kw"] } else { &["other"] };
            clusters.push(cluster_event(i, terms));
        }
        let report = compare(&words, &clusters);
        assert_eq!(report.clusters_containing_keywords, 24);
        assert!((report.cluster_overlap_rate - 0.08276).abs() < 1e-4);
    }

    #[test]
    fn disjoint_and_full_overlap_edges() {
        let words = vec![word_event("alpha")];
        let report = compare(&words, &[cluster_event(1, &["beta"])]);
        assert_eq!(report.cluster_overlap_rate, 0.0);
        assert_eq!(report.keyword_coverage_rate, 0.0);

        let report = compare(&words, &[cluster_event(1, &["alpha"])]);
        assert_eq!(report.keyword_coverage_rate, 1.0);
    }

    #[test]
    fn event_files_round_trip_and_guard_fingerprints() {
        let dir = tempfile::tempdir().unwrap();
        let kb = dir.path().join("events.jsonl");
        let cl = dir.path().join("cluster-events.jsonl");
        write_event_file(&kb, Method::KeybasedDirect, "abc", &[word_event("fire")], &[]).unwrap();
        write_event_file(&cl, Method::Clustering, "abc", &[], &[cluster_event(1, &["fire"])])
            .unwrap();

        let parsed = read_event_file(&kb).unwrap();
        assert_eq!(parsed.word_events.len(), 1);
        assert_eq!(parsed.header.corpus_fingerprint, "abc");

        let report = compare_files(&kb, &cl).unwrap();
        assert_eq!(report.clusters_containing_keywords, 1);

        let other = dir.path().join("other.jsonl");
        write_event_file(&other, Method::Clustering, "zzz", &[], &[]).unwrap();
        match compare_files(&kb, &other).unwrap_err() {
            EvalError::FingerprintMismatch { .. } => {}
            e => panic!("unexpected error {e:?}"),
        }
    }

    #[test]
    fn charts_hold_at_most_history_rows() {
        let dir = tempfile::tempdir().unwrap();
        let events = vec![word_event("fire"), word_event("#tag")];
        let written = export_charts(&events, dir.path()).unwrap();
        assert_eq!(written, 2);
        let chart = fs::read_to_string(dir.path().join("fire-3.csv")).unwrap();
        let lines: Vec<&str> = chart.lines().collect();
        assert_eq!(lines[0], "doc,tfidf");
        assert_eq!(lines.len(), 3);
        assert!(dir.path().join("#tag-3.csv").exists());
    }

    #[test]
    fn fingerprints_are_stable_hex() {
        let fp = fingerprint_bytes(b"hello\n");
        assert_eq!(fp.len(), 64);
        assert_eq!(fp, fingerprint_bytes(b"hello\n"));
        assert_ne!(fp, fingerprint_bytes(b"hello"));
    }
}
