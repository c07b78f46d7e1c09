//! Streaming pieces of the clustering detector: the vectorizing spout, the
//! local clustering bolt, and the single-task detector that merges locally,
//! merges globally, and commits to the store.

use std::collections::{BTreeMap, VecDeque};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use super::{
    assign_tweet, global_merge, local_merge, Assigned, Cluster, ClusterParams,
};
use crate::ingest::{DocumentId, IngestError, RawTweet, ReplayItem};
use crate::preprocess::{vectorize, Preprocessor, TweetVector};
use crate::runtime::{Bolt, DynError, Emitter, Spout, SpoutItem};
use crate::store::{DocumentCommit, EventRecord, SharedStore, StoreError};
use crate::stream::{LocalClusters, TuplePayload};

/// Replays the corpus and emits one normalized tweet vector per tweet.
pub struct VectorSpout<I> {
    replay: I,
    preprocessor: Arc<Preprocessor>,
    country: Option<String>,
    pending: VecDeque<TuplePayload>,
}

impl<I> VectorSpout<I>
where
    I: Iterator<Item = Result<ReplayItem, IngestError>> + Send,
{
    pub fn new(replay: I, preprocessor: Arc<Preprocessor>, country: Option<String>) -> Self {
        Self {
            replay,
            preprocessor,
            country,
            pending: VecDeque::new(),
        }
    }

    fn wants(&self, tweet: &RawTweet) -> bool {
        match &self.country {
            Some(code) => tweet.country.as_deref() == Some(code.as_str()),
            None => true,
        }
    }
}

impl<I> Spout<TuplePayload> for VectorSpout<I>
where
    I: Iterator<Item = Result<ReplayItem, IngestError>> + Send,
{
    fn next(&mut self) -> Result<SpoutItem<TuplePayload>, DynError> {
        loop {
            if let Some(payload) = self.pending.pop_front() {
                return Ok(SpoutItem::Emit(payload));
            }
            match self.replay.next() {
                Some(Ok(ReplayItem::Tweet(tweet, doc))) => {
                    if !self.wants(&tweet) {
                        continue;
                    }
                    let processed = self.preprocessor.process_tweet(&tweet, doc);
                    self.pending.push_back(TuplePayload::Vector(TweetVector {
                        id: processed.id,
                        doc: processed.doc,
                        weights: vectorize(&processed.tokens),
                    }));
                }
                Some(Ok(ReplayItem::DocumentEnd(doc))) => {
                    return Ok(SpoutItem::DocumentEnd(doc))
                }
                Some(Err(e)) => return Err(Box::new(e)),
                None => return Ok(SpoutItem::Finished),
            }
        }
    }
}

/// Builds local clusters from the tweets routed to this task. The list resets
/// at every document boundary after being shipped to the detector.
pub struct ClusteringBolt {
    task: usize,
    params: ClusterParams,
    locals: Vec<Cluster>,
    next_local_id: u64,
    skipped_empty: Arc<AtomicU64>,
}

impl ClusteringBolt {
    pub fn new(task: usize, params: ClusterParams, skipped_empty: Arc<AtomicU64>) -> Self {
        Self {
            task,
            params,
            locals: Vec::new(),
            next_local_id: 0,
            skipped_empty,
        }
    }
}

impl Bolt<TuplePayload> for ClusteringBolt {
    fn process(
        &mut self,
        payload: &TuplePayload,
        _out: &mut dyn Emitter<TuplePayload>,
    ) -> Result<(), DynError> {
        let TuplePayload::Vector(vector) = payload else {
            return Ok(());
        };
        if assign_tweet(vector, &mut self.locals, &mut self.next_local_id, &self.params)
            == Assigned::SkippedEmpty
        {
            self.skipped_empty.fetch_add(1, Ordering::Relaxed);
        }
        Ok(())
    }

    fn on_document_end(
        &mut self,
        doc: DocumentId,
        out: &mut dyn Emitter<TuplePayload>,
    ) -> Result<(), DynError> {
        out.emit(TuplePayload::LocalClusters(LocalClusters {
            task: self.task,
            doc,
            clusters: std::mem::take(&mut self.locals),
        }))?;
        Ok(())
    }
}

/// Single-task detector: collects every task's local clusters, merges them,
/// folds the result into the global set, and commits once per document.
pub struct ClusterDetector {
    params: ClusterParams,
    globals: Vec<Cluster>,
    next_global_id: u64,
    pending: BTreeMap<DocumentId, Vec<LocalClusters>>,
    store: SharedStore,
}

impl ClusterDetector {
    /// Loads the surviving global clusters before the stream starts; this is
    /// the store read of the run - afterwards only commits touch it.
    pub fn new(params: ClusterParams, store: SharedStore) -> Result<Self, StoreError> {
        let globals = store.lock().expect("store lock").load_clusters()?;
        Ok(Self::with_clusters(params, globals, store))
    }

    /// Build from pre-loaded clusters, letting callers surface store errors
    /// before worker threads start.
    pub fn with_clusters(params: ClusterParams, globals: Vec<Cluster>, store: SharedStore) -> Self {
        let next_global_id = globals.iter().map(|c| c.id.0 + 1).max().unwrap_or(0);
        Self {
            params,
            globals,
            next_global_id,
            pending: BTreeMap::new(),
            store,
        }
    }
}

impl Bolt<TuplePayload> for ClusterDetector {
    fn process(
        &mut self,
        payload: &TuplePayload,
        _out: &mut dyn Emitter<TuplePayload>,
    ) -> Result<(), DynError> {
        if let TuplePayload::LocalClusters(locals) = payload {
            self.pending
                .entry(locals.doc)
                .or_default()
                .push(locals.clone());
        }
        Ok(())
    }

    fn on_document_end(
        &mut self,
        doc: DocumentId,
        _out: &mut dyn Emitter<TuplePayload>,
    ) -> Result<(), DynError> {
        let arrived = self.pending.remove(&doc).unwrap_or_default();
        let per_task: Vec<(usize, Vec<Cluster>)> = arrived
            .into_iter()
            .map(|l| (l.task, l.clusters))
            .collect();
        let merged = local_merge(per_task, &self.params);
        let (events, delta) = global_merge(
            &mut self.globals,
            merged,
            doc,
            &mut self.next_global_id,
            &self.params,
        );
        self.store
            .lock()
            .expect("store lock")
            .commit_document(
                doc,
                DocumentCommit {
                    upserts: delta.upserts,
                    deletes: delta.deletes,
                    events: events.into_iter().map(EventRecord::Cluster).collect(),
                    ..DocumentCommit::default()
                },
            )
            .map_err(|e| -> DynError { Box::new(e) })?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runtime::EmitError;
    use crate::store::{self, MemoryStore};

    struct Capture(Vec<TuplePayload>);
    impl Emitter<TuplePayload> for Capture {
        fn emit(&mut self, payload: TuplePayload) -> Result<(), EmitError> {
            self.0.push(payload);
            Ok(())
        }
    }

    fn vector(id: &str, doc: u64, terms: &[&str]) -> TuplePayload {
        let tokens: Vec<String> = terms.iter().map(|t| t.to_string()).collect();
        TuplePayload::Vector(TweetVector {
            id: id.into(),
            doc: DocumentId(doc),
            weights: vectorize(&tokens),
        })
    }

    #[test]
    fn clustering_bolt_accumulates_and_resets() {
        let params = ClusterParams::default();
        let skipped = Arc::new(AtomicU64::new(0));
        let mut bolt = ClusteringBolt::new(0, params, Arc::clone(&skipped));
        let mut out = Capture(Vec::new());
        for i in 0..5 {
            bolt.process(&vector(&format!("t{i}"), 0, &["quake", "city"]), &mut out)
                .unwrap();
        }
        bolt.process(&vector("e", 0, &[]), &mut out).unwrap();
        assert_eq!(skipped.load(Ordering::Relaxed), 1);
        bolt.on_document_end(DocumentId(0), &mut out).unwrap();
        let locals = match &out.0[0] {
            TuplePayload::LocalClusters(l) => l.clone(),
            other => panic!("unexpected {other:?}"),
        };
        assert_eq!(locals.clusters.len(), 1);
        assert_eq!(locals.clusters[0].total_tweets, 5);
        assert!(bolt.locals.is_empty(), "list resets at the boundary");
    }

    #[test]
    fn detector_runs_both_merge_phases_and_commits() {
        let params = ClusterParams::default();
        let store = store::shared(MemoryStore::new());
        let mut detector = ClusterDetector::new(params.clone(), Arc::clone(&store)).unwrap();
        let mut out = Capture(Vec::new());

        let local = |task: usize, doc: u64, n: u64| {
            let tokens: Vec<String> = ["quake", "city"].iter().map(|s| s.to_string()).collect();
            let mut cluster = Cluster::from_vector(
                super::super::ClusterId(0),
                &TweetVector {
                    id: "seed".into(),
                    doc: DocumentId(doc),
                    weights: vectorize(&tokens),
                },
            );
            cluster.total_tweets = n;
            cluster.tweets_added_this_block = n;
            TuplePayload::LocalClusters(LocalClusters {
                task,
                doc: DocumentId(doc),
                clusters: vec![cluster],
            })
        };

        // Document 0: two tasks contribute 20 each; merged cluster of 40
        // enters the store without an event.
        detector.process(&local(0, 0, 20), &mut out).unwrap();
        detector.process(&local(1, 0, 20), &mut out).unwrap();
        detector.on_document_end(DocumentId(0), &mut out).unwrap();
        {
            let guard = store.lock().unwrap();
            let snap = guard.snapshot().unwrap();
            assert_eq!(snap.clusters.len(), 1);
            assert_eq!(snap.clusters[0].total_tweets, 40);
            assert!(snap.events.is_empty());
            assert_eq!(guard.commit_count(), 1);
        }

        // Document 1: another 60 tweets of the same topic - growth event.
        detector.process(&local(0, 1, 35), &mut out).unwrap();
        detector.process(&local(1, 1, 25), &mut out).unwrap();
        detector.on_document_end(DocumentId(1), &mut out).unwrap();
        {
            let guard = store.lock().unwrap();
            let snap = guard.snapshot().unwrap();
            assert_eq!(guard.commit_count(), 2);
            assert_eq!(snap.events.len(), 1);
            match &snap.events[0] {
                EventRecord::Cluster(e) => {
                    assert!((e.growth_rate - 0.6).abs() < 1e-12);
                    assert!(e.top_terms.iter().any(|(t, _)| t == "quake"));
                }
                other => panic!("unexpected {other:?}"),
            }
        }
    }

    #[test]
    fn detector_resumes_ids_from_the_store() {
        let params = ClusterParams::default();
        let store = store::shared(MemoryStore::new());
        {
            let tokens: Vec<String> = ["old"].iter().map(|s| s.to_string()).collect();
            let mut cluster = Cluster::from_vector(
                super::super::ClusterId(7),
                &TweetVector {
                    id: "seed".into(),
                    doc: DocumentId(0),
                    weights: vectorize(&tokens),
                },
            );
            cluster.total_tweets = 40;
            store
                .lock()
                .unwrap()
                .commit_document(
                    DocumentId(0),
                    DocumentCommit {
                        upserts: vec![cluster],
                        ..DocumentCommit::default()
                    },
                )
                .unwrap();
        }
        let detector = ClusterDetector::new(params, store).unwrap();
        assert_eq!(detector.globals.len(), 1);
        assert_eq!(detector.next_global_id, 8);
    }

    #[test]
    fn vector_spout_vectorizes_and_filters() {
        let tweets = vec![
            Ok(ReplayItem::Tweet(
                RawTweet {
                    id: "1".into(),
                    ts: 0,
                    text: "RIP Muhammed Ali RIP".into(),
                    country: None,
                },
                DocumentId(0),
            )),
            Ok(ReplayItem::DocumentEnd(DocumentId(0))),
        ];
        let mut spout = VectorSpout::new(
            tweets.into_iter(),
            Arc::new(Preprocessor::new(Default::default(), false)),
            None,
        );
        match spout.next().unwrap() {
            SpoutItem::Emit(TuplePayload::Vector(v)) => {
                assert_eq!(v.weights["rip"], 0.5);
                assert_eq!(v.weights["muhammed"], 0.25);
                assert_eq!(v.weights["ali"], 0.25);
            }
            _ => panic!("expected a vector"),
        }
        assert!(matches!(
            spout.next().unwrap(),
            SpoutItem::DocumentEnd(DocumentId(0))
        ));
        assert!(matches!(spout.next().unwrap(), SpoutItem::Finished));
    }
}
