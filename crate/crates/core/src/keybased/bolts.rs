//! Streaming pieces of the keybased detector: the word-emitting spout, the
//! per-partition count bolt, and the single-task event detector.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::sync::Arc;

use super::{BurstTracker, KeyParams, WordEvent};
use crate::ingest::{DocumentId, IngestError, RawTweet, ReplayItem};
use crate::preprocess::Preprocessor;
use crate::runtime::{Bolt, DynError, Emitter, Spout, SpoutItem};
use crate::store::{DocumentCommit, EventRecord, SharedStore};
use crate::stream::{CandidateStats, CountSummary, TuplePayload};

/// Replays the corpus, preprocesses each tweet, and emits one `Word` tuple
/// per token.
pub struct WordSpout<I> {
    replay: I,
    preprocessor: Arc<Preprocessor>,
    country: Option<String>,
    pending: VecDeque<TuplePayload>,
}

impl<I> WordSpout<I>
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

impl<I> Spout<TuplePayload> for WordSpout<I>
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
                    for term in processed.tokens {
                        self.pending.push_back(TuplePayload::Word { term, doc });
                    }
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

/// Counts the words of its term partition within the current document. A word
/// is signalled downstream exactly once per document, at the moment its count
/// reaches the common-word threshold; the partition's final tallies follow in
/// one summary at the document boundary.
pub struct CountBolt {
    task: usize,
    threshold: u64,
    counts: HashMap<String, u64>,
    total_tokens: u64,
}

impl CountBolt {
    pub fn new(task: usize, params: &KeyParams) -> Self {
        Self {
            task,
            threshold: params.common_word_threshold,
            counts: HashMap::new(),
            total_tokens: 0,
        }
    }
}

impl Bolt<TuplePayload> for CountBolt {
    fn process(
        &mut self,
        payload: &TuplePayload,
        out: &mut dyn Emitter<TuplePayload>,
    ) -> Result<(), DynError> {
        let TuplePayload::Word { term, doc } = payload else {
            return Ok(());
        };
        self.total_tokens += 1;
        let count = self.counts.entry(term.clone()).or_insert(0);
        *count += 1;
        if *count == self.threshold {
            out.emit(TuplePayload::Candidate {
                term: term.clone(),
                doc: *doc,
                stats: CandidateStats {
                    task: self.task,
                    count: *count,
                    partition_tokens: self.total_tokens,
                },
            })?;
        }
        Ok(())
    }

    fn on_document_end(
        &mut self,
        doc: DocumentId,
        out: &mut dyn Emitter<TuplePayload>,
    ) -> Result<(), DynError> {
        let mut counts: Vec<(String, u64)> = self.counts.drain().collect();
        counts.sort();
        out.emit(TuplePayload::CountSummary(CountSummary {
            task: self.task,
            doc,
            total_tokens: self.total_tokens,
            counts,
        }))?;
        self.total_tokens = 0;
        Ok(())
    }
}

/// When the detector evaluates candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    /// Evaluate all common words from final counts at the document boundary
    /// (direct-barrier runs; matches the batch computation exactly).
    AtDocumentEnd,
    /// Evaluate each candidate the moment it arrives, from whatever partial
    /// counts exist (sleep runs; the detector cannot trust boundaries).
    PerEmission,
}

/// Single-task event detector holding all per-term state. Commits events and
/// touched histories to the store once per document.
pub struct KeybasedDetector {
    params: KeyParams,
    mode: EvalMode,
    tracker: BurstTracker,
    summaries: BTreeMap<DocumentId, Vec<CountSummary>>,
    // Per-emission bookkeeping, keyed by document since interleaving runs
    // can mix documents.
    partial_totals: BTreeMap<DocumentId, HashMap<usize, u64>>,
    flagged: HashSet<(String, DocumentId)>,
    pending_events: BTreeMap<DocumentId, Vec<WordEvent>>,
    store: SharedStore,
}

impl KeybasedDetector {
    pub fn new(params: KeyParams, mode: EvalMode, store: SharedStore) -> Self {
        Self {
            params,
            mode,
            tracker: BurstTracker::new(),
            summaries: BTreeMap::new(),
            partial_totals: BTreeMap::new(),
            flagged: HashSet::new(),
            pending_events: BTreeMap::new(),
            store,
        }
    }

    fn evaluate_candidate(&mut self, term: &str, doc: DocumentId, stats: &CandidateStats) {
        let totals = self.partial_totals.entry(doc).or_default();
        totals.insert(stats.task, stats.partition_tokens);
        let doc_total: u64 = totals.values().sum();
        if self.flagged.contains(&(term.to_string(), doc)) {
            return;
        }
        if let Some((rate, current)) =
            self.tracker
                .evaluate_partial(term, doc, stats.count, doc_total, &self.params)
        {
            self.flagged.insert((term.to_string(), doc));
            let mut history = self
                .tracker
                .history(term)
                .map(|h| h.snapshot())
                .unwrap_or_default();
            history.push((doc, current));
            if history.len() > super::HISTORY_CAPACITY {
                history.remove(0);
            }
            self.pending_events
                .entry(doc)
                .or_default()
                .push(WordEvent {
                    term: term.to_string(),
                    doc,
                    increment_rate: rate,
                    history,
                });
        }
    }
}

impl Bolt<TuplePayload> for KeybasedDetector {
    fn process(
        &mut self,
        payload: &TuplePayload,
        _out: &mut dyn Emitter<TuplePayload>,
    ) -> Result<(), DynError> {
        match payload {
            TuplePayload::Candidate { term, doc, stats } => {
                if self.mode == EvalMode::PerEmission {
                    self.evaluate_candidate(term, *doc, stats);
                }
            }
            TuplePayload::CountSummary(summary) => {
                self.summaries
                    .entry(summary.doc)
                    .or_default()
                    .push(summary.clone());
            }
            _ => {}
        }
        Ok(())
    }

    fn on_document_end(
        &mut self,
        doc: DocumentId,
        _out: &mut dyn Emitter<TuplePayload>,
    ) -> Result<(), DynError> {
        let mut counts: BTreeMap<String, u64> = BTreeMap::new();
        let mut total = 0u64;
        for summary in self.summaries.remove(&doc).unwrap_or_default() {
            total += summary.total_tokens;
            for (term, count) in summary.counts {
                *counts.entry(term).or_insert(0) += count;
            }
        }
        let evaluated = self
            .tracker
            .finish_document(doc, &counts, total, &self.params);
        let events = match self.mode {
            EvalMode::AtDocumentEnd => evaluated,
            // Per-emission mode already flagged its events mid-document; the
            // boundary pass only maintained histories and frequencies.
            EvalMode::PerEmission => self.pending_events.remove(&doc).unwrap_or_default(),
        };
        let histories: Vec<(String, Vec<(DocumentId, f64)>)> = counts
            .keys()
            .filter_map(|term| {
                self.tracker
                    .history(term)
                    .filter(|h| !h.is_empty())
                    .map(|h| (term.clone(), h.snapshot()))
            })
            .collect();
        self.partial_totals.remove(&doc);
        self.flagged.retain(|(_, d)| *d != doc);
        self.store
            .lock()
            .expect("store lock")
            .commit_document(
                doc,
                DocumentCommit {
                    word_histories: histories,
                    events: events.into_iter().map(EventRecord::Word).collect(),
                    ..DocumentCommit::default()
                },
            )
            .map_err(|e| -> DynError { Box::new(e) })?;
        Ok(())
    }
}
