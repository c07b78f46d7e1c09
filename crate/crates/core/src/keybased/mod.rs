//! Uncommonly-common-word burst detection.
//!
//! Per document, every term whose occurrence count reaches the common-word
//! threshold gets a tf-idf value; a term becomes an event when the ratio of
//! its current tf-idf to the previous document's value reaches the configured
//! rate (new words with no previous value map to +infinity, gated by a small
//! absolute floor so one-off noise stays quiet).
//!
//! The corpus scope is the stream so far: `N` is the number of documents
//! processed up to and including the current one, and document frequencies
//! are maintained incrementally. The idf logarithm is natural; the base is
//! observable through the rate test, so it is pinned here.

mod bolts;

pub use bolts::{CountBolt, EvalMode, KeybasedDetector, WordSpout};

use std::collections::{BTreeMap, HashMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::DocumentId;

/// Bound on the retained tf-idf history of a term.
pub const HISTORY_CAPACITY: usize = 10;

#[derive(Debug, Clone)]
pub struct KeyParams {
    /// Occurrences within one document needed before a word is "common".
    pub common_word_threshold: u64,
    /// Minimum tf-idf increment rate for an event; must exceed 1.
    pub tfidf_event_rate: f64,
    /// Minimum current tf-idf for an event; keeps +infinity rates from
    /// flagging negligible words.
    pub absolute_floor: f64,
}

impl Default for KeyParams {
    fn default() -> Self {
        Self {
            common_word_threshold: 10,
            tfidf_event_rate: 2.0,
            absolute_floor: 1e-4,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum KeybasedError {
    #[error("term frequency is undefined for an empty document")]
    EmptyDocument,
}

/// Term frequency: occurrences of the term over total terms in the document.
pub fn tf(term_count: u64, doc_total_terms: u64) -> Result<f64, KeybasedError> {
    if doc_total_terms == 0 {
        return Err(KeybasedError::EmptyDocument);
    }
    debug_assert!(term_count <= doc_total_terms);
    Ok(term_count as f64 / doc_total_terms as f64)
}

/// Inverse document frequency over the stream so far:
/// `ln(N / (1 + doc_frequency))`. The +1 keeps the denominator positive; a
/// term present in every document goes non-positive and can never event.
pub fn idf(docs_processed: u64, doc_frequency: u64) -> f64 {
    debug_assert!(docs_processed >= 1);
    (docs_processed as f64 / (1.0 + doc_frequency as f64)).ln()
}

/// Ratio of the current document's tf-idf to the previous one's. A vanished
/// or non-positive current value maps to 0; a fresh burst over a non-positive
/// previous value maps to +infinity.
pub fn increment_rate(current: f64, previous: f64) -> f64 {
    if current <= 0.0 {
        0.0
    } else if previous <= 0.0 {
        f64::INFINITY
    } else {
        current / previous
    }
}

/// Bounded history of (document, tf-idf) evaluations for one term, oldest
/// first, documents strictly increasing.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TfidfHistory(VecDeque<(DocumentId, f64)>);

impl TfidfHistory {
    pub fn push(&mut self, doc: DocumentId, value: f64) {
        debug_assert!(self.0.back().is_none_or(|(d, _)| *d < doc));
        if self.0.len() == HISTORY_CAPACITY {
            self.0.pop_front();
        }
        self.0.push_back((doc, value));
    }

    pub fn entries(&self) -> impl Iterator<Item = (DocumentId, f64)> + '_ {
        self.0.iter().copied()
    }

    pub fn snapshot(&self) -> Vec<(DocumentId, f64)> {
        self.0.iter().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Everything tracked for one term.
#[derive(Debug, Clone, Default)]
pub struct TermStats {
    pub count_current: u64,
    pub doc_frequency: u64,
    pub tfidf_history: TfidfHistory,
}

/// A word flagged as an event in a document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordEvent {
    pub term: String,
    pub doc: DocumentId,
    #[serde(with = "rate_serde")]
    pub increment_rate: f64,
    /// Trailing tf-idf evaluations including the eventing document, at most
    /// [`HISTORY_CAPACITY`] entries - the data behind the per-event chart.
    pub history: Vec<(DocumentId, f64)>,
}

/// JSON has no +infinity literal, so the rate serializes as the string "inf"
/// when infinite and as a plain number otherwise.
pub mod rate_serde {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(rate: &f64, ser: S) -> Result<S::Ok, S::Error> {
        if rate.is_infinite() {
            "inf".serialize(ser)
        } else {
            rate.serialize(ser)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Text(String),
        }
        match Raw::deserialize(de)? {
            Raw::Number(n) => Ok(n),
            Raw::Text(s) if s == "inf" => Ok(f64::INFINITY),
            Raw::Text(s) => Err(serde::de::Error::custom(format!(
                "invalid increment rate {s:?}"
            ))),
        }
    }
}

/// The detector's single-writer state: document frequencies, bounded tf-idf
/// histories, and the previous document's counts for the rate denominator.
#[derive(Debug, Default)]
pub struct BurstTracker {
    stats: HashMap<String, TermStats>,
    prev_counts: HashMap<String, u64>,
    prev_total: u64,
    prev_doc: Option<DocumentId>,
}

impl BurstTracker {
    pub fn new() -> Self {
        Self::default()
    }

    /// tf-idf of a term in the previous document, as it was computed then:
    /// N excludes the current document and so does the document frequency.
    fn previous_tfidf(&self, term: &str, doc: DocumentId) -> f64 {
        if self.prev_doc != Some(DocumentId(doc.0.wrapping_sub(1))) || self.prev_total == 0 {
            return 0.0;
        }
        let count = self.prev_counts.get(term).copied().unwrap_or(0);
        if count == 0 || doc.0 == 0 {
            return 0.0;
        }
        let df = self
            .stats
            .get(term)
            .map(|s| s.doc_frequency)
            .unwrap_or(0);
        (count as f64 / self.prev_total as f64) * idf(doc.0, df)
    }

    /// Evaluate a term mid-document from partial counts without touching any
    /// state. Used by the sleep-mode detector, which cannot know document
    /// boundaries.
    pub fn evaluate_partial(
        &self,
        term: &str,
        doc: DocumentId,
        count_so_far: u64,
        total_so_far: u64,
        params: &KeyParams,
    ) -> Option<(f64, f64)> {
        if total_so_far == 0 {
            return None;
        }
        let df = self
            .stats
            .get(term)
            .map(|s| s.doc_frequency)
            .unwrap_or(0);
        let current =
            (count_so_far as f64 / total_so_far as f64) * idf(doc.0 + 1, df + 1);
        let rate = increment_rate(current, self.previous_tfidf(term, doc));
        (rate >= params.tfidf_event_rate && current > params.absolute_floor)
            .then_some((rate, current))
    }

    pub fn history(&self, term: &str) -> Option<&TfidfHistory> {
        self.stats.get(term).map(|s| &s.tfidf_history)
    }

    pub fn histories(&self) -> impl Iterator<Item = (&String, &TfidfHistory)> {
        self.stats.iter().map(|(t, s)| (t, &s.tfidf_history))
    }

    /// Close a document: compute tf-idf for every common word from the final
    /// counts, flag events, push histories, and advance the document
    /// frequencies. Counts must cover the whole document (empty map for an
    /// empty document). Returns the document's events in term order.
    pub fn finish_document(
        &mut self,
        doc: DocumentId,
        counts: &BTreeMap<String, u64>,
        total_terms: u64,
        params: &KeyParams,
    ) -> Vec<WordEvent> {
        let mut events = Vec::new();
        if total_terms > 0 {
            let docs_processed = doc.0 + 1;
            for (term, &count) in counts {
                if count < params.common_word_threshold {
                    continue;
                }
                let previous = self.previous_tfidf(term, doc);
                let stats = self.stats.entry(term.clone()).or_default();
                stats.count_current = count;
                let current =
                    (count as f64 / total_terms as f64) * idf(docs_processed, stats.doc_frequency + 1);
                stats.tfidf_history.push(doc, current);
                let rate = increment_rate(current, previous);
                if rate >= params.tfidf_event_rate && current > params.absolute_floor {
                    events.push(WordEvent {
                        term: term.clone(),
                        doc,
                        increment_rate: rate,
                        history: stats.tfidf_history.snapshot(),
                    });
                }
            }
        }
        // Every term present in the document counts toward its frequency,
        // common or not - rare words still matter for later idf values.
        for term in counts.keys() {
            self.stats.entry(term.clone()).or_default().doc_frequency += 1;
        }
        self.prev_counts = counts.iter().map(|(t, c)| (t.clone(), *c)).collect();
        self.prev_total = total_terms;
        self.prev_doc = Some(doc);
        events
    }
}
