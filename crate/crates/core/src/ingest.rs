//! Corpus parsing and time-ordered replay.
//!
//! A corpus is a UTF-8 file with one JSON record per line (`id`, `ts`, `text`,
//! optional `country`), sorted by `ts` ascending. Replay assigns every tweet to
//! a fixed-width time document and emits an end-of-document marker between
//! documents, including for windows that contain no tweets at all.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Width of a document window in seconds when none is configured (6 minutes).
pub const DEFAULT_WINDOW_SECONDS: u32 = 360;

/// One tweet record as stored in the corpus file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawTweet {
    pub id: String,
    /// Epoch seconds, UTC.
    pub ts: i64,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub country: Option<String>,
}

/// Index of the fixed-width time window a tweet falls into.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct DocumentId(pub u64);

impl DocumentId {
    pub fn value(self) -> u64 {
        self.0
    }
}

impl fmt::Display for DocumentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line}: malformed corpus record: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: empty tweet id")]
    EmptyId { line: usize },
    #[error("duplicate tweet id {id:?}")]
    DuplicateId { id: String },
    #[error("tweet {id:?} at ts {ts} precedes stream start {start}")]
    BeforeStreamStart { id: String, ts: i64, start: i64 },
    #[error("tweet {id:?} at ts {ts} arrives after ts {prev}; corpus must be sorted by timestamp")]
    OutOfOrder { id: String, ts: i64, prev: i64 },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Parse one corpus line into a tweet. The text field is whitespace-trimmed.
pub fn parse_corpus_line(line: &str, line_no: usize) -> Result<RawTweet, IngestError> {
    let mut tweet: RawTweet = serde_json::from_str(line).map_err(|source| IngestError::Parse {
        line: line_no,
        source,
    })?;
    if tweet.id.is_empty() {
        return Err(IngestError::EmptyId { line: line_no });
    }
    tweet.text = tweet.text.trim().to_string();
    Ok(tweet)
}

/// Map a tweet onto its document: `floor((ts - stream_start) / window_seconds)`.
/// A tweet exactly on a window boundary belongs to the later document.
pub fn assign_document(
    tweet: &RawTweet,
    stream_start: i64,
    window_seconds: u32,
) -> Result<DocumentId, IngestError> {
    assert!(window_seconds > 0, "window_seconds must be positive");
    if tweet.ts < stream_start {
        return Err(IngestError::BeforeStreamStart {
            id: tweet.id.clone(),
            ts: tweet.ts,
            start: stream_start,
        });
    }
    Ok(DocumentId(
        (tweet.ts - stream_start) as u64 / u64::from(window_seconds),
    ))
}

/// Line-by-line corpus reader that tracks line numbers for error reporting.
/// Blank lines are skipped.
pub struct CorpusReader<R> {
    inner: io::Lines<R>,
    line_no: usize,
}

impl CorpusReader<BufReader<File>> {
    pub fn open(path: &Path) -> io::Result<Self> {
        Ok(Self::new(BufReader::new(File::open(path)?)))
    }
}

impl<R: BufRead> CorpusReader<R> {
    pub fn new(reader: R) -> Self {
        Self {
            inner: reader.lines(),
            line_no: 0,
        }
    }
}

impl<R: BufRead> Iterator for CorpusReader<R> {
    type Item = Result<RawTweet, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.inner.next()? {
                Ok(line) => line,
                Err(e) => return Some(Err(e.into())),
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            return Some(parse_corpus_line(&line, self.line_no));
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ReplayConfig {
    pub window_seconds: u32,
    /// When `None` the stream start is the first tweet's timestamp truncated
    /// down to a whole window, which keeps document numbering deterministic.
    pub stream_start: Option<i64>,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        Self {
            window_seconds: DEFAULT_WINDOW_SECONDS,
            stream_start: None,
        }
    }
}

/// One element of the replayed stream.
#[derive(Debug, Clone, PartialEq)]
pub enum ReplayItem {
    Tweet(RawTweet, DocumentId),
    /// All tweets of the named document have been emitted.
    DocumentEnd(DocumentId),
}

/// Replays a corpus in timestamp order, interleaving `DocumentEnd` markers.
///
/// Windows without any tweets still produce a marker so that downstream
/// per-document bookkeeping stays aligned with wall-clock windows. Ordering
/// violations and duplicate ids abort the replay.
pub struct Replayer<I> {
    source: I,
    window_seconds: u32,
    stream_start: Option<i64>,
    current_doc: Option<DocumentId>,
    last_ts: Option<i64>,
    seen_ids: HashSet<String>,
    queued: Option<(RawTweet, DocumentId)>,
    pending_eod: Option<(u64, u64)>, // inclusive range of documents to close
    done: bool,
}

impl<I> Replayer<I>
where
    I: Iterator<Item = Result<RawTweet, IngestError>>,
{
    pub fn new(source: I, config: ReplayConfig) -> Self {
        assert!(config.window_seconds > 0, "window_seconds must be positive");
        Self {
            source,
            window_seconds: config.window_seconds,
            stream_start: config.stream_start,
            current_doc: None,
            last_ts: None,
            seen_ids: HashSet::new(),
            queued: None,
            pending_eod: None,
            done: false,
        }
    }

    fn admit(&mut self, tweet: RawTweet) -> Result<(RawTweet, DocumentId), IngestError> {
        if let Some(prev) = self.last_ts {
            if tweet.ts < prev {
                return Err(IngestError::OutOfOrder {
                    id: tweet.id.clone(),
                    ts: tweet.ts,
                    prev,
                });
            }
        }
        if !self.seen_ids.insert(tweet.id.clone()) {
            return Err(IngestError::DuplicateId {
                id: tweet.id.clone(),
            });
        }
        let start = *self.stream_start.get_or_insert_with(|| {
            tweet.ts.div_euclid(i64::from(self.window_seconds)) * i64::from(self.window_seconds)
        });
        let doc = assign_document(&tweet, start, self.window_seconds)?;
        self.last_ts = Some(tweet.ts);
        Ok((tweet, doc))
    }
}

impl<I> Iterator for Replayer<I>
where
    I: Iterator<Item = Result<RawTweet, IngestError>>,
{
    type Item = Result<ReplayItem, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        // Drain document-end markers accumulated by a document jump.
        if let Some((next, last)) = self.pending_eod {
            if next <= last {
                self.pending_eod = if next < last {
                    Some((next + 1, last))
                } else {
                    None
                };
                return Some(Ok(ReplayItem::DocumentEnd(DocumentId(next))));
            }
            self.pending_eod = None;
        }
        if let Some((tweet, doc)) = self.queued.take() {
            self.current_doc = Some(doc);
            return Some(Ok(ReplayItem::Tweet(tweet, doc)));
        }
        if self.done {
            return None;
        }
        match self.source.next() {
            Some(Ok(tweet)) => {
                let (tweet, doc) = match self.admit(tweet) {
                    Ok(pair) => pair,
                    Err(e) => {
                        self.done = true;
                        return Some(Err(e));
                    }
                };
                let current = self.current_doc.unwrap_or(DocumentId(0));
                self.current_doc = Some(current);
                if doc > current {
                    // Close every document up to (but not including) the new one.
                    self.pending_eod = Some((current.0, doc.0 - 1));
                    self.queued = Some((tweet, doc));
                    return self.next();
                }
                Some(Ok(ReplayItem::Tweet(tweet, doc)))
            }
            Some(Err(e)) => {
                self.done = true;
                Some(Err(e))
            }
            None => {
                self.done = true;
                self.current_doc
                    .map(|doc| Ok(ReplayItem::DocumentEnd(doc)))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tweet(id: &str, ts: i64) -> RawTweet {
        RawTweet {
            id: id.into(),
            ts,
            text: format!("text {id}"),
            country: None,
        }
    }

    fn replay_all(tweets: Vec<RawTweet>, config: ReplayConfig) -> Vec<ReplayItem> {
        Replayer::new(tweets.into_iter().map(Ok), config)
            .collect::<Result<Vec<_>, _>>()
            .unwrap()
    }

    #[test]
    fn parses_minimal_record() {
        let t = parse_corpus_line(r#"{"id":"1","ts":1464652800,"text":"hello"}"#, 1).unwrap();
        assert_eq!(t.id, "1");
        assert_eq!(t.ts, 1464652800);
        assert_eq!(t.text, "hello");
        assert_eq!(t.country, None);
    }

    #[test]
    fn missing_text_is_an_error() {
        let err = parse_corpus_line(r#"{"id":"2","ts":1464652800}"#, 7).unwrap_err();
        match err {
            IngestError::Parse { line, .. } => assert_eq!(line, 7),
            other => panic!("unexpected error: {other:?}"),
        }
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let input = "{\"id\":\"1\",\"ts\":0,\"text\":\"ok\"}\nnot json\n";
        let mut reader = CorpusReader::new(input.as_bytes());
        assert!(reader.next().unwrap().is_ok());
        match reader.next().unwrap().unwrap_err() {
            IngestError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error: {other:?}"),
        }
    }

    #[test]
    fn text_is_trimmed() {
        let t = parse_corpus_line(r#"{"id":"1","ts":0,"text":"  padded "}"#, 1).unwrap();
        assert_eq!(t.text, "padded");
    }

    #[test]
    fn document_assignment_boundaries() {
        let start = 1_000_000;
        let doc = |ts| assign_document(&tweet("x", ts), start, 360).unwrap();
        assert_eq!(doc(start), DocumentId(0));
        assert_eq!(doc(start + 359), DocumentId(0));
        assert_eq!(doc(start + 360), DocumentId(1));
    }

    #[test]
    fn timestamp_before_start_is_rejected() {
        let err = assign_document(&tweet("x", 99), 100, 360).unwrap_err();
        assert!(matches!(err, IngestError::BeforeStreamStart { .. }));
    }

    #[test]
    fn replay_interleaves_document_ends() {
        let items = replay_all(
            vec![
                tweet("a", 0),
                tweet("b", 10),
                tweet("c", 359),
                tweet("d", 360),
                tweet("e", 700),
            ],
            ReplayConfig::default(),
        );
        let shape: Vec<String> = items
            .iter()
            .map(|i| match i {
                ReplayItem::Tweet(t, d) => format!("{}@{}", t.id, d),
                ReplayItem::DocumentEnd(d) => format!("EOD{d}"),
            })
            .collect();
        assert_eq!(shape, ["a@0", "b@0", "c@0", "EOD0", "d@1", "e@1", "EOD1"]);
    }

    #[test]
    fn empty_corpus_produces_empty_stream() {
        let items = replay_all(vec![], ReplayConfig::default());
        assert!(items.is_empty());
    }

    #[test]
    fn empty_windows_still_emit_markers() {
        // Tweets in doc 0 and doc 3; docs 1 and 2 are empty.
        let items = replay_all(
            vec![tweet("a", 0), tweet("b", 3 * 360 + 5)],
            ReplayConfig::default(),
        );
        let eods: Vec<u64> = items
            .iter()
            .filter_map(|i| match i {
                ReplayItem::DocumentEnd(d) => Some(d.0),
                _ => None,
            })
            .collect();
        assert_eq!(eods, [0, 1, 2, 3]);
    }

    #[test]
    fn marker_count_is_one_plus_max_document() {
        let items = replay_all(
            vec![tweet("a", 50), tweet("b", 2000), tweet("c", 2100)],
            ReplayConfig::default(),
        );
        let max_doc = items
            .iter()
            .filter_map(|i| match i {
                ReplayItem::Tweet(_, d) => Some(d.0),
                _ => None,
            })
            .max()
            .unwrap();
        let eods = items
            .iter()
            .filter(|i| matches!(i, ReplayItem::DocumentEnd(_)))
            .count() as u64;
        assert_eq!(eods, max_doc + 1);
    }

    #[test]
    fn explicit_stream_start_creates_leading_empty_documents() {
        let items = replay_all(
            vec![tweet("a", 800)],
            ReplayConfig {
                window_seconds: 360,
                stream_start: Some(0),
            },
        );
        let shape: Vec<String> = items
            .iter()
            .map(|i| match i {
                ReplayItem::Tweet(t, d) => format!("{}@{}", t.id, d),
                ReplayItem::DocumentEnd(d) => format!("EOD{d}"),
            })
            .collect();
        assert_eq!(shape, ["EOD0", "EOD1", "a@2", "EOD2"]);
    }

    #[test]
    fn derived_stream_start_truncates_to_window() {
        // First tweet at 725 with 360 s windows: start is 720, so doc 0.
        let items = replay_all(vec![tweet("a", 725), tweet("b", 1081)], ReplayConfig::default());
        assert_eq!(
            items[0],
            ReplayItem::Tweet(tweet("a", 725), DocumentId(0))
        );
        // 1081 >= 720 + 360, so it lands in doc 1.
        assert!(matches!(items[2], ReplayItem::Tweet(_, DocumentId(1))));
    }

    #[test]
    fn out_of_order_timestamp_aborts() {
        let mut replayer = Replayer::new(
            vec![Ok(tweet("a", 100)), Ok(tweet("b", 99))].into_iter(),
            ReplayConfig::default(),
        );
        assert!(replayer.next().unwrap().is_ok());
        let err = replayer.next().unwrap().unwrap_err();
        assert!(matches!(err, IngestError::OutOfOrder { .. }));
        assert!(replayer.next().is_none());
    }

    #[test]
    fn duplicate_id_aborts() {
        let mut replayer = Replayer::new(
            vec![Ok(tweet("a", 100)), Ok(tweet("a", 101))].into_iter(),
            ReplayConfig::default(),
        );
        assert!(replayer.next().unwrap().is_ok());
        let err = replayer.next().unwrap().unwrap_err();
        assert!(matches!(err, IngestError::DuplicateId { .. }));
    }

    #[test]
    fn seven_day_minutely_corpus_yields_1680_markers() {
        let tweets: Vec<RawTweet> = (0..7 * 24 * 60)
            .map(|i| tweet(&format!("t{i}"), i64::from(i) * 60))
            .collect();
        let eods = replay_all(tweets, ReplayConfig::default())
            .iter()
            .filter(|i| matches!(i, ReplayItem::DocumentEnd(_)))
            .count();
        assert_eq!(eods, 1680);
    }

    #[test]
    fn replay_preserves_input_order() {
        let tweets: Vec<RawTweet> = (0..500).map(|i| tweet(&format!("t{i}"), i * 37)).collect();
        let replayed: Vec<String> = replay_all(tweets.clone(), ReplayConfig::default())
            .into_iter()
            .filter_map(|i| match i {
                ReplayItem::Tweet(t, _) => Some(t.id),
                _ => None,
            })
            .collect();
        let original: Vec<String> = tweets.into_iter().map(|t| t.id).collect();
        assert_eq!(replayed, original);
    }

    #[test]
    fn document_ids_are_monotone() {
        let tweets: Vec<RawTweet> = (0..300).map(|i| tweet(&format!("t{i}"), i * i)).collect();
        let mut last = 0;
        for item in replay_all(tweets, ReplayConfig::default()) {
            if let ReplayItem::Tweet(_, d) = item {
                assert!(d.0 >= last);
                last = d.0;
            }
        }
    }
}
