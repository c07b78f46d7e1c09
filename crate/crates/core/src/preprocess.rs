//! Text normalization: noise stripping, tokenization, repeat collapsing,
//! stop-word removal, stemming, and normalized term-weight vectors.
//!
//! The pipeline order is fixed: strip noise, lowercase, tokenize,
//! collapse character repeats, drop stop words, stem, drop empties.

use std::collections::{BTreeMap, HashSet};
use std::sync::LazyLock;

use regex::Regex;
use rust_stemmers::{Algorithm, Stemmer};
use serde::{Deserialize, Serialize};

use crate::ingest::DocumentId;

/// English stop words shipped with the crate, one per line.
pub const DEFAULT_STOPWORDS: &str = include_str!("../data/stopwords_en.txt");

static URL_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(?:https?://|www\.)\S+").expect("url regex"));

/// A tweet after preprocessing: its tokens in original order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcessedTweet {
    pub id: String,
    pub doc: DocumentId,
    pub tokens: Vec<String>,
}

/// Sparse normalized term weights of one tweet. Weights sum to 1 unless the
/// token list was empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TweetVector {
    pub id: String,
    pub doc: DocumentId,
    pub weights: BTreeMap<String, f64>,
}

impl TweetVector {
    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Collapse every run of three or more identical characters to a single one:
/// "noooooooooooooo" becomes "no", while "coffee" keeps its double letters.
pub fn collapse_repeats(word: &str) -> String {
    let mut out = String::with_capacity(word.len());
    let mut chars = word.chars().peekable();
    while let Some(c) = chars.next() {
        let mut run = 1usize;
        while chars.peek() == Some(&c) {
            chars.next();
            run += 1;
        }
        let keep = if run >= 3 { 1 } else { run };
        for _ in 0..keep {
            out.push(c);
        }
    }
    out
}

/// Remove URLs and blank out check-in posts. Text starting with "I am at"
/// (case-insensitive, after leading whitespace) becomes empty; URLs are
/// excised in place without touching surrounding whitespace.
pub fn strip_noise(text: &str) -> String {
    let trimmed = text.trim_start();
    if trimmed.len() >= 7
        && trimmed.is_char_boundary(7)
        && trimmed[..7].eq_ignore_ascii_case("i am at")
    {
        return String::new();
    }
    URL_RE.replace_all(text, "").into_owned()
}

/// Split on whitespace and punctuation. `#` and `@` survive only as the
/// leading character of a token; tokens with no alphanumeric content are
/// dropped.
fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let flush = |current: &mut String, tokens: &mut Vec<String>| {
        if current.chars().any(char::is_alphanumeric) {
            tokens.push(std::mem::take(current));
        } else {
            current.clear();
        }
    };
    for c in text.chars() {
        if c.is_alphanumeric() || ((c == '#' || c == '@') && current.is_empty()) {
            current.push(c);
        } else {
            flush(&mut current, &mut tokens);
        }
    }
    flush(&mut current, &mut tokens);
    tokens
}

/// The full normalization pipeline with a configurable stop-word list and an
/// optional English stemmer.
pub struct Preprocessor {
    stopwords: HashSet<String>,
    stemmer: Option<Stemmer>,
}

impl Preprocessor {
    pub fn new(stopwords: HashSet<String>, stemming: bool) -> Self {
        Self {
            stopwords,
            stemmer: stemming.then(|| Stemmer::create(Algorithm::English)),
        }
    }

    pub fn with_default_stopwords(stemming: bool) -> Self {
        Self::new(parse_stopwords(DEFAULT_STOPWORDS), stemming)
    }

    pub fn preprocess(&self, text: &str) -> Vec<String> {
        let cleaned = strip_noise(text);
        let lowered = cleaned.to_lowercase();
        tokenize(&lowered)
            .into_iter()
            .map(|t| collapse_repeats(&t))
            .filter(|t| !t.is_empty() && !self.stopwords.contains(t))
            .map(|t| match &self.stemmer {
                Some(stemmer) => stemmer.stem(&t).into_owned(),
                None => t,
            })
            .filter(|t| !t.is_empty())
            .collect()
    }

    /// Tokenize a tweet that has been assigned to a document.
    pub fn process_tweet(&self, tweet: &crate::ingest::RawTweet, doc: DocumentId) -> ProcessedTweet {
        ProcessedTweet {
            id: tweet.id.clone(),
            doc,
            tokens: self.preprocess(&tweet.text),
        }
    }
}

/// Parse a stop-word file: one word per line, lowercased, blanks ignored.
pub fn parse_stopwords(text: &str) -> HashSet<String> {
    text.lines()
        .map(|l| l.trim().to_lowercase())
        .filter(|l| !l.is_empty())
        .collect()
}

/// Term weights of a token list: `count(term) / len(tokens)`. An empty token
/// list maps to an empty weight map.
pub fn vectorize(tokens: &[String]) -> BTreeMap<String, f64> {
    if tokens.is_empty() {
        return BTreeMap::new();
    }
    let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
    for t in tokens {
        *counts.entry(t.as_str()).or_insert(0) += 1;
    }
    let total = tokens.len() as f64;
    counts
        .into_iter()
        .map(|(t, c)| (t.to_string(), c as f64 / total))
        .collect()
}
