//! Deterministic synthetic corpus generation with a ground-truth sidecar.
//!
//! A corpus is assembled per document from four ingredient groups, any of
//! which may be absent: zipf-ish background chatter with per-document "hot"
//! words (organic bursts), constant-frequency words (flat tf-idf, never an
//! event), planted word bursts, and planted near-duplicate topic tweets for
//! the clustering detector. Everything is driven by one seeded RNG, so equal
//! specs produce byte-identical files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use super::fingerprint_bytes;
use crate::ingest::RawTweet;
use crate::preprocess::{parse_stopwords, Preprocessor, DEFAULT_STOPWORDS};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BackgroundSpec {
    pub tweets_per_doc: u32,
    pub vocab_size: u32,
    pub tokens_per_tweet_min: u32,
    pub tokens_per_tweet_max: u32,
    /// Vocabulary words boosted within one document, creating organic
    /// bursts that both detectors can chew on.
    pub hot_words_per_doc: u32,
    /// Upper bound on extra occurrences a hot word gains in its document.
    pub hot_extra_occurrences: u32,
    /// Word-frequency skew: word ranked r is drawn with weight 1/r^e.
    /// 1 gives the usual zipf head, 0 a uniform background.
    #[serde(default = "default_zipf")]
    pub zipf_exponent: f64,
}

fn default_zipf() -> f64 {
    1.0
}

impl Default for BackgroundSpec {
    fn default() -> Self {
        Self {
            tweets_per_doc: 400,
            vocab_size: 300,
            tokens_per_tweet_min: 5,
            tokens_per_tweet_max: 10,
            hot_words_per_doc: 2,
            hot_extra_occurrences: 40,
            zipf_exponent: default_zipf(),
        }
    }
}

/// Words that appear with the same count in every document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstantWords {
    pub count: u32,
    pub repeats_per_doc: u32,
}

/// A word absent elsewhere, planted with `occurrences` in one document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WordBurst {
    pub word: String,
    pub doc: u32,
    pub occurrences: u32,
}

/// Near-duplicate tweets about one set of terms, scheduled per document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TopicSpec {
    pub terms: Vec<String>,
    pub schedule: Vec<TopicDoc>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TopicDoc {
    pub doc: u32,
    pub tweets: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub documents: u32,
    #[serde(default = "default_start_ts")]
    pub start_ts: i64,
    #[serde(default = "default_window")]
    pub window_seconds: u32,
    #[serde(default)]
    pub background: Option<BackgroundSpec>,
    #[serde(default)]
    pub constant_words: Option<ConstantWords>,
    #[serde(default)]
    pub word_bursts: Vec<WordBurst>,
    #[serde(default)]
    pub topics: Vec<TopicSpec>,
    #[serde(default)]
    pub country: Option<String>,
}

fn default_start_ts() -> i64 {
    1_464_652_800 // 2016-05-31 00:00:00 UTC
}

fn default_window() -> u32 {
    crate::ingest::DEFAULT_WINDOW_SECONDS
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            documents: 20,
            start_ts: default_start_ts(),
            window_seconds: default_window(),
            background: Some(BackgroundSpec::default()),
            constant_words: None,
            word_bursts: Vec::new(),
            topics: Vec::new(),
            country: None,
        }
    }
}

/// A planted word burst with the token it becomes after preprocessing (the
/// default pipeline: stemming on, shipped stop-word list).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlantedWord {
    pub surface: String,
    pub token: String,
    pub doc: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlantedTopic {
    pub terms: Vec<String>,
    pub tokens: Vec<String>,
    pub schedule: Vec<TopicDoc>,
}

/// What was planted where; written next to the corpus for acceptance checks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruth {
    pub documents: u32,
    pub window_seconds: u32,
    pub start_ts: i64,
    pub word_bursts: Vec<PlantedWord>,
    pub topics: Vec<PlantedTopic>,
}

const CONSONANTS: [char; 14] = [
    'b', 'd', 'f', 'g', 'k', 'l', 'm', 'n', 'p', 'r', 's', 't', 'v', 'z',
];
const VOWELS: [char; 5] = ['a', 'e', 'i', 'o', 'u'];

/// Deterministic nonsense word made of consonant-vowel syllables. Such words
/// never contain repeated adjacent characters, so they pass preprocessing
/// untouched apart from stemming.
fn raw_word(mut index: u64) -> String {
    let mut word = String::with_capacity(6);
    for _ in 0..3 {
        let syllable = (index % 70) as usize;
        index /= 70;
        word.push(CONSONANTS[syllable / 5]);
        word.push(VOWELS[syllable % 5]);
    }
    word
}

/// The `n` vocabulary words starting at enumeration offset `base`, skipping
/// anything on the stop-word list.
fn vocab(base: u64, n: u32) -> Vec<String> {
    let stopwords = parse_stopwords(DEFAULT_STOPWORDS);
    let mut words = Vec::with_capacity(n as usize);
    let mut index = base;
    while words.len() < n as usize {
        let word = raw_word(index);
        index += 1;
        if !stopwords.contains(&word) {
            words.push(word);
        }
    }
    words
}

/// Offset keeping constant-word surfaces disjoint from background vocabulary.
const CONSTANT_BASE: u64 = 200_000;

/// Build the corpus in memory along with its ground truth.
pub fn generate(spec: &SyntheticSpec) -> (Vec<RawTweet>, GroundTruth) {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let preprocessor = Preprocessor::with_default_stopwords(true);

    let background_vocab = spec
        .background
        .as_ref()
        .map(|b| vocab(0, b.vocab_size))
        .unwrap_or_default();
    let constant_vocab = spec
        .constant_words
        .as_ref()
        .map(|c| vocab(CONSTANT_BASE, c.count))
        .unwrap_or_default();

    // Rank-weighted cumulative distribution over the background vocabulary.
    let zipf_exponent = spec
        .background
        .as_ref()
        .map(|b| b.zipf_exponent)
        .unwrap_or(1.0);
    let cumulative: Vec<f64> = {
        let mut acc = 0.0;
        background_vocab
            .iter()
            .enumerate()
            .map(|(rank, _)| {
                acc += 1.0 / ((rank + 1) as f64).powf(zipf_exponent);
                acc
            })
            .collect()
    };
    let pick_background = |rng: &mut ChaCha8Rng| -> &str {
        let total = *cumulative.last().expect("non-empty vocab");
        let needle = rng.gen_range(0.0..total);
        let idx = cumulative.partition_point(|&c| c < needle);
        &background_vocab[idx.min(background_vocab.len() - 1)]
    };

    let mut tweets: Vec<RawTweet> = Vec::new();
    let mut next_id = 0u64;

    for doc in 0..spec.documents {
        let mut texts: Vec<String> = Vec::new();

        if let Some(background) = spec.background.as_ref().filter(|_| !background_vocab.is_empty()) {
            for _ in 0..background.tweets_per_doc {
                let len = rng
                    .gen_range(background.tokens_per_tweet_min..=background.tokens_per_tweet_max);
                let tokens: Vec<&str> = (0..len).map(|_| pick_background(&mut rng)).collect();
                texts.push(tokens.join(" "));
            }
            // Hot words: a handful of vocabulary words surge in this document.
            for _ in 0..background.hot_words_per_doc {
                let word = background_vocab[rng.gen_range(0..background_vocab.len())].clone();
                let extra = rng.gen_range(0..=background.hot_extra_occurrences);
                for _ in 0..extra {
                    let slot = rng.gen_range(0..texts.len());
                    texts[slot].push(' ');
                    texts[slot].push_str(&word);
                }
            }
        }

        if let Some(constant) = &spec.constant_words {
            // Each bundle tweet carries every constant word once, so each
            // word's per-document count equals repeats_per_doc exactly.
            for _ in 0..constant.repeats_per_doc {
                texts.push(constant_vocab.join(" "));
            }
        }

        for burst in &spec.word_bursts {
            if burst.doc != doc {
                continue;
            }
            let mut remaining = burst.occurrences;
            while remaining > 0 {
                let chunk = remaining.min(10);
                remaining -= chunk;
                let mut text = vec![burst.word.as_str(); chunk as usize].join(" ");
                if !background_vocab.is_empty() {
                    text.push(' ');
                    text.push_str(pick_background(&mut rng));
                }
                texts.push(text);
            }
        }

        for topic in &spec.topics {
            let Some(entry) = topic.schedule.iter().find(|t| t.doc == doc) else {
                continue;
            };
            for _ in 0..entry.tweets {
                let mut words: Vec<String> = topic.terms.clone();
                if rng.gen_bool(0.1) {
                    // Occasional emphasis repeat, like "RIP ... RIP".
                    words.push(topic.terms[0].clone());
                }
                if !background_vocab.is_empty() && rng.gen_bool(0.2) {
                    words.push(pick_background(&mut rng).to_string());
                }
                texts.push(words.join(" "));
            }
        }

        texts.shuffle(&mut rng);

        let window = i64::from(spec.window_seconds);
        let count = texts.len() as i64;
        for (slot, text) in texts.into_iter().enumerate() {
            let offset = if count == 0 {
                0
            } else {
                (slot as i64 * window / count).min(window - 1)
            };
            tweets.push(RawTweet {
                id: format!("t{next_id:08}"),
                ts: spec.start_ts + i64::from(doc) * window + offset,
                text,
                country: spec.country.clone(),
            });
            next_id += 1;
        }
    }

    let truth = GroundTruth {
        documents: spec.documents,
        window_seconds: spec.window_seconds,
        start_ts: spec.start_ts,
        word_bursts: spec
            .word_bursts
            .iter()
            .map(|b| PlantedWord {
                surface: b.word.clone(),
                token: preprocessor
                    .preprocess(&b.word)
                    .into_iter()
                    .next()
                    .unwrap_or_else(|| b.word.clone()),
                doc: b.doc,
            })
            .collect(),
        topics: spec
            .topics
            .iter()
            .map(|t| PlantedTopic {
                terms: t.terms.clone(),
                tokens: t
                    .terms
                    .iter()
                    .flat_map(|term| preprocessor.preprocess(term))
                    .collect(),
                schedule: t.schedule.clone(),
            })
            .collect(),
    };

    (tweets, truth)
}

/// Serialize a corpus as line-delimited records; returns its fingerprint.
pub fn corpus_bytes(tweets: &[RawTweet]) -> (Vec<u8>, String) {
    let mut bytes = Vec::new();
    for tweet in tweets {
        serde_json::to_writer(&mut bytes, tweet).expect("tweet serialization");
        bytes.push(b'\n');
    }
    let fingerprint = fingerprint_bytes(&bytes);
    (bytes, fingerprint)
}

/// Generate and write corpus plus ground-truth sidecar. Returns the corpus
/// fingerprint.
pub fn generate_to_files(
    spec: &SyntheticSpec,
    corpus_path: &Path,
    truth_path: Option<&Path>,
) -> std::io::Result<(String, GroundTruth)> {
    let (tweets, truth) = generate(spec);
    let (bytes, fingerprint) = corpus_bytes(&tweets);
    let mut out = BufWriter::new(File::create(corpus_path)?);
    out.write_all(&bytes)?;
    out.flush()?;
    if let Some(path) = truth_path {
        let mut out = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut out, &truth)?;
        out.flush()?;
    }
    Ok((fingerprint, truth))
}

/// Check that a user-supplied word survives preprocessing as one token; burst
/// words that dissolve (stop words, pure punctuation) would be undetectable.
pub fn plantable(word: &str) -> bool {
    Preprocessor::with_default_stopwords(true)
        .preprocess(word)
        .len()
        == 1
}
