//! Event detection over replayed tweet corpora.
//!
//! Two detectors run on a built-in spout/bolt dataflow runtime:
//!
//! * **keybased** - flags "uncommonly common" words whose tf-idf jumped
//!   sharply between consecutive time documents;
//! * **clustering** - grows text clusters incrementally in two phases
//!   (per-task local clustering, then a per-document global merge) and flags
//!   clusters by their growth rate.
//!
//! Supporting modules cover corpus replay ([`ingest`]), text normalization
//! ([`preprocess`]), the dataflow engine ([`runtime`]), pluggable persistence
//! ([`store`]), and the experiment driver with synthetic corpus generation
//! ([`eval`]).

pub mod clustering;
pub mod eval;
pub mod ingest;
pub mod keybased;
pub mod preprocess;
pub mod runtime;
pub mod store;
pub mod stream;

pub use ingest::{DocumentId, RawTweet};
pub use preprocess::{Preprocessor, TweetVector};
pub use runtime::{BarrierMode, Grouping, RunConfig};
