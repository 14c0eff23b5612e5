//! Character-level code corpus: ingestion, prediction-type categories,
//! per-head sweeps and the paired t-test.

pub mod categorize;
pub mod corpus;
pub mod inspect;
pub mod stats;
pub mod sweep;
pub mod vocab;

pub use categorize::{categorize_characters, java_keywords, Category};
pub use corpus::{ingest, CodeFunction, IngestConfig, IngestReport};
pub use inspect::{inspect_head, HeadInspection};
pub use stats::{paired_t_test, PairedTestResult};
pub use sweep::{per_head_sweep, CodeSplit, HeadSweepRecord};
pub use vocab::CharVocab;
