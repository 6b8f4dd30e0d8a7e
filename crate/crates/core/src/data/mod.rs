//! Corpus records, contextual-embedding files, vocabularies, marker insertion
//! and the synthetic corpus generator.

pub mod corpus;
pub mod ctxemb;
pub mod fixtures;
pub mod markers;
pub mod synth;
pub mod vocab;

use thiserror::Error;

use crate::graph::Span;

pub use corpus::{load_corpus, parse_corpus, write_corpus, CorpusRecord, EventMention, LabeledPair, LoadReport, SkippedLine};
pub use ctxemb::{load_ctxemb, read_ctxemb, sequence_key, write_ctxemb, CtxEmbIndex, CTXEMB_MAGIC};
pub use markers::{insert_markers, plain_sequence, MarkedSequence};
pub use synth::{gen_synthetic, gen_synthetic_with, PairKind, SynthConfig, SynthPairTruth, SyntheticCorpus};
pub use vocab::Vocab;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: schema violation in `{field}`: {message}")]
    SchemaViolation {
        line: usize,
        field: String,
        message: String,
    },
    #[error("line {line}: `{field}` span {span} outside {tokens} tokens")]
    SpanOutOfRange {
        line: usize,
        field: String,
        span: Span,
        tokens: usize,
    },
    #[error("event spans {e1} and {e2} overlap; markers would collide")]
    MarkerCollision { e1: Span, e2: Span },
    #[error("bad magic: not a CTXEMB1 file")]
    BadMagic,
    #[error("payload truncated at byte {offset}")]
    TruncatedPayload { offset: usize },
    #[error("unexpected trailing bytes at offset {offset}")]
    TrailingBytes { offset: usize },
    #[error("sequence key at byte {offset} is not UTF-8")]
    InvalidUtf8 { offset: usize },
    #[error("sequence `{key}` has dimension {found}, file uses {expected}")]
    DimensionMismatch {
        key: String,
        expected: usize,
        found: usize,
    },
}
