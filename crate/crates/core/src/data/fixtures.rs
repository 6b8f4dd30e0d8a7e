//! Fixtures bundled with the binary for `check` and `gradcheck`.

use super::corpus::{parse_corpus, CorpusRecord};

pub const AMR_FIXTURES: &str = include_str!("../../fixtures/amr.txt");
pub const CORPUS_FIXTURE: &str = include_str!("../../fixtures/corpus.jsonl");

/// PENMAN graphs from [`AMR_FIXTURES`], one per blank-line separated block.
pub fn amr_fixtures() -> Vec<String> {
    AMR_FIXTURES
        .split("\n\n")
        .map(str::trim)
        .filter(|b| b.lines().any(|l| !l.trim_start().starts_with('#') && !l.trim().is_empty()))
        .map(String::from)
        .collect()
}

pub fn corpus_fixture() -> Vec<CorpusRecord> {
    parse_corpus(CORPUS_FIXTURE, true).expect("bundled corpus is valid").0
}

/// The shot/protect example.
pub fn shot_protect() -> CorpusRecord {
    corpus_fixture().into_iter().next().unwrap()
}
