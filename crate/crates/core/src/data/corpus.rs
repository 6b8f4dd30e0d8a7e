use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::DataError;
use crate::graph::Span;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventMention {
    pub event_id: String,
    pub token_span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledPair {
    pub e1: String,
    pub e2: String,
    pub label: u8,
}

/// One sentence-level document with its AMR graph, alignments and labeled
/// event pairs. Token spans are inclusive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub doc_id: String,
    pub topic_id: String,
    pub sentence: String,
    pub tokens: Vec<String>,
    pub amr: String,
    pub alignments: BTreeMap<String, Span>,
    pub events: Vec<EventMention>,
    pub pairs: Vec<LabeledPair>,
}

impl CorpusRecord {
    pub fn event(&self, id: &str) -> Option<&EventMention> {
        self.events.iter().find(|e| e.event_id == id)
    }

    /// Checks spans, event references and labels. `line` is only used for
    /// error reporting.
    pub fn validate(&self, line: usize) -> Result<(), DataError> {
        let n = self.tokens.len();
        let check = |field: String, span: Span| {
            if span.start > span.end || span.end >= n {
                Err(DataError::SpanOutOfRange {
                    line,
                    field,
                    span,
                    tokens: n,
                })
            } else {
                Ok(())
            }
        };
        for (var, span) in &self.alignments {
            check(format!("alignments.{var}"), *span)?;
        }
        let mut ids = BTreeSet::new();
        for e in &self.events {
            check(format!("events.{}.token_span", e.event_id), e.token_span)?;
            if !ids.insert(e.event_id.as_str()) {
                return Err(DataError::SchemaViolation {
                    line,
                    field: "events".into(),
                    message: format!("duplicate event id `{}`", e.event_id),
                });
            }
        }
        for (i, p) in self.pairs.iter().enumerate() {
            for (slot, id) in [("e1", &p.e1), ("e2", &p.e2)] {
                if !ids.contains(id.as_str()) {
                    return Err(DataError::SchemaViolation {
                        line,
                        field: format!("pairs[{i}].{slot}"),
                        message: format!("undeclared event `{id}`"),
                    });
                }
            }
            if p.e1 == p.e2 {
                return Err(DataError::SchemaViolation {
                    line,
                    field: format!("pairs[{i}]"),
                    message: "pair joins an event with itself".into(),
                });
            }
            if p.label > 1 {
                return Err(DataError::SchemaViolation {
                    line,
                    field: format!("pairs[{i}].label"),
                    message: format!("label {} is not binary", p.label),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SkippedLine {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LoadReport {
    pub skipped: Vec<SkippedLine>,
}

fn field_from_serde(msg: &str) -> String {
    msg.split('`')
        .nth(1)
        .filter(|_| msg.contains("field `"))
        .unwrap_or("<record>")
        .to_string()
}

/// Parses line-delimited JSON. Malformed lines are collected in the report
/// unless `fail_fast` is set.
pub fn parse_corpus(text: &str, fail_fast: bool) -> Result<(Vec<CorpusRecord>, LoadReport), DataError> {
    let mut records = Vec::new();
    let mut report = LoadReport::default();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<CorpusRecord>(raw)
            .map_err(|e| DataError::SchemaViolation {
                line,
                field: field_from_serde(&e.to_string()),
                message: e.to_string(),
            })
            .and_then(|r| r.validate(line).map(|_| r));
        match parsed {
            Ok(r) => records.push(r),
            Err(e) if fail_fast => return Err(e),
            Err(e) => report.skipped.push(SkippedLine {
                line,
                reason: e.to_string(),
            }),
        }
    }
    Ok((records, report))
}

pub fn load_corpus(path: impl AsRef<Path>, fail_fast: bool) -> Result<(Vec<CorpusRecord>, LoadReport), DataError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| DataError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    parse_corpus(&text, fail_fast)
}

pub fn write_corpus(records: &[CorpusRecord], mut w: impl Write) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
