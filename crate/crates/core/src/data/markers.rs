use super::vocab::{CLS, E1_CLOSE, E1_OPEN, E2_CLOSE, E2_OPEN, SEP};
use super::DataError;
use crate::graph::Span;

/// Token sequence with `[CLS]`/`[SEP]` and event markers inserted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarkedSequence {
    pub tokens: Vec<String>,
    /// Position of original token `k` in `tokens`.
    pub token_positions: Vec<usize>,
    pub cls: usize,
    /// Positions of the `<e1>` and `<e2>` opening markers.
    pub e1_marker: usize,
    pub e2_marker: usize,
}

/// `[CLS] ... <e1> event1 </e1> ... <e2> event2 </e2> ... [SEP]`, with the
/// marker pairs placed around the spans in text order.
pub fn insert_markers(tokens: &[String], e1: Span, e2: Span) -> Result<MarkedSequence, DataError> {
    if e1.overlap(&e2) > 0 {
        return Err(DataError::MarkerCollision { e1, e2 });
    }
    for s in [e1, e2] {
        if s.start > s.end || s.end >= tokens.len() {
            return Err(DataError::SpanOutOfRange {
                line: 0,
                field: "event span".into(),
                span: s,
                tokens: tokens.len(),
            });
        }
    }
    let mut out = Vec::with_capacity(tokens.len() + 6);
    let mut token_positions = Vec::with_capacity(tokens.len());
    let (mut e1_marker, mut e2_marker) = (0, 0);
    out.push(CLS.to_string());
    for (k, tok) in tokens.iter().enumerate() {
        if k == e1.start {
            e1_marker = out.len();
            out.push(E1_OPEN.to_string());
        }
        if k == e2.start {
            e2_marker = out.len();
            out.push(E2_OPEN.to_string());
        }
        token_positions.push(out.len());
        out.push(tok.clone());
        if k == e1.end {
            out.push(E1_CLOSE.to_string());
        }
        if k == e2.end {
            out.push(E2_CLOSE.to_string());
        }
    }
    out.push(SEP.to_string());
    Ok(MarkedSequence {
        tokens: out,
        token_positions,
        cls: 0,
        e1_marker,
        e2_marker,
    })
}

/// `[CLS] tokens [SEP]` without event markers.
pub fn plain_sequence(tokens: &[String]) -> Vec<String> {
    let mut out = Vec::with_capacity(tokens.len() + 2);
    out.push(CLS.to_string());
    out.extend(tokens.iter().cloned());
    out.push(SEP.to_string());
    out
}
