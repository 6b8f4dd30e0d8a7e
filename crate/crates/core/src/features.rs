//! Turns corpus records into graph-backed documents and per-pair examples.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{insert_markers, sequence_key, CorpusRecord, DataError, MarkedSequence};
use crate::graph::{
    build_semantic_graph, khop_subgraph, resolve_event_node, shortest_paths, EventCentricStructure,
    GraphError, PathSequence, SemanticGraph, Span,
};
use crate::penman::{parse_penman, PenmanError};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("document `{doc_id}`: {source}")]
    Penman {
        doc_id: String,
        #[source]
        source: PenmanError,
    },
    #[error("document `{doc_id}`: {source}")]
    Graph {
        doc_id: String,
        #[source]
        source: GraphError,
    },
}

#[derive(Debug, Clone)]
pub struct Document {
    pub doc_id: String,
    pub topic_id: String,
    pub tokens: Vec<String>,
    pub graph: SemanticGraph,
}

#[derive(Debug, Clone)]
pub struct PairExample {
    pub doc: usize,
    pub pair_index: usize,
    pub e1_span: Span,
    pub e2_span: Span,
    pub e1_node: usize,
    pub e2_node: usize,
    pub centric1: EventCentricStructure,
    pub centric2: EventCentricStructure,
    /// Forward shortest paths followed by their reverses; empty when the
    /// events are disconnected.
    pub paths: Vec<PathSequence>,
    pub marked: MarkedSequence,
    pub label: u8,
}

impl PairExample {
    pub fn has_path(&self) -> bool {
        !self.paths.is_empty()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipCounts {
    /// Pairs dropped because an event span matches no aligned node.
    pub unaligned: usize,
    /// Pairs dropped because both mentions resolve to the same node.
    pub same_node: usize,
    /// Pairs dropped because the event spans overlap.
    pub overlapping: usize,
    /// Pairs kept with no connecting path.
    pub unreachable: usize,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub docs: Vec<Document>,
    pub pairs: Vec<PairExample>,
    pub skips: SkipCounts,
}

impl Dataset {
    pub fn key(&self, ex: &PairExample) -> String {
        sequence_key(&self.docs[ex.doc].doc_id, ex.pair_index)
    }

    pub fn labels(&self) -> Vec<u8> {
        self.pairs.iter().map(|p| p.label).collect()
    }

    /// Indices of pairs whose document id satisfies `keep`.
    pub fn pairs_where(&self, mut keep: impl FnMut(&Document) -> bool) -> Vec<usize> {
        self.pairs
            .iter()
            .enumerate()
            .filter(|(_, p)| keep(&self.docs[p.doc]))
            .map(|(i, _)| i)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureConfig {
    pub hops: usize,
    pub max_paths: usize,
}

pub fn prepare(records: &[CorpusRecord], cfg: FeatureConfig) -> Result<Dataset, FeatureError> {
    let mut docs = Vec::with_capacity(records.len());
    let mut pairs = Vec::new();
    let mut skips = SkipCounts::default();
    for rec in records {
        let doc = docs.len();
        let amr = parse_penman(&rec.amr).map_err(|source| FeatureError::Penman {
            doc_id: rec.doc_id.clone(),
            source,
        })?;
        let gerr = |source| FeatureError::Graph {
            doc_id: rec.doc_id.clone(),
            source,
        };
        let sg = build_semantic_graph(&amr, &rec.alignments, rec.tokens.len()).map_err(gerr)?;
        for (pair_index, p) in rec.pairs.iter().enumerate() {
            let (Some(m1), Some(m2)) = (rec.event(&p.e1), rec.event(&p.e2)) else {
                skips.unaligned += 1;
                continue;
            };
            let (s1, s2) = (m1.token_span, m2.token_span);
            let (n1, n2) = match (resolve_event_node(&sg, s1), resolve_event_node(&sg, s2)) {
                (Ok(a), Ok(b)) => (a, b),
                _ => {
                    skips.unaligned += 1;
                    continue;
                }
            };
            if n1 == n2 {
                skips.same_node += 1;
                continue;
            }
            let marked = match insert_markers(&rec.tokens, s1, s2) {
                Ok(m) => m,
                Err(DataError::MarkerCollision { .. }) => {
                    skips.overlapping += 1;
                    continue;
                }
                Err(e) => unreachable!("spans validated at load: {e}"),
            };
            let paths = match shortest_paths(&sg, n1, n2, cfg.max_paths) {
                Ok(p) => p,
                Err(GraphError::NoPath { .. }) => {
                    skips.unreachable += 1;
                    Vec::new()
                }
                Err(e) => return Err(gerr(e)),
            };
            pairs.push(PairExample {
                doc,
                pair_index,
                e1_span: s1,
                e2_span: s2,
                e1_node: n1,
                e2_node: n2,
                centric1: khop_subgraph(&sg, n1, cfg.hops).map_err(gerr)?,
                centric2: khop_subgraph(&sg, n2, cfg.hops).map_err(gerr)?,
                paths,
                marked,
                label: p.label,
            });
        }
        docs.push(Document {
            doc_id: rec.doc_id.clone(),
            topic_id: rec.topic_id.clone(),
            tokens: rec.tokens.clone(),
            graph: sg,
        });
    }
    Ok(Dataset { docs, pairs, skips })
}

/// Positions of the doc ids in a dataset, for fold plans keyed by id.
pub fn doc_index(ds: &Dataset) -> BTreeMap<&str, usize> {
    ds.docs
        .iter()
        .enumerate()
        .map(|(i, d)| (d.doc_id.as_str(), i))
        .collect()
}
