//! Semantic graph construction and the two structures extracted from it: the
//! L-hop neighborhood of an event and the shortest role paths between two
//! events.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::penman::{classify_role, AmrGraph, RoleClass};

/// Inclusive token span `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn single(i: usize) -> Self {
        Span { start: i, end: i }
    }

    pub fn len(&self) -> usize {
        self.end + 1 - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end < self.start
    }

    pub fn overlap(&self, other: &Span) -> usize {
        let lo = self.start.max(other.start);
        let hi = self.end.min(other.end);
        if hi >= lo {
            hi - lo + 1
        } else {
            0
        }
    }
}

impl From<[usize; 2]> for Span {
    fn from(v: [usize; 2]) -> Self {
        Span::new(v[0], v[1])
    }
}

impl From<Span> for [usize; 2] {
    fn from(s: Span) -> Self {
        [s.start, s.end]
    }
}

impl std::fmt::Display for Span {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{},{}]", self.start, self.end)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("alignment of node `{node}` to {span} is outside the {tokens}-token sentence")]
    AlignmentOutOfRange {
        node: String,
        span: Span,
        tokens: usize,
    },
    #[error("alignment refers to unknown node `{0}`")]
    UnknownAlignmentNode(String),
    #[error("no graph node is aligned to event span {0}")]
    NoAlignedNode(Span),
    #[error("no path between nodes {from} and {to}")]
    NoPath { from: usize, to: usize },
    #[error("path endpoints must differ (node {0})")]
    SameEndpoints(usize),
    #[error("hop count must be at least 1")]
    InvalidHops,
    #[error("node index {0} out of range")]
    BadNode(usize),
}

pub type RoleId = usize;

/// Number of relation types seen by the graph encoder: every role class in
/// both directions.
pub const NUM_RELATION_TYPES: usize = 2 * RoleClass::ALL.len();

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoleInfo {
    pub label: String,
    pub class: RoleClass,
    pub inverse: bool,
}

impl RoleInfo {
    /// Stable string key for the fine-grained relation, e.g. `ARG1^-1`.
    pub fn key(&self) -> String {
        if self.inverse {
            format!("{}^-1", self.label)
        } else {
            self.label.clone()
        }
    }

    pub fn relation_type(&self) -> usize {
        self.class.index() * 2 + usize::from(self.inverse)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SgNode {
    pub var: String,
    pub concept: String,
    pub span: Option<Span>,
}

impl SgNode {
    /// Nodes with no aligned tokens were introduced by the parser.
    pub fn is_auxiliary(&self) -> bool {
        self.span.is_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SgEdge {
    pub src: usize,
    pub role: RoleId,
    pub dst: usize,
    pub is_inverse: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SemanticGraph {
    pub nodes: Vec<SgNode>,
    pub edges: Vec<SgEdge>,
    pub role_vocab: Vec<RoleInfo>,
    /// Outgoing `(neighbor, role)` lists sorted ascending, duplicates removed.
    adjacency: Vec<Vec<(usize, RoleId)>>,
}

impl SemanticGraph {
    fn from_parts(nodes: Vec<SgNode>, edges: Vec<SgEdge>, role_vocab: Vec<RoleInfo>) -> Self {
        let mut adjacency = vec![Vec::new(); nodes.len()];
        for e in &edges {
            adjacency[e.src].push((e.dst, e.role));
        }
        for list in &mut adjacency {
            list.sort_unstable();
            list.dedup();
        }
        SemanticGraph {
            nodes,
            edges,
            role_vocab,
            adjacency,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Neighbors reachable over one edge (original or inverse), in
    /// `(node, role)` lexicographic order.
    pub fn neighbors(&self, node: usize) -> &[(usize, RoleId)] {
        &self.adjacency[node]
    }

    pub fn role(&self, id: RoleId) -> &RoleInfo {
        &self.role_vocab[id]
    }

    pub fn relation_type(&self, edge: &SgEdge) -> usize {
        self.role_vocab[edge.role].relation_type()
    }

    pub fn node_by_var(&self, var: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.var == var)
    }

    /// Undirected BFS distances from `source`; `None` when unreachable.
    pub fn distances_from(&self, source: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.nodes.len()];
        let mut queue = VecDeque::new();
        dist[source] = Some(0);
        queue.push_back(source);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].unwrap();
            for &(v, _) in &self.adjacency[u] {
                if dist[v].is_none() {
                    dist[v] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }
}

/// Adds one inverse edge per AMR edge and attaches token alignments.
///
/// Role ids are assigned per label in order of first appearance: the forward
/// direction gets `2k`, the inverse `2k + 1`.
pub fn build_semantic_graph(
    g: &AmrGraph,
    alignments: &BTreeMap<String, Span>,
    n_tokens: usize,
) -> Result<SemanticGraph, GraphError> {
    for (var, span) in alignments {
        if g.node(var).is_none() {
            return Err(GraphError::UnknownAlignmentNode(var.clone()));
        }
        if span.start > span.end || span.end >= n_tokens {
            return Err(GraphError::AlignmentOutOfRange {
                node: var.clone(),
                span: *span,
                tokens: n_tokens,
            });
        }
    }
    let nodes: Vec<SgNode> = g
        .nodes
        .iter()
        .map(|n| SgNode {
            var: n.id.clone(),
            concept: n.concept.clone(),
            span: alignments.get(&n.id).copied(),
        })
        .collect();
    let index: BTreeMap<&str, usize> = g
        .nodes
        .iter()
        .enumerate()
        .map(|(i, n)| (n.id.as_str(), i))
        .collect();

    let mut role_ids: BTreeMap<&str, RoleId> = BTreeMap::new();
    let mut role_vocab = Vec::new();
    let mut edges = Vec::with_capacity(g.edges.len() * 2);
    for e in &g.edges {
        let fwd = *role_ids.entry(e.role.as_str()).or_insert_with(|| {
            let class = classify_role(&e.role);
            role_vocab.push(RoleInfo {
                label: e.role.clone(),
                class,
                inverse: false,
            });
            role_vocab.push(RoleInfo {
                label: e.role.clone(),
                class,
                inverse: true,
            });
            role_vocab.len() - 2
        });
        let (s, t) = (index[e.source.as_str()], index[e.target.as_str()]);
        edges.push(SgEdge {
            src: s,
            role: fwd,
            dst: t,
            is_inverse: false,
        });
        edges.push(SgEdge {
            src: t,
            role: fwd + 1,
            dst: s,
            is_inverse: true,
        });
    }
    Ok(SemanticGraph::from_parts(nodes, edges, role_vocab))
}

/// Picks the node aligned to an event mention: maximum token overlap, then the
/// larger share of the node's own span covered, then the smallest index.
pub fn resolve_event_node(sg: &SemanticGraph, event_span: Span) -> Result<usize, GraphError> {
    let mut best: Option<(usize, usize, usize)> = None; // (overlap, node span len, index)
    for (i, n) in sg.nodes.iter().enumerate() {
        let Some(span) = n.span else { continue };
        let ov = span.overlap(&event_span);
        if ov == 0 {
            continue;
        }
        let better = match best {
            None => true,
            // overlap/len compares as overlap*len' vs overlap'*len; with equal
            // overlaps that is just the shorter node span
            Some((bo, bl, _)) => ov > bo || (ov == bo && span.len() < bl),
        };
        if better {
            best = Some((ov, span.len(), i));
        }
    }
    best.map(|(_, _, i)| i)
        .ok_or(GraphError::NoAlignedNode(event_span))
}

/// The L-hop neighborhood of an event node.
#[derive(Debug, Clone, PartialEq)]
pub struct EventCentricStructure {
    pub subgraph: SemanticGraph,
    /// Index of the event node inside `subgraph`.
    pub center: usize,
    pub hops: usize,
    /// `original[i]` is the index in the source graph of subgraph node `i`.
    pub original: Vec<usize>,
}

pub fn khop_subgraph(
    sg: &SemanticGraph,
    center: usize,
    hops: usize,
) -> Result<EventCentricStructure, GraphError> {
    if hops == 0 {
        return Err(GraphError::InvalidHops);
    }
    if center >= sg.len() {
        return Err(GraphError::BadNode(center));
    }
    let dist = sg.distances_from(center);
    let original: Vec<usize> = (0..sg.len())
        .filter(|&i| dist[i].is_some_and(|d| d <= hops))
        .collect();
    let mut remap = vec![usize::MAX; sg.len()];
    for (new, &old) in original.iter().enumerate() {
        remap[old] = new;
    }
    let nodes = original.iter().map(|&i| sg.nodes[i].clone()).collect();
    let edges = sg
        .edges
        .iter()
        .filter(|e| remap[e.src] != usize::MAX && remap[e.dst] != usize::MAX)
        .map(|e| SgEdge {
            src: remap[e.src],
            dst: remap[e.dst],
            ..*e
        })
        .collect();
    Ok(EventCentricStructure {
        subgraph: SemanticGraph::from_parts(nodes, edges, sg.role_vocab.clone()),
        center: remap[center],
        hops,
        original,
    })
}

/// Alternating node/role walk `v0, r0, v1, ..., vn`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PathSequence {
    pub nodes: Vec<usize>,
    pub roles: Vec<RoleId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathItem {
    Node(usize),
    Role(RoleId),
}

impl PathSequence {
    /// Number of edges.
    pub fn len(&self) -> usize {
        self.roles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.roles.is_empty()
    }

    pub fn start(&self) -> usize {
        self.nodes[0]
    }

    pub fn end(&self) -> usize {
        *self.nodes.last().unwrap()
    }

    /// `(v_n, r_{n-1}, ..., r_1, v_1)`: node and role order flipped, role ids
    /// kept as they are.
    pub fn reversed(&self) -> PathSequence {
        PathSequence {
            nodes: self.nodes.iter().rev().copied().collect(),
            roles: self.roles.iter().rev().copied().collect(),
        }
    }

    pub fn items(&self) -> Vec<PathItem> {
        let mut out = Vec::with_capacity(self.nodes.len() + self.roles.len());
        for (i, &n) in self.nodes.iter().enumerate() {
            out.push(PathItem::Node(n));
            if let Some(&r) = self.roles.get(i) {
                out.push(PathItem::Role(r));
            }
        }
        out
    }

    pub fn describe(&self, sg: &SemanticGraph) -> String {
        let mut s = sg.nodes[self.nodes[0]].concept.clone();
        for (r, &n) in self.roles.iter().zip(&self.nodes[1..]) {
            s.push_str(&format!(" -{}-> {}", sg.role(*r).key(), sg.nodes[n].concept));
        }
        s
    }
}

/// Default cap on forward shortest paths kept per event pair.
pub const DEFAULT_MAX_PATHS: usize = 8;

/// All shortest paths from `e1` to `e2` in lexicographic `(node, role)` order,
/// truncated to `k_max`, followed by the reverse of each kept path.
pub fn shortest_paths(
    sg: &SemanticGraph,
    e1: usize,
    e2: usize,
    k_max: usize,
) -> Result<Vec<PathSequence>, GraphError> {
    if e1 == e2 {
        return Err(GraphError::SameEndpoints(e1));
    }
    for n in [e1, e2] {
        if n >= sg.len() {
            return Err(GraphError::BadNode(n));
        }
    }
    let to_target = sg.distances_from(e2);
    if to_target[e1].is_none() {
        return Err(GraphError::NoPath { from: e1, to: e2 });
    }
    let mut forward = Vec::new();
    let mut nodes = vec![e1];
    let mut roles = Vec::new();
    collect_paths(sg, &to_target, e2, k_max, &mut nodes, &mut roles, &mut forward);
    let reverses: Vec<PathSequence> = forward.iter().map(PathSequence::reversed).collect();
    forward.extend(reverses);
    Ok(forward)
}

fn collect_paths(
    sg: &SemanticGraph,
    to_target: &[Option<usize>],
    target: usize,
    k_max: usize,
    nodes: &mut Vec<usize>,
    roles: &mut Vec<RoleId>,
    out: &mut Vec<PathSequence>,
) {
    if out.len() >= k_max {
        return;
    }
    let u = *nodes.last().unwrap();
    if u == target {
        out.push(PathSequence {
            nodes: nodes.clone(),
            roles: roles.clone(),
        });
        return;
    }
    let du = to_target[u].unwrap();
    for &(v, r) in sg.neighbors(u) {
        if to_target[v] == Some(du - 1) {
            nodes.push(v);
            roles.push(r);
            collect_paths(sg, to_target, target, k_max, nodes, roles, out);
            nodes.pop();
            roles.pop();
            if out.len() >= k_max {
                return;
            }
        }
    }
}
