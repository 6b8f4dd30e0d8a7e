//! PENMAN notation reader/writer for AMR graphs and the coarse role taxonomy
//! used to type graph edges.
//!
//! Inverted roles (`:ARG0-of`) are normalized on read: the stored edge always
//! points from the semantic head to the dependent, and remembers that it was
//! written inverted so the serializer can reproduce the original tree shape.
//! Attribute values (numbers, strings, `-`) become constant leaf nodes whose
//! concept is the literal text.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PenmanError {
    #[error("unbalanced parentheses at byte {offset}")]
    UnbalancedParens { offset: usize },
    #[error("variable `{variable}` declared twice (second declaration at byte {offset})")]
    DuplicateVariableDeclaration { variable: String, offset: usize },
    #[error("empty graph at byte {offset}")]
    EmptyGraph { offset: usize },
    #[error("expected {expected} at byte {offset}, found `{found}`")]
    UnexpectedToken {
        expected: &'static str,
        found: String,
        offset: usize,
    },
    #[error("trailing input after the graph at byte {offset}")]
    TrailingInput { offset: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeKind {
    Variable,
    Constant,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AmrNode {
    /// Variable name, or a synthesized `parent.k` address for constants.
    pub id: String,
    pub concept: String,
    pub kind: NodeKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AmrEdge {
    pub source: String,
    /// Role label without the leading colon and without an `-of` suffix.
    pub role: String,
    pub target: String,
    /// The edge was written as `:role-of` under its target.
    pub inverted: bool,
}

impl AmrEdge {
    /// The node the edge was written under.
    pub fn surface_parent(&self) -> &str {
        if self.inverted {
            &self.target
        } else {
            &self.source
        }
    }

    pub fn surface_child(&self) -> &str {
        if self.inverted {
            &self.source
        } else {
            &self.target
        }
    }

    pub fn surface_role(&self) -> String {
        if self.inverted {
            format!("{}-of", self.role)
        } else {
            self.role.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AmrGraph {
    pub nodes: Vec<AmrNode>,
    pub edges: Vec<AmrEdge>,
    pub root: String,
}

/// Variable-renaming-invariant summary used to compare graphs for isomorphism
/// up to naming.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphSignature {
    pub node_count: usize,
    pub edge_count: usize,
    pub concepts: Vec<String>,
    pub labeled_edges: Vec<(String, String, String)>,
    pub root_concept: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphInvariantError {
    #[error("graph has no nodes")]
    NoNodes,
    #[error("duplicate node id `{0}`")]
    DuplicateNode(String),
    #[error("root `{0}` is not a declared variable")]
    BadRoot(String),
    #[error("edge endpoint `{0}` is not a declared node")]
    DanglingEndpoint(String),
    #[error("node `{0}` is not reachable from the root")]
    Unreachable(String),
}

impl AmrGraph {
    pub fn node(&self, id: &str) -> Option<&AmrNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }

    pub fn constants(&self) -> impl Iterator<Item = &AmrNode> {
        self.nodes.iter().filter(|n| n.kind == NodeKind::Constant)
    }

    pub fn variables(&self) -> impl Iterator<Item = &AmrNode> {
        self.nodes.iter().filter(|n| n.kind == NodeKind::Variable)
    }

    /// Checks the structural invariants the serializer relies on.
    pub fn validate(&self) -> Result<(), GraphInvariantError> {
        if self.nodes.is_empty() {
            return Err(GraphInvariantError::NoNodes);
        }
        let mut ids = BTreeSet::new();
        for n in &self.nodes {
            if !ids.insert(n.id.as_str()) {
                return Err(GraphInvariantError::DuplicateNode(n.id.clone()));
            }
        }
        match self.node(&self.root) {
            Some(n) if n.kind == NodeKind::Variable => {}
            _ => return Err(GraphInvariantError::BadRoot(self.root.clone())),
        }
        for e in &self.edges {
            for end in [&e.source, &e.target] {
                if !ids.contains(end.as_str()) {
                    return Err(GraphInvariantError::DanglingEndpoint(end.clone()));
                }
            }
        }
        let mut seen = BTreeSet::new();
        let mut stack = vec![self.root.as_str()];
        while let Some(cur) = stack.pop() {
            if !seen.insert(cur) {
                continue;
            }
            for e in &self.edges {
                if e.surface_parent() == cur {
                    stack.push(e.surface_child());
                }
            }
        }
        if let Some(n) = self.nodes.iter().find(|n| !seen.contains(n.id.as_str())) {
            return Err(GraphInvariantError::Unreachable(n.id.clone()));
        }
        Ok(())
    }

    pub fn signature(&self) -> GraphSignature {
        let concept_of: BTreeMap<&str, &str> = self
            .nodes
            .iter()
            .map(|n| (n.id.as_str(), n.concept.as_str()))
            .collect();
        let mut concepts: Vec<String> = self.nodes.iter().map(|n| n.concept.clone()).collect();
        concepts.sort();
        let mut labeled_edges: Vec<(String, String, String)> = self
            .edges
            .iter()
            .map(|e| {
                (
                    concept_of[e.source.as_str()].to_string(),
                    e.role.clone(),
                    concept_of[e.target.as_str()].to_string(),
                )
            })
            .collect();
        labeled_edges.sort();
        GraphSignature {
            node_count: self.nodes.len(),
            edge_count: self.edges.len(),
            concepts,
            labeled_edges,
            root_concept: concept_of
                .get(self.root.as_str())
                .map(|c| c.to_string())
                .unwrap_or_default(),
        }
    }
}

impl fmt::Display for AmrGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&serialize_penman(self))
    }
}

// ---------------------------------------------------------------------------
// Lexer

#[derive(Debug, Clone, PartialEq)]
enum Tok<'a> {
    LParen,
    RParen,
    Slash,
    Role(&'a str),
    Str(&'a str),
    Sym(&'a str),
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer { src, pos: 0 }
    }

    fn skip_trivia(&mut self) {
        let bytes = self.src.as_bytes();
        loop {
            while self.pos < bytes.len() && bytes[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            // metadata lines such as `# ::snt ...`
            if self.pos < bytes.len() && bytes[self.pos] == b'#' {
                while self.pos < bytes.len() && bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
                continue;
            }
            break;
        }
    }

    fn peek(&mut self) -> Result<Option<(usize, Tok<'a>)>, PenmanError> {
        let save = self.pos;
        let t = self.next_tok();
        self.pos = save;
        t
    }

    fn next_tok(&mut self) -> Result<Option<(usize, Tok<'a>)>, PenmanError> {
        self.skip_trivia();
        let bytes = self.src.as_bytes();
        let start = self.pos;
        if start >= bytes.len() {
            return Ok(None);
        }
        let tok = match bytes[start] {
            b'(' => {
                self.pos += 1;
                Tok::LParen
            }
            b')' => {
                self.pos += 1;
                Tok::RParen
            }
            b'/' => {
                self.pos += 1;
                Tok::Slash
            }
            b'"' => {
                let mut i = start + 1;
                let mut escaped = false;
                while i < bytes.len() {
                    match bytes[i] {
                        b'\\' if !escaped => escaped = true,
                        b'"' if !escaped => break,
                        _ => escaped = false,
                    }
                    i += 1;
                }
                if i >= bytes.len() {
                    return Err(PenmanError::UnexpectedToken {
                        expected: "closing quote",
                        found: "end of input".into(),
                        offset: start,
                    });
                }
                self.pos = i + 1;
                Tok::Str(&self.src[start..=i])
            }
            b':' => {
                let end = self.symbol_end(start + 1);
                if end == start + 1 {
                    return Err(PenmanError::UnexpectedToken {
                        expected: "role name",
                        found: ":".into(),
                        offset: start,
                    });
                }
                self.pos = end;
                Tok::Role(&self.src[start + 1..end])
            }
            _ => {
                let end = self.symbol_end(start);
                self.pos = end;
                Tok::Sym(&self.src[start..end])
            }
        };
        Ok(Some((start, tok)))
    }

    fn symbol_end(&self, from: usize) -> usize {
        let bytes = self.src.as_bytes();
        let mut i = from;
        while i < bytes.len() {
            let b = bytes[i];
            if b.is_ascii_whitespace() || matches!(b, b'(' | b')' | b'/' | b':' | b'"') {
                break;
            }
            i += 1;
        }
        i
    }
}

fn describe(t: &Option<(usize, Tok<'_>)>) -> String {
    match t {
        None => "end of input".into(),
        Some((_, Tok::LParen)) => "(".into(),
        Some((_, Tok::RParen)) => ")".into(),
        Some((_, Tok::Slash)) => "/".into(),
        Some((_, Tok::Role(r))) => format!(":{r}"),
        Some((_, Tok::Str(s))) | Some((_, Tok::Sym(s))) => (*s).to_string(),
    }
}

// ---------------------------------------------------------------------------
// Parser

enum RawTarget {
    Node(String),
    Atom { text: String, quoted: bool },
}

struct RawEdge {
    parent: String,
    role: String,
    target: RawTarget,
    /// 1-based position among the parent's surface edges.
    slot: usize,
}

struct Parser<'a> {
    lex: Lexer<'a>,
    nodes: Vec<AmrNode>,
    declared: BTreeSet<String>,
    raw: Vec<RawEdge>,
    depth_open: Vec<usize>,
}

/// Role labels ending in `-of` that are not inversions.
const NON_INVERTED_OF: &[&str] = &["consist-of", "prep-out-of", "prep-on-behalf-of"];

fn split_inverted(label: &str) -> (String, bool) {
    if NON_INVERTED_OF.contains(&label) {
        return (label.to_string(), false);
    }
    match label.strip_suffix("-of") {
        Some(base) if !base.is_empty() => (base.to_string(), true),
        _ => (label.to_string(), false),
    }
}

impl<'a> Parser<'a> {
    fn expect_sym(&mut self, expected: &'static str) -> Result<(usize, &'a str), PenmanError> {
        match self.lex.next_tok()? {
            Some((off, Tok::Sym(s))) => Ok((off, s)),
            other => Err(self.unexpected(expected, other)),
        }
    }

    fn unexpected(&self, expected: &'static str, found: Option<(usize, Tok<'_>)>) -> PenmanError {
        let offset = found.as_ref().map(|(o, _)| *o).unwrap_or(self.lex.src.len());
        if found.is_none() && !self.depth_open.is_empty() {
            return PenmanError::UnbalancedParens {
                offset: *self.depth_open.last().unwrap(),
            };
        }
        PenmanError::UnexpectedToken {
            expected,
            found: describe(&found),
            offset,
        }
    }

    /// Parses `( var / concept :role child ... )`; the opening paren has been
    /// consumed.
    fn node(&mut self, open_at: usize) -> Result<String, PenmanError> {
        self.depth_open.push(open_at);
        let (var_at, var) = self.expect_sym("variable")?;
        if !self.declared.insert(var.to_string()) {
            return Err(PenmanError::DuplicateVariableDeclaration {
                variable: var.to_string(),
                offset: var_at,
            });
        }
        match self.lex.next_tok()? {
            Some((_, Tok::Slash)) => {}
            other => return Err(self.unexpected("`/`", other)),
        }
        let concept = match self.lex.next_tok()? {
            Some((_, Tok::Sym(s))) | Some((_, Tok::Str(s))) => s.to_string(),
            other => return Err(self.unexpected("concept", other)),
        };
        self.nodes.push(AmrNode {
            id: var.to_string(),
            concept,
            kind: NodeKind::Variable,
        });
        let mut slot = 0;
        loop {
            match self.lex.next_tok()? {
                Some((_, Tok::RParen)) => break,
                Some((_, Tok::Role(role))) => {
                    slot += 1;
                    // reserve the slot so edges keep document order
                    let at = self.raw.len();
                    self.raw.push(RawEdge {
                        parent: var.to_string(),
                        role: role.to_string(),
                        target: RawTarget::Node(String::new()),
                        slot,
                    });
                    let target = match self.lex.next_tok()? {
                        Some((off, Tok::LParen)) => RawTarget::Node(self.node(off)?),
                        Some((_, Tok::Sym(s))) => RawTarget::Atom {
                            text: s.to_string(),
                            quoted: false,
                        },
                        Some((_, Tok::Str(s))) => RawTarget::Atom {
                            text: s.to_string(),
                            quoted: true,
                        },
                        other => return Err(self.unexpected("role target", other)),
                    };
                    self.raw[at].target = target;
                }
                other => return Err(self.unexpected("role or `)`", other)),
            }
        }
        self.depth_open.pop();
        Ok(var.to_string())
    }
}

/// Parses a single PENMAN s-expression into an [`AmrGraph`].
pub fn parse_penman(text: &str) -> Result<AmrGraph, PenmanError> {
    let mut p = Parser {
        lex: Lexer::new(text),
        nodes: Vec::new(),
        declared: BTreeSet::new(),
        raw: Vec::new(),
        depth_open: Vec::new(),
    };
    let root = match p.lex.next_tok()? {
        None => return Err(PenmanError::EmptyGraph { offset: text.len() }),
        Some((off, Tok::LParen)) => {
            if let Some((_, Tok::RParen)) = p.lex.peek()? {
                return Err(PenmanError::EmptyGraph { offset: off });
            }
            p.node(off)?
        }
        Some((off, Tok::RParen)) => return Err(PenmanError::UnbalancedParens { offset: off }),
        other => return Err(p.unexpected("`(`", other)),
    };
    match p.lex.next_tok()? {
        None => {}
        Some((off, Tok::RParen)) => return Err(PenmanError::UnbalancedParens { offset: off }),
        Some((off, _)) => return Err(PenmanError::TrailingInput { offset: off }),
    }

    // Resolve atoms: declared variables become re-entrant edges, everything
    // else a constant leaf.
    let mut nodes = p.nodes;
    let mut edges = Vec::with_capacity(p.raw.len());
    for raw in p.raw {
        let (role, inverted) = split_inverted(&raw.role);
        let child = match raw.target {
            RawTarget::Node(v) => v,
            RawTarget::Atom { text, quoted } if !quoted && p.declared.contains(&text) => text,
            RawTarget::Atom { text, .. } => {
                let id = format!("{}.{}", raw.parent, raw.slot);
                nodes.push(AmrNode {
                    id: id.clone(),
                    concept: text,
                    kind: NodeKind::Constant,
                });
                id
            }
        };
        let (source, target) = if inverted {
            (child, raw.parent)
        } else {
            (raw.parent, child)
        };
        edges.push(AmrEdge {
            source,
            role,
            target,
            inverted,
        });
    }
    Ok(AmrGraph { nodes, edges, root })
}

// ---------------------------------------------------------------------------
// Serializer

/// Writes the graph as a single-line PENMAN string. Children are emitted in
/// original edge order; a variable is declared at its first mention.
pub fn serialize_penman(g: &AmrGraph) -> String {
    let mut out = String::new();
    let mut emitted = BTreeSet::new();
    let mut used_edges = vec![false; g.edges.len()];
    write_node(g, &g.root, &mut out, &mut emitted, &mut used_edges);
    out
}

fn write_node<'g>(
    g: &'g AmrGraph,
    id: &'g str,
    out: &mut String,
    emitted: &mut BTreeSet<&'g str>,
    used_edges: &mut [bool],
) {
    let Some(node) = g.node(id) else {
        out.push_str(id);
        return;
    };
    if node.kind == NodeKind::Constant {
        out.push_str(&node.concept);
        return;
    }
    if !emitted.insert(id) {
        out.push_str(id);
        return;
    }
    out.push('(');
    out.push_str(id);
    out.push_str(" / ");
    out.push_str(&node.concept);
    for (i, e) in g.edges.iter().enumerate() {
        if used_edges[i] || e.surface_parent() != id {
            continue;
        }
        used_edges[i] = true;
        out.push_str(" :");
        out.push_str(&e.surface_role());
        out.push(' ');
        write_node(g, e.surface_child(), out, emitted, used_edges);
    }
    out.push(')');
}

// ---------------------------------------------------------------------------
// Role classes

/// Coarse role taxonomy for AMR edge labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub enum RoleClass {
    CoreRole,
    Operator,
    Means,
    Temporal,
    Others,
}

impl RoleClass {
    pub const ALL: [RoleClass; 5] = [
        RoleClass::CoreRole,
        RoleClass::Operator,
        RoleClass::Means,
        RoleClass::Temporal,
        RoleClass::Others,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

const MEANS_ROLES: &[&str] = &["manner", "instrument", "topic", "medium"];

const TEMPORAL_ROLES: &[&str] = &[
    "time",
    "year",
    "weekday",
    "duration",
    "decade",
    "century",
    "era",
    "month",
    "day",
    "dayperiod",
    "season",
    "timezone",
];

fn numbered(label: &str, prefix: &str) -> bool {
    label
        .strip_prefix(prefix)
        .is_some_and(|n| !n.is_empty() && n.bytes().all(|b| b.is_ascii_digit()))
}

/// Maps any role label (with or without `:` and `-of`) onto its class.
pub fn classify_role(label: &str) -> RoleClass {
    let label = label.strip_prefix(':').unwrap_or(label);
    let (base, _) = split_inverted(label);
    let base = base.as_str();
    if numbered(base, "ARG") {
        RoleClass::CoreRole
    } else if numbered(base, "op") {
        RoleClass::Operator
    } else if MEANS_ROLES.contains(&base) {
        RoleClass::Means
    } else if TEMPORAL_ROLES.contains(&base) {
        RoleClass::Temporal
    } else {
        RoleClass::Others
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const SHOT_PROTECT: &str = "(c / cause-01 :ARG0 (p / protect-01 :ARG0 (p2 / person :name (n / name :op1 \"Horton\")) :ARG1 (p3 / person :ARG0-of (s2 / study-01))) :ARG1 (s / shoot-02 :ARG1 p2))";

    #[test]
    fn single_edge() {
        let g = parse_penman("(p / protect-01 :ARG0 (p2 / person))").unwrap();
        assert_eq!(g.nodes.len(), 2);
        assert_eq!(g.root, "p");
        assert_eq!(
            g.edges,
            vec![AmrEdge {
                source: "p".into(),
                role: "ARG0".into(),
                target: "p2".into(),
                inverted: false
            }]
        );
    }

    #[test]
    fn reentrancy_becomes_edge() {
        let g = parse_penman("(c / cause-01 :ARG0 (s / shoot-02) :ARG1 s)").unwrap();
        assert_eq!(g.nodes.len(), 2);
        assert_eq!(g.edges.len(), 2);
        assert_eq!(g.edges[1].target, "s");
        assert_eq!(g.edges[1].role, "ARG1");
    }

    #[test]
    fn inverted_role_is_normalized() {
        let g = parse_penman("(p / person :ARG0-of (s / study-01))").unwrap();
        let e = &g.edges[0];
        assert_eq!((e.source.as_str(), e.role.as_str(), e.target.as_str()), ("s", "ARG0", "p"));
        assert!(e.inverted);
        assert_eq!(serialize_penman(&g), "(p / person :ARG0-of (s / study-01))");
    }

    #[test]
    fn constants_are_leaves() {
        let g = parse_penman("(n / name :op1 \"Horton\" :polarity - :quant 5)").unwrap();
        let consts: Vec<_> = g.constants().map(|n| (n.id.as_str(), n.concept.as_str())).collect();
        assert_eq!(consts, vec![("n.1", "\"Horton\""), ("n.2", "-"), ("n.3", "5")]);
        assert_eq!(g.edges.len(), 3);
    }

    #[test]
    fn single_node_serializes() {
        let g = parse_penman("(x / dog)").unwrap();
        assert_eq!(serialize_penman(&g), "(x / dog)");
    }

    #[test]
    fn shot_protect_roundtrip() {
        let g = parse_penman(SHOT_PROTECT).unwrap();
        let s = serialize_penman(&g);
        for c in ["protect-01", "shoot-02", "cause-01"] {
            assert!(s.contains(c));
        }
        assert_eq!(parse_penman(&s).unwrap(), g);
        assert_eq!(s, SHOT_PROTECT);
    }

    #[test]
    fn errors_carry_offsets() {
        assert_eq!(
            parse_penman("(a / b :ARG0 (c / d)"),
            Err(PenmanError::UnbalancedParens { offset: 0 })
        );
        assert_eq!(
            parse_penman("(a / b))"),
            Err(PenmanError::UnbalancedParens { offset: 7 })
        );
        assert_eq!(
            parse_penman("(a / b :ARG0 (a / c))"),
            Err(PenmanError::DuplicateVariableDeclaration {
                variable: "a".into(),
                offset: 14
            })
        );
        assert_eq!(parse_penman("   "), Err(PenmanError::EmptyGraph { offset: 3 }));
        assert_eq!(parse_penman("()"), Err(PenmanError::EmptyGraph { offset: 0 }));
    }

    #[test]
    fn metadata_comments_are_skipped() {
        let g = parse_penman("# ::snt Dogs bark.\n(b / bark-01 :ARG0 (d / dog))").unwrap();
        assert_eq!(g.edges.len(), 1);
    }

    #[test]
    fn role_classes() {
        assert_eq!(classify_role("ARG0"), RoleClass::CoreRole);
        assert_eq!(classify_role(":ARG12"), RoleClass::CoreRole);
        assert_eq!(classify_role("ARG1-of"), RoleClass::CoreRole);
        assert_eq!(classify_role("op3"), RoleClass::Operator);
        assert_eq!(classify_role("manner"), RoleClass::Means);
        assert_eq!(classify_role("instrument"), RoleClass::Means);
        assert_eq!(classify_role("topic"), RoleClass::Means);
        assert_eq!(classify_role("time"), RoleClass::Temporal);
        assert_eq!(classify_role(":weekday"), RoleClass::Temporal);
        assert_eq!(classify_role("location"), RoleClass::Others);
        assert_eq!(classify_role("consist-of"), RoleClass::Others);
        assert_eq!(classify_role("ARG"), RoleClass::Others);
        assert_eq!(classify_role("opx"), RoleClass::Others);
    }
}
