//! Templated corpus whose labels are a fixed function of graph structure.
//!
//! Each document is an `and` root joining two or three clauses; each clause
//! holds one event pair. A *path* clause links its events through a chain
//! whose midpoint is an unaligned cue concept four hops from either event, so
//! only the shortest path sees it. A *centric* clause links its events through
//! a shared argument; one event carries an unaligned argument whose role class
//! decides the label, so only the event neighborhoods see it. Surface tokens
//! are drawn independently of the label.

use std::collections::BTreeMap;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::corpus::{CorpusRecord, EventMention, LabeledPair};
use crate::graph::Span;

const VERBS: &[&str] = &[
    "attack", "shoot", "protect", "kill", "flee", "arrest", "bomb", "injure", "evacuate", "rescue",
    "collapse", "strike", "erupt", "flood", "burn", "charge", "damage", "destroy", "warn", "riot",
];
const NOUNS: &[&str] = &[
    "person", "city", "police", "building", "army", "village", "storm", "crowd", "officer", "car",
    "market", "bridge", "river", "school", "hospital", "road", "station", "town", "house",
    "soldier", "driver", "student", "worker", "official",
];
const LINK_ROLES: &[&str] = &["ARG1", "ARG2", "mod", "location", "poss", "ARG0"];
const AUX_CONCEPTS: &[&str] = &["thing", "something", "way"];

/// Cue concept and the two roles it uses for its arguments.
pub const POSITIVE_CUE: (&str, &str, &str) = ("cause-01", "ARG0", "ARG1");
pub const NEGATIVE_CUES: &[(&str, &str, &str)] = &[("and", "op1", "op2"), ("contrast-01", "ARG1", "ARG2")];
pub const POSITIVE_ARG_ROLES: &[&str] = &["manner", "instrument"];
pub const NEGATIVE_ARG_ROLES: &[&str] = &["time", "location", "duration"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairKind {
    /// The label is carried by a cue concept on the shortest path.
    Path,
    /// The label is carried by an argument role next to one event.
    Centric,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthPairTruth {
    pub doc_id: String,
    pub pair_index: usize,
    pub kind: PairKind,
    pub label: u8,
    /// Concept on the path midpoint (path pairs).
    pub cue: Option<String>,
    /// Role of the unaligned argument (centric pairs).
    pub arg_role: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_docs: usize,
    pub seed: u64,
    pub n_topics: usize,
    pub min_clauses: usize,
    pub max_clauses: usize,
}

impl SynthConfig {
    pub fn new(n_docs: usize, seed: u64) -> Self {
        SynthConfig {
            n_docs,
            seed,
            n_topics: 22,
            min_clauses: 2,
            max_clauses: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticCorpus {
    pub records: Vec<CorpusRecord>,
    pub truth: Vec<SynthPairTruth>,
}

pub fn gen_synthetic(n_docs: usize, seed: u64) -> SyntheticCorpus {
    gen_synthetic_with(&SynthConfig::new(n_docs, seed))
}

/// Half of the items set to `true`, shuffled.
fn balanced(n: usize, rng: &mut ChaCha8Rng) -> Vec<bool> {
    let mut v: Vec<bool> = (0..n).map(|i| i < n / 2 + (n % 2) * rng.random_range(0..2)).collect();
    v.shuffle(rng);
    v
}

struct DocBuilder {
    tokens: Vec<String>,
    alignments: BTreeMap<String, Span>,
    events: Vec<EventMention>,
    next_var: usize,
}

impl DocBuilder {
    fn var(&mut self) -> String {
        self.next_var += 1;
        format!("n{}", self.next_var)
    }

    fn aligned(&mut self, var: &str, word: &str) {
        self.alignments
            .insert(var.to_string(), Span::single(self.tokens.len()));
        self.tokens.push(word.to_string());
    }

    fn event(&mut self, id: String, var: &str) {
        let span = self.alignments[var];
        self.events.push(EventMention {
            event_id: id,
            token_span: span,
        });
    }
}

fn path_clause(
    b: &mut DocBuilder,
    clause: usize,
    label: bool,
    rng: &mut ChaCha8Rng,
) -> (String, String, String, String) {
    let (cue, r_a, r_b) = if label {
        POSITIVE_CUE
    } else {
        *NEGATIVE_CUES.choose(rng).unwrap()
    };
    let c = b.var();
    // e -> x1 -> x2 -> x3 -> cue on both sides
    let arm = |b: &mut DocBuilder, rng: &mut ChaCha8Rng| {
        let vars: Vec<String> = (0..4).map(|_| b.var()).collect();
        let verb = *VERBS.choose(rng).unwrap();
        let nouns: Vec<&str> = (0..3).map(|_| *NOUNS.choose(rng).unwrap()).collect();
        let roles: Vec<&str> = (0..3).map(|_| *LINK_ROLES.choose(rng).unwrap()).collect();
        let event = format!("({} / {verb}-01)", vars[0]);
        let mut s = event;
        for k in 0..3 {
            s = format!("({} / {} :{} {s})", vars[k + 1], nouns[k], roles[k]);
        }
        (s, vars, verb, nouns)
    };
    let (sa, va, verb_a, nouns_a) = arm(b, rng);
    let (sb, vb, verb_b, nouns_b) = arm(b, rng);
    b.aligned(&va[0], verb_a);
    for k in 0..3 {
        b.aligned(&va[k + 1], nouns_a[k]);
    }
    for k in (0..3).rev() {
        b.aligned(&vb[k + 1], nouns_b[k]);
    }
    b.aligned(&vb[0], verb_b);
    let ea = format!("ev{clause}a");
    let eb = format!("ev{clause}b");
    b.event(ea.clone(), &va[0]);
    b.event(eb.clone(), &vb[0]);
    (format!("({c} / {cue} :{r_a} {sa} :{r_b} {sb})"), ea, eb, cue.to_string())
}

fn centric_clause(
    b: &mut DocBuilder,
    clause: usize,
    label: bool,
    rng: &mut ChaCha8Rng,
) -> (String, String, String, String) {
    let role = if label {
        *POSITIVE_ARG_ROLES.choose(rng).unwrap()
    } else {
        *NEGATIVE_ARG_ROLES.choose(rng).unwrap()
    };
    let (q, p, x, y, t) = (b.var(), b.var(), b.var(), b.var(), b.var());
    let nq = *NOUNS.choose(rng).unwrap();
    let np = *NOUNS.choose(rng).unwrap();
    let vx = *VERBS.choose(rng).unwrap();
    let vy = *VERBS.choose(rng).unwrap();
    let aux = *AUX_CONCEPTS.choose(rng).unwrap();
    let arg = format!(":{role} ({t} / {aux})");
    let (ax, ay) = if rng.random_bool(0.5) {
        (format!(" {arg}"), String::new())
    } else {
        (String::new(), format!(" {arg}"))
    };
    let amr = format!("({q} / {nq} :mod ({p} / {np} :ARG0-of ({x} / {vx}-01{ax}) :ARG1-of ({y} / {vy}-01{ay})))");
    b.aligned(&x, vx);
    b.aligned(&p, np);
    b.aligned(&y, vy);
    b.aligned(&q, nq);
    let ea = format!("ev{clause}a");
    let eb = format!("ev{clause}b");
    b.event(ea.clone(), &x);
    b.event(eb.clone(), &y);
    (amr, ea, eb, role.to_string())
}

pub fn gen_synthetic_with(cfg: &SynthConfig) -> SyntheticCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let counts: Vec<usize> = (0..cfg.n_docs)
        .map(|_| rng.random_range(cfg.min_clauses..=cfg.max_clauses))
        .collect();
    let total: usize = counts.iter().sum();
    let path_kind = balanced(total, &mut rng);
    let n_path = path_kind.iter().filter(|&&k| k).count();
    let mut path_labels = balanced(n_path, &mut rng).into_iter();
    let mut centric_labels = balanced(total - n_path, &mut rng).into_iter();

    let mut records = Vec::with_capacity(cfg.n_docs);
    let mut truth = Vec::with_capacity(total);
    let mut clause_iter = path_kind.into_iter();
    let width = cfg.n_docs.to_string().len().max(3);
    for (i, &k) in counts.iter().enumerate() {
        let doc_id = format!("syn{i:0width$}");
        let mut b = DocBuilder {
            tokens: Vec::new(),
            alignments: BTreeMap::new(),
            events: Vec::new(),
            next_var: 0,
        };
        let mut parts = Vec::new();
        let mut pairs = Vec::new();
        for clause in 1..=k {
            let is_path = clause_iter.next().unwrap();
            let (kind, label) = if is_path {
                (PairKind::Path, path_labels.next().unwrap())
            } else {
                (PairKind::Centric, centric_labels.next().unwrap())
            };
            let (amr, ea, eb, marker) = match kind {
                PairKind::Path => path_clause(&mut b, clause, label, &mut rng),
                PairKind::Centric => centric_clause(&mut b, clause, label, &mut rng),
            };
            parts.push(format!(":op{clause} {amr}"));
            let (e1, e2) = if rng.random_bool(0.5) { (ea, eb) } else { (eb, ea) };
            truth.push(SynthPairTruth {
                doc_id: doc_id.clone(),
                pair_index: pairs.len(),
                kind,
                label: u8::from(label),
                cue: (kind == PairKind::Path).then(|| marker.clone()),
                arg_role: (kind == PairKind::Centric).then_some(marker),
            });
            pairs.push(LabeledPair {
                e1,
                e2,
                label: u8::from(label),
            });
        }
        let amr = format!("(r / and {})", parts.join(" "));
        records.push(CorpusRecord {
            doc_id,
            topic_id: (i % cfg.n_topics.max(1)).to_string(),
            sentence: b.tokens.join(" "),
            tokens: b.tokens,
            amr,
            alignments: b.alignments,
            events: b.events,
            pairs,
        });
    }
    SyntheticCorpus { records, truth }
}
