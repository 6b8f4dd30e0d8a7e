use std::collections::BTreeSet;

use rand::Rng;

use super::ModelError;
use crate::graph::{PathSequence, SemanticGraph, NUM_RELATION_TYPES};
use crate::numerics::{xavier_uniform, NumericsError, ParamId, ParamStore, Tape, Tensor, Var};

use super::lstm::BiLstm;

/// Degree-normalized incoming adjacency per relation type:
/// `A_r[i][j] = 1 / |N_i^r|` for every distinct `j` with an edge `j -> i` of
/// type `r`. Relation types with no edges are `None`.
pub fn relation_adjacency(sg: &SemanticGraph) -> Vec<Option<Tensor>> {
    let n = sg.len();
    let mut sets: Vec<Vec<BTreeSet<usize>>> = vec![vec![BTreeSet::new(); n]; NUM_RELATION_TYPES];
    for e in &sg.edges {
        sets[sg.relation_type(e)][e.dst].insert(e.src);
    }
    sets.into_iter()
        .map(|rows| {
            if rows.iter().all(BTreeSet::is_empty) {
                return None;
            }
            let mut a = Tensor::zeros(n, n);
            for (i, nbrs) in rows.iter().enumerate() {
                let c = nbrs.len() as f64;
                for &j in nbrs {
                    a.set(i, j, 1.0 / c);
                }
            }
            Some(a)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgcnLayer {
    pub self_loop: ParamId,
    pub relations: Vec<ParamId>,
}

impl RgcnLayer {
    pub fn register(store: &mut ParamStore, name: &str, dim: usize, rng: &mut impl Rng) -> Self {
        RgcnLayer {
            self_loop: store.add(format!("{name}.w0"), xavier_uniform(dim, dim, rng)),
            relations: (0..NUM_RELATION_TYPES)
                .map(|r| store.add(format!("{name}.w{}", r + 1), xavier_uniform(dim, dim, rng)))
                .collect(),
        }
    }
}

/// One layer: `ReLU(H W_0 + sum_r (A_r H) W_r)`.
pub fn rgcn_layer(
    tape: &mut Tape<'_>,
    adj: &[Option<Var>],
    h: Var,
    layer: &RgcnLayer,
) -> Result<Var, NumericsError> {
    let w0 = tape.param(layer.self_loop);
    let mut acc = tape.matmul(h, w0)?;
    for (a, &w) in adj.iter().zip(&layer.relations) {
        let Some(a) = *a else { continue };
        let w = tape.param(w);
        let msg = tape.matmul(a, h)?;
        let msg = tape.matmul(msg, w)?;
        acc = tape.add(acc, msg)?;
    }
    Ok(tape.relu(acc))
}

/// Stacked layers with dropout after each; `drop` is applied to each output.
pub fn rgcn_forward(
    tape: &mut Tape<'_>,
    adjacency: &[Option<Tensor>],
    h0: Var,
    layers: &[RgcnLayer],
    mut drop: impl FnMut(&mut Tape<'_>, Var) -> Result<Var, NumericsError>,
) -> Result<Var, NumericsError> {
    let adj: Vec<Option<Var>> = adjacency
        .iter()
        .map(|a| a.as_ref().map(|t| tape.constant(t.clone())))
        .collect();
    let mut h = h0;
    for layer in layers {
        h = rgcn_layer(tape, &adj, h, layer)?;
        h = drop(tape, h)?;
    }
    Ok(h)
}

/// Initial node matrix: aligned nodes average their token rows of `x`,
/// auxiliary nodes take row `concept_ids[i]` of `concepts`.
pub fn init_node_reps(
    tape: &mut Tape<'_>,
    sg: &SemanticGraph,
    x: Var,
    concepts: Var,
    concept_ids: &[usize],
) -> Result<Var, ModelError> {
    let n = sg.len();
    let t = tape.value(x).rows();
    let mut avg = Tensor::zeros(n, t);
    let mut aux = Vec::new();
    for (i, node) in sg.nodes.iter().enumerate() {
        match node.span {
            Some(span) => {
                if span.end >= t || span.start > span.end {
                    return Err(ModelError::SpanOutOfRange {
                        node: node.var.clone(),
                        span,
                        tokens: t,
                    });
                }
                let w = 1.0 / span.len() as f64;
                for k in span.start..=span.end {
                    avg.set(i, k, w);
                }
            }
            None => aux.push(i),
        }
    }
    let s = tape.constant(avg);
    let mut h = tape.matmul(s, x)?;
    if !aux.is_empty() {
        let ids: Vec<usize> = aux.iter().map(|&i| concept_ids[i]).collect();
        let rows = tape.select_rows(concepts, &ids)?;
        let mut place = Tensor::zeros(n, aux.len());
        for (k, &i) in aux.iter().enumerate() {
            place.set(i, k, 1.0);
        }
        let p = tape.constant(place);
        let placed = tape.matmul(p, rows)?;
        h = tape.add(h, placed)?;
    }
    Ok(h)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PathEncoder {
    pub lstm: BiLstm,
    pub proj_w: ParamId,
    pub proj_b: ParamId,
}

impl PathEncoder {
    pub fn register(store: &mut ParamStore, name: &str, dim: usize, rng: &mut impl Rng) -> Self {
        let lstm = BiLstm::register(store, &format!("{name}.lstm"), 2 * dim, dim / 2, rng);
        PathEncoder {
            proj_w: store.add(format!("{name}.proj_w"), xavier_uniform(lstm.output_dim(), dim, rng)),
            proj_b: store.add(format!("{name}.proj_b"), Tensor::zeros(1, dim)),
            lstm,
        }
    }
}

/// Encodes `(v_1, r_1) ... (v_n, r_pad)`; `rel_ids` holds one relation row per
/// edge followed by the pad row.
pub fn encode_path(
    tape: &mut Tape<'_>,
    enc: &PathEncoder,
    node_reps: Var,
    path: &PathSequence,
    rel_table: Var,
    rel_ids: &[usize],
) -> Result<Var, ModelError> {
    if path.is_empty() {
        return Err(ModelError::EmptyPath);
    }
    debug_assert_eq!(rel_ids.len(), path.nodes.len());
    let v = tape.select_rows(node_reps, &path.nodes)?;
    let r = tape.select_rows(rel_table, rel_ids)?;
    let input = tape.concat_cols(&[v, r])?;
    let fin = enc.lstm.final_state(tape, input)?;
    let w = tape.param(enc.proj_w);
    let b = tape.param(enc.proj_b);
    let out = tape.matmul(fin, w)?;
    Ok(tape.add(out, b)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Attention {
    pub w_q: ParamId,
    pub w_k: ParamId,
    pub w_v: ParamId,
}

impl Attention {
    pub fn register(store: &mut ParamStore, name: &str, dim: usize, rng: &mut impl Rng) -> Self {
        Attention {
            w_q: store.add(format!("{name}.w_q"), xavier_uniform(dim, dim, rng)),
            w_k: store.add(format!("{name}.w_k"), xavier_uniform(dim, dim, rng)),
            w_v: store.add(format!("{name}.w_v"), xavier_uniform(dim, dim, rng)),
        }
    }
}

/// Scaled dot-product pooling of the `m x d` path matrix with a `1 x d`
/// query. Returns the pooled row and the `1 x m` weights.
pub fn attend_paths(
    tape: &mut Tape<'_>,
    attn: &Attention,
    query: Var,
    paths: Var,
) -> Result<(Var, Var), NumericsError> {
    let (wq, wk, wv) = (tape.param(attn.w_q), tape.param(attn.w_k), tape.param(attn.w_v));
    let q = tape.matmul(query, wq)?;
    let k = tape.matmul(paths, wk)?;
    let v = tape.matmul(paths, wv)?;
    let dk = tape.value(k).cols() as f64;
    let kt = tape.transpose(k);
    let scores = tape.matmul(q, kt)?;
    let scores = tape.scale(scores, 1.0 / dk.sqrt());
    let weights = tape.softmax_rows(scores);
    Ok((tape.matmul(weights, v)?, weights))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContextHead {
    pub w_u: ParamId,
    pub b_u: ParamId,
}

impl ContextHead {
    pub fn register(store: &mut ParamStore, name: &str, ctx_dim: usize, dim: usize, rng: &mut impl Rng) -> Self {
        ContextHead {
            w_u: store.add(format!("{name}.w_u"), xavier_uniform(2 * ctx_dim, dim, rng)),
            b_u: store.add(format!("{name}.b_u"), Tensor::zeros(1, dim)),
        }
    }
}

/// `tanh([u_cls ‖ u_1] W_u + b_u) + tanh([u_cls ‖ u_2] W_u + b_u)`.
pub fn context_pair_rep(
    tape: &mut Tape<'_>,
    head: &ContextHead,
    u_cls: Var,
    u1: Var,
    u2: Var,
) -> Result<Var, NumericsError> {
    let (w, b) = (tape.param(head.w_u), tape.param(head.b_u));
    let mut parts = Vec::with_capacity(2);
    for u in [u1, u2] {
        let cat = tape.concat_cols(&[u_cls, u])?;
        let z = tape.matmul(cat, w)?;
        let z = tape.add(z, b)?;
        parts.push(tape.tanh(z));
    }
    tape.add(parts[0], parts[1])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Classifier {
    pub w_f: ParamId,
    pub b_f: ParamId,
}

impl Classifier {
    pub fn register(store: &mut ParamStore, name: &str, input: usize, rng: &mut impl Rng) -> Self {
        Classifier {
            w_f: store.add(format!("{name}.w_f"), xavier_uniform(input, 2, rng)),
            b_f: store.add(format!("{name}.b_f"), Tensor::zeros(1, 2)),
        }
    }
}

/// `softmax(F W_f + b_f)` as a `1 x 2` row.
pub fn classify(tape: &mut Tape<'_>, clf: &Classifier, f: Var) -> Result<Var, NumericsError> {
    let (w, b) = (tape.param(clf.w_f), tape.param(clf.b_f));
    let z = tape.matmul(f, w)?;
    let z = tape.add(z, b)?;
    Ok(tape.softmax_rows(z))
}
