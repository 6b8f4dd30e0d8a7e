//! The event-causality classifier: node initialization, relational graph
//! convolution over event neighborhoods, attention-pooled path encodings,
//! a marker-based context head and the final softmax layer.

pub mod check;
pub mod layers;
pub mod lstm;

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{plain_sequence, vocab, CtxEmbIndex, Vocab};
use crate::features::{Dataset, PairExample};
use crate::graph::{SemanticGraph, Span};
use crate::numerics::{
    normal, read_checkpoint, restore_into, write_checkpoint, CheckpointError, NumericsError, ParamId,
    ParamStore, Tape, Tensor, Var,
};

pub use layers::{
    attend_paths, classify, context_pair_rep, encode_path, init_node_reps, relation_adjacency, rgcn_forward,
    rgcn_layer, Attention, Classifier, ContextHead, PathEncoder, RgcnLayer,
};
pub use lstm::{BiLstm, LstmCell};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("node `{node}` span {span} outside {tokens} token vectors")]
    SpanOutOfRange { node: String, span: Span, tokens: usize },
    #[error("no contextual embeddings for `{0}`")]
    MissingEmbeddingEntry(String),
    #[error("embeddings for `{key}` have {found} rows, marked sequence has {expected}")]
    SequenceLengthMismatch { key: String, expected: usize, found: usize },
    #[error("context dimension {found} does not match model dimension {expected}")]
    ContextDimMismatch { expected: usize, found: usize },
    #[error("cannot encode an empty path")]
    EmptyPath,
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

/// Which structural blocks feed the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    Full,
    /// Context only.
    #[value(name = "wo-stru")]
    WoStru,
    /// No path aggregator.
    #[value(name = "wo-path")]
    WoPath,
    /// No event neighborhood aggregator.
    #[value(name = "wo-cent")]
    WoCent,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [Ablation::Full, Ablation::WoStru, Ablation::WoPath, Ablation::WoCent];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::WoStru => "wo-stru",
            Ablation::WoPath => "wo-path",
            Ablation::WoCent => "wo-cent",
        }
    }

    pub fn uses_centric(self) -> bool {
        matches!(self, Ablation::Full | Ablation::WoPath)
    }

    pub fn uses_path(self) -> bool {
        matches!(self, Ablation::Full | Ablation::WoCent)
    }
}

impl std::fmt::Display for Ablation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContextMode {
    /// Trainable token embeddings and recurrent encoders.
    Internal,
    /// Precomputed vectors from a `CTXEMB1` file.
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub dim: usize,
    pub layers: usize,
    pub dropout: f64,
    pub ablation: Ablation,
    pub context: ContextMode,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            dim: 64,
            layers: 3,
            dropout: 0.5,
            ablation: Ablation::Full,
            context: ContextMode::Internal,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.dim < 2 || self.dim % 2 != 0 {
            return Err(ModelError::Config(format!("dim must be even and >= 2, got {}", self.dim)));
        }
        if self.layers == 0 {
            return Err(ModelError::Config("layers must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ModelError::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelVocabs {
    pub tokens: Vocab,
    pub concepts: Vocab,
    pub relations: Vocab,
}

impl ModelVocabs {
    /// Collects tokens, concepts and relation keys from the given documents.
    pub fn build(ds: &Dataset, docs: impl IntoIterator<Item = usize>) -> Self {
        let mut docs: Vec<usize> = docs.into_iter().collect();
        docs.sort_unstable();
        docs.dedup();
        let mut v = ModelVocabs {
            tokens: Vocab::tokens(),
            concepts: Vocab::table(),
            relations: Vocab::table(),
        };
        for d in docs {
            let doc = &ds.docs[d];
            for t in &doc.tokens {
                v.tokens.insert(t);
            }
            for n in &doc.graph.nodes {
                v.concepts.insert(&n.concept);
            }
            for r in &doc.graph.role_vocab {
                v.relations.insert(&r.key());
            }
        }
        v
    }
}

/// Where `[CLS]`, marker and token vectors come from.
#[derive(Debug, Clone, Copy)]
pub enum ContextSource<'a> {
    Internal,
    External(&'a CtxEmbIndex),
}

/// Dropout on in training, off in evaluation.
pub enum Mode<'a> {
    Eval,
    Train(&'a mut ChaCha8Rng),
}

impl Mode<'_> {
    fn dropout(&mut self, tape: &mut Tape<'_>, v: Var, rate: f64) -> Result<Var, NumericsError> {
        match self {
            Mode::Eval => Ok(v),
            Mode::Train(rng) => tape.dropout(v, rate, *rng),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Ids {
    concept_emb: ParamId,
    rel_emb: ParamId,
    node_enc: Option<(ParamId, BiLstm)>,
    ctx_enc: Option<(ParamId, BiLstm)>,
    rgcn: Vec<RgcnLayer>,
    path: PathEncoder,
    attn: Attention,
    ctx_head: ContextHead,
    clf: Classifier,
}

/// Tape variables reused by every pair of one document within a tape.
#[derive(Default)]
struct DocVars {
    x: Option<Var>,
    h0: Option<Var>,
    whole: Option<Var>,
    centric: BTreeMap<usize, Var>,
}

/// Per-tape memo of document-level activations.
#[derive(Default)]
pub struct ForwardCache {
    docs: BTreeMap<(usize, usize), DocVars>,
}

impl ForwardCache {
    pub fn new() -> Self {
        Self::default()
    }
}

pub struct PairOutput {
    /// `1 x 2` class probabilities.
    pub probs: Var,
    pub f_e: Var,
    pub f_p: Var,
    pub f_c: Var,
    /// Attention weights over the path set, when paths were used.
    pub attention: Option<Var>,
}

struct ContextVars {
    x: Var,
    u_cls: Var,
    u1: Var,
    u2: Var,
}

#[derive(Debug, Clone)]
pub struct SemSin {
    pub config: ModelConfig,
    pub vocabs: ModelVocabs,
    pub params: ParamStore,
    ids: Ids,
}

const EMB_STD: f64 = 0.02;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    config: ModelConfig,
    vocabs: ModelVocabs,
}

impl SemSin {
    pub fn new(config: ModelConfig, vocabs: ModelVocabs, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let d = config.dim;
        let concept_emb = store.add("concept_emb", normal(vocabs.concepts.len(), d, EMB_STD, &mut rng));
        let rel_emb = store.add("rel_emb", normal(vocabs.relations.len(), d, EMB_STD, &mut rng));
        let (node_enc, ctx_enc) = match config.context {
            ContextMode::Internal => {
                let mut enc = |name: &str, rng: &mut ChaCha8Rng| {
                    let emb = store.add(format!("{name}.emb"), normal(vocabs.tokens.len(), d, EMB_STD, rng));
                    (emb, BiLstm::register(&mut store, &format!("{name}.lstm"), d, d / 2, rng))
                };
                (Some(enc("node_enc", &mut rng)), Some(enc("ctx_enc", &mut rng)))
            }
            ContextMode::External => (None, None),
        };
        let rgcn = (0..config.layers)
            .map(|l| RgcnLayer::register(&mut store, &format!("rgcn.{l}"), d, &mut rng))
            .collect();
        let path = PathEncoder::register(&mut store, "path", d, &mut rng);
        let attn = Attention::register(&mut store, "attn", d, &mut rng);
        let ctx_head = ContextHead::register(&mut store, "ctx", d, d, &mut rng);
        let clf = Classifier::register(&mut store, "clf", 3 * d, &mut rng);
        Ok(SemSin {
            config,
            vocabs,
            params: store,
            ids: Ids {
                concept_emb,
                rel_emb,
                node_enc,
                ctx_enc,
                rgcn,
                path,
                attn,
                ctx_head,
                clf,
            },
        })
    }

    /// Parameters of the graph convolution layers.
    pub fn rgcn_params(&self) -> Vec<ParamId> {
        self.ids
            .rgcn
            .iter()
            .flat_map(|l| std::iter::once(l.self_loop).chain(l.relations.iter().copied()))
            .collect()
    }

    /// Parameters used only by the path aggregator.
    pub fn path_params(&self) -> Vec<ParamId> {
        let p = &self.ids.path;
        let mut v = vec![self.ids.rel_emb, p.proj_w, p.proj_b, self.ids.attn.w_q, self.ids.attn.w_k, self.ids.attn.w_v];
        for c in [p.lstm.fwd, p.lstm.bwd] {
            v.extend([c.w_x, c.w_h, c.b]);
        }
        v
    }

    fn context(
        &self,
        tape: &mut Tape<'_>,
        ds: &Dataset,
        ex: &PairExample,
        src: ContextSource<'_>,
        cache: &mut ForwardCache,
    ) -> Result<ContextVars, ModelError> {
        let m = &ex.marked;
        match src {
            ContextSource::Internal => {
                let (Some((node_emb, node_lstm)), Some((ctx_emb, ctx_lstm))) = (self.ids.node_enc, self.ids.ctx_enc)
                else {
                    return Err(ModelError::Config("model was built for external context vectors".into()));
                };
                let entry = cache.docs.entry((ex.doc, 0)).or_default();
                let x = match entry.x {
                    Some(x) => x,
                    None => {
                        let seq = plain_sequence(&ds.docs[ex.doc].tokens);
                        let ids: Vec<usize> = seq.iter().map(|t| self.vocabs.tokens.id(t)).collect();
                        let table = tape.param(node_emb);
                        let e = tape.select_rows(table, &ids)?;
                        let out = node_lstm.sequence(tape, e)?;
                        let rows: Vec<usize> = (1..seq.len() - 1).collect();
                        let x = tape.select_rows(out, &rows)?;
                        entry.x = Some(x);
                        x
                    }
                };
                let ids: Vec<usize> = m.tokens.iter().map(|t| self.vocabs.tokens.id(t)).collect();
                let table = tape.param(ctx_emb);
                let e = tape.select_rows(table, &ids)?;
                let out = ctx_lstm.sequence(tape, e)?;
                Ok(ContextVars {
                    x,
                    u_cls: tape.select_rows(out, &[m.cls])?,
                    u1: tape.select_rows(out, &[m.e1_marker])?,
                    u2: tape.select_rows(out, &[m.e2_marker])?,
                })
            }
            ContextSource::External(index) => {
                let key = ds.key(ex);
                let t = index.get(&key).ok_or_else(|| ModelError::MissingEmbeddingEntry(key.clone()))?;
                if t.rows() != m.tokens.len() {
                    return Err(ModelError::SequenceLengthMismatch {
                        key,
                        expected: m.tokens.len(),
                        found: t.rows(),
                    });
                }
                if t.cols() != self.config.dim {
                    return Err(ModelError::ContextDimMismatch {
                        expected: self.config.dim,
                        found: t.cols(),
                    });
                }
                let all = tape.constant(t.clone());
                let x = tape.select_rows(all, &m.token_positions)?;
                cache.docs.entry((ex.doc, ex.pair_index + 1)).or_default().x = Some(x);
                Ok(ContextVars {
                    x,
                    u_cls: tape.select_rows(all, &[m.cls])?,
                    u1: tape.select_rows(all, &[m.e1_marker])?,
                    u2: tape.select_rows(all, &[m.e2_marker])?,
                })
            }
        }
    }

    fn concept_ids(&self, sg: &SemanticGraph) -> Vec<usize> {
        sg.nodes.iter().map(|n| self.vocabs.concepts.id(&n.concept)).collect()
    }

    /// Full forward pass for one pair. Activations shared across pairs of
    /// the same document are memoized in `cache`, which must belong to `tape`.
    pub fn forward_pair(
        &self,
        tape: &mut Tape<'_>,
        ds: &Dataset,
        ex: &PairExample,
        src: ContextSource<'_>,
        mode: &mut Mode<'_>,
        cache: &mut ForwardCache,
    ) -> Result<PairOutput, ModelError> {
        let d = self.config.dim;
        let rate = self.config.dropout;
        let ablation = self.config.ablation;
        let ctx = self.context(tape, ds, ex, src, cache)?;
        let variant = match src {
            ContextSource::Internal => 0,
            ContextSource::External(_) => ex.pair_index + 1,
        };
        let graph = &ds.docs[ex.doc].graph;
        let key = (ex.doc, variant);

        let h0 = match cache.docs.get(&key).and_then(|e| e.h0) {
            Some(h) => h,
            None => {
                let concepts = tape.param(self.ids.concept_emb);
                let ids = self.concept_ids(graph);
                let h = init_node_reps(tape, graph, ctx.x, concepts, &ids)?;
                cache.docs.entry(key).or_default().h0 = Some(h);
                h
            }
        };

        let f_e = if ablation.uses_centric() {
            let mut rows = Vec::with_capacity(2);
            for (ecs, node) in [(&ex.centric1, ex.e1_node), (&ex.centric2, ex.e2_node)] {
                if let Some(&v) = cache.docs[&key].centric.get(&node) {
                    rows.push(v);
                    continue;
                }
                let sub_h0 = tape.select_rows(h0, &ecs.original)?;
                let adj = relation_adjacency(&ecs.subgraph);
                let h = rgcn_forward(tape, &adj, sub_h0, &self.ids.rgcn, |t, v| mode.dropout(t, v, rate))?;
                let v = tape.select_rows(h, &[ecs.center])?;
                cache.docs.get_mut(&key).unwrap().centric.insert(node, v);
                rows.push(v);
            }
            tape.add(rows[0], rows[1])?
        } else {
            tape.constant(Tensor::zeros(1, d))
        };

        let mut attention = None;
        let f_p = if ablation.uses_path() && ex.has_path() {
            let (reps, query) = if ablation.uses_centric() {
                let whole = match cache.docs[&key].whole {
                    Some(w) => w,
                    None => {
                        let adj = relation_adjacency(graph);
                        let w = rgcn_forward(tape, &adj, h0, &self.ids.rgcn, |t, v| mode.dropout(t, v, rate))?;
                        cache.docs.get_mut(&key).unwrap().whole = Some(w);
                        w
                    }
                };
                (whole, f_e)
            } else {
                let a = tape.select_rows(h0, &[ex.e1_node])?;
                let b = tape.select_rows(h0, &[ex.e2_node])?;
                (h0, tape.add(a, b)?)
            };
            let rel_table = tape.param(self.ids.rel_emb);
            let pad = self.vocabs.relations.id(vocab::PAD);
            let mut encoded = Vec::with_capacity(ex.paths.len());
            for p in &ex.paths {
                let mut rel_ids: Vec<usize> = p
                    .roles
                    .iter()
                    .map(|&r| self.vocabs.relations.id(&graph.role(r).key()))
                    .collect();
                rel_ids.push(pad);
                encoded.push(encode_path(tape, &self.ids.path, reps, p, rel_table, &rel_ids)?);
            }
            let stacked = tape.concat_rows(&encoded)?;
            let (fp, w) = attend_paths(tape, &self.ids.attn, query, stacked)?;
            attention = Some(w);
            fp
        } else {
            tape.constant(Tensor::zeros(1, d))
        };

        let f_c = context_pair_rep(tape, &self.ids.ctx_head, ctx.u_cls, ctx.u1, ctx.u2)?;
        let f = tape.concat_cols(&[f_e, f_p, f_c])?;
        let f = mode.dropout(tape, f, rate)?;
        let probs = classify(tape, &self.ids.clf, f)?;
        Ok(PairOutput {
            probs,
            f_e,
            f_p,
            f_c,
            attention,
        })
    }

    /// Class probabilities `[p0, p1]` for the selected pairs, dropout off.
    pub fn predict(&self, ds: &Dataset, pairs: &[usize], src: ContextSource<'_>) -> Result<Vec<[f64; 2]>, ModelError> {
        let mut out = Vec::with_capacity(pairs.len());
        for chunk in pairs.chunks(64) {
            let mut tape = Tape::new(&self.params);
            let mut cache = ForwardCache::new();
            for &i in chunk {
                let o = self.forward_pair(&mut tape, ds, &ds.pairs[i], src, &mut Mode::Eval, &mut cache)?;
                let p = tape.value(o.probs);
                out.push([p.get(0, 0), p.get(0, 1)]);
            }
        }
        Ok(out)
    }

    /// Writes `model.json` (configuration and vocabularies) and `model.ckpt`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(), ModelError> {
        let dir = dir.as_ref();
        let io = |p: &Path, e: &dyn std::fmt::Display| ModelError::Io {
            path: p.display().to_string(),
            message: e.to_string(),
        };
        fs::create_dir_all(dir).map_err(|e| io(dir, &e))?;
        let meta = dir.join("model.json");
        let file = ModelFile {
            config: self.config.clone(),
            vocabs: self.vocabs.clone(),
        };
        let text = serde_json::to_string_pretty(&file).map_err(|e| io(&meta, &e))?;
        fs::write(&meta, text + "\n").map_err(|e| io(&meta, &e))?;
        let ckpt = dir.join("model.ckpt");
        let f = File::create(&ckpt).map_err(|e| io(&ckpt, &e))?;
        write_checkpoint(&self.params, BufWriter::new(f))?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self, ModelError> {
        let dir = dir.as_ref();
        let io = |p: &Path, e: &dyn std::fmt::Display| ModelError::Io {
            path: p.display().to_string(),
            message: e.to_string(),
        };
        let meta = dir.join("model.json");
        let text = fs::read_to_string(&meta).map_err(|e| io(&meta, &e))?;
        let file: ModelFile = serde_json::from_str(&text).map_err(|e| io(&meta, &e))?;
        let mut model = SemSin::new(file.config, file.vocabs, 0)?;
        let ckpt = dir.join("model.ckpt");
        let f = File::open(&ckpt).map_err(|e| io(&ckpt, &e))?;
        let loaded = read_checkpoint(BufReader::new(f))?;
        restore_into(&mut model.params, &loaded)?;
        Ok(model)
    }
}
