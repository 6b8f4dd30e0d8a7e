//! Finite-difference checks of every model block on small fixtures.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::layers::*;
use super::{ContextMode, ContextSource, ForwardCache, Mode, ModelConfig, ModelError, ModelVocabs, SemSin, Ablation};
use crate::data::fixtures::corpus_fixture;
use crate::features::{prepare, FeatureConfig};
use crate::graph::{PathSequence, DEFAULT_MAX_PATHS};
use crate::numerics::{grad_check, normal, GradCheckReport, ParamStore, Tape, Tensor, Var};
use crate::training::focal_loss_var;

pub const DEFAULT_EPS: f64 = 1e-5;
const DIM: usize = 4;

#[derive(Debug, Clone, Serialize)]
pub struct BlockCheck {
    pub block: &'static str,
    pub max_rel_error: f64,
    pub coordinates: usize,
    pub worst: Option<String>,
}

impl BlockCheck {
    fn from_report(block: &'static str, r: GradCheckReport) -> Self {
        BlockCheck {
            block,
            max_rel_error: r.max_rel_error,
            coordinates: r.coordinates,
            worst: r
                .worst
                .map(|(name, k, a, n)| format!("{name}[{k}] analytic {a:.6e} numeric {n:.6e}")),
        }
    }
}

fn random_tensor(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor::from_vec(rows, cols, data).unwrap()
}

/// `sum(v * probe)` with a fixed random probe, so every output coordinate
/// contributes a distinct weight.
fn probe(tape: &mut Tape<'_>, v: Var, seed: u64) -> Result<Var, ModelError> {
    let shape = tape.value(v).shape();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = tape.constant(random_tensor(shape[0], shape[1], &mut rng));
    let m = tape.mul(v, p)?;
    Ok(tape.sum(m))
}

/// Runs the checks on the bundled fixtures and returns one entry per block.
pub fn run_block_checks(eps: f64) -> Result<Vec<BlockCheck>, ModelError> {
    let records = corpus_fixture();
    let ds = prepare(&records, FeatureConfig { hops: 3, max_paths: DEFAULT_MAX_PATHS })
        .map_err(|e| ModelError::Config(e.to_string()))?;
    let fig = &ds.docs[0].graph;
    let n_tok = ds.docs[0].tokens.len();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut out = Vec::new();

    // node initialization
    {
        let mut store = ParamStore::new();
        let x = store.add("x", random_tensor(n_tok, DIM, &mut rng));
        let concepts = store.add("concepts", random_tensor(fig.len(), DIM, &mut rng));
        let ids: Vec<usize> = (0..fig.len()).collect();
        let r = grad_check(&store, None, eps, |t: &mut Tape<'_>| -> Result<Var, ModelError> {
            let (xv, cv) = (t.param(x), t.param(concepts));
            let h = init_node_reps(t, fig, xv, cv, &ids)?;
            probe(t, h, 1)
        })?;
        out.push(BlockCheck::from_report("node-init", r));
    }

    // three stacked graph convolutions
    {
        let mut store = ParamStore::new();
        let h0 = store.add("h0", random_tensor(fig.len(), DIM, &mut rng));
        let layers: Vec<RgcnLayer> = (0..3)
            .map(|l| RgcnLayer::register(&mut store, &format!("rgcn.{l}"), DIM, &mut rng))
            .collect();
        let adj = relation_adjacency(fig);
        let r = grad_check(&store, None, eps, |t: &mut Tape<'_>| -> Result<Var, ModelError> {
            let h = t.param(h0);
            let h = rgcn_forward(t, &adj, h, &layers, |_, v| Ok(v))?;
            probe(t, h, 2)
        })?;
        out.push(BlockCheck::from_report("rgcn-3-layers", r));
    }

    // path recurrence over a length-3 path
    {
        let mut store = ParamStore::new();
        let reps = store.add("node_reps", random_tensor(4, DIM, &mut rng));
        let rels = store.add("rel_emb", random_tensor(3, DIM, &mut rng));
        let enc = PathEncoder::register(&mut store, "path", DIM, &mut rng);
        let bias = store.get_mut(enc.proj_b);
        *bias = random_tensor(1, DIM, &mut rng);
        let path = PathSequence {
            nodes: vec![0, 1, 2, 3],
            roles: vec![0, 1, 0],
        };
        let r = grad_check(&store, None, eps, |t: &mut Tape<'_>| -> Result<Var, ModelError> {
            let (nv, rv) = (t.param(reps), t.param(rels));
            let p = encode_path(t, &enc, nv, &path, rv, &[0, 1, 0, 2])?;
            probe(t, p, 3)
        })?;
        out.push(BlockCheck::from_report("path-bilstm", r));
    }

    // attention pooling over three paths
    {
        let mut store = ParamStore::new();
        let query = store.add("query", random_tensor(1, DIM, &mut rng));
        let paths = store.add("paths", random_tensor(3, DIM, &mut rng));
        let attn = Attention::register(&mut store, "attn", DIM, &mut rng);
        let r = grad_check(&store, None, eps, |t: &mut Tape<'_>| -> Result<Var, ModelError> {
            let (q, p) = (t.param(query), t.param(paths));
            let (fp, _) = attend_paths(t, &attn, q, p)?;
            probe(t, fp, 4)
        })?;
        out.push(BlockCheck::from_report("path-attention", r));
    }

    // context head and classifier
    {
        let mut store = ParamStore::new();
        let u = store.add("u", random_tensor(3, DIM, &mut rng));
        let fe_fp = store.add("f_e_f_p", random_tensor(1, 2 * DIM, &mut rng));
        let head = ContextHead::register(&mut store, "ctx", DIM, DIM, &mut rng);
        *store.get_mut(head.b_u) = random_tensor(1, DIM, &mut rng);
        let clf = Classifier::register(&mut store, "clf", 3 * DIM, &mut rng);
        *store.get_mut(clf.b_f) = random_tensor(1, 2, &mut rng);
        let r = grad_check(&store, None, eps, |t: &mut Tape<'_>| -> Result<Var, ModelError> {
            let uv = t.param(u);
            let rows: Vec<Var> = (0..3).map(|i| t.select_rows(uv, &[i])).collect::<Result<_, _>>()?;
            let fc = context_pair_rep(t, &head, rows[0], rows[1], rows[2])?;
            let ef = t.param(fe_fp);
            let f = t.concat_cols(&[ef, fc])?;
            let p = classify(t, &clf, f)?;
            let p1 = t.slice_cols(p, 1, 1)?;
            Ok(t.ln(p1))
        })?;
        out.push(BlockCheck::from_report("context-classifier", r));
    }

    // focal loss
    {
        let mut store = ParamStore::new();
        let logits = store.add("logits", Tensor::row(vec![0.3, -0.4]));
        let r = grad_check(&store, None, eps, |t: &mut Tape<'_>| -> Result<Var, ModelError> {
            let z = t.param(logits);
            let p = t.softmax_rows(z);
            let a = focal_loss_var(t, p, 1, 0.75, 2.0)?;
            let b = focal_loss_var(t, p, 0, 0.75, 2.0)?;
            Ok(t.add(a, b)?)
        })?;
        out.push(BlockCheck::from_report("focal-loss", r));
    }

    // the whole model, every parameter
    {
        let cfg = ModelConfig {
            dim: DIM,
            layers: 3,
            dropout: 0.0,
            ablation: Ablation::Full,
            context: ContextMode::Internal,
        };
        let vocabs = ModelVocabs::build(&ds, 0..ds.docs.len());
        let mut model = SemSin::new(cfg, vocabs, 5)?;
        // default embedding scale leaves some gradients near the
        // finite-difference noise floor
        for id in model.params.ids().collect::<Vec<_>>() {
            let (r, c) = (model.params.get(id).rows(), model.params.get(id).cols());
            *model.params.get_mut(id) = normal(r, c, 0.5, &mut rng);
        }
        let r = grad_check(&model.params, None, eps, |t: &mut Tape<'_>| -> Result<Var, ModelError> {
            let mut cache = ForwardCache::new();
            let mut losses = Vec::new();
            for ex in &ds.pairs {
                let o = model.forward_pair(t, &ds, ex, ContextSource::Internal, &mut Mode::Eval, &mut cache)?;
                losses.push(focal_loss_var(t, o.probs, ex.label, 0.5, 2.0)?);
            }
            let all = t.concat_cols(&losses)?;
            Ok(t.sum(all))
        })?;
        out.push(BlockCheck::from_report("full-model", r));
    }
    Ok(out)
}
