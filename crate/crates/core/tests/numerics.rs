use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use semsin::model::check::{run_block_checks, DEFAULT_EPS};
use semsin::numerics::{
    adamw_step, grad_check, normal, read_checkpoint, softmax_rows, write_checkpoint, AdamWConfig, NumericsError,
    OptimizerState, ParamStore, Tape, Tensor,
};
use semsin::training::{focal_loss, focal_loss_var};

fn naive_matmul(a: &Tensor, b: &Tensor) -> Tensor {
    let mut out = Tensor::zeros(a.rows(), b.cols());
    for i in 0..a.rows() {
        for j in 0..b.cols() {
            let s: f64 = (0..a.cols()).map(|k| a.get(i, k) * b.get(k, j)).sum();
            out.set(i, j, s);
        }
    }
    out
}

#[test]
fn every_block_passes_gradcheck() {
    let blocks = run_block_checks(DEFAULT_EPS).unwrap();
    let names: Vec<&str> = blocks.iter().map(|b| b.block).collect();
    for want in ["node-init", "rgcn-3-layers", "path-bilstm", "path-attention", "context-classifier", "focal-loss"] {
        assert!(names.contains(&want), "{want} missing from {names:?}");
    }
    for b in &blocks {
        assert!(b.coordinates > 0, "{}", b.block);
        assert!(b.max_rel_error <= 1e-4, "{}: {} at {:?}", b.block, b.max_rel_error, b.worst);
    }
}

#[test]
fn focal_loss_reference_values() {
    // 0.5 * 0.25 * ln 2
    let want = 0.125 * std::f64::consts::LN_2;
    let got = focal_loss([0.5, 0.5], 1, 0.5, 2.0).unwrap();
    assert!((got - 0.08664).abs() <= 1e-5, "{got}");
    assert!((got - want).abs() < 1e-15);
    assert!(matches!(focal_loss([0.7, 0.7], 1, 0.5, 2.0), Err(_)));
    assert!(matches!(focal_loss([-0.1, 1.1], 0, 0.5, 2.0), Err(_)));
}

proptest! {
    #[test]
    fn focal_without_focusing_is_half_cross_entropy(p in 1e-6f64..1.0, label in 0u8..2) {
        let probs = [1.0 - p, p];
        let ce = -probs[usize::from(label)].ln();
        let fl = focal_loss(probs, label, 0.5, 0.0).unwrap();
        prop_assert!((fl - 0.5 * ce).abs() <= 1e-12 * ce.max(1.0));
    }

    #[test]
    fn focal_tape_matches_scalar(p in 1e-6f64..1.0, label in 0u8..2, gamma in 0.0f64..4.0, beta in 0.05f64..0.95) {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let probs = tape.constant(Tensor::row(vec![1.0 - p, p]));
        let v = focal_loss_var(&mut tape, probs, label, beta, gamma).unwrap();
        let want = focal_loss([1.0 - p, p], label, beta, gamma).unwrap();
        prop_assert!((tape.value(v).item() - want).abs() <= 1e-12);
        prop_assert!(want >= 0.0);
    }

    #[test]
    fn matmul_matches_naive(r in 1usize..7, k in 1usize..7, c in 1usize..7, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = normal(r, k, 1.0, &mut rng);
        let b = normal(k, c, 1.0, &mut rng);
        let got = a.matmul(&b).unwrap();
        let want = naive_matmul(&a, &b);
        for (x, y) in got.data().iter().zip(want.data()) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn softmax_rows_are_distributions(seed in any::<u64>(), scale in 0.1f64..200.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = normal(3, 5, scale, &mut rng);
        let s = softmax_rows(&t);
        for r in 0..3 {
            let row = s.row_slice(r);
            prop_assert!(row.iter().all(|v| (0.0..=1.0).contains(v)));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn elementwise_ops_gradcheck(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let a = store.add("a", normal(3, 4, 1.0, &mut rng));
        let b = store.add("b", normal(4, 2, 1.0, &mut rng));
        let r = grad_check::<NumericsError, _>(&store, None, 1e-5, |t| {
            let (va, vb) = (t.param(a), t.param(b));
            let h = t.tanh(va);
            let m = t.matmul(h, vb)?;
            let s = t.sigmoid(m);
            let sm = t.softmax_rows(m);
            let prod = t.mul(s, sm)?;
            let tr = t.transpose(prod);
            let mean = t.mean_rows(tr);
            Ok(t.sum(mean))
        }).unwrap();
        prop_assert!(r.max_rel_error <= 1e-5, "{:?}", r);
    }
}

#[test]
fn shape_errors_are_reported() {
    let store = ParamStore::new();
    let mut tape = Tape::new(&store);
    let a = tape.constant(Tensor::zeros(2, 3));
    let b = tape.constant(Tensor::zeros(2, 3));
    assert!(matches!(tape.matmul(a, b), Err(NumericsError::ShapeMismatch { .. })));
    assert!(Tensor::from_vec(2, 2, vec![1.0]).is_err());
}

#[test]
fn zero_learning_rate_leaves_parameters() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut store = ParamStore::new();
    let w = store.add("w", normal(3, 3, 1.0, &mut rng));
    let before = store.clone();
    let grads = {
        let mut tape = Tape::new(&store);
        let v = tape.param(w);
        let sq = tape.mul(v, v).unwrap();
        let loss = tape.sum(sq);
        tape.backward(loss).unwrap()
    };
    let cfg = AdamWConfig { lr: 0.0, ..AdamWConfig::default() };
    let mut state = OptimizerState::new(&store, cfg);
    adamw_step(&mut store, &grads, &mut state).unwrap();
    assert_eq!(store.get(w), before.get(w));

    let mut state = OptimizerState::new(&store, AdamWConfig::default());
    adamw_step(&mut store, &grads, &mut state).unwrap();
    assert_ne!(store.get(w), before.get(w));
}

#[test]
fn checkpoint_round_trip_is_byte_identical() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut store = ParamStore::new();
    store.add("x", normal(2, 5, 1.0, &mut rng));
    store.add("y.z", normal(4, 1, 1e-300, &mut rng));
    let mut bytes = Vec::new();
    write_checkpoint(&store, &mut bytes).unwrap();
    let back = read_checkpoint(bytes.as_slice()).unwrap();
    let mut again = Vec::new();
    write_checkpoint(&back, &mut again).unwrap();
    assert_eq!(bytes, again);
    assert!(read_checkpoint(&bytes[..bytes.len() - 3]).is_err());
}

fn scalar_grad(store: &ParamStore, slope: f64) -> semsin::numerics::Gradients {
    let id = store.ids().next().unwrap();
    let mut tape = Tape::new(store);
    let p = tape.param(id);
    let s = tape.scale(p, slope);
    let loss = tape.sum(s);
    tape.backward(loss).unwrap()
}

#[test]
fn adamw_first_step_by_hand() {
    let mut store = ParamStore::new();
    let id = store.add("p", Tensor::scalar(2.0));
    let cfg = AdamWConfig { lr: 0.1, ..AdamWConfig::default() };
    let grads = scalar_grad(&store, 1.0);
    let mut state = OptimizerState::new(&store, cfg);
    adamw_step(&mut store, &grads, &mut state).unwrap();
    // m = 0.1, v = 0.001; both bias corrections give 1
    let m_hat = (1.0 - cfg.beta1) / (1.0 - cfg.beta1);
    let v_hat = (1.0 - cfg.beta2) / (1.0 - cfg.beta2);
    let want = 2.0 - 0.1 * (m_hat / (v_hat.sqrt() + cfg.eps) + cfg.weight_decay * 2.0);
    assert!((store.get(id).item() - want).abs() < 1e-15, "{} vs {want}", store.get(id).item());
    assert_eq!(state.step, 1);
}

#[test]
fn adamw_zero_gradient() {
    let mut store = ParamStore::new();
    let id = store.add("p", Tensor::scalar(-3.0));
    let grads = scalar_grad(&store, 0.0);
    let mut state = OptimizerState::new(&store, AdamWConfig { weight_decay: 0.0, ..AdamWConfig::default() });
    adamw_step(&mut store, &grads, &mut state).unwrap();
    assert_eq!(store.get(id).item(), -3.0);
    let mut state = OptimizerState::new(&store, AdamWConfig::default());
    adamw_step(&mut store, &grads, &mut state).unwrap();
    assert!(store.get(id).item().abs() < 3.0);
}

proptest! {
    #[test]
    fn backward_is_linear(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let x = store.add("x", normal(2, 3, 1.0, &mut rng));
        let f = |t: &mut Tape<'_>| {
            let v = t.param(x);
            let th = t.tanh(v);
            t.sum(th)
        };
        let g = |t: &mut Tape<'_>| {
            let v = t.param(x);
            let sq = t.mul(v, v).unwrap();
            t.sum(sq)
        };
        let grad = |build: &dyn Fn(&mut Tape<'_>) -> semsin::numerics::Var| {
            let mut t = Tape::new(&store);
            let l = build(&mut t);
            t.backward(l).unwrap().get(x).clone()
        };
        let combined = grad(&|t| {
            let (fv, gv) = (f(t), g(t));
            let (fa, gb) = (t.scale(fv, a), t.scale(gv, b));
            t.add(fa, gb).unwrap()
        });
        let (gf, gg) = (grad(&f), grad(&g));
        for k in 0..6 {
            let want = a * gf.data()[k] + b * gg.data()[k];
            prop_assert!((combined.data()[k] - want).abs() <= 1e-12);
        }
    }
}
