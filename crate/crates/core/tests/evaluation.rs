use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use semsin::data::gen_synthetic;
use semsin::evaluation::{
    f1_from, make_folds, prf1, round1, run_cross_validation, Confusion, EvalError, FoldMode, MetricsReport,
};
use semsin::features::{prepare, FeatureConfig};
use semsin::model::{ContextSource, ModelConfig};
use semsin::training::TrainConfig;

fn docs_with_topics(n_topics: usize, per_topic: usize) -> Vec<(String, String)> {
    let mut docs = Vec::new();
    for t in 1..=n_topics {
        for d in 0..per_topic {
            docs.push((format!("t{t}-d{d}"), t.to_string()));
        }
    }
    docs
}

fn topics_by_fold(docs: &[(String, String)], assignments: &BTreeMap<String, usize>) -> BTreeMap<usize, BTreeSet<String>> {
    let topic: BTreeMap<&str, &str> = docs.iter().map(|(d, t)| (d.as_str(), t.as_str())).collect();
    let mut out: BTreeMap<usize, BTreeSet<String>> = BTreeMap::new();
    for (d, &f) in assignments {
        out.entry(f).or_default().insert(topic[d.as_str()].to_string());
    }
    out
}

#[test]
fn published_f1_values() {
    assert_eq!(round1(f1_from(50.5, 63.0)), 56.1);
    assert_eq!(round1(f1_from(52.3, 65.8)), 58.3);
}

#[test]
fn metric_formulas() {
    let r = prf1(&[1, 1, 0, 0, 1], &[1, 0, 1, 0, 1]).unwrap();
    assert_eq!(r.confusion, Confusion { tp: 2, fp: 1, fn_: 1, tn: 1 });
    assert_eq!((r.precision, r.recall, r.f1), (66.7, 66.7, 66.7));
    let none = prf1(&[0, 0], &[1, 1]).unwrap();
    assert_eq!((none.precision, none.recall, none.f1), (0.0, 0.0, 0.0));
    assert!(matches!(prf1(&[2], &[1]), Err(EvalError::NonBinary { .. })));
}

proptest! {
    #[test]
    fn prf1_is_permutation_invariant(pairs in prop::collection::vec((0u8..2, 0u8..2), 1..60), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut shuffled = pairs.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let (p, l): (Vec<u8>, Vec<u8>) = pairs.into_iter().unzip();
        let (ps, ls): (Vec<u8>, Vec<u8>) = shuffled.into_iter().unzip();
        prop_assert_eq!(prf1(&p, &l).unwrap(), prf1(&ps, &ls).unwrap());
    }

    #[test]
    fn cross_topic_never_splits_a_topic(n_topics in 7usize..30, per_topic in 1usize..5, k in 2usize..6, seed in any::<u64>()) {
        let docs = docs_with_topics(n_topics, per_topic);
        let plan = make_folds(&docs, FoldMode::CrossTopic, k, seed).unwrap();
        let by_fold = topics_by_fold(&docs, &plan.assignments);
        let mut seen = BTreeSet::new();
        for topics in by_fold.values() {
            for t in topics {
                prop_assert!(seen.insert(t.clone()), "topic {} in two folds", t);
            }
        }
        prop_assert_eq!(plan.assignments.len() + plan.dev[0].len(), docs.len());
    }

    #[test]
    fn random_folds_partition(n in 5usize..80, k in 2usize..6, seed in any::<u64>()) {
        prop_assume!(n >= k);
        let docs: Vec<(String, String)> = (0..n).map(|i| (format!("d{i:03}"), (i % 3).to_string())).collect();
        let plan = make_folds(&docs, FoldMode::Random, k, seed).unwrap();
        prop_assert_eq!(plan.assignments.len(), n);
        let sizes: Vec<usize> = (0..k).map(|f| plan.test_docs(f).len()).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        for f in 0..k {
            let test: BTreeSet<&str> = plan.test_docs(f).into_iter().collect();
            let train: BTreeSet<&str> = plan.train_docs(f).into_iter().collect();
            prop_assert!(test.is_disjoint(&train));
            for d in &plan.dev[f] {
                prop_assert!(!test.contains(d.as_str()) && !train.contains(d.as_str()));
            }
            prop_assert_eq!(test.len() + train.len() + plan.dev[f].len(), n);
        }
        prop_assert_eq!(&plan, &make_folds(&docs, FoldMode::Random, k, seed).unwrap());
    }
}

#[test]
fn twenty_remaining_topics_give_four_per_fold() {
    let docs = docs_with_topics(22, 3);
    let plan = make_folds(&docs, FoldMode::CrossTopic, 5, 0).unwrap();
    let by_fold = topics_by_fold(&docs, &plan.assignments);
    assert_eq!(by_fold.len(), 5);
    for topics in by_fold.values() {
        assert_eq!(topics.len(), 4);
    }
    // topics sort numerically, so 21 and 22 are held out
    let dev_topics: BTreeSet<&str> = plan.dev[0].iter().map(|d| d.split('-').next().unwrap()).collect();
    assert_eq!(dev_topics, BTreeSet::from(["t21", "t22"]));
    assert_eq!(by_fold[&0], BTreeSet::from(["1", "2", "3", "4"].map(String::from)));
}

#[test]
fn fold_errors() {
    let docs = docs_with_topics(6, 2);
    assert!(matches!(make_folds(&docs, FoldMode::CrossTopic, 5, 0), Err(EvalError::TooFewTopics { .. })));
    assert!(matches!(make_folds(&docs, FoldMode::Random, 1, 0), Err(EvalError::BadFoldCount(1))));
    assert!(matches!(make_folds(&docs[..3], FoldMode::Random, 5, 0), Err(EvalError::TooFewDocuments { .. })));
}

#[test]
fn every_pair_is_tested_once() {
    let corpus = gen_synthetic(30, 4);
    let ds = prepare(&corpus.records, FeatureConfig { hops: 2, max_paths: 4 }).unwrap();
    let docs: Vec<(String, String)> = ds.docs.iter().map(|d| (d.doc_id.clone(), d.topic_id.clone())).collect();
    let cfg = TrainConfig {
        model: ModelConfig { dim: 6, layers: 2, ..ModelConfig::default() },
        epochs: 2,
        seed: 1,
        ..TrainConfig::default()
    };
    for (mode, k) in [(FoldMode::Random, 5), (FoldMode::CrossTopic, 3)] {
        let plan = make_folds(&docs, mode, k, 2).unwrap();
        let cv = run_cross_validation(&ds, &plan, &cfg, ContextSource::Internal, 1).unwrap();
        assert_eq!(cv.folds.len(), k);
        let mut tested: Vec<(String, usize)> = cv
            .folds
            .iter()
            .flat_map(|f| f.predictions.iter().map(|p| (p.doc_id.clone(), p.pair_index)))
            .collect();
        tested.sort();
        let expected: Vec<(String, usize)> = ds
            .pairs
            .iter()
            .filter(|p| plan.assignments.contains_key(&ds.docs[p.doc].doc_id))
            .map(|p| (ds.docs[p.doc].doc_id.clone(), p.pair_index))
            .collect();
        let unique: BTreeSet<_> = tested.iter().cloned().collect();
        assert_eq!(unique.len(), tested.len());
        let mut expected = expected;
        expected.sort();
        assert_eq!(tested, expected);

        let pooled = cv.folds.iter().fold(Confusion::default(), |a, f| a.merge(f.metrics.confusion));
        assert_eq!(cv.aggregate, MetricsReport::from_confusion(pooled));
        assert_eq!(cv.aggregate, cv.pooled_where(|_| true));

        if mode == FoldMode::Random {
            let par = run_cross_validation(&ds, &plan, &cfg, ContextSource::Internal, 3).unwrap();
            for (a, b) in cv.folds.iter().zip(&par.folds) {
                assert_eq!(a.predictions, b.predictions);
            }
        }
    }
}
