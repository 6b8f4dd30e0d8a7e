mod common;

use proptest::prelude::*;
use semsin::data::fixtures::shot_protect;
use semsin::graph::{build_semantic_graph, resolve_event_node, shortest_paths};
use semsin::penman::parse_penman;

#[test]
fn two_hundred_seeded_graphs() {
    for seed in 0..200 {
        common::graph_oracle_case(seed).unwrap();
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn arbitrary_seeds(seed in 1_000u64..u64::MAX) {
        prop_assert_eq!(common::graph_oracle_case(seed), Ok(()));
    }
}

#[test]
fn protect_to_shoot_paths() {
    let rec = shot_protect();
    let amr = parse_penman(&rec.amr).unwrap();
    let sg = build_semantic_graph(&amr, &rec.alignments, rec.tokens.len()).unwrap();
    let protect = resolve_event_node(&sg, rec.event("protect").unwrap().token_span).unwrap();
    let shot = resolve_event_node(&sg, rec.event("shot").unwrap().token_span).unwrap();
    let paths = shortest_paths(&sg, protect, shot, 8).unwrap();
    let described: Vec<String> = paths[..paths.len() / 2].iter().map(|p| p.describe(&sg)).collect();
    assert_eq!(
        described,
        ["protect-01 -ARG0^-1-> cause-01 -ARG1-> shoot-02", "protect-01 -ARG0-> person -ARG1^-1-> shoot-02"]
    );
    assert!(paths.iter().all(|p| p.len() == 2));
}
