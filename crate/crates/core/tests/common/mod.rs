//! Random graph generators and brute-force oracles shared by the test targets.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use semsin::graph::{build_semantic_graph, PathSequence, RoleId, SemanticGraph};
use semsin::penman::{classify_role, AmrEdge, AmrGraph, AmrNode, NodeKind};

pub const ROLES: &[&str] = &[
    "ARG0", "ARG1", "ARG2", "op1", "op2", "manner", "instrument", "time", "duration", "mod", "location",
];
const CONCEPTS: &[&str] = &["cause-01", "person", "shoot-02", "protect-01", "storm", "and", "thing", "city"];
const CONSTANTS: &[&str] = &["\"Horton\"", "-", "5", "imperative"];

fn pick<'a>(rng: &mut impl Rng, xs: &[&'a str]) -> &'a str {
    xs[rng.random_range(0..xs.len())]
}

fn var(i: usize) -> String {
    format!("v{i}")
}

fn random_edge(rng: &mut impl Rng, a: usize, b: usize) -> AmrEdge {
    let role = pick(rng, ROLES).to_string();
    let flip = rng.random_bool(0.3);
    let (s, t) = if flip { (b, a) } else { (a, b) };
    AmrEdge {
        source: var(s),
        role,
        target: var(t),
        inverted: flip,
    }
}

/// Spanning tree over `v0..v{n-1}` plus a few extra edges in random
/// directions. With `connected == false` some tree edges are dropped.
pub fn random_amr(rng: &mut impl Rng, max_nodes: usize, connected: bool) -> AmrGraph {
    let n = rng.random_range(2..=max_nodes);
    let nodes = (0..n)
        .map(|i| AmrNode {
            id: var(i),
            concept: pick(rng, CONCEPTS).to_string(),
            kind: NodeKind::Variable,
        })
        .collect();
    let mut edges = Vec::new();
    for i in 1..n {
        if connected || rng.random_bool(0.85) {
            let parent = rng.random_range(0..i);
            edges.push(random_edge(rng, parent, i));
        }
    }
    for _ in 0..rng.random_range(0..=n / 2) {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a != b {
            edges.push(random_edge(rng, a, b));
        }
    }
    AmrGraph {
        nodes,
        edges,
        root: var(0),
    }
}

/// A rooted graph the serializer can write: tree edges go from an earlier
/// variable to a later one (possibly as `-of`), extra edges add reentrancy,
/// and some variables get constant children.
pub fn random_rooted_amr(rng: &mut impl Rng, max_nodes: usize) -> AmrGraph {
    let mut g = random_amr(rng, max_nodes, true);
    let n = g.nodes.len();
    for i in 0..n {
        if rng.random_bool(0.25) {
            let id = format!("{}.c", var(i));
            g.nodes.push(AmrNode {
                id: id.clone(),
                concept: pick(rng, CONSTANTS).to_string(),
                kind: NodeKind::Constant,
            });
            g.edges.push(AmrEdge {
                source: var(i),
                role: pick(rng, &["polarity", "quant", "mode", "op1"]).to_string(),
                target: id,
                inverted: false,
            });
        }
    }
    g
}

pub fn semantic(g: &AmrGraph) -> SemanticGraph {
    build_semantic_graph(g, &BTreeMap::new(), 1).expect("no alignments to check")
}

fn index_of(g: &AmrGraph, id: &str) -> usize {
    g.nodes.iter().position(|n| n.id == id).unwrap()
}

/// All-pairs undirected hop distances.
pub fn floyd_warshall(g: &AmrGraph) -> Vec<Vec<Option<usize>>> {
    let n = g.nodes.len();
    let mut d = vec![vec![None; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = Some(0);
    }
    for e in &g.edges {
        let (s, t) = (index_of(g, &e.source), index_of(g, &e.target));
        if s != t {
            d[s][t] = Some(1);
            d[t][s] = Some(1);
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if let (Some(a), Some(b)) = (d[i][k], d[k][j]) {
                    if d[i][j].is_none_or(|c| a + b < c) {
                        d[i][j] = Some(a + b);
                    }
                }
            }
        }
    }
    d
}

fn role_id(sg: &SemanticGraph, label: &str, inverse: bool) -> RoleId {
    sg.role_vocab
        .iter()
        .position(|r| r.label == label && r.inverse == inverse)
        .unwrap()
}

/// Distinct `(neighbor, role id)` steps out of every node, read straight
/// from the AMR edge list.
fn steps(g: &AmrGraph, sg: &SemanticGraph) -> Vec<BTreeSet<(usize, RoleId)>> {
    let mut out = vec![BTreeSet::new(); g.nodes.len()];
    for e in &g.edges {
        let (s, t) = (index_of(g, &e.source), index_of(g, &e.target));
        out[s].insert((t, role_id(sg, &e.role, false)));
        out[t].insert((s, role_id(sg, &e.role, true)));
    }
    out
}

/// Every simple path from `a` to `b`, by exhaustive DFS, filtered to the
/// minimum length and sorted by the `(node, role)` step sequence.
pub fn dfs_shortest_paths(g: &AmrGraph, sg: &SemanticGraph, a: usize, b: usize) -> Vec<PathSequence> {
    fn go(
        st: &[BTreeSet<(usize, RoleId)>],
        b: usize,
        nodes: &mut Vec<usize>,
        roles: &mut Vec<RoleId>,
        out: &mut Vec<PathSequence>,
    ) {
        let u = *nodes.last().unwrap();
        if u == b {
            out.push(PathSequence {
                nodes: nodes.clone(),
                roles: roles.clone(),
            });
            return;
        }
        for &(v, r) in &st[u] {
            if nodes.contains(&v) {
                continue;
            }
            nodes.push(v);
            roles.push(r);
            go(st, b, nodes, roles, out);
            nodes.pop();
            roles.pop();
        }
    }
    let st = steps(g, sg);
    let mut all = Vec::new();
    go(&st, b, &mut vec![a], &mut Vec::new(), &mut all);
    let Some(min) = all.iter().map(PathSequence::len).min() else {
        return all;
    };
    let mut best: Vec<PathSequence> = all.into_iter().filter(|p| p.len() == min).collect();
    best.sort_by_key(step_key);
    best
}

pub fn step_key(p: &PathSequence) -> Vec<(usize, RoleId)> {
    p.nodes[1..].iter().copied().zip(p.roles.iter().copied()).collect()
}

/// `ReLU(H W0 + sum_r sum_{j in N_i^r} H_j W_r / |N_i^r|)` with explicit
/// loops; neighbor sets come from the AMR edges.
pub fn dense_rgcn_layer(g: &AmrGraph, h: &[Vec<f64>], w0: &[Vec<f64>], wr: &[Vec<Vec<f64>>]) -> Vec<Vec<f64>> {
    let n = h.len();
    let d = w0[0].len();
    let mut nbrs: BTreeMap<(usize, usize), BTreeSet<usize>> = BTreeMap::new();
    for e in &g.edges {
        let (s, t) = (index_of(g, &e.source), index_of(g, &e.target));
        let c = classify_role(&e.role).index() * 2;
        nbrs.entry((c, t)).or_default().insert(s);
        nbrs.entry((c + 1, s)).or_default().insert(t);
    }
    let matvec = |x: &[f64], w: &[Vec<f64>]| -> Vec<f64> {
        (0..d).map(|col| x.iter().zip(w).map(|(xi, row)| xi * row[col]).sum()).collect()
    };
    (0..n)
        .map(|i| {
            let mut acc = matvec(&h[i], w0);
            for ((r, dst), src) in &nbrs {
                if *dst != i {
                    continue;
                }
                for &j in src {
                    let m = matvec(&h[j], &wr[*r]);
                    for (a, v) in acc.iter_mut().zip(m) {
                        *a += v / src.len() as f64;
                    }
                }
            }
            acc.into_iter().map(|v| v.max(0.0)).collect()
        })
        .collect()
}

/// Runs every graph oracle on the random graph drawn from `seed`.
pub fn graph_oracle_case(seed: u64) -> Result<(), String> {
    use rand::SeedableRng;
    use semsin::graph::{khop_subgraph, shortest_paths, GraphError};
    use semsin::model::layers::{rgcn_forward, relation_adjacency, RgcnLayer};
    use semsin::numerics::{normal, ParamStore, Tape};

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let g = random_amr(&mut rng, 12, seed % 4 != 0);
    let sg = semantic(&g);
    let n = g.nodes.len();
    let fw = floyd_warshall(&g);

    for a in 0..n {
        let bfs = sg.distances_from(a);
        if bfs != fw[a] {
            return Err(format!("seed {seed}: distances from {a}: {bfs:?} vs {:?}", fw[a]));
        }
        for b in 0..n {
            if a == b {
                continue;
            }
            match shortest_paths(&sg, a, b, usize::MAX) {
                Err(GraphError::NoPath { .. }) if fw[a][b].is_none() => {}
                Err(e) => return Err(format!("seed {seed}: {a}->{b}: {e}")),
                Ok(paths) => {
                    let m = paths.len() / 2;
                    let oracle = dfs_shortest_paths(&g, &sg, a, b);
                    if paths.iter().any(|p| Some(p.len()) != fw[a][b]) {
                        return Err(format!("seed {seed}: {a}->{b}: path length differs from {:?}", fw[a][b]));
                    }
                    if paths[..m] != oracle[..] {
                        return Err(format!("seed {seed}: {a}->{b}: {:?} vs {:?}", &paths[..m], oracle));
                    }
                    if paths[m..].iter().zip(&paths[..m]).any(|(r, f)| *r != f.reversed()) {
                        return Err(format!("seed {seed}: {a}->{b}: reverse half out of order"));
                    }
                    let capped = shortest_paths(&sg, a, b, 2).map_err(|e| e.to_string())?;
                    let k = oracle.len().min(2);
                    if capped[..k] != oracle[..k] || capped.len() != 2 * k {
                        return Err(format!("seed {seed}: {a}->{b}: truncation kept {:?}", capped));
                    }
                }
            }
        }
        for hops in 1..=3 {
            let sub = khop_subgraph(&sg, a, hops).map_err(|e| e.to_string())?;
            let want: Vec<usize> = (0..n).filter(|&j| fw[a][j].is_some_and(|d| d <= hops)).collect();
            if sub.original != want || sub.original[sub.center] != a {
                return Err(format!("seed {seed}: {hops}-hop around {a}: {:?} vs {want:?}", sub.original));
            }
            let inside: Vec<_> = sg
                .edges
                .iter()
                .filter(|e| want.contains(&e.src) && want.contains(&e.dst))
                .map(|e| (e.src, e.role, e.dst))
                .collect();
            let mapped: Vec<_> = sub
                .subgraph
                .edges
                .iter()
                .map(|e| (sub.original[e.src], e.role, sub.original[e.dst]))
                .collect();
            if inside != mapped {
                return Err(format!("seed {seed}: {hops}-hop around {a}: edge sets differ"));
            }
        }
    }

    let d = 5;
    let mut store = ParamStore::new();
    let layers: Vec<RgcnLayer> = (0..3)
        .map(|l| RgcnLayer::register(&mut store, &format!("l{l}"), d, &mut rng))
        .collect();
    let h0 = normal(n, d, 1.0, &mut rng);
    let adjacency = relation_adjacency(&sg);
    let mut tape = Tape::new(&store);
    let x = tape.constant(h0.clone());
    let out = rgcn_forward(&mut tape, &adjacency, x, &layers, |_, v| Ok(v)).map_err(|e| e.to_string())?;
    let got = tape.value(out);
    let rows = |t: &semsin::numerics::Tensor| -> Vec<Vec<f64>> { (0..t.rows()).map(|r| t.row_slice(r).to_vec()).collect() };
    let mut h = rows(&h0);
    for layer in &layers {
        let w0 = rows(store.get(layer.self_loop));
        let wr: Vec<_> = layer.relations.iter().map(|&w| rows(store.get(w))).collect();
        h = dense_rgcn_layer(&g, &h, &w0, &wr);
    }
    for (i, row) in h.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            if (got.get(i, j) - v).abs() > 1e-10 {
                return Err(format!("seed {seed}: rgcn[{i}][{j}] = {} vs {v}", got.get(i, j)));
            }
        }
    }
    Ok(())
}

/// Drops every `wall_ms` field, at any depth.
pub fn strip_timings(v: &mut serde_json::Value) {
    match v {
        serde_json::Value::Object(map) => {
            map.remove("wall_ms");
            map.values_mut().for_each(strip_timings);
        }
        serde_json::Value::Array(items) => items.iter_mut().for_each(strip_timings),
        _ => {}
    }
}

/// File contents keyed by relative path, with JSON and JSONL timings removed.
pub fn snapshot(dir: &std::path::Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
                continue;
            }
            let bytes = std::fs::read(&path).unwrap();
            let name = path.strip_prefix(dir).unwrap().display().to_string();
            let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
            let bytes = match ext {
                "json" => {
                    let mut v: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
                    strip_timings(&mut v);
                    v.to_string().into_bytes()
                }
                "jsonl" => {
                    let text = String::from_utf8(bytes).unwrap();
                    let lines: Vec<String> = text
                        .lines()
                        .map(|l| {
                            let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
                            strip_timings(&mut v);
                            v.to_string()
                        })
                        .collect();
                    lines.join("\n").into_bytes()
                }
                _ => bytes,
            };
            out.insert(name, bytes);
        }
    }
    out
}
