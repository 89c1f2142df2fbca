//! Search-level properties of knowledge-constrained GES on simulated data.

use std::collections::BTreeSet;

use qprobe::bayesnet::{random_cpds, Cbn};
use qprobe::discovery::{ges, ges_detailed, graph_score, orient_to_dag, pick_hint_edges, Knowledge};
use qprobe::graph::{random_dag, Dag};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

fn strong_chain() -> Cbn {
    let g = Dag::from_named_edges(&["x0", "x1", "x2"], &[("x0", "x1"), ("x1", "x2")]).unwrap();
    Cbn::from_tables(g, vec![vec![0.5], vec![0.1, 0.9], vec![0.1, 0.9]]).unwrap()
}

#[test]
fn chain_class_is_recovered() {
    let cbn = strong_chain();
    let mut hits = 0;
    for seed in 0..100 {
        let d = cbn.sample(1000, &mut ChaCha8Rng::seed_from_u64(seed));
        let p = ges(&d, &Knowledge::new(), 1.0).unwrap();
        if p.directed().is_empty() && p.undirected() == &BTreeSet::from([(0, 1), (1, 2)]) {
            hits += 1;
        }
    }
    assert!(hits >= 95, "{hits}/100");
}

/// A sampled network plus knowledge mixing true hints with forbidden
/// reversals of true edges and forbidden non-edges.
fn constrained_case(seed: u64) -> (Cbn, qprobe::dataset::BinaryDataset, Knowledge) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = random_dag(7, 0.15, &mut rng).unwrap();
    let cbn = random_cpds(&g, &mut rng);
    let d = cbn.sample(1000, &mut rng);
    let mut k = pick_hint_edges(&g, 0.3, &mut rng).unwrap();
    for &(a, b) in g.edges() {
        if rng.gen_bool(0.3) && !k.required().contains(&(g.label(a).into(), g.label(b).into())) {
            k.forbid(g.label(b), g.label(a));
        }
    }
    for _ in 0..3 {
        let (a, b) = (rng.gen_range(0..7), rng.gen_range(0..7));
        if a != b && !g.is_adjacent(a, b) {
            k.forbid(g.label(a), g.label(b));
        }
    }
    (cbn, d, k)
}

#[test]
fn knowledge_is_respected_in_pattern_and_dag() {
    for seed in 0..200 {
        let (cbn, d, k) = constrained_case(seed);
        let labels = cbn.graph().labels();
        let idx = |s: &String| labels.iter().position(|l| l == s).unwrap();
        let p = ges(&d, &k, 1.0).unwrap();
        for (a, b) in k.required() {
            assert!(p.directed().contains(&(idx(a), idx(b))), "seed {seed}: {a} -> {b} missing");
        }
        for (a, b) in k.forbidden() {
            assert!(!p.directed().contains(&(idx(a), idx(b))), "seed {seed}: {a} -> {b} present");
        }
        let dag = orient_to_dag(&p, &k).unwrap();
        for (a, b) in k.required() {
            assert!(dag.has_edge(idx(a), idx(b)));
        }
        for (a, b) in k.forbidden() {
            assert!(!dag.has_edge(idx(a), idx(b)), "seed {seed}: oriented {a} -> {b}");
        }
    }
}

#[test]
fn forward_phase_improves_on_the_start() {
    for seed in 0..40 {
        let (cbn, d, k) = constrained_case(seed);
        let out = ges_detailed(&d, &k, 1.0).unwrap();
        assert!(out.forward_score >= out.initial_score - 1e-9, "seed {seed}");
        assert!(out.final_score >= out.forward_score - 1e-9, "seed {seed}");

        // The start is the graph of required edges alone.
        let labels = cbn.graph().labels().to_vec();
        let req: Vec<(usize, usize)> = k
            .required()
            .iter()
            .map(|(a, b)| {
                let i = labels.iter().position(|l| l == a).unwrap();
                let j = labels.iter().position(|l| l == b).unwrap();
                (i, j)
            })
            .collect();
        let start = Dag::new(labels, req).unwrap();
        assert!((graph_score(&d, &start, 1.0).unwrap() - out.initial_score).abs() < 1e-6);
    }
}

#[test]
fn search_is_deterministic_across_threads() {
    let cases: Vec<_> = (0..24).map(constrained_case).collect();
    let serial: Vec<_> = cases.iter().map(|(_, d, k)| ges(d, k, 1.0).unwrap()).collect();
    let parallel: Vec<_> = cases.par_iter().map(|(_, d, k)| ges(d, k, 1.0).unwrap()).collect();
    assert_eq!(serial, parallel);
}
