//! Structural properties of constrained elimination: the fill-path
//! characterization, interface completeness after constrained
//! triangulation, and boundary decomposition into constrainedly
//! triangulated parts.

mod common;

use std::collections::{BTreeMap, BTreeSet};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use common::random_dynamic_model;
use dpn_core::graph::{
    fill_characterization_check, maximal_cliques, moralize, triangulate_constrained,
    DirectedGraph, EliminationOrder, Heuristic, UGraph,
};
use dpn_core::model::{SliceVar, VarId};
use dpn_core::window::moral_interface;

fn sv(i: u32) -> SliceVar {
    SliceVar::new(0, VarId(i))
}

fn random_graph(rng: &mut StdRng, n: usize, density: f64) -> UGraph {
    let mut g = UGraph::new();
    for i in 0..n as u32 {
        g.add_vertex(sv(i));
    }
    for i in 0..n as u32 {
        for j in i + 1..n as u32 {
            if rng.gen_bool(density) {
                g.add_edge(sv(i), sv(j));
            }
        }
    }
    g
}

fn random_order(rng: &mut StdRng, g: &UGraph) -> EliminationOrder {
    let mut seq: Vec<SliceVar> = g.vertices().collect();
    for i in (1..seq.len()).rev() {
        let j = rng.gen_range(0..=i);
        seq.swap(i, j);
    }
    EliminationOrder::new(seq).unwrap()
}

fn fills_by_elimination(g: &UGraph, order: &EliminationOrder) -> BTreeSet<(SliceVar, SliceVar)> {
    let mut work = g.clone();
    let mut fills = BTreeSet::new();
    for &v in order.sequence() {
        for e in work.eliminate_in_place(v).unwrap() {
            fills.insert(e);
        }
    }
    fills
}

/// Moral graph of a model unrolled over `0..=t_last`, with per-slice blocks
/// and per-vertex weights.
fn unrolled_moral(
    model: &dpn_core::model::DpnModel,
    t_last: u32,
) -> (UGraph, Vec<BTreeSet<SliceVar>>, BTreeMap<SliceVar, usize>) {
    let dag = model.unroll(0, t_last).unwrap();
    let mut directed = DirectedGraph::new();
    for &v in &dag.vertices {
        directed.add_vertex(v);
    }
    for (&c, ps) in &dag.parents {
        directed.set_parents(c, ps.clone());
    }
    let moral = moralize(&directed).unwrap();
    let mut blocks = vec![BTreeSet::new(); (t_last + 1) as usize];
    for &v in &dag.vertices {
        blocks[v.t as usize].insert(v);
    }
    let weights = dag.vertices.iter().map(|&v| (v, model.cardinality(v.var))).collect();
    (moral, blocks, weights)
}

#[test]
fn fills_agree_with_characterization_on_random_graphs() {
    let mut rng = StdRng::seed_from_u64(314);
    for _ in 0..120 {
        let n = rng.gen_range(2..=8);
        let g = random_graph(&mut rng, n, 0.35);
        let order = random_order(&mut rng, &g);
        let fills = fills_by_elimination(&g, &order);
        let vs: Vec<SliceVar> = g.vertices().collect();
        for (i, &a) in vs.iter().enumerate() {
            for &b in &vs[i + 1..] {
                let in_filled = g.has_edge(a, b) || fills.contains(&(a, b));
                assert_eq!(
                    in_filled,
                    fill_characterization_check(&g, &order, a, b),
                    "n={n} pair ({a},{b})"
                );
            }
        }
    }
}

#[test]
fn reeliminating_with_returned_order_adds_nothing() {
    let mut rng = StdRng::seed_from_u64(271);
    for _ in 0..60 {
        let n = rng.gen_range(2..=9);
        let g = random_graph(&mut rng, n, 0.3);
        let blocks = vec![g.vertices().collect::<BTreeSet<_>>()];
        let heuristic = if rng.gen_bool(0.5) { Heuristic::MinFill } else { Heuristic::MinWeight };
        let tri = triangulate_constrained(&g, &blocks, &heuristic, &BTreeMap::new()).unwrap();
        let mut filled = g.clone();
        for &(a, b) in &tri.fill_edges {
            filled.add_edge(a, b);
        }
        // maximal_cliques rejects imperfect orders, so success is the check.
        let cliques = maximal_cliques(&filled, &tri.order).unwrap();
        assert_eq!(cliques, tri.cliques);
    }
}

#[test]
fn two_slice_chain_fills_match_constrained_minimum() {
    // Moral graph of the canonical chain unrolled over two slices, blocks =
    // slices: the singleton interface is trivially complete and the greedy
    // constrained triangulation reaches the minimum over all constrained
    // orders (exhaustive search).
    let model = common::canonical_hmm();
    let (moral, blocks, weights) = unrolled_moral(&model, 1);
    let tri = triangulate_constrained(&moral, &blocks, &Heuristic::MinWeight, &weights).unwrap();

    let mut filled = moral.clone();
    for &(a, b) in &tri.fill_edges {
        filled.add_edge(a, b);
    }
    let interface = moral_interface(&moral, 1);
    assert_eq!(interface.len(), 1);
    assert!(filled.is_complete(&interface));

    // Exhaustive minimum over block-respecting orders.
    let perms = |set: &BTreeSet<SliceVar>| -> Vec<Vec<SliceVar>> {
        fn go(rest: &mut Vec<SliceVar>, cur: &mut Vec<SliceVar>, out: &mut Vec<Vec<SliceVar>>) {
            if rest.is_empty() {
                out.push(cur.clone());
                return;
            }
            for i in 0..rest.len() {
                let v = rest.remove(i);
                cur.push(v);
                go(rest, cur, out);
                cur.pop();
                rest.insert(i, v);
            }
        }
        let mut rest: Vec<SliceVar> = set.iter().copied().collect();
        let mut out = Vec::new();
        go(&mut rest, &mut Vec::new(), &mut out);
        out
    };
    let mut best = usize::MAX;
    for first in perms(&blocks[0]) {
        for second in perms(&blocks[1]) {
            let mut seq = first.clone();
            seq.extend(second.iter().copied());
            let order = EliminationOrder::new(seq).unwrap();
            best = best.min(fills_by_elimination(&moral, &order).len());
        }
    }
    assert_eq!(tri.fill_edges.len(), best);
}

#[test]
fn interfaces_complete_after_constrained_triangulation() {
    // On random connected-slice models, the moral interface of every
    // boundary induces a complete subgraph of the constrained
    // triangulation.
    let mut rng = StdRng::seed_from_u64(161);
    for _ in 0..30 {
        let n = rng.gen_range(1..=4);
        let model = random_dynamic_model(&mut rng, n);
        let t_last = rng.gen_range(1..=4u32);
        let (moral, blocks, weights) = unrolled_moral(&model, t_last);
        let tri =
            triangulate_constrained(&moral, &blocks, &Heuristic::MinWeight, &weights).unwrap();
        let mut filled = moral.clone();
        for &(a, b) in &tri.fill_edges {
            filled.add_edge(a, b);
        }
        for t in 1..=t_last {
            let interface = moral_interface(&moral, t);
            assert!(
                filled.is_complete(&interface),
                "interface of slice {t} not complete (n={n}, t_last={t_last})"
            );
        }
    }
}

#[test]
fn boundary_decomposition_yields_constrainedly_triangulated_parts() {
    // Splitting the filled graph at any boundary interface leaves two
    // parts for which the restricted orders are perfect, i.e. both parts
    // are already constrainedly triangulated.
    let mut rng = StdRng::seed_from_u64(202);
    for _ in 0..20 {
        let n = rng.gen_range(1..=3);
        let model = random_dynamic_model(&mut rng, n);
        let t_last = rng.gen_range(2..=4u32);
        let (moral, blocks, weights) = unrolled_moral(&model, t_last);
        let tri =
            triangulate_constrained(&moral, &blocks, &Heuristic::MinWeight, &weights).unwrap();
        let mut filled = moral.clone();
        for &(a, b) in &tri.fill_edges {
            filled.add_edge(a, b);
        }
        for t in 1..=t_last {
            let interface = moral_interface(&moral, t);
            let past: BTreeSet<SliceVar> = filled
                .vertices()
                .filter(|v| v.t < t)
                .chain(interface.iter().copied())
                .collect();
            let future: BTreeSet<SliceVar> = filled.vertices().filter(|v| v.t >= t).collect();
            for part in [past, future] {
                let sub = filled.induced(&part);
                let order = tri.order.restricted(&part);
                assert!(
                    maximal_cliques(&sub, &order).is_ok(),
                    "restricted order imperfect at boundary {t}"
                );
            }
        }
    }
}

#[test]
fn unrolled_models_are_acyclic_to_deep_horizons() {
    let mut rng = StdRng::seed_from_u64(404);
    for _ in 0..10 {
        let n = rng.gen_range(1..=4);
        let model = random_dynamic_model(&mut rng, n);
        let dag = model.unroll(0, 50).unwrap();
        let mut directed = DirectedGraph::new();
        for &v in &dag.vertices {
            directed.add_vertex(v);
        }
        for (&c, ps) in &dag.parents {
            directed.set_parents(c, ps.clone());
        }
        assert!(directed.is_acyclic());
    }
}
