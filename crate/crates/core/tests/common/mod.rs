//! Shared test oracles and model generators.
//!
//! Everything here is deliberately independent of the junction-tree code
//! paths it checks: the enumeration oracle walks joint configurations with
//! explicit assignment maps, the chain oracles are textbook forward /
//! forward-backward recursions, and the clique oracle enumerates subsets.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::rngs::StdRng;
use rand::Rng;

use dpn_core::model::{
    Cpt, DpnModel, Evidence, Finding, ParentRef, SliceSpec, SliceVar, TransitionSpec, VarId,
    Variable,
};

/// A plain discrete Bayesian network over unrolled vertices, used both as a
/// generator target and as the enumeration oracle's input.
#[derive(Debug, Clone)]
pub struct StaticNetwork {
    /// Vertices in canonical order.
    pub vars: Vec<SliceVar>,
    pub cards: BTreeMap<SliceVar, usize>,
    /// Parents in CPT declaration order.
    pub parents: BTreeMap<SliceVar, Vec<SliceVar>>,
    /// Flat CPTs: parents slowest in declared order, child fastest.
    pub cpts: BTreeMap<SliceVar, Vec<f64>>,
}

impl StaticNetwork {
    /// Unrolls a dynamic model over slices `0..=t_last`.
    pub fn from_model(model: &DpnModel, t_last: u32) -> StaticNetwork {
        let dag = model.unroll(0, t_last).expect("valid range");
        assert!(dag.dangling.is_empty());
        let mut net = StaticNetwork {
            vars: dag.vertices.clone(),
            cards: BTreeMap::new(),
            parents: BTreeMap::new(),
            cpts: BTreeMap::new(),
        };
        net.vars.sort();
        for &v in &net.vars {
            net.cards.insert(v, model.cardinality(v.var));
        }
        for (&child, parents) in &dag.parents {
            let spec = model.slice_spec(child.t);
            let cpt = spec.cpts.iter().find(|c| c.child == child.var).unwrap();
            net.parents.insert(child, parents.clone());
            net.cpts.insert(child, cpt.table.clone());
        }
        net
    }

    fn cpt_value(&self, child: SliceVar, assign: &BTreeMap<SliceVar, usize>) -> f64 {
        let parents = &self.parents[&child];
        let mut row = 0usize;
        for &p in parents {
            row = row * self.cards[&p] + assign[&p];
        }
        let card = self.cards[&child];
        self.cpts[&child][row * card + assign[&child]]
    }

    fn evidence_weight(&self, ev: &[Evidence], assign: &BTreeMap<SliceVar, usize>) -> f64 {
        let mut w = 1.0;
        for e in ev {
            let v = SliceVar::new(e.t, e.var);
            let state = assign[&v];
            w *= match &e.finding {
                Finding::Hard(s) => {
                    if state == *s {
                        1.0
                    } else {
                        0.0
                    }
                }
                Finding::Likelihood(l) => l[state],
            };
        }
        w
    }

    /// Walks every joint configuration, calling `f(assignment, weight)`
    /// where `weight` is the joint probability times the evidence weight.
    pub fn for_each_config(&self, ev: &[Evidence], mut f: impl FnMut(&BTreeMap<SliceVar, usize>, f64)) {
        let n = self.vars.len();
        let mut assign: BTreeMap<SliceVar, usize> = self.vars.iter().map(|&v| (v, 0)).collect();
        let mut digits = vec![0usize; n];
        loop {
            let mut w = 1.0;
            for &v in &self.vars {
                w *= self.cpt_value(v, &assign);
            }
            w *= self.evidence_weight(ev, &assign);
            f(&assign, w);
            // Increment the mixed-radix counter.
            let mut pos = n;
            loop {
                if pos == 0 {
                    return;
                }
                pos -= 1;
                let v = self.vars[pos];
                digits[pos] += 1;
                if digits[pos] < self.cards[&v] {
                    assign.insert(v, digits[pos]);
                    break;
                }
                digits[pos] = 0;
                assign.insert(v, 0);
            }
        }
    }

    /// Total probability of the evidence.
    pub fn evidence_mass(&self, ev: &[Evidence]) -> f64 {
        let mut z = 0.0;
        self.for_each_config(ev, |_, w| z += w);
        z
    }

    /// Posterior single-variable marginals by full enumeration.
    pub fn posterior_marginals(&self, ev: &[Evidence]) -> BTreeMap<SliceVar, Vec<f64>> {
        let mut sums: BTreeMap<SliceVar, Vec<f64>> = self
            .vars
            .iter()
            .map(|&v| (v, vec![0.0; self.cards[&v]]))
            .collect();
        let mut z = 0.0;
        self.for_each_config(ev, |assign, w| {
            z += w;
            for (&v, acc) in sums.iter_mut() {
                acc[assign[&v]] += w;
            }
        });
        assert!(z > 0.0, "evidence has zero mass");
        for acc in sums.values_mut() {
            for x in acc.iter_mut() {
                *x /= z;
            }
        }
        sums
    }

    /// Posterior joint over a subset of vertices by full enumeration,
    /// flattened with the subset in canonical order, first slowest.
    pub fn posterior_joint(&self, ev: &[Evidence], subset: &BTreeSet<SliceVar>) -> Vec<f64> {
        let order: Vec<SliceVar> = subset.iter().copied().collect();
        let size: usize = order.iter().map(|v| self.cards[v]).product();
        let mut sums = vec![0.0; size];
        let mut z = 0.0;
        self.for_each_config(ev, |assign, w| {
            z += w;
            let mut idx = 0;
            for &v in &order {
                idx = idx * self.cards[&v] + assign[&v];
            }
            sums[idx] += w;
        });
        assert!(z > 0.0);
        for x in sums.iter_mut() {
            *x /= z;
        }
        sums
    }
}

/// Random CPT row: positive entries summing to one exactly (the final entry
/// is the complement).
pub fn random_row(rng: &mut StdRng, card: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..card).map(|_| rng.gen_range(0.05..1.0)).collect();
    let sum: f64 = raw.iter().sum();
    let mut row: Vec<f64> = raw.iter().map(|x| x / sum).collect();
    let head: f64 = row[..card - 1].iter().sum();
    row[card - 1] = 1.0 - head;
    row
}

fn random_cpt(rng: &mut StdRng, child_card: usize, parent_cards: &[usize]) -> Vec<f64> {
    let rows: usize = parent_cards.iter().product();
    let mut table = Vec::with_capacity(rows * child_card);
    for _ in 0..rows {
        table.extend(random_row(rng, child_card));
    }
    table
}

/// Random static network: a DAG over `n` slice-0 vertices with cardinalities
/// 2-3 and random CPTs.
pub fn random_static_network(rng: &mut StdRng, n: usize) -> StaticNetwork {
    let vars: Vec<SliceVar> = (0..n as u32).map(|i| SliceVar::new(0, VarId(i))).collect();
    let mut net = StaticNetwork {
        vars: vars.clone(),
        cards: BTreeMap::new(),
        parents: BTreeMap::new(),
        cpts: BTreeMap::new(),
    };
    for &v in &vars {
        net.cards.insert(v, rng.gen_range(2..=3));
    }
    for (i, &v) in vars.iter().enumerate() {
        let mut parents = Vec::new();
        for &p in &vars[..i] {
            if parents.len() < 3 && rng.gen_bool(0.4) {
                parents.push(p);
            }
        }
        let parent_cards: Vec<usize> = parents.iter().map(|p| net.cards[p]).collect();
        net.cpts.insert(v, random_cpt(rng, net.cards[&v], &parent_cards));
        net.parents.insert(v, parents);
    }
    net
}

/// Random evidence over a static network: each vertex observed with
/// probability `rate`, half hard and half likelihood findings.
pub fn random_evidence(rng: &mut StdRng, net: &StaticNetwork, rate: f64) -> Vec<Evidence> {
    let mut out = Vec::new();
    for &v in &net.vars {
        if !rng.gen_bool(rate) {
            continue;
        }
        let card = net.cards[&v];
        let finding = if rng.gen_bool(0.5) {
            Finding::Hard(rng.gen_range(0..card))
        } else {
            Finding::Likelihood((0..card).map(|_| rng.gen_range(0.1..1.0)).collect())
        };
        out.push(Evidence { t: v.t, var: v.var, finding });
    }
    out
}

/// Random dynamic model with `n` variables per slice (cardinalities 2-3).
///
/// Intra-slice edges always include a spanning chain over a random
/// permutation, so every slice's moral graph is connected and the boundary
/// interfaces behave like the connected composite models the windowing
/// theory describes; extra intra edges and one-or-more temporal edges
/// (self or crossing) are sprinkled on top.
pub fn random_dynamic_model(rng: &mut StdRng, n: usize) -> DpnModel {
    let variables: Vec<Variable> = (0..n)
        .map(|i| {
            let card = rng.gen_range(2..=3usize);
            let states: Vec<String> = (0..card).map(|s| format!("s{s}")).collect();
            Variable {
                name: format!("v{i}"),
                states,
            }
        })
        .collect();
    let ids: Vec<VarId> = (0..n as u32).map(VarId).collect();
    let card = |v: VarId| variables[v.0 as usize].cardinality();

    // Topological order = a random permutation; chain edges guarantee
    // intra-slice connectivity.
    let mut perm = ids.clone();
    for i in (1..perm.len()).rev() {
        let j = rng.gen_range(0..=i);
        perm.swap(i, j);
    }
    let mut intra: Vec<(VarId, VarId)> = Vec::new();
    for w in perm.windows(2) {
        intra.push((w[0], w[1]));
    }
    for i in 0..perm.len() {
        for j in i + 2..perm.len() {
            if rng.gen_bool(0.25) {
                intra.push((perm[i], perm[j]));
            }
        }
    }

    // Temporal edges: mostly self links, occasionally crossing.
    let mut temporal: Vec<(VarId, VarId)> = Vec::new();
    for &v in &ids {
        if rng.gen_bool(0.6) {
            temporal.push((v, v));
        }
        if n > 1 && rng.gen_bool(0.2) {
            let other = ids[rng.gen_range(0..n)];
            if other != v && !temporal.contains(&(other, v)) {
                temporal.push((other, v));
            }
        }
    }
    if temporal.is_empty() {
        temporal.push((ids[0], ids[0]));
    }
    temporal.sort();
    temporal.dedup();

    let intra_parents_of = |v: VarId| -> Vec<VarId> {
        intra.iter().filter(|&&(_, c)| c == v).map(|&(p, _)| p).collect()
    };
    let temporal_parents_of = |v: VarId| -> Vec<VarId> {
        temporal.iter().filter(|&&(_, c)| c == v).map(|&(p, _)| p).collect()
    };

    let make_slice = |rng: &mut StdRng, with_temporal: bool| -> SliceSpec {
        let mut cpts = Vec::new();
        for &v in &ids {
            let mut parents: Vec<ParentRef> = Vec::new();
            if with_temporal {
                parents.extend(temporal_parents_of(v).into_iter().map(ParentRef::prev));
            }
            parents.extend(intra_parents_of(v).into_iter().map(ParentRef::same));
            let parent_cards: Vec<usize> = parents.iter().map(|p| card(p.var)).collect();
            let table = random_cpt(rng, card(v), &parent_cards);
            cpts.push(Cpt { child: v, parents, table });
        }
        SliceSpec { variables: ids.clone(), intra_edges: intra.clone(), cpts }
    };

    let initial = make_slice(rng, false);
    let slice = make_slice(rng, true);
    let model = DpnModel {
        variables,
        initial,
        transition: TransitionSpec { slice, temporal_edges: temporal },
    };
    assert!(model.validate().is_empty(), "generator produced an invalid model");
    model
}

/// Random per-slice evidence for a dynamic model over slices `0..=t_last`.
pub fn random_dynamic_evidence(
    rng: &mut StdRng,
    model: &DpnModel,
    t_last: u32,
    rate: f64,
) -> Vec<Evidence> {
    let mut out = Vec::new();
    for t in 0..=t_last {
        for &v in &model.slice_spec(t).variables {
            if !rng.gen_bool(rate) {
                continue;
            }
            let card = model.cardinality(v);
            let finding = if rng.gen_bool(0.5) {
                Finding::Hard(rng.gen_range(0..card))
            } else {
                Finding::Likelihood((0..card).map(|_| rng.gen_range(0.1..1.0)).collect())
            };
            out.push(Evidence { t, var: v, finding });
        }
    }
    out
}

/// Canonical 2-state chain used across suites: uniform prior, transition
/// rows (0.7, 0.3) / (0.3, 0.7), emission rows (0.9, 0.1) / (0.2, 0.8).
pub fn canonical_hmm() -> DpnModel {
    let x = VarId(0);
    let y = VarId(1);
    DpnModel {
        variables: vec![Variable::new("x", &["s0", "s1"]), Variable::new("y", &["o0", "o1"])],
        initial: SliceSpec {
            variables: vec![x, y],
            intra_edges: vec![(x, y)],
            cpts: vec![
                Cpt::new(x, vec![], vec![0.5, 0.5]),
                Cpt::new(y, vec![ParentRef::same(x)], vec![0.9, 0.1, 0.2, 0.8]),
            ],
        },
        transition: TransitionSpec {
            slice: SliceSpec {
                variables: vec![x, y],
                intra_edges: vec![(x, y)],
                cpts: vec![
                    Cpt::new(x, vec![ParentRef::prev(x)], vec![0.7, 0.3, 0.3, 0.7]),
                    Cpt::new(y, vec![ParentRef::same(x)], vec![0.9, 0.1, 0.2, 0.8]),
                ],
            },
            temporal_edges: vec![(x, x)],
        },
    }
}

/// Forward algorithm on the canonical chain: filtered hidden-state
/// distribution per slice. `None` means the slice is unobserved.
pub fn hmm_forward(obs: &[Option<usize>]) -> Vec<[f64; 2]> {
    let trans = [[0.7, 0.3], [0.3, 0.7]];
    let emit = [[0.9, 0.1], [0.2, 0.8]];
    let mut f = [0.5, 0.5];
    let mut out = Vec::new();
    for (t, o) in obs.iter().enumerate() {
        if t > 0 {
            f = [
                f[0] * trans[0][0] + f[1] * trans[1][0],
                f[0] * trans[0][1] + f[1] * trans[1][1],
            ];
        }
        if let Some(o) = o {
            f = [f[0] * emit[0][*o], f[1] * emit[1][*o]];
        }
        let z = f[0] + f[1];
        f = [f[0] / z, f[1] / z];
        out.push(f);
    }
    out
}

/// Forward-backward smoothing on the canonical chain.
pub fn hmm_forward_backward(obs: &[Option<usize>]) -> Vec<[f64; 2]> {
    let trans = [[0.7, 0.3], [0.3, 0.7]];
    let emit = [[0.9, 0.1], [0.2, 0.8]];
    let n = obs.len();
    let lik = |t: usize, x: usize| obs[t].map_or(1.0, |o| emit[x][o]);
    let mut fwd = vec![[0.0f64; 2]; n];
    for t in 0..n {
        for x in 0..2 {
            let base = if t == 0 {
                0.5
            } else {
                (0..2).map(|p| fwd[t - 1][p] * trans[p][x]).sum::<f64>()
            };
            fwd[t][x] = base * lik(t, x);
        }
        let z: f64 = fwd[t].iter().sum();
        fwd[t] = [fwd[t][0] / z, fwd[t][1] / z];
    }
    let mut bwd = vec![[1.0f64; 2]; n];
    for t in (0..n.saturating_sub(1)).rev() {
        for x in 0..2 {
            bwd[t][x] = (0..2)
                .map(|nx| trans[x][nx] * lik(t + 1, nx) * bwd[t + 1][nx])
                .sum::<f64>();
        }
        let z: f64 = bwd[t].iter().sum();
        bwd[t] = [bwd[t][0] / z, bwd[t][1] / z];
    }
    (0..n)
        .map(|t| {
            let p = [fwd[t][0] * bwd[t][0], fwd[t][1] * bwd[t][1]];
            let z = p[0] + p[1];
            [p[0] / z, p[1] / z]
        })
        .collect()
}

/// All maximal cliques of an undirected graph by subset enumeration:
/// exponential, test-only ground truth.
pub fn brute_force_maximal_cliques(
    vertices: &[SliceVar],
    has_edge: impl Fn(SliceVar, SliceVar) -> bool,
) -> Vec<BTreeSet<SliceVar>> {
    let n = vertices.len();
    assert!(n <= 16, "oracle is exponential");
    let complete = |mask: u32| -> bool {
        for i in 0..n {
            if mask & (1 << i) == 0 {
                continue;
            }
            for j in i + 1..n {
                if mask & (1 << j) == 0 {
                    continue;
                }
                if !has_edge(vertices[i], vertices[j]) {
                    return false;
                }
            }
        }
        true
    };
    let mut cliques: Vec<u32> = Vec::new();
    for mask in 1u32..(1 << n) {
        if complete(mask) {
            cliques.push(mask);
        }
    }
    let maximal: Vec<u32> = cliques
        .iter()
        .copied()
        .filter(|&m| !cliques.iter().any(|&c| c != m && (c & m) == m))
        .collect();
    maximal
        .into_iter()
        .map(|m| {
            (0..n)
                .filter(|&i| m & (1 << i) != 0)
                .map(|i| vertices[i])
                .collect()
        })
        .collect()
}

/// Drives a series over a per-slice observation stream with width `w`,
/// entering evidence slice by slice and advancing as needed.
pub fn drive_series(
    model: &DpnModel,
    width: u32,
    evidence: &[Evidence],
    t_last: u32,
) -> dpn_core::window::ModelSeries {
    let mut series = dpn_core::window::ModelSeries::init(model.clone(), width).expect("init");
    let mut by_slice: BTreeMap<u32, Vec<&Evidence>> = BTreeMap::new();
    for e in evidence {
        by_slice.entry(e.t).or_default().push(e);
    }
    for t in 0..=t_last {
        if t > series.window().t_high() {
            series.advance(1).expect("advance");
        }
        for e in by_slice.get(&t).into_iter().flatten() {
            series.enter_evidence(e).expect("evidence");
        }
        series.propagate().expect("propagate");
        // Interface completeness and junction validity after every window
        // rebuild (expansion containment is asserted inside expand itself).
        series.window().verify_structure().expect("window structure");
    }
    series
}

/// Builds, attaches, and returns an uncalibrated junction tree for a static
/// network via the moralize/triangulate/build path.
pub fn jtree_from_network(net: &StaticNetwork) -> dpn_core::jtree::JunctionTree {
    use dpn_core::graph::{moralize, triangulate_constrained, DirectedGraph, Heuristic};
    use dpn_core::jtree::JunctionTree;
    use dpn_core::potential::PotentialTable;

    let mut dag = DirectedGraph::new();
    for &v in &net.vars {
        dag.add_vertex(v);
    }
    for (&c, ps) in &net.parents {
        dag.set_parents(c, ps.clone());
    }
    let moral = moralize(&dag).expect("acyclic");
    let blocks = vec![net.vars.iter().copied().collect()];
    let tri = triangulate_constrained(&moral, &blocks, &Heuristic::MinWeight, &net.cards)
        .expect("triangulation");
    let mut tree = JunctionTree::build(tri.cliques, &net.cards).expect("junction tree");
    for (&child, parents) in &net.parents {
        let mut domain: Vec<(SliceVar, usize)> =
            parents.iter().map(|&p| (p, net.cards[&p])).collect();
        domain.push((child, net.cards[&child]));
        tree.attach(&PotentialTable::new(domain, net.cpts[&child].clone()))
            .expect("attach");
    }
    tree
}
