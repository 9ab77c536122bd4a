//! Graph machinery behind the inference engine: moralization, vertex
//! elimination, constrained triangulation with ordering heuristics, and
//! maximal-clique extraction in elimination order.
//!
//! Vertices are [`SliceVar`]s; their canonical order (older slice first)
//! doubles as the tie-break of last resort so every operation here is
//! deterministic.

use std::collections::{BTreeMap, BTreeSet};

use crate::model::SliceVar;

/// An unordered vertex pair, stored with the smaller endpoint first.
pub type Edge = (SliceVar, SliceVar);

fn edge(a: SliceVar, b: SliceVar) -> Edge {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GraphError {
    #[error("vertex {0} is not in the graph")]
    VertexAbsent(SliceVar),
    #[error("directed input contains a cycle")]
    CycleDetected,
    #[error("blocks do not partition the vertex set")]
    BlocksNotPartition,
    #[error("elimination order is not a bijection over the vertex set")]
    OrderNotBijective,
    #[error("elimination order does not respect the block constraints")]
    OrderViolatesBlocks,
    #[error("order is not perfect: eliminating {vertex} adds fill edges")]
    OrderNotPerfect { vertex: SliceVar },
}

/// Simple undirected graph with sorted adjacency sets.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UGraph {
    adj: BTreeMap<SliceVar, BTreeSet<SliceVar>>,
}

impl UGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_vertex(&mut self, v: SliceVar) {
        self.adj.entry(v).or_default();
    }

    /// Adds an undirected edge, creating missing endpoints. Self-loops are a
    /// programming error.
    pub fn add_edge(&mut self, a: SliceVar, b: SliceVar) {
        assert_ne!(a, b, "self-loop on {a}");
        self.adj.entry(a).or_default().insert(b);
        self.adj.entry(b).or_default().insert(a);
    }

    pub fn remove_vertex(&mut self, v: SliceVar) {
        if let Some(nbrs) = self.adj.remove(&v) {
            for n in nbrs {
                self.adj.get_mut(&n).unwrap().remove(&v);
            }
        }
    }

    pub fn contains_vertex(&self, v: SliceVar) -> bool {
        self.adj.contains_key(&v)
    }

    pub fn has_edge(&self, a: SliceVar, b: SliceVar) -> bool {
        self.adj.get(&a).is_some_and(|s| s.contains(&b))
    }

    pub fn vertices(&self) -> impl Iterator<Item = SliceVar> + '_ {
        self.adj.keys().copied()
    }

    pub fn vertex_count(&self) -> usize {
        self.adj.len()
    }

    pub fn neighbors(&self, v: SliceVar) -> Option<&BTreeSet<SliceVar>> {
        self.adj.get(&v)
    }

    pub fn edges(&self) -> BTreeSet<Edge> {
        let mut out = BTreeSet::new();
        for (&v, nbrs) in &self.adj {
            for &n in nbrs {
                out.insert(edge(v, n));
            }
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        self.edges().len()
    }

    /// Union of vertices and edges with another graph.
    pub fn merge(&mut self, other: &UGraph) {
        for (&v, nbrs) in &other.adj {
            self.adj.entry(v).or_default().extend(nbrs.iter().copied());
        }
    }

    /// Subgraph induced by `keep`.
    pub fn induced(&self, keep: &BTreeSet<SliceVar>) -> UGraph {
        let mut g = UGraph::new();
        for (&v, nbrs) in &self.adj {
            if !keep.contains(&v) {
                continue;
            }
            g.add_vertex(v);
            for &n in nbrs {
                if keep.contains(&n) && n > v {
                    g.add_edge(v, n);
                }
            }
        }
        g
    }

    /// True iff every pair of vertices in `set` is adjacent. The empty set
    /// and singletons are complete vacuously.
    pub fn is_complete(&self, set: &BTreeSet<SliceVar>) -> bool {
        let vs: Vec<SliceVar> = set.iter().copied().collect();
        for (i, &a) in vs.iter().enumerate() {
            for &b in &vs[i + 1..] {
                if !self.has_edge(a, b) {
                    return false;
                }
            }
        }
        true
    }

    /// Eliminates `v` in place: completes its neighborhood, then removes `v`.
    /// Returns the fill edges that were added.
    pub fn eliminate_in_place(&mut self, v: SliceVar) -> Result<Vec<Edge>, GraphError> {
        let nbrs: Vec<SliceVar> = self
            .adj
            .get(&v)
            .ok_or(GraphError::VertexAbsent(v))?
            .iter()
            .copied()
            .collect();
        let mut fills = Vec::new();
        for (i, &a) in nbrs.iter().enumerate() {
            for &b in &nbrs[i + 1..] {
                if !self.has_edge(a, b) {
                    self.add_edge(a, b);
                    fills.push(edge(a, b));
                }
            }
        }
        self.remove_vertex(v);
        Ok(fills)
    }

    /// Pure elimination: returns the reduced graph and the fill edges.
    pub fn eliminate(&self, v: SliceVar) -> Result<(UGraph, Vec<Edge>), GraphError> {
        let mut g = self.clone();
        let fills = g.eliminate_in_place(v)?;
        Ok((g, fills))
    }

    /// Number of fill edges eliminating `v` would add right now.
    fn fill_count(&self, v: SliceVar) -> usize {
        let nbrs: Vec<SliceVar> = match self.adj.get(&v) {
            Some(s) => s.iter().copied().collect(),
            None => return 0,
        };
        let mut missing = 0;
        for (i, &a) in nbrs.iter().enumerate() {
            for &b in &nbrs[i + 1..] {
                if !self.has_edge(a, b) {
                    missing += 1;
                }
            }
        }
        missing
    }

    pub fn connected_components(&self) -> Vec<BTreeSet<SliceVar>> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for &start in self.adj.keys() {
            if seen.contains(&start) {
                continue;
            }
            let mut comp = BTreeSet::new();
            let mut stack = vec![start];
            while let Some(v) = stack.pop() {
                if !comp.insert(v) {
                    continue;
                }
                for &n in &self.adj[&v] {
                    if !comp.contains(&n) {
                        stack.push(n);
                    }
                }
            }
            seen.extend(comp.iter().copied());
            out.push(comp);
        }
        out
    }
}

/// Directed graph with explicit parent lists, the input shape for
/// moralization.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DirectedGraph {
    pub vertices: BTreeSet<SliceVar>,
    pub parents: BTreeMap<SliceVar, Vec<SliceVar>>,
}

impl DirectedGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_vertex(&mut self, v: SliceVar) {
        self.vertices.insert(v);
    }

    pub fn set_parents(&mut self, v: SliceVar, ps: Vec<SliceVar>) {
        self.vertices.insert(v);
        for &p in &ps {
            self.vertices.insert(p);
        }
        self.parents.insert(v, ps);
    }

    pub fn is_acyclic(&self) -> bool {
        let mut indeg: BTreeMap<SliceVar, usize> =
            self.vertices.iter().map(|&v| (v, 0)).collect();
        let mut children: BTreeMap<SliceVar, Vec<SliceVar>> = BTreeMap::new();
        for (&c, ps) in &self.parents {
            for &p in ps {
                children.entry(p).or_default().push(c);
                *indeg.get_mut(&c).unwrap() += 1;
            }
        }
        let mut queue: Vec<SliceVar> =
            indeg.iter().filter_map(|(&v, &d)| (d == 0).then_some(v)).collect();
        let mut removed = 0;
        while let Some(v) = queue.pop() {
            removed += 1;
            if let Some(cs) = children.get(&v) {
                for &c in cs.clone().iter() {
                    let d = indeg.get_mut(&c).unwrap();
                    *d -= 1;
                    if *d == 0 {
                        queue.push(c);
                    }
                }
            }
        }
        removed == self.vertices.len()
    }
}

/// Moral graph of a DAG: parents of a common child are married and all edge
/// directions dropped.
pub fn moralize(dag: &DirectedGraph) -> Result<UGraph, GraphError> {
    if !dag.is_acyclic() {
        return Err(GraphError::CycleDetected);
    }
    let mut g = UGraph::new();
    for &v in &dag.vertices {
        g.add_vertex(v);
    }
    for (&child, ps) in &dag.parents {
        for &p in ps {
            g.add_edge(p, child);
        }
        for (i, &a) in ps.iter().enumerate() {
            for &b in &ps[i + 1..] {
                if a != b {
                    g.add_edge(a, b);
                }
            }
        }
    }
    Ok(g)
}

/// A total elimination order over a vertex set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EliminationOrder {
    seq: Vec<SliceVar>,
    rank: BTreeMap<SliceVar, usize>,
}

impl EliminationOrder {
    pub fn new(seq: Vec<SliceVar>) -> Result<Self, GraphError> {
        let rank: BTreeMap<SliceVar, usize> =
            seq.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        if rank.len() != seq.len() {
            return Err(GraphError::OrderNotBijective);
        }
        Ok(EliminationOrder { seq, rank })
    }

    pub fn sequence(&self) -> &[SliceVar] {
        &self.seq
    }

    pub fn rank(&self, v: SliceVar) -> Option<usize> {
        self.rank.get(&v).copied()
    }

    pub fn len(&self) -> usize {
        self.seq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seq.is_empty()
    }

    /// True iff vertices of earlier blocks are all ranked before vertices of
    /// later blocks.
    pub fn respects_blocks(&self, blocks: &[BTreeSet<SliceVar>]) -> bool {
        let mut max_prev = None;
        for block in blocks {
            let mut lo = usize::MAX;
            let mut hi = 0usize;
            for &v in block {
                match self.rank(v) {
                    Some(r) => {
                        lo = lo.min(r);
                        hi = hi.max(r);
                    }
                    None => return false,
                }
            }
            if block.is_empty() {
                continue;
            }
            if let Some(p) = max_prev {
                if lo <= p {
                    return false;
                }
            }
            max_prev = Some(hi);
        }
        true
    }

    /// Restriction of the order to `keep`, preserving relative ranks.
    pub fn restricted(&self, keep: &BTreeSet<SliceVar>) -> EliminationOrder {
        let seq: Vec<SliceVar> = self.seq.iter().copied().filter(|v| keep.contains(v)).collect();
        EliminationOrder::new(seq).expect("restriction preserves bijectivity")
    }
}

/// Ordering strategy for triangulation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Heuristic {
    /// Fewest fill edges; ties by smallest clique weight, then vertex id.
    MinFill,
    /// Smallest clique state space; ties by fewest fills, then vertex id.
    MinWeight,
    /// Use exactly the supplied order.
    GivenOrder(EliminationOrder),
}

/// Result of a (possibly constrained) triangulation.
#[derive(Debug, Clone, PartialEq)]
pub struct Triangulation {
    pub fill_edges: BTreeSet<Edge>,
    pub order: EliminationOrder,
    /// Maximal cliques of the filled graph, in order of creation during the
    /// elimination.
    pub cliques: Vec<BTreeSet<SliceVar>>,
}

/// Disjoint-set forest used by spanning-tree construction and surgery.
#[derive(Debug, Clone)]
pub(crate) struct UnionFind(Vec<usize>);

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        UnionFind((0..n).collect())
    }

    pub(crate) fn find(&mut self, x: usize) -> usize {
        if self.0[x] != x {
            let root = self.find(self.0[x]);
            self.0[x] = root;
        }
        self.0[x]
    }

    /// Merges the sets of `a` and `b`; false when already joined.
    pub(crate) fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.0[ra] = rb;
        true
    }
}

/// One block of an elimination schedule: either an exact vertex sequence or
/// a set the heuristic may order freely.
#[derive(Debug, Clone)]
pub(crate) enum ScheduleBlock {
    Fixed(Vec<SliceVar>),
    Greedy(BTreeSet<SliceVar>),
}

/// Picks the next vertex to eliminate from `remaining` under `heuristic`.
fn greedy_pick(
    work: &UGraph,
    remaining: &BTreeSet<SliceVar>,
    heuristic: &Heuristic,
    weights: &BTreeMap<SliceVar, usize>,
) -> SliceVar {
    let w = |v: SliceVar| *weights.get(&v).unwrap_or(&2) as f64;
    let mut best: Option<(f64, f64, SliceVar)> = None;
    for &v in remaining {
        let fill = work.fill_count(v) as f64;
        let weight: f64 = w(v)
            * work
                .neighbors(v)
                .map(|ns| ns.iter().map(|&n| w(n)).product::<f64>())
                .unwrap_or(1.0);
        let key = match heuristic {
            Heuristic::MinFill => (fill, weight, v),
            Heuristic::MinWeight => (weight, fill, v),
            Heuristic::GivenOrder(_) => unreachable!("given orders take the fixed path"),
        };
        let better = match &best {
            None => true,
            Some(b) => (key.0, key.1, key.2) < (b.0, b.1, b.2),
        };
        if better {
            best = Some(key);
        }
    }
    best.expect("remaining is non-empty").2
}

/// Runs the elimination against `g` block by block and returns the fills,
/// the realized order, and the creation-ordered maximal cliques of the
/// filled graph. The schedule must cover every vertex exactly once.
pub(crate) fn eliminate_schedule(
    g: &UGraph,
    schedule: &[ScheduleBlock],
    heuristic: &Heuristic,
    weights: &BTreeMap<SliceVar, usize>,
) -> Result<Triangulation, GraphError> {
    let all: BTreeSet<SliceVar> = g.vertices().collect();
    let mut covered = BTreeSet::new();
    for block in schedule {
        let vs: Vec<SliceVar> = match block {
            ScheduleBlock::Fixed(seq) => seq.clone(),
            ScheduleBlock::Greedy(set) => set.iter().copied().collect(),
        };
        for v in vs {
            if !covered.insert(v) {
                return Err(GraphError::BlocksNotPartition);
            }
        }
    }
    if covered != all {
        return Err(GraphError::BlocksNotPartition);
    }

    let mut work = g.clone();
    let mut seq = Vec::with_capacity(all.len());
    let mut fills = BTreeSet::new();
    for block in schedule {
        match block {
            ScheduleBlock::Fixed(vs) => {
                for &v in vs {
                    for e in work.eliminate_in_place(v)? {
                        fills.insert(e);
                    }
                    seq.push(v);
                }
            }
            ScheduleBlock::Greedy(set) => {
                let mut remaining = set.clone();
                while !remaining.is_empty() {
                    let v = greedy_pick(&work, &remaining, heuristic, weights);
                    remaining.remove(&v);
                    for e in work.eliminate_in_place(v)? {
                        fills.insert(e);
                    }
                    seq.push(v);
                }
            }
        }
    }

    let order = EliminationOrder::new(seq)?;
    let mut filled = g.clone();
    for &(a, b) in &fills {
        filled.add_edge(a, b);
    }
    let cliques = cliques_by_elimination(&filled, &order)?;
    Ok(Triangulation { fill_edges: fills, order, cliques })
}

/// Triangulates `g` with an elimination order that eliminates every vertex
/// of a block before any vertex of a later block.
///
/// `weights` gives per-vertex state-space sizes for the min-weight rule;
/// vertices missing from the map count as weight 2.
pub fn triangulate_constrained(
    g: &UGraph,
    blocks: &[BTreeSet<SliceVar>],
    heuristic: &Heuristic,
    weights: &BTreeMap<SliceVar, usize>,
) -> Result<Triangulation, GraphError> {
    let schedule: Vec<ScheduleBlock> = match heuristic {
        Heuristic::GivenOrder(order) => {
            let all: BTreeSet<SliceVar> = g.vertices().collect();
            if order.len() != all.len() || all.iter().any(|&v| order.rank(v).is_none()) {
                return Err(GraphError::OrderNotBijective);
            }
            if !order.respects_blocks(blocks) {
                return Err(GraphError::OrderViolatesBlocks);
            }
            vec![ScheduleBlock::Fixed(order.sequence().to_vec())]
        }
        _ => blocks.iter().map(|b| ScheduleBlock::Greedy(b.clone())).collect(),
    };
    // A given order must still cover the same partition the blocks describe.
    if matches!(heuristic, Heuristic::GivenOrder(_)) {
        let mut covered = BTreeSet::new();
        for b in blocks {
            for &v in b {
                if !covered.insert(v) {
                    return Err(GraphError::BlocksNotPartition);
                }
            }
        }
        let all: BTreeSet<SliceVar> = g.vertices().collect();
        if covered != all {
            return Err(GraphError::BlocksNotPartition);
        }
    }
    eliminate_schedule(g, &schedule, heuristic, weights)
}

/// Path characterization of fill edges: `{a, b}` is an edge of the filled
/// graph `(V, E ∪ T(g_order))` iff the original graph has a path from `a`
/// to `b` whose interior vertices are all ranked below both endpoints.
pub fn fill_characterization_check(
    g: &UGraph,
    order: &EliminationOrder,
    a: SliceVar,
    b: SliceVar,
) -> bool {
    if a == b || !g.contains_vertex(a) || !g.contains_vertex(b) {
        return false;
    }
    let (ra, rb) = match (order.rank(a), order.rank(b)) {
        (Some(x), Some(y)) => (x, y),
        _ => return false,
    };
    let bound = ra.min(rb);
    // BFS from a to b through vertices ranked below `bound`.
    let mut seen = BTreeSet::new();
    let mut stack = vec![a];
    while let Some(v) = stack.pop() {
        for &n in g.neighbors(v).into_iter().flatten() {
            if n == b {
                return true;
            }
            if order.rank(n).is_some_and(|r| r < bound) && seen.insert(n) {
                stack.push(n);
            }
        }
    }
    false
}

/// Maximal cliques of a triangulated graph, in elimination-creation order.
///
/// Errors if `order` is not perfect for `g` (eliminating in `order` must add
/// no fill edges).
pub fn maximal_cliques(
    g: &UGraph,
    order: &EliminationOrder,
) -> Result<Vec<BTreeSet<SliceVar>>, GraphError> {
    cliques_by_elimination_strict(g, order, true)
}

/// As [`maximal_cliques`] but tolerating orders already known perfect for the
/// filled graph produced by `triangulate_constrained`.
fn cliques_by_elimination(
    g: &UGraph,
    order: &EliminationOrder,
) -> Result<Vec<BTreeSet<SliceVar>>, GraphError> {
    cliques_by_elimination_strict(g, order, true)
}

fn cliques_by_elimination_strict(
    g: &UGraph,
    order: &EliminationOrder,
    require_perfect: bool,
) -> Result<Vec<BTreeSet<SliceVar>>, GraphError> {
    let mut work = g.clone();
    let mut cliques: Vec<BTreeSet<SliceVar>> = Vec::new();
    for &v in order.sequence() {
        let mut candidate: BTreeSet<SliceVar> = work
            .neighbors(v)
            .ok_or(GraphError::VertexAbsent(v))?
            .iter()
            .copied()
            .collect();
        candidate.insert(v);
        let fills = work.eliminate_in_place(v)?;
        if require_perfect && !fills.is_empty() {
            return Err(GraphError::OrderNotPerfect { vertex: v });
        }
        // A candidate can only be contained in a clique created earlier.
        if !cliques.iter().any(|c| candidate.is_subset(c)) {
            cliques.push(candidate);
        }
    }
    Ok(cliques)
}
