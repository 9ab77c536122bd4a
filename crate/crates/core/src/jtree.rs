//! Junction trees: construction from a clique set, potential attachment,
//! collect/distribute propagation, calibration checks, evidence entry, and
//! marginal queries.
//!
//! Construction follows the standard maximum-weight spanning tree over the
//! clique-intersection graph, with weights `|C ∩ D|` and deterministic
//! tie-breaks (larger intersection state space, then lexicographic clique
//! ids). Disconnected clique sets are joined into a single tree with empty
//! sepsets, which behave as neutral elements under propagation.
//!
//! Propagation normalizes the tree: after a successful pass every clique
//! holds the normalized posterior over its variables and the returned
//! normalization constant is the probability of the evidence entered since
//! the previous pass.

use std::collections::{BTreeMap, BTreeSet};

use crate::graph::UnionFind;
use crate::model::{Evidence, Finding, SliceVar};
use crate::potential::{PotentialError, PotentialTable};

/// Absolute tolerance on normalized sepset marginals for calibration checks.
pub const CALIBRATION_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TreeError {
    #[error("clique set admits no junction tree (input graph not triangulated)")]
    NotAJunctionTree,
    #[error("no clique contains the variable set {0:?}")]
    NoContainingClique(Vec<SliceVar>),
    #[error("variable {0} is not covered by any clique")]
    VariableAbsent(SliceVar),
    #[error("tree is not calibrated; propagate before querying")]
    NotCalibrated,
    #[error("evidence has zero probability (contradicts the model)")]
    ZeroMass,
    #[error("subtree restriction is not connected in the tree")]
    SubtreeNotConnected,
    #[error("joint marginal over {vars:?} needs {cells} table cells (cap {cap})")]
    JointTooLarge { vars: Vec<SliceVar>, cells: usize, cap: usize },
    #[error(transparent)]
    Potential(#[from] PotentialError),
}

/// A clique node: its vertex set and attached potential.
#[derive(Debug, Clone, PartialEq)]
pub struct Clique {
    pub members: BTreeSet<SliceVar>,
    pub potential: PotentialTable,
}

/// A sepset edge between two cliques.
#[derive(Debug, Clone, PartialEq)]
pub struct Sepset {
    pub cliques: (usize, usize),
    pub members: BTreeSet<SliceVar>,
    pub potential: PotentialTable,
}

/// Result of one propagation pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagationResult {
    /// Probability mass of the evidence entered since the last pass.
    pub normalization: f64,
    pub calibrated: bool,
}

/// Junction tree with creation-ordered cliques.
#[derive(Debug, Clone, PartialEq)]
pub struct JunctionTree {
    cliques: Vec<Clique>,
    sepsets: Vec<Sepset>,
    /// adjacency\[i\] = (neighbor clique, sepset index) pairs.
    adj: Vec<Vec<(usize, usize)>>,
    cards: BTreeMap<SliceVar, usize>,
    calibrated: bool,
    /// Findings entered since the last propagation.
    journal: Vec<Evidence>,
}

fn domain_of(members: &BTreeSet<SliceVar>, cards: &BTreeMap<SliceVar, usize>) -> Vec<(SliceVar, usize)> {
    members.iter().map(|&v| (v, cards[&v])).collect()
}

impl JunctionTree {
    /// Builds a tree over `cliques` (in creation order) with all potentials
    /// initialized to unity.
    pub fn build(
        cliques: Vec<BTreeSet<SliceVar>>,
        cards: &BTreeMap<SliceVar, usize>,
    ) -> Result<JunctionTree, TreeError> {
        let n = cliques.len();
        let mut candidates: Vec<(usize, u128, usize, usize)> = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let inter: BTreeSet<SliceVar> =
                    cliques[i].intersection(&cliques[j]).copied().collect();
                if inter.is_empty() {
                    continue;
                }
                let space: u128 = inter.iter().map(|v| cards[v] as u128).product();
                candidates.push((inter.len(), space, i, j));
            }
        }
        // Maximum weight first; ties by larger intersection state space,
        // then lexicographic clique ids.
        candidates.sort_by(|a, b| {
            b.0.cmp(&a.0)
                .then(b.1.cmp(&a.1))
                .then(a.2.cmp(&b.2))
                .then(a.3.cmp(&b.3))
        });

        let mut dsu = UnionFind::new(n.max(1));
        let mut edges: Vec<(usize, usize)> = Vec::new();
        for &(_, _, i, j) in &candidates {
            if dsu.union(i, j) {
                edges.push((i, j));
            }
        }
        // Join remaining components with empty sepsets, lowest ids first.
        let mut reps: Vec<usize> = Vec::new();
        for i in 0..n {
            let r = dsu.find(i);
            if !reps.contains(&r) {
                reps.push(r);
            }
        }
        for pair in reps.windows(2) {
            if dsu.union(pair[0], pair[1]) {
                edges.push((pair[0].min(pair[1]), pair[0].max(pair[1])));
            }
        }

        let clique_nodes: Vec<Clique> = cliques
            .into_iter()
            .map(|members| {
                let potential = PotentialTable::unity(domain_of(&members, cards));
                Clique { members, potential }
            })
            .collect();
        let mut tree = JunctionTree {
            adj: vec![Vec::new(); clique_nodes.len()],
            sepsets: Vec::new(),
            cards: clique_nodes
                .iter()
                .flat_map(|c| c.members.iter().map(|&v| (v, cards[&v])))
                .collect(),
            cliques: clique_nodes,
            calibrated: false,
            journal: Vec::new(),
        };
        for (i, j) in edges {
            tree.add_sepset_edge(i, j);
        }
        if !tree.junction_property_holds() {
            return Err(TreeError::NotAJunctionTree);
        }
        Ok(tree)
    }

    /// Internal constructor used by tree surgery: takes fully-formed parts.
    /// The caller is responsible for validity; `verify_structure` checks it.
    pub(crate) fn from_parts(
        cliques: Vec<Clique>,
        sepsets: Vec<Sepset>,
        cards: BTreeMap<SliceVar, usize>,
        calibrated: bool,
    ) -> JunctionTree {
        let mut adj = vec![Vec::new(); cliques.len()];
        for (k, s) in sepsets.iter().enumerate() {
            adj[s.cliques.0].push((s.cliques.1, k));
            adj[s.cliques.1].push((s.cliques.0, k));
        }
        JunctionTree { cliques, sepsets, adj, cards, calibrated, journal: Vec::new() }
    }

    fn add_sepset_edge(&mut self, i: usize, j: usize) {
        let members: BTreeSet<SliceVar> = self.cliques[i]
            .members
            .intersection(&self.cliques[j].members)
            .copied()
            .collect();
        let potential = PotentialTable::unity(domain_of(&members, &self.cards));
        let k = self.sepsets.len();
        self.sepsets.push(Sepset { cliques: (i, j), members, potential });
        self.adj[i].push((j, k));
        self.adj[j].push((i, k));
    }

    pub fn clique_count(&self) -> usize {
        self.cliques.len()
    }

    pub fn cliques(&self) -> &[Clique] {
        &self.cliques
    }

    pub fn sepsets(&self) -> &[Sepset] {
        &self.sepsets
    }

    pub fn cards(&self) -> &BTreeMap<SliceVar, usize> {
        &self.cards
    }

    pub fn is_calibrated(&self) -> bool {
        self.calibrated
    }

    pub(crate) fn set_calibrated(&mut self, value: bool) {
        self.calibrated = value;
    }

    pub fn journal(&self) -> &[Evidence] {
        &self.journal
    }

    /// Neighbor cliques of clique `i` as `(clique, sepset)` index pairs.
    pub fn neighbors_of(&self, i: usize) -> &[(usize, usize)] {
        &self.adj[i]
    }

    /// Overwrites the listed clique and sepset potentials in place. Used by
    /// tree surgery when transplanting tables between trees.
    pub(crate) fn install_potentials(
        &mut self,
        cliques: Vec<(usize, PotentialTable)>,
        sepsets: Vec<(usize, PotentialTable)>,
    ) {
        for (i, t) in cliques {
            self.cliques[i].potential = t;
        }
        for (k, t) in sepsets {
            self.sepsets[k].potential = t;
        }
    }

    /// Multiplies `table` into a specific clique. The smoothing update
    /// targets the interface clique directly rather than searching by
    /// containment.
    pub(crate) fn scale_clique(
        &mut self,
        idx: usize,
        table: &PotentialTable,
    ) -> Result<(), TreeError> {
        self.cliques[idx].potential = self.cliques[idx].potential.multiply(table)?;
        self.calibrated = false;
        Ok(())
    }

    /// Divides `table` out of the earliest clique containing its domain.
    /// The counterpart of [`JunctionTree::attach`] for folding redundant
    /// sepset tables so the represented joint stays unchanged.
    pub(crate) fn fold_divide(&mut self, table: &PotentialTable) -> Result<usize, TreeError> {
        let vars: BTreeSet<SliceVar> = table.domain_vars().collect();
        let host = self
            .find_containing(&vars)
            .ok_or_else(|| TreeError::NoContainingClique(vars.iter().copied().collect()))?;
        self.cliques[host].potential = self.cliques[host].potential.divide(table)?;
        self.calibrated = false;
        Ok(host)
    }

    pub(crate) fn journal_mut(&mut self) -> &mut Vec<Evidence> {
        &mut self.journal
    }

    pub fn vertices(&self) -> BTreeSet<SliceVar> {
        self.cliques.iter().flat_map(|c| c.members.iter().copied()).collect()
    }

    /// Earliest-created clique containing all of `vars`.
    pub fn find_containing(&self, vars: &BTreeSet<SliceVar>) -> Option<usize> {
        self.cliques.iter().position(|c| vars.is_subset(&c.members))
    }

    /// Smallest clique containing `vars`, ties broken by creation order.
    pub fn find_smallest_containing(&self, vars: &BTreeSet<SliceVar>) -> Option<usize> {
        self.cliques
            .iter()
            .enumerate()
            .filter(|(_, c)| vars.is_subset(&c.members))
            .min_by_key(|(i, c)| (c.members.len(), *i))
            .map(|(i, _)| i)
    }

    /// Multiplies `table` into the earliest clique containing its domain.
    /// Returns the index of the hosting clique.
    pub fn attach(&mut self, table: &PotentialTable) -> Result<usize, TreeError> {
        let vars: BTreeSet<SliceVar> = table.domain_vars().collect();
        let host = self
            .find_containing(&vars)
            .ok_or_else(|| TreeError::NoContainingClique(vars.iter().copied().collect()))?;
        self.cliques[host].potential = self.cliques[host].potential.multiply(table)?;
        self.calibrated = false;
        Ok(host)
    }

    /// Enters an evidence finding on one unrolled variable. The finding is
    /// applied to the earliest clique containing the variable and recorded in
    /// the journal until the next propagation.
    pub fn enter_evidence(&mut self, ev: &Evidence) -> Result<(), TreeError> {
        let v = SliceVar::new(ev.t, ev.var);
        let vars = BTreeSet::from([v]);
        let host = self.find_containing(&vars).ok_or(TreeError::VariableAbsent(v))?;
        self.cliques[host].potential =
            self.cliques[host].potential.reduce_by_evidence(v, &ev.finding)?;
        self.journal.push(ev.clone());
        self.calibrated = false;
        Ok(())
    }

    /// Convenience for evidence given directly as a finding on a vertex.
    pub fn enter_finding(&mut self, v: SliceVar, finding: Finding) -> Result<(), TreeError> {
        self.enter_evidence(&Evidence { t: v.t, var: v.var, finding })
    }

    /// Depth-first edge schedule from `root`: `(child, parent, sepset)` in
    /// post-order for collect; reverse for distribute.
    fn edge_schedule(&self, root: usize) -> Vec<(usize, usize, usize)> {
        let mut order = Vec::new();
        let mut visited = vec![false; self.cliques.len()];
        // Iterative post-order over the tree.
        let mut stack = vec![(root, usize::MAX, usize::MAX, false)];
        while let Some((node, parent, sep, expanded)) = stack.pop() {
            if expanded {
                if parent != usize::MAX {
                    order.push((node, parent, sep));
                }
                continue;
            }
            if visited[node] {
                continue;
            }
            visited[node] = true;
            stack.push((node, parent, sep, true));
            for &(nbr, k) in &self.adj[node] {
                if !visited[nbr] {
                    stack.push((nbr, node, k, false));
                }
            }
        }
        order
    }

    /// Passes a message over sepset `k` from clique `from` into clique `to`.
    fn absorb(&mut self, from: usize, to: usize, k: usize) -> Result<(), TreeError> {
        let new_sep = self.cliques[from].potential.marginalize(&self.sepsets[k].members)?;
        let ratio = new_sep.divide(&self.sepsets[k].potential)?;
        self.cliques[to].potential = self.cliques[to].potential.multiply(&ratio)?;
        self.sepsets[k].potential = new_sep;
        Ok(())
    }

    /// Full two-phase propagation from clique 0.
    pub fn propagate(&mut self) -> Result<PropagationResult, TreeError> {
        self.propagate_from(0)
    }

    /// Full two-phase propagation: collect to `root`, normalize, distribute.
    ///
    /// After success the tree is calibrated, every clique holds the
    /// normalized posterior over its members, and the returned normalization
    /// is the probability of the journal evidence given everything older.
    pub fn propagate_from(&mut self, root: usize) -> Result<PropagationResult, TreeError> {
        assert!(root < self.cliques.len(), "root out of range");
        let schedule = self.edge_schedule(root);
        for &(child, parent, k) in &schedule {
            self.absorb(child, parent, k)?;
        }
        let mass = self.cliques[root].potential.total_mass();
        let usable = mass.is_finite() && mass > 0.0;
        if !usable {
            return Err(TreeError::ZeroMass);
        }
        let (normalized, _) = self.cliques[root].potential.normalize()?;
        self.cliques[root].potential = normalized;
        for &(child, parent, k) in schedule.iter().rev() {
            self.absorb(parent, child, k)?;
        }
        self.calibrated = true;
        self.journal.clear();
        Ok(PropagationResult { normalization: mass, calibrated: true })
    }

    /// Propagation restricted to the subtree induced by `members`.
    ///
    /// Boundary sepsets first absorb inward from the (read-only) complement,
    /// then a collect/distribute pass runs inside the subtree. Valid when the
    /// complement is calibrated and carries no pending evidence; used after a
    /// model expansion, where only the new cliques need work.
    pub fn propagate_subtree(
        &mut self,
        members: &BTreeSet<usize>,
        root: usize,
    ) -> Result<PropagationResult, TreeError> {
        assert!(members.contains(&root), "root must belong to the subtree");
        // Absorb across the boundary into the subtree.
        let mut boundary: Vec<(usize, usize, usize)> = Vec::new();
        for &m in members {
            for &(nbr, k) in &self.adj[m] {
                if !members.contains(&nbr) {
                    boundary.push((nbr, m, k));
                }
            }
        }
        for (outside, inside, k) in boundary {
            self.absorb(outside, inside, k)?;
        }
        // Collect/distribute within the subtree only.
        let schedule: Vec<(usize, usize, usize)> = self
            .edge_schedule(root)
            .into_iter()
            .filter(|&(c, p, _)| members.contains(&c) && members.contains(&p))
            .collect();
        // The subtree must be connected: every member other than the root
        // shows up as a child exactly once.
        let mut reached: BTreeSet<usize> = schedule.iter().map(|&(c, _, _)| c).collect();
        reached.insert(root);
        if reached != *members {
            return Err(TreeError::SubtreeNotConnected);
        }
        for &(child, parent, k) in &schedule {
            self.absorb(child, parent, k)?;
        }
        let mass = self.cliques[root].potential.total_mass();
        let usable = mass.is_finite() && mass > 0.0;
        if !usable {
            return Err(TreeError::ZeroMass);
        }
        let (normalized, _) = self.cliques[root].potential.normalize()?;
        self.cliques[root].potential = normalized;
        for &(child, parent, k) in schedule.iter().rev() {
            self.absorb(parent, child, k)?;
        }
        self.calibrated = true;
        self.journal.clear();
        Ok(PropagationResult { normalization: mass, calibrated: true })
    }

    /// Normalized marginal over `vars`, which must lie inside one clique.
    pub fn query_marginal(&self, vars: &BTreeSet<SliceVar>) -> Result<PotentialTable, TreeError> {
        if !self.calibrated {
            return Err(TreeError::NotCalibrated);
        }
        let host = self
            .find_smallest_containing(vars)
            .ok_or_else(|| TreeError::NoContainingClique(vars.iter().copied().collect()))?;
        let m = self.cliques[host].potential.marginalize(vars)?;
        let (normalized, _) = m.normalize()?;
        Ok(normalized)
    }

    /// Normalized marginal of a single unrolled variable.
    pub fn query_var(&self, v: SliceVar) -> Result<PotentialTable, TreeError> {
        self.query_marginal(&BTreeSet::from([v]))
    }

    /// Normalized joint over an arbitrary covered set, computed from the
    /// product of the subtree spanning the covering cliques divided by its
    /// internal sepsets. Exponential in the subtree's union domain; `cap`
    /// bounds the intermediate table size.
    pub fn joint_marginal(
        &self,
        vars: &BTreeSet<SliceVar>,
        cap: usize,
    ) -> Result<PotentialTable, TreeError> {
        if !self.calibrated {
            return Err(TreeError::NotCalibrated);
        }
        if let Some(host) = self.find_smallest_containing(vars) {
            let m = self.cliques[host].potential.marginalize(vars)?;
            let (normalized, _) = m.normalize()?;
            return Ok(normalized);
        }
        for &v in vars {
            if !self.cards.contains_key(&v) {
                return Err(TreeError::VariableAbsent(v));
            }
        }
        // Cover each variable with its earliest clique, then span them.
        let mut cover: BTreeSet<usize> = BTreeSet::new();
        for &v in vars {
            let c = self
                .find_containing(&BTreeSet::from([v]))
                .ok_or(TreeError::VariableAbsent(v))?;
            cover.insert(c);
        }
        let subtree = self.spanning_subtree(&cover);
        let union: BTreeSet<SliceVar> = subtree
            .iter()
            .flat_map(|&i| self.cliques[i].members.iter().copied())
            .collect();
        let cells: usize = union.iter().map(|v| self.cards[v]).product();
        if cells > cap {
            return Err(TreeError::JointTooLarge {
                vars: vars.iter().copied().collect(),
                cells,
                cap,
            });
        }
        let mut product = PotentialTable::scalar(1.0);
        for &i in &subtree {
            product = product.multiply(&self.cliques[i].potential)?;
        }
        for (k, s) in self.sepsets.iter().enumerate() {
            let (a, b) = s.cliques;
            if subtree.contains(&a) && subtree.contains(&b) && self.on_subtree_path(k, &subtree) {
                product = product.divide(&s.potential)?;
            }
        }
        let m = product.marginalize(vars)?;
        let (normalized, _) = m.normalize()?;
        Ok(normalized)
    }

    /// Union of tree paths between all pairs of `cover` cliques.
    fn spanning_subtree(&self, cover: &BTreeSet<usize>) -> BTreeSet<usize> {
        let mut subtree = BTreeSet::new();
        let first = *cover.iter().next().expect("cover is non-empty");
        for &target in cover {
            for node in self.path_between(first, target) {
                subtree.insert(node);
            }
        }
        subtree
    }

    fn path_between(&self, a: usize, b: usize) -> Vec<usize> {
        // BFS parent pointers over the tree.
        let mut parent = vec![usize::MAX; self.cliques.len()];
        let mut seen = vec![false; self.cliques.len()];
        let mut queue = std::collections::VecDeque::from([a]);
        seen[a] = true;
        while let Some(x) = queue.pop_front() {
            if x == b {
                break;
            }
            for &(nbr, _) in &self.adj[x] {
                if !seen[nbr] {
                    seen[nbr] = true;
                    parent[nbr] = x;
                    queue.push_back(nbr);
                }
            }
        }
        let mut path = vec![b];
        let mut cur = b;
        while cur != a {
            cur = parent[cur];
            path.push(cur);
        }
        path
    }

    /// True iff sepset `k` lies on a path between two subtree cliques (it is
    /// an internal edge of the induced subtree rather than a stray edge).
    fn on_subtree_path(&self, k: usize, subtree: &BTreeSet<usize>) -> bool {
        let (a, b) = self.sepsets[k].cliques;
        subtree.contains(&a) && subtree.contains(&b)
    }

    /// Structural validity: connected, |sepsets| = |cliques| - 1, sepset
    /// members are endpoint intersections, and the junction property holds.
    pub fn verify_structure(&self) -> Result<(), TreeError> {
        if self.cliques.is_empty() {
            return Ok(());
        }
        if self.sepsets.len() + 1 != self.cliques.len() {
            return Err(TreeError::NotAJunctionTree);
        }
        let mut seen = vec![false; self.cliques.len()];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 0;
        while let Some(x) = stack.pop() {
            count += 1;
            for &(nbr, _) in &self.adj[x] {
                if !seen[nbr] {
                    seen[nbr] = true;
                    stack.push(nbr);
                }
            }
        }
        if count != self.cliques.len() {
            return Err(TreeError::NotAJunctionTree);
        }
        for s in &self.sepsets {
            let inter: BTreeSet<SliceVar> = self.cliques[s.cliques.0]
                .members
                .intersection(&self.cliques[s.cliques.1].members)
                .copied()
                .collect();
            if s.members != inter {
                return Err(TreeError::NotAJunctionTree);
            }
        }
        if !self.junction_property_holds() {
            return Err(TreeError::NotAJunctionTree);
        }
        Ok(())
    }

    /// Explicit path inspection: for every clique pair, their intersection is
    /// contained in every clique on the connecting path.
    pub fn junction_property_holds(&self) -> bool {
        let n = self.cliques.len();
        for i in 0..n {
            for j in i + 1..n {
                let inter: BTreeSet<SliceVar> = self.cliques[i]
                    .members
                    .intersection(&self.cliques[j].members)
                    .copied()
                    .collect();
                if inter.is_empty() {
                    continue;
                }
                for node in self.path_between(i, j) {
                    if !inter.is_subset(&self.cliques[node].members) {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// Largest absolute disagreement between normalized sepset marginals and
    /// their endpoint cliques. Zero-mass endpoints count as disagreement 1.
    pub fn max_calibration_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for s in &self.sepsets {
            let from_a = self.cliques[s.cliques.0].potential.marginalize(&s.members);
            let from_b = self.cliques[s.cliques.1].potential.marginalize(&s.members);
            let (Ok(a), Ok(b)) = (from_a, from_b) else {
                return 1.0;
            };
            let (Ok((a, _)), Ok((b, _))) = (a.normalize(), b.normalize()) else {
                return 1.0;
            };
            let a = a.canonical();
            let b = b.canonical();
            for (x, y) in a.values().iter().zip(b.values()) {
                worst = worst.max((x - y).abs());
            }
        }
        worst
    }
}

/// True iff both trees are calibrated and agree on the normalized marginal
/// of `shared` within [`CALIBRATION_TOL`]. `shared` must be covered by a
/// single clique in each tree.
pub fn is_jointly_calibrated(
    a: &JunctionTree,
    b: &JunctionTree,
    shared: &BTreeSet<SliceVar>,
) -> Result<bool, TreeError> {
    if !a.is_calibrated() || !b.is_calibrated() {
        return Ok(false);
    }
    let ma = a.query_marginal(shared)?.canonical();
    let mb = b.query_marginal(shared)?.canonical();
    Ok(ma.approx_eq(&mb, CALIBRATION_TOL))
}
