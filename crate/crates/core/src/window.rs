//! The sliding-window engine: keeps the current model as a junction tree
//! over a contiguous range of time slices, grows it slice by slice (model
//! expansion), and cuts old slices off into archived models (model
//! reduction) without disturbing the surviving marginals.
//!
//! Reduction is tree surgery, not re-elimination: the constrained
//! triangulation keeps every slice-boundary interface complete, so cutting
//! at a boundary only requires re-wiring the cliques around the boundary
//! interface. Each archived model keeps its own calibrated junction tree
//! plus the interface sets shared with its neighbours in the series, which
//! is exactly what backward smoothing consumes.

use std::collections::{BTreeMap, BTreeSet};

use crate::graph::{
    eliminate_schedule, moralize, DirectedGraph, EliminationOrder, GraphError, Heuristic,
    ScheduleBlock, UGraph, UnionFind,
};
use crate::jtree::{Clique, JunctionTree, PropagationResult, Sepset, TreeError};
use crate::model::{Cpt, DpnModel, Evidence, ModelError, SliceSpec, SliceVar, VarId, Violation};
use crate::potential::{PotentialError, PotentialTable};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WindowError {
    #[error("model is invalid ({0} violations)")]
    ModelInvalid(usize),
    #[error("window width must be at least 1")]
    ZeroWidth,
    #[error("expansion slice count must be at least 1")]
    ExpandZero,
    #[error("override slice is invalid: {0:?}")]
    InvalidOverride(Vec<String>),
    #[error("expansion references {var} at slice {t}, which is not available")]
    MissingParent { t: u32, var: VarId },
    #[error("cannot reduce by {k}: window spans {width} slice(s), at least one must remain")]
    ReduceOutOfRange { k: u32, width: u32 },
    #[error("window is not calibrated; propagate before this operation")]
    NotCalibrated,
    #[error("evidence at slice {t} is behind the window (oldest slice {t_low}); \
             archived slices are read-only, query them through smoothing")]
    EvidenceBehindWindow { t: u32, t_low: u32 },
    #[error("evidence at slice {t} is beyond the window (newest slice {t_high}); \
             expand or advance the window first")]
    EvidenceBeyondWindow { t: u32, t_high: u32 },
    #[error("slice {t} is not covered by the series (latest slice {t_high})")]
    SliceOutOfRange { t: u32, t_high: u32 },
    #[error("variable is not part of slice {t}")]
    VariableNotInSlice { t: u32 },
    #[error("expansion needs {needed} table cells (cap {cap})")]
    ResourceCapExceeded { needed: usize, cap: usize },
    #[error("internal invariant broken during {op}: {detail}")]
    InternalInvariant { op: &'static str, detail: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Potential(#[from] PotentialError),
}

/// The current model: a junction tree over the window slices plus the graphs
/// and elimination order needed to grow and shrink it.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowState {
    pub(crate) tree: JunctionTree,
    pub(crate) t_low: u32,
    pub(crate) t_high: u32,
    /// Moral graph of the window slices (no fill edges); slice interfaces
    /// are read off this graph.
    pub(crate) moral: UGraph,
    /// Triangulated graph: moral edges, interface completions, and fills.
    pub(crate) filled: UGraph,
    pub(crate) order: EliminationOrder,
    /// Interface at the window's oldest boundary, once a reduction happened.
    pub(crate) incoming_interface: Option<BTreeSet<SliceVar>>,
}

/// A past model cut off from the window: its calibrated junction tree plus
/// the interface sets it shares with its neighbours in the series.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchivedModel {
    pub tree: JunctionTree,
    pub t_low: u32,
    /// Newest slice this model owns; the outgoing-interface variables of
    /// slice `t_high + 1` are also present in the tree.
    pub t_high: u32,
    pub outgoing_interface: BTreeSet<SliceVar>,
    pub incoming_interface: Option<BTreeSet<SliceVar>>,
    pub(crate) archived_at_epoch: u64,
}

impl ArchivedModel {
    /// Clique hosting the outgoing interface: smallest, ties by creation.
    pub fn outgoing_host(&self) -> Option<usize> {
        self.tree.find_smallest_containing(&self.outgoing_interface)
    }

    pub fn owns_slice(&self, t: u32) -> bool {
        (self.t_low..=self.t_high).contains(&t)
    }
}

/// Working copy of an archived model used by smoothing passes; the pristine
/// archived tree stays immutable.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct SmoothedCopy {
    pub(crate) tree: JunctionTree,
    pub(crate) informed_epoch: u64,
}

/// The whole series: archived past models plus the current window.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSeries {
    pub(crate) model: DpnModel,
    pub(crate) heuristic: Heuristic,
    pub(crate) window: WindowState,
    pub(crate) archived: Vec<ArchivedModel>,
    pub(crate) smoothed: Vec<Option<SmoothedCopy>>,
    /// Product of the normalization constants of every propagation that
    /// consumed evidence: the probability of all evidence entered so far.
    pub(crate) evidence_mass: f64,
    /// Bumped whenever propagation absorbs new evidence; smoothing copies
    /// record the epoch they were last informed of.
    pub(crate) epoch: u64,
}

/// Slice-`t` vertices adjacent to slice `t-1` in the moral graph: the
/// boundary interface that separates past from future.
pub fn moral_interface(moral: &UGraph, t: u32) -> BTreeSet<SliceVar> {
    if t == 0 {
        return BTreeSet::new();
    }
    moral
        .vertices()
        .filter(|v| v.t == t)
        .filter(|&v| {
            moral
                .neighbors(v)
                .is_some_and(|ns| ns.iter().any(|n| n.t + 1 == t))
        })
        .collect()
}

/// Per-slice blocks of a vertex set, oldest slice first.
fn slice_blocks(
    vertices: impl Iterator<Item = SliceVar>,
    t_low: u32,
    t_high: u32,
) -> Vec<BTreeSet<SliceVar>> {
    let mut blocks: Vec<BTreeSet<SliceVar>> =
        vec![BTreeSet::new(); (t_high - t_low + 1) as usize];
    for v in vertices {
        blocks[(v.t - t_low) as usize].insert(v);
    }
    blocks
}

/// CPT bound to its unrolled vertices: domain is the parents in declared
/// order followed by the child, matching the CPT's flat layout.
fn bind_cpt(model: &DpnModel, child: SliceVar, parents: &[SliceVar], cpt: &Cpt) -> PotentialTable {
    let mut domain: Vec<(SliceVar, usize)> =
        parents.iter().map(|&p| (p, model.cardinality(p.var))).collect();
    domain.push((child, model.cardinality(child.var)));
    PotentialTable::new(domain, cpt.table.clone())
}

/// Adds the moral edges of one family: child-parent links plus marriages
/// between all parent pairs.
fn add_family_edges(g: &mut UGraph, child: SliceVar, parents: &[SliceVar]) {
    g.add_vertex(child);
    for &p in parents {
        g.add_edge(p, child);
    }
    for (i, &a) in parents.iter().enumerate() {
        for &b in &parents[i + 1..] {
            if a != b {
                g.add_edge(a, b);
            }
        }
    }
}

/// Completes the boundary interface of every slice in `t_range`. Keeping the
/// interfaces complete even when the past region is disconnected is what
/// guarantees every boundary admits an interface clique for reduction and
/// smoothing.
fn complete_interfaces(g: &mut UGraph, moral: &UGraph, t_range: std::ops::RangeInclusive<u32>) {
    for t in t_range {
        let interface = moral_interface(moral, t);
        let vs: Vec<SliceVar> = interface.iter().copied().collect();
        for (i, &a) in vs.iter().enumerate() {
            for &b in &vs[i + 1..] {
                g.add_edge(a, b);
            }
        }
    }
}

fn sepset_between(cliques: &[Clique], a: usize, b: usize) -> Result<Sepset, PotentialError> {
    let members: BTreeSet<SliceVar> = cliques[a]
        .members
        .intersection(&cliques[b].members)
        .copied()
        .collect();
    let potential = cliques[a].potential.marginalize(&members)?;
    Ok(Sepset { cliques: (a, b), members, potential })
}

impl WindowState {
    pub fn t_low(&self) -> u32 {
        self.t_low
    }

    pub fn t_high(&self) -> u32 {
        self.t_high
    }

    pub fn width(&self) -> u32 {
        self.t_high - self.t_low + 1
    }

    pub fn tree(&self) -> &JunctionTree {
        &self.tree
    }

    pub fn moral_graph(&self) -> &UGraph {
        &self.moral
    }

    pub fn triangulated_graph(&self) -> &UGraph {
        &self.filled
    }

    pub fn incoming_interface(&self) -> Option<&BTreeSet<SliceVar>> {
        self.incoming_interface.as_ref()
    }

    /// Checks that every interior boundary interface induces a complete
    /// subgraph of the triangulated window graph.
    pub fn check_interface_completeness(&self) -> Result<(), WindowError> {
        for t in self.t_low + 1..=self.t_high {
            let interface = moral_interface(&self.moral, t);
            if !self.filled.is_complete(&interface) {
                return Err(WindowError::InternalInvariant {
                    op: "interface completeness",
                    detail: format!("interface of slice {t} is not complete"),
                });
            }
        }
        Ok(())
    }

    /// Structural checks: tree validity plus interface completeness.
    pub fn verify_structure(&self) -> Result<(), WindowError> {
        self.tree.verify_structure()?;
        self.check_interface_completeness()
    }

    fn build_initial(
        model: &DpnModel,
        width: u32,
        heuristic: &Heuristic,
    ) -> Result<WindowState, WindowError> {
        let t_high = width - 1;
        let dag = model.unroll(0, t_high)?;
        let mut directed = DirectedGraph::new();
        for &v in &dag.vertices {
            directed.add_vertex(v);
        }
        for (&child, parents) in &dag.parents {
            directed.set_parents(child, parents.clone());
        }
        let moral = moralize(&directed)?;

        let mut tri_input = moral.clone();
        complete_interfaces(&mut tri_input, &moral, 1..=t_high);

        let weights: BTreeMap<SliceVar, usize> = dag
            .vertices
            .iter()
            .map(|&v| (v, model.cardinality(v.var)))
            .collect();
        let blocks = slice_blocks(dag.vertices.iter().copied(), 0, t_high);
        let schedule: Vec<ScheduleBlock> =
            blocks.into_iter().map(ScheduleBlock::Greedy).collect();
        let tri = eliminate_schedule(&tri_input, &schedule, heuristic, &weights)?;

        let mut filled = tri_input;
        for &(a, b) in &tri.fill_edges {
            filled.add_edge(a, b);
        }

        let mut tree = JunctionTree::build(tri.cliques.clone(), &weights)?;
        for (&child, parents) in &dag.parents {
            let spec = model.slice_spec(child.t);
            let cpt = spec
                .cpts
                .iter()
                .find(|c| c.child == child.var)
                .expect("validated model has a CPT per variable");
            tree.attach(&bind_cpt(model, child, parents, cpt))?;
        }

        Ok(WindowState {
            tree,
            t_low: 0,
            t_high,
            moral,
            filled,
            order: tri.order,
            incoming_interface: None,
        })
    }

    /// Root clique for propagation: the host of the newest slice's interface
    /// when one exists, otherwise the most recently created clique.
    fn propagation_root(&self) -> usize {
        let newest = moral_interface(&self.moral, self.t_high);
        if !newest.is_empty() {
            if let Some(host) = self.tree.find_smallest_containing(&newest) {
                return host;
            }
        }
        self.tree.clique_count() - 1
    }

    pub(crate) fn propagate(&mut self) -> Result<PropagationResult, WindowError> {
        let root = self.propagation_root();
        Ok(self.tree.propagate_from(root)?)
    }

    /// Expands the window by `k` slices built from the transition template,
    /// or from `override_slice` when the new slices deviate from it.
    ///
    /// The hybrid graph (existing triangulated graph plus moralized new
    /// families) is re-triangulated with the old order as a fixed prefix.
    /// Surviving cliques and sepsets keep their tables, redundant old tables
    /// fold into containing new cliques (sepset tables by division, so the
    /// represented joint is unchanged), and the new-slice CPTs attach to new
    /// cliques. Calibration is deferred to the next propagation.
    pub(crate) fn expand_capped(
        &mut self,
        model: &DpnModel,
        k: u32,
        override_slice: Option<&SliceSpec>,
        heuristic: &Heuristic,
        cap: Option<usize>,
    ) -> Result<(), WindowError> {
        if k == 0 {
            return Err(WindowError::ExpandZero);
        }
        if let Some(spec) = override_slice {
            let report = model.validate_override_slice(spec);
            if !report.is_empty() {
                return Err(WindowError::InvalidOverride(
                    report.iter().map(|v| v.to_string()).collect(),
                ));
            }
        }

        let new_low = self.t_high + 1;
        let new_high = self.t_high + k;
        let spec = override_slice.unwrap_or(&model.transition.slice);

        // Bind the new families and extend the moral graph.
        let mut bindings: Vec<(SliceVar, Vec<SliceVar>, &Cpt)> = Vec::new();
        let mut new_moral = self.moral.clone();
        for t in new_low..=new_high {
            for &var in &spec.variables {
                new_moral.add_vertex(SliceVar::new(t, var));
            }
            for cpt in &spec.cpts {
                let child = SliceVar::new(t, cpt.child);
                let mut parents = Vec::with_capacity(cpt.parents.len());
                for p in &cpt.parents {
                    let pv = SliceVar::new(t - p.lag, p.var);
                    let available = if pv.t < new_low {
                        self.moral.contains_vertex(pv)
                    } else {
                        spec.variables.contains(&p.var)
                    };
                    if !available {
                        return Err(WindowError::MissingParent { t: pv.t, var: pv.var });
                    }
                    parents.push(pv);
                }
                add_family_edges(&mut new_moral, child, &parents);
                bindings.push((child, parents, cpt));
            }
        }

        // Hybrid: the window's triangulated graph plus the new moral
        // structure, new boundary interfaces completed.
        let mut tri_input = self.filled.clone();
        tri_input.merge(&new_moral);
        complete_interfaces(&mut tri_input, &new_moral, new_low..=new_high);

        let weights: BTreeMap<SliceVar, usize> = tri_input
            .vertices()
            .map(|v| (v, model.cardinality(v.var)))
            .collect();
        let mut schedule = vec![ScheduleBlock::Fixed(self.order.sequence().to_vec())];
        let new_vertices: Vec<SliceVar> =
            tri_input.vertices().filter(|v| v.t >= new_low).collect();
        for block in slice_blocks(new_vertices.into_iter(), new_low, new_high) {
            schedule.push(ScheduleBlock::Greedy(block));
        }
        let tri = eliminate_schedule(&tri_input, &schedule, heuristic, &weights)?;

        if let Some(cap) = cap {
            let needed: usize = tri
                .cliques
                .iter()
                .map(|c| c.iter().map(|v| weights[v]).product::<usize>())
                .sum();
            if needed > cap {
                return Err(WindowError::ResourceCapExceeded { needed, cap });
            }
        }

        let mut filled = tri_input;
        for &(a, b) in &tri.fill_edges {
            filled.add_edge(a, b);
        }

        // Every old clique must be contained in some new clique.
        for old in self.tree.cliques() {
            if !tri.cliques.iter().any(|c| old.members.is_subset(c)) {
                return Err(WindowError::InternalInvariant {
                    op: "expansion",
                    detail: format!("old clique {:?} not contained in any new clique", old.members),
                });
            }
        }

        let mut tree = JunctionTree::build(tri.cliques.clone(), &weights)?;

        // Survivors keep their tables.
        let old_index: BTreeMap<&BTreeSet<SliceVar>, usize> = self
            .tree
            .cliques()
            .iter()
            .enumerate()
            .map(|(i, c)| (&c.members, i))
            .collect();
        let survivor_of: Vec<Option<usize>> = tree
            .cliques()
            .iter()
            .map(|c| old_index.get(&c.members).copied())
            .collect();
        let mut old_clique_used = vec![false; self.tree.clique_count()];
        let mut clique_tables: Vec<(usize, PotentialTable)> = Vec::new();
        for (ni, oi) in survivor_of.iter().enumerate() {
            if let Some(oi) = *oi {
                old_clique_used[oi] = true;
                clique_tables.push((ni, self.tree.cliques()[oi].potential.clone()));
            }
        }
        let old_sepset_index: BTreeMap<(usize, usize), usize> = self
            .tree
            .sepsets()
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let (a, b) = s.cliques;
                ((a.min(b), a.max(b)), i)
            })
            .collect();
        let mut old_sepset_used = vec![false; self.tree.sepsets().len()];
        let mut sepset_tables: Vec<(usize, PotentialTable)> = Vec::new();
        for (k_new, s) in tree.sepsets().iter().enumerate() {
            let (i, j) = s.cliques;
            if let (Some(oi), Some(oj)) = (survivor_of[i], survivor_of[j]) {
                if let Some(&ok) = old_sepset_index.get(&(oi.min(oj), oi.max(oj))) {
                    old_sepset_used[ok] = true;
                    sepset_tables.push((k_new, self.tree.sepsets()[ok].potential.clone()));
                }
            }
        }
        tree.install_potentials(clique_tables, sepset_tables);

        // Fold redundant old tables: cliques multiply in, sepsets divide.
        for (oi, used) in old_clique_used.iter().enumerate() {
            if !used {
                tree.attach(&self.tree.cliques()[oi].potential.clone())?;
            }
        }
        for (ok, used) in old_sepset_used.iter().enumerate() {
            if !used {
                tree.fold_divide(&self.tree.sepsets()[ok].potential.clone())?;
            }
        }

        for (child, parents, cpt) in &bindings {
            tree.attach(&bind_cpt(model, *child, parents, cpt))?;
        }

        self.tree = tree;
        self.moral = new_moral;
        self.filled = filled;
        self.order = tri.order;
        self.t_high = new_high;
        Ok(())
    }

    /// Cuts the `k` oldest slices off into an archived model.
    ///
    /// Surviving potentials are untouched, so surviving marginals are
    /// preserved exactly; the archived side gets a fresh spanning tree over
    /// the cut cliques (plus an interface clique when none of them covers
    /// the boundary interface) with exact marginals installed throughout.
    pub(crate) fn reduce(
        &mut self,
        k: u32,
        archived_at_epoch: u64,
    ) -> Result<ArchivedModel, WindowError> {
        let width = self.width();
        if k == 0 || k >= width {
            return Err(WindowError::ReduceOutOfRange { k, width });
        }
        if !self.tree.is_calibrated() {
            return Err(WindowError::NotCalibrated);
        }
        let t = self.t_low + k;
        let interface = moral_interface(&self.moral, t);

        let cliques = self.tree.cliques();
        let is_cut = |c: &Clique| c.members.iter().any(|v| v.t < t);
        let cut_idx: Vec<usize> = (0..cliques.len()).filter(|&i| is_cut(&cliques[i])).collect();
        let keep_idx: Vec<usize> = (0..cliques.len()).filter(|&i| !is_cut(&cliques[i])).collect();

        let cut_set: BTreeSet<usize> = cut_idx.iter().copied().collect();
        let boundary: Vec<usize> = keep_idx
            .iter()
            .copied()
            .filter(|&i| self.tree.neighbors_of(i).iter().any(|(n, _)| cut_set.contains(n)))
            .collect();

        let new_window_tree =
            self.build_reduced_window_tree(t, &interface, &keep_idx, &boundary)?;
        let archived_tree = self.build_archived_tree(&cut_idx, &interface)?;

        let keep_vertices: BTreeSet<SliceVar> =
            self.moral.vertices().filter(|v| v.t >= t).collect();
        let archived = ArchivedModel {
            tree: archived_tree,
            t_low: self.t_low,
            t_high: t - 1,
            outgoing_interface: interface.clone(),
            incoming_interface: self.incoming_interface.clone(),
            archived_at_epoch,
        };

        self.tree = new_window_tree;
        self.moral = self.moral.induced(&keep_vertices);
        self.filled = self.filled.induced(&keep_vertices);
        self.order = self.order.restricted(&keep_vertices);
        self.t_low = t;
        self.incoming_interface = Some(interface);

        self.tree.verify_structure()?;
        archived.tree.verify_structure()?;
        Ok(archived)
    }

    /// Surviving side of the reduction: kept cliques and their sepsets, with
    /// the boundary cliques re-wired to an interface host. If no surviving
    /// clique covers the interface, the interface itself becomes a clique,
    /// with its potential taken from the pre-surgery tree.
    fn build_reduced_window_tree(
        &self,
        t: u32,
        interface: &BTreeSet<SliceVar>,
        keep_idx: &[usize],
        boundary: &[usize],
    ) -> Result<JunctionTree, WindowError> {
        let old = &self.tree;
        let remap: BTreeMap<usize, usize> =
            keep_idx.iter().enumerate().map(|(new, &oldi)| (oldi, new)).collect();
        let mut cliques: Vec<Clique> =
            keep_idx.iter().map(|&i| old.cliques()[i].clone()).collect();
        let mut sepsets: Vec<Sepset> = old
            .sepsets()
            .iter()
            .filter(|s| remap.contains_key(&s.cliques.0) && remap.contains_key(&s.cliques.1))
            .map(|s| Sepset {
                cliques: (remap[&s.cliques.0], remap[&s.cliques.1]),
                members: s.members.clone(),
                potential: s.potential.clone(),
            })
            .collect();

        let boundary_new: Vec<usize> = boundary.iter().map(|&b| remap[&b]).collect();
        let mut dsu = UnionFind::new(cliques.len() + 1);
        for s in &sepsets {
            dsu.union(s.cliques.0, s.cliques.1);
        }

        // Prefer a boundary clique covering the interface, then any
        // surviving clique, then a fresh interface clique.
        let host = boundary_new
            .iter()
            .copied()
            .find(|&i| interface.is_subset(&cliques[i].members))
            .or_else(|| (0..cliques.len()).find(|&i| interface.is_subset(&cliques[i].members)));
        match host {
            Some(h) => {
                for &b in &boundary_new {
                    if b != h && dsu.union(b, h) {
                        sepsets.push(sepset_between(&cliques, b, h)?);
                    }
                }
            }
            None => {
                let src = old.find_smallest_containing(interface).ok_or_else(|| {
                    WindowError::InternalInvariant {
                        op: "reduction",
                        detail: format!("no clique contains the interface of slice {t}"),
                    }
                })?;
                let potential = old.cliques()[src].potential.marginalize(interface)?;
                cliques.push(Clique { members: interface.clone(), potential });
                let h = cliques.len() - 1;
                for &b in &boundary_new {
                    if dsu.union(b, h) {
                        sepsets.push(sepset_between(&cliques, b, h)?);
                    }
                }
            }
        }
        // Join any remaining components with empty sepsets.
        let mut reps: Vec<usize> = Vec::new();
        for i in 0..cliques.len() {
            let r = dsu.find(i);
            if !reps.contains(&r) {
                reps.push(r);
            }
        }
        for pair in reps.windows(2) {
            if dsu.union(pair[0], pair[1]) {
                sepsets.push(Sepset {
                    cliques: (pair[0].min(pair[1]), pair[0].max(pair[1])),
                    members: BTreeSet::new(),
                    potential: PotentialTable::scalar(1.0),
                });
            }
        }

        let cards: BTreeMap<SliceVar, usize> = cliques
            .iter()
            .flat_map(|c| c.members.iter().map(|&v| (v, old.cards()[&v])))
            .collect();
        Ok(JunctionTree::from_parts(cliques, sepsets, cards, true))
    }

    /// Cut-off side of the reduction: the archived model's tree. Clusters
    /// are the cut cliques plus, when none of them covers the boundary
    /// interface, the interface itself; edges come from a fresh spanning
    /// tree and every potential is the exact marginal from the calibrated
    /// pre-surgery tree.
    fn build_archived_tree(
        &self,
        cut_idx: &[usize],
        interface: &BTreeSet<SliceVar>,
    ) -> Result<JunctionTree, WindowError> {
        let old = &self.tree;
        let mut members: Vec<BTreeSet<SliceVar>> =
            cut_idx.iter().map(|&i| old.cliques()[i].members.clone()).collect();
        let covered = members.iter().any(|m| interface.is_subset(m));
        if !covered && !interface.is_empty() {
            members.push(interface.clone());
        }
        let cards: BTreeMap<SliceVar, usize> = members
            .iter()
            .flat_map(|m| m.iter().map(|&v| (v, old.cards()[&v])))
            .collect();
        let mut tree = JunctionTree::build(members.clone(), &cards)?;

        let mut clique_tables = Vec::new();
        for (i, m) in members.iter().enumerate() {
            let table = if i < cut_idx.len() {
                old.cliques()[cut_idx[i]].potential.clone()
            } else {
                let src = old.find_smallest_containing(m).ok_or_else(|| {
                    WindowError::InternalInvariant {
                        op: "reduction",
                        detail: "interface not covered by any pre-surgery clique".into(),
                    }
                })?;
                old.cliques()[src].potential.marginalize(m)?
            };
            clique_tables.push((i, table));
        }
        let mut sepset_tables = Vec::new();
        for (k, s) in tree.sepsets().iter().enumerate() {
            let table = if s.members.is_empty() {
                PotentialTable::scalar(1.0)
            } else {
                let src = old.find_smallest_containing(&s.members).ok_or_else(|| {
                    WindowError::InternalInvariant {
                        op: "reduction",
                        detail: "sepset not covered by any pre-surgery clique".into(),
                    }
                })?;
                old.cliques()[src].potential.marginalize(&s.members)?
            };
            sepset_tables.push((k, table));
        }
        tree.install_potentials(clique_tables, sepset_tables);
        tree.set_calibrated(true);
        Ok(tree)
    }
}

impl ModelSeries {
    /// Builds the series over slices `0..width` with the default min-weight
    /// triangulation heuristic; the window is propagated and calibrated.
    pub fn init(model: DpnModel, width: u32) -> Result<ModelSeries, WindowError> {
        Self::init_with(model, width, Heuristic::MinWeight)
    }

    pub fn init_with(
        model: DpnModel,
        width: u32,
        heuristic: Heuristic,
    ) -> Result<ModelSeries, WindowError> {
        if width == 0 {
            return Err(WindowError::ZeroWidth);
        }
        let report = model.validate();
        if !report.is_empty() {
            return Err(WindowError::ModelInvalid(report.len()));
        }
        let mut window = WindowState::build_initial(&model, width, &heuristic)?;
        window.propagate()?;
        Ok(ModelSeries {
            model,
            heuristic,
            window,
            archived: Vec::new(),
            smoothed: Vec::new(),
            evidence_mass: 1.0,
            epoch: 0,
        })
    }

    pub fn model(&self) -> &DpnModel {
        &self.model
    }

    pub fn heuristic(&self) -> &Heuristic {
        &self.heuristic
    }

    pub fn window(&self) -> &WindowState {
        &self.window
    }

    pub fn archived(&self) -> &[ArchivedModel] {
        &self.archived
    }

    /// Number of models in the series (archived plus the current window).
    pub fn model_count(&self) -> usize {
        self.archived.len() + 1
    }

    pub fn evidence_mass(&self) -> f64 {
        self.evidence_mass
    }

    pub(crate) fn current_epoch(&self) -> u64 {
        self.epoch
    }

    /// Enters evidence for a slice inside the current window.
    pub fn enter_evidence(&mut self, ev: &Evidence) -> Result<(), WindowError> {
        if ev.t < self.window.t_low {
            return Err(WindowError::EvidenceBehindWindow { t: ev.t, t_low: self.window.t_low });
        }
        if ev.t > self.window.t_high {
            return Err(WindowError::EvidenceBeyondWindow { t: ev.t, t_high: self.window.t_high });
        }
        Ok(self.window.tree.enter_evidence(ev)?)
    }

    /// Propagates the window. The normalization of a pass that consumed
    /// evidence multiplies into the cumulative evidence mass.
    pub fn propagate(&mut self) -> Result<PropagationResult, WindowError> {
        let consumed_evidence = !self.window.tree.journal().is_empty();
        let result = self.window.propagate()?;
        if consumed_evidence {
            self.evidence_mass *= result.normalization;
            self.epoch += 1;
        }
        Ok(result)
    }

    /// Expands the window by `k` slices. Calibration is deferred; call
    /// [`ModelSeries::propagate`] before querying.
    pub fn expand(
        &mut self,
        k: u32,
        override_slice: Option<&SliceSpec>,
    ) -> Result<(), WindowError> {
        let Self { model, window, heuristic, .. } = self;
        window.expand_capped(model, k, override_slice, heuristic, None)
    }

    /// Reduces the window by its `k` oldest slices, archiving them.
    pub fn reduce(&mut self, k: u32) -> Result<(), WindowError> {
        let epoch = self.epoch;
        let archived = self.window.reduce(k, epoch)?;
        self.archived.push(archived);
        self.smoothed.push(None);
        Ok(())
    }

    /// Moves the window forward by `k` slices: expand, propagate, reduce.
    /// Width is invariant.
    pub fn advance(&mut self, k: u32) -> Result<(), WindowError> {
        if k == 0 {
            return Ok(());
        }
        self.expand(k, None)?;
        self.propagate()?;
        self.reduce(k)
    }

    /// Filtered marginal of a variable in the current window.
    pub fn query_filtered(&self, t: u32, var: VarId) -> Result<PotentialTable, WindowError> {
        if t < self.window.t_low || t > self.window.t_high {
            return Err(WindowError::SliceOutOfRange { t, t_high: self.window.t_high });
        }
        let v = SliceVar::new(t, var);
        Ok(self.window.tree.query_var(v)?)
    }

    /// Variables present at slice `t` (template-aware), in declaration order.
    pub fn slice_variables(&self, t: u32) -> Vec<VarId> {
        self.model.slice_spec(t).variables.clone()
    }
}

impl DpnModel {
    /// Validation of an expansion-override slice against this model's
    /// variable table; previous-slice parents are allowed.
    pub(crate) fn validate_override_slice(&self, spec: &SliceSpec) -> Vec<Violation> {
        let mut report = Vec::new();
        self.validate_slice(spec, "override slice", true, &mut report);
        report
    }
}
