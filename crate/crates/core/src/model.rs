//! Model description for a discrete dynamic probabilistic network.
//!
//! A model consists of a set of variables, a specification of the initial
//! time slice (slice 0), and a transition template that is replicated for
//! every later slice. Temporal edges connect a slice to its immediate
//! predecessor only; longer lags must be modelled with explicit memory
//! variables.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

/// Tolerance for CPT row-sum checks. Rows are never renormalized silently.
pub const CPT_ROW_SUM_TOL: f64 = 1e-12;

/// Identifier of a model variable: its index in the model's variable list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(pub u32);

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

/// A variable instance at a specific time slice of the unrolled network.
///
/// The derived ordering (slice first, then variable) is the canonical vertex
/// order used throughout: older slices sort before newer ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SliceVar {
    pub t: u32,
    pub var: VarId,
}

impl SliceVar {
    pub fn new(t: u32, var: VarId) -> Self {
        SliceVar { t, var }
    }
}

impl fmt::Display for SliceVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.var, self.t)
    }
}

/// A discrete random variable with a finite, labelled state space.
#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub states: Vec<String>,
}

impl Variable {
    pub fn new(name: impl Into<String>, states: &[&str]) -> Self {
        Variable {
            name: name.into(),
            states: states.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn cardinality(&self) -> usize {
        self.states.len()
    }
}

/// Reference to a conditioning parent inside a CPT.
///
/// `lag` is 0 for a same-slice parent and 1 for a previous-slice parent.
/// Anything larger violates the first-order Markov structure and is reported
/// by validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParentRef {
    pub var: VarId,
    pub lag: u32,
}

impl ParentRef {
    pub fn same(var: VarId) -> Self {
        ParentRef { var, lag: 0 }
    }

    pub fn prev(var: VarId) -> Self {
        ParentRef { var, lag: 1 }
    }
}

/// Conditional probability table of one variable.
///
/// `table` is flat with parents varying slowest in their declared order and
/// the child state varying fastest: the entry for parent configuration
/// `(p_1, ..., p_m)` and child state `c` sits at index
/// `((p_1 * card_2 + p_2) * card_3 + ...) * card_child + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cpt {
    pub child: VarId,
    pub parents: Vec<ParentRef>,
    pub table: Vec<f64>,
}

impl Cpt {
    pub fn new(child: VarId, parents: Vec<ParentRef>, table: Vec<f64>) -> Self {
        Cpt { child, parents, table }
    }
}

/// Structure and numbers of a single time slice: which variables appear,
/// the directed edges between them, and one CPT per variable.
///
/// In the initial slice all CPT parents must be same-slice. In a transition
/// slice, CPT parents may also be previous-slice; the temporal structure is
/// fully determined by those lag-1 parent references.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceSpec {
    pub variables: Vec<VarId>,
    /// Directed intra-slice edges `(parent, child)`.
    pub intra_edges: Vec<(VarId, VarId)>,
    pub cpts: Vec<Cpt>,
}

impl SliceSpec {
    /// Temporal edges implied by lag-1 CPT parents, as `(prev_var, cur_var)`
    /// pairs in CPT declaration order.
    pub fn implied_temporal_edges(&self) -> Vec<(VarId, VarId)> {
        let mut out = Vec::new();
        for cpt in &self.cpts {
            for p in &cpt.parents {
                if p.lag == 1 {
                    out.push((p.var, cpt.child));
                }
            }
        }
        out
    }
}

/// The repeating template for slices `t >= 1`.
///
/// `temporal_edges` lists the directed edges from slice `t-1` to slice `t`
/// as `(prev_var, cur_var)` pairs; validation checks that it matches the
/// lag-1 parents declared in the slice's CPTs.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionSpec {
    pub slice: SliceSpec,
    pub temporal_edges: Vec<(VarId, VarId)>,
}

/// A complete dynamic model: variables, initial slice, transition template.
#[derive(Debug, Clone, PartialEq)]
pub struct DpnModel {
    pub variables: Vec<Variable>,
    pub initial: SliceSpec,
    pub transition: TransitionSpec,
}

/// Evidence finding for a single variable instance.
#[derive(Debug, Clone, PartialEq)]
pub enum Finding {
    /// The variable is observed in the given state (index into its states).
    Hard(usize),
    /// Soft evidence: one non-negative weight per state, not all zero.
    Likelihood(Vec<f64>),
}

/// An observation attached to a variable at a time slice.
#[derive(Debug, Clone, PartialEq)]
pub struct Evidence {
    pub t: u32,
    pub var: VarId,
    pub finding: Finding,
}

impl Evidence {
    pub fn hard(t: u32, var: VarId, state: usize) -> Self {
        Evidence { t, var, finding: Finding::Hard(state) }
    }

    pub fn likelihood(t: u32, var: VarId, weights: Vec<f64>) -> Self {
        Evidence { t, var, finding: Finding::Likelihood(weights) }
    }
}

/// A single validation violation. Violations are data, not errors: a model
/// with problems still parses and can be inspected.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    DuplicateVariableName { name: String },
    EmptyStateSpace { var: String },
    DuplicateStateLabel { var: String, label: String },
    UnknownVariable { context: String, var: VarId },
    DuplicateSliceVariable { context: String, var: String },
    IntraEdgesNotAcyclic { context: String },
    EdgeEndpointNotInSlice { context: String, var: String },
    MissingCpt { context: String, var: String },
    DuplicateCpt { context: String, var: String },
    CptParentMismatch { context: String, var: String, declared: Vec<String>, graph: Vec<String> },
    CptWrongLength { context: String, var: String, expected: usize, actual: usize },
    CptEntryOutOfRange { context: String, var: String, index: usize, value: f64 },
    CptRowNotNormalized { context: String, var: String, parent_config: Vec<String>, sum: f64 },
    MarkovOrderViolation { context: String, var: String, parent: String, lag: u32 },
    InitialSliceTemporalParent { var: String, parent: String },
    TemporalEdgeMismatch { missing: Vec<String>, extra: Vec<String> },
    EmptyInterface,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match self {
            DuplicateVariableName { name } => write!(f, "duplicate variable name '{name}'"),
            EmptyStateSpace { var } => write!(f, "variable '{var}' has an empty state space"),
            DuplicateStateLabel { var, label } => {
                write!(f, "variable '{var}' repeats state label '{label}'")
            }
            UnknownVariable { context, var } => {
                write!(f, "{context}: reference to undeclared variable {var}")
            }
            DuplicateSliceVariable { context, var } => {
                write!(f, "{context}: variable '{var}' listed more than once")
            }
            IntraEdgesNotAcyclic { context } => {
                write!(f, "{context}: intra-slice edges contain a directed cycle")
            }
            EdgeEndpointNotInSlice { context, var } => {
                write!(f, "{context}: edge endpoint '{var}' is not a slice variable")
            }
            MissingCpt { context, var } => write!(f, "{context}: no CPT for variable '{var}'"),
            DuplicateCpt { context, var } => {
                write!(f, "{context}: more than one CPT for variable '{var}'")
            }
            CptParentMismatch { context, var, declared, graph } => write!(
                f,
                "{context}: CPT of '{var}' conditions on [{}] but the graph parents are [{}]",
                declared.join(", "),
                graph.join(", ")
            ),
            CptWrongLength { context, var, expected, actual } => write!(
                f,
                "{context}: CPT of '{var}' has {actual} entries, expected {expected}"
            ),
            CptEntryOutOfRange { context, var, index, value } => write!(
                f,
                "{context}: CPT of '{var}' entry {index} = {value} is outside [0, 1]"
            ),
            CptRowNotNormalized { context, var, parent_config, sum } => write!(
                f,
                "{context}: CPT row of '{var}' for parent configuration ({}) sums to {sum}",
                parent_config.join(", ")
            ),
            MarkovOrderViolation { context, var, parent, lag } => write!(
                f,
                "{context}: CPT of '{var}' references parent '{parent}' at lag {lag}; \
                 temporal edges may only span one slice boundary (first-order Markov)"
            ),
            InitialSliceTemporalParent { var, parent } => write!(
                f,
                "initial slice: CPT of '{var}' references previous-slice parent '{parent}', \
                 but slice 0 has no predecessor"
            ),
            TemporalEdgeMismatch { missing, extra } => write!(
                f,
                "transition: declared temporal edges disagree with CPT lag-1 parents \
                 (missing: [{}], extra: [{}])",
                missing.join(", "),
                extra.join(", ")
            ),
            EmptyInterface => write!(
                f,
                "transition declares no temporal edges; a dynamic model needs a non-empty interface"
            ),
        }
    }
}

/// Directed graph over unrolled slice variables, with per-vertex parent lists
/// kept in CPT declaration order.
#[derive(Debug, Clone, PartialEq)]
pub struct UnrolledDag {
    pub t_first: u32,
    pub t_last: u32,
    /// All vertices in canonical (slice-major) order.
    pub vertices: Vec<SliceVar>,
    /// Parents of each vertex, in the order declared by its CPT.
    pub parents: BTreeMap<SliceVar, Vec<SliceVar>>,
    /// Temporal parents of slice `t_first` that fall outside the unrolled
    /// range when `t_first > 0`. Reported, never silently dropped; the
    /// affected CPTs are not bound.
    pub dangling: Vec<(SliceVar, SliceVar)>,
}

impl UnrolledDag {
    /// Vertices whose CPT could not be bound because a temporal parent
    /// dangles outside the range.
    pub fn unbound_vertices(&self) -> BTreeSet<SliceVar> {
        self.dangling.iter().map(|(child, _)| *child).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ModelError {
    #[error("slice range inverted: t_first {t_first} > t_last {t_last}")]
    RangeInverted { t_first: u32, t_last: u32 },
    #[error("unknown variable name '{0}'")]
    UnknownVariableName(String),
    #[error("unknown state label '{label}' for variable '{var}'")]
    UnknownStateLabel { var: String, label: String },
    #[error("model is invalid: {0} violation(s); run validation for details")]
    Invalid(usize),
}

impl DpnModel {
    pub fn var_id(&self, name: &str) -> Result<VarId, ModelError> {
        self.variables
            .iter()
            .position(|v| v.name == name)
            .map(|i| VarId(i as u32))
            .ok_or_else(|| ModelError::UnknownVariableName(name.to_string()))
    }

    pub fn variable(&self, id: VarId) -> &Variable {
        &self.variables[id.0 as usize]
    }

    pub fn cardinality(&self, id: VarId) -> usize {
        self.variable(id).cardinality()
    }

    pub fn state_index(&self, var: VarId, label: &str) -> Result<usize, ModelError> {
        let v = self.variable(var);
        v.states
            .iter()
            .position(|s| s == label)
            .ok_or_else(|| ModelError::UnknownStateLabel {
                var: v.name.clone(),
                label: label.to_string(),
            })
    }

    fn var_name(&self, id: VarId) -> String {
        match self.variables.get(id.0 as usize) {
            Some(v) => v.name.clone(),
            None => format!("{id}"),
        }
    }

    /// Checks every structural and numerical invariant of the model and
    /// returns the violations found. An empty report means the model is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut report = Vec::new();

        let mut seen = BTreeSet::new();
        for v in &self.variables {
            if !seen.insert(v.name.clone()) {
                report.push(Violation::DuplicateVariableName { name: v.name.clone() });
            }
            if v.states.is_empty() {
                report.push(Violation::EmptyStateSpace { var: v.name.clone() });
            }
            let mut labels = BTreeSet::new();
            for s in &v.states {
                if !labels.insert(s.clone()) {
                    report.push(Violation::DuplicateStateLabel {
                        var: v.name.clone(),
                        label: s.clone(),
                    });
                }
            }
        }

        self.validate_slice(&self.initial, "initial slice", false, &mut report);
        self.validate_slice(&self.transition.slice, "transition slice", true, &mut report);

        // Declared temporal edges must agree with the lag-1 parents of the
        // transition CPTs.
        let declared: BTreeSet<(VarId, VarId)> =
            self.transition.temporal_edges.iter().copied().collect();
        let implied: BTreeSet<(VarId, VarId)> = self
            .transition
            .slice
            .implied_temporal_edges()
            .into_iter()
            .collect();
        if declared != implied {
            let fmt_edge = |(p, c): &(VarId, VarId)| {
                format!("{}->{}", self.var_name(*p), self.var_name(*c))
            };
            report.push(Violation::TemporalEdgeMismatch {
                missing: implied.difference(&declared).map(fmt_edge).collect(),
                extra: declared.difference(&implied).map(fmt_edge).collect(),
            });
        }

        if self.transition.temporal_edges.is_empty()
            && self.transition.slice.implied_temporal_edges().is_empty()
        {
            report.push(Violation::EmptyInterface);
        }

        report
    }

    pub(crate) fn validate_slice(
        &self,
        slice: &SliceSpec,
        context: &str,
        allow_prev: bool,
        report: &mut Vec<Violation>,
    ) {
        let n = self.variables.len() as u32;
        let mut members = BTreeSet::new();
        for &v in &slice.variables {
            if v.0 >= n {
                report.push(Violation::UnknownVariable { context: context.into(), var: v });
            } else if !members.insert(v) {
                report.push(Violation::DuplicateSliceVariable {
                    context: context.into(),
                    var: self.var_name(v),
                });
            }
        }

        for &(p, c) in &slice.intra_edges {
            for v in [p, c] {
                if v.0 >= n {
                    report.push(Violation::UnknownVariable { context: context.into(), var: v });
                } else if !members.contains(&v) {
                    report.push(Violation::EdgeEndpointNotInSlice {
                        context: context.into(),
                        var: self.var_name(v),
                    });
                }
            }
        }

        if !intra_edges_acyclic(&members, &slice.intra_edges) {
            report.push(Violation::IntraEdgesNotAcyclic { context: context.into() });
        }

        // Exactly one CPT per slice variable.
        let mut cpt_owners = BTreeSet::new();
        for cpt in &slice.cpts {
            if cpt.child.0 >= n {
                report.push(Violation::UnknownVariable { context: context.into(), var: cpt.child });
                continue;
            }
            if !cpt_owners.insert(cpt.child) {
                report.push(Violation::DuplicateCpt {
                    context: context.into(),
                    var: self.var_name(cpt.child),
                });
            }
        }
        for &v in &members {
            if !cpt_owners.contains(&v) {
                report.push(Violation::MissingCpt {
                    context: context.into(),
                    var: self.var_name(v),
                });
            }
        }

        // Intra-slice graph parents, for the parent-set cross-check.
        let mut graph_parents: BTreeMap<VarId, BTreeSet<ParentRef>> = BTreeMap::new();
        for &(p, c) in &slice.intra_edges {
            graph_parents.entry(c).or_default().insert(ParentRef::same(p));
        }

        for cpt in &slice.cpts {
            if cpt.child.0 >= n {
                continue;
            }
            let child_name = self.var_name(cpt.child);

            let mut ok_shape = true;
            for p in &cpt.parents {
                if p.var.0 >= n {
                    report.push(Violation::UnknownVariable {
                        context: context.into(),
                        var: p.var,
                    });
                    ok_shape = false;
                    continue;
                }
                if p.lag > 1 {
                    report.push(Violation::MarkovOrderViolation {
                        context: context.into(),
                        var: child_name.clone(),
                        parent: self.var_name(p.var),
                        lag: p.lag,
                    });
                    ok_shape = false;
                } else if p.lag == 1 && !allow_prev {
                    report.push(Violation::InitialSliceTemporalParent {
                        var: child_name.clone(),
                        parent: self.var_name(p.var),
                    });
                    ok_shape = false;
                }
            }
            if !ok_shape {
                continue;
            }

            // Parent set must match the graph: intra edges plus (for the
            // transition slice) the declared lag-1 parents themselves.
            let declared_set: BTreeSet<ParentRef> = cpt.parents.iter().copied().collect();
            let mut expected = graph_parents.get(&cpt.child).cloned().unwrap_or_default();
            for p in &cpt.parents {
                if p.lag == 1 {
                    expected.insert(*p);
                }
            }
            if declared_set != expected {
                let name_of = |p: &ParentRef| {
                    if p.lag == 1 {
                        format!("{}[t-1]", self.var_name(p.var))
                    } else {
                        self.var_name(p.var)
                    }
                };
                report.push(Violation::CptParentMismatch {
                    context: context.into(),
                    var: child_name.clone(),
                    declared: cpt.parents.iter().map(name_of).collect(),
                    graph: expected.iter().map(name_of).collect(),
                });
                continue;
            }
            if declared_set.len() != cpt.parents.len() {
                // A parent repeated in the list: shows up as a mismatch above
                // only if the set collapses; report explicitly.
                report.push(Violation::CptParentMismatch {
                    context: context.into(),
                    var: child_name.clone(),
                    declared: cpt.parents.iter().map(|p| self.var_name(p.var)).collect(),
                    graph: expected.iter().map(|p| self.var_name(p.var)).collect(),
                });
                continue;
            }

            self.validate_cpt_numbers(cpt, context, &child_name, report);
        }
    }

    fn validate_cpt_numbers(
        &self,
        cpt: &Cpt,
        context: &str,
        child_name: &str,
        report: &mut Vec<Violation>,
    ) {
        let child_card = self.cardinality(cpt.child);
        let parent_cards: Vec<usize> =
            cpt.parents.iter().map(|p| self.cardinality(p.var)).collect();
        let rows: usize = parent_cards.iter().product();
        let expected = rows * child_card;
        if cpt.table.len() != expected {
            report.push(Violation::CptWrongLength {
                context: context.into(),
                var: child_name.into(),
                expected,
                actual: cpt.table.len(),
            });
            return;
        }
        for (i, &x) in cpt.table.iter().enumerate() {
            if !x.is_finite() || !(0.0..=1.0).contains(&x) {
                report.push(Violation::CptEntryOutOfRange {
                    context: context.into(),
                    var: child_name.into(),
                    index: i,
                    value: x,
                });
                return;
            }
        }
        for row in 0..rows {
            let sum: f64 = cpt.table[row * child_card..(row + 1) * child_card].iter().sum();
            if (sum - 1.0).abs() > CPT_ROW_SUM_TOL {
                // Decode the row index into per-parent state labels.
                let mut cfg = Vec::with_capacity(cpt.parents.len());
                let mut rest = row;
                for (k, &card) in parent_cards.iter().enumerate().rev() {
                    let s = rest % card;
                    rest /= card;
                    let pv = self.variable(cpt.parents[k].var);
                    cfg.push(format!("{}={}", pv.name, pv.states[s]));
                }
                cfg.reverse();
                report.push(Violation::CptRowNotNormalized {
                    context: context.into(),
                    var: child_name.into(),
                    parent_config: cfg,
                    sum,
                });
            }
        }
    }

    /// Slice spec in effect at slice `t`.
    pub fn slice_spec(&self, t: u32) -> &SliceSpec {
        if t == 0 {
            &self.initial
        } else {
            &self.transition.slice
        }
    }

    /// Unrolls the model over slices `t_first..=t_last` into a composite DAG
    /// with CPT-ordered parent bindings.
    ///
    /// Slice 0 uses the initial spec; every other slice uses the transition
    /// template. When `t_first > 0`, temporal parents of slice `t_first`
    /// point outside the range; they are listed in `dangling`.
    pub fn unroll(&self, t_first: u32, t_last: u32) -> Result<UnrolledDag, ModelError> {
        if t_first > t_last {
            return Err(ModelError::RangeInverted { t_first, t_last });
        }
        let mut vertices = Vec::new();
        let mut parents: BTreeMap<SliceVar, Vec<SliceVar>> = BTreeMap::new();
        let mut dangling = Vec::new();

        for t in t_first..=t_last {
            let spec = self.slice_spec(t);
            for &v in &spec.variables {
                vertices.push(SliceVar::new(t, v));
            }
            for cpt in &spec.cpts {
                let child = SliceVar::new(t, cpt.child);
                let mut ps = Vec::with_capacity(cpt.parents.len());
                let mut has_dangling = false;
                for p in &cpt.parents {
                    if p.lag == 0 {
                        ps.push(SliceVar::new(t, p.var));
                    } else if t > t_first {
                        ps.push(SliceVar::new(t - 1, p.var));
                    } else {
                        dangling.push((child, SliceVar::new(t.wrapping_sub(1), p.var)));
                        has_dangling = true;
                    }
                }
                if !has_dangling {
                    parents.insert(child, ps);
                } else {
                    // Keep the vertex but do not bind a partial parent list.
                    parents.insert(child, Vec::new());
                }
            }
        }
        Ok(UnrolledDag { t_first, t_last, vertices, parents, dangling })
    }

    /// The interface of slice `t`: the slice-`t` endpoints of temporal edges.
    /// Empty for `t = 0`.
    pub fn interface_of(&self, t: u32) -> BTreeSet<SliceVar> {
        if t == 0 {
            return BTreeSet::new();
        }
        self.transition
            .temporal_edges
            .iter()
            .map(|&(_, head)| SliceVar::new(t, head))
            .collect()
    }
}

fn intra_edges_acyclic(members: &BTreeSet<VarId>, edges: &[(VarId, VarId)]) -> bool {
    // Kahn's algorithm over the slice variables.
    let mut indeg: BTreeMap<VarId, usize> = members.iter().map(|&v| (v, 0)).collect();
    let mut out: BTreeMap<VarId, Vec<VarId>> = BTreeMap::new();
    for &(p, c) in edges {
        if !members.contains(&p) || !members.contains(&c) {
            continue; // reported separately
        }
        out.entry(p).or_default().push(c);
        *indeg.entry(c).or_default() += 1;
    }
    let mut queue: Vec<VarId> = indeg
        .iter()
        .filter_map(|(&v, &d)| (d == 0).then_some(v))
        .collect();
    let mut removed = 0usize;
    while let Some(v) = queue.pop() {
        removed += 1;
        if let Some(children) = out.get(&v) {
            for &c in children.clone().iter() {
                let d = indeg.get_mut(&c).unwrap();
                *d -= 1;
                if *d == 0 {
                    queue.push(c);
                }
            }
        }
    }
    removed == members.len()
}


#[cfg(test)]
mod tests {
    use super::*;
    use super::fixtures::{chain, hmm};

    #[test]
    fn valid_chain_has_empty_report() {
        assert!(chain().validate().is_empty());
        assert!(hmm().validate().is_empty());
    }

    #[test]
    fn bad_row_sum_is_reported_with_child_and_config() {
        let mut m = hmm();
        // Break the y|x=s1 row of the transition emission.
        m.transition.slice.cpts[1].table = vec![0.9, 0.1, 0.2, 0.7];
        let report = m.validate();
        assert_eq!(report.len(), 1);
        match &report[0] {
            Violation::CptRowNotNormalized { var, parent_config, sum, .. } => {
                assert_eq!(var, "y");
                assert_eq!(parent_config, &vec!["x=s1".to_string()]);
                assert!((sum - 0.9).abs() < 1e-12);
            }
            other => panic!("unexpected violation {other:?}"),
        }
    }

    #[test]
    fn lag_two_parent_is_a_markov_violation() {
        let mut m = chain();
        m.transition.slice.cpts[0].parents = vec![ParentRef { var: VarId(0), lag: 2 }];
        let report = m.validate();
        assert!(report.iter().any(|v| matches!(
            v,
            Violation::MarkovOrderViolation { lag: 2, .. }
        )));
    }

    #[test]
    fn prev_parent_in_initial_slice_is_reported() {
        let mut m = chain();
        m.initial.cpts[0] = Cpt::new(VarId(0), vec![ParentRef::prev(VarId(0))], vec![
            0.8, 0.2, 0.1, 0.9,
        ]);
        let report = m.validate();
        assert!(report
            .iter()
            .any(|v| matches!(v, Violation::InitialSliceTemporalParent { .. })));
    }

    #[test]
    fn cpt_parent_mismatch_is_reported() {
        let mut m = hmm();
        // y's CPT claims no parents although x -> y is declared.
        m.initial.cpts[1] = Cpt::new(VarId(1), vec![], vec![0.5, 0.5]);
        let report = m.validate();
        assert!(report.iter().any(|v| matches!(v, Violation::CptParentMismatch { .. })));
    }

    #[test]
    fn empty_interface_is_reported() {
        let mut m = chain();
        m.transition.slice.cpts[0] = Cpt::new(VarId(0), vec![], vec![0.5, 0.5]);
        m.transition.temporal_edges.clear();
        let report = m.validate();
        assert!(report.iter().any(|v| matches!(v, Violation::EmptyInterface)));
    }

    #[test]
    fn each_structural_violation_is_detectable() {
        // One targeted corruption per violation variant.
        let base = hmm();

        let mut m = base.clone();
        m.variables.push(Variable::new("x", &["a", "b"]));
        assert!(m.validate().iter().any(|v| matches!(v, Violation::DuplicateVariableName { .. })));

        let mut m = base.clone();
        m.variables[1].states.clear();
        assert!(m.validate().iter().any(|v| matches!(v, Violation::EmptyStateSpace { .. })));

        let mut m = base.clone();
        m.variables[0].states = vec!["s0".into(), "s0".into()];
        assert!(m.validate().iter().any(|v| matches!(v, Violation::DuplicateStateLabel { .. })));

        let mut m = base.clone();
        m.initial.variables.push(VarId(9));
        assert!(m.validate().iter().any(|v| matches!(v, Violation::UnknownVariable { .. })));

        let mut m = base.clone();
        m.initial.variables.push(VarId(0));
        assert!(m
            .validate()
            .iter()
            .any(|v| matches!(v, Violation::DuplicateSliceVariable { .. })));

        let mut m = base.clone();
        m.initial.intra_edges.push((VarId(1), VarId(0)));
        assert!(m.validate().iter().any(|v| matches!(v, Violation::IntraEdgesNotAcyclic { .. })));

        let mut m = base.clone();
        m.initial.variables = vec![VarId(0)];
        assert!(m
            .validate()
            .iter()
            .any(|v| matches!(v, Violation::EdgeEndpointNotInSlice { .. })));

        let mut m = base.clone();
        m.initial.cpts.remove(1);
        assert!(m.validate().iter().any(|v| matches!(v, Violation::MissingCpt { .. })));

        let mut m = base.clone();
        let dup = m.initial.cpts[0].clone();
        m.initial.cpts.push(dup);
        assert!(m.validate().iter().any(|v| matches!(v, Violation::DuplicateCpt { .. })));

        let mut m = base.clone();
        m.initial.cpts[0].table = vec![0.5, 0.5, 0.5];
        assert!(m.validate().iter().any(|v| matches!(v, Violation::CptWrongLength { .. })));

        let mut m = base.clone();
        m.initial.cpts[0].table = vec![1.5, -0.5];
        assert!(m
            .validate()
            .iter()
            .any(|v| matches!(v, Violation::CptEntryOutOfRange { .. })));

        let mut m = base.clone();
        m.transition.temporal_edges.push((VarId(1), VarId(1)));
        assert!(m
            .validate()
            .iter()
            .any(|v| matches!(v, Violation::TemporalEdgeMismatch { .. })));
    }

    #[test]
    fn unroll_chain_three_slices() {
        let m = chain();
        let dag = m.unroll(0, 2).unwrap();
        assert_eq!(dag.vertices.len(), 3);
        assert!(dag.dangling.is_empty());
        let x = VarId(0);
        assert_eq!(dag.parents[&SliceVar::new(0, x)], Vec::<SliceVar>::new());
        assert_eq!(dag.parents[&SliceVar::new(1, x)], vec![SliceVar::new(0, x)]);
        assert_eq!(dag.parents[&SliceVar::new(2, x)], vec![SliceVar::new(1, x)]);
    }

    #[test]
    fn unroll_single_initial_slice() {
        let m = hmm();
        let dag = m.unroll(0, 0).unwrap();
        assert_eq!(dag.vertices.len(), 2);
        assert!(dag.dangling.is_empty());
        assert!(m.interface_of(0).is_empty());
    }

    #[test]
    fn unroll_from_one_reports_dangling_parents() {
        let m = chain();
        let dag = m.unroll(1, 2).unwrap();
        assert_eq!(dag.vertices.len(), 2);
        assert_eq!(dag.dangling.len(), 1);
        let (child, _) = dag.dangling[0];
        assert_eq!(child, SliceVar::new(1, VarId(0)));
        assert_eq!(dag.unbound_vertices().len(), 1);
    }

    #[test]
    fn unroll_rejects_inverted_range() {
        let m = chain();
        assert!(matches!(m.unroll(3, 1), Err(ModelError::RangeInverted { .. })));
    }

    #[test]
    fn interface_of_chain() {
        let m = chain();
        assert!(m.interface_of(0).is_empty());
        let i3 = m.interface_of(3);
        assert_eq!(i3.len(), 1);
        assert!(i3.contains(&SliceVar::new(3, VarId(0))));
    }

    #[test]
    fn interface_with_two_temporal_edges() {
        let u = VarId(0);
        let v = VarId(1);
        let m = DpnModel {
            variables: vec![Variable::new("u", &["a", "b"]), Variable::new("v", &["a", "b"])],
            initial: SliceSpec {
                variables: vec![u, v],
                intra_edges: vec![],
                cpts: vec![
                    Cpt::new(u, vec![], vec![0.5, 0.5]),
                    Cpt::new(v, vec![], vec![0.5, 0.5]),
                ],
            },
            transition: TransitionSpec {
                slice: SliceSpec {
                    variables: vec![u, v],
                    intra_edges: vec![],
                    cpts: vec![
                        Cpt::new(u, vec![ParentRef::prev(u)], vec![0.9, 0.1, 0.2, 0.8]),
                        Cpt::new(v, vec![ParentRef::prev(v)], vec![0.6, 0.4, 0.3, 0.7]),
                    ],
                },
                temporal_edges: vec![(u, u), (v, v)],
            },
        };
        assert!(m.validate().is_empty());
        let i = m.interface_of(5);
        assert_eq!(i.len(), 2);
        assert!(i.contains(&SliceVar::new(5, u)));
        assert!(i.contains(&SliceVar::new(5, v)));
    }

    #[test]
    fn interface_is_slice_relabeled_template() {
        let m = hmm();
        let i1: BTreeSet<VarId> = m.interface_of(1).iter().map(|s| s.var).collect();
        let i7: BTreeSet<VarId> = m.interface_of(7).iter().map(|s| s.var).collect();
        assert_eq!(i1, i7);
    }
}
