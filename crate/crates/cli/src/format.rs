//! Model and evidence file parsing.
//!
//! The model file is a single JSON document:
//!
//! ```json
//! {
//!   "variables": [{"name": "x", "states": ["s0", "s1"]}, ...],
//!   "initial":    {"edges": [["child", "parent", ...]], "cpts": {"x": [ ... ]}},
//!   "transition": {"edges": [...], "temporal_edges": [["prev", "cur"], ...],
//!                  "cpts": {"x": [ ... ]}}
//! }
//! ```
//!
//! Each `edges` entry lists a child followed by its same-slice parents. CPT
//! tables are flat with parents varying slowest and the child fastest;
//! a variable's parents are ordered previous-slice first (in `temporal_edges`
//! order) and then same-slice (in `edges` order).
//!
//! Evidence files hold one JSON object per line: either
//! `{"t": 3, "var": "y", "state": "o1"}` or
//! `{"t": 3, "var": "y", "likelihood": [0.9, 0.2]}`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use dpn_core::model::{
    Cpt, DpnModel, Evidence, Finding, ParentRef, SliceSpec, TransitionSpec, VarId, Variable,
};

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("cannot read {path}: {detail}")]
    Unreadable { path: String, detail: String },
    #[error("{path}: malformed JSON at line {line}, column {column}: {message}")]
    Json { path: String, line: usize, column: usize, message: String },
    #[error("{path}: {context} references undeclared variable '{name}'")]
    UnknownName { path: String, context: String, name: String },
    #[error("{path} line {line}: {message}")]
    Evidence { path: String, line: usize, message: String },
    #[error("{path}: variable '{var}' has no state labelled '{label}'")]
    UnknownState { path: String, var: String, label: String },
}

#[derive(Deserialize)]
struct ModelFile {
    variables: Vec<VariableDecl>,
    initial: SliceFile,
    transition: SliceFile,
}

#[derive(Deserialize)]
struct VariableDecl {
    name: String,
    states: Vec<String>,
}

#[derive(Deserialize)]
struct SliceFile {
    #[serde(default)]
    edges: Vec<Vec<String>>,
    #[serde(default)]
    temporal_edges: Vec<[String; 2]>,
    #[serde(default)]
    cpts: BTreeMap<String, Vec<f64>>,
}

fn read_file(path: &Path) -> Result<String, FormatError> {
    std::fs::read_to_string(path).map_err(|e| FormatError::Unreadable {
        path: path.display().to_string(),
        detail: e.to_string(),
    })
}

/// Parses a model file into the engine's model type. Structural problems
/// beyond name resolution are left to model validation.
pub fn parse_model(path: &Path) -> Result<DpnModel, FormatError> {
    let text = read_file(path)?;
    let file: ModelFile = serde_json::from_str(&text).map_err(|e| FormatError::Json {
        path: path.display().to_string(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;

    let variables: Vec<Variable> = file
        .variables
        .iter()
        .map(|v| Variable { name: v.name.clone(), states: v.states.clone() })
        .collect();
    let id_of: BTreeMap<&str, VarId> = variables
        .iter()
        .enumerate()
        .map(|(i, v)| (v.name.as_str(), VarId(i as u32)))
        .collect();
    let resolve = |context: &str, name: &str| -> Result<VarId, FormatError> {
        id_of.get(name).copied().ok_or_else(|| FormatError::UnknownName {
            path: path.display().to_string(),
            context: context.to_string(),
            name: name.to_string(),
        })
    };

    let build_slice = |section: &SliceFile, context: &str, temporal: bool| -> Result<SliceSpec, FormatError> {
        let slice_vars: Vec<VarId> = (0..variables.len() as u32).map(VarId).collect();
        let mut intra_edges: Vec<(VarId, VarId)> = Vec::new();
        // (child, ordered same-slice parents) in file order.
        let mut intra_parents: BTreeMap<VarId, Vec<VarId>> = BTreeMap::new();
        for entry in &section.edges {
            if entry.is_empty() {
                continue;
            }
            let child = resolve(context, &entry[0])?;
            for pname in &entry[1..] {
                let parent = resolve(context, pname)?;
                intra_edges.push((parent, child));
                intra_parents.entry(child).or_default().push(parent);
            }
        }
        let mut temporal_parents: BTreeMap<VarId, Vec<VarId>> = BTreeMap::new();
        if temporal {
            for [prev, cur] in &section.temporal_edges {
                let p = resolve(context, prev)?;
                let c = resolve(context, cur)?;
                temporal_parents.entry(c).or_default().push(p);
            }
        }
        let mut cpts = Vec::new();
        for (name, table) in &section.cpts {
            let child = resolve(context, name)?;
            let mut parents: Vec<ParentRef> = temporal_parents
                .get(&child)
                .into_iter()
                .flatten()
                .map(|&v| ParentRef::prev(v))
                .collect();
            parents.extend(
                intra_parents
                    .get(&child)
                    .into_iter()
                    .flatten()
                    .map(|&v| ParentRef::same(v)),
            );
            cpts.push(Cpt { child, parents, table: table.clone() });
        }
        Ok(SliceSpec { variables: slice_vars, intra_edges, cpts })
    };

    let initial = build_slice(&file.initial, "initial", false)?;
    let slice = build_slice(&file.transition, "transition", true)?;
    let temporal_edges: Vec<(VarId, VarId)> = file
        .transition
        .temporal_edges
        .iter()
        .map(|[prev, cur]| Ok((resolve("transition", prev)?, resolve("transition", cur)?)))
        .collect::<Result<_, FormatError>>()?;

    Ok(DpnModel {
        variables,
        initial,
        transition: TransitionSpec { slice, temporal_edges },
    })
}

#[derive(Deserialize)]
struct EvidenceLine {
    t: u32,
    var: String,
    #[serde(default)]
    state: Option<String>,
    #[serde(default)]
    likelihood: Option<Vec<f64>>,
}

/// Parses a JSON-lines evidence file against a model (to resolve variable
/// names and state labels). Blank lines are skipped.
pub fn parse_evidence(model: &DpnModel, path: &Path) -> Result<Vec<Evidence>, FormatError> {
    let text = read_file(path)?;
    let path_str = path.display().to_string();
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let rec: EvidenceLine = serde_json::from_str(raw).map_err(|e| FormatError::Evidence {
            path: path_str.clone(),
            line,
            message: format!("malformed JSON at column {}: {e}", e.column()),
        })?;
        let var = model.var_id(&rec.var).map_err(|_| FormatError::UnknownName {
            path: path_str.clone(),
            context: format!("evidence line {line}"),
            name: rec.var.clone(),
        })?;
        let finding = match (rec.state, rec.likelihood) {
            (Some(label), None) => {
                let s = model.state_index(var, &label).map_err(|_| FormatError::UnknownState {
                    path: path_str.clone(),
                    var: rec.var.clone(),
                    label: label.clone(),
                })?;
                Finding::Hard(s)
            }
            (None, Some(w)) => Finding::Likelihood(w),
            _ => {
                return Err(FormatError::Evidence {
                    path: path_str.clone(),
                    line,
                    message: "each record needs exactly one of \"state\" or \"likelihood\"".into(),
                })
            }
        };
        out.push(Evidence { t: rec.t, var, finding });
    }
    Ok(out)
}

/// Parses a `t:var,t:var` target list.
pub fn parse_targets(model: &DpnModel, spec: &str) -> Result<Vec<(u32, VarId)>, String> {
    let mut out = Vec::new();
    for part in spec.split(',').filter(|p| !p.trim().is_empty()) {
        let (t, name) = part
            .split_once(':')
            .ok_or_else(|| format!("target '{part}' is not of the form t:variable"))?;
        let t: u32 = t.trim().parse().map_err(|_| format!("bad slice index in '{part}'"))?;
        let var = model
            .var_id(name.trim())
            .map_err(|_| format!("unknown variable '{}' in targets", name.trim()))?;
        out.push((t, var));
    }
    Ok(out)
}
