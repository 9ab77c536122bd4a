//! Forecasting: distributions for slices beyond the window.
//!
//! Three methods with different cost/exactness trade-offs:
//! - exact: temporarily expand a working copy of the window, propagate,
//!   query; guarded by a cap on the total clique state space.
//! - Monte-Carlo: ancestral sampling through the transition template,
//!   seeded with the window's joint marginal over the temporal-parent
//!   boundary, so the sampler is exact in distribution and the error is
//!   purely statistical.
//! - linear: the product-of-parent-marginals propagation; exact when every
//!   forecast variable's parents are marginally independent, an
//!   approximation otherwise, and by far the cheapest.
//!
//! All methods read the series; none of them mutates the window.

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use rand_chacha::ChaCha12Rng;
use rand_core::{RngCore, SeedableRng};

use crate::jtree::TreeError;
use crate::model::{SliceVar, VarId};
use crate::window::{ModelSeries, WindowError};

/// Default cap on the total clique state space of an exact forecast.
pub const DEFAULT_RESOURCE_CAP: usize = 10_000_000;

/// Identifier of the Monte-Carlo generator; part of the reproducibility
/// contract (seed plus trajectory-indexed streams).
pub const MC_RNG_ID: &str = "chacha12";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ForecastError {
    #[error("forecast horizon must be at least 1")]
    HorizonZero,
    #[error("sample count must be at least 1")]
    NoSamples,
    #[error("target offset {offset} is outside the horizon 1..={horizon}")]
    TargetOutsideHorizon { offset: u32, horizon: u32 },
    #[error("variable {var:?} is not part of the transition slice")]
    VariableNotInSlice { var: VarId },
    #[error("window is not calibrated; propagate before forecasting")]
    WindowNotCalibrated,
    #[error(
        "exact forecast needs {needed} table cells (cap {cap}); \
         consider the monte-carlo or linear method"
    )]
    ResourceCapExceeded { needed: usize, cap: usize },
    #[error(transparent)]
    Window(#[from] WindowError),
    #[error(transparent)]
    Tree(#[from] TreeError),
}

/// Forecasting method selector.
#[derive(Debug, Clone, PartialEq)]
pub enum ForecastMethod {
    Exact,
    MonteCarlo { samples: usize, seed: u64 },
    Linear,
}

/// A forecast request: how far past the window, which variables, and how.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastQuery {
    /// Number of slices past the newest window slice.
    pub horizon: u32,
    /// Requested `(slice offset, variable)` pairs with offsets in
    /// `1..=horizon`; empty means every transition variable at every offset.
    pub targets: Vec<(u32, VarId)>,
    pub method: ForecastMethod,
}

/// One forecast distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetDistribution {
    /// Absolute slice index of the forecast.
    pub t: u32,
    /// Offset past the window (1 = first forecast slice).
    pub offset: u32,
    pub var: VarId,
    pub probabilities: Vec<f64>,
    /// Per-state standard error, Monte-Carlo only.
    pub std_error: Option<Vec<f64>>,
}

/// Method metadata carried alongside the distributions.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodInfo {
    pub name: &'static str,
    /// True when the method is an approximation (linear).
    pub approximate: bool,
    pub sample_count: Option<usize>,
    pub seed: Option<u64>,
    pub rng: Option<&'static str>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastResult {
    pub targets: Vec<TargetDistribution>,
    pub method: MethodInfo,
}

/// Dispatches on the query's method with the default resource cap.
pub fn forecast(series: &ModelSeries, query: &ForecastQuery) -> Result<ForecastResult, ForecastError> {
    forecast_with_cap(series, query, DEFAULT_RESOURCE_CAP)
}

pub fn forecast_with_cap(
    series: &ModelSeries,
    query: &ForecastQuery,
    cap: usize,
) -> Result<ForecastResult, ForecastError> {
    match query.method {
        ForecastMethod::Exact => forecast_exact(series, query, cap),
        ForecastMethod::MonteCarlo { .. } => forecast_mc(series, query, cap),
        ForecastMethod::Linear => forecast_linear(series, query),
    }
}

fn resolve_targets(
    series: &ModelSeries,
    query: &ForecastQuery,
) -> Result<Vec<(u32, VarId)>, ForecastError> {
    if query.horizon == 0 {
        return Err(ForecastError::HorizonZero);
    }
    let template = &series.model().transition.slice;
    if query.targets.is_empty() {
        let mut out = Vec::new();
        for offset in 1..=query.horizon {
            for &var in &template.variables {
                out.push((offset, var));
            }
        }
        return Ok(out);
    }
    for &(offset, var) in &query.targets {
        if offset == 0 || offset > query.horizon {
            return Err(ForecastError::TargetOutsideHorizon { offset, horizon: query.horizon });
        }
        if !template.variables.contains(&var) {
            return Err(ForecastError::VariableNotInSlice { var });
        }
    }
    Ok(query.targets.clone())
}

/// Exact forecasting: expand a throwaway copy of the window by the horizon,
/// propagate it, and read the target marginals. The series is unchanged.
pub fn forecast_exact(
    series: &ModelSeries,
    query: &ForecastQuery,
    cap: usize,
) -> Result<ForecastResult, ForecastError> {
    let targets = resolve_targets(series, query)?;
    if !series.window().tree().is_calibrated() {
        return Err(ForecastError::WindowNotCalibrated);
    }
    let mut work = series.window().clone();
    work.expand_capped(series.model(), query.horizon, None, series.heuristic(), Some(cap))
        .map_err(|e| match e {
            WindowError::ResourceCapExceeded { needed, cap } => {
                ForecastError::ResourceCapExceeded { needed, cap }
            }
            other => ForecastError::Window(other),
        })?;
    work.propagate().map_err(ForecastError::Window)?;
    let base = series.window().t_high();
    let mut out = Vec::with_capacity(targets.len());
    for (offset, var) in targets {
        let t = base + offset;
        let marginal = work.tree().query_var(SliceVar::new(t, var))?;
        out.push(TargetDistribution {
            t,
            offset,
            var,
            probabilities: marginal.values().to_vec(),
            std_error: None,
        });
    }
    Ok(ForecastResult {
        targets: out,
        method: MethodInfo {
            name: "exact",
            approximate: false,
            sample_count: None,
            seed: None,
            rng: None,
        },
    })
}

/// Uniform double in `[0, 1)` from the generator's next 53 bits. Kept
/// in-house so the seed-to-sample mapping is stable across dependency
/// upgrades.
fn next_unit(rng: &mut ChaCha12Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn sample_index(weights: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

/// Deterministic topological order of the transition slice's variables.
fn transition_topo_order(series: &ModelSeries) -> Vec<VarId> {
    let spec = &series.model().transition.slice;
    let mut indeg: BTreeMap<VarId, usize> = spec.variables.iter().map(|&v| (v, 0)).collect();
    let mut children: BTreeMap<VarId, Vec<VarId>> = BTreeMap::new();
    for &(p, c) in &spec.intra_edges {
        children.entry(p).or_default().push(c);
        *indeg.get_mut(&c).unwrap() += 1;
    }
    let mut ready: BTreeSet<VarId> = indeg
        .iter()
        .filter_map(|(&v, &d)| (d == 0).then_some(v))
        .collect();
    let mut order = Vec::with_capacity(spec.variables.len());
    while let Some(&v) = ready.iter().next() {
        ready.remove(&v);
        order.push(v);
        for &c in children.get(&v).into_iter().flatten() {
            let d = indeg.get_mut(&c).unwrap();
            *d -= 1;
            if *d == 0 {
                ready.insert(c);
            }
        }
    }
    order
}

/// Monte-Carlo forecasting by ancestral sampling through the transition
/// template.
///
/// The boundary is the window's joint marginal over the temporal-parent
/// set, so trajectories are draws from the exact forecast distribution.
/// Each trajectory uses its own counter-indexed stream of the seeded
/// generator, making the output independent of evaluation order.
pub fn forecast_mc(
    series: &ModelSeries,
    query: &ForecastQuery,
    cap: usize,
) -> Result<ForecastResult, ForecastError> {
    let targets = resolve_targets(series, query)?;
    let ForecastMethod::MonteCarlo { samples, seed } = query.method else {
        unreachable!("dispatched on method");
    };
    if samples == 0 {
        return Err(ForecastError::NoSamples);
    }
    if !series.window().tree().is_calibrated() {
        return Err(ForecastError::WindowNotCalibrated);
    }
    let model = series.model();
    let template = &series.model().transition.slice;
    let t_high = series.window().t_high();

    // Joint over the temporal-parent tails in the newest window slice.
    let tails: BTreeSet<SliceVar> = template
        .implied_temporal_edges()
        .iter()
        .map(|&(p, _)| SliceVar::new(t_high, p))
        .collect();
    let boundary = series
        .window()
        .tree()
        .joint_marginal(&tails, cap)
        .map_err(|e| match e {
            TreeError::JointTooLarge { cells, .. } => {
                ForecastError::ResourceCapExceeded { needed: cells, cap }
            }
            other => ForecastError::Tree(other),
        })?;
    let boundary_vars: Vec<SliceVar> = boundary.domain_vars().collect();
    let boundary_cards: Vec<usize> = boundary.domain().iter().map(|&(_, c)| c).collect();

    let topo = transition_topo_order(series);
    let cpt_of: BTreeMap<VarId, &crate::model::Cpt> =
        template.cpts.iter().map(|c| (c.child, c)).collect();

    let mut tally: BTreeMap<(u32, VarId), Vec<u64>> = targets
        .iter()
        .map(|&(offset, var)| ((offset, var), vec![0u64; model.cardinality(var)]))
        .collect();

    for traj in 0..samples {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(traj as u64);

        // Draw the boundary configuration, then decode digit by digit.
        let mut prev: BTreeMap<VarId, usize> = BTreeMap::new();
        if !boundary_vars.is_empty() {
            let mut idx = sample_index(boundary.values(), next_unit(&mut rng));
            for pos in (0..boundary_vars.len()).rev() {
                prev.insert(boundary_vars[pos].var, idx % boundary_cards[pos]);
                idx /= boundary_cards[pos];
            }
        }

        for offset in 1..=query.horizon {
            let mut cur: BTreeMap<VarId, usize> = BTreeMap::new();
            for &var in &topo {
                let cpt = cpt_of[&var];
                let mut row = 0usize;
                for p in &cpt.parents {
                    let state = if p.lag == 1 { prev[&p.var] } else { cur[&p.var] };
                    row = row * model.cardinality(p.var) + state;
                }
                let card = model.cardinality(var);
                let weights = &cpt.table[row * card..(row + 1) * card];
                let state = sample_index(weights, next_unit(&mut rng));
                cur.insert(var, state);
            }
            for (&(o, var), counts) in tally.iter_mut() {
                if o == offset {
                    counts[cur[&var]] += 1;
                }
            }
            prev = cur;
        }
    }

    let base = series.window().t_high();
    let n = samples as f64;
    let out = targets
        .iter()
        .map(|&(offset, var)| {
            let counts = &tally[&(offset, var)];
            let probabilities: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
            let std_error = probabilities
                .iter()
                .map(|&p| (p * (1.0 - p) / n).sqrt())
                .collect();
            TargetDistribution {
                t: base + offset,
                offset,
                var,
                probabilities,
                std_error: Some(std_error),
            }
        })
        .collect();
    Ok(ForecastResult {
        targets: out,
        method: MethodInfo {
            name: "monte-carlo",
            approximate: false,
            sample_count: Some(samples),
            seed: Some(seed),
            rng: Some(MC_RNG_ID),
        },
    })
}

/// Linear forecasting: propagate per-variable marginals through the
/// template, treating the parents of each variable as independent.
///
/// Seeded with the window's per-variable marginals at the newest slice (not
/// the joint), which is the method's first approximation point whenever the
/// boundary has two or more coupled variables.
pub fn forecast_linear(
    series: &ModelSeries,
    query: &ForecastQuery,
) -> Result<ForecastResult, ForecastError> {
    let targets = resolve_targets(series, query)?;
    if !series.window().tree().is_calibrated() {
        return Err(ForecastError::WindowNotCalibrated);
    }
    let model = series.model();
    let template = &model.transition.slice;
    let t_high = series.window().t_high();

    // Seed marginals for the newest window slice.
    let mut marginals: BTreeMap<SliceVar, Vec<f64>> = BTreeMap::new();
    for &var in &model.slice_spec(t_high).variables {
        let v = SliceVar::new(t_high, var);
        let m = series.window().tree().query_var(v)?;
        marginals.insert(v, m.values().to_vec());
    }

    let topo = transition_topo_order(series);
    let cpt_of: BTreeMap<VarId, &crate::model::Cpt> =
        template.cpts.iter().map(|c| (c.child, c)).collect();

    for offset in 1..=query.horizon {
        let t = t_high + offset;
        for &var in &topo {
            let cpt = cpt_of[&var];
            let card = model.cardinality(var);
            let parent_cards: Vec<usize> =
                cpt.parents.iter().map(|p| model.cardinality(p.var)).collect();
            let parent_dists: Vec<&Vec<f64>> = cpt
                .parents
                .iter()
                .map(|p| &marginals[&SliceVar::new(t - p.lag, p.var)])
                .collect();
            let rows: usize = parent_cards.iter().product();
            let mut dist = vec![0.0f64; card];
            for row in 0..rows {
                let mut weight = 1.0;
                let mut rest = row;
                for pos in (0..parent_cards.len()).rev() {
                    let state = rest % parent_cards[pos];
                    rest /= parent_cards[pos];
                    weight *= parent_dists[pos][state];
                }
                if weight == 0.0 {
                    continue;
                }
                for (c, slot) in dist.iter_mut().enumerate() {
                    *slot += weight * cpt.table[row * card + c];
                }
            }
            marginals.insert(SliceVar::new(t, var), dist);
        }
    }

    let out = targets
        .iter()
        .map(|&(offset, var)| TargetDistribution {
            t: t_high + offset,
            offset,
            var,
            probabilities: marginals[&SliceVar::new(t_high + offset, var)].clone(),
            std_error: None,
        })
        .collect();
    Ok(ForecastResult {
        targets: out,
        method: MethodInfo {
            name: "linear",
            approximate: true,
            sample_count: None,
            seed: None,
            rng: None,
        },
    })
}
