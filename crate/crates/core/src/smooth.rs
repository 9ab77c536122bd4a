//! Backward smoothing: transferring evidence information from the current
//! model to any archived past model through the interface cliques shared by
//! adjacent models in the series.
//!
//! Each adjacent pair shares an interface set `I`: the newer model hosts it
//! in an incoming interface clique, the older one in an outgoing interface
//! clique. One smoothing step marginalizes the newer clique onto `I`,
//! divides by the older model's own current `I`-marginal, multiplies the
//! ratio into the older interface clique, and re-propagates the older model.
//! Walking pairs from the current model backwards makes every visited model
//! reflect all evidence entered so far.
//!
//! Pristine archived trees are immutable; smoothing works on per-model
//! copies created on demand. Each copy records the evidence epoch it was
//! last informed of, so repeated smoothing with no new evidence is an exact
//! no-op.

use std::collections::BTreeSet;

use crate::jtree::TreeError;
use crate::model::{SliceVar, VarId};
use crate::potential::{PotentialError, PotentialTable};
use crate::window::{ModelSeries, SmoothedCopy, WindowError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SmoothError {
    #[error("model index {n} out of range (series has {count} models)")]
    OutOfRange { n: usize, count: usize },
    #[error("window is not calibrated; propagate before smoothing")]
    WindowNotCalibrated,
    #[error("series state is inconsistent: {0}")]
    InvalidSeriesState(String),
    #[error("slice {t} is beyond the series (latest slice {t_high})")]
    SliceOutOfRange { t: u32, t_high: u32 },
    #[error("variable {var:?} is not present at slice {t}")]
    VariableNotInSlice { t: u32, var: VarId },
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error(transparent)]
    Window(#[from] WindowError),
}

/// The interface cliques joining models `n-1` and `n` of the series.
#[derive(Debug, Clone, PartialEq)]
pub struct InterfaceCliquePair {
    /// 1-based index of the older model.
    pub older_model: usize,
    /// 1-based index of the newer model.
    pub newer_model: usize,
    /// The shared interface set.
    pub shared: BTreeSet<SliceVar>,
    /// Outgoing interface clique in the older model's tree.
    pub older_clique: usize,
    /// Incoming interface clique in the newer model's tree.
    pub newer_clique: usize,
}

impl ModelSeries {
    /// Interface set between models `n-1` and `n` (1-based, `2 <= n <= N`).
    fn interface_between(&self, n: usize) -> Result<BTreeSet<SliceVar>, SmoothError> {
        let count = self.model_count();
        if n < 2 || n > count {
            return Err(SmoothError::OutOfRange { n, count });
        }
        Ok(self.archived[n - 2].outgoing_interface.clone())
    }

    /// Resolves the interface cliques of the pair `(P_{n-1}, P_n)`.
    ///
    /// The clique choice is deterministic: the smallest clique containing
    /// the interface, ties broken by creation order.
    pub fn interface_cliques(&self, n: usize) -> Result<InterfaceCliquePair, SmoothError> {
        let shared = self.interface_between(n)?;
        let older_tree = &self.archived[n - 2].tree;
        let newer_tree = if n == self.model_count() {
            &self.window().tree
        } else {
            &self.archived[n - 1].tree
        };
        let older_clique = older_tree
            .find_smallest_containing(&shared)
            .ok_or_else(|| SmoothError::InvalidSeriesState(
                format!("older model {} has no clique covering the interface", n - 1),
            ))?;
        let newer_clique = newer_tree
            .find_smallest_containing(&shared)
            .ok_or_else(|| SmoothError::InvalidSeriesState(
                format!("newer model {n} has no clique covering the interface"),
            ))?;
        Ok(InterfaceCliquePair {
            older_model: n - 1,
            newer_model: n,
            shared,
            older_clique,
            newer_clique,
        })
    }

    /// Ensures a smoothing copy exists for archived model `idx` (0-based).
    fn ensure_copy(&mut self, idx: usize) {
        if self.smoothed[idx].is_none() {
            self.smoothed[idx] = Some(SmoothedCopy {
                tree: self.archived[idx].tree.clone(),
                informed_epoch: self.archived[idx].archived_at_epoch,
            });
        }
    }

    /// Normalized `I`-marginal of model `i` (1-based) as smoothing sees it:
    /// the window for `i = N`, the smoothing copy otherwise.
    fn smoothing_marginal(
        &mut self,
        i: usize,
        shared: &BTreeSet<SliceVar>,
    ) -> Result<PotentialTable, SmoothError> {
        if i == self.model_count() {
            Ok(self.window().tree.query_marginal(shared)?)
        } else {
            self.ensure_copy(i - 1);
            let tree = &self.smoothed[i - 1].as_ref().unwrap().tree;
            Ok(tree.query_marginal(shared)?)
        }
    }

    /// Backward smoothing from the current model down to model `n`
    /// (1-based, `1 <= n < N`).
    ///
    /// Afterwards the smoothing views of models `n..=N` are pairwise jointly
    /// calibrated and their marginals reflect all evidence entered so far.
    /// Models whose copy is already informed of the current evidence epoch
    /// are skipped, which makes repeated smoothing an exact no-op.
    pub fn smooth_to(&mut self, n: usize) -> Result<(), SmoothError> {
        let count = self.model_count();
        if n < 1 || n >= count {
            return Err(SmoothError::OutOfRange { n, count });
        }
        if !self.window().tree.is_calibrated() {
            return Err(SmoothError::WindowNotCalibrated);
        }
        let epoch = self.current_epoch();
        for i in (n + 1..=count).rev() {
            let target = i - 2; // 0-based archived index of the older model
            self.ensure_copy(target);
            if self.smoothed[target].as_ref().unwrap().informed_epoch == epoch {
                continue;
            }
            let pair = self.interface_cliques_smoothing(i)?;
            let numerator = self.smoothing_marginal(i, &pair.shared)?;
            let copy = self.smoothed[target].as_mut().unwrap();
            let denominator = copy
                .tree
                .cliques()[pair.older_clique]
                .potential
                .marginalize(&pair.shared)?
                .normalize()?
                .0;
            let ratio = numerator.divide(&denominator).map_err(|e| match e {
                PotentialError::DivisionByZero { .. } => SmoothError::InvalidSeriesState(
                    "newer model supports an interface state the older model rules out".into(),
                ),
                other => SmoothError::Potential(other),
            })?;
            copy.tree.scale_clique(pair.older_clique, &ratio)?;
            copy.tree.propagate_from(pair.older_clique)?;
            copy.informed_epoch = epoch;
        }
        Ok(())
    }

    /// Interface cliques resolved against the smoothing views (copies where
    /// they exist) rather than the pristine archived trees.
    fn interface_cliques_smoothing(&mut self, n: usize) -> Result<InterfaceCliquePair, SmoothError> {
        let shared = self.interface_between(n)?;
        self.ensure_copy(n - 2);
        let older_clique = self.smoothed[n - 2]
            .as_ref()
            .unwrap()
            .tree
            .find_smallest_containing(&shared)
            .ok_or_else(|| SmoothError::InvalidSeriesState(
                format!("older model {} has no clique covering the interface", n - 1),
            ))?;
        let newer_clique = if n == self.model_count() {
            self.window().tree.find_smallest_containing(&shared)
        } else {
            self.ensure_copy(n - 1);
            self.smoothed[n - 1]
                .as_ref()
                .unwrap()
                .tree
                .find_smallest_containing(&shared)
        }
        .ok_or_else(|| SmoothError::InvalidSeriesState(
            format!("newer model {n} has no clique covering the interface"),
        ))?;
        Ok(InterfaceCliquePair {
            older_model: n - 1,
            newer_model: n,
            shared,
            older_clique,
            newer_clique,
        })
    }

    /// Forward counterpart of one smoothing step: informs model `n` of what
    /// model `n-1` knows (`2 <= n < N`; the current window never receives
    /// information this way because archived models accept no new evidence).
    pub fn transfer_forward(&mut self, n: usize) -> Result<(), SmoothError> {
        let count = self.model_count();
        if n < 2 || n >= count {
            return Err(SmoothError::OutOfRange { n, count });
        }
        let pair = self.interface_cliques_smoothing(n)?;
        let source = self.smoothing_marginal(n - 1, &pair.shared)?;
        self.ensure_copy(n - 1);
        let copy = self.smoothed[n - 1].as_mut().unwrap();
        let denominator = copy
            .tree
            .cliques()[pair.newer_clique]
            .potential
            .marginalize(&pair.shared)?
            .normalize()?
            .0;
        let ratio = source.divide(&denominator).map_err(|e| match e {
            PotentialError::DivisionByZero { .. } => SmoothError::InvalidSeriesState(
                "older model supports an interface state the newer model rules out".into(),
            ),
            other => SmoothError::Potential(other),
        })?;
        copy.tree.scale_clique(pair.newer_clique, &ratio)?;
        copy.tree.propagate_from(pair.newer_clique)?;
        Ok(())
    }

    /// Smoothed posterior of one variable at any covered slice, given all
    /// evidence entered so far. Window slices answer directly from the
    /// window tree; archived slices smooth their model first if it is stale.
    pub fn query_smoothed(&mut self, t: u32, var: VarId) -> Result<PotentialTable, SmoothError> {
        let t_high = self.window().t_high();
        if t > t_high {
            return Err(SmoothError::SliceOutOfRange { t, t_high });
        }
        if t >= self.window().t_low() {
            return Ok(self.window().tree.query_var(SliceVar::new(t, var))?);
        }
        let idx = self
            .archived()
            .iter()
            .position(|a| a.owns_slice(t))
            .expect("archived models tile every slice below the window");
        self.smooth_to(idx + 1)?;
        self.ensure_copy(idx);
        let tree = &self.smoothed[idx].as_ref().unwrap().tree;
        tree.query_var(SliceVar::new(t, var)).map_err(|e| match e {
            TreeError::NoContainingClique(_) | TreeError::VariableAbsent(_) => {
                SmoothError::VariableNotInSlice { t, var }
            }
            other => SmoothError::Tree(other),
        })
    }

    /// The smoothing view of model `n` (1-based): the copy if one exists,
    /// otherwise the pristine tree. The current model returns the window.
    pub fn smoothing_view(&self, n: usize) -> Option<&crate::jtree::JunctionTree> {
        let count = self.model_count();
        if n == 0 || n > count {
            return None;
        }
        if n == count {
            return Some(&self.window().tree);
        }
        Some(
            self.smoothed[n - 1]
                .as_ref()
                .map(|c| &c.tree)
                .unwrap_or(&self.archived[n - 1].tree),
        )
    }
}
