//! Inference engine for discrete dynamic probabilistic networks.
//!
//! A dynamic model is described once (an initial time slice plus a repeating
//! transition template) and unrolled on demand. Exact inference runs in a
//! junction tree over a sliding window of recent slices; older slices are cut
//! off into archived models that can still be re-estimated by backward
//! smoothing, and slices ahead of the window can be forecast exactly, by
//! Monte-Carlo simulation, or by a fast linear approximation.
//!
//! Module map:
//! - [`model`]: variables, slice templates, CPTs, validation, unrolling.
//! - [`graph`]: moralization, vertex elimination, constrained triangulation.
//! - [`potential`]: dense table algebra over sets of discrete variables.
//! - [`jtree`]: junction-tree construction, propagation, calibration, queries.
//! - [`window`]: the sliding-window engine (model expansion and reduction).
//! - [`smooth`]: backward smoothing across archived models.
//! - [`forecast`]: exact, Monte-Carlo, and linear forecasting.
//! - [`series_io`]: binary persistence for a whole model series.

pub mod forecast;
pub mod graph;
pub mod jtree;
pub mod model;
pub mod potential;
pub mod series_io;
pub mod smooth;
pub mod window;

pub use model::{Cpt, DpnModel, Evidence, Finding, SliceSpec, SliceVar, TransitionSpec, VarId, Variable};
pub use potential::PotentialTable;
pub use window::ModelSeries;
