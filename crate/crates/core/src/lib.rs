//! Schedule planning for diffusion samplers from a per-timestep
//! reconstruction-error profile.
//!
//! A profile `C(t)` on a time grid is turned into a shortest-path problem
//! whose edge weights are `((t - k) / t)^2 * C(t)`. The [`planner`] solves it
//! for a fixed budget, without a budget, or with an adaptive budget chosen by
//! the explained gain ratio; [`oracle`] brute-forces the same problem on small
//! grids; [`flow_sim`] provides a linear-flow world where the cost model is
//! exact; [`predictor`] regresses profiles from condition embeddings; and
//! [`diagnostics`] labels a profile's step-wise gain.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod diagnostics;
pub mod dna;
pub mod error;
pub mod flow_sim;
pub mod fmt;
pub mod oracle;
pub mod planner;
pub mod predictor;

pub use dna::{resample, temporal_lever, transition_cost, DnaProfile, TimeGrid};
pub use error::{Error, Result};
pub use planner::{
    build_graph, path_cost, plan_adaptive, plan_fixed, plan_unconstrained, restrict_nodes, PlannerGraph,
    Schedule,
};
