//! Road network modelling toolkit.
//!
//! The crate covers the batch pipeline from tabular map extracts to traffic
//! results: building and simplifying a directed road multigraph, deriving
//! volume-delay coefficients, linking zone demand to network nodes, solving
//! static user equilibrium with Frank-Wolfe, and running a discrete-time
//! per-vehicle microsimulation with fuel and CO accounting.

pub mod assign;
pub mod attrs;
pub mod demand;
pub mod graph;
pub mod microsim;
pub mod pipeline;
pub mod report;
pub mod units;

pub(crate) mod csr;
