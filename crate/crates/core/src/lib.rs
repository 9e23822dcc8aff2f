//! First-passage percolation laboratory.
//!
//! Passage times, geodesics and pivotal edges on Z^d under i.i.d. edge
//! weights, exact entropy checks on tiny enumerable systems, and Monte Carlo
//! estimators for the time constant, fluctuations and limit-shape deviations.

pub mod cli;
pub mod entropy;
pub mod estimators;
pub mod graph;
pub mod lattice;
pub mod passage;
pub mod stats;
pub mod weights;
