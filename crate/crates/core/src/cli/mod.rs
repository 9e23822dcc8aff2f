//! Experiment layer: configs, records, dispatch and plot export.

pub mod config;
pub mod plot;
pub mod records;
pub mod runner;
