//! File formats, reports, and command implementations for the metatte
//! travel-time estimator. The algorithms live in `metatte-core`; this
//! crate owns everything that touches the filesystem.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod container;
pub mod history;
pub mod pipeline;
pub mod report;
pub mod synthio;
pub mod taskset;
