//! Std-side companion to `occlugrid-core`: file formats, data
//! acquisition, the training loop, evaluation reports, rendering, and
//! the command-line interface.
//!
//! Everything here is driven by one JSON [`config::RunConfig`]; the
//! numeric substance (scenes, models, losses, metrics) lives in the
//! core crate and stays free of IO.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod data;
pub mod dataset;
pub mod errors;
pub mod evaluate;
pub mod ingest;
pub mod model;
pub mod render;
pub mod train;
