//! Config-driven experiment runner for the `hwrel` workbench.
//!
//! A run reads a TOML [`config::ExperimentConfig`], derives every seed
//! from the master seed, writes CSVs (and SVG charts) into a fresh
//! directory and records a [`runner::RunManifest`] that can re-create it.

pub mod config;
pub mod report;
pub mod runner;
pub mod svg;
