//! Experiment drivers for the two-phase MHD solver: configuration files,
//! CSV diagnostics and VTK field dumps.

pub mod commands;
pub mod config;
pub mod output;
