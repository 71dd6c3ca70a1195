//! Experiment drivers, configuration files and mesh/rod output for
//! `memrod-core`.

pub mod config;
pub mod drivers;
pub mod io;
pub mod presets;

pub use memrod_core as core;
