//! Files and drivers around `orbopt-core`: FCIDUMP integrals, fixture
//! metadata, experiment configuration, checkpoints and reports.

pub mod checkpoint;
pub mod config;
pub mod fcidump;
pub mod fixture;
pub mod report;
pub mod runner;
