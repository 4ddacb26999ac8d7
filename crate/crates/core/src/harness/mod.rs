//! Experiment orchestration: configuration, BER points, penalty extraction,
//! grid sweeps and CSV reports.

pub mod config;
pub mod penalty;
pub mod pipeline;
pub mod report;
pub mod sweep;
