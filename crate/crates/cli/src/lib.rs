//! Experiment driver for total HSIC sensitivity studies: JSON configs,
//! study runners and reproducible CSV/JSON outputs.

pub mod audit;
pub mod config;
pub mod output;
pub mod studies;
