//! Experiment runner for the `editgate` acceptance gate: config loading,
//! transcripts, replay, Monte Carlo validation and reports.

pub mod commands;
pub mod experiment;
pub mod report;
pub mod transcript;
