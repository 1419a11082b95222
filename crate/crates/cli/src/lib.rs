//! Pipeline runner for the relgen dataset builder: configuration, resumable
//! stages over a run directory, and the run report.

pub mod config;
pub mod fixture;
pub mod manifest;
pub mod pipeline;
pub mod report;
