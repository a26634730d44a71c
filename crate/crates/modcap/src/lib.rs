//! File formats, reports and command-line plumbing around `modcap-core`.
//!
//! * [`schema`]: instance JSON files with catalog cases,
//! * [`report`]: plan and metrics JSON, summaries, outcome and frontier CSV,
//! * [`mps`]: fixed-format MPS export,
//! * [`svg`]: frontier charts,
//! * [`clock`] and [`parallel`]: wall-clock limits and a scoped worker pool,
//! * [`cli`]: the `modcap` commands.

pub mod cli;
pub mod clock;
pub mod mps;
pub mod parallel;
pub mod report;
pub mod schema;
pub mod svg;
