//! Multi-stage stochastic capacity expansion planning on scenario trees.
//!
//! The crate is `no_std` (it needs `alloc`) and contains everything that is
//! pure computation:
//!
//! * [`tree`]: scenario trees with joint node probabilities,
//! * [`instance`]: products, technology catalogs, prices and demands,
//! * [`milp`]: a bounded-variable simplex and a branch-and-bound MILP engine,
//! * [`formulation`]: the deterministic and stochastic expansion models,
//! * [`pareto`]: epsilon-constraint sweeps and frontier dominance,
//! * [`analysis`]: enumeration oracle, outcome statistics, horizon search.
//!
//! File formats, wall-clock time limits, threads and the command line live in
//! the `modcap` companion crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod analysis;
pub mod formulation;
pub mod instance;
mod math;
pub mod milp;
pub mod pareto;
pub mod tree;

pub use formulation::{InvestmentPlan, ObjectiveMode, TargetSense, VariableAtlas};
pub use instance::{Instance, ProductSpec, TechnologyOption};
pub use milp::{MilpModel, MilpSettings, Solution, SolveStatus};
pub use tree::{NodeId, ScenarioTree};
