//! Mixed-integer linear programming.
//!
//! [`MilpModel`] is a plain container of bounded variables and linear rows.
//! [`solve_lp`] ignores integrality and runs a bounded-variable revised primal
//! simplex; [`solve_milp`] runs best-first branch-and-bound on top of it,
//! re-optimizing every node from the shared basis with the dual simplex.

mod bnb;
mod lu;
mod model;
mod simplex;

pub use bnb::{solve_milp, solve_milp_with, BnbEvent};
pub use model::{Constraint, MilpModel, ModelError, ObjectiveSense, RowSense, VarId, Variable};
pub use simplex::solve_lp;

use alloc::vec::Vec;
use thiserror::Error;

/// Default relative MIP gap (0.01%).
pub const DEFAULT_GAP: f64 = 1e-4;
pub const DEFAULT_INT_TOL: f64 = 1e-6;
pub const DEFAULT_FEAS_TOL: f64 = 1e-7;

/// Source of elapsed time for time limits. `core` has no clock, so callers
/// that want wall-clock limits supply one.
pub trait Clock {
    /// Seconds elapsed since the solve started.
    fn elapsed_secs(&self) -> f64;
}

/// A clock that never advances; time limits never trigger.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoClock;

impl Clock for NoClock {
    fn elapsed_secs(&self) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MilpSettings {
    /// Relative gap `(bound - incumbent) / max(1, |incumbent|)` at which the
    /// search stops.
    pub gap_tol: f64,
    pub int_tol: f64,
    pub feas_tol: f64,
    /// Seconds, measured by the [`Clock`] passed to [`solve_milp_with`].
    pub time_limit: Option<f64>,
    /// Maximum number of branch-and-bound nodes; reaching it reports
    /// [`SolveStatus::TimeLimit`].
    pub node_limit: Option<u64>,
    /// Record a [`BnbEvent`] after every node.
    pub record_events: bool,
}

impl Default for MilpSettings {
    fn default() -> Self {
        MilpSettings {
            gap_tol: DEFAULT_GAP,
            int_tol: DEFAULT_INT_TOL,
            feas_tol: DEFAULT_FEAS_TOL,
            time_limit: None,
            node_limit: None,
            record_events: false,
        }
    }
}

impl MilpSettings {
    pub fn exact() -> Self {
        MilpSettings { gap_tol: 1e-9, ..Self::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SolveStatus {
    /// Search finished; the incumbent is optimal up to the gap tolerance.
    Optimal,
    Infeasible,
    Unbounded,
    /// Stopped with open nodes because the gap fell below the tolerance.
    GapLimit,
    /// Stopped by the time or node limit.
    TimeLimit,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Unbounded => "unbounded",
            SolveStatus::GapLimit => "gap_limit",
            SolveStatus::TimeLimit => "time_limit",
        }
    }

    /// Optimal or within the gap tolerance.
    pub fn is_solved(self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::GapLimit)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub status: SolveStatus,
    /// One value per model variable; empty when no feasible point is known.
    pub values: Vec<f64>,
    /// Objective of `values` in the model's own sense.
    pub objective: f64,
    /// Best proven bound in the model's sense (upper for max, lower for min).
    pub bound: f64,
    pub relative_gap: f64,
    pub nodes: u64,
    pub simplex_iterations: u64,
    pub events: Vec<BnbEvent>,
}

impl Solution {
    pub fn has_incumbent(&self) -> bool {
        !self.values.is_empty()
    }

    pub fn value(&self, v: VarId) -> f64 {
        self.values[v.0]
    }

    /// The feasible point, or [`SolverError::NoIncumbentFound`].
    pub fn incumbent(&self) -> Result<&[f64], SolverError> {
        if self.values.is_empty() {
            Err(SolverError::NoIncumbentFound)
        } else {
            Ok(&self.values)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("invalid model: {0}")]
    InvalidModel(#[from] ModelError),
    #[error("simplex made no progress within {0} iterations")]
    NumericalFailure(u64),
    #[error("no feasible point found before the limit")]
    NoIncumbentFound,
}
