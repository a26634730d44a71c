//! Epsilon-constraint sweeps over the expected NPV / risk trade-off.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use thiserror::Error;

use crate::formulation::{build_stochastic_with, extract_plan, BuildOptions, FormulationError, InvestmentPlan, ObjectiveMode, TargetSense};
use crate::instance::Instance;
use crate::milp::{solve_milp_with, Clock, MilpSettings, SolveStatus, SolverError};

/// Relative tolerance of all dominance comparisons.
pub const DOMINANCE_TOL: f64 = 1e-6;

/// Number of grid points used when none is given.
pub const DEFAULT_GRID_POINTS: usize = 20;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParetoError {
    #[error("the epsilon grid is empty or unsorted")]
    BadGrid,
    #[error("no grid point admits a feasible solution")]
    AllPointsInfeasible,
    #[error(transparent)]
    Formulation(#[from] FormulationError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// Which objective is swept.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepDirection {
    /// Minimize `R` with `E` bounded by epsilon.
    MinimizeRisk(TargetSense),
    /// Maximize `E` with `R <= epsilon`.
    MaximizeExpected,
}

impl SweepDirection {
    pub fn mode(self, epsilon: f64) -> ObjectiveMode {
        match self {
            SweepDirection::MinimizeRisk(sense) => ObjectiveMode::MinimizeRisk { target: epsilon, sense },
            SweepDirection::MaximizeExpected => ObjectiveMode::MaximizeExpectedRiskCapped { risk_cap: epsilon },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PointStatus {
    /// The solver returned an incumbent with this status.
    Solved(SolveStatus),
    /// No incumbent: infeasible, or a limit hit before one was found.
    NoSolution(SolveStatus),
    Failed(String),
}

impl PointStatus {
    pub fn label(&self) -> &str {
        match self {
            PointStatus::Solved(s) => s.as_str(),
            PointStatus::NoSolution(SolveStatus::Infeasible) => "infeasible",
            PointStatus::NoSolution(SolveStatus::Unbounded) => "unbounded",
            PointStatus::NoSolution(_) => "no_incumbent",
            PointStatus::Failed(_) => "failed",
        }
    }

    /// Optimal up to the gap tolerance; only such points enter dominance.
    pub fn is_usable(&self) -> bool {
        matches!(self, PointStatus::Solved(s) if s.is_solved())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParetoPoint {
    pub epsilon: f64,
    /// NaN when there is no plan.
    pub expected: f64,
    pub risk: f64,
    pub plan: Option<InvestmentPlan>,
    pub status: PointStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParetoFrontier {
    pub case_label: String,
    /// Usable, mutually non-dominated points sorted by `E`.
    pub points: Vec<ParetoPoint>,
    /// Every solved grid point in grid order, including failures.
    pub raw: Vec<ParetoPoint>,
}

fn tol(a: f64, b: f64) -> f64 {
    DOMINANCE_TOL * a.abs().max(b.abs()).max(1.0)
}

/// `(e1, r1)` is at least as good as `(e2, r2)` in both objectives.
pub fn weakly_dominates(e1: f64, r1: f64, e2: f64, r2: f64) -> bool {
    e1 >= e2 - tol(e1, e2) && r1 <= r2 + tol(r1, r2)
}

/// Weak dominance with at least one objective strictly better.
pub fn strictly_dominates(e1: f64, r1: f64, e2: f64, r2: f64) -> bool {
    weakly_dominates(e1, r1, e2, r2) && (e1 > e2 + tol(e1, e2) || r1 < r2 - tol(r1, r2))
}

/// Solves one grid point.
pub fn solve_point(
    instance: &Instance,
    direction: SweepDirection,
    epsilon: f64,
    options: &BuildOptions,
    settings: &MilpSettings,
    clock: &dyn Clock,
) -> Result<ParetoPoint, FormulationError> {
    let (model, atlas) = build_stochastic_with(instance, direction.mode(epsilon), options)?;
    let mut point = ParetoPoint { epsilon, expected: f64::NAN, risk: f64::NAN, plan: None, status: PointStatus::Failed(String::new()) };
    match solve_milp_with(&model, settings, clock, None) {
        Err(e) => point.status = PointStatus::Failed(e.to_string()),
        Ok(sol) if !sol.has_incumbent() => point.status = PointStatus::NoSolution(sol.status),
        Ok(sol) => {
            let plan = extract_plan(instance, &atlas, &sol)?;
            point.expected = plan.expected;
            point.risk = plan.risk;
            point.plan = Some(plan);
            point.status = PointStatus::Solved(sol.status);
        }
    }
    Ok(point)
}

/// Drops unusable and dominated points and sorts the rest by `E`, then `R`.
/// Among points equal within tolerance the earliest is kept.
pub fn prune(points: &[ParetoPoint]) -> Vec<ParetoPoint> {
    let usable: Vec<&ParetoPoint> = points.iter().filter(|p| p.status.is_usable()).collect();
    let mut kept: Vec<ParetoPoint> = Vec::new();
    for (a_idx, a) in usable.iter().enumerate() {
        let dominated = usable.iter().enumerate().any(|(b_idx, b)| {
            b_idx != a_idx
                && (strictly_dominates(b.expected, b.risk, a.expected, a.risk)
                    || (b_idx < a_idx && weakly_dominates(b.expected, b.risk, a.expected, a.risk)
                        && weakly_dominates(a.expected, a.risk, b.expected, b.risk)))
        });
        if !dominated {
            kept.push((*a).clone());
        }
    }
    kept.sort_by(|a, b| a.expected.total_cmp(&b.expected).then(a.risk.total_cmp(&b.risk)));
    kept
}

/// Builds a frontier from solved grid points.
pub fn assemble(case_label: impl Into<String>, raw: Vec<ParetoPoint>) -> Result<ParetoFrontier, ParetoError> {
    let points = prune(&raw);
    if points.is_empty() {
        return Err(ParetoError::AllPointsInfeasible);
    }
    Ok(ParetoFrontier { case_label: case_label.into(), points, raw })
}

/// One solve per epsilon in `grid` (which must be nonempty and sorted).
pub fn sweep(
    instance: &Instance,
    direction: SweepDirection,
    grid: &[f64],
    case_label: &str,
    options: &BuildOptions,
    settings: &MilpSettings,
    clock: &dyn Clock,
) -> Result<ParetoFrontier, ParetoError> {
    check_grid(grid)?;
    let mut raw = Vec::with_capacity(grid.len());
    for &eps in grid {
        raw.push(solve_point(instance, direction, eps, options, settings, clock)?);
    }
    assemble(case_label, raw)
}

pub fn check_grid(grid: &[f64]) -> Result<(), ParetoError> {
    if grid.is_empty() || grid.iter().any(|e| !e.is_finite()) || grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(ParetoError::BadGrid);
    }
    Ok(())
}

/// `n` evenly spaced values from `lo` to `hi` inclusive.
pub fn uniform_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => alloc::vec![lo],
        _ => (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect(),
    }
}

/// The two ends of the trade-off: the least risky plan (highest `E` among
/// those of minimum `R`) and the plan of maximum `E`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontierEnds {
    pub min_risk: InvestmentPlan,
    pub max_expected: InvestmentPlan,
}

pub fn frontier_ends(
    instance: &Instance,
    options: &BuildOptions,
    settings: &MilpSettings,
    clock: &dyn Clock,
) -> Result<FrontierEnds, ParetoError> {
    let solve = |mode: ObjectiveMode| -> Result<Option<InvestmentPlan>, ParetoError> {
        let (m, atlas) = build_stochastic_with(instance, mode, options)?;
        let sol = solve_milp_with(&m, settings, clock, None)?;
        if !sol.has_incumbent() {
            return Ok(None);
        }
        Ok(Some(extract_plan(instance, &atlas, &sol)?))
    };
    let unconstrained = ObjectiveMode::MinimizeRisk { target: f64::NEG_INFINITY, sense: TargetSense::AtLeast };
    let least = solve(unconstrained)?.ok_or(ParetoError::AllPointsInfeasible)?;
    let cap = least.risk + tol(least.risk, 0.0);
    let min_risk = solve(ObjectiveMode::MaximizeExpectedRiskCapped { risk_cap: cap })?.unwrap_or(least);
    let max_expected = solve(ObjectiveMode::MaximizeExpected)?.ok_or(ParetoError::AllPointsInfeasible)?;
    Ok(FrontierEnds { min_risk, max_expected })
}

/// Default grid: `n` points between the two frontier ends, in `E` for
/// [`SweepDirection::MinimizeRisk`] and in `R` otherwise.
pub fn default_grid(ends: &FrontierEnds, direction: SweepDirection, n: usize) -> Vec<f64> {
    match direction {
        SweepDirection::MinimizeRisk(_) => uniform_grid(ends.min_risk.expected, ends.max_expected.expected, n),
        SweepDirection::MaximizeExpected => uniform_grid(ends.min_risk.risk, ends.max_expected.risk, n),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointDominance {
    pub expected: f64,
    pub risk: f64,
    /// Index into the other frontier's points of a weakly dominating point.
    pub weakly_dominated_by: Option<usize>,
    pub strictly_dominated_by: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DominanceReport {
    /// One entry per point of the first frontier.
    pub points: Vec<PointDominance>,
    /// Every point of the first frontier is weakly dominated by the second
    /// and at least one strictly.
    pub second_dominates_first: bool,
}

/// Checks how well frontier `b` covers frontier `a`.
pub fn dominance_report(a: &ParetoFrontier, b: &ParetoFrontier) -> DominanceReport {
    let points: Vec<PointDominance> = a
        .points
        .iter()
        .map(|pa| {
            let weak = b.points.iter().position(|pb| weakly_dominates(pb.expected, pb.risk, pa.expected, pa.risk));
            let strict = b.points.iter().position(|pb| strictly_dominates(pb.expected, pb.risk, pa.expected, pa.risk));
            PointDominance { expected: pa.expected, risk: pa.risk, weakly_dominated_by: weak, strictly_dominated_by: strict }
        })
        .collect();
    let second_dominates_first = !points.is_empty()
        && points.iter().all(|p| p.weakly_dominated_by.is_some())
        && points.iter().any(|p| p.strictly_dominated_by.is_some());
    DominanceReport { points, second_dominates_first }
}
