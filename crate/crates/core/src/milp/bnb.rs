use alloc::collections::BinaryHeap;
use alloc::vec::Vec;
use core::cmp::Ordering;

use super::simplex::{LpData, LpStatus, Simplex};
use super::{Clock, MilpModel, MilpSettings, NoClock, ObjectiveSense, Solution, SolveStatus, SolverError};
use crate::math;

/// Nodes between diving runs; the root always dives.
const DIVE_EVERY: u64 = 100;

/// Snapshot taken after a branch-and-bound node has been processed. Values
/// are in the model's objective sense.
#[derive(Debug, Clone, PartialEq)]
pub struct BnbEvent {
    pub node: u64,
    pub depth: u32,
    /// LP value at the node, `None` when the relaxation was infeasible.
    pub lp_objective: Option<f64>,
    pub incumbent: Option<f64>,
    /// Best bound over all open nodes at the time the node was selected.
    pub global_bound: f64,
}

#[derive(Debug)]
struct Node {
    /// Parent LP value, maximization sense.
    bound: f64,
    seq: u64,
    depth: u32,
    changes: Vec<(usize, f64, f64)>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        self.bound.total_cmp(&other.bound).then_with(|| other.seq.cmp(&self.seq))
    }
}

pub fn solve_milp(model: &MilpModel, settings: &MilpSettings) -> Result<Solution, SolverError> {
    solve_milp_with(model, settings, &NoClock, None)
}

/// Branch-and-bound with an external clock and an optional starting point.
/// The integer part of `start` is fixed and solved first; if it is feasible it
/// becomes the first incumbent.
pub fn solve_milp_with(
    model: &MilpModel,
    settings: &MilpSettings,
    clock: &dyn Clock,
    start: Option<&[f64]>,
) -> Result<Solution, SolverError> {
    model.check()?;
    let sign = match model.sense {
        ObjectiveSense::Maximize => 1.0,
        ObjectiveSense::Minimize => -1.0,
    };
    let data = LpData::from_model(model, true, settings.int_tol, settings.feas_tol);
    let mut out = Solution {
        status: SolveStatus::Infeasible,
        values: Vec::new(),
        objective: f64::NAN,
        bound: f64::NAN,
        relative_gap: f64::NAN,
        nodes: 0,
        simplex_iterations: 0,
        events: Vec::new(),
    };
    if data.infeasible {
        return Ok(out);
    }
    let n = data.n;
    let integer: Vec<usize> = (0..n).filter(|&j| model.variables[j].integer).collect();
    let mut tab = Simplex::new(&data, settings.feas_tol);
    let scale = data.cost_scale;

    let root = tab.solve_primal()?;
    match root {
        LpStatus::Infeasible => {
            out.simplex_iterations = tab.iterations;
            return Ok(out);
        }
        LpStatus::Unbounded => {
            out.status = SolveStatus::Unbounded;
            out.simplex_iterations = tab.iterations;
            return Ok(out);
        }
        LpStatus::Optimal => {}
    }

    let gap_of = |bound: f64, inc: f64| (bound - inc) / inc.abs().max(1.0);
    let mut incumbent: Option<(Vec<f64>, f64)> = None;
    let mut applied: Vec<usize> = Vec::new();
    let apply = |tab: &mut Simplex, applied: &mut Vec<usize>, changes: &[(usize, f64, f64)]| -> bool {
        for &j in applied.iter() {
            tab.set_bounds(j, data.col_lo[j], data.col_hi[j]);
        }
        applied.clear();
        let mut ok = true;
        for &(j, l, h) in changes {
            let (cl, ch) = tab.bounds(j);
            let (nl, nh) = (cl.max(l), ch.min(h));
            if nl > nh {
                ok = false;
            }
            tab.set_bounds(j, nl, nh.max(nl));
            applied.push(j);
        }
        ok
    };
    let accept = |tab: &Simplex, incumbent: &mut Option<(Vec<f64>, f64)>| {
        let mut values = tab.values();
        for &j in &integer {
            values[j] = math::round(values[j]);
        }
        let z = sign * model.objective_value(&values);
        if incumbent.as_ref().is_none_or(|(_, best)| z > *best) {
            *incumbent = Some((values, z));
        }
    };
    let priority: Vec<u8> = model.variables.iter().map(|v| v.priority).collect();
    // Most fractional variable of the highest priority class.
    let branch_var = |tab: &Simplex| -> Option<usize> {
        let mut best: Option<(u8, f64, usize)> = None;
        for &j in &integer {
            let dist = math::frac_dist(tab.value(j));
            if dist > settings.int_tol && best.is_none_or(|(p, d, _)| (priority[j], dist) > (p, d)) {
                best = Some((priority[j], dist, j));
            }
        }
        best.map(|(_, _, j)| j)
    };

    // Fractional diving: repeatedly fix the integer variable closest to
    // integrality within the highest priority class and re-solve, trying the
    // other rounding once on failure.
    let dive = |tab: &mut Simplex,
                applied: &mut Vec<usize>,
                base: &[(usize, f64, f64)],
                incumbent: &mut Option<(Vec<f64>, f64)>|
     -> bool {
        let mut changes = base.to_vec();
        for _ in 0..=integer.len() {
            let z = tab.objective() * scale;
            if incumbent.as_ref().is_some_and(|(_, inc)| gap_of(z, *inc) <= settings.gap_tol) {
                return false;
            }
            let mut pick: Option<(u8, f64, usize)> = None;
            for &j in &integer {
                let dist = math::frac_dist(tab.value(j));
                if dist > settings.int_tol && pick.is_none_or(|(p, d, _)| priority[j] > p || (priority[j] == p && dist < d)) {
                    pick = Some((priority[j], dist, j));
                }
            }
            let Some((_, _, j)) = pick else {
                accept(tab, incumbent);
                return true;
            };
            let v = tab.value(j);
            let near = math::round(v);
            let far = if near > v { math::floor(v) } else { math::ceil(v) };
            let mut solved = false;
            for r in [near, far] {
                changes.push((j, r, r));
                if apply(tab, applied, &changes) && matches!(tab.reoptimize(), Ok(LpStatus::Optimal)) {
                    solved = true;
                    break;
                }
                changes.pop();
            }
            if !solved {
                return false;
            }
        }
        false
    };

    // Trivial heuristic: every integer variable at its lower bound.
    let lower: Vec<(usize, f64, f64)> = integer
        .iter()
        .filter(|&&j| data.col_lo[j].is_finite())
        .map(|&j| (j, data.col_lo[j], data.col_lo[j]))
        .collect();
    if apply(&mut tab, &mut applied, &lower)
        && matches!(tab.reoptimize(), Ok(LpStatus::Optimal))
        && branch_var(&tab).is_none()
    {
        accept(&tab, &mut incumbent);
    }

    if let Some(start) = start {
        let fix: Vec<(usize, f64, f64)> = integer
            .iter()
            .filter(|&&j| j < start.len())
            .map(|&j| {
                let v = math::round(start[j]);
                (j, v, v)
            })
            .collect();
        if apply(&mut tab, &mut applied, &fix) && tab.reoptimize()? == LpStatus::Optimal && branch_var(&tab).is_none() {
            accept(&tab, &mut incumbent);
        }
    }

    let mut heap = BinaryHeap::new();
    heap.push(Node { bound: f64::INFINITY, seq: 0, depth: 0, changes: Vec::new() });
    let mut seq = 1u64;
    let mut nodes = 0u64;
    let mut stopped: Option<(SolveStatus, f64)> = None;

    // Best-first search that plunges into one child of every branched node.
    let mut next: Option<Node> = None;
    while let Some(node) = next.take().or_else(|| heap.pop()) {
        let global = heap.peek().map_or(node.bound, |top| top.bound.max(node.bound));
        if let Some((_, inc)) = &incumbent {
            if gap_of(global, *inc) <= 1e-9 {
                break;
            }
            if gap_of(global, *inc) <= settings.gap_tol {
                stopped = Some((SolveStatus::GapLimit, global));
                break;
            }
            if gap_of(node.bound, *inc) <= 1e-9 {
                continue;
            }
        }
        let out_of_time = settings.time_limit.is_some_and(|t| clock.elapsed_secs() >= t);
        let out_of_nodes = settings.node_limit.is_some_and(|l| nodes >= l);
        if out_of_time || out_of_nodes {
            stopped = Some((SolveStatus::TimeLimit, global));
            break;
        }

        nodes += 1;
        let mut lp_value = None;
        if apply(&mut tab, &mut applied, &node.changes) {
            match tab.reoptimize()? {
                LpStatus::Infeasible => {}
                LpStatus::Unbounded => {
                    out.status = SolveStatus::Unbounded;
                    out.nodes = nodes;
                    out.simplex_iterations = tab.iterations;
                    return Ok(out);
                }
                LpStatus::Optimal => {
                    let z = tab.objective() * scale;
                    lp_value = Some(z);
                    let dominated = incumbent.as_ref().is_some_and(|(_, inc)| gap_of(z, *inc) <= 1e-9);
                    if !dominated {
                        match branch_var(&tab) {
                            None => accept(&tab, &mut incumbent),
                            Some(j) => {
                                let v = tab.value(j);
                                let (lo, hi) = tab.bounds(j);
                                if nodes % DIVE_EVERY == 1 {
                                    dive(&mut tab, &mut applied, &node.changes, &mut incumbent);
                                }
                                let down_first = v - math::floor(v) < 0.5;
                                for (k, (l, h)) in [(lo, math::floor(v)), (math::ceil(v), hi)].into_iter().enumerate() {
                                    let mut changes = node.changes.clone();
                                    changes.push((j, l, h));
                                    let child = Node { bound: z.min(node.bound), seq, depth: node.depth + 1, changes };
                                    seq += 1;
                                    if (k == 0) == down_first {
                                        next = Some(child);
                                    } else {
                                        heap.push(child);
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        if settings.record_events {
            out.events.push(BnbEvent {
                node: nodes,
                depth: node.depth,
                lp_objective: lp_value.map(|z| sign * z),
                incumbent: incumbent.as_ref().map(|(_, z)| sign * z),
                global_bound: sign * global,
            });
        }
    }

    out.nodes = nodes;
    out.simplex_iterations = tab.iterations;
    let Some((values, z)) = incumbent else {
        if let Some((status, bound)) = stopped {
            out.status = status;
            out.bound = sign * bound;
        }
        return Ok(out);
    };
    let (status, bound) = stopped.unwrap_or((SolveStatus::Optimal, z));
    let bound = bound.max(z);
    out.status = status;
    out.objective = model.objective_value(&values);
    out.values = values;
    out.bound = sign * bound;
    out.relative_gap = gap_of(bound, z).max(0.0);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::RowSense;

    #[test]
    fn small_knapsack() {
        // max 5a + 4b + 3c, 2a + 3b + c <= 5, 4a + b + 2c <= 11, 3a + 4b + 2c <= 8
        let mut m = MilpModel::new(ObjectiveSense::Maximize);
        let v: Vec<_> = ["a", "b", "c"].iter().map(|n| m.add_integer(*n, 0.0, 10.0)).collect();
        for (x, c) in v.iter().zip([5.0, 4.0, 3.0]) {
            m.set_objective(*x, c);
        }
        m.add_constraint("r1", v.iter().copied().zip([2.0, 3.0, 1.0]), RowSense::Le, 5.0);
        m.add_constraint("r2", v.iter().copied().zip([4.0, 1.0, 2.0]), RowSense::Le, 11.0);
        m.add_constraint("r3", v.iter().copied().zip([3.0, 4.0, 2.0]), RowSense::Le, 8.0);
        let s = solve_milp(&m, &MilpSettings::exact()).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.objective - 13.0).abs() < 1e-9, "{}", s.objective);
    }

    #[test]
    fn integer_infeasible_but_lp_feasible() {
        // 2x = 1 has no integer solution.
        let mut m = MilpModel::new(ObjectiveSense::Maximize);
        let x = m.add_integer("x", 0.0, 5.0);
        let y = m.add_continuous("y", 0.0, 0.0);
        m.add_constraint("half", [(x, 2.0), (y, 1.0)], RowSense::Eq, 1.0);
        let s = solve_milp(&m, &MilpSettings::exact()).unwrap();
        assert_eq!(s.status, SolveStatus::Infeasible);
        assert!(s.incumbent().is_err());
    }

    #[test]
    fn node_limit_without_incumbent() {
        let mut m = MilpModel::new(ObjectiveSense::Maximize);
        let x = m.add_integer("x", 0.0, 5.0);
        let y = m.add_integer("y", 0.0, 5.0);
        m.set_objective(x, 1.0);
        m.add_constraint("odd", [(x, 2.0), (y, 2.0)], RowSense::Eq, 5.0);
        let settings = MilpSettings { node_limit: Some(1), ..MilpSettings::exact() };
        let s = solve_milp(&m, &settings).unwrap();
        assert_eq!(s.status, SolveStatus::TimeLimit);
        assert_eq!(s.incumbent(), Err(SolverError::NoIncumbentFound));
    }

    #[test]
    fn minimization_sense() {
        // min 3a + 2b s.t. a + b >= 4.5, a, b integer -> 10 at (0, 5)
        let mut m = MilpModel::new(ObjectiveSense::Minimize);
        let a = m.add_integer("a", 0.0, 10.0);
        let b = m.add_integer("b", 0.0, 10.0);
        m.set_objective(a, 3.0);
        m.set_objective(b, 2.0);
        m.add_constraint("cover", [(a, 1.0), (b, 1.0)], RowSense::Ge, 4.5);
        let s = solve_milp(&m, &MilpSettings::exact()).unwrap();
        assert!((s.objective - 10.0).abs() < 1e-9);
        assert!(s.bound <= s.objective + 1e-9);
    }

    #[test]
    fn start_point_becomes_incumbent() {
        let mut m = MilpModel::new(ObjectiveSense::Maximize);
        let a = m.add_integer("a", 0.0, 3.0);
        let b = m.add_integer("b", 0.0, 3.0);
        m.set_objective(a, 3.0);
        m.set_objective(b, 2.0);
        m.add_constraint("c", [(a, 2.0), (b, 2.0)], RowSense::Le, 7.0);
        let settings = MilpSettings { record_events: true, ..MilpSettings::exact() };
        let s = solve_milp_with(&m, &settings, &NoClock, Some(&[1.0, 1.0])).unwrap();
        assert!(s.events[0].incumbent.is_some());
        assert!((s.objective - 9.0).abs() < 1e-9, "{}", s.objective);
    }
}
