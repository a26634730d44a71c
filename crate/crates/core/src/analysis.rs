//! Reference computations: an exhaustive oracle for tiny instances, outcome
//! statistics and the profitability horizon.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::formulation::{
    build_stochastic_with, extract_plan, fix_installs, BuildOptions, FormulationError, Installs, InvestmentPlan,
    ObjectiveMode, TargetSense,
};
use crate::instance::{discount, Instance};
use crate::math;
use crate::milp::{solve_milp_with, Clock, MilpSettings, NoClock, SolveStatus, SolverError};
use crate::tree::NodeId;

/// Largest number of installation assignments the oracle will visit.
pub const ENUMERATION_LIMIT: u128 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("enumeration needs {0} assignments, more than the limit of 10^7")]
    EnumerationTooLarge(u128),
    #[error("no outcomes to summarize")]
    EmptyOutcomes,
    #[error("outcome probabilities sum to {0}, not 1")]
    ProbabilitySum(f64),
    #[error("solve ended with status {0:?}")]
    NotSolved(SolveStatus),
    #[error(transparent)]
    Formulation(#[from] FormulationError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// Best plan found by [`brute_force_solve`].
#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    /// Expected NPV of the best plan.
    pub objective: f64,
    pub plan: InvestmentPlan,
    /// Installation assignments visited.
    pub evaluated: u64,
}

/// Per-variable caps on `u`: the given table, or the capacity-limit caps.
fn resolve_caps(instance: &Instance, u_bounds: Option<&Installs>) -> Installs {
    match u_bounds {
        Some(b) => b.clone(),
        None => {
            let nd = instance.tree.decision_nodes().len();
            (0..nd)
                .map(|_| instance.products.iter().map(|p| (0..p.catalog.len()).map(|k| p.unit_cap(k)).collect()).collect())
                .collect()
        }
    }
}

/// Number of installation assignments the oracle would enumerate.
pub fn enumeration_size(instance: &Instance, u_bounds: Option<&Installs>) -> u128 {
    resolve_caps(instance, u_bounds)
        .iter()
        .flatten()
        .flatten()
        .fold(1u128, |acc, &c| acc.saturating_mul(c as u128 + 1))
}

/// Exact maximum of the expected NPV by enumerating every installation
/// assignment; storage and waste are optimized exactly per assignment by
/// dynamic programming over the integer storage level of each product.
///
/// Returns `None` when no assignment is feasible. Ties are broken towards
/// the lexicographically smallest assignment (node-major, then product, then
/// catalog entry), so the result does not depend on how the work is split.
pub fn brute_force_solve(
    instance: &Instance,
    u_bounds: Option<&Installs>,
) -> Result<Option<OracleResult>, AnalysisError> {
    brute_force_partition(instance, u_bounds, 0, 1)
}

/// The share of [`brute_force_solve`] whose first installation variable is
/// congruent to `part` modulo `parts`. Merging all parts with
/// [`merge_oracle`] gives the full result.
pub fn brute_force_partition(
    instance: &Instance,
    u_bounds: Option<&Installs>,
    part: usize,
    parts: usize,
) -> Result<Option<OracleResult>, AnalysisError> {
    let size = enumeration_size(instance, u_bounds);
    if size > ENUMERATION_LIMIT {
        return Err(AnalysisError::EnumerationTooLarge(size));
    }
    // Reject malformed instances the same way the MILP builder does.
    build_stochastic_with(instance, ObjectiveMode::MaximizeExpected, &BuildOptions::default())?;
    let caps = resolve_caps(instance, u_bounds);
    let flat_caps: Vec<u32> = caps.iter().flatten().flatten().copied().collect();
    let mut counts = vec![0u32; flat_caps.len()];
    let mut best: Option<(f64, Vec<u32>)> = None;
    let mut evaluated = 0u64;
    let mut ctx = Dp::new(instance);
    loop {
        let in_part = counts.first().map_or(part == 0, |&c| c as usize % parts == part);
        if in_part {
            evaluated += 1;
            let units = unflatten(&caps, &counts);
            if let Some(value) = ctx.best_value(&units) {
                if best.as_ref().is_none_or(|(b, _)| better(value, *b)) {
                    best = Some((value, counts.clone()));
                }
            }
        }
        if !advance(&mut counts, &flat_caps) {
            break;
        }
    }
    let Some((_, flat)) = best else { return Ok(None) };
    let units = unflatten(&caps, &flat);
    let (storage, waste) = ctx.operations(&units).expect("best assignment is feasible");
    let plan = InvestmentPlan::evaluate(instance, units, storage, waste)?;
    Ok(Some(OracleResult { objective: plan.expected, plan, evaluated }))
}

/// Combines two partial oracle results, keeping the better plan.
pub fn merge_oracle(a: Option<OracleResult>, b: Option<OracleResult>) -> Option<OracleResult> {
    match (a, b) {
        (None, x) | (x, None) => x,
        (Some(a), Some(b)) => {
            let evaluated = a.evaluated + b.evaluated;
            let mut keep = if better(b.objective, a.objective)
                || (!better(a.objective, b.objective) && flat_units(&b.plan) < flat_units(&a.plan))
            {
                b
            } else {
                a
            };
            keep.evaluated = evaluated;
            Some(keep)
        }
    }
}

fn flat_units(plan: &InvestmentPlan) -> Vec<u32> {
    plan.units.iter().flatten().flatten().copied().collect()
}

fn better(a: f64, b: f64) -> bool {
    a > b + 1e-9 * b.abs().max(1.0)
}

fn advance(counts: &mut [u32], caps: &[u32]) -> bool {
    for j in (0..counts.len()).rev() {
        if counts[j] < caps[j] {
            counts[j] += 1;
            return true;
        }
        counts[j] = 0;
    }
    false
}

fn unflatten(shape: &Installs, flat: &[u32]) -> Installs {
    let mut it = flat.iter().copied();
    shape
        .iter()
        .map(|un| un.iter().map(|ui| ui.iter().map(|_| it.next().unwrap_or(0)).collect()).collect())
        .collect()
}

/// Storage/waste optimizer for fixed installations.
struct Dp<'a> {
    instance: &'a Instance,
    /// `p_n * beta_n` per node.
    weight: Vec<f64>,
}

/// Per-product data of one assignment.
struct ProductDp {
    /// `A_n - s_par`: capacity minus consumption by other products.
    avail: Vec<f64>,
    /// Lower bound on storage from raw-material needs of the children.
    lower: Vec<f64>,
    cap: Vec<u32>,
}

impl<'a> Dp<'a> {
    fn new(instance: &'a Instance) -> Self {
        let tree = &instance.tree;
        let weight = (0..tree.num_nodes())
            .map(|n| tree.joint_prob_at(n) * discount(instance.interest_rate, tree.stage_of(n)))
            .collect();
        Dp { instance, weight }
    }

    /// Capacity, consumption and storage floors implied by `units`, or `None`
    /// when the installations alone violate a limit.
    fn prepare(&self, units: &Installs) -> Option<(Vec<ProductDp>, f64)> {
        let inst = self.instance;
        let tree = &inst.tree;
        let np = inst.num_products();
        let nn = tree.num_nodes();
        let nd = units.len();
        let mut big_x = vec![vec![0.0; np]; nn];
        let mut big_y = vec![vec![0.0; np]; nn];
        let mut install_value = 0.0;
        for n in 0..nn {
            let parent = tree.parent_index(n);
            for (i, p) in inst.products.iter().enumerate() {
                let (cap_a, cost_n) = (
                    parent.map_or(0.0, |a| {
                        p.catalog.iter().zip(&units[a][i]).map(|(t, &c)| c as f64 * t.capacity).sum::<f64>()
                    }),
                    if n < nd {
                        p.catalog.iter().zip(&units[n][i]).map(|(t, &c)| c as f64 * t.install_cost).sum::<f64>()
                    } else {
                        0.0
                    },
                );
                big_x[n][i] = parent.map_or(0.0, |a| big_x[a][i]) + cap_a;
                big_y[n][i] = parent.map_or(0.0, |a| big_y[a][i]) + cost_n;
                if big_x[n][i] > p.capacity_limit + 1e-9 {
                    return None;
                }
                install_value -= self.weight[n] * cost_n;
            }
        }
        if let Some(limit) = inst.budget_limit {
            for n in tree.leaves() {
                if big_y[n].iter().sum::<f64>() > limit + 1e-6 * limit.abs().max(1.0) {
                    return None;
                }
            }
        }
        let mut out = Vec::with_capacity(np);
        for (i, p) in inst.products.iter().enumerate() {
            let mut avail = vec![0.0; nn];
            let mut lower = vec![0.0f64; nn];
            let mut cap = vec![0u32; nn];
            for n in 0..nn {
                let consumed: f64 = (0..np).map(|i2| inst.alpha(i2, i) * big_x[n][i2]).sum();
                avail[n] = big_x[n][i] - consumed;
                if n > 0 && !tree.is_leaf(n) {
                    cap[n] = math::floor(p.storage_limit + 1e-9) as u32;
                }
            }
            // alpha(i2, i) X^i2_c <= s^i_n + X^i_c at decision children c.
            for c in 0..nd {
                for i2 in 0..np {
                    let a = inst.alpha(i2, i);
                    if a == 0.0 {
                        continue;
                    }
                    let need = a * big_x[c][i2] - big_x[c][i];
                    match tree.parent_index(c) {
                        Some(n) => lower[n] = lower[n].max(need),
                        None if need > 1e-9 => return None,
                        None => {}
                    }
                }
            }
            out.push(ProductDp { avail, lower, cap });
        }
        Some((out, install_value))
    }

    /// Best value of the subtree below `n` for every incoming storage level.
    fn solve_product(&self, i: usize, pd: &ProductDp, x: &[f64]) -> (Vec<Vec<f64>>, Vec<Vec<(u32, f64)>>) {
        let tree = &self.instance.tree;
        let nn = tree.num_nodes();
        // value[n][s_in] and choice[n][s_in] = (s_out, w)
        let mut value: Vec<Vec<f64>> = vec![Vec::new(); nn];
        let mut choice: Vec<Vec<(u32, f64)>> = vec![Vec::new(); nn];
        let p = &self.instance.products[i];
        for n in (0..nn).rev() {
            let in_cap = tree.parent_index(n).map_or(0, |a| pd.cap[a]);
            let lo = math::ceil(pd.lower[n] - 1e-9).max(0.0) as u32;
            let mut vals = vec![f64::NEG_INFINITY; in_cap as usize + 1];
            let mut ch = vec![(0u32, 0.0); in_cap as usize + 1];
            for s_in in 0..=in_cap {
                for s_out in lo..=pd.cap[n] {
                    let a = s_in as f64 + pd.avail[n] - s_out as f64;
                    let d = self.instance.demands[n][i];
                    let w = math::ceil((a - d).max(0.0) - 1e-9).max(0.0);
                    let sales = a - w;
                    if sales < -1e-9 || sales > d + 1e-9 {
                        continue;
                    }
                    let reward = self.weight[n]
                        * (p.selling_price * sales
                            - p.operating_cost * x[n]
                            - p.storage_cost * s_out as f64
                            - p.waste_cost * w);
                    let mut total = reward;
                    for c in tree.children(n) {
                        total += value[c][s_out as usize];
                    }
                    if total > vals[s_in as usize] {
                        vals[s_in as usize] = total;
                        ch[s_in as usize] = (s_out, w);
                    }
                }
            }
            value[n] = vals;
            choice[n] = ch;
        }
        (value, choice)
    }

    fn capacities(&self, units: &Installs, i: usize) -> Vec<f64> {
        let tree = &self.instance.tree;
        let p = &self.instance.products[i];
        let mut x = vec![0.0; tree.num_nodes()];
        for n in 1..tree.num_nodes() {
            let a = tree.parent_index(n).expect("non-root node has a parent");
            x[n] = x[a] + p.catalog.iter().zip(&units[a][i]).map(|(t, &c)| c as f64 * t.capacity).sum::<f64>();
        }
        x
    }

    fn best_value(&mut self, units: &Installs) -> Option<f64> {
        let (pds, mut total) = self.prepare(units)?;
        for (i, pd) in pds.iter().enumerate() {
            let x = self.capacities(units, i);
            let (value, _) = self.solve_product(i, pd, &x);
            let v = value[0][0];
            if v == f64::NEG_INFINITY {
                return None;
            }
            total += v;
        }
        Some(total)
    }

    /// Optimal storage and waste tables for `units`.
    fn operations(&mut self, units: &Installs) -> Option<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        let (pds, _) = self.prepare(units)?;
        let tree = &self.instance.tree;
        let nn = tree.num_nodes();
        let np = self.instance.num_products();
        let mut storage = vec![vec![0.0; np]; nn];
        let mut waste = vec![vec![0.0; np]; nn];
        for (i, pd) in pds.iter().enumerate() {
            let x = self.capacities(units, i);
            let (value, choice) = self.solve_product(i, pd, &x);
            if value[0][0] == f64::NEG_INFINITY {
                return None;
            }
            let mut s_in = vec![0u32; nn];
            for n in 0..nn {
                let (s_out, w) = choice[n][s_in[n] as usize];
                storage[n][i] = s_out as f64;
                waste[n][i] = w;
                for c in tree.children(n) {
                    s_in[c] = s_out;
                }
            }
        }
        Some((storage, waste))
    }
}

/// One root-to-leaf realization of a plan.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioOutcome {
    pub path: Vec<NodeId>,
    pub probability: f64,
    pub npv: f64,
    /// Waste of the chosen product at every node of the path.
    pub waste_by_stage: Vec<f64>,
}

/// Outcomes of `plan` for every leaf, with the waste of `product`.
pub fn scenario_outcomes(instance: &Instance, plan: &InvestmentPlan, product: usize) -> Vec<ScenarioOutcome> {
    let tree = &instance.tree;
    tree.leaves()
        .map(|leaf| {
            let path = tree.path_to(leaf);
            ScenarioOutcome {
                probability: tree.joint_prob_at(leaf),
                npv: plan.cumulative[leaf],
                waste_by_stage: path.iter().map(|&n| plan.waste[n][product]).collect(),
                path: path.into_iter().map(|n| tree.id(n)).collect(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutcomeStatistics {
    pub mean: f64,
    pub mean_deviation: f64,
    /// Standard deviation with the `n - 1` denominator; only defined when all
    /// outcomes are equally likely and there are at least two.
    pub sample_std: Option<f64>,
}

/// Mean, mean absolute deviation and sample standard deviation of
/// `metric` over `outcomes`.
pub fn outcome_statistics(
    outcomes: &[ScenarioOutcome],
    metric: impl Fn(&ScenarioOutcome) -> f64,
) -> Result<OutcomeStatistics, AnalysisError> {
    let values: Vec<f64> = outcomes.iter().map(&metric).collect();
    let probs: Vec<f64> = outcomes.iter().map(|o| o.probability).collect();
    weighted_statistics(&values, &probs)
}

/// [`outcome_statistics`] on plain value/probability slices.
pub fn weighted_statistics(values: &[f64], probs: &[f64]) -> Result<OutcomeStatistics, AnalysisError> {
    if values.is_empty() || values.len() != probs.len() {
        return Err(AnalysisError::EmptyOutcomes);
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(AnalysisError::ProbabilitySum(total));
    }
    let mean: f64 = values.iter().zip(probs).map(|(x, p)| p * x).sum();
    let mean_deviation: f64 = values.iter().zip(probs).map(|(x, p)| p * (x - mean).abs()).sum();
    let n = values.len();
    let equal = probs.iter().all(|p| (p - probs[0]).abs() <= 1e-12);
    let sample_std = (equal && n >= 2).then(|| {
        let plain_mean = values.iter().sum::<f64>() / n as f64;
        let ss: f64 = values.iter().map(|x| (x - plain_mean) * (x - plain_mean)).sum();
        math::sqrt(ss / (n - 1) as f64)
    });
    Ok(OutcomeStatistics { mean, mean_deviation, sample_std })
}

/// Result of a solve with installations fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanEvaluation {
    pub plan: InvestmentPlan,
    pub status: SolveStatus,
}

/// Best operation of fixed installations: maximizes `E`, then minimizes `R`
/// among operations within `1e-6` relative of that `E`.
pub fn evaluate_installs(
    instance: &Instance,
    units: &Installs,
    options: &BuildOptions,
    settings: &MilpSettings,
    clock: &dyn Clock,
) -> Result<PlanEvaluation, AnalysisError> {
    let (mut m, atlas) = build_stochastic_with(instance, ObjectiveMode::MaximizeExpected, options)?;
    fix_installs(&mut m, &atlas, units)?;
    let first = solve_milp_with(&m, settings, clock, None)?;
    if !first.has_incumbent() {
        return Err(AnalysisError::NotSolved(first.status));
    }
    let best = extract_plan(instance, &atlas, &first)?;
    let target = best.expected - 1e-6 * best.expected.abs().max(1.0);
    let mode = ObjectiveMode::MinimizeRisk { target, sense: TargetSense::AtLeast };
    let (mut m2, atlas2) = build_stochastic_with(instance, mode, options)?;
    fix_installs(&mut m2, &atlas2, units)?;
    let second = solve_milp_with(&m2, settings, clock, Some(&first.values))?;
    if !second.has_incumbent() {
        return Ok(PlanEvaluation { plan: best, status: first.status });
    }
    let status = if first.status == SolveStatus::Optimal { second.status } else { first.status };
    Ok(PlanEvaluation { plan: extract_plan(instance, &atlas2, &second)?, status })
}

/// Optimal expected NPV for every truncated horizon and the first one that
/// is profitable.
#[derive(Debug, Clone, PartialEq)]
pub struct HorizonReport {
    /// First horizon with `E > 1e-6`, if any.
    pub horizon: Option<usize>,
    /// `(stages, E, status)` for every horizon tried.
    pub expected_by_stage: Vec<(usize, f64, SolveStatus)>,
}

/// Solves the expected-NPV problem on the instance truncated to
/// `2..=max_stages` stages and stops at the first positive optimum.
pub fn profitability_horizon(
    instance: &Instance,
    max_stages: usize,
    options: &BuildOptions,
    settings: &MilpSettings,
    clock: &dyn Clock,
) -> Result<HorizonReport, AnalysisError> {
    let max_stages = max_stages.min(instance.tree.num_stages());
    let mut report = HorizonReport { horizon: None, expected_by_stage: Vec::new() };
    for t in 2..=max_stages {
        let truncated = instance.truncated(t).map_err(FormulationError::from)?;
        let (m, atlas) = build_stochastic_with(&truncated, ObjectiveMode::MaximizeExpected, options)?;
        let sol = solve_milp_with(&m, settings, clock, None)?;
        if !sol.has_incumbent() {
            return Err(AnalysisError::NotSolved(sol.status));
        }
        let plan = extract_plan(&truncated, &atlas, &sol)?;
        report.expected_by_stage.push((t, plan.expected, sol.status));
        if plan.expected > 1e-6 {
            report.horizon = Some(t);
            break;
        }
    }
    Ok(report)
}

/// [`profitability_horizon`] with default settings and no time limit.
pub fn profitability_horizon_default(instance: &Instance, max_stages: usize) -> Result<HorizonReport, AnalysisError> {
    profitability_horizon(instance, max_stages, &BuildOptions::default(), &MilpSettings::default(), &NoClock)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn waste_statistics() {
        let p = [0.25; 4];
        let a = weighted_statistics(&[10.0, 75.0, 50.0, 125.0], &p).unwrap();
        assert_eq!(a.mean, 65.0);
        assert_eq!(a.mean_deviation, 35.0);
        assert!((a.sample_std.unwrap() - 48.0).abs() <= 1.0);
        let b = weighted_statistics(&[0.0, 75.0, 0.0, 25.0], &p).unwrap();
        assert_eq!(b.mean, 25.0);
        assert!((b.sample_std.unwrap() - 35.0).abs() <= 1.0);
    }

    #[test]
    fn constant_values_have_no_spread() {
        let s = weighted_statistics(&[4.0; 3], &[0.2, 0.3, 0.5]).unwrap();
        assert_eq!((s.mean, s.mean_deviation, s.sample_std), (4.0, 0.0, None));
    }

    #[test]
    fn empty_and_unnormalized_inputs() {
        assert_eq!(weighted_statistics(&[], &[]), Err(AnalysisError::EmptyOutcomes));
        assert!(matches!(weighted_statistics(&[1.0], &[0.5]), Err(AnalysisError::ProbabilitySum(_))));
    }

    #[test]
    fn odometer_visits_every_assignment() {
        let caps = [1u32, 2];
        let mut c = vec![0u32; 2];
        let mut n = 1;
        while advance(&mut c, &caps) {
            n += 1;
        }
        assert_eq!(n, 6);
    }
}
