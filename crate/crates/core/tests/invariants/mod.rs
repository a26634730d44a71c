//! Structural checks on trees, models and plans. Each returns a description
//! of the first violation found.
#![allow(dead_code)]

use modcap_core::formulation::{build_deterministic, build_stochastic, extract_plan, fix_installs, BuildOptions};
use modcap_core::milp::{solve_milp, MilpModel, MilpSettings, NoClock, RowSense};
use modcap_core::pareto::{self, SweepDirection};
use modcap_core::{Instance, InvestmentPlan, ObjectiveMode, ScenarioTree, TargetSense, VariableAtlas};
use std::collections::HashSet;

pub type Check = Result<(), String>;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

/// Joint probabilities multiply down the tree, children of a node sum to its
/// probability and every stage sums to one.
pub fn probability_consistency(tree: &ScenarioTree) -> Check {
    for t in 1..=tree.num_stages() {
        let total: f64 = tree.stage_nodes(t).map(|n| tree.joint_prob_at(n)).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(format!("stage {t} probabilities sum to {total}"));
        }
    }
    for n in 0..tree.num_nodes() {
        let p = tree.joint_prob_at(n);
        let expect = tree.parent_index(n).map_or(1.0, |a| tree.joint_prob_at(a)) * tree.conditional_prob_at(n);
        if (p - expect).abs() > 1e-12 {
            return Err(format!("node {n}: joint {p} is not parent times conditional {expect}"));
        }
        if !tree.is_leaf(n) {
            let kids: f64 = tree.children(n).map(|c| tree.joint_prob_at(c)).sum();
            if (kids - p).abs() > 1e-9 {
                return Err(format!("children of node {n} sum to {kids}, node has {p}"));
            }
        }
    }
    let paths = tree.enumerate_paths();
    if paths.len() != tree.leaves().len() {
        return Err(format!("{} paths for {} leaves", paths.len(), tree.leaves().len()));
    }
    Ok(())
}

/// One block of installation variables per decision node and product and
/// none at the leaves; production at a node is the parent's production plus
/// the parent's installations, so decisions at a node only depend on its
/// history.
pub fn non_anticipativity(instance: &Instance, model: &MilpModel, atlas: &VariableAtlas) -> Check {
    let tree = &instance.tree;
    let np = instance.num_products();
    if atlas.u.len() != tree.decision_nodes().len() || atlas.num_decision_nodes != tree.decision_nodes().len() {
        return Err(format!("{} install blocks for {} decision nodes", atlas.u.len(), tree.decision_nodes().len()));
    }
    for (n, un) in atlas.u.iter().enumerate() {
        if un.len() != np {
            return Err(format!("node {n} has {} product blocks", un.len()));
        }
        for (i, ui) in un.iter().enumerate() {
            if ui.len() != instance.products[i].catalog.len() {
                return Err(format!("node {n} product {i} has {} install variables", ui.len()));
            }
            if ui.iter().any(|&v| !model.var(v).integer) {
                return Err(format!("node {n} product {i} has a continuous install variable"));
            }
        }
    }
    let names: HashSet<&str> = model.variables.iter().map(|v| v.name.as_str()).collect();
    if names.len() != model.num_vars() {
        return Err("variable names are not unique".into());
    }
    // X_n - X_parent - x_parent = 0 must appear as a row for every non-root node.
    for n in 1..tree.num_nodes() {
        let a = tree.parent_index(n).unwrap();
        for i in 0..np {
            let want = [(atlas.big_x[n][i], 1.0), (atlas.big_x[a][i], -1.0), (atlas.x[a][i], -1.0)];
            let found = model.constraints.iter().any(|c| {
                c.sense == RowSense::Eq
                    && c.rhs == 0.0
                    && c.terms.len() == 3
                    && want.iter().all(|w| c.terms.contains(w))
            });
            if !found {
                return Err(format!("no capacity recursion row for node {n} product {i}"));
            }
        }
    }
    Ok(())
}

/// Root capacity, root storage, root waste and leaf storage are pinned at 0.
pub fn boundary_fixings(instance: &Instance, model: &MilpModel, atlas: &VariableAtlas) -> Check {
    let tree = &instance.tree;
    for i in 0..instance.num_products() {
        let pinned = |v, what: &str, n: usize| -> Check {
            let var = model.var(v);
            if var.lower != 0.0 || var.upper != 0.0 {
                return Err(format!("{what} at node {n} product {i} has bounds [{}, {}]", var.lower, var.upper));
            }
            Ok(())
        };
        pinned(atlas.big_x[0][i], "X", 0)?;
        pinned(atlas.s[0][i], "s", 0)?;
        pinned(atlas.w[0][i], "w", 0)?;
        for n in tree.leaves() {
            pinned(atlas.s[n][i], "s", n)?;
        }
    }
    Ok(())
}

/// The same fixings and the capacity recursion hold in a solved plan.
pub fn plan_boundaries(instance: &Instance, plan: &InvestmentPlan) -> Check {
    let tree = &instance.tree;
    for i in 0..instance.num_products() {
        if plan.storage[0][i] != 0.0 || plan.waste[0][i] != 0.0 {
            return Err(format!("root storage/waste of product {i} is nonzero"));
        }
        for n in tree.leaves() {
            if plan.storage[n][i] != 0.0 {
                return Err(format!("leaf {n} stores product {i}"));
            }
        }
    }
    Ok(())
}

/// Rebuilding the plan from its installations, storage and waste gives the
/// same numbers, and re-solving with the installations fixed cannot do
/// better than the plan's operation.
pub fn plan_round_trip(instance: &Instance, plan: &InvestmentPlan) -> Check {
    let again = InvestmentPlan::evaluate(instance, plan.units.clone(), plan.storage.clone(), plan.waste.clone())
        .map_err(|e| format!("re-evaluation failed: {e}"))?;
    if &again != plan {
        return Err("re-evaluated plan differs".into());
    }
    let (mut m, atlas) = build_stochastic(instance, ObjectiveMode::MaximizeExpected).map_err(|e| e.to_string())?;
    fix_installs(&mut m, &atlas, &plan.units).map_err(|e| e.to_string())?;
    let sol = solve_milp(&m, &MilpSettings::exact()).map_err(|e| e.to_string())?;
    let fixed = extract_plan(instance, &atlas, &sol).map_err(|e| e.to_string())?;
    if fixed.units != plan.units {
        return Err("fixing installs changed them".into());
    }
    if !close(fixed.expected, plan.expected, 1e-6) {
        return Err(format!("fixed-install optimum {} differs from plan {}", fixed.expected, plan.expected));
    }
    Ok(())
}

/// For single-product instances on a linear tree both builders reach the
/// same optimum.
pub fn deterministic_equivalence(instance: &Instance) -> Check {
    let settings = MilpSettings::exact();
    let (dm, _) = build_deterministic(instance).map_err(|e| e.to_string())?;
    let (sm, _) = build_stochastic(instance, ObjectiveMode::MaximizeExpected).map_err(|e| e.to_string())?;
    let d = solve_milp(&dm, &settings).map_err(|e| e.to_string())?;
    let s = solve_milp(&sm, &settings).map_err(|e| e.to_string())?;
    if d.status != s.status {
        return Err(format!("statuses differ: {:?} vs {:?}", d.status, s.status));
    }
    if d.has_incumbent() && !close(d.objective, s.objective, 1e-6) {
        return Err(format!("deterministic {} vs stochastic {}", d.objective, s.objective));
    }
    Ok(())
}

/// Minimized risk is nondecreasing in the expected-value target and the
/// pruned frontier is mutually non-dominated.
pub fn frontier_monotonicity(instance: &Instance, grid_points: usize) -> Check {
    let options = BuildOptions::default();
    let settings = MilpSettings::exact();
    let ends = pareto::frontier_ends(instance, &options, &settings, &NoClock).map_err(|e| e.to_string())?;
    let direction = SweepDirection::MinimizeRisk(TargetSense::AtLeast);
    let grid = pareto::default_grid(&ends, direction, grid_points);
    let f = pareto::sweep(instance, direction, &grid, "check", &options, &settings, &NoClock).map_err(|e| e.to_string())?;
    let solved: Vec<_> = f.raw.iter().filter(|p| p.status.is_usable()).collect();
    if solved.len() != f.raw.len() {
        return Err(format!("{} of {} grid points failed", f.raw.len() - solved.len(), f.raw.len()));
    }
    for w in solved.windows(2) {
        if w[1].risk < w[0].risk - 1e-6 * (1.0 + w[0].risk.abs()) {
            return Err(format!("risk drops from {} to {} as target rises", w[0].risk, w[1].risk));
        }
    }
    for w in f.points.windows(2) {
        if w[1].expected < w[0].expected || w[1].risk < w[0].risk - 1e-6 * (1.0 + w[0].risk.abs()) {
            return Err("pruned frontier is not monotone".into());
        }
    }
    for a in &f.points {
        if f.points.iter().any(|b| pareto::strictly_dominates(b.expected, b.risk, a.expected, a.risk)) {
            return Err("pruned frontier contains a dominated point".into());
        }
    }
    if pareto::prune(&f.points) != f.points {
        return Err("pruning is not idempotent".into());
    }
    if instance.tree.leaves().len() == 1 && (f.points.len() != 1 || f.points[0].risk.abs() > 1e-9) {
        return Err("single-scenario frontier is not one riskless point".into());
    }
    Ok(())
}

/// Solves the expected-value model and runs every plan-level check.
pub fn solved_plan_checks(instance: &Instance) -> Check {
    let (m, atlas) = build_stochastic(instance, ObjectiveMode::MaximizeExpected).map_err(|e| e.to_string())?;
    non_anticipativity(instance, &m, &atlas)?;
    boundary_fixings(instance, &m, &atlas)?;
    let sol = solve_milp(&m, &MilpSettings::exact()).map_err(|e| e.to_string())?;
    let plan = extract_plan(instance, &atlas, &sol).map_err(|e| e.to_string())?;
    plan_boundaries(instance, &plan)?;
    plan_round_trip(instance, &plan)
}
