//! Acceptance suite. Runs every criterion, prints one line each and exits
//! nonzero when any of them fails.

#[path = "../../core/tests/fixtures/mod.rs"]
mod fixtures;
#[path = "../../core/tests/invariants/mod.rs"]
mod invariants;
#[path = "../../core/tests/oracles/mod.rs"]
mod oracles;

use std::collections::BTreeMap;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use modcap::clock::WallClock;
use modcap::parallel::map_ordered;
use modcap::report::{InstallationRecord, PlanFile};
use modcap::schema::Loaded;
use modcap_core::analysis::{self, brute_force_solve, evaluate_installs, outcome_statistics, ScenarioOutcome};
use modcap_core::formulation::{build_stochastic, build_stochastic_with, extract_plan, BuildOptions};
use modcap_core::milp::{solve_lp, solve_milp, solve_milp_with, MilpSettings, SolveStatus};
use modcap_core::pareto::{self, ParetoPoint, SweepDirection};
use modcap_core::{Instance, InvestmentPlan, NodeId, ObjectiveMode, ScenarioTree, TargetSense};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn load(name: &str) -> Loaded {
    Loaded::read(&data(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn settings(limit: f64) -> MilpSettings {
    MilpSettings { time_limit: Some(limit), ..MilpSettings::default() }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Installed unit capacities per stage, sorted.
fn stage_multisets(instance: &Instance, plan: &InvestmentPlan) -> BTreeMap<usize, Vec<f64>> {
    let mut out: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for i in plan.installations(&instance.tree) {
        out.entry(i.node.stage).or_default().extend(std::iter::repeat_n(i.capacity, i.count as usize));
    }
    for v in out.values_mut() {
        v.sort_by(f64::total_cmp);
    }
    out
}

fn criterion_1() -> Outcome {
    let outcomes = |w: [f64; 4]| -> Vec<ScenarioOutcome> {
        w.iter()
            .enumerate()
            .map(|(j, &x)| ScenarioOutcome { path: vec![NodeId::new(1, 1), NodeId::new(2, j + 1)], probability: 0.25, npv: 0.0, waste_by_stage: vec![0.0, x] })
            .collect()
    };
    let (a, b) = (outcomes([10.0, 75.0, 50.0, 125.0]), outcomes([0.0, 75.0, 0.0, 25.0]));
    let started = Instant::now();
    let sa = outcome_statistics(&a, |o| o.waste_by_stage[1]).map_err(|e| e.to_string())?;
    let sb = outcome_statistics(&b, |o| o.waste_by_stage[1]).map_err(|e| e.to_string())?;
    let elapsed = started.elapsed().as_secs_f64();
    let (da, db) = (sa.sample_std.ok_or("no sample std")?, sb.sample_std.ok_or("no sample std")?);
    ensure(sa.mean == 65.0 && sb.mean == 25.0, || format!("means {} and {}", sa.mean, sb.mean))?;
    ensure((da - 48.0).abs() <= 1.0 && (db - 35.0).abs() <= 1.0, || format!("sample std {da} and {db}"))?;
    ensure(elapsed < 1e-3, || format!("took {elapsed} s"))?;
    Ok(format!("means 65/25, sample std {da:.2}/{db:.2}, {:.1} us", elapsed * 1e6))
}

fn criterion_2() -> Outcome {
    let loaded = load("table1.json");
    let expected = [
        ("Case 1", 93149.0, vec![(1, vec![1000.0])]),
        ("Case 2", 24361.0, vec![(1, vec![500.0]), (2, vec![500.0])]),
        ("Case 3", 16495.0, vec![(1, vec![100.0; 4]), (2, vec![500.0])]),
    ];
    let mode = ObjectiveMode::MinimizeRisk { target: 7.0e4, sense: TargetSense::Equal };
    let mut failures = Vec::new();
    let mut found = Vec::new();
    for (case, risk, stages) in expected {
        let inst = loaded.instance_for(Some(case)).map_err(|e| e.to_string())?.undiscounted();
        let (m, atlas) = build_stochastic(&inst, mode).map_err(|e| e.to_string())?;
        let started = Instant::now();
        let sol = solve_milp_with(&m, &settings(30.0), &WallClock::start(), None).map_err(|e| e.to_string())?;
        let secs = started.elapsed().as_secs_f64();
        if !sol.has_incumbent() {
            failures.push(format!("{case}: no plan ({}, {secs:.0} s)", sol.status.as_str()));
            continue;
        }
        let plan = extract_plan(&inst, &atlas, &sol).map_err(|e| e.to_string())?;
        let want: BTreeMap<usize, Vec<f64>> = stages.into_iter().collect();
        let got = stage_multisets(&inst, &plan);
        found.push(format!("{case} R={:.0}", plan.risk));
        if rel(plan.risk, risk) > 0.005 {
            failures.push(format!("{case}: risk {:.1} vs {risk} ({:.1}% off)", plan.risk, 100.0 * rel(plan.risk, risk)));
        }
        if got != want {
            failures.push(format!("{case}: installs {got:?} vs {want:?}"));
        }
        if secs > 30.0 {
            failures.push(format!("{case}: {secs:.0} s"));
        }
    }
    if failures.is_empty() {
        Ok(found.join(", "))
    } else {
        Err(failures.join("; "))
    }
}

fn criterion_3() -> Outcome {
    let started = Instant::now();
    let loaded = load("table1.json");
    let grid: Vec<f64> = (0..10).map(|k| 1.0e4 * k as f64).collect();
    let direction = SweepDirection::MinimizeRisk(TargetSense::AtLeast);
    let labels = ["Case 1", "Case 3"];
    let instances: Vec<Instance> = labels.iter().map(|c| loaded.instance_for(Some(c)).map(|i| i.undiscounted())).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    let jobs: Vec<(usize, f64)> = (0..labels.len()).flat_map(|c| grid.iter().map(move |&e| (c, e))).collect();
    let opts = BuildOptions::default();
    let set = settings(10.0);
    let solved = map_ordered(&jobs, 4, |&(c, eps)| pareto::solve_point(&instances[c], direction, eps, &opts, &set, &WallClock::start()));
    let mut raw: Vec<Vec<ParetoPoint>> = vec![Vec::new(); labels.len()];
    for (&(c, _), p) in jobs.iter().zip(solved) {
        raw[c].push(p.map_err(|e| e.to_string())?);
    }
    let at = |c: usize| raw[c].iter().find(|p| p.epsilon == 7.0e4).filter(|p| p.status.is_usable()).map(|p| p.risk);
    let (r1, r3) = (at(0).ok_or("Case 1 has no solved point at 7e4")?, at(1).ok_or("Case 3 has no solved point at 7e4")?);
    let f1 = pareto::assemble(labels[0], raw[0].clone()).map_err(|e| e.to_string())?;
    let f3 = pareto::assemble(labels[1], raw[1].clone()).map_err(|e| e.to_string())?;
    let report = pareto::dominance_report(&f1, &f3);
    let undominated = report.points.iter().filter(|p| p.weakly_dominated_by.is_none()).count();
    ensure(undominated == 0, || format!("{undominated} Case 1 frontier points are not dominated by Case 3"))?;
    ensure(r1 >= 3.0 * r3, || format!("risk at 7e4: Case 1 {r1:.0}, Case 3 {r3:.0}, ratio {:.2}", r1 / r3))?;
    let secs = started.elapsed().as_secs_f64();
    ensure(secs < 600.0, || format!("took {secs:.0} s"))?;
    let unusable: usize = raw.iter().flatten().filter(|p| !p.status.is_usable()).count();
    Ok(format!(
        "{} Case 1 points all dominated, risk at 7e4 {r1:.0} vs {r3:.0} (factor {:.1}), {unusable} of {} grid points infeasible or unsolved, {secs:.0} s",
        f1.points.len(),
        r1 / r3,
        jobs.len()
    ))
}

/// Runs the expected-value model of `instance` and checks the plan against a
/// fixed-install re-solve.
fn solve_and_evaluate(instance: &Instance, limit: f64) -> Result<(InvestmentPlan, SolveStatus, InvestmentPlan), String> {
    let opts = BuildOptions::default();
    let (m, atlas) = build_stochastic_with(instance, ObjectiveMode::MaximizeExpected, &opts).map_err(|e| e.to_string())?;
    let sol = solve_milp_with(&m, &settings(limit), &WallClock::start(), None).map_err(|e| e.to_string())?;
    ensure(sol.has_incumbent(), || format!("no incumbent ({})", sol.status.as_str()))?;
    let plan = extract_plan(instance, &atlas, &sol).map_err(|e| e.to_string())?;
    invariants::plan_boundaries(instance, &plan)?;
    let again = InvestmentPlan::evaluate(instance, plan.units.clone(), plan.storage.clone(), plan.waste.clone()).map_err(|e| e.to_string())?;
    ensure(again == plan, || "re-evaluated plan differs".into())?;
    let eval = evaluate_installs(instance, &plan.units, &opts, &settings(600.0), &WallClock::start()).map_err(|e| e.to_string())?;
    ensure(eval.plan.units == plan.units, || "evaluation changed the installations".into())?;
    ensure(eval.plan.expected >= plan.expected - 1e-6 * plan.expected.abs().max(1.0), || {
        format!("fixed-install optimum {} below incumbent {}", eval.plan.expected, plan.expected)
    })?;
    if sol.status.is_solved() {
        ensure(rel(eval.plan.expected, plan.expected) <= 1e-4, || format!("fixed-install optimum {} vs {}", eval.plan.expected, plan.expected))?;
    }
    Ok((plan, sol.status, eval.plan))
}

fn criterion_4() -> Outcome {
    let loaded = load("biogas.json");
    ensure(loaded.instance.validate().iter().all(|d| d.severity != modcap_core::instance::Severity::Error), || "biogas instance is invalid".into())?;
    let mut notes = Vec::new();
    for case in ["Case 1", "Case 2", "Case 3"] {
        let inst = loaded.instance_for(Some(case)).map_err(|e| e.to_string())?;
        let (plan, status, eval) = solve_and_evaluate(&inst, 30.0).map_err(|e| format!("{case}: {e}"))?;
        notes.push(format!("{case} E={:.0} ({}) fixed E={:.0} R={:.0}", plan.expected, status.as_str(), eval.expected, eval.risk));
    }

    let published = PlanFile {
        instance: "biogas".into(),
        case: None,
        discounted: true,
        products: Vec::new(),
        expected: 0.0,
        risk: 0.0,
        installations: [("1,1", "biogas", 800.0, 1), ("1,1", "biomethane", 60000.0, 1), ("3,1", "biogas", 1200.0, 2), ("3,1", "biomethane", 60000.0, 2)]
            .into_iter()
            .map(|(node, product, capacity, count)| InstallationRecord { node: node.into(), product: product.into(), capacity, count })
            .collect(),
        nodes: Vec::new(),
    };
    let inst = loaded.instance.undiscounted();
    let units = published.units(&inst).map_err(|e| e.to_string())?;
    let eval = evaluate_installs(&inst, &units, &BuildOptions::default(), &settings(600.0), &WallClock::start()).map_err(|e| e.to_string())?;
    ensure(eval.plan.units == units, || "published plan changed under evaluation".into())?;
    invariants::plan_boundaries(&inst, &eval.plan)?;
    notes.push(format!("published undiscounted Case 3 plan E={:.0} R={:.0} ({})", eval.plan.expected, eval.plan.risk, eval.status.as_str()));

    let mut rng = ChaCha8Rng::seed_from_u64(0xb10_9a5);
    let mut varied = loaded.instance.truncated(4).map_err(|e| e.to_string())?;
    for row in varied.demands.iter_mut().skip(1) {
        for d in row.iter_mut() {
            *d = (*d * rng.random_range(0.7..1.4)).round();
        }
    }
    for p in &mut varied.products {
        p.selling_price *= 3.0;
    }
    let (plan, status, eval) = solve_and_evaluate(&varied, 120.0).map_err(|e| format!("generated tree: {e}"))?;
    ensure(!plan.is_empty(), || "generated tree: plan installs nothing".into())?;
    notes.push(format!("generated 4-stage tree E={:.0} ({}) fixed E={:.0}", plan.expected, status.as_str(), eval.expected));
    Ok(format!("downgraded to generated demand trees: {}", notes.join("; ")))
}

fn criterion_5() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xacce_0005);
    for case in 0..200 {
        let inst = oracles::random_instance(&mut rng, 20_000);
        let oracle = brute_force_solve(&inst, None).map_err(|e| e.to_string())?.ok_or(format!("instance {case}: oracle found nothing"))?;
        let (m, _) = build_stochastic(&inst, ObjectiveMode::MaximizeExpected).map_err(|e| e.to_string())?;
        let sol = solve_milp(&m, &MilpSettings::exact()).map_err(|e| e.to_string())?;
        ensure(sol.status == SolveStatus::Optimal, || format!("instance {case}: {}", sol.status.as_str()))?;
        ensure((sol.objective - oracle.objective).abs() <= 1e-6, || format!("instance {case}: milp {} oracle {}", sol.objective, oracle.objective))?;
    }
    let secs = started.elapsed().as_secs_f64();
    ensure(secs < 300.0, || format!("took {secs:.0} s"))?;
    Ok(format!("200 instances agree, {secs:.1} s"))
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xacce_0006);
    let mut feasible = 0;
    for case in 0..500 {
        let (n, m) = (rng.random_range(1..=10), rng.random_range(1..=10));
        let model = oracles::random_lp(&mut rng, n, m);
        let expected = oracles::vertex_enumeration(&model);
        let sol = solve_lp(&model).map_err(|e| format!("lp {case}: {e}"))?;
        match expected {
            None => ensure(sol.status == SolveStatus::Infeasible, || format!("lp {case}: {} instead of infeasible", sol.status.as_str()))?,
            Some(z) => {
                feasible += 1;
                ensure(sol.status == SolveStatus::Optimal, || format!("lp {case}: {}", sol.status.as_str()))?;
                ensure((sol.objective - z).abs() <= 1e-6 * (1.0 + z.abs()), || format!("lp {case}: {} vs {z}", sol.objective))?;
            }
        }
    }
    Ok(format!("500 LPs agree ({feasible} feasible)"))
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xacce_0007);
    let mut checks = 0;
    for k in 0..50 {
        let stages = rng.random_range(1..=5);
        let branching: Vec<usize> = (1..stages).map(|_| rng.random_range(1..=3)).collect();
        let probs: Vec<Vec<f64>> = branching
            .iter()
            .map(|&b| {
                let w: Vec<f64> = (0..b).map(|_| rng.random_range(1..10) as f64).collect();
                let s: f64 = w.iter().sum();
                w.iter().map(|x| x / s).collect()
            })
            .collect();
        let tree = ScenarioTree::build(stages, &branching, &probs).map_err(|e| format!("tree {k}: {e}"))?;
        invariants::probability_consistency(&tree).map_err(|e| format!("tree {k}: {e}"))?;
        checks += 1;
    }
    for name in ["table1.json", "biogas.json"] {
        invariants::probability_consistency(&load(name).instance.tree).map_err(|e| format!("{name}: {e}"))?;
        checks += 1;
    }
    for k in 0..60 {
        let inst = oracles::random_instance(&mut rng, 20_000);
        invariants::solved_plan_checks(&inst).map_err(|e| format!("instance {k}: {e}"))?;
        checks += 1;
    }
    for k in 0..30 {
        let inst = oracles::random_line_instance(&mut rng);
        invariants::deterministic_equivalence(&inst).map_err(|e| format!("line {k}: {e}"))?;
        checks += 1;
    }
    for catalog in [vec![fixtures::SMALL, fixtures::LARGE], vec![fixtures::LARGE]] {
        invariants::frontier_monotonicity(&fixtures::binary_tree(catalog), 8)?;
        checks += 1;
    }
    for k in 0..10 {
        let inst = oracles::random_instance(&mut rng, 2_000);
        invariants::frontier_monotonicity(&inst, 6).map_err(|e| format!("frontier {k}: {e}"))?;
        checks += 1;
    }
    Ok(format!("{checks} checks, zero violations"))
}

fn criterion_8() -> Outcome {
    let started = Instant::now();
    let loaded = load("biogas.json");
    let inst = &loaded.instance;
    let report = analysis::profitability_horizon(inst, inst.tree.num_stages(), &BuildOptions::default(), &settings(120.0), &WallClock::start())
        .map_err(|e| e.to_string())?;
    let secs = started.elapsed().as_secs_f64();
    ensure(secs < 3600.0, || format!("took {secs:.0} s"))?;
    let horizon = report.horizon.ok_or("not profitable within the horizon")?;
    for &(t, e, status) in &report.expected_by_stage {
        if t < horizon {
            ensure(e <= 1e-6 && status.is_solved(), || format!("{t} stages: E={e} ({})", status.as_str()))?;
        } else {
            ensure(e > 1e-6, || format!("{t} stages: E={e}"))?;
        }
    }
    let last = report.expected_by_stage.last().map(|r| r.2.as_str()).unwrap_or("none");
    Ok(format!("downgraded to generated demand tree: profitable from {horizon} stages (E>0 at {horizon} is {last}, zero below), {secs:.0} s"))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("outcome statistics", criterion_1),
        ("single-product regression at E = 7.0e4", criterion_2),
        ("Case 3 frontier dominates Case 1", criterion_3),
        ("biogas regressions", criterion_4),
        ("MILP agrees with enumeration", criterion_5),
        ("LP agrees with vertex enumeration", criterion_6),
        ("structural invariants", criterion_7),
        ("profitability horizon", criterion_8),
    ];
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let n = k + 1;
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        let started = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {n} PASS  {name}: {detail} [{secs:.1} s]"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n} FAIL  {name}: {detail} [{secs:.1} s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
