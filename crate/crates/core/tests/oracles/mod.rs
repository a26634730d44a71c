//! Brute-force reference solvers and random model generators shared by the
//! engine tests.
#![allow(dead_code)]

use modcap_core::milp::{MilpModel, ObjectiveSense, RowSense};
use modcap_core::{Instance, ProductSpec, ScenarioTree, TechnologyOption};
use rand::Rng;

/// A hyperplane `a . x = b` taken from a row or a finite variable bound.
struct Plane {
    a: Vec<f64>,
    b: f64,
}

/// Optimal objective of the LP relaxation by enumerating every vertex of the
/// feasible polyhedron. `None` means infeasible. The model must be bounded and
/// its feasible region pointed (every variable has a finite bound on at least
/// one side, or is pinned down by rows).
pub fn vertex_enumeration(model: &MilpModel) -> Option<f64> {
    let n = model.num_vars();
    let mut forced = Vec::new();
    let mut optional = Vec::new();
    for c in &model.constraints {
        let mut a = vec![0.0; n];
        for &(v, coef) in &c.terms {
            a[v.0] = coef;
        }
        let p = Plane { a, b: c.rhs };
        if c.sense == RowSense::Eq {
            forced.push(p);
        } else {
            optional.push(p);
        }
    }
    for (j, v) in model.variables.iter().enumerate() {
        for bound in [v.lower, v.upper] {
            if bound.is_finite() {
                let mut a = vec![0.0; n];
                a[j] = 1.0;
                optional.push(Plane { a, b: bound });
            }
        }
    }
    if forced.len() > n {
        // Pick n of the equalities; the rest are checked for feasibility.
        let extra: Vec<Plane> = forced.drain(n..).collect();
        optional.extend(extra);
    }
    let need = n - forced.len();
    let mut best: Option<f64> = None;
    let mut chosen = Vec::with_capacity(need);
    subsets(optional.len(), need, 0, &mut chosen, &mut |idx| {
        let rows: Vec<&Plane> = forced.iter().chain(idx.iter().map(|&i| &optional[i])).collect();
        if let Some(x) = solve_square(&rows, n) {
            if model.max_violation(&x) <= 1e-7 * (1.0 + x.iter().fold(0.0f64, |m, v| m.max(v.abs()))) {
                let z = model.objective_value(&x);
                best = Some(match (best, model.sense) {
                    (None, _) => z,
                    (Some(b), ObjectiveSense::Maximize) => b.max(z),
                    (Some(b), ObjectiveSense::Minimize) => b.min(z),
                });
            }
        }
    });
    best
}

fn subsets(total: usize, k: usize, start: usize, chosen: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
    if chosen.len() == k {
        f(chosen);
        return;
    }
    let remaining = k - chosen.len();
    for i in start..total {
        if total - i < remaining {
            return;
        }
        chosen.push(i);
        subsets(total, k, i + 1, chosen, f);
        chosen.pop();
    }
}

/// Gaussian elimination with partial pivoting; `None` when singular.
fn solve_square(rows: &[&Plane], n: usize) -> Option<Vec<f64>> {
    let mut m: Vec<Vec<f64>> = rows
        .iter()
        .map(|p| {
            let mut r = p.a.clone();
            r.push(p.b);
            r
        })
        .collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))?;
        if m[piv][col].abs() < 1e-9 {
            return None;
        }
        m.swap(col, piv);
        for r in 0..n {
            if r != col {
                let f = m[r][col] / m[col][col];
                if f != 0.0 {
                    for c in col..=n {
                        m[r][c] -= f * m[col][c];
                    }
                }
            }
        }
    }
    Some((0..n).map(|i| m[i][n] / m[i][i]).collect())
}

/// Optimal objective of a pure-integer model by visiting every lattice point
/// inside the variable bounds. `None` means infeasible.
pub fn lattice_enumeration(model: &MilpModel) -> Option<f64> {
    let n = model.num_vars();
    let lo: Vec<i64> = model.variables.iter().map(|v| v.lower.ceil() as i64).collect();
    let hi: Vec<i64> = model.variables.iter().map(|v| v.upper.floor() as i64).collect();
    if lo.iter().zip(&hi).any(|(l, h)| l > h) {
        return None;
    }
    let mut x: Vec<f64> = lo.iter().map(|&v| v as f64).collect();
    let mut best: Option<f64> = None;
    loop {
        if model.max_violation(&x) <= 1e-9 {
            let z = model.objective_value(&x);
            best = Some(match (best, model.sense) {
                (None, _) => z,
                (Some(b), ObjectiveSense::Maximize) => b.max(z),
                (Some(b), ObjectiveSense::Minimize) => b.min(z),
            });
        }
        let mut j = 0;
        loop {
            if j == n {
                return best;
            }
            if (x[j] as i64) < hi[j] {
                x[j] += 1.0;
                break;
            }
            x[j] = lo[j] as f64;
            j += 1;
        }
    }
}

fn random_sense(rng: &mut impl Rng) -> RowSense {
    match rng.random_range(0..10) {
        0..=5 => RowSense::Le,
        6..=8 => RowSense::Ge,
        _ => RowSense::Eq,
    }
}

/// Dense random LP with `x >= 0`, a few finite upper bounds and a box row
/// `sum x <= cap` that keeps it bounded. At most 20 hyperplanes in total so
/// vertex enumeration stays cheap.
pub fn random_lp(rng: &mut impl Rng, n: usize, m: usize) -> MilpModel {
    let sense = if rng.random_bool(0.5) { ObjectiveSense::Maximize } else { ObjectiveSense::Minimize };
    let mut model = MilpModel::new(sense);
    let spare = 20usize.saturating_sub(n + m);
    let mut uppers = 0;
    let vars: Vec<_> = (0..n)
        .map(|j| {
            let upper = if uppers < spare && rng.random_bool(0.3) {
                uppers += 1;
                rng.random_range(1..=8) as f64
            } else {
                f64::INFINITY
            };
            model.add_continuous(format!("x{j}"), 0.0, upper)
        })
        .collect();
    for &v in &vars {
        let c = rng.random_range(-9..=9) as f64;
        model.set_objective(v, c);
    }
    model.add_constraint("box", vars.iter().map(|&v| (v, 1.0)), RowSense::Le, rng.random_range(5..=30) as f64);
    for i in 1..m {
        let terms: Vec<_> = vars
            .iter()
            .map(|&v| (v, if rng.random_bool(0.8) { rng.random_range(-6..=6) as f64 } else { 0.0 }))
            .collect();
        let rhs = rng.random_range(-10..=25) as f64;
        model.add_constraint(format!("r{i}"), terms, random_sense(rng), rhs);
    }
    model
}

/// Random pure-integer model with bounds in `[0, 5]` and at most `max_points`
/// lattice points.
pub fn random_ilp(rng: &mut impl Rng, n: usize, m: usize, max_points: u64) -> MilpModel {
    let sense = if rng.random_bool(0.5) { ObjectiveSense::Maximize } else { ObjectiveSense::Minimize };
    let mut model = MilpModel::new(sense);
    let mut points = 1u64;
    let vars: Vec<_> = (0..n)
        .map(|j| {
            let mut ub = rng.random_range(1..=5u64);
            while points * (ub + 1) > max_points && ub > 1 {
                ub -= 1;
            }
            points *= ub + 1;
            model.add_integer(format!("z{j}"), 0.0, ub as f64)
        })
        .collect();
    for &v in &vars {
        let c = rng.random_range(-9..=9) as f64 + rng.random_range(0..4) as f64 * 0.25;
        model.set_objective(v, c);
    }
    for i in 0..m {
        let terms: Vec<_> = vars
            .iter()
            .map(|&v| (v, if rng.random_bool(0.7) { rng.random_range(-7..=7) as f64 } else { 0.0 }))
            .collect();
        let rhs = rng.random_range(-5..=20) as f64 + 0.5 * rng.random_range(0..2) as f64;
        model.add_constraint(format!("r{i}"), terms, random_sense(rng), rhs);
    }
    model
}

/// Random capacity expansion instance small enough for the enumeration
/// oracle: at most 3 stages, branching at most 2, at most 2 products, every
/// installation count capped at 3 and at most `max_assignments` installation
/// assignments.
pub fn random_instance(rng: &mut impl Rng, max_assignments: u128) -> Instance {
    loop {
        let inst = random_instance_once(rng);
        if modcap_core::analysis::enumeration_size(&inst, None) <= max_assignments {
            return inst;
        }
    }
}

fn random_instance_once(rng: &mut impl Rng) -> Instance {
    let stages = if rng.random_bool(0.7) { 3 } else { 2 };
    let branching: Vec<usize> = (1..stages).map(|_| rng.random_range(1..=2)).collect();
    let probs: Vec<Vec<f64>> = branching
        .iter()
        .map(|&b| if b == 2 && rng.random_bool(0.5) { vec![0.3, 0.7] } else { Vec::new() })
        .collect();
    let tree = ScenarioTree::build(stages, &branching, &probs).unwrap();
    let np = rng.random_range(1..=2);
    let products: Vec<ProductSpec> = (0..np)
        .map(|i| {
            let k = rng.random_range(1..=2);
            let mut caps: Vec<f64> = (0..k).map(|_| rng.random_range(1..=6) as f64).collect();
            caps.sort_by(f64::total_cmp);
            caps.dedup();
            let catalog = caps
                .iter()
                .map(|&b| TechnologyOption::new(b, rng.random_range(1..=12) as f64 + b * rng.random_range(0..=3) as f64))
                .collect();
            let bmin = caps[0];
            ProductSpec {
                id: format!("p{i}"),
                catalog,
                storage_cost: rng.random_range(0..=3) as f64,
                waste_cost: rng.random_range(0..=3) as f64,
                operating_cost: rng.random_range(0..=3) as f64,
                selling_price: rng.random_range(2..=15) as f64,
                capacity_limit: rng.random_range(bmin as i64..=(4 * bmin as i64 - 1)) as f64,
                storage_limit: rng.random_range(0..=4) as f64,
            }
        })
        .collect();
    let mut alpha = vec![vec![0.0; np]; np];
    if np == 2 {
        alpha[1][0] = [0.0, 0.5, 1.0, 2.0][rng.random_range(0..4)];
        if rng.random_bool(0.2) {
            alpha[0][1] = 0.5;
        }
    }
    let demands = (0..tree.num_nodes()).map(|_| (0..np).map(|_| rng.random_range(0..=15) as f64).collect()).collect();
    Instance {
        tree,
        products,
        interdependency: alpha,
        demands,
        budget_limit: rng.random_bool(0.3).then(|| rng.random_range(5..=40) as f64),
        interest_rate: if rng.random_bool(0.5) { 0.0 } else { 0.1 },
    }
}

/// Random single-product instance on a linear tree of 2 to 4 stages.
pub fn random_line_instance(rng: &mut impl Rng) -> Instance {
    loop {
        let mut inst = random_instance_once(rng);
        let stages = rng.random_range(2..=4);
        inst.tree = ScenarioTree::deterministic(stages).unwrap();
        inst.products.truncate(1);
        inst.interdependency = vec![vec![0.0]];
        inst.demands = (0..stages).map(|_| vec![rng.random_range(0..=15) as f64]).collect();
        if modcap_core::analysis::enumeration_size(&inst, None) <= 100_000 {
            return inst;
        }
    }
}
