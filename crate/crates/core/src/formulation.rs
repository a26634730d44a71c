//! Capacity expansion models as MILPs.
//!
//! Every tree node `n` (flat index) with parent `a(n)` carries, per product
//! `i`:
//!
//! * `u[n][i][k]` units of catalog entry `k` installed (decision nodes only),
//! * `x = sum_k u B_k` installed capacity and `y = sum_k u C_k` its cost,
//! * `X_n = X_a + x_a` productive capacity (zero at the root: installations
//!   start producing one stage later),
//! * `Y_n = Y_a + y_n` cumulative installation cost,
//! * storage `s` and waste `w`,
//!
//! and per node the cost `q`, revenue `r`, discounted cash flow
//! `v = beta_t (r - q)` and cumulative NPV `V_n = V_a + v_n`. Sales of `i` at
//! `n` are `s_a + X - s - w - sum_i' alpha(i', i) X^i'` and must lie in
//! `[0, d]`.
//!
//! The stochastic model adds `E = sum_leaves p V` and the mean deviation
//! `R = sum_leaves p |V - E|`, linearized with one auxiliary per leaf.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::instance::{discount, Instance, InstanceError};
use crate::math;
use crate::milp::{MilpModel, ObjectiveSense, RowSense, Solution, VarId};
use crate::tree::{NodeId, ScenarioTree};

/// Half-width of the band used for `E = target`, relative to `|target|`.
pub const TARGET_BAND: f64 = 1e-6;

/// Absolute tolerance used when checking a plan against the constraints.
const CHECK_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetSense {
    AtLeast,
    /// `E` within `TARGET_BAND * |target|` of the target.
    Equal,
}

/// What a stochastic solve optimizes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ObjectiveMode {
    MaximizeExpected,
    MinimizeRisk { target: f64, sense: TargetSense },
    /// Maximize `E` subject to `R <= risk_cap`.
    MaximizeExpectedRiskCapped { risk_cap: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FormulationError {
    #[error("the deterministic model needs exactly one product, found {0}")]
    NotSingleProduct(usize),
    #[error("the deterministic model needs a tree with branching 1 everywhere")]
    NotDeterministicTree,
    #[error("missing or invalid demand at node {node} for product {product}")]
    MissingDemand { node: NodeId, product: usize },
    #[error("interdependency matrix must be {0}x{0}")]
    MissingAlphaEntry(usize),
    #[error("solution violates the model: {0}")]
    InfeasibleSolutionProvided(String),
    #[error(transparent)]
    Instance(#[from] InstanceError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BuildOptions {
    /// Treat storage and waste as continuous.
    pub relax_storage: bool,
}

/// Where every model quantity lives in the [`MilpModel`].
///
/// Node-indexed vectors use the tree's flat node index; `u`, `x`, `y` only
/// exist for decision (non-leaf) nodes, which are the first
/// `num_decision_nodes` indices.
#[derive(Debug, Clone, PartialEq)]
pub struct VariableAtlas {
    pub num_decision_nodes: usize,
    pub u: Vec<Vec<Vec<VarId>>>,
    pub x: Vec<Vec<VarId>>,
    pub y: Vec<Vec<VarId>>,
    pub big_x: Vec<Vec<VarId>>,
    pub big_y: Vec<Vec<VarId>>,
    pub s: Vec<Vec<VarId>>,
    pub w: Vec<Vec<VarId>>,
    pub q: Vec<VarId>,
    pub r: Vec<VarId>,
    pub v: Vec<VarId>,
    pub big_v: Vec<VarId>,
    /// One per leaf, in leaf order.
    pub deviation: Vec<VarId>,
    pub expected: Option<VarId>,
    pub risk: Option<VarId>,
}

impl VariableAtlas {
    /// Every `u` variable, node-major.
    pub fn install_vars(&self) -> impl Iterator<Item = VarId> + '_ {
        self.u.iter().flatten().flatten().copied()
    }
}

fn node_tag(id: NodeId) -> String {
    format!("{}_{}", id.stage, id.scenario)
}

fn check_instance(instance: &Instance) -> Result<(), FormulationError> {
    let tree = &instance.tree;
    let np = instance.num_products();
    for n in 0..tree.num_nodes() {
        for i in 0..np {
            let ok = instance.demands.get(n).and_then(|row| row.get(i)).is_some_and(|d| d.is_finite() && *d >= 0.0);
            if !ok {
                return Err(FormulationError::MissingDemand { node: tree.id(n), product: i });
            }
        }
    }
    let alpha_ok = if np == 1 {
        instance.interdependency.iter().flatten().all(|&a| a == 0.0)
    } else {
        instance.interdependency.len() == np && instance.interdependency.iter().all(|row| row.len() == np)
    };
    if !alpha_ok {
        return Err(FormulationError::MissingAlphaEntry(np));
    }
    Ok(())
}

/// Builds every node-level variable and constraint; the caller adds the
/// objective.
fn build_common(instance: &Instance, options: &BuildOptions) -> Result<(MilpModel, VariableAtlas), FormulationError> {
    check_instance(instance)?;
    let tree = &instance.tree;
    let np = instance.num_products();
    let nn = tree.num_nodes();
    let nd = tree.decision_nodes().len();
    let mut m = MilpModel::new(ObjectiveSense::Maximize);
    let inf = f64::INFINITY;
    let storage_integer = !options.relax_storage;

    let mut u = Vec::with_capacity(nd);
    let mut x = Vec::with_capacity(nd);
    let mut y = Vec::with_capacity(nd);
    for n in 0..nd {
        let tag = node_tag(tree.id(n));
        let mut un = Vec::with_capacity(np);
        let mut xn = Vec::with_capacity(np);
        let mut yn = Vec::with_capacity(np);
        let priority = (1 + tree.num_stages() - tree.id(n).stage).min(u8::MAX as usize) as u8;
        for p in &instance.products {
            un.push(
                (0..p.catalog.len())
                    .map(|k| {
                        let v = m.add_integer(format!("u[{tag}][{}][{k}]", p.id), 0.0, p.unit_cap(k) as f64);
                        m.set_priority(v, priority);
                        v
                    })
                    .collect::<Vec<_>>(),
            );
            xn.push(m.add_continuous(format!("x[{tag}][{}]", p.id), 0.0, inf));
            yn.push(m.add_continuous(format!("y[{tag}][{}]", p.id), 0.0, inf));
        }
        u.push(un);
        x.push(xn);
        y.push(yn);
    }

    let mut big_x = Vec::with_capacity(nn);
    let mut big_y = Vec::with_capacity(nn);
    let mut s = Vec::with_capacity(nn);
    let mut w = Vec::with_capacity(nn);
    for n in 0..nn {
        let id = tree.id(n);
        let tag = node_tag(id);
        let root = n == 0;
        let leaf = tree.is_leaf(n);
        let mut bx = Vec::with_capacity(np);
        let mut by = Vec::with_capacity(np);
        let mut sn = Vec::with_capacity(np);
        let mut wn = Vec::with_capacity(np);
        for p in &instance.products {
            let xcap = if root { 0.0 } else { p.capacity_limit };
            bx.push(m.add_continuous(format!("X[{tag}][{}]", p.id), 0.0, xcap));
            by.push(m.add_continuous(format!("Y[{tag}][{}]", p.id), 0.0, inf));
            let scap = if root || leaf { 0.0 } else { p.storage_limit };
            sn.push(m.add_var(format!("s[{tag}][{}]", p.id), 0.0, scap, storage_integer));
            let wcap = if root { 0.0 } else { p.capacity_limit + p.storage_limit };
            wn.push(m.add_var(format!("w[{tag}][{}]", p.id), 0.0, wcap, storage_integer));
        }
        big_x.push(bx);
        big_y.push(by);
        s.push(sn);
        w.push(wn);
    }
    let mut q = Vec::with_capacity(nn);
    let mut r = Vec::with_capacity(nn);
    let mut v = Vec::with_capacity(nn);
    let mut big_v = Vec::with_capacity(nn);
    for n in 0..nn {
        let tag = node_tag(tree.id(n));
        q.push(m.add_continuous(format!("q[{tag}]"), -inf, inf));
        r.push(m.add_continuous(format!("r[{tag}]"), -inf, inf));
        v.push(m.add_continuous(format!("v[{tag}]"), -inf, inf));
        big_v.push(m.add_continuous(format!("V[{tag}]"), -inf, inf));
    }

    for n in 0..nd {
        let tag = node_tag(tree.id(n));
        for (i, p) in instance.products.iter().enumerate() {
            let cap_terms = p.catalog.iter().enumerate().map(|(k, t)| (u[n][i][k], -t.capacity));
            m.add_constraint(
                format!("cap[{tag}][{}]", p.id),
                core::iter::once((x[n][i], 1.0)).chain(cap_terms),
                RowSense::Eq,
                0.0,
            );
            let cost_terms = p.catalog.iter().enumerate().map(|(k, t)| (u[n][i][k], -t.install_cost));
            m.add_constraint(
                format!("cost[{tag}][{}]", p.id),
                core::iter::once((y[n][i], 1.0)).chain(cost_terms),
                RowSense::Eq,
                0.0,
            );
        }
    }

    for n in 0..nn {
        let id = tree.id(n);
        let tag = node_tag(id);
        let parent = tree.parent_index(n);
        let decision = n < nd;
        let beta = discount(instance.interest_rate, id.stage);
        for (i, p) in instance.products.iter().enumerate() {
            if let Some(a) = parent {
                m.add_constraint(
                    format!("Xdyn[{tag}][{}]", p.id),
                    [(big_x[n][i], 1.0), (big_x[a][i], -1.0), (x[a][i], -1.0)],
                    RowSense::Eq,
                    0.0,
                );
            }
            let mut ydyn = vec![(big_y[n][i], 1.0)];
            if let Some(a) = parent {
                ydyn.push((big_y[a][i], -1.0));
            }
            if decision {
                ydyn.push((y[n][i], -1.0));
            }
            m.add_constraint(format!("Ydyn[{tag}][{}]", p.id), ydyn, RowSense::Eq, 0.0);

            let mut sales = vec![(big_x[n][i], 1.0), (s[n][i], -1.0), (w[n][i], -1.0)];
            if let Some(a) = parent {
                sales.push((s[a][i], 1.0));
            }
            for i2 in 0..np {
                let a = instance.alpha(i2, i);
                if a != 0.0 {
                    sales.push((big_x[n][i2], -a));
                }
            }
            let d = instance.demands[n][i];
            m.add_constraint(format!("sales_lo[{tag}][{}]", p.id), sales.clone(), RowSense::Ge, 0.0);
            m.add_constraint(format!("sales_hi[{tag}][{}]", p.id), sales, RowSense::Le, d);

            if decision {
                for i2 in 0..np {
                    let a = instance.alpha(i, i2);
                    if a != 0.0 {
                        let mut terms = vec![(big_x[n][i], a), (big_x[n][i2], -1.0)];
                        if let Some(par) = parent {
                            terms.push((s[par][i2], -1.0));
                        }
                        m.add_constraint(
                            format!("raw[{tag}][{}][{}]", p.id, instance.products[i2].id),
                            terms,
                            RowSense::Le,
                            0.0,
                        );
                    }
                }
            }
        }

        let mut qt = vec![(q[n], 1.0)];
        let mut rt = vec![(r[n], 1.0)];
        for (i, p) in instance.products.iter().enumerate() {
            if decision {
                qt.push((y[n][i], -1.0));
            }
            qt.push((big_x[n][i], -p.operating_cost));
            qt.push((s[n][i], -p.storage_cost));
            qt.push((w[n][i], -p.waste_cost));
            let pi = p.selling_price;
            rt.push((big_x[n][i], -pi));
            rt.push((s[n][i], pi));
            rt.push((w[n][i], pi));
            if let Some(a) = parent {
                rt.push((s[a][i], -pi));
            }
            for i2 in 0..np {
                let a = instance.alpha(i2, i);
                if a != 0.0 {
                    rt.push((big_x[n][i2], pi * a));
                }
            }
        }
        m.add_constraint(format!("qdef[{tag}]"), qt, RowSense::Eq, 0.0);
        m.add_constraint(format!("rdef[{tag}]"), rt, RowSense::Eq, 0.0);
        m.add_constraint(format!("vdef[{tag}]"), [(v[n], 1.0), (r[n], -beta), (q[n], beta)], RowSense::Eq, 0.0);
        let mut vt = vec![(big_v[n], 1.0), (v[n], -1.0)];
        if let Some(a) = parent {
            vt.push((big_v[a], -1.0));
        }
        m.add_constraint(format!("Vdyn[{tag}]"), vt, RowSense::Eq, 0.0);
    }

    if let Some(limit) = instance.budget_limit {
        for n in tree.leaves() {
            let tag = node_tag(tree.id(n));
            m.add_constraint(format!("budget[{tag}]"), (0..np).map(|i| (big_y[n][i], 1.0)), RowSense::Le, limit);
        }
    }

    let atlas = VariableAtlas {
        num_decision_nodes: nd,
        u,
        x,
        y,
        big_x,
        big_y,
        s,
        w,
        q,
        r,
        v,
        big_v,
        deviation: Vec::new(),
        expected: None,
        risk: None,
    };
    Ok((m, atlas))
}

/// Single-product model on a linear tree maximizing the final NPV `V_T`.
pub fn build_deterministic(instance: &Instance) -> Result<(MilpModel, VariableAtlas), FormulationError> {
    build_deterministic_with(instance, &BuildOptions::default())
}

pub fn build_deterministic_with(
    instance: &Instance,
    options: &BuildOptions,
) -> Result<(MilpModel, VariableAtlas), FormulationError> {
    if instance.num_products() != 1 {
        return Err(FormulationError::NotSingleProduct(instance.num_products()));
    }
    if !instance.tree.is_deterministic() {
        return Err(FormulationError::NotDeterministicTree);
    }
    let (mut m, atlas) = build_common(instance, options)?;
    let last = instance.tree.num_nodes() - 1;
    m.set_objective(atlas.big_v[last], 1.0);
    Ok((m, atlas))
}

/// Stochastic model on any tree and any number of products.
pub fn build_stochastic(
    instance: &Instance,
    mode: ObjectiveMode,
) -> Result<(MilpModel, VariableAtlas), FormulationError> {
    build_stochastic_with(instance, mode, &BuildOptions::default())
}

pub fn build_stochastic_with(
    instance: &Instance,
    mode: ObjectiveMode,
    options: &BuildOptions,
) -> Result<(MilpModel, VariableAtlas), FormulationError> {
    let (mut m, mut atlas) = build_common(instance, options)?;
    let tree = &instance.tree;
    let e = m.add_continuous("E", f64::NEG_INFINITY, f64::INFINITY);
    let mut terms: Vec<(VarId, f64)> = tree.leaves().map(|n| (atlas.big_v[n], -tree.joint_prob_at(n))).collect();
    terms.push((e, 1.0));
    m.add_constraint("Edef", terms, RowSense::Eq, 0.0);
    atlas.expected = Some(e);
    linearize_risk(&mut m, &mut atlas, tree);
    let risk = atlas.risk.expect("risk variable was just added");
    match mode {
        ObjectiveMode::MaximizeExpected => {
            m.sense = ObjectiveSense::Maximize;
            m.set_objective(e, 1.0);
        }
        ObjectiveMode::MinimizeRisk { target, sense } => {
            m.sense = ObjectiveSense::Minimize;
            m.set_objective(risk, 1.0);
            match sense {
                TargetSense::AtLeast => m.set_bounds(e, target, f64::INFINITY),
                TargetSense::Equal => {
                    let band = TARGET_BAND * target.abs();
                    m.set_bounds(e, target - band, target + band);
                }
            }
        }
        ObjectiveMode::MaximizeExpectedRiskCapped { risk_cap } => {
            m.sense = ObjectiveSense::Maximize;
            m.set_objective(e, 1.0);
            m.set_bounds(risk, 0.0, risk_cap);
        }
    }
    Ok((m, atlas))
}

/// Adds `delta_j >= +-(V_j - E)` for every leaf `j` and
/// `R = sum_j p_j delta_j`. `R` is an upper bound on the mean deviation at any
/// feasible point and equals it whenever `R` is pushed down.
///
/// # Panics
///
/// If `atlas.expected` has not been created yet.
pub fn linearize_risk(model: &mut MilpModel, atlas: &mut VariableAtlas, tree: &ScenarioTree) {
    let e = atlas.expected.expect("linearize_risk needs the expected-value variable");
    let risk = model.add_continuous("R", 0.0, f64::INFINITY);
    let mut rdef = vec![(risk, 1.0)];
    for n in tree.leaves() {
        let tag = node_tag(tree.id(n));
        let d = model.add_continuous(format!("dev[{tag}]"), 0.0, f64::INFINITY);
        model.add_constraint(format!("devp[{tag}]"), [(d, 1.0), (atlas.big_v[n], -1.0), (e, 1.0)], RowSense::Ge, 0.0);
        model.add_constraint(format!("devm[{tag}]"), [(d, 1.0), (atlas.big_v[n], 1.0), (e, -1.0)], RowSense::Ge, 0.0);
        rdef.push((d, -tree.joint_prob_at(n)));
        atlas.deviation.push(d);
    }
    model.add_constraint("Rdef", rdef, RowSense::Eq, 0.0);
    atlas.risk = Some(risk);
}

/// Installation counts `units[n][i][k]` for every decision node.
pub type Installs = Vec<Vec<Vec<u32>>>;

/// Fixes every installation variable of `model` to `units`.
pub fn fix_installs(model: &mut MilpModel, atlas: &VariableAtlas, units: &Installs) -> Result<(), FormulationError> {
    if units.len() != atlas.u.len()
        || units.iter().zip(&atlas.u).any(|(a, b)| a.len() != b.len() || a.iter().zip(b).any(|(c, d)| c.len() != d.len()))
    {
        return Err(FormulationError::InfeasibleSolutionProvided("installation table has the wrong shape".into()));
    }
    for (un, vn) in units.iter().zip(&atlas.u) {
        for (ui, vi) in un.iter().zip(vn) {
            for (&count, &var) in ui.iter().zip(vi) {
                let c = count as f64;
                if c > model.var(var).upper {
                    return Err(FormulationError::InfeasibleSolutionProvided(format!(
                        "{} = {count} exceeds its capacity cap",
                        model.var(var).name
                    )));
                }
                model.set_bounds(var, c, c);
            }
        }
    }
    Ok(())
}

/// A complete operating plan and the cash flows it produces.
#[derive(Debug, Clone, PartialEq)]
pub struct InvestmentPlan {
    pub product_ids: Vec<String>,
    /// Catalog capacities per product, indexing the last level of `units`.
    pub capacities: Vec<Vec<f64>>,
    pub units: Installs,
    /// `[node][product]`
    pub storage: Vec<Vec<f64>>,
    pub waste: Vec<Vec<f64>>,
    /// Discounted cash flow `v` per node.
    pub cash_flow: Vec<f64>,
    /// Cumulative NPV `V` per node.
    pub cumulative: Vec<f64>,
    pub expected: f64,
    pub risk: f64,
}

/// One nonzero installation: `count` units of `capacity` for `product` at
/// `node`.
#[derive(Debug, Clone, PartialEq)]
pub struct Installation {
    pub node: NodeId,
    pub product: usize,
    pub capacity: f64,
    pub count: u32,
}

impl InvestmentPlan {
    /// Recomputes every derived quantity from installations, storage and
    /// waste, checking all constraints of the model.
    pub fn evaluate(
        instance: &Instance,
        units: Installs,
        storage: Vec<Vec<f64>>,
        waste: Vec<Vec<f64>>,
    ) -> Result<InvestmentPlan, FormulationError> {
        check_instance(instance)?;
        let tree = &instance.tree;
        let np = instance.num_products();
        let nn = tree.num_nodes();
        let nd = tree.decision_nodes().len();
        let bad = |msg: String| Err(FormulationError::InfeasibleSolutionProvided(msg));
        if units.len() != nd || storage.len() != nn || waste.len() != nn {
            return bad("plan tables do not match the tree".into());
        }
        for n in 0..nn {
            if storage[n].len() != np || waste[n].len() != np || (n < nd && units[n].len() != np) {
                return bad(format!("plan tables do not match the products at node {}", tree.id(n)));
            }
            if n < nd {
                for i in 0..np {
                    if units[n][i].len() != instance.products[i].catalog.len() {
                        return bad(format!("catalog size mismatch at node {}", tree.id(n)));
                    }
                }
            }
        }
        let installed = |n: usize, i: usize, cost: bool| -> f64 {
            if n >= nd {
                return 0.0;
            }
            instance.products[i]
                .catalog
                .iter()
                .zip(&units[n][i])
                .map(|(t, &c)| c as f64 * if cost { t.install_cost } else { t.capacity })
                .sum()
        };
        let mut big_x = vec![vec![0.0; np]; nn];
        let mut big_y = vec![vec![0.0; np]; nn];
        let mut cash_flow = vec![0.0; nn];
        let mut cumulative = vec![0.0; nn];
        for n in 0..nn {
            let id = tree.id(n);
            let parent = tree.parent_index(n);
            let leaf = tree.is_leaf(n);
            for i in 0..np {
                big_x[n][i] = parent.map_or(0.0, |a| big_x[a][i] + installed(a, i, false));
                big_y[n][i] = parent.map_or(0.0, |a| big_y[a][i]) + installed(n, i, true);
            }
            let mut q = 0.0;
            let mut r = 0.0;
            for (i, p) in instance.products.iter().enumerate() {
                let (sv, wv) = (storage[n][i], waste[n][i]);
                let s_par = parent.map_or(0.0, |a| storage[a][i]);
                let consumed: f64 = (0..np).map(|i2| instance.alpha(i2, i) * big_x[n][i2]).sum();
                let sales = s_par + big_x[n][i] - sv - wv - consumed;
                let d = instance.demands[n][i];
                if sales < -CHECK_TOL || sales > d + CHECK_TOL {
                    return bad(format!("sales of {} at {id} are {sales}, outside [0, {d}]", p.id));
                }
                let s_cap = if n == 0 || leaf { 0.0 } else { p.storage_limit };
                if sv < -CHECK_TOL || sv > s_cap + CHECK_TOL || wv < -CHECK_TOL || (n == 0 && wv > CHECK_TOL) {
                    return bad(format!("storage or waste of {} at {id} out of bounds", p.id));
                }
                if big_x[n][i] > p.capacity_limit + CHECK_TOL {
                    return bad(format!("capacity of {} at {id} exceeds its limit", p.id));
                }
                if n < nd {
                    for i2 in 0..np {
                        let a = instance.alpha(i, i2);
                        let avail = parent.map_or(0.0, |par| storage[par][i2]) + big_x[n][i2];
                        if a != 0.0 && a * big_x[n][i] > avail + CHECK_TOL {
                            return bad(format!("not enough {} at {id} to produce {}", instance.products[i2].id, p.id));
                        }
                    }
                }
                q += installed(n, i, true) + p.operating_cost * big_x[n][i] + p.storage_cost * sv + p.waste_cost * wv;
                r += p.selling_price * sales;
            }
            cash_flow[n] = discount(instance.interest_rate, id.stage) * (r - q);
            cumulative[n] = parent.map_or(0.0, |a| cumulative[a]) + cash_flow[n];
        }
        if let Some(limit) = instance.budget_limit {
            for n in tree.leaves() {
                let total: f64 = big_y[n].iter().sum();
                if total > limit + CHECK_TOL * limit.abs().max(1.0) {
                    return bad(format!("installation cost {total} at {} exceeds the budget {limit}", tree.id(n)));
                }
            }
        }
        let leaves = tree.leaves();
        let expected: f64 = leaves.clone().map(|n| tree.joint_prob_at(n) * cumulative[n]).sum();
        let risk: f64 = leaves.map(|n| tree.joint_prob_at(n) * (cumulative[n] - expected).abs()).sum();
        Ok(InvestmentPlan {
            product_ids: instance.products.iter().map(|p| p.id.clone()).collect(),
            capacities: instance.products.iter().map(|p| p.catalog.iter().map(|t| t.capacity).collect()).collect(),
            units,
            storage,
            waste,
            cash_flow,
            cumulative,
            expected,
            risk,
        })
    }

    /// Installed capacity of `product` at decision node `node`.
    pub fn installed_capacity(&self, node: usize, product: usize) -> f64 {
        self.units
            .get(node)
            .map_or(0.0, |un| un[product].iter().zip(&self.capacities[product]).map(|(&c, b)| c as f64 * b).sum())
    }

    /// All nonzero installations, node-major.
    pub fn installations(&self, tree: &ScenarioTree) -> Vec<Installation> {
        let mut out = Vec::new();
        for (n, un) in self.units.iter().enumerate() {
            for (i, ui) in un.iter().enumerate() {
                for (k, &count) in ui.iter().enumerate() {
                    if count > 0 {
                        out.push(Installation { node: tree.id(n), product: i, capacity: self.capacities[i][k], count });
                    }
                }
            }
        }
        out
    }

    pub fn is_empty(&self) -> bool {
        self.units.iter().flatten().flatten().all(|&c| c == 0)
    }

    /// Installed capacity of `product` per decision node along the path to
    /// leaf `leaf` (flat index), one entry per stage `1..T-1`.
    pub fn capacity_along_path(&self, tree: &ScenarioTree, leaf: usize, product: usize) -> Vec<f64> {
        let mut path = tree.path_to(leaf);
        path.pop();
        path.into_iter().map(|n| self.installed_capacity(n, product)).collect()
    }

    /// Waste of `product` at every leaf.
    pub fn leaf_waste(&self, tree: &ScenarioTree, product: usize) -> Vec<f64> {
        tree.leaves().map(|n| self.waste[n][product]).collect()
    }
}

/// Reads the plan out of a solution of a model built by this module. The
/// reported `E` and `R` are recomputed from the leaf NPVs, so they are exact
/// even when the model's `R` variable was not minimized.
pub fn extract_plan(
    instance: &Instance,
    atlas: &VariableAtlas,
    solution: &Solution,
) -> Result<InvestmentPlan, FormulationError> {
    let values = solution
        .incumbent()
        .map_err(|_| FormulationError::InfeasibleSolutionProvided("the solution has no feasible point".into()))?;
    let get = |v: VarId| -> Result<f64, FormulationError> {
        values.get(v.0).copied().ok_or_else(|| {
            FormulationError::InfeasibleSolutionProvided("solution does not belong to this model".into())
        })
    };
    let mut units: Installs = Vec::with_capacity(atlas.u.len());
    for un in &atlas.u {
        let mut row = Vec::with_capacity(un.len());
        for ui in un {
            let mut counts = Vec::with_capacity(ui.len());
            for &var in ui {
                let val = get(var)?;
                if val < -1e-6 || math::frac_dist(val) > 1e-6 {
                    return Err(FormulationError::InfeasibleSolutionProvided(format!("install count {val} is not integral")));
                }
                counts.push(math::round(val) as u32);
            }
            row.push(counts);
        }
        units.push(row);
    }
    let snap = |x: f64| {
        let r = math::round(x);
        if (x - r).abs() <= 1e-6 {
            r + 0.0
        } else {
            x
        }
    };
    let table = |vars: &Vec<Vec<VarId>>| -> Result<Vec<Vec<f64>>, FormulationError> {
        vars.iter().map(|row| row.iter().map(|&v| get(v).map(snap)).collect()).collect()
    };
    let storage = table(&atlas.s)?;
    let waste = table(&atlas.w)?;
    InvestmentPlan::evaluate(instance, units, storage, waste)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{ProductSpec, TechnologyOption};
    use crate::milp::{solve_milp, MilpSettings};

    fn one_product(tree: ScenarioTree, demands: Vec<f64>, catalog: Vec<TechnologyOption>) -> Instance {
        Instance {
            demands: demands.into_iter().map(|d| vec![d]).collect(),
            tree,
            products: vec![ProductSpec {
                id: "p".into(),
                catalog,
                storage_cost: 1.0,
                waste_cost: 1.0,
                operating_cost: 1.0,
                selling_price: 10.0,
                capacity_limit: 300.0,
                storage_limit: 100.0,
            }],
            interdependency: vec![vec![0.0]],
            budget_limit: None,
            interest_rate: 0.0,
        }
    }

    #[test]
    fn zero_demand_installs_nothing() {
        let inst = one_product(
            ScenarioTree::deterministic(3).unwrap(),
            vec![0.0; 3],
            vec![TechnologyOption::new(50.0, 60.0), TechnologyOption::new(100.0, 100.0)],
        );
        let (m, atlas) = build_deterministic(&inst).unwrap();
        let sol = solve_milp(&m, &MilpSettings::exact()).unwrap();
        let plan = extract_plan(&inst, &atlas, &sol).unwrap();
        assert!(plan.is_empty());
        assert_eq!(sol.objective, 0.0);
        assert_eq!(plan.expected, 0.0);
    }

    #[test]
    fn deterministic_builder_rejects_branching_and_multiple_products() {
        let tree = ScenarioTree::build(2, &[2], &[]).unwrap();
        let inst = one_product(tree, vec![0.0; 3], vec![TechnologyOption::new(1.0, 1.0)]);
        assert_eq!(build_deterministic(&inst).unwrap_err(), FormulationError::NotDeterministicTree);
        let mut two = one_product(ScenarioTree::deterministic(2).unwrap(), vec![0.0; 2], vec![]);
        two.products.push(two.products[0].clone());
        two.demands = vec![vec![0.0, 0.0]; 2];
        two.interdependency = vec![vec![0.0; 2]; 2];
        assert_eq!(build_deterministic(&two).unwrap_err(), FormulationError::NotSingleProduct(2));
    }

    #[test]
    fn missing_demand_is_reported() {
        let mut inst = one_product(ScenarioTree::deterministic(2).unwrap(), vec![1.0, 1.0], vec![]);
        inst.demands[1].clear();
        assert!(matches!(build_stochastic(&inst, ObjectiveMode::MaximizeExpected), Err(FormulationError::MissingDemand { .. })));
    }

    #[test]
    fn risk_of_two_point_distribution() {
        let tree = ScenarioTree::build(2, &[2], &[]).unwrap();
        let inst = one_product(tree.clone(), vec![0.0, 0.0, 0.0], vec![]);
        let plan = InvestmentPlan::evaluate(&inst, vec![vec![vec![]]], vec![vec![0.0]; 3], vec![vec![0.0]; 3]).unwrap();
        assert_eq!((plan.expected, plan.risk), (0.0, 0.0));

        // Hand-built model: V = {0, 100} on two equiprobable leaves.
        let mut m = MilpModel::new(ObjectiveSense::Minimize);
        let v0 = m.add_continuous("V0", 0.0, 0.0);
        let v1 = m.add_continuous("V1", 100.0, 100.0);
        let e = m.add_continuous("E", f64::NEG_INFINITY, f64::INFINITY);
        m.add_constraint("E", [(e, 1.0), (v0, -0.5), (v1, -0.5)], RowSense::Eq, 0.0);
        let mut atlas = VariableAtlas {
            num_decision_nodes: 1,
            u: vec![],
            x: vec![],
            y: vec![],
            big_x: vec![],
            big_y: vec![],
            s: vec![],
            w: vec![],
            q: vec![],
            r: vec![],
            v: vec![],
            big_v: vec![v0, v0, v1],
            deviation: vec![],
            expected: Some(e),
            risk: None,
        };
        linearize_risk(&mut m, &mut atlas, &tree);
        m.set_objective(atlas.risk.unwrap(), 1.0);
        let sol = solve_milp(&m, &MilpSettings::exact()).unwrap();
        assert!((sol.value(e) - 50.0).abs() < 1e-9);
        assert!((sol.objective - 50.0).abs() < 1e-9);
    }
}
