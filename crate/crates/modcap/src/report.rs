//! Plan, metrics, summary and CSV outputs.

use std::fmt::Write as _;
use std::io::Write;

use modcap_core::analysis::scenario_outcomes;
use modcap_core::formulation::{FormulationError, Installs};
use modcap_core::pareto::ParetoPoint;
use modcap_core::{Instance, InvestmentPlan};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::{node_key, parse_node_key, LoadError};

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("malformed plan JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Key(#[from] LoadError),
    #[error("node {0} is not a decision node of the instance")]
    NotDecisionNode(String),
    #[error("unknown product `{0}`")]
    UnknownProduct(String),
    #[error("product `{product}` has no unit of capacity {capacity}")]
    UnknownCapacity { product: String, capacity: f64 },
    #[error("the plan has no operating data for node {0}")]
    MissingNode(String),
    #[error(transparent)]
    Formulation(#[from] FormulationError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstallationRecord {
    pub node: String,
    pub product: String,
    pub capacity: f64,
    pub count: u32,
}

/// Operating data of one node; `storage` and `waste` follow the plan's
/// product order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeRecord {
    pub node: String,
    pub probability: f64,
    pub storage: Vec<f64>,
    pub waste: Vec<f64>,
    pub cash_flow: f64,
    pub cumulative: f64,
}

/// Serialized [`InvestmentPlan`]. A file with only `installations` is a
/// valid input for fixing installations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanFile {
    #[serde(default)]
    pub instance: String,
    #[serde(default)]
    pub case: Option<String>,
    #[serde(default)]
    pub discounted: bool,
    #[serde(default)]
    pub products: Vec<String>,
    #[serde(default)]
    pub expected: f64,
    #[serde(default)]
    pub risk: f64,
    pub installations: Vec<InstallationRecord>,
    #[serde(default)]
    pub nodes: Vec<NodeRecord>,
}

impl PlanFile {
    pub fn from_plan(name: &str, case: Option<&str>, instance: &Instance, plan: &InvestmentPlan) -> Self {
        let tree = &instance.tree;
        let installations = plan
            .installations(tree)
            .into_iter()
            .map(|a| InstallationRecord {
                node: node_key(a.node),
                product: plan.product_ids[a.product].clone(),
                capacity: a.capacity,
                count: a.count,
            })
            .collect();
        let nodes = (0..tree.num_nodes())
            .map(|n| NodeRecord {
                node: node_key(tree.id(n)),
                probability: tree.joint_prob_at(n),
                storage: plan.storage[n].clone(),
                waste: plan.waste[n].clone(),
                cash_flow: plan.cash_flow[n],
                cumulative: plan.cumulative[n],
            })
            .collect();
        PlanFile {
            instance: name.to_string(),
            case: case.map(str::to_string),
            discounted: instance.interest_rate > 0.0,
            products: plan.product_ids.clone(),
            expected: plan.expected,
            risk: plan.risk,
            installations,
            nodes,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, PlanError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("plans serialize");
        s.push('\n');
        s
    }

    /// Installation counts on the decision nodes of `instance`.
    pub fn units(&self, instance: &Instance) -> Result<Installs, PlanError> {
        let tree = &instance.tree;
        let nd = tree.decision_nodes().len();
        let mut units: Installs =
            (0..nd).map(|_| instance.products.iter().map(|p| vec![0; p.catalog.len()]).collect()).collect();
        for rec in &self.installations {
            let id = parse_node_key(&rec.node)?;
            let n = tree.index_of(id).ok().filter(|&n| n < nd).ok_or_else(|| PlanError::NotDecisionNode(rec.node.clone()))?;
            let i = instance.product_index(&rec.product).ok_or_else(|| PlanError::UnknownProduct(rec.product.clone()))?;
            let k = instance.products[i]
                .catalog
                .iter()
                .position(|t| (t.capacity - rec.capacity).abs() <= 1e-9 * rec.capacity.abs().max(1.0))
                .ok_or_else(|| PlanError::UnknownCapacity { product: rec.product.clone(), capacity: rec.capacity })?;
            units[n][i][k] += rec.count;
        }
        Ok(units)
    }

    /// Rebuilds the plan from installations, storage and waste and
    /// recomputes every cash flow against `instance`.
    pub fn reevaluate(&self, instance: &Instance) -> Result<InvestmentPlan, PlanError> {
        let units = self.units(instance)?;
        let tree = &instance.tree;
        let order: Vec<usize> = instance
            .products
            .iter()
            .map(|p| self.products.iter().position(|id| *id == p.id).ok_or_else(|| PlanError::UnknownProduct(p.id.clone())))
            .collect::<Result<_, _>>()?;
        let mut storage = Vec::with_capacity(tree.num_nodes());
        let mut waste = Vec::with_capacity(tree.num_nodes());
        for n in 0..tree.num_nodes() {
            let key = node_key(tree.id(n));
            let rec = self.nodes.iter().find(|r| r.node == key).ok_or_else(|| PlanError::MissingNode(key.clone()))?;
            let pick = |v: &[f64]| order.iter().map(|&j| v.get(j).copied().unwrap_or(0.0)).collect::<Vec<f64>>();
            storage.push(pick(&rec.storage));
            waste.push(pick(&rec.waste));
        }
        Ok(InvestmentPlan::evaluate(instance, units, storage, waste)?)
    }
}

/// Numbers of a single solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub instance: String,
    pub case: Option<String>,
    pub mode: String,
    pub epsilon: Option<f64>,
    pub discounted: bool,
    pub relaxed_storage: bool,
    pub fixed_plan: bool,
    pub status: String,
    pub expected: f64,
    pub risk: f64,
    pub objective: f64,
    pub bound: f64,
    pub gap: f64,
    pub runtime: f64,
    pub node_count: u64,
    pub simplex_iterations: u64,
    pub variables: usize,
    pub integer_variables: usize,
    pub constraints: usize,
}

impl Metrics {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("metrics serialize");
        s.push('\n');
        s
    }
}

/// Money rounded to the cent with thousands separators.
pub fn money(x: f64) -> String {
    let cents = (x * 100.0).round() as i128;
    let sign = if cents < 0 { "-" } else { "" };
    let cents = cents.abs();
    let whole = (cents / 100).to_string();
    let mut grouped = String::new();
    for (k, ch) in whole.chars().enumerate() {
        if k > 0 && (whole.len() - k).is_multiple_of(3) {
            grouped.push(',');
        }
        grouped.push(ch);
    }
    format!("{sign}{grouped}.{:02}", cents % 100)
}

/// Human-readable report of a solve.
pub fn summary(metrics: &Metrics, instance: &Instance, plan: Option<&InvestmentPlan>) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "instance      {}", metrics.instance);
    if let Some(case) = &metrics.case {
        let _ = writeln!(s, "case          {case}");
    }
    let eps = metrics.epsilon.map(|e| format!(" (epsilon {e})")).unwrap_or_default();
    let _ = writeln!(s, "mode          {}{eps}", metrics.mode);
    let _ = writeln!(s, "npv           {}", if metrics.discounted { "discounted" } else { "undiscounted" });
    let _ = writeln!(s, "status        {}", metrics.status);
    let _ = writeln!(s, "model         {} variables ({} integer), {} constraints", metrics.variables, metrics.integer_variables, metrics.constraints);
    let _ = writeln!(s, "search        {} nodes, {} simplex iterations, {:.2} s", metrics.node_count, metrics.simplex_iterations, metrics.runtime);
    let Some(plan) = plan else {
        let _ = writeln!(s, "no feasible plan");
        return s;
    };
    let _ = writeln!(s, "expected NPV  $ {}", money(plan.expected));
    let _ = writeln!(s, "risk          $ {}", money(plan.risk));
    let _ = writeln!(s, "gap           {:.4}%", 100.0 * metrics.gap);
    let installs = plan.installations(&instance.tree);
    if installs.is_empty() {
        let _ = writeln!(s, "installations none");
    } else {
        let _ = writeln!(s, "installations");
        for a in installs {
            let _ = writeln!(s, "  {:<8} {:<14} {} x {}", a.node.to_string(), plan.product_ids[a.product], a.capacity, a.count);
        }
    }
    s
}

/// One row per leaf: path, probability, NPV and per-stage waste of every
/// product.
pub fn write_outcomes<W: Write>(out: W, instance: &Instance, plan: &InvestmentPlan) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["leaf".to_string(), "path".into(), "probability".into(), "npv".into()];
    header.extend(plan.product_ids.iter().map(|id| format!("waste_{id}")));
    w.write_record(&header)?;
    let per_product: Vec<_> = (0..instance.num_products()).map(|i| scenario_outcomes(instance, plan, i)).collect();
    let Some(first) = per_product.first() else {
        return w.flush().map_err(Into::into);
    };
    for (j, o) in first.iter().enumerate() {
        let path: Vec<String> = o.path.iter().map(|&id| node_key(id)).collect();
        let mut row = vec![node_key(*o.path.last().unwrap()), path.join(" "), o.probability.to_string(), o.npv.to_string()];
        for outcomes in &per_product {
            let ws: Vec<String> = outcomes[j].waste_by_stage.iter().map(f64::to_string).collect();
            row.push(ws.join(" "));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct FrontierRow<'a> {
    epsilon: f64,
    expected: f64,
    risk: f64,
    status: &'a str,
    plan_id: &'a str,
}

/// Frontier CSV with columns `epsilon, expected, risk, status, plan_id`.
pub fn write_frontier<W: Write>(out: W, points: &[ParetoPoint], plan_ids: &[String]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for (p, id) in points.iter().zip(plan_ids) {
        w.serialize(FrontierRow { epsilon: p.epsilon, expected: p.expected, risk: p.risk, status: p.status.label(), plan_id: id })?;
    }
    if points.is_empty() {
        w.write_record(["epsilon", "expected", "risk", "status", "plan_id"])?;
    }
    w.flush()?;
    Ok(())
}

/// Lower-case label with runs of other characters collapsed to `-`.
pub fn slug(label: &str) -> String {
    let mut s = String::new();
    for ch in label.chars() {
        if ch.is_ascii_alphanumeric() {
            s.push(ch.to_ascii_lowercase());
        } else if !s.ends_with('-') && !s.is_empty() {
            s.push('-');
        }
    }
    while s.ends_with('-') {
        s.pop();
    }
    if s.is_empty() {
        s.push_str("full");
    }
    s
}
