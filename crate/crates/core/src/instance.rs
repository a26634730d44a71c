//! Economic and technological data of a capacity expansion instance.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use crate::math;
use crate::tree::{NodeId, ScenarioTree, TreeError};

/// One installable technology: `capacity` units per stage for `install_cost`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TechnologyOption {
    pub capacity: f64,
    pub install_cost: f64,
}

impl TechnologyOption {
    pub const fn new(capacity: f64, install_cost: f64) -> Self {
        TechnologyOption { capacity, install_cost }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProductSpec {
    pub id: String,
    pub catalog: Vec<TechnologyOption>,
    pub storage_cost: f64,
    pub waste_cost: f64,
    pub operating_cost: f64,
    pub selling_price: f64,
    pub capacity_limit: f64,
    pub storage_limit: f64,
}

impl ProductSpec {
    /// Largest number of units of catalog entry `k` that fits under the
    /// capacity limit.
    pub fn unit_cap(&self, k: usize) -> u32 {
        let b = self.catalog[k].capacity;
        if !(b > 0.0) || !(self.capacity_limit >= 0.0) {
            return 0;
        }
        math::floor(self.capacity_limit / b + 1e-9) as u32
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InstanceError {
    #[error("stage {stage} is outside 1..={horizon}")]
    StageOutOfRange { stage: usize, horizon: usize },
    #[error("demand table has {got} rows, the tree has {expected} nodes")]
    DemandShape { expected: usize, got: usize },
    #[error("interdependency matrix must be {0}x{0}")]
    AlphaShape(usize),
    #[error("unknown product `{0}`")]
    UnknownProduct(String),
    #[error("catalog of `{product}` has no entry with capacity {capacity}")]
    UnknownTechnology { product: String, capacity: f64 },
    #[error(transparent)]
    Tree(#[from] TreeError),
}

/// A complete capacity expansion instance.
///
/// `interdependency[i][i2]` is the number of units of product `i2` consumed per
/// unit of product `i` produced. `demands[n][i]` is the demand for product `i`
/// at the node with flat index `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub tree: ScenarioTree,
    pub products: Vec<ProductSpec>,
    pub interdependency: Vec<Vec<f64>>,
    pub demands: Vec<Vec<f64>>,
    pub budget_limit: Option<f64>,
    pub interest_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiagnosticKind {
    NonPositiveCapacity,
    NonPositiveInstallCost,
    NegativeCost,
    NonPositiveCapacityLimit,
    NegativeStorageLimit,
    NonIntegralQuantity,
    NonzeroAlphaDiagonal,
    NegativeAlpha,
    AlphaShape,
    MissingDemand,
    NegativeDemand,
    NegativeBudget,
    InterestRateRange,
    DuplicateProduct,
    TwoThirdsRule,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub severity: Severity,
    pub kind: DiagnosticKind,
    pub message: String,
    /// Relative deviation for [`DiagnosticKind::TwoThirdsRule`], 0 otherwise.
    pub magnitude: f64,
}

impl Diagnostic {
    fn error(kind: DiagnosticKind, message: String) -> Self {
        Diagnostic { severity: Severity::Error, kind, message, magnitude: 0.0 }
    }
}

fn is_integral(x: f64) -> bool {
    x.is_finite() && math::frac_dist(x) <= 1e-9
}

impl Instance {
    pub fn num_products(&self) -> usize {
        self.products.len()
    }

    pub fn product_index(&self, id: &str) -> Option<usize> {
        self.products.iter().position(|p| p.id == id)
    }

    pub fn alpha(&self, producer: usize, consumed: usize) -> f64 {
        self.interdependency
            .get(producer)
            .and_then(|row| row.get(consumed))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn demand(&self, node: NodeId, product: usize) -> Result<f64, InstanceError> {
        let n = self.tree.index_of(node)?;
        Ok(self.demands[n][product])
    }

    /// `beta_t = 1 / (1 + gamma)^(t-1)`.
    pub fn discount_factor(&self, stage: usize) -> Result<f64, InstanceError> {
        let horizon = self.tree.num_stages();
        if stage == 0 || stage > horizon {
            return Err(InstanceError::StageOutOfRange { stage, horizon });
        }
        Ok(discount(self.interest_rate, stage))
    }

    /// Copy with `gamma = 0` (undiscounted NPV).
    pub fn undiscounted(&self) -> Instance {
        Instance { interest_rate: 0.0, ..self.clone() }
    }

    /// Copy truncated to the first `stages` stages of the horizon.
    pub fn truncated(&self, stages: usize) -> Result<Instance, InstanceError> {
        let tree = self.tree.truncated(stages)?;
        let demands = self.demands[..tree.num_nodes()].to_vec();
        Ok(Instance { tree, demands, ..self.clone() })
    }

    /// Copy whose catalogs only keep the listed capacities.
    ///
    /// `keep` pairs a product id with the capacities to retain; products not
    /// mentioned keep their whole catalog.
    pub fn restricted_catalog(&self, keep: &[(String, Vec<f64>)]) -> Result<Instance, InstanceError> {
        let mut out = self.clone();
        for (id, caps) in keep {
            let i = self.product_index(id).ok_or_else(|| InstanceError::UnknownProduct(id.clone()))?;
            for &c in caps {
                if !self.products[i].catalog.iter().any(|t| t.capacity == c) {
                    return Err(InstanceError::UnknownTechnology { product: id.clone(), capacity: c });
                }
            }
            out.products[i].catalog.retain(|t| caps.contains(&t.capacity));
        }
        Ok(out)
    }

    /// Checks every data invariant; never fails, returns diagnostics instead.
    ///
    /// Catalog pairs are compared against the 2/3 scaling rule
    /// `B_k / B_k' = (C_k / C_k')^(3/2)` and any deviation is reported as a
    /// warning carrying its relative magnitude.
    pub fn validate(&self) -> Vec<Diagnostic> {
        use DiagnosticKind::*;
        let mut out = Vec::new();
        let np = self.products.len();

        for (i, p) in self.products.iter().enumerate() {
            if self.products[..i].iter().any(|q| q.id == p.id) {
                out.push(Diagnostic::error(DuplicateProduct, format!("product `{}` is listed twice", p.id)));
            }
            for (k, t) in p.catalog.iter().enumerate() {
                if !(t.capacity > 0.0) {
                    out.push(Diagnostic::error(
                        NonPositiveCapacity,
                        format!("`{}` technology {} has capacity {}", p.id, k + 1, t.capacity),
                    ));
                } else if !is_integral(t.capacity) {
                    out.push(Diagnostic::error(
                        NonIntegralQuantity,
                        format!("`{}` technology {} capacity {} is not an integer", p.id, k + 1, t.capacity),
                    ));
                }
                if !(t.install_cost > 0.0) {
                    out.push(Diagnostic::error(
                        NonPositiveInstallCost,
                        format!("`{}` technology {} has install cost {}", p.id, k + 1, t.install_cost),
                    ));
                }
            }
            for (name, v) in [
                ("storage_cost", p.storage_cost),
                ("waste_cost", p.waste_cost),
                ("operating_cost", p.operating_cost),
                ("selling_price", p.selling_price),
            ] {
                if !(v >= 0.0) || !v.is_finite() {
                    out.push(Diagnostic::error(NegativeCost, format!("`{}` {} is {}", p.id, name, v)));
                }
            }
            if !(p.capacity_limit > 0.0) {
                out.push(Diagnostic::error(
                    NonPositiveCapacityLimit,
                    format!("`{}` capacity_limit is {}", p.id, p.capacity_limit),
                ));
            } else if !is_integral(p.capacity_limit) {
                out.push(Diagnostic::error(
                    NonIntegralQuantity,
                    format!("`{}` capacity_limit {} is not an integer", p.id, p.capacity_limit),
                ));
            }
            if !(p.storage_limit >= 0.0) {
                out.push(Diagnostic::error(
                    NegativeStorageLimit,
                    format!("`{}` storage_limit is {}", p.id, p.storage_limit),
                ));
            } else if !is_integral(p.storage_limit) {
                out.push(Diagnostic::error(
                    NonIntegralQuantity,
                    format!("`{}` storage_limit {} is not an integer", p.id, p.storage_limit),
                ));
            }
            out.extend(two_thirds_rule(p));
        }

        if self.interdependency.len() != np || self.interdependency.iter().any(|r| r.len() != np) {
            out.push(Diagnostic::error(AlphaShape, format!("interdependency matrix must be {np}x{np}")));
        } else {
            for i in 0..np {
                for j in 0..np {
                    let a = self.interdependency[i][j];
                    if i == j && a != 0.0 {
                        out.push(Diagnostic::error(
                            NonzeroAlphaDiagonal,
                            format!("alpha(`{}`,`{}`) = {} must be 0", self.products[i].id, self.products[j].id, a),
                        ));
                    } else if !(a >= 0.0) || !a.is_finite() {
                        out.push(Diagnostic::error(
                            NegativeAlpha,
                            format!("alpha(`{}`,`{}`) = {}", self.products[i].id, self.products[j].id, a),
                        ));
                    }
                }
            }
        }

        if self.demands.len() != self.tree.num_nodes() {
            out.push(Diagnostic::error(
                MissingDemand,
                format!("demands cover {} nodes, the tree has {}", self.demands.len(), self.tree.num_nodes()),
            ));
        }
        for (n, row) in self.demands.iter().enumerate().take(self.tree.num_nodes()) {
            let node = self.tree.id(n);
            if row.len() != np {
                out.push(Diagnostic::error(MissingDemand, format!("node {node} lists {} demands, expected {np}", row.len())));
                continue;
            }
            for (i, &d) in row.iter().enumerate() {
                if !(d >= 0.0) {
                    out.push(Diagnostic::error(
                        NegativeDemand,
                        format!("demand of `{}` at {node} is {d}", self.products[i].id),
                    ));
                } else if !is_integral(d) {
                    out.push(Diagnostic::error(
                        NonIntegralQuantity,
                        format!("demand of `{}` at {node} is not an integer ({d})", self.products[i].id),
                    ));
                }
            }
        }

        if let Some(b) = self.budget_limit {
            if !(b >= 0.0) {
                out.push(Diagnostic::error(NegativeBudget, format!("budget_limit is {b}")));
            }
        }
        if !(0.0..=1.0).contains(&self.interest_rate) {
            out.push(Diagnostic::error(
                InterestRateRange,
                format!("interest_rate {} is outside [0, 1]", self.interest_rate),
            ));
        }
        out
    }

    pub fn has_errors(&self) -> bool {
        self.validate().iter().any(|d| d.severity == Severity::Error)
    }
}

pub(crate) fn discount(rate: f64, stage: usize) -> f64 {
    1.0 / math::pow(1.0 + rate, (stage - 1) as f64)
}

fn two_thirds_rule(p: &ProductSpec) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    for (k, a) in p.catalog.iter().enumerate() {
        for b in &p.catalog[k + 1..] {
            if !(a.capacity > 0.0 && b.capacity > 0.0 && a.install_cost > 0.0 && b.install_cost > 0.0) {
                continue;
            }
            let scaled = math::pow(b.install_cost / a.install_cost, 1.5);
            let dev = (b.capacity / a.capacity) / scaled - 1.0;
            if dev.abs() > 1e-12 {
                out.push(Diagnostic {
                    severity: Severity::Warning,
                    kind: DiagnosticKind::TwoThirdsRule,
                    message: format!(
                        "`{}` pair ({}, {}): capacity ratio {:.4} vs cost ratio^1.5 {:.4} ({:+.2}%)",
                        p.id,
                        a.capacity,
                        b.capacity,
                        b.capacity / a.capacity,
                        scaled,
                        dev * 100.0
                    ),
                    magnitude: dev.abs(),
                });
            }
        }
    }
    out
}
