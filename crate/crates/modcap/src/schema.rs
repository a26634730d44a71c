//! JSON instance files.

use std::collections::BTreeMap;
use std::path::Path;

use modcap_core::instance::{Diagnostic, DiagnosticKind, Severity};
use modcap_core::tree::TreeError;
use modcap_core::{Instance, NodeId, ProductSpec, ScenarioTree, TechnologyOption};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed instance JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("bad node key `{0}`, expected \"stage,scenario\"")]
    NodeKey(String),
    #[error("node {0} is not in the tree")]
    UnknownNode(String),
    #[error("bad alpha key `{0}`, expected \"producer->consumed\"")]
    AlphaKey(String),
    #[error("unknown product `{0}`")]
    UnknownProduct(String),
    #[error("unknown case `{0}`")]
    UnknownCase(String),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Instance(#[from] modcap_core::instance::InstanceError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeFile {
    pub stages: usize,
    #[serde(default)]
    pub branching: Vec<usize>,
    /// Per stage transition: one shared pattern or one value per child.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub conditional_probs: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatalogEntry {
    pub capacity: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProductFile {
    pub id: String,
    pub catalog: Vec<CatalogEntry>,
    pub storage_cost: f64,
    pub waste_cost: f64,
    pub operating_cost: f64,
    pub selling_price: f64,
    pub capacity_limit: f64,
    pub storage_limit: f64,
}

/// A named restriction of the catalogs: product id to retained capacities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseFile {
    pub label: String,
    pub catalog: BTreeMap<String, Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
    pub tree: TreeFile,
    pub products: Vec<ProductFile>,
    #[serde(default)]
    pub alpha: BTreeMap<String, f64>,
    pub demands: BTreeMap<String, BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget_limit: Option<f64>,
    pub interest_rate: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cases: Vec<CaseFile>,
}

/// An instance together with its catalog cases and loader diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Loaded {
    pub name: String,
    pub instance: Instance,
    pub cases: Vec<CaseFile>,
    /// Problems found while reading (missing demands); merged with
    /// [`Instance::validate`] by [`Loaded::diagnostics`].
    pub load_diagnostics: Vec<Diagnostic>,
}

pub fn parse_node_key(key: &str) -> Result<NodeId, LoadError> {
    let bad = || LoadError::NodeKey(key.to_string());
    let (t, j) = key.split_once(',').ok_or_else(bad)?;
    let stage = t.trim().parse().map_err(|_| bad())?;
    let scenario = j.trim().parse().map_err(|_| bad())?;
    Ok(NodeId::new(stage, scenario))
}

pub fn node_key(id: NodeId) -> String {
    format!("{},{}", id.stage, id.scenario)
}

impl InstanceFile {
    pub fn from_json(text: &str) -> Result<Self, LoadError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn read(path: &Path) -> Result<Self, LoadError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| LoadError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text)
    }

    pub fn to_loaded(&self) -> Result<Loaded, LoadError> {
        let tree = ScenarioTree::build(self.tree.stages, &self.tree.branching, &self.tree.conditional_probs)?;
        let products: Vec<ProductSpec> = self
            .products
            .iter()
            .map(|p| ProductSpec {
                id: p.id.clone(),
                catalog: p.catalog.iter().map(|c| TechnologyOption::new(c.capacity, c.cost)).collect(),
                storage_cost: p.storage_cost,
                waste_cost: p.waste_cost,
                operating_cost: p.operating_cost,
                selling_price: p.selling_price,
                capacity_limit: p.capacity_limit,
                storage_limit: p.storage_limit,
            })
            .collect();
        let index = |id: &str| {
            products.iter().position(|p| p.id == id).ok_or_else(|| LoadError::UnknownProduct(id.to_string()))
        };
        let np = products.len();
        let mut alpha = vec![vec![0.0; np]; np];
        for (key, &value) in &self.alpha {
            let (a, b) = key.split_once("->").ok_or_else(|| LoadError::AlphaKey(key.clone()))?;
            alpha[index(a.trim())?][index(b.trim())?] = value;
        }
        let mut demands: Vec<Vec<Option<f64>>> = vec![vec![None; np]; tree.num_nodes()];
        for (key, row) in &self.demands {
            let id = parse_node_key(key)?;
            let n = tree.index_of(id).map_err(|_| LoadError::UnknownNode(key.clone()))?;
            for (pid, &d) in row {
                demands[n][index(pid)?] = Some(d);
            }
        }
        let mut load_diagnostics = Vec::new();
        for (n, row) in demands.iter().enumerate() {
            for (i, d) in row.iter().enumerate() {
                if d.is_none() {
                    load_diagnostics.push(Diagnostic {
                        severity: Severity::Error,
                        kind: DiagnosticKind::MissingDemand,
                        message: format!("no demand for `{}` at {}", products[i].id, tree.id(n)),
                        magnitude: 0.0,
                    });
                }
            }
        }
        for case in &self.cases {
            for pid in case.catalog.keys() {
                index(pid)?;
            }
        }
        let instance = Instance {
            tree,
            products,
            interdependency: alpha,
            demands: demands.into_iter().map(|row| row.into_iter().map(|d| d.unwrap_or(0.0)).collect()).collect(),
            budget_limit: self.budget_limit,
            interest_rate: self.interest_rate,
        };
        Ok(Loaded {
            name: self.name.clone().unwrap_or_else(|| "instance".into()),
            instance,
            cases: self.cases.clone(),
            load_diagnostics,
        })
    }

    /// Inverse of [`InstanceFile::to_loaded`] for a complete instance.
    pub fn from_instance(name: Option<String>, instance: &Instance, cases: Vec<CaseFile>) -> Self {
        let tree = &instance.tree;
        let ids: Vec<&str> = instance.products.iter().map(|p| p.id.as_str()).collect();
        let mut alpha = BTreeMap::new();
        for (i, row) in instance.interdependency.iter().enumerate() {
            for (j, &a) in row.iter().enumerate() {
                if a != 0.0 {
                    alpha.insert(format!("{}->{}", ids[i], ids[j]), a);
                }
            }
        }
        let demands = (0..tree.num_nodes())
            .map(|n| {
                let row = ids.iter().zip(&instance.demands[n]).map(|(id, &d)| (id.to_string(), d)).collect();
                (node_key(tree.id(n)), row)
            })
            .collect();
        let conditional_probs = if (1..tree.num_nodes()).all(|n| {
            let b = tree.branching()[tree.stage_of(n) - 2];
            (tree.conditional_prob_at(n) - 1.0 / b as f64).abs() < 1e-15
        }) {
            Vec::new()
        } else {
            (2..=tree.num_stages()).map(|t| tree.stage_nodes(t).map(|n| tree.conditional_prob_at(n)).collect()).collect()
        };
        InstanceFile {
            name,
            notes: None,
            tree: TreeFile { stages: tree.num_stages(), branching: tree.branching().to_vec(), conditional_probs },
            products: instance
                .products
                .iter()
                .map(|p| ProductFile {
                    id: p.id.clone(),
                    catalog: p.catalog.iter().map(|t| CatalogEntry { capacity: t.capacity, cost: t.install_cost }).collect(),
                    storage_cost: p.storage_cost,
                    waste_cost: p.waste_cost,
                    operating_cost: p.operating_cost,
                    selling_price: p.selling_price,
                    capacity_limit: p.capacity_limit,
                    storage_limit: p.storage_limit,
                })
                .collect(),
            alpha,
            demands,
            budget_limit: instance.budget_limit,
            interest_rate: instance.interest_rate,
            cases,
        }
    }
}

impl Loaded {
    pub fn read(path: &Path) -> Result<Self, LoadError> {
        InstanceFile::read(path)?.to_loaded()
    }

    pub fn diagnostics(&self) -> Vec<Diagnostic> {
        let mut out = self.load_diagnostics.clone();
        out.extend(self.instance.validate());
        out
    }

    pub fn case(&self, label: &str) -> Result<&CaseFile, LoadError> {
        self.cases
            .iter()
            .find(|c| c.label.eq_ignore_ascii_case(label))
            .ok_or_else(|| LoadError::UnknownCase(label.to_string()))
    }

    /// The instance with the catalogs of `case` (the full catalog for `None`).
    pub fn instance_for(&self, case: Option<&str>) -> Result<Instance, LoadError> {
        match case {
            None => Ok(self.instance.clone()),
            Some(label) => {
                let keep: Vec<(String, Vec<f64>)> =
                    self.case(label)?.catalog.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
                Ok(self.instance.restricted_catalog(&keep)?)
            }
        }
    }
}
