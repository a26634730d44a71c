use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectiveSense {
    Maximize,
    Minimize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowSense {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub integer: bool,
    pub objective: f64,
    /// Branching priority; fractional integer variables of a higher class
    /// are branched on first.
    pub priority: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub name: String,
    /// Merged, sorted by variable, zero coefficients dropped.
    pub terms: Vec<(VarId, f64)>,
    pub sense: RowSense,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("constraint `{constraint}` references unknown variable #{var}")]
    UnknownVariable { constraint: String, var: usize },
    #[error("variable `{0}` has lower bound above upper bound")]
    InvertedBounds(String),
    #[error("integer variable `{0}` needs finite bounds")]
    UnboundedInteger(String),
    #[error("non-finite coefficient in `{0}`")]
    NonFinite(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MilpModel {
    pub sense: ObjectiveSense,
    pub variables: Vec<Variable>,
    pub constraints: Vec<Constraint>,
}

impl MilpModel {
    pub fn new(sense: ObjectiveSense) -> Self {
        MilpModel { sense, variables: Vec::new(), constraints: Vec::new() }
    }

    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn num_integer(&self) -> usize {
        self.variables.iter().filter(|v| v.integer).count()
    }

    pub fn add_var(&mut self, name: impl Into<String>, lower: f64, upper: f64, integer: bool) -> VarId {
        self.variables.push(Variable { name: name.into(), lower, upper, integer, objective: 0.0, priority: 0 });
        VarId(self.variables.len() - 1)
    }

    pub fn add_continuous(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> VarId {
        self.add_var(name, lower, upper, false)
    }

    pub fn add_integer(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> VarId {
        self.add_var(name, lower, upper, true)
    }

    pub fn set_priority(&mut self, v: VarId, priority: u8) {
        self.variables[v.0].priority = priority;
    }

    pub fn set_objective(&mut self, v: VarId, coef: f64) {
        self.variables[v.0].objective = coef;
    }

    pub fn set_bounds(&mut self, v: VarId, lower: f64, upper: f64) {
        self.variables[v.0].lower = lower;
        self.variables[v.0].upper = upper;
    }

    pub fn var(&self, v: VarId) -> &Variable {
        &self.variables[v.0]
    }

    /// Adds `sum(terms) sense rhs`. Repeated variables are merged.
    pub fn add_constraint(
        &mut self,
        name: impl Into<String>,
        terms: impl IntoIterator<Item = (VarId, f64)>,
        sense: RowSense,
        rhs: f64,
    ) -> usize {
        let mut merged: BTreeMap<VarId, f64> = BTreeMap::new();
        for (v, c) in terms {
            *merged.entry(v).or_insert(0.0) += c;
        }
        let terms = merged.into_iter().filter(|&(_, c)| c != 0.0).collect();
        self.constraints.push(Constraint { name: name.into(), terms, sense, rhs });
        self.constraints.len() - 1
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.variables.iter().zip(values).map(|(v, x)| v.objective * x).sum()
    }

    /// Largest violation of any bound or row by `values` (integrality ignored).
    pub fn max_violation(&self, values: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (v, &x) in self.variables.iter().zip(values) {
            worst = worst.max(v.lower - x).max(x - v.upper);
        }
        for c in &self.constraints {
            let lhs: f64 = c.terms.iter().map(|&(v, a)| a * values[v.0]).sum();
            let viol = match c.sense {
                RowSense::Le => lhs - c.rhs,
                RowSense::Ge => c.rhs - lhs,
                RowSense::Eq => (lhs - c.rhs).abs(),
            };
            worst = worst.max(viol);
        }
        worst
    }

    pub fn check(&self) -> Result<(), ModelError> {
        let n = self.variables.len();
        for v in &self.variables {
            if v.lower > v.upper || v.lower.is_nan() || v.upper.is_nan() {
                return Err(ModelError::InvertedBounds(v.name.clone()));
            }
            if v.integer && !(v.lower.is_finite() && v.upper.is_finite()) {
                return Err(ModelError::UnboundedInteger(v.name.clone()));
            }
            if !v.objective.is_finite() {
                return Err(ModelError::NonFinite(v.name.clone()));
            }
        }
        for c in &self.constraints {
            for &(v, a) in &c.terms {
                if v.0 >= n {
                    return Err(ModelError::UnknownVariable { constraint: c.name.clone(), var: v.0 });
                }
                if !a.is_finite() {
                    return Err(ModelError::NonFinite(c.name.clone()));
                }
            }
            if !c.rhs.is_finite() {
                return Err(ModelError::NonFinite(c.name.clone()));
            }
        }
        Ok(())
    }
}
