//! Scenario trees.
//!
//! A tree has `T` stages. Stage 1 holds the single root node `{1,1}`; every
//! node of stage `t` has the same number of children (the branching factor of
//! that stage). Scenario indices inside a stage are 1-based and follow the
//! order of the parents: the children of `{t,j}` are `{t+1, (j-1)b+1 .. jb}`.
//!
//! Only conditional (edge) probabilities are accepted as input. Joint node
//! probabilities are products of conditionals along the root path, so each
//! stage sums to one and every node's probability equals the sum over its
//! children by construction.

use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

/// Tolerance used when checking that probability groups sum to one.
pub const PROB_TOL: f64 = 1e-9;

/// A `(stage, scenario)` pair, both 1-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId {
    pub stage: usize,
    pub scenario: usize,
}

impl NodeId {
    pub const ROOT: NodeId = NodeId { stage: 1, scenario: 1 };

    pub const fn new(stage: usize, scenario: usize) -> Self {
        NodeId { stage, scenario }
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{},{}}}", self.stage, self.scenario)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TreeError {
    #[error("conditional probabilities below node {parent} sum to {sum}, expected 1")]
    InconsistentProbabilities { parent: NodeId, sum: f64 },
    #[error("malformed tree: {0}")]
    MalformedTree(&'static str),
    #[error("node {0} is not part of the tree")]
    UnknownNode(NodeId),
}

/// Rooted scenario tree stored stage by stage.
///
/// Nodes are also addressable through a flat index (stage-major, scenario
/// order inside a stage) which the formulation uses to key its variables.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioTree {
    branching: Vec<usize>,
    stage_start: Vec<usize>,
    ids: Vec<NodeId>,
    parent: Vec<Option<usize>>,
    conditional: Vec<f64>,
    joint: Vec<f64>,
}

impl ScenarioTree {
    /// Builds a tree from per-stage branching factors.
    ///
    /// `branching[t-1]` is the number of children of every node at stage `t`
    /// and must have length `num_stages - 1`. `conditional_probs[t-1]` lists
    /// the edge probabilities leaving stage `t`: either one pattern of length
    /// `branching[t-1]` shared by every parent, or one value per child node of
    /// stage `t+1`. An empty outer slice, or an empty entry, means uniform.
    pub fn build(
        num_stages: usize,
        branching: &[usize],
        conditional_probs: &[Vec<f64>],
    ) -> Result<Self, TreeError> {
        if num_stages == 0 {
            return Err(TreeError::MalformedTree("a tree needs at least one stage"));
        }
        if branching.len() != num_stages - 1 {
            return Err(TreeError::MalformedTree(
                "branching must list one factor per stage transition",
            ));
        }
        if branching.contains(&0) {
            return Err(TreeError::MalformedTree("a stage has zero nodes"));
        }
        if !conditional_probs.is_empty() && conditional_probs.len() != num_stages - 1 {
            return Err(TreeError::MalformedTree(
                "conditional_probs must list one group per stage transition",
            ));
        }

        let mut ids = Vec::new();
        let mut parent = Vec::new();
        let mut conditional = Vec::new();
        let mut joint = Vec::new();
        let mut stage_start = Vec::with_capacity(num_stages + 1);

        stage_start.push(0);
        ids.push(NodeId::ROOT);
        parent.push(None);
        conditional.push(1.0);
        joint.push(1.0);

        for t in 1..num_stages {
            let b = branching[t - 1];
            let prev_start = stage_start[t - 1];
            let prev_count = ids.len() - prev_start;
            stage_start.push(ids.len());
            let group = conditional_probs.get(t - 1).filter(|g| !g.is_empty());
            if let Some(g) = group {
                if g.len() != b && g.len() != b * prev_count {
                    return Err(TreeError::MalformedTree(
                        "conditional probability group has the wrong length",
                    ));
                }
            }
            for pj in 0..prev_count {
                let p_idx = prev_start + pj;
                let edge = |k: usize| -> f64 {
                    match group {
                        None => 1.0 / b as f64,
                        Some(g) if g.len() == b => g[k],
                        Some(g) => g[pj * b + k],
                    }
                };
                let sum: f64 = (0..b).map(edge).sum();
                if (sum - 1.0).abs() > PROB_TOL || (0..b).any(|k| !(edge(k) >= 0.0)) {
                    return Err(TreeError::InconsistentProbabilities { parent: ids[p_idx], sum });
                }
                for k in 0..b {
                    let c = edge(k);
                    ids.push(NodeId::new(t + 1, pj * b + k + 1));
                    parent.push(Some(p_idx));
                    conditional.push(c);
                    joint.push(joint[p_idx] * c);
                }
            }
        }
        stage_start.push(ids.len());

        Ok(ScenarioTree { branching: branching.to_vec(), stage_start, ids, parent, conditional, joint })
    }

    /// A linear tree: one scenario per stage, `a_t = t - 1`.
    pub fn deterministic(num_stages: usize) -> Result<Self, TreeError> {
        let ones = alloc::vec![1; num_stages.saturating_sub(1)];
        Self::build(num_stages, &ones, &[])
    }

    pub fn num_stages(&self) -> usize {
        self.stage_start.len() - 1
    }

    pub fn num_nodes(&self) -> usize {
        self.ids.len()
    }

    pub fn branching(&self) -> &[usize] {
        &self.branching
    }

    /// `S_t`, the number of scenarios at stage `t` (0 outside the horizon).
    pub fn nodes_in_stage(&self, stage: usize) -> usize {
        if stage == 0 || stage > self.num_stages() {
            return 0;
        }
        self.stage_start[stage] - self.stage_start[stage - 1]
    }

    pub fn is_deterministic(&self) -> bool {
        self.branching.iter().all(|&b| b == 1)
    }

    /// Flat index of a node.
    pub fn index_of(&self, node: NodeId) -> Result<usize, TreeError> {
        if node.scenario == 0 || node.scenario > self.nodes_in_stage(node.stage) {
            return Err(TreeError::UnknownNode(node));
        }
        Ok(self.stage_start[node.stage - 1] + node.scenario - 1)
    }

    pub fn id(&self, index: usize) -> NodeId {
        self.ids[index]
    }

    pub fn ids(&self) -> &[NodeId] {
        &self.ids
    }

    pub fn stage_of(&self, index: usize) -> usize {
        self.ids[index].stage
    }

    /// Flat indices of all nodes in `stage`.
    pub fn stage_nodes(&self, stage: usize) -> core::ops::Range<usize> {
        if stage == 0 || stage > self.num_stages() {
            return 0..0;
        }
        self.stage_start[stage - 1]..self.stage_start[stage]
    }

    /// Flat indices of the leaves (stage `T`), in scenario order.
    pub fn leaves(&self) -> core::ops::Range<usize> {
        self.stage_nodes(self.num_stages())
    }

    /// Flat indices of decision nodes (stages `1..T-1`).
    pub fn decision_nodes(&self) -> core::ops::Range<usize> {
        0..self.stage_start[self.num_stages() - 1]
    }

    pub fn is_leaf(&self, index: usize) -> bool {
        self.ids[index].stage == self.num_stages()
    }

    pub fn parent_index(&self, index: usize) -> Option<usize> {
        self.parent[index]
    }

    /// Flat indices of the children of `index`.
    pub fn children(&self, index: usize) -> core::ops::Range<usize> {
        let id = self.ids[index];
        if id.stage == self.num_stages() {
            return 0..0;
        }
        let b = self.branching[id.stage - 1];
        let start = self.stage_start[id.stage] + (id.scenario - 1) * b;
        start..start + b
    }

    /// `a_{t,j}`: the parent node, absent exactly for the root.
    pub fn parent_of(&self, node: NodeId) -> Result<Option<NodeId>, TreeError> {
        let idx = self.index_of(node)?;
        Ok(self.parent[idx].map(|p| self.ids[p]))
    }

    /// Joint probability `p_{t,j}` of the event history leading to `node`.
    pub fn joint_prob(&self, node: NodeId) -> Result<f64, TreeError> {
        Ok(self.joint[self.index_of(node)?])
    }

    pub fn joint_prob_at(&self, index: usize) -> f64 {
        self.joint[index]
    }

    /// Probability of the edge from the parent into `index` (1 for the root).
    pub fn conditional_prob_at(&self, index: usize) -> f64 {
        self.conditional[index]
    }

    /// Flat indices from the root to `index`, root first.
    pub fn path_to(&self, index: usize) -> Vec<usize> {
        let mut path = Vec::with_capacity(self.ids[index].stage);
        let mut cur = Some(index);
        while let Some(i) = cur {
            path.push(i);
            cur = self.parent[i];
        }
        path.reverse();
        path
    }

    /// One root-to-leaf path per leaf, ordered by leaf scenario index.
    pub fn enumerate_paths(&self) -> Vec<Vec<NodeId>> {
        self.leaves()
            .map(|leaf| self.path_to(leaf).into_iter().map(|i| self.ids[i]).collect())
            .collect()
    }

    /// The tree restricted to its first `stages` stages.
    pub fn truncated(&self, stages: usize) -> Result<Self, TreeError> {
        if stages == 0 || stages > self.num_stages() {
            return Err(TreeError::MalformedTree("truncation outside the horizon"));
        }
        let end = self.stage_start[stages];
        Ok(ScenarioTree {
            branching: self.branching[..stages - 1].to_vec(),
            stage_start: self.stage_start[..=stages].to_vec(),
            ids: self.ids[..end].to_vec(),
            parent: self.parent[..end].to_vec(),
            conditional: self.conditional[..end].to_vec(),
            joint: self.joint[..end].to_vec(),
        })
    }
}
