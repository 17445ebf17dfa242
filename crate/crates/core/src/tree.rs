//! The search tree over heuristics.
//!
//! Every evaluated heuristic lives in exactly one node. Selection walks from
//! the root by normalized UCT with a linearly decaying exploration weight;
//! backpropagation sets each ancestor's quality to the best of its children.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::artifact::HeuristicArtifact;

/// Threshold under which the quality range counts as degenerate.
pub const DEGENERATE_RANGE: f64 = 1e-12;
pub const TREE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TreeError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("tree state error: {0}")]
    State(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub usize);

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Which action created a node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Root,
    I,
    Em1,
    Em2,
    M1,
    M2,
}

impl Origin {
    pub fn as_str(self) -> &'static str {
        match self {
            Origin::Root => "root",
            Origin::I => "i",
            Origin::Em1 => "em1",
            Origin::Em2 => "em2",
            Origin::M1 => "m1",
            Origin::M2 => "m2",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeuristicNode {
    pub id: NodeId,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
    pub depth: usize,
    /// Backed-up quality: the node's own reward while it is a leaf, the best
    /// child quality once it has children.
    pub q: f64,
    /// Reward of the heuristic housed here; `None` at the root.
    pub reward: Option<f64>,
    pub n_visits: u64,
    pub artifact: Option<HeuristicArtifact>,
    pub origin: Origin,
    pub created_at_budget: u64,
}

impl HeuristicNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QualityBounds {
    pub q_max: f64,
    pub q_min: f64,
}

impl Default for QualityBounds {
    fn default() -> Self {
        Self { q_max: -1e5, q_min: 0.0 }
    }
}

impl QualityBounds {
    /// Elementwise widening by the given (finite) qualities.
    pub fn updated(self, children_q: &[f64]) -> Self {
        children_q.iter().filter(|q| q.is_finite()).fold(self, |b, &q| QualityBounds {
            q_max: b.q_max.max(q),
            q_min: b.q_min.min(q),
        })
    }
}

/// `lambda0 · (T − t)/T`, saturating at 0 once the budget is spent.
pub fn lambda_decay(t: u64, budget: u64, lambda0: f64) -> Result<f64, TreeError> {
    if budget == 0 {
        return Err(TreeError::Config("budget T must be positive".into()));
    }
    let left = budget.saturating_sub(t) as f64;
    Ok(lambda0 * left / budget as f64)
}

pub fn uct_score(child_q: f64, child_n: u64, parent_n: u64, bounds: QualityBounds, lambda: f64) -> f64 {
    let range = bounds.q_max - bounds.q_min;
    let exploit = if range < DEGENERATE_RANGE { 0.5 } else { (child_q - bounds.q_min) / range };
    let explore = ((parent_n as f64 + 1.0).ln() / child_n.max(1) as f64).sqrt();
    exploit + lambda * explore
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchTree {
    nodes: Vec<HeuristicNode>,
    max_depth: usize,
    widening_factor: f64,
}

impl SearchTree {
    pub fn new(max_depth: usize, widening_factor: f64) -> Self {
        let root = HeuristicNode {
            id: NodeId(0),
            parent: None,
            children: Vec::new(),
            depth: 0,
            q: 0.0,
            reward: None,
            n_visits: 0,
            artifact: None,
            origin: Origin::Root,
            created_at_budget: 0,
        };
        Self { nodes: vec![root], max_depth, widening_factor }
    }

    pub fn root(&self) -> NodeId {
        NodeId(0)
    }

    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    pub fn node(&self, id: NodeId) -> &HeuristicNode {
        &self.nodes[id.0]
    }

    pub fn nodes(&self) -> &[HeuristicNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.len() == 1
    }

    /// Attaches an evaluated heuristic. The new node starts with Q equal to
    /// its reward and one visit.
    pub fn add_child(
        &mut self,
        parent: NodeId,
        artifact: HeuristicArtifact,
        origin: Origin,
        reward: f64,
        t: u64,
    ) -> Result<NodeId, TreeError> {
        if !reward.is_finite() {
            return Err(TreeError::State("only finite rewards enter the tree".into()));
        }
        let depth = self.node(parent).depth + 1;
        if depth > self.max_depth {
            return Err(TreeError::State(format!("child of node {parent} would exceed depth {}", self.max_depth)));
        }
        let id = NodeId(self.nodes.len());
        self.nodes.push(HeuristicNode {
            id,
            parent: Some(parent),
            children: Vec::new(),
            depth,
            q: reward,
            reward: Some(reward),
            n_visits: 1,
            artifact: Some(artifact),
            origin,
            created_at_budget: t,
        });
        self.nodes[parent.0].children.push(id);
        Ok(id)
    }

    /// Child of `id` with the highest UCT score (lowest id on ties).
    pub fn best_child(&self, id: NodeId, bounds: QualityBounds, lambda: f64) -> Option<NodeId> {
        let parent = self.node(id);
        let mut best: Option<(NodeId, f64)> = None;
        for &c in &parent.children {
            let child = self.node(c);
            let s = uct_score(child.q, child.n_visits, parent.n_visits, bounds, lambda);
            if best.map_or(true, |(_, b)| s > b) {
                best = Some((c, s));
            }
        }
        best.map(|(c, _)| c)
    }

    /// Path from the root (exclusive) to the node reached by argmax-UCT
    /// descent, stopping at a leaf or at depth H.
    pub fn select_path(&self, bounds: QualityBounds, lambda: f64) -> Result<Vec<NodeId>, TreeError> {
        if self.node(self.root()).is_leaf() {
            return Err(TreeError::State("selection on a tree without evaluated children".into()));
        }
        let mut path = Vec::new();
        let mut cur = self.root();
        while !self.node(cur).is_leaf() && self.node(cur).depth < self.max_depth {
            cur = self.best_child(cur, bounds, lambda).expect("non-leaf has children");
            path.push(cur);
        }
        Ok(path)
    }

    pub fn widening_eligible(&self, id: NodeId) -> bool {
        let n = self.node(id);
        n.n_visits as f64 > self.widening_factor * n.children.len() as f64 && n.depth < self.max_depth
    }

    /// From `from` up to the root: Q ← max child Q, N ← N + batch.
    pub fn backpropagate(&mut self, from: NodeId, batch: u64) {
        let mut cur = Some(from);
        while let Some(id) = cur {
            let best = self.nodes[id.0]
                .children
                .iter()
                .map(|c| self.nodes[c.0].q)
                .filter(|q| q.is_finite())
                .fold(None, |acc: Option<f64>, q| Some(acc.map_or(q, |a| a.max(q))));
            let node = &mut self.nodes[id.0];
            if let Some(best) = best {
                node.q = best;
            }
            node.n_visits += batch;
            cur = node.parent;
        }
    }

    /// Largest reward housed anywhere in the tree.
    pub fn best_reward(&self) -> Option<(NodeId, f64)> {
        self.nodes
            .iter()
            .filter_map(|n| n.reward.map(|r| (n.id, r)))
            .fold(None, |acc, (id, r)| match acc {
                Some((_, b)) if b >= r => acc,
                _ => Some((id, r)),
            })
    }

    pub fn contains_digest(&self, digest: &str) -> bool {
        self.nodes.iter().any(|n| n.artifact.as_ref().is_some_and(|a| a.digest == digest))
    }

    pub fn snapshot(&self) -> TreeSnapshot {
        TreeSnapshot {
            schema_version: TREE_SCHEMA_VERSION,
            max_depth: self.max_depth,
            nodes: self
                .nodes
                .iter()
                .map(|n| NodeSnapshot {
                    id: n.id,
                    parent: n.parent,
                    depth: n.depth,
                    q: n.q,
                    reward: n.reward,
                    n_visits: n.n_visits,
                    origin: n.origin,
                    digest: n.artifact.as_ref().map(|a| a.digest.clone()),
                    created_at_budget: n.created_at_budget,
                })
                .collect(),
        }
    }
}

/// Read-only export of the tree for reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeSnapshot {
    pub schema_version: u32,
    pub max_depth: usize,
    pub nodes: Vec<NodeSnapshot>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeSnapshot {
    pub id: NodeId,
    pub parent: Option<NodeId>,
    pub depth: usize,
    pub q: f64,
    pub reward: Option<f64>,
    pub n_visits: u64,
    pub origin: Origin,
    pub digest: Option<String>,
    pub created_at_budget: u64,
}
