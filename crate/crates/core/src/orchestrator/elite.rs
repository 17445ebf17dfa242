//! Bounded best-k archive of evaluated heuristics.

use serde::{Deserialize, Serialize};

use crate::tree::NodeId;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EliteSet {
    /// Best first; ties by lower node id.
    members: Vec<(NodeId, f64)>,
    capacity: usize,
}

impl EliteSet {
    pub fn new(capacity: usize) -> Self {
        Self { members: Vec::new(), capacity }
    }

    /// Inserts `node` if the set has room or it beats the worst member.
    /// Returns whether it was inserted.
    pub fn update(&mut self, node: NodeId, reward: f64) -> bool {
        if !reward.is_finite() || self.capacity == 0 || self.members.iter().any(|&(n, _)| n == node) {
            return false;
        }
        if self.members.len() == self.capacity && reward <= self.members.last().expect("full set").1 {
            return false;
        }
        let pos = self.members.partition_point(|&(n, r)| r > reward || (r == reward && n < node));
        self.members.insert(pos, (node, reward));
        self.members.truncate(self.capacity);
        true
    }

    pub fn ids(&self) -> Vec<NodeId> {
        self.members.iter().map(|&(n, _)| n).collect()
    }

    pub fn members(&self) -> &[(NodeId, f64)] {
        &self.members
    }

    pub fn best(&self) -> Option<(NodeId, f64)> {
        self.members.first().copied()
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.members.iter().any(|&(n, _)| n == node)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}
