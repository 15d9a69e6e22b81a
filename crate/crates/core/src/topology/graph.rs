use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::TopologyError;

/// Stable, opaque node identifier. Inserted nodes always get fresh ids.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<u32> for NodeId {
    fn from(v: u32) -> Self {
        NodeId(v)
    }
}

/// Undirected simple graph. No self-loops, no parallel edges.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Graph {
    adj: BTreeMap<NodeId, BTreeSet<NodeId>>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Graph with nodes `0..n` and no edges.
    pub fn with_nodes(n: u32) -> Self {
        let mut g = Graph::new();
        for i in 0..n {
            g.adj.insert(NodeId(i), BTreeSet::new());
        }
        g
    }

    pub fn from_edges(n: u32, edges: &[(u32, u32)]) -> Result<Self, TopologyError> {
        let mut g = Graph::with_nodes(n);
        for &(u, v) in edges {
            g.add_edge(NodeId(u), NodeId(v))?;
        }
        Ok(g)
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.values().map(BTreeSet::len).sum::<usize>() / 2
    }

    pub fn is_empty(&self) -> bool {
        self.adj.is_empty()
    }

    pub fn contains_node(&self, v: NodeId) -> bool {
        self.adj.contains_key(&v)
    }

    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        self.adj.get(&u).is_some_and(|n| n.contains(&v))
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.adj.keys().copied()
    }

    /// Exclusive neighborhood; empty for unknown nodes.
    pub fn neighbors(&self, v: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.adj.get(&v).into_iter().flat_map(|s| s.iter().copied())
    }

    pub fn neighbor_set(&self, v: NodeId) -> Option<&BTreeSet<NodeId>> {
        self.adj.get(&v)
    }

    pub fn degree(&self, v: NodeId) -> usize {
        self.adj.get(&v).map_or(0, BTreeSet::len)
    }

    /// Edges as `(min, max)` pairs in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.adj
            .iter()
            .flat_map(|(&u, ns)| ns.range(u..).filter(move |&&v| v != u).map(move |&v| (u, v)))
    }

    pub fn max_id(&self) -> Option<NodeId> {
        self.adj.keys().next_back().copied()
    }

    pub fn add_node(&mut self, v: NodeId) -> Result<(), TopologyError> {
        if self.adj.contains_key(&v) {
            return Err(TopologyError::NodeExists(v));
        }
        self.adj.insert(v, BTreeSet::new());
        Ok(())
    }

    pub fn remove_node(&mut self, v: NodeId) -> Result<BTreeSet<NodeId>, TopologyError> {
        let ns = self.adj.remove(&v).ok_or(TopologyError::MissingNode(v))?;
        for u in &ns {
            if let Some(s) = self.adj.get_mut(u) {
                s.remove(&v);
            }
        }
        Ok(ns)
    }

    pub fn add_edge(&mut self, u: NodeId, v: NodeId) -> Result<(), TopologyError> {
        if u == v {
            return Err(TopologyError::SelfLoop(u));
        }
        for w in [u, v] {
            if !self.adj.contains_key(&w) {
                return Err(TopologyError::MissingNode(w));
            }
        }
        if self.has_edge(u, v) {
            return Err(TopologyError::EdgeExists(u, v));
        }
        self.adj.get_mut(&u).expect("checked").insert(v);
        self.adj.get_mut(&v).expect("checked").insert(u);
        Ok(())
    }

    pub fn remove_edge(&mut self, u: NodeId, v: NodeId) -> Result<(), TopologyError> {
        if !self.has_edge(u, v) {
            return Err(TopologyError::MissingEdge(u, v));
        }
        self.adj.get_mut(&u).expect("checked").remove(&v);
        self.adj.get_mut(&v).expect("checked").remove(&u);
        Ok(())
    }

    /// Inclusive `radius`-hop ball around `src` (BFS).
    pub fn ball(&self, src: NodeId, radius: usize) -> BTreeSet<NodeId> {
        let mut seen = BTreeSet::new();
        if !self.contains_node(src) {
            return seen;
        }
        seen.insert(src);
        let mut queue = VecDeque::from([(src, 0usize)]);
        while let Some((v, d)) = queue.pop_front() {
            if d == radius {
                continue;
            }
            for w in self.neighbors(v) {
                if seen.insert(w) {
                    queue.push_back((w, d + 1));
                }
            }
        }
        seen
    }

    /// True iff `set` is independent and dominating: every node outside it
    /// has a neighbor inside.
    pub fn is_maximal_independent_set(&self, set: &BTreeSet<NodeId>) -> bool {
        set.iter().all(|&v| self.contains_node(v) && self.neighbors(v).all(|w| !set.contains(&w)))
            && self
                .nodes()
                .filter(|v| !set.contains(v))
                .all(|v| self.neighbors(v).any(|w| set.contains(&w)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edges_are_canonical_and_counted_once() {
        let g = Graph::from_edges(3, &[(2, 0), (1, 2)]).unwrap();
        let e: Vec<_> = g.edges().collect();
        assert_eq!(e, vec![(NodeId(0), NodeId(2)), (NodeId(1), NodeId(2))]);
        assert_eq!(g.edge_count(), 2);
    }

    #[test]
    fn rejects_self_loops_and_duplicates() {
        let mut g = Graph::with_nodes(2);
        assert_eq!(g.add_edge(NodeId(0), NodeId(0)), Err(TopologyError::SelfLoop(NodeId(0))));
        g.add_edge(NodeId(0), NodeId(1)).unwrap();
        assert!(matches!(g.add_edge(NodeId(1), NodeId(0)), Err(TopologyError::EdgeExists(..))));
    }

    #[test]
    fn ball_respects_radius() {
        let edges: Vec<_> = (0..9).map(|i| (i, i + 1)).collect();
        let g = Graph::from_edges(10, &edges).unwrap();
        let b = g.ball(NodeId(9), 5);
        assert_eq!(b, (4..10).map(NodeId).collect());
    }

    #[test]
    fn mis_check() {
        let g = Graph::from_edges(3, &[(0, 1), (1, 2), (0, 2)]).unwrap();
        assert!(g.is_maximal_independent_set(&[NodeId(1)].into()));
        assert!(!g.is_maximal_independent_set(&[NodeId(0), NodeId(1)].into()));
        assert!(!g.is_maximal_independent_set(&BTreeSet::new()));
        assert!(Graph::new().is_maximal_independent_set(&BTreeSet::new()));
    }
}
