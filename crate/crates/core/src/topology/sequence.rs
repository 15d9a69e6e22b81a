use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use super::{apply_change_in_place, Graph, NodeId, Round, Schedule, TopologyError};

/// `⌈log₂ n⌉`, with `log2_ceil(0) = log2_ceil(1) = 0`.
pub fn log2_ceil(n: usize) -> u32 {
    if n <= 1 {
        0
    } else {
        usize::BITS - (n - 1).leading_zeros()
    }
}

/// Hop radius used for local change counts: `1 + ⌈log₂ n⌉`.
pub fn locality_radius(n: usize) -> usize {
    1 + log2_ceil(n) as usize
}

/// The adversarial graph sequence G₁, G₂, … up to one past the last
/// scheduled round; constant afterwards.
#[derive(Clone, Debug)]
pub struct GraphSeq {
    graphs: Vec<Arc<Graph>>,
    n: usize,
}

impl GraphSeq {
    /// `G_r` for any round `r >= 1`.
    pub fn at(&self, round: Round) -> &Graph {
        let idx = (round.max(1) - 1) as usize;
        &self.graphs[idx.min(self.graphs.len() - 1)]
    }

    /// Largest number of coexisting nodes.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of stored graphs (last scheduled round + 1).
    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn final_graph(&self) -> &Graph {
        self.graphs.last().expect("sequence always holds G1")
    }

    /// Distinct graphs in order (shared entries are yielded once).
    pub fn distinct(&self) -> impl Iterator<Item = &Graph> + '_ {
        self.graphs
            .iter()
            .enumerate()
            .filter(|(i, g)| *i == 0 || !Arc::ptr_eq(g, &self.graphs[i - 1]))
            .map(|(_, g)| g.as_ref())
    }

    /// Every node id that exists in some round.
    pub fn all_nodes(&self) -> BTreeSet<NodeId> {
        self.distinct().flat_map(|g| g.nodes()).collect()
    }
}

pub fn derive_graph_sequence(g1: &Graph, schedule: &Schedule) -> Result<GraphSeq, TopologyError> {
    let last = schedule.last_round().unwrap_or(0);
    let mut graphs = Vec::with_capacity(last as usize + 1);
    let mut current = Arc::new(g1.clone());
    let mut n = g1.node_count();
    graphs.push(current.clone());
    for round in 1..=last {
        let changes = schedule.changes_at(round);
        if !changes.is_empty() {
            let mut next = (*current).clone();
            for change in changes {
                apply_change_in_place(&mut next, change).map_err(|e| TopologyError::AtRound {
                    round,
                    change: *change,
                    source: Box::new(e),
                })?;
                n = n.max(next.node_count());
            }
            current = Arc::new(next);
        }
        graphs.push(current.clone());
    }
    Ok(GraphSeq { graphs, n })
}

fn incident(g: &Graph, v: NodeId) -> BTreeSet<NodeId> {
    g.neighbor_set(v).cloned().unwrap_or_default()
}

/// Nodes `v` for which some inclusive neighbor `u ∈ N_r(v)` has
/// `E_r(u) ≠ E_{r+1}(u)`. A node absent from `G_r` counts as its own
/// inclusive neighbor.
pub fn affected_nodes(g1: &Graph, schedule: &Schedule) -> Result<BTreeSet<NodeId>, TopologyError> {
    let seq = derive_graph_sequence(g1, schedule)?;
    Ok(sequence_affected(&seq, schedule))
}

/// [`affected_nodes`] over an already derived sequence.
pub fn sequence_affected(seq: &GraphSeq, schedule: &Schedule) -> BTreeSet<NodeId> {
    let mut affected = BTreeSet::new();
    for (round, changes) in schedule.rounds() {
        if changes.is_empty() {
            continue;
        }
        let before = seq.at(round);
        let after = seq.at(round + 1);
        let touched: BTreeSet<NodeId> = changes.iter().flat_map(|c| c.involved()).collect();
        for u in touched {
            if incident(before, u) != incident(after, u) {
                affected.insert(u);
                affected.extend(before.neighbors(u));
            }
        }
    }
    affected
}

/// C_u: number of changes involving a node that was within
/// `1 + ⌈log₂ n⌉` hops of `u` in some round.
pub fn change_count_within(g1: &Graph, schedule: &Schedule, u: NodeId) -> Result<usize, TopologyError> {
    let seq = derive_graph_sequence(g1, schedule)?;
    let radius = locality_radius(seq.n());
    if !seq.distinct().any(|g| g.contains_node(u)) {
        return Err(TopologyError::UnknownNode(u));
    }
    Ok(count_in_ball(&seq, schedule, u, radius))
}

/// C_u for every node that ever exists.
pub fn change_count_within_all(seq: &GraphSeq, schedule: &Schedule) -> BTreeMap<NodeId, usize> {
    let radius = locality_radius(seq.n());
    seq.all_nodes()
        .into_iter()
        .map(|u| (u, count_in_ball(seq, schedule, u, radius)))
        .collect()
}

fn count_in_ball(seq: &GraphSeq, schedule: &Schedule, u: NodeId, radius: usize) -> usize {
    if schedule.is_empty() {
        return 0;
    }
    let mut ball = BTreeSet::new();
    for g in seq.distinct() {
        ball.extend(g.ball(u, radius));
    }
    schedule
        .iter()
        .filter(|(_, c)| c.involved().iter().any(|v| ball.contains(v)))
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{gen_lower_bound, TopologyChange};

    fn n(i: u32) -> NodeId {
        NodeId(i)
    }

    fn path(len: u32) -> Graph {
        let edges: Vec<_> = (0..len - 1).map(|i| (i, i + 1)).collect();
        Graph::from_edges(len, &edges).unwrap()
    }

    #[test]
    fn log2_ceil_values() {
        let got: Vec<u32> = [0, 1, 2, 3, 4, 5, 6, 8, 9, 10, 1024, 1025].iter().map(|&x| log2_ceil(x)).collect();
        assert_eq!(got, vec![0, 0, 1, 2, 2, 3, 3, 3, 4, 4, 10, 11]);
    }

    #[test]
    fn sequence_with_node_insert() {
        let g1 = Graph::from_edges(2, &[(0, 1)]).unwrap();
        let s = Schedule::new().with(3, TopologyChange::NodeInsert { v: n(2) });
        let seq = derive_graph_sequence(&g1, &s).unwrap();
        let sizes: Vec<usize> = (1..=6).map(|r| seq.at(r).node_count()).collect();
        assert_eq!(sizes, vec![2, 2, 2, 3, 3, 3]);
        assert_eq!(seq.n(), 3);
    }

    #[test]
    fn constant_sequence() {
        let g1 = Graph::from_edges(3, &[(0, 1), (0, 2), (1, 2)]).unwrap();
        let seq = derive_graph_sequence(&g1, &Schedule::new()).unwrap();
        assert_eq!(seq.n(), 3);
        assert_eq!(seq.at(1), seq.at(100));
    }

    #[test]
    fn lower_bound_sequence_sizes() {
        let (g, s) = gen_lower_bound(2).unwrap();
        let seq = derive_graph_sequence(&g, &s).unwrap();
        assert_eq!(seq.n(), 6);
        let sizes: Vec<usize> = (1..=5).map(|r| seq.at(r).node_count()).collect();
        assert_eq!(sizes, vec![6, 5, 5, 4, 4]);
    }

    #[test]
    fn errors_carry_round() {
        let g1 = Graph::with_nodes(2);
        let s = Schedule::new().with(4, TopologyChange::EdgeDelete { u: n(0), v: n(1) });
        match derive_graph_sequence(&g1, &s).unwrap_err() {
            TopologyError::AtRound { round, .. } => assert_eq!(round, 4),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn affected_on_path_edge_delete() {
        let g = path(4);
        let s = Schedule::new().with(1, TopologyChange::EdgeDelete { u: n(0), v: n(1) });
        assert_eq!(affected_nodes(&g, &s).unwrap(), [n(0), n(1), n(2)].into());
    }

    #[test]
    fn affected_empty_schedule() {
        assert!(affected_nodes(&path(5), &Schedule::new()).unwrap().is_empty());
    }

    #[test]
    fn affected_k2_node_delete() {
        let g = path(2);
        let s = Schedule::new().with(2, TopologyChange::NodeDelete { v: n(0) });
        assert_eq!(affected_nodes(&g, &s).unwrap(), [n(0), n(1)].into());
    }

    #[test]
    fn isolated_node_delete_affects_nobody() {
        let g = Graph::with_nodes(3);
        let s = Schedule::new().with(1, TopologyChange::NodeDelete { v: n(0) });
        assert!(affected_nodes(&g, &s).unwrap().is_empty());
    }

    #[test]
    fn local_change_count_on_path() {
        let g = path(10);
        let s = Schedule::new().with(1, TopologyChange::EdgeDelete { u: n(0), v: n(1) });
        assert_eq!(change_count_within(&g, &s, n(9)).unwrap(), 0);
        assert_eq!(change_count_within(&g, &s, n(4)).unwrap(), 1);
        assert_eq!(change_count_within(&g, &Schedule::new(), n(4)).unwrap(), 0);
        assert_eq!(change_count_within(&g, &s, n(42)), Err(TopologyError::UnknownNode(n(42))));
    }

    #[test]
    fn local_change_count_on_lower_bound() {
        let (g, s) = gen_lower_bound(2).unwrap();
        for u in [3, 4, 5] {
            assert_eq!(change_count_within(&g, &s, n(u)).unwrap(), 1);
        }
    }
}
