//! Graphs, topology changes, oblivious adversary schedules and the
//! quantities derived from them (graph sequence, affected set, local change
//! counts), plus deterministic generators.

mod generate;
mod graph;
mod sequence;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use generate::{gen_graph, gen_lower_bound, gen_schedule, ChangeOp, GraphKind, ScheduleKind};
pub use graph::{Graph, NodeId};
pub use sequence::{
    affected_nodes, change_count_within, change_count_within_all, derive_graph_sequence,
    locality_radius, log2_ceil, sequence_affected, GraphSeq,
};

/// Round index; rounds start at 1.
pub type Round = u64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TopologyError {
    #[error("node {0} does not exist")]
    MissingNode(NodeId),
    #[error("node {0} already exists")]
    NodeExists(NodeId),
    #[error("edge {{{0}, {1}}} does not exist")]
    MissingEdge(NodeId, NodeId),
    #[error("edge {{{0}, {1}}} exists")]
    EdgeExists(NodeId, NodeId),
    #[error("self-loop on node {0}")]
    SelfLoop(NodeId),
    #[error("round {round}: {change}: {source}")]
    AtRound {
        round: Round,
        change: TopologyChange,
        source: Box<TopologyError>,
    },
    #[error("rounds start at 1, got round 0")]
    RoundZero,
    #[error("node {0} never exists in the graph sequence")]
    UnknownNode(NodeId),
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("cannot place change {placed} of {wanted}: no applicable {what}")]
    Unplaceable {
        placed: usize,
        wanted: usize,
        what: String,
    },
}

/// One of the four topology-change classes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TopologyChange {
    EdgeDelete { u: NodeId, v: NodeId },
    EdgeInsert { u: NodeId, v: NodeId },
    NodeDelete { v: NodeId },
    NodeInsert { v: NodeId },
}

impl TopologyChange {
    /// Nodes the change involves: the inserted/deleted node, or both
    /// endpoints of an inserted/deleted edge.
    pub fn involved(&self) -> Vec<NodeId> {
        match *self {
            TopologyChange::EdgeDelete { u, v } | TopologyChange::EdgeInsert { u, v } => vec![u, v],
            TopologyChange::NodeDelete { v } | TopologyChange::NodeInsert { v } => vec![v],
        }
    }

    pub fn op_name(&self) -> &'static str {
        match self {
            TopologyChange::EdgeDelete { .. } => "edge_del",
            TopologyChange::EdgeInsert { .. } => "edge_ins",
            TopologyChange::NodeDelete { .. } => "node_del",
            TopologyChange::NodeInsert { .. } => "node_ins",
        }
    }
}

impl fmt::Display for TopologyChange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            TopologyChange::EdgeDelete { u, v } | TopologyChange::EdgeInsert { u, v } => {
                write!(f, "{}({u},{v})", self.op_name())
            }
            TopologyChange::NodeDelete { v } | TopologyChange::NodeInsert { v } => {
                write!(f, "{}({v})", self.op_name())
            }
        }
    }
}

/// Applies one change in place.
pub fn apply_change_in_place(graph: &mut Graph, change: &TopologyChange) -> Result<(), TopologyError> {
    match *change {
        TopologyChange::EdgeDelete { u, v } => graph.remove_edge(u, v),
        TopologyChange::EdgeInsert { u, v } => graph.add_edge(u, v),
        TopologyChange::NodeDelete { v } => graph.remove_node(v).map(|_| ()),
        TopologyChange::NodeInsert { v } => graph.add_node(v),
    }
}

/// Pure version of [`apply_change_in_place`].
pub fn apply_change(graph: &Graph, change: &TopologyChange) -> Result<Graph, TopologyError> {
    let mut g = graph.clone();
    apply_change_in_place(&mut g, change)?;
    Ok(g)
}

/// The adversary's strategy: an ordered list of changes per round. Fixed
/// before execution and finite.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Schedule {
    rounds: BTreeMap<Round, Vec<TopologyChange>>,
}

impl Schedule {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, round: Round, change: TopologyChange) -> Result<(), TopologyError> {
        if round == 0 {
            return Err(TopologyError::RoundZero);
        }
        self.rounds.entry(round).or_default().push(change);
        Ok(())
    }

    pub fn with(mut self, round: Round, change: TopologyChange) -> Self {
        self.push(round, change).expect("round must be >= 1");
        self
    }

    pub fn changes_at(&self, round: Round) -> &[TopologyChange] {
        self.rounds.get(&round).map_or(&[], Vec::as_slice)
    }

    /// Total number of changes, C.
    pub fn len(&self) -> usize {
        self.rounds.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.values().all(Vec::is_empty)
    }

    pub fn last_round(&self) -> Option<Round> {
        self.rounds.iter().rev().find(|(_, c)| !c.is_empty()).map(|(&r, _)| r)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Round, &TopologyChange)> + '_ {
        self.rounds.iter().flat_map(|(&r, cs)| cs.iter().map(move |c| (r, c)))
    }

    pub fn rounds(&self) -> impl Iterator<Item = (Round, &[TopologyChange])> + '_ {
        self.rounds.iter().map(|(&r, cs)| (r, cs.as_slice()))
    }

    /// Checks applicability round by round against `g1`.
    pub fn validate(&self, g1: &Graph) -> Result<(), TopologyError> {
        derive_graph_sequence(g1, self).map(|_| ())
    }
}
