use crate::engine::{ProtocolSpec, StateId, Trace};
use crate::mis::MisState;
use crate::topology::{GraphSeq, NodeId, Round};

/// One node's life in a trace.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NodeLine {
    /// First round the node resides in.
    pub first: Round,
    /// State resided in, per round from `first`.
    pub states: Vec<StateId>,
    /// State after the node's last recorded round; `None` if deleted.
    pub last_after: Option<StateId>,
}

impl NodeLine {
    pub fn state_at(&self, r: Round) -> Option<StateId> {
        if r < self.first {
            return None;
        }
        let i = (r - self.first) as usize;
        self.states.get(i).copied().or(self.last_after)
    }

    /// Rounds the node resides in, in order.
    pub fn rounds(&self) -> impl Iterator<Item = (Round, StateId)> + '_ {
        self.states.iter().enumerate().map(|(i, &s)| (self.first + i as Round, s))
    }

    pub fn deleted(&self) -> bool {
        self.last_after.is_none()
    }
}

/// Per-node state histories plus the executed graph sequence.
#[derive(Clone, Debug)]
pub struct Timeline {
    lines: Vec<Option<NodeLine>>,
    mis: Vec<Option<MisState>>,
    pub seq: GraphSeq,
    pub rounds: Round,
}

impl Timeline {
    pub fn new(trace: &Trace) -> Self {
        let mut lines: Vec<Option<NodeLine>> = Vec::new();
        for rec in &trace.records {
            for s in &rec.steps {
                let i = s.node.index();
                if lines.len() <= i {
                    lines.resize_with(i + 1, || None);
                }
                let line = lines[i].get_or_insert_with(|| NodeLine {
                    first: rec.round,
                    states: Vec::new(),
                    last_after: None,
                });
                line.states.push(s.before);
                line.last_after = s.after;
            }
        }
        // nodes that never took a step (zero-round traces)
        for n in trace.initial.nodes() {
            let i = n.id.index();
            if lines.len() <= i {
                lines.resize_with(i + 1, || None);
            }
            lines[i].get_or_insert_with(|| NodeLine { first: 1, states: Vec::new(), last_after: Some(n.state) });
        }
        Timeline {
            lines,
            mis: mis_map(&trace.protocol),
            seq: trace.graph_sequence(),
            rounds: trace.records.len() as Round,
        }
    }

    pub fn line(&self, v: NodeId) -> Option<&NodeLine> {
        self.lines.get(v.index()).and_then(Option::as_ref)
    }

    pub fn lines(&self) -> impl Iterator<Item = (NodeId, &NodeLine)> + '_ {
        self.lines
            .iter()
            .enumerate()
            .filter_map(|(i, l)| l.as_ref().map(|l| (NodeId(i as u32), l)))
    }

    /// The MIS state named like `s`, if the protocol uses MIS state names.
    pub fn mis(&self, s: StateId) -> Option<MisState> {
        self.mis.get(s.0 as usize).copied().flatten()
    }

    pub fn mis_at(&self, v: NodeId, r: Round) -> Option<MisState> {
        self.line(v).and_then(|l| l.state_at(r)).and_then(|s| self.mis(s))
    }
}

pub(crate) fn mis_map(spec: &ProtocolSpec) -> Vec<Option<MisState>> {
    spec.states
        .iter()
        .map(|name| MisState::ALL.iter().copied().find(|q| q.name() == name))
        .collect()
}
