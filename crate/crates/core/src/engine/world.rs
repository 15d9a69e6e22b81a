use std::collections::{BTreeMap, BTreeSet};

use super::protocol::{CountVector, LetterId, ProtocolSpec, StateId};
use super::EngineError;
use crate::topology::{Graph, NodeId, Round, TopologyChange, TopologyError};

/// Node ids index a dense slot table; this caps how sparse they may be.
pub const MAX_NODE_ID: u32 = 1 << 24;

/// Register φ_u(v): the last letter `u` received from `neighbor`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Port {
    pub neighbor: NodeId,
    pub letter: LetterId,
    /// Position of the reverse port in `neighbor`'s port list.
    rev: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct NodeRuntime {
    pub id: NodeId,
    pub state: StateId,
    /// Sorted by neighbor id; keys equal the current neighbor set.
    ports: Vec<Port>,
    /// Unbounded per-letter port occupancy.
    counts: Vec<u32>,
}

impl NodeRuntime {
    fn new(id: NodeId, state: StateId, letters: usize) -> Self {
        Self { id, state, ports: Vec::new(), counts: vec![0; letters] }
    }

    pub fn ports(&self) -> &[Port] {
        &self.ports
    }

    pub fn port(&self, neighbor: NodeId) -> Option<LetterId> {
        self.find(neighbor).ok().map(|i| self.ports[i].letter)
    }

    pub fn degree(&self) -> usize {
        self.ports.len()
    }

    pub fn neighbors(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.ports.iter().map(|p| p.neighbor)
    }

    /// Raw letter occupancy (not capped by the bounding parameter).
    pub fn raw_counts(&self) -> &[u32] {
        &self.counts
    }

    fn find(&self, neighbor: NodeId) -> Result<usize, usize> {
        self.ports.binary_search_by_key(&neighbor, |p| p.neighbor)
    }

    pub(crate) fn count_code(&self, bound: u32) -> usize {
        let radix = bound as usize + 1;
        self.counts.iter().rev().fold(0, |acc, &c| acc * radix + c.min(bound) as usize)
    }
}

/// Bounded observation: entry σ is `min(#ports holding σ, b)`, computed
/// directly from the ports.
pub fn observe(node: &NodeRuntime, bound: u32, letters: usize) -> CountVector {
    let mut v = CountVector::zeros(letters);
    for p in &node.ports {
        v.0[p.letter.0 as usize] += 1;
    }
    for x in &mut v.0 {
        *x = (*x).min(bound);
    }
    v
}

/// Ground truth of one moment of an execution: the current graph (held as
/// the port lists), every node's state and ports, and the emissions
/// produced in the previous round that have not been delivered yet.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct WorldState {
    slots: Vec<Option<NodeRuntime>>,
    live: usize,
    pending: BTreeMap<NodeId, LetterId>,
    /// Next round to execute.
    round: Round,
    letters: usize,
    initial_state: StateId,
    initial_letter: LetterId,
}

impl WorldState {
    /// Fresh world on `graph`: every node in q₀, every port holding σ₀.
    pub fn new(graph: &Graph, spec: &ProtocolSpec) -> Result<Self, EngineError> {
        let mut w = WorldState {
            slots: Vec::new(),
            live: 0,
            pending: BTreeMap::new(),
            round: 1,
            letters: spec.alphabet.len(),
            initial_state: spec.initial,
            initial_letter: spec.initial_letter,
        };
        for v in graph.nodes() {
            w.insert_node(v).map_err(|e| EngineError::Topology { round: 0, source: e })?;
        }
        for (u, v) in graph.edges() {
            w.insert_edge(u, v).map_err(|e| EngineError::Topology { round: 0, source: e })?;
        }
        Ok(w)
    }

    pub fn round(&self) -> Round {
        self.round
    }

    pub(crate) fn set_round(&mut self, r: Round) {
        self.round = r;
    }

    pub fn node_count(&self) -> usize {
        self.live
    }

    pub fn is_empty(&self) -> bool {
        self.live == 0
    }

    pub fn letters(&self) -> usize {
        self.letters
    }

    pub fn node(&self, v: NodeId) -> Option<&NodeRuntime> {
        self.slots.get(v.index()).and_then(Option::as_ref)
    }

    pub fn contains(&self, v: NodeId) -> bool {
        self.node(v).is_some()
    }

    pub fn nodes(&self) -> impl Iterator<Item = &NodeRuntime> + '_ {
        self.slots.iter().filter_map(Option::as_ref)
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes().map(|n| n.id)
    }

    pub fn state(&self, v: NodeId) -> Option<StateId> {
        self.node(v).map(|n| n.state)
    }

    pub fn states(&self) -> BTreeMap<NodeId, StateId> {
        self.nodes().map(|n| (n.id, n.state)).collect()
    }

    pub fn pending(&self) -> &BTreeMap<NodeId, LetterId> {
        &self.pending
    }

    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        self.node(u).is_some_and(|n| n.find(v).is_ok())
    }

    /// The current graph G_r.
    pub fn graph(&self) -> Graph {
        let mut g = Graph::new();
        for n in self.nodes() {
            g.add_node(n.id).expect("unique slots");
        }
        for n in self.nodes() {
            for p in n.ports.iter().filter(|p| p.neighbor > n.id) {
                g.add_edge(n.id, p.neighbor).expect("consistent ports");
            }
        }
        g
    }

    /// Overrides a node's state (for building hand-made configurations).
    pub fn set_state(&mut self, v: NodeId, state: StateId) -> Result<(), EngineError> {
        let n = self.slot_mut(v).ok_or(EngineError::UnknownNode(v))?;
        n.state = state;
        Ok(())
    }

    /// Overrides the letter in φ_u(v).
    pub fn set_port(&mut self, u: NodeId, v: NodeId, letter: LetterId) -> Result<(), EngineError> {
        let n = self.slot_mut(u).ok_or(EngineError::UnknownNode(u))?;
        let i = n.find(v).map_err(|_| EngineError::Topology {
            round: 0,
            source: TopologyError::MissingEdge(u, v),
        })?;
        let old = n.ports[i].letter;
        n.counts[old.0 as usize] -= 1;
        n.counts[letter.0 as usize] += 1;
        n.ports[i].letter = letter;
        Ok(())
    }

    /// Queues an emission of `u` for delivery at the start of the next round.
    pub fn set_pending(&mut self, u: NodeId, letter: Option<LetterId>) {
        match letter {
            Some(l) => {
                self.pending.insert(u, l);
            }
            None => {
                self.pending.remove(&u);
            }
        }
    }

    pub(crate) fn slot_mut(&mut self, v: NodeId) -> Option<&mut NodeRuntime> {
        self.slots.get_mut(v.index()).and_then(Option::as_mut)
    }

    pub(crate) fn slots_mut(&mut self) -> impl Iterator<Item = &mut NodeRuntime> + '_ {
        self.slots.iter_mut().filter_map(Option::as_mut)
    }

    pub(crate) fn replace_pending(&mut self, pending: BTreeMap<NodeId, LetterId>) {
        self.pending = pending;
    }

    /// Phase (i): every pending letter lands in the sender's neighbors' ports.
    pub(crate) fn deliver(&mut self) {
        let pending = std::mem::take(&mut self.pending);
        for (u, letter) in pending {
            let Some(sender) = self.slots.get_mut(u.index()).and_then(Option::as_mut) else {
                continue;
            };
            let ports = std::mem::take(&mut sender.ports);
            for p in &ports {
                let recv = self.slots[p.neighbor.index()].as_mut().expect("port to live node");
                let slot = &mut recv.ports[p.rev as usize];
                debug_assert_eq!(slot.neighbor, u);
                recv.counts[slot.letter.0 as usize] -= 1;
                recv.counts[letter.0 as usize] += 1;
                slot.letter = letter;
            }
            self.slots[u.index()].as_mut().expect("sender alive").ports = ports;
        }
    }

    /// Phase (ii) for one change.
    pub(crate) fn apply(&mut self, change: &TopologyChange) -> Result<(), TopologyError> {
        match *change {
            TopologyChange::EdgeDelete { u, v } => self.remove_edge(u, v),
            TopologyChange::EdgeInsert { u, v } => self.insert_edge(u, v),
            TopologyChange::NodeDelete { v } => self.remove_node(v),
            TopologyChange::NodeInsert { v } => self.insert_node(v),
        }
    }

    pub(crate) fn check(&self, change: &TopologyChange) -> Result<(), TopologyError> {
        let need = |v: NodeId| if self.contains(v) { Ok(()) } else { Err(TopologyError::MissingNode(v)) };
        match *change {
            TopologyChange::EdgeDelete { u, v } => {
                need(u)?;
                need(v)?;
                if self.has_edge(u, v) {
                    Ok(())
                } else {
                    Err(TopologyError::MissingEdge(u, v))
                }
            }
            TopologyChange::EdgeInsert { u, v } => {
                if u == v {
                    return Err(TopologyError::SelfLoop(u));
                }
                need(u)?;
                need(v)?;
                if self.has_edge(u, v) {
                    Err(TopologyError::EdgeExists(u, v))
                } else {
                    Ok(())
                }
            }
            TopologyChange::NodeDelete { v } => need(v),
            TopologyChange::NodeInsert { v } => {
                if self.contains(v) {
                    Err(TopologyError::NodeExists(v))
                } else if v.0 > MAX_NODE_ID {
                    Err(TopologyError::InvalidParam(format!("node id {v} exceeds {MAX_NODE_ID}")))
                } else {
                    Ok(())
                }
            }
        }
    }

    fn insert_node(&mut self, v: NodeId) -> Result<(), TopologyError> {
        self.check(&TopologyChange::NodeInsert { v })?;
        if self.slots.len() <= v.index() {
            self.slots.resize_with(v.index() + 1, || None);
        }
        self.slots[v.index()] = Some(NodeRuntime::new(v, self.initial_state, self.letters));
        self.live += 1;
        Ok(())
    }

    /// Re-points the partners of `owner`'s ports at positions `from..`.
    fn fix_reverse(&mut self, owner: NodeId, from: usize) {
        let ports = std::mem::take(&mut self.slots[owner.index()].as_mut().expect("owner alive").ports);
        for (i, p) in ports.iter().enumerate().skip(from) {
            let partner = self.slots[p.neighbor.index()].as_mut().expect("partner alive");
            partner.ports[p.rev as usize].rev = i as u32;
        }
        self.slots[owner.index()].as_mut().expect("owner alive").ports = ports;
    }

    fn insert_edge(&mut self, u: NodeId, v: NodeId) -> Result<(), TopologyError> {
        self.check(&TopologyChange::EdgeInsert { u, v })?;
        let sigma0 = self.initial_letter;
        let pu = {
            let n = self.slot_mut(u).expect("checked");
            let pos = n.find(v).expect_err("checked");
            n.ports.insert(pos, Port { neighbor: v, letter: sigma0, rev: 0 });
            n.counts[sigma0.0 as usize] += 1;
            pos
        };
        self.fix_reverse(u, pu + 1);
        let pv = {
            let n = self.slot_mut(v).expect("checked");
            let pos = n.find(u).expect_err("checked");
            n.ports.insert(pos, Port { neighbor: u, letter: sigma0, rev: pu as u32 });
            n.counts[sigma0.0 as usize] += 1;
            pos
        };
        self.fix_reverse(v, pv + 1);
        self.slot_mut(u).expect("checked").ports[pu].rev = pv as u32;
        Ok(())
    }

    fn remove_edge(&mut self, u: NodeId, v: NodeId) -> Result<(), TopologyError> {
        self.check(&TopologyChange::EdgeDelete { u, v })?;
        let (pu, pv) = {
            let n = self.slot_mut(u).expect("checked");
            let pos = n.find(v).expect("checked");
            let p = n.ports.remove(pos);
            n.counts[p.letter.0 as usize] -= 1;
            (pos, p.rev as usize)
        };
        self.fix_reverse(u, pu);
        {
            let n = self.slot_mut(v).expect("checked");
            let p = n.ports.remove(pv);
            debug_assert_eq!(p.neighbor, u);
            n.counts[p.letter.0 as usize] -= 1;
        }
        self.fix_reverse(v, pv);
        Ok(())
    }

    fn remove_node(&mut self, v: NodeId) -> Result<(), TopologyError> {
        self.check(&TopologyChange::NodeDelete { v })?;
        let node = self.slots[v.index()].take().expect("checked");
        for p in &node.ports {
            let w = p.neighbor;
            {
                let n = self.slot_mut(w).expect("neighbor alive");
                let q = n.ports.remove(p.rev as usize);
                debug_assert_eq!(q.neighbor, v);
                n.counts[q.letter.0 as usize] -= 1;
            }
            self.fix_reverse(w, p.rev as usize);
        }
        self.pending.remove(&v);
        self.live -= 1;
        Ok(())
    }

    /// Verifies the structural invariants: symmetric ports, reverse
    /// indices, count bookkeeping, pending keys alive.
    pub fn check_invariants(&self) -> Result<(), String> {
        let mut live = 0;
        for n in self.nodes() {
            live += 1;
            let mut counts = vec![0u32; self.letters];
            let mut seen = BTreeSet::new();
            for (i, p) in n.ports.iter().enumerate() {
                if p.neighbor == n.id {
                    return Err(format!("self-loop at {}", n.id));
                }
                if !seen.insert(p.neighbor) {
                    return Err(format!("parallel edge {}-{}", n.id, p.neighbor));
                }
                let other = self.node(p.neighbor).ok_or_else(|| format!("dangling port {}->{}", n.id, p.neighbor))?;
                let back = other.ports.get(p.rev as usize).ok_or_else(|| format!("bad reverse index at {}", n.id))?;
                if back.neighbor != n.id || back.rev as usize != i {
                    return Err(format!("asymmetric ports {}-{}", n.id, p.neighbor));
                }
                if (p.letter.0 as usize) >= self.letters {
                    return Err(format!("letter out of alphabet at {}", n.id));
                }
                counts[p.letter.0 as usize] += 1;
            }
            if n.ports.windows(2).any(|w| w[0].neighbor >= w[1].neighbor) {
                return Err(format!("unsorted ports at {}", n.id));
            }
            if counts != n.counts {
                return Err(format!("count bookkeeping drift at {}", n.id));
            }
        }
        if live != self.live {
            return Err("live counter drift".into());
        }
        if let Some(v) = self.pending.keys().find(|v| !self.contains(**v)) {
            return Err(format!("pending emission of missing node {v}"));
        }
        Ok(())
    }

    /// Every node resides in q_yes or q_no (vacuously true when empty).
    pub fn is_output_configuration(&self, spec: &ProtocolSpec) -> bool {
        self.nodes().all(|n| spec.is_output(n.state))
    }

    /// Output configuration whose yes-nodes form an MIS of the current graph.
    pub fn is_correct_output(&self, spec: &ProtocolSpec) -> bool {
        self.is_output_configuration(spec)
            && self.nodes().all(|n| {
                let yes_nb = n.neighbors().any(|w| self.state(w) == Some(spec.yes));
                if n.state == spec.yes {
                    !yes_nb
                } else {
                    yes_nb
                }
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mis;

    fn world(n: u32, edges: &[(u32, u32)]) -> (WorldState, ProtocolSpec) {
        let spec = mis::build();
        let g = Graph::from_edges(n, edges).unwrap();
        (WorldState::new(&g, &spec).unwrap(), spec)
    }

    #[test]
    fn fresh_ports_hold_initial_letter() {
        let (w, spec) = world(3, &[(0, 1), (1, 2)]);
        w.check_invariants().unwrap();
        assert_eq!(w.node(NodeId(1)).unwrap().port(NodeId(0)), Some(spec.initial_letter));
        assert_eq!(w.graph(), Graph::from_edges(3, &[(0, 1), (1, 2)]).unwrap());
    }

    #[test]
    fn observe_bounds_counts() {
        let spec = mis::build();
        let l = |s: &str| spec.letter_id(s).unwrap();
        let (mut w, _) = world(4, &[(0, 1), (0, 2), (0, 3)]);
        w.set_port(NodeId(0), NodeId(1), l("W")).unwrap();
        w.set_port(NodeId(0), NodeId(2), l("W")).unwrap();
        w.set_port(NodeId(0), NodeId(3), l("D1")).unwrap();
        let c = observe(w.node(NodeId(0)).unwrap(), 1, spec.alphabet.len());
        let mut want = CountVector::zeros(spec.alphabet.len());
        want.set(l("W"), 1);
        want.set(l("D1"), 1);
        assert_eq!(c, want);

        for v in 1..4 {
            w.set_port(NodeId(0), NodeId(v), l("U0")).unwrap();
        }
        let c = observe(w.node(NodeId(0)).unwrap(), 2, spec.alphabet.len());
        assert_eq!(c.get(l("U0")), 2);
        assert_eq!(c.0.iter().sum::<u32>(), 2);

        let c = observe(w.node(NodeId(1)).unwrap(), 1, spec.alphabet.len());
        assert_eq!(c.get(l("S")), 1);
        let (w, _) = world(1, &[]);
        assert_eq!(observe(w.node(NodeId(0)).unwrap(), 3, 10), CountVector::zeros(10));
    }

    #[test]
    fn structural_changes_keep_invariants() {
        let (mut w, _) = world(5, &[(0, 1), (0, 2), (1, 2), (2, 3), (3, 4)]);
        let n = NodeId;
        w.apply(&TopologyChange::EdgeInsert { u: n(4), v: n(0) }).unwrap();
        w.check_invariants().unwrap();
        w.apply(&TopologyChange::EdgeDelete { u: n(1), v: n(2) }).unwrap();
        w.check_invariants().unwrap();
        w.apply(&TopologyChange::NodeDelete { v: n(2) }).unwrap();
        w.check_invariants().unwrap();
        w.apply(&TopologyChange::NodeInsert { v: n(9) }).unwrap();
        w.apply(&TopologyChange::EdgeInsert { u: n(9), v: n(1) }).unwrap();
        w.check_invariants().unwrap();
        assert_eq!(w.node_count(), 5);
        assert_eq!(
            w.graph().edges().map(|(a, b)| (a.0, b.0)).collect::<Vec<_>>(),
            vec![(0, 1), (0, 4), (1, 9), (3, 4)]
        );
        assert!(w.apply(&TopologyChange::EdgeInsert { u: n(0), v: n(1) }).is_err());
        assert!(w.apply(&TopologyChange::NodeDelete { v: n(2) }).is_err());
    }
}
