use serde::{Deserialize, Serialize};

use super::protocol::{LetterId, StateId};
use super::rng::CoinSource;
use super::world::WorldState;
use super::{EngineError, Machine};
use crate::topology::{NodeId, Round, TopologyChange};

/// What to do with a change that does not apply to the current graph.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ChangePolicy {
    #[default]
    Strict,
    /// Skip it and log a warning.
    Permissive,
}

/// One node's part of a round.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeStep {
    pub node: NodeId,
    /// State the node resides in during the round (q₀ for a node inserted
    /// in this round).
    pub before: StateId,
    /// `None` when the node was deleted in phase (ii).
    pub after: Option<StateId>,
    /// `None` is ε.
    pub emission: Option<LetterId>,
    /// Index drawn from a randomized outcome set.
    pub outcome: Option<u8>,
}

impl NodeStep {
    pub fn deleted(&self) -> bool {
        self.after.is_none()
    }

    /// A transition into a different state.
    pub fn moved(&self) -> bool {
        self.after.is_some_and(|a| a != self.before)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: Round,
    /// Changes actually applied in phase (ii), in order.
    pub changes: Vec<TopologyChange>,
    /// Sorted by node id.
    pub steps: Vec<NodeStep>,
}

impl RoundRecord {
    pub fn step(&self, v: NodeId) -> Option<&NodeStep> {
        match self.steps.binary_search_by_key(&v, |s| s.node) {
            Ok(i) => Some(&self.steps[i]),
            Err(_) => None,
        }
    }
}

/// A world after phases (i) and (ii) of a round, waiting for phase (iii).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Prepared {
    pub round: Round,
    pub changes: Vec<TopologyChange>,
    deleted: Vec<NodeStep>,
}

/// Phases (i) and (ii): deliver last round's emissions, then apply `changes`
/// in order.
pub fn prepare_round(
    world: &mut WorldState,
    changes: &[TopologyChange],
    policy: ChangePolicy,
) -> Result<Prepared, EngineError> {
    let round = world.round();
    world.deliver();
    let mut applied = Vec::with_capacity(changes.len());
    let mut deleted = Vec::new();
    for change in changes {
        if let Err(e) = world.check(change) {
            match policy {
                ChangePolicy::Strict => return Err(EngineError::Topology { round, source: e }),
                ChangePolicy::Permissive => {
                    log::warn!("round {round}: skipping {change}: {e}");
                    continue;
                }
            }
        }
        if let TopologyChange::NodeDelete { v } = *change {
            let before = world.state(v).expect("checked");
            deleted.push(NodeStep { node: v, before, after: None, emission: None, outcome: None });
        }
        world.apply(change).map_err(|e| EngineError::Topology { round, source: e })?;
        applied.push(*change);
    }
    Ok(Prepared { round, changes: applied, deleted })
}

/// Nodes whose transition in phase (iii) draws a coin, with the arity.
pub fn choice_points(world: &WorldState, machine: &Machine) -> Vec<(NodeId, usize)> {
    let bound = machine.spec().bound;
    world
        .nodes()
        .filter_map(|n| {
            let k = machine.rule(n.state, n.count_code(bound)).outcomes.len();
            (k > 1).then_some((n.id, k))
        })
        .collect()
}

/// Phases (iii) and (iv): every node observes its ports and transitions;
/// emissions become pending for the next round.
pub fn finish_round<C: CoinSource + ?Sized>(
    world: &mut WorldState,
    prepared: Prepared,
    machine: &Machine,
    coins: &mut C,
) -> RoundRecord {
    let Prepared { round, changes, deleted } = prepared;
    let bound = machine.spec().bound;
    let mut steps = Vec::with_capacity(world.node_count() + deleted.len());
    let mut pending = std::collections::BTreeMap::new();
    for node in world.slots_mut() {
        let rule = machine.rule(node.state, node.count_code(bound));
        let (idx, outcome) = if rule.outcomes.len() > 1 {
            let i = coins.draw(node.id, round, rule.outcomes.len());
            (i, Some(i as u8))
        } else {
            (0, None)
        };
        let o = rule.outcomes[idx];
        let emission = o.emit.letter();
        steps.push(NodeStep { node: node.id, before: node.state, after: Some(o.next), emission, outcome });
        if let Some(l) = emission {
            pending.insert(node.id, l);
        }
        node.state = o.next;
    }
    world.replace_pending(pending);
    if !deleted.is_empty() {
        steps.extend(deleted);
        steps.sort_by_key(|s| (s.node, s.after.is_some()));
    }
    world.set_round(round + 1);
    RoundRecord { round, changes, steps }
}

/// One full round: deliver, change, transition, record.
pub fn step_round<C: CoinSource + ?Sized>(
    world: &mut WorldState,
    changes: &[TopologyChange],
    machine: &Machine,
    coins: &mut C,
    policy: ChangePolicy,
) -> Result<RoundRecord, EngineError> {
    let prepared = prepare_round(world, changes, policy)?;
    Ok(finish_round(world, prepared, machine, coins))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{FixedChoices, ScriptedCoins, SeededCoins};
    use crate::mis;
    use crate::topology::Graph;

    fn setup(n: u32, edges: &[(u32, u32)]) -> (WorldState, Machine) {
        let m = Machine::new(mis::build()).unwrap();
        let w = WorldState::new(&Graph::from_edges(n, edges).unwrap(), m.spec()).unwrap();
        (w, m)
    }

    #[test]
    fn lone_start_node_moves_to_d1() {
        let (mut w, m) = setup(1, &[]);
        let rec = step_round(&mut w, &[], &m, &mut SeededCoins::new(0), ChangePolicy::Strict).unwrap();
        let d1 = m.spec().state_id("D1").unwrap();
        assert_eq!(w.state(NodeId(0)), Some(d1));
        assert_eq!(w.pending().get(&NodeId(0)), Some(&m.spec().letter_id("D1").unwrap()));
        assert!(w.node(NodeId(0)).unwrap().ports().is_empty());
        assert_eq!(rec.steps.len(), 1);
        assert_eq!(rec.steps[0].outcome, None);
    }

    #[test]
    fn k2_coin_split() {
        let (mut w, m) = setup(2, &[(0, 1)]);
        let spec = m.spec().clone();
        let u0 = spec.state_id("U0").unwrap();
        for v in 0..2 {
            w.set_state(NodeId(v), u0).unwrap();
            w.set_port(NodeId(v), NodeId(1 - v), spec.letter_id("U0").unwrap()).unwrap();
        }
        let mut coins = ScriptedCoins::new().node(0u32, &[0]).node(1u32, &[1]);
        let rec = step_round(&mut w, &[], &m, &mut coins, ChangePolicy::Strict).unwrap();
        assert_eq!(w.state(NodeId(0)), spec.state_id("U1"));
        assert_eq!(w.state(NodeId(1)), spec.state_id("D2"));
        assert_eq!(w.pending().get(&NodeId(0)), spec.letter_id("U1").as_ref());
        assert_eq!(w.pending().get(&NodeId(1)), spec.letter_id("D2").as_ref());
        assert_eq!(rec.steps[0].outcome, Some(0));
        assert_eq!(rec.steps[1].outcome, Some(1));
    }

    #[test]
    fn inserted_edge_discards_in_flight_letter() {
        let (mut w, m) = setup(2, &[]);
        let spec = m.spec().clone();
        w.set_pending(NodeId(1), spec.letter_id("U'"));
        let ins = TopologyChange::EdgeInsert { u: NodeId(0), v: NodeId(1) };
        let prepared = prepare_round(&mut w, &[ins], ChangePolicy::Strict).unwrap();
        assert_eq!(w.node(NodeId(0)).unwrap().port(NodeId(1)), spec.letter_id("S"));
        assert_eq!(prepared.changes, vec![ins]);
    }

    #[test]
    fn delivery_then_deletion_erases_port() {
        let (mut w, m) = setup(3, &[(0, 1), (1, 2)]);
        let l = m.spec().letter_id("W").unwrap();
        w.set_pending(NodeId(0), Some(l));
        let del = TopologyChange::EdgeDelete { u: NodeId(0), v: NodeId(1) };
        prepare_round(&mut w, &[del], ChangePolicy::Strict).unwrap();
        assert_eq!(w.node(NodeId(1)).unwrap().port(NodeId(0)), None);
        w.check_invariants().unwrap();
    }

    #[test]
    fn deleted_and_inserted_nodes_are_recorded() {
        let (mut w, m) = setup(2, &[(0, 1)]);
        let changes = [TopologyChange::NodeDelete { v: NodeId(0) }, TopologyChange::NodeInsert { v: NodeId(5) }];
        let rec = step_round(&mut w, &changes, &m, &mut SeededCoins::new(1), ChangePolicy::Strict).unwrap();
        let s = m.spec().state_id("S").unwrap();
        let nodes: Vec<_> = rec.steps.iter().map(|s| (s.node.0, s.before, s.deleted())).collect();
        assert_eq!(nodes, vec![(0, s, true), (1, s, false), (5, s, false)]);
        assert_eq!(w.state(NodeId(5)), m.spec().state_id("D1"));
    }

    #[test]
    fn strict_rejects_and_permissive_skips() {
        let (mut w, m) = setup(2, &[]);
        let bad = TopologyChange::EdgeDelete { u: NodeId(0), v: NodeId(1) };
        let err = step_round(&mut w.clone(), &[bad], &m, &mut SeededCoins::new(1), ChangePolicy::Strict).unwrap_err();
        assert!(matches!(err, EngineError::Topology { round: 1, .. }), "{err}");
        let rec = step_round(&mut w, &[bad], &m, &mut SeededCoins::new(1), ChangePolicy::Permissive).unwrap();
        assert!(rec.changes.is_empty());
    }

    #[test]
    fn choice_points_match_draws() {
        let (mut w, m) = setup(2, &[(0, 1)]);
        for _ in 0..2 {
            step_round(&mut w, &[], &m, &mut SeededCoins::new(3), ChangePolicy::Strict).unwrap();
        }
        // both in U0 reading U0: both toss
        let pre = prepare_round(&mut w, &[], ChangePolicy::Strict).unwrap();
        assert_eq!(choice_points(&w, &m), vec![(NodeId(0), 2), (NodeId(1), 2)]);
        let mut fixed = FixedChoices([(NodeId(0), 1), (NodeId(1), 1)].into());
        finish_round(&mut w, pre, &m, &mut fixed);
        let d2 = m.spec().state_id("D2");
        assert_eq!((w.state(NodeId(0)), w.state(NodeId(1))), (d2, d2));
    }
}
