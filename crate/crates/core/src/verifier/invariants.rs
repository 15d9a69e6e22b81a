use std::collections::{BTreeMap, BTreeSet};

use super::CheckReport;
use crate::engine::{replay_mid, Machine, NodeStep, RoundRecord, StateId, Trace};
use crate::metrics::Timeline;
use crate::mis::{MisState, StateClass};
use crate::topology::{NodeId, Round, TopologyChange};

/// Per-round view shared by trace checks and the exhaustive explorer:
/// MIS names of state ids, and adjacency after the round's changes.
pub(crate) struct RoundView<'a> {
    pub mis: &'a dyn Fn(StateId) -> Option<MisState>,
    pub neighbors: &'a dyn Fn(NodeId) -> Vec<NodeId>,
}

impl RoundView<'_> {
    fn before(&self, s: &NodeStep) -> Option<MisState> {
        (self.mis)(s.before)
    }

    fn after(&self, s: &NodeStep) -> Option<MisState> {
        s.after.and_then(|a| (self.mis)(a))
    }

    pub fn w_entry(&self, rec: &RoundRecord) -> Option<String> {
        let entering: BTreeSet<NodeId> = rec
            .steps
            .iter()
            .filter(|s| self.before(s) != Some(MisState::W) && self.after(s) == Some(MisState::W))
            .map(|s| s.node)
            .collect();
        entering.iter().find_map(|&u| {
            (self.neighbors)(u)
                .into_iter()
                .find(|w| entering.contains(w))
                .map(|w| format!("adjacent nodes {u} and {w} both enter W"))
        })
    }

    /// Nodes in S and nodes excluded in the same round are exempt.
    pub fn separation(&self, rec: &RoundRecord) -> Option<String> {
        rec.steps
            .iter()
            .filter(|s| self.before(s) == Some(MisState::DPrime) && self.after(s) == Some(MisState::UPrime))
            .find_map(|s| {
                (self.neighbors)(s.node).into_iter().find_map(|w| {
                    let ws = rec.step(w)?;
                    let before = self.before(ws)?;
                    let blocked = proportional(Some(before))
                        && before != MisState::S
                        && self.after(ws) != Some(MisState::DPrime);
                    blocked.then(|| format!("node {} enters U' next to node {w} in {before}", s.node))
                })
            })
    }

    pub fn one_way(&self, rec: &RoundRecord) -> Option<String> {
        rec.steps.iter().find_map(|s| {
            let before = self.before(s)?;
            let after = self.after(s);
            (!proportional(Some(before)) && proportional(after))
                .then(|| format!("node {} moves from {before} to {}", s.node, after.expect("checked")))
        })
    }

    pub fn defensive(&self, rec: &RoundRecord) -> Option<String> {
        rec.steps.iter().find_map(|s| {
            let before = self.before(s)?;
            let fired = (before == MisState::D1 || before.is_u()) && self.after(s) == Some(MisState::L);
            fired.then(|| format!("node {} moves from {before} to L", s.node))
        })
    }
}

/// Runs `f` on every record with the post-change graph; first finding wins.
fn scan(trace: &Trace, name: &str, f: impl Fn(&RoundView<'_>, &RoundRecord) -> Option<String>) -> CheckReport {
    let tl = Timeline::new(trace);
    let mis = |s: StateId| tl.mis(s);
    let first = trace.records.iter().find_map(|rec| {
        let g = tl.seq.at(rec.round + 1);
        let neighbors = |v: NodeId| g.neighbors(v).collect::<Vec<_>>();
        let view = RoundView { mis: &mis, neighbors: &neighbors };
        f(&view, rec).map(|d| (rec.round, d))
    });
    CheckReport::from_first(name, first)
}

fn proportional(q: Option<MisState>) -> bool {
    q.is_some_and(|q| q.class() == StateClass::ProportionalActive)
}

/// No two adjacent nodes move into W in the same round.
pub fn check_no_adjacent_w_entry(trace: &Trace) -> CheckReport {
    scan(trace, "no adjacent W entry", |v, r| v.w_entry(r))
}

/// No node starts a greedy tournament next to a node that stays in the
/// Proportional component.
pub fn check_component_separation(trace: &Trace) -> CheckReport {
    scan(trace, "component separation", |v, r| v.separation(r))
}

/// Nodes never return from W, L, D' or U' to the Proportional component.
pub fn check_one_way_flow(trace: &Trace) -> CheckReport {
    scan(trace, "one-way flow", |v, r| v.one_way(r))
}

/// D1 and U-states never move to L. Only meaningful without changes.
pub fn check_defensive_rules(trace: &Trace) -> CheckReport {
    scan(trace, "no W-detection from D1 or U", |v, r| v.defensive(r))
}

/// A node that stays in L through a round without incident changes has a
/// W-neighbor in that round or the next.
pub fn check_l_justification(trace: &Trace) -> CheckReport {
    let tl = Timeline::new(trace);
    let first = trace.records.iter().find_map(|rec| {
        let (g0, g1) = (tl.seq.at(rec.round), tl.seq.at(rec.round + 1));
        rec.steps.iter().find_map(|s| {
            let stays = tl.mis(s.before) == Some(MisState::L) && s.after.and_then(|a| tl.mis(a)) == Some(MisState::L);
            if !stays || g0.neighbor_set(s.node) != g1.neighbor_set(s.node) {
                return None;
            }
            let covered = g1.neighbors(s.node).any(|w| {
                rec.step(w).is_some_and(|ws| {
                    tl.mis(ws.before) == Some(MisState::W) || ws.after.and_then(|a| tl.mis(a)) == Some(MisState::W)
                })
            });
            (!covered).then(|| (rec.round, format!("node {} stays in L without a W-neighbor", s.node)))
        })
    });
    CheckReport::from_first("L justification", first)
}

/// Adjacent nodes in U-states are at most one U-turn apart within their
/// current tournaments.
pub fn check_staggering(trace: &Trace) -> CheckReport {
    let tl = Timeline::new(trace);
    let mut count: BTreeMap<NodeId, (Option<MisState>, usize)> = BTreeMap::new();
    let mut first = None;
    for rec in &trace.records {
        for s in &rec.steps {
            let q = tl.mis(s.before);
            let e = count.entry(s.node).or_insert((None, 0));
            if q != e.0 {
                match q {
                    Some(MisState::D1) => e.1 = 0,
                    Some(u) if u.is_u() => e.1 += 1,
                    _ => {}
                }
                e.0 = q;
            }
        }
        let g = tl.seq.at(rec.round);
        let in_u = |v: &NodeId| count.get(v).filter(|(q, _)| q.is_some_and(MisState::is_u)).map(|&(_, c)| c);
        first = g.nodes().find_map(|u| {
            let cu = in_u(&u)?;
            g.neighbors(u).find_map(|w| {
                let cw = in_u(&w)?;
                (cu.abs_diff(cw) > 1).then(|| (rec.round, format!("nodes {u} and {w} are {cu} and {cw} U-turns in")))
            })
        });
        if first.is_some() {
            break;
        }
    }
    CheckReport::from_first("staggering", first)
}

/// Right before transitions, every port holds the sender's current state,
/// or S when the edge was inserted after the sender's last transmission.
pub fn check_truthful_ports(trace: &Trace) -> CheckReport {
    let spec = &trace.protocol;
    let sigma0 = spec.initial_letter;
    // round of each node's last transmission
    let mut sent: BTreeMap<NodeId, Round> = BTreeMap::new();
    let mut inserted: BTreeMap<(NodeId, NodeId), Round> = BTreeMap::new();
    let mut first: Option<(Round, String)> = None;
    let res = replay_mid(trace, |world, rec| {
        if first.is_some() {
            return;
        }
        for c in &rec.changes {
            if let TopologyChange::EdgeInsert { u, v } = *c {
                inserted.insert((u.min(v), u.max(v)), rec.round);
            }
        }
        'outer: for node in world.nodes() {
            for p in node.ports() {
                let sender = p.neighbor;
                let Some(state) = world.state(sender) else { continue };
                if spec.letter_name(p.letter) == spec.state_name(state) {
                    continue;
                }
                let fresh = inserted
                    .get(&(sender.min(node.id), sender.max(node.id)))
                    .is_some_and(|&r| sent.get(&sender).is_none_or(|&e| r > e));
                if p.letter == sigma0 && fresh {
                    continue;
                }
                first = Some((
                    rec.round,
                    format!(
                        "port of {} from {sender} holds {} but {sender} is in {}",
                        node.id,
                        spec.letter_name(p.letter),
                        spec.state_name(state)
                    ),
                ));
                break 'outer;
            }
        }
        for s in &rec.steps {
            if s.emission.is_some() {
                sent.insert(s.node, rec.round);
            }
        }
    });
    if let Err(e) = res {
        return CheckReport::from_first("truthful ports", Some((0, e.to_string())));
    }
    CheckReport::from_first("truthful ports", first)
}

/// Every recorded transition is one the protocol allows: the first
/// matching rule for the observed counts, the recorded outcome index, and
/// that outcome's target and emission.
pub fn check_conformance(trace: &Trace) -> CheckReport {
    let name = "protocol conformance";
    let machine = match Machine::new(trace.protocol.clone()) {
        Ok(m) => m,
        Err(e) => return CheckReport::from_first(name, Some((0, e.to_string()))),
    };
    let bound = trace.protocol.bound;
    let mut first: Option<(Round, String)> = None;
    let res = replay_mid(trace, |world, rec| {
        if first.is_some() {
            return;
        }
        first = rec.steps.iter().filter(|s| !s.deleted()).find_map(|s| {
            let node = world.node(s.node)?;
            let rule = machine.rule(node.state, node.count_code(bound));
            let idx = match (rule.outcomes.len(), s.outcome) {
                (1, None) => 0,
                (k, Some(i)) if k > 1 && (i as usize) < k => i as usize,
                (k, i) => return Some((rec.round, format!("node {}: outcome {i:?} for a rule with {k} outcomes", s.node))),
            };
            let o = rule.outcomes[idx];
            (s.after != Some(o.next) || s.emission != o.emit.letter())
                .then(|| (rec.round, format!("node {} took a transition the protocol does not allow", s.node)))
        });
    });
    if let Err(e) = res {
        return CheckReport::from_first(name, Some((0, e.to_string())));
    }
    CheckReport::from_first(name, first)
}
