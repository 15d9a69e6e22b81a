use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::timeline::Timeline;
use crate::mis::{MisState, StateClass};
use crate::topology::{NodeId, Round};

/// One Proportional tournament of a node: it starts with a D1-turn.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tournament {
    pub start: Round,
    pub u_turns: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GreedyTournament {
    pub participants: Vec<NodeId>,
    pub active_length: usize,
}

/// Turns of `v`: maximal runs of one Proportional state, as (start, state).
fn turns(tl: &Timeline, v: NodeId) -> Vec<(Round, MisState)> {
    let Some(line) = tl.line(v) else { return Vec::new() };
    let mut out: Vec<(Round, MisState)> = Vec::new();
    for (r, s) in line.rounds() {
        let Some(q) = tl.mis(s) else { break };
        if q.class() != StateClass::ProportionalActive {
            break;
        }
        if out.last().is_none_or(|&(_, p)| p != q) {
            out.push((r, q));
        }
    }
    out
}

pub fn tournaments_of(tl: &Timeline, v: NodeId) -> Vec<Tournament> {
    let mut out: Vec<Tournament> = Vec::new();
    for (r, q) in turns(tl, v) {
        if q == MisState::D1 {
            out.push(Tournament { start: r, u_turns: 0 });
        } else if q.is_u() {
            if let Some(t) = out.last_mut() {
                t.u_turns += 1;
            }
        }
    }
    out
}

/// Greedy tournaments keyed by the round their participants first reside
/// in U'.
pub fn greedy_tournaments(tl: &Timeline) -> BTreeMap<Round, GreedyTournament> {
    let mut out: BTreeMap<Round, GreedyTournament> = BTreeMap::new();
    for (v, line) in tl.lines() {
        let states: Vec<Option<MisState>> = line.states.iter().map(|&s| tl.mis(s)).collect();
        let mut i = 1;
        while i < states.len() {
            if states[i - 1] == Some(MisState::DPrime) && states[i] == Some(MisState::UPrime) {
                let run = states[i..].iter().take_while(|&&q| q == Some(MisState::UPrime)).count();
                let t = out.entry(line.first + i as Round).or_default();
                t.participants.push(v);
                t.active_length = t.active_length.max(run);
                i += run;
            } else {
                i += 1;
            }
        }
    }
    out
}

/// Round in which `v` moved from a U-state into W, if it won a
/// Proportional tournament.
pub fn winning_round(tl: &Timeline, v: NodeId) -> Option<Round> {
    let line = tl.line(v)?;
    let mut prev: Option<(Round, MisState)> = None;
    for (r, s) in line.rounds() {
        let q = tl.mis(s)?;
        if let Some((pr, pq)) = prev {
            if pq.is_u() && q == MisState::W {
                return Some(pr);
            }
        }
        prev = Some((r, q));
    }
    let (pr, pq) = prev?;
    (pq.is_u() && line.last_after.and_then(|s| tl.mis(s)) == Some(MisState::W)).then_some(pr)
}

/// Round in which `w` moved from a Proportional state into L.
fn lost_round(tl: &Timeline, w: NodeId) -> Option<Round> {
    let line = tl.line(w)?;
    let n = line.states.len();
    for i in 0..n {
        let q = tl.mis(line.states[i])?;
        if q.class() != StateClass::ProportionalActive {
            return None;
        }
        let next = if i + 1 < n { Some(line.states[i + 1]) } else { line.last_after };
        if next.and_then(|s| tl.mis(s)) == Some(MisState::L) {
            return Some(line.first + i as Round);
        }
    }
    None
}

/// Neighbors of `v` at the start of its winning tournament that went from
/// a Proportional state into L while adjacent to `v` in W. A winner does
/// not cover itself.
pub fn quality(tl: &Timeline, v: NodeId) -> usize {
    let Some(won) = winning_round(tl, v) else { return 0 };
    let Some(start) = tournaments_of(tl, v).iter().rev().find(|t| t.start <= won).map(|t| t.start) else {
        return 0;
    };
    tl.seq
        .at(start)
        .neighbors(v)
        .filter(|&w| {
            lost_round(tl, w).is_some_and(|r| {
                r > won && tl.mis_at(v, r) == Some(MisState::W) && tl.seq.at(r + 1).has_edge(v, w)
            })
        })
        .count()
}

/// q(v) for every node of the trace (0 for non-winners).
pub fn quality_all(tl: &Timeline) -> BTreeMap<NodeId, usize> {
    tl.lines().map(|(v, _)| (v, quality(tl, v))).collect()
}
