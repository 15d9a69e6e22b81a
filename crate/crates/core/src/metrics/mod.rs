//! Quantities computed from a finished trace: silent rounds, global and
//! local runtimes, tournaments, quality, released nodes and confinement.

mod timeline;
mod tournaments;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub(crate) use timeline::mis_map;
pub use timeline::{NodeLine, Timeline};
pub use tournaments::{greedy_tournaments, quality, quality_all, tournaments_of, winning_round, GreedyTournament, Tournament};

use crate::engine::{ProtocolSpec, StateId, Termination, Trace, WorldState};
use crate::mis::MisState;
use crate::topology::{change_count_within_all, sequence_affected, Graph, NodeId, Round, TopologyChange};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("configuration is not an output configuration")]
    NotOutput,
    #[error("node {0} does not appear in the trace")]
    UnknownNode(NodeId),
}

pub fn is_output_configuration(world: &WorldState, spec: &ProtocolSpec) -> bool {
    world.is_output_configuration(spec)
}

/// Yes-nodes independent and every no-node next to a yes-node.
pub fn is_correct_output(world: &WorldState, spec: &ProtocolSpec) -> Result<bool, MetricsError> {
    if !world.is_output_configuration(spec) {
        return Err(MetricsError::NotOutput);
    }
    Ok(world.is_correct_output(spec))
}

/// Correct output configuration on `graph` with states given by `state`.
pub(crate) fn correct_on(graph: &Graph, spec: &ProtocolSpec, state: impl Fn(NodeId) -> Option<StateId>) -> bool {
    let states: Option<Vec<(NodeId, StateId)>> = graph.nodes().map(|v| state(v).map(|s| (v, s))).collect();
    let Some(states) = states else { return false };
    if states.iter().any(|&(_, s)| !spec.is_output(s)) {
        return false;
    }
    states.iter().all(|&(v, s)| {
        let yes_nb = graph.neighbors(v).any(|w| state(w) == Some(spec.yes));
        if s == spec.yes {
            !yes_nb
        } else {
            yes_nb
        }
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundClasses {
    /// Entry `r - 1` is round `r`.
    pub silent: Vec<bool>,
    pub global_runtime: usize,
}

/// A round is silent when it resides in a correct output configuration and
/// applies no change.
pub fn classify_rounds(trace: &Trace) -> RoundClasses {
    let seq = trace.graph_sequence();
    let spec = &trace.protocol;
    let silent: Vec<bool> = trace
        .records
        .iter()
        .map(|rec| {
            rec.changes.is_empty()
                && rec.steps.iter().all(|s| spec.is_output(s.before))
                && correct_on(seq.at(rec.round), spec, |v| rec.step(v).map(|s| s.before))
        })
        .collect();
    let global_runtime = silent.iter().filter(|s| !**s).count();
    RoundClasses { silent, global_runtime }
}

pub fn global_runtime(trace: &Trace) -> usize {
    classify_rounds(trace).global_runtime
}

/// Rounds in which `v` resides in a non-output state.
pub fn local_runtime(trace: &Trace, v: NodeId) -> Result<usize, MetricsError> {
    let mut seen = trace.initial.contains(v);
    let mut n = 0;
    for rec in &trace.records {
        if let Some(s) = rec.step(v) {
            seen = true;
            if !trace.protocol.is_output(s.before) {
                n += 1;
            }
        }
    }
    if seen {
        Ok(n)
    } else {
        Err(MetricsError::UnknownNode(v))
    }
}

pub fn local_runtimes(trace: &Trace) -> BTreeMap<NodeId, usize> {
    let mut out: BTreeMap<NodeId, usize> = trace.initial.node_ids().map(|v| (v, 0)).collect();
    for rec in &trace.records {
        for s in &rec.steps {
            let e = out.entry(s.node).or_insert(0);
            if !trace.protocol.is_output(s.before) {
                *e += 1;
            }
        }
    }
    out
}

/// The released set: L-nodes at the first round without a W-neighbor, and
/// W-nodes that gain an inserted incident edge. States are the ones resided
/// in during the round, adjacency is after that round's changes.
pub fn released(trace: &Trace) -> BTreeSet<NodeId> {
    let tl = Timeline::new(trace);
    released_in(trace, &tl)
}

fn released_in(trace: &Trace, tl: &Timeline) -> BTreeSet<NodeId> {
    let mut h = BTreeSet::new();
    for rec in &trace.records {
        let mis = |v: NodeId| rec.step(v).and_then(|s| tl.mis(s.before));
        for c in &rec.changes {
            if let TopologyChange::EdgeInsert { u, v } = *c {
                for x in [u, v] {
                    if mis(x) == Some(MisState::W) {
                        h.insert(x);
                    }
                }
            }
        }
        let after = tl.seq.at(rec.round + 1);
        for s in rec.steps.iter().filter(|s| !s.deleted()) {
            if h.contains(&s.node) || tl.mis(s.before) != Some(MisState::L) {
                continue;
            }
            if !after.neighbors(s.node).any(|w| mis(w) == Some(MisState::W)) {
                h.insert(s.node);
            }
        }
    }
    h
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfinementReport {
    /// Largest local runtime over non-affected nodes (0 when all are
    /// affected).
    pub non_affected_max: usize,
    pub global_runtime: usize,
    /// `global_runtime / (C + 1)`.
    pub per_change: f64,
    /// (node, C_u, local runtime).
    pub pairs: Vec<(NodeId, usize, usize)>,
}

pub fn confinement_report(trace: &Trace) -> ConfinementReport {
    let seq = trace.graph_sequence();
    let schedule = trace.applied_schedule();
    let affected = sequence_affected(&seq, &schedule);
    let local = local_runtimes(trace);
    let cu = change_count_within_all(&seq, &schedule);
    let global = global_runtime(trace);
    ConfinementReport {
        non_affected_max: local
            .iter()
            .filter(|(v, _)| !affected.contains(v))
            .map(|(_, &t)| t)
            .max()
            .unwrap_or(0),
        global_runtime: global,
        per_change: global as f64 / (schedule.len() + 1) as f64,
        pairs: local.iter().map(|(&v, &t)| (v, cu.get(&v).copied().unwrap_or(0), t)).collect(),
    }
}

/// Everything derived from one trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub protocol: String,
    pub seed: Option<u64>,
    pub rounds: usize,
    pub termination: Termination,
    pub global_runtime: usize,
    pub silent_mask: Vec<bool>,
    pub local_runtime: BTreeMap<NodeId, usize>,
    pub tournaments: BTreeMap<NodeId, Vec<Tournament>>,
    pub greedy_tournaments: BTreeMap<Round, GreedyTournament>,
    pub quality: BTreeMap<NodeId, usize>,
    pub released: BTreeSet<NodeId>,
    pub affected: BTreeSet<NodeId>,
    pub changes: usize,
    pub local_changes: BTreeMap<NodeId, usize>,
    pub non_affected_max: usize,
    /// Final yes-nodes (empty unless the run ended in an output
    /// configuration).
    pub mis: BTreeSet<NodeId>,
}

impl RunReport {
    pub fn from_trace(trace: &Trace) -> Self {
        let tl = Timeline::new(trace);
        let schedule = trace.applied_schedule();
        let classes = classify_rounds(trace);
        let affected = sequence_affected(&tl.seq, &schedule);
        let local_runtime = local_runtimes(trace);
        let non_affected_max = local_runtime
            .iter()
            .filter(|(v, _)| !affected.contains(v))
            .map(|(_, &t)| t)
            .max()
            .unwrap_or(0);
        let spec = &trace.protocol;
        let finals: Vec<(NodeId, StateId)> =
            tl.lines().filter_map(|(v, l)| l.last_after.map(|s| (v, s))).collect();
        let mis = if finals.iter().all(|&(_, s)| spec.is_output(s)) {
            finals.iter().filter(|&&(_, s)| s == spec.yes).map(|&(v, _)| v).collect()
        } else {
            BTreeSet::new()
        };
        RunReport {
            protocol: spec.name.clone(),
            seed: trace.seed,
            rounds: trace.records.len(),
            termination: trace.termination,
            global_runtime: classes.global_runtime,
            silent_mask: classes.silent,
            tournaments: tl.lines().map(|(v, _)| (v, tournaments_of(&tl, v))).collect(),
            greedy_tournaments: greedy_tournaments(&tl),
            quality: quality_all(&tl),
            released: released_in(trace, &tl),
            local_changes: change_count_within_all(&tl.seq, &schedule),
            changes: schedule.len(),
            affected,
            local_runtime,
            non_affected_max,
            mis,
        }
    }
}
