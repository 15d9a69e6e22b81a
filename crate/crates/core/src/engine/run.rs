use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::protocol::ProtocolSpec;
use super::rng::CoinSource;
use super::round::{prepare_round, step_round, ChangePolicy, RoundRecord};
use super::world::WorldState;
use super::{EngineError, Machine};
use crate::topology::{apply_change_in_place, derive_graph_sequence, log2_ceil, Graph, GraphSeq, Schedule, TopologyError};

/// When a run stops. Rounds are only cut short after the last scheduled
/// change.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StopPolicy {
    /// Consecutive silent rounds that end the run.
    pub silence_window: u64,
    /// Round budget; `None` uses [`default_budget`].
    pub max_rounds: Option<u64>,
    pub changes: ChangePolicy,
}

impl Default for StopPolicy {
    fn default() -> Self {
        StopPolicy { silence_window: 2, max_rounds: None, changes: ChangePolicy::Strict }
    }
}

impl StopPolicy {
    pub fn with_budget(max_rounds: u64) -> Self {
        StopPolicy { max_rounds: Some(max_rounds), ..Self::default() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Silence,
    Budget,
}

/// Last change round plus `50 · (C + 1) · ⌈log₂ n⌉²` rounds, with the log
/// floored at 1 so one-node graphs get a budget too.
pub fn default_budget(g1: &Graph, schedule: &Schedule) -> Result<u64, TopologyError> {
    let seq = derive_graph_sequence(g1, schedule)?;
    Ok(budget_for(&seq, schedule))
}

fn budget_for(seq: &GraphSeq, schedule: &Schedule) -> u64 {
    let lg = u64::from(log2_ceil(seq.n()).max(1));
    schedule.last_round().unwrap_or(0) + 50 * (schedule.len() as u64 + 1) * lg * lg
}

/// A complete execution: enough to rebuild every intermediate world.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trace {
    pub protocol: ProtocolSpec,
    pub seed: Option<u64>,
    pub initial: WorldState,
    /// The schedule the run was driven by.
    pub schedule: Schedule,
    pub records: Vec<RoundRecord>,
    pub termination: Termination,
}

impl Trace {
    pub fn rounds(&self) -> usize {
        self.records.len()
    }

    /// Changes as actually applied (differs from `schedule` only under the
    /// permissive change policy).
    pub fn applied_schedule(&self) -> Schedule {
        let mut s = Schedule::new();
        for rec in &self.records {
            for c in &rec.changes {
                s.push(rec.round, *c).expect("rounds start at 1");
            }
        }
        s
    }

    /// G₁, G₂, … as executed.
    pub fn graph_sequence(&self) -> GraphSeq {
        derive_graph_sequence(&self.initial.graph(), &self.applied_schedule()).expect("applied changes replay")
    }
}

/// The changes of `schedule` that apply when inapplicable ones are skipped.
fn applicable_part(g1: &Graph, schedule: &Schedule) -> Schedule {
    let mut g = g1.clone();
    let mut out = Schedule::new();
    for (r, c) in schedule.iter() {
        if apply_change_in_place(&mut g, c).is_ok() {
            out.push(r, *c).expect("rounds start at 1");
        }
    }
    out
}

/// Runs `machine` from `initial` under `schedule` until `stop` fires.
pub fn run<C: CoinSource + ?Sized>(
    initial: &WorldState,
    schedule: &Schedule,
    machine: &Machine,
    stop: StopPolicy,
    coins: &mut C,
    seed: Option<u64>,
) -> Result<Trace, EngineError> {
    let spec = machine.spec();
    let last = schedule.last_round().unwrap_or(0);
    let budget = match stop.max_rounds {
        Some(b) => b,
        None => {
            let g1 = initial.graph();
            let applied = match stop.changes {
                ChangePolicy::Strict => schedule.clone(),
                ChangePolicy::Permissive => applicable_part(&g1, schedule),
            };
            let seq = derive_graph_sequence(&g1, &applied).map_err(|e| EngineError::Topology { round: 0, source: e })?;
            budget_for(&seq, &applied)
        }
    };
    let mut world = initial.clone();
    let mut records = Vec::new();
    let mut streak = 0u64;
    let termination = loop {
        let done_changing = world.round() > last;
        if done_changing && (world.is_empty() || streak >= stop.silence_window) {
            break Termination::Silence;
        }
        if records.len() as u64 >= budget {
            break Termination::Budget;
        }
        let correct = world.is_correct_output(spec);
        let round = world.round();
        let rec = step_round(&mut world, schedule.changes_at(round), machine, coins, stop.changes)?;
        streak = if correct && rec.changes.is_empty() { streak + 1 } else { 0 };
        records.push(rec);
    };
    log::debug!("run ended after {} rounds: {termination:?}", records.len());
    Ok(Trace {
        protocol: spec.clone(),
        seed,
        initial: initial.clone(),
        schedule: schedule.clone(),
        records,
        termination,
    })
}

/// Rebuilds the execution from the records alone. `visit` sees the world
/// at the beginning of each round (before delivery) with that round's
/// record. Returns the world after the last round.
pub fn replay(trace: &Trace, mut visit: impl FnMut(&WorldState, &RoundRecord)) -> Result<WorldState, EngineError> {
    replay_inner(trace, &mut visit, &mut |_, _| ())
}

/// Like [`replay`], but `visit` sees each round after delivery and topology
/// changes, right before the transitions.
pub fn replay_mid(trace: &Trace, mut visit: impl FnMut(&WorldState, &RoundRecord)) -> Result<WorldState, EngineError> {
    replay_inner(trace, &mut |_, _| (), &mut visit)
}

fn replay_inner(
    trace: &Trace,
    start: &mut dyn FnMut(&WorldState, &RoundRecord),
    mid: &mut dyn FnMut(&WorldState, &RoundRecord),
) -> Result<WorldState, EngineError> {
    let mut world = trace.initial.clone();
    for rec in &trace.records {
        let diverged = |detail: String| EngineError::Replay { round: rec.round, detail };
        if world.round() != rec.round {
            return Err(diverged(format!("expected round {}", world.round())));
        }
        start(&world, rec);
        prepare_round(&mut world, &rec.changes, ChangePolicy::Strict)?;
        mid(&world, rec);
        let mut live = 0;
        let mut pending = BTreeMap::new();
        for step in rec.steps.iter().filter(|s| !s.deleted()) {
            live += 1;
            let cur = world.state(step.node).ok_or_else(|| diverged(format!("node {} missing", step.node)))?;
            if cur != step.before {
                return Err(diverged(format!("node {} is in state {} not {}", step.node, cur.0, step.before.0)));
            }
            world.set_state(step.node, step.after.expect("live step"))?;
            if let Some(l) = step.emission {
                pending.insert(step.node, l);
            }
        }
        if live != world.node_count() {
            return Err(diverged(format!("{live} steps for {} nodes", world.node_count())));
        }
        world.replace_pending(pending);
        world.set_round(rec.round + 1);
    }
    Ok(world)
}
