//! The Stone Age machine: protocol representation, bounded observation,
//! randomized transition selection and the synchronous round loop under
//! topology changes.

mod protocol;
mod rng;
mod round;
mod run;
mod world;

use thiserror::Error;

pub use protocol::{
    select_transition, validate_protocol, Condition, CountVector, Emission, Guard, LetterId, Outcome,
    ProtocolSpec, Rule, StateId, ValidationReport, Violation, ViolationKind, MAX_ENUMERATED_VECTORS,
};
pub use rng::{CoinSource, FixedChoices, ScriptedCoins, SeededCoins};
pub use round::{choice_points, finish_round, prepare_round, step_round, ChangePolicy, NodeStep, Prepared, RoundRecord};
pub use run::{default_budget, replay, replay_mid, run, StopPolicy, Termination, Trace};
pub use world::{observe, NodeRuntime, Port, WorldState, MAX_NODE_ID};

use crate::topology::{NodeId, Round, TopologyError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("invalid protocol: {0}")]
    InvalidProtocol(ValidationReport),
    #[error("round {round}: no matching guard for node {node} in state {state}")]
    NoMatchingGuard { round: Round, node: NodeId, state: String },
    #[error("round {round}: {source}")]
    Topology {
        round: Round,
        #[source]
        source: TopologyError,
    },
    #[error("node {0} does not exist")]
    UnknownNode(NodeId),
    #[error("replay diverged at round {round}: {detail}")]
    Replay { round: Round, detail: String },
}

/// A validated protocol with its compiled first-match table.
#[derive(Clone, Debug)]
pub struct Machine {
    spec: ProtocolSpec,
    table: Vec<u32>,
    space: usize,
}

impl Machine {
    pub fn new(spec: ProtocolSpec) -> Result<Self, EngineError> {
        let (report, table) = protocol::validate_with_table(&spec);
        let table = table.ok_or(EngineError::InvalidProtocol(report))?;
        let space = table.len() / spec.states.len().max(1);
        Ok(Machine { spec, table, space })
    }

    pub fn spec(&self) -> &ProtocolSpec {
        &self.spec
    }

    /// The rule that fires for `state` under the count vector with `code`.
    #[inline]
    pub fn rule(&self, state: StateId, code: usize) -> &Rule {
        &self.spec.rules[self.table[state.0 as usize * self.space + code] as usize]
    }

    pub fn rule_for(&self, state: StateId, counts: &CountVector) -> &Rule {
        self.rule(state, counts.encode(self.spec.bound))
    }
}
