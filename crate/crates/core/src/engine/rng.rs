//! Randomness for transition selection.
//!
//! Every draw is keyed by `(node, round)`, so one node's outcomes never
//! depend on how many draws other nodes made, on iteration order, or on
//! nodes being inserted or deleted elsewhere.

use std::collections::{BTreeMap, VecDeque};

use crate::topology::{NodeId, Round};

/// Source of uniform outcome indices for randomized transitions.
pub trait CoinSource {
    /// Index in `0..arity`; only called with `arity >= 2`.
    fn draw(&mut self, node: NodeId, round: Round, arity: usize) -> usize;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based source: the outcome is a pure function of
/// `(seed, node, round, arity)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SeededCoins {
    seed: u64,
}

impl SeededCoins {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Raw 64-bit word of the per-node stream at `round`.
    pub fn word(&self, node: NodeId, round: Round) -> u64 {
        let stream = splitmix64(self.seed ^ splitmix64(u64::from(node.0) ^ 0xA076_1D64_78BD_642F));
        splitmix64(stream ^ round.wrapping_mul(0xE703_7ED1_A0B4_28DB))
    }
}

impl CoinSource for SeededCoins {
    fn draw(&mut self, node: NodeId, round: Round, arity: usize) -> usize {
        ((u128::from(self.word(node, round)) * arity as u128) >> 64) as usize
    }
}

/// Per-node scripted outcomes, consumed in order; falls back to a seeded
/// source once a node's script runs out.
#[derive(Clone, Debug, Default)]
pub struct ScriptedCoins {
    script: BTreeMap<NodeId, VecDeque<usize>>,
    fallback: Option<SeededCoins>,
}

impl ScriptedCoins {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn node(mut self, node: impl Into<NodeId>, outcomes: &[usize]) -> Self {
        self.script.entry(node.into()).or_default().extend(outcomes.iter().copied());
        self
    }

    pub fn with_fallback(mut self, seed: u64) -> Self {
        self.fallback = Some(SeededCoins::new(seed));
        self
    }
}

impl CoinSource for ScriptedCoins {
    fn draw(&mut self, node: NodeId, round: Round, arity: usize) -> usize {
        if let Some(x) = self.script.get_mut(&node).and_then(VecDeque::pop_front) {
            assert!(x < arity, "scripted outcome {x} for node {node} exceeds arity {arity}");
            return x;
        }
        match &mut self.fallback {
            Some(f) => f.draw(node, round, arity),
            None => panic!("coin script for node {node} exhausted at round {round}"),
        }
    }
}

/// One fixed outcome per node for a single round (used by exhaustive
/// enumeration).
#[derive(Clone, Debug, Default)]
pub struct FixedChoices(pub BTreeMap<NodeId, usize>);

impl CoinSource for FixedChoices {
    fn draw(&mut self, node: NodeId, round: Round, arity: usize) -> usize {
        let x = *self
            .0
            .get(&node)
            .unwrap_or_else(|| panic!("no fixed outcome for node {node} in round {round}"));
        debug_assert!(x < arity);
        x
    }
}
