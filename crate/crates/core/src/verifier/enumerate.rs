use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::ops::Add;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::invariants::RoundView;
use crate::engine::{
    choice_points, finish_round, prepare_round, ChangePolicy, EngineError, FixedChoices, Machine, StateId, WorldState,
};
use crate::metrics::mis_map;
use crate::mis;
use crate::topology::{Graph, NodeId, Round, Schedule};

/// Exact probability `num / 2^exp`, kept normalized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dyadic {
    num: u128,
    exp: u32,
}

const MAX_EXP: u32 = 120;

impl Dyadic {
    pub const ZERO: Dyadic = Dyadic { num: 0, exp: 0 };
    pub const ONE: Dyadic = Dyadic { num: 1, exp: 0 };

    pub fn new(num: u128, exp: u32) -> Self {
        assert!(exp <= MAX_EXP, "dyadic exponent {exp} too large");
        let mut d = Dyadic { num, exp };
        if d.num == 0 {
            d.exp = 0;
        }
        while d.exp > 0 && d.num % 2 == 0 {
            d.num /= 2;
            d.exp -= 1;
        }
        d
    }

    pub fn num(&self) -> u128 {
        self.num
    }

    pub fn exp(&self) -> u32 {
        self.exp
    }

    /// `self / 2^k`.
    pub fn halve(self, k: u32) -> Self {
        Dyadic::new(self.num, self.exp + k)
    }

    pub fn to_f64(self) -> f64 {
        self.num as f64 / 2f64.powi(self.exp as i32)
    }

    fn aligned(self, other: Dyadic) -> (u128, u128, u32) {
        let e = self.exp.max(other.exp);
        (self.num << (e - self.exp), other.num << (e - other.exp), e)
    }
}

impl Add for Dyadic {
    type Output = Dyadic;

    fn add(self, rhs: Dyadic) -> Dyadic {
        let (a, b, e) = self.aligned(rhs);
        Dyadic::new(a + b, e)
    }
}

impl PartialOrd for Dyadic {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Dyadic {
    fn cmp(&self, other: &Self) -> Ordering {
        let (a, b, _) = self.aligned(*other);
        a.cmp(&b)
    }
}

impl fmt::Display for Dyadic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.exp == 0 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/2^{}", self.num, self.exp)
        }
    }
}

impl std::iter::Sum for Dyadic {
    fn sum<I: Iterator<Item = Dyadic>>(iter: I) -> Dyadic {
        iter.fold(Dyadic::ZERO, Add::add)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EnumerationError {
    #[error("state space budget exceeded: {worlds} distinct worlds in round {round} (limit {limit})")]
    Budget { round: Round, worlds: usize, limit: usize },
    #[error("round {round}: {branches} coin combinations exceed the branch limit")]
    Branches { round: Round, branches: u32 },
    #[error("outcome set of size {0} has no exact dyadic split")]
    NonDyadic(usize),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EnumerationLimits {
    /// Distinct worlds kept per round.
    pub max_worlds: usize,
    /// Coin tosses resolved jointly in one round.
    pub max_tosses: u32,
}

impl Default for EnumerationLimits {
    fn default() -> Self {
        EnumerationLimits { max_worlds: 1 << 20, max_tosses: 16 }
    }
}

/// A class of branches that reached the same correct output configuration.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Terminal {
    /// State name per node.
    pub config: Vec<(NodeId, String)>,
    pub probability: Dyadic,
    /// Earliest round whose configuration it is.
    pub first_round: Round,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnumerationReport {
    pub horizon: Round,
    /// Sorted by configuration.
    pub terminals: Vec<Terminal>,
    /// Mass of branches still running after the horizon.
    pub running: Dyadic,
    /// Invariant violations as (round, description); empty on success.
    pub violations: Vec<(Round, String)>,
    pub max_frontier: usize,
}

impl EnumerationReport {
    pub fn terminal_mass(&self) -> Dyadic {
        self.terminals.iter().map(|t| t.probability).sum()
    }

    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn probability_of(&self, config: &[(u32, &str)]) -> Dyadic {
        self.terminals
            .iter()
            .find(|t| t.config.len() == config.len() && t.config.iter().zip(config).all(|(a, b)| a.0 .0 == b.0 && a.1 == b.1))
            .map_or(Dyadic::ZERO, |t| t.probability)
    }
}

/// Explores every coin outcome of the MIS protocol on `g1` under
/// `schedule` for `horizon` rounds. A branch ends once it resides in a
/// correct output configuration after the last change.
pub fn enumerate_small(g1: &Graph, schedule: &Schedule, horizon: Round) -> Result<EnumerationReport, EnumerationError> {
    let machine = Machine::new(mis::build())?;
    let world = WorldState::new(g1, machine.spec())?;
    enumerate_with(&machine, &world, schedule, horizon, EnumerationLimits::default())
}

pub fn enumerate_with(
    machine: &Machine,
    initial: &WorldState,
    schedule: &Schedule,
    horizon: Round,
    limits: EnumerationLimits,
) -> Result<EnumerationReport, EnumerationError> {
    let spec = machine.spec();
    let names = mis_map(spec);
    let mis = |s: StateId| names.get(s.0 as usize).copied().flatten();
    let last = schedule.last_round().unwrap_or(0);
    let check_defensive = schedule.is_empty();

    let mut frontier: HashMap<WorldState, Dyadic> = HashMap::from([(initial.clone(), Dyadic::ONE)]);
    let mut terminals: BTreeMap<Vec<(NodeId, String)>, (Dyadic, Round)> = BTreeMap::new();
    let mut violations: Vec<(Round, String)> = Vec::new();
    let mut max_frontier = 1;
    let start = initial.round();

    for round in start..=start + horizon {
        let mut live: Vec<(WorldState, Dyadic)> = Vec::with_capacity(frontier.len());
        for (w, p) in frontier.drain() {
            if round > last && w.is_correct_output(spec) {
                let config = w.nodes().map(|n| (n.id, spec.state_name(n.state).to_string())).collect();
                let e = terminals.entry(config).or_insert((Dyadic::ZERO, round));
                e.0 = e.0 + p;
                e.1 = e.1.min(round);
            } else {
                live.push((w, p));
            }
        }
        if round == start + horizon {
            frontier.extend(live);
            break;
        }
        // deterministic exploration order
        live.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| state_key(&a.0).cmp(&state_key(&b.0))));
        let changes = schedule.changes_at(round);
        let mut next: HashMap<WorldState, Dyadic> = HashMap::new();
        for (w, p) in live {
            let mut mid = w;
            let prepared = prepare_round(&mut mid, changes, ChangePolicy::Strict)?;
            let points = choice_points(&mid, machine);
            let mut bits = 0u32;
            for &(_, k) in &points {
                if !k.is_power_of_two() {
                    return Err(EnumerationError::NonDyadic(k));
                }
                bits += k.trailing_zeros();
            }
            if bits > limits.max_tosses {
                return Err(EnumerationError::Branches { round, branches: bits });
            }
            let weight = p.halve(bits);
            let neighbors = |v: NodeId| mid.node(v).map(|n| n.neighbors().collect()).unwrap_or_default();
            let view = RoundView { mis: &mis, neighbors: &neighbors };
            for combo in 0..(1u64 << bits) {
                let mut rest = combo;
                let mut fixed = FixedChoices::default();
                for &(v, k) in &points {
                    fixed.0.insert(v, (rest % k as u64) as usize);
                    rest /= k as u64;
                }
                let mut after = mid.clone();
                let rec = finish_round(&mut after, prepared.clone(), machine, &mut fixed);
                if violations.len() < 16 {
                    let found = [
                        view.w_entry(&rec),
                        view.separation(&rec),
                        view.one_way(&rec),
                        if check_defensive { view.defensive(&rec) } else { None },
                    ];
                    violations.extend(found.into_iter().flatten().map(|d| (round, d)));
                }
                let e = next.entry(after).or_insert(Dyadic::ZERO);
                *e = *e + weight;
            }
        }
        if next.len() > limits.max_worlds {
            return Err(EnumerationError::Budget { round, worlds: next.len(), limit: limits.max_worlds });
        }
        max_frontier = max_frontier.max(next.len());
        frontier = next;
    }
    violations.sort();
    violations.dedup();
    Ok(EnumerationReport {
        horizon,
        terminals: terminals
            .into_iter()
            .map(|(config, (probability, first_round))| Terminal { config, probability, first_round })
            .collect(),
        running: frontier.values().copied().sum(),
        violations,
        max_frontier,
    })
}

fn state_key(w: &WorldState) -> Vec<(u32, u16)> {
    w.nodes().map(|n| (n.id.0, n.state.0)).collect()
}
