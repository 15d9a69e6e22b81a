//! The dynamic MIS protocol: a Proportional component (S, D1, D2, U0–U2, W,
//! L) run by nodes from the start, and a Greedy component (D', U') that
//! nodes fall into when a topology change reaches them. Bounding parameter
//! 1; the alphabet is the state set and every state change transmits the
//! destination state.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::engine::{Condition, Emission, Guard, LetterId, Outcome, ProtocolSpec, Rule, StateId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MisState {
    S,
    D1,
    D2,
    U0,
    U1,
    U2,
    W,
    L,
    DPrime,
    UPrime,
}

impl MisState {
    pub const ALL: [MisState; 10] = [
        MisState::S,
        MisState::D1,
        MisState::D2,
        MisState::U0,
        MisState::U1,
        MisState::U2,
        MisState::W,
        MisState::L,
        MisState::DPrime,
        MisState::UPrime,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MisState::S => "S",
            MisState::D1 => "D1",
            MisState::D2 => "D2",
            MisState::U0 => "U0",
            MisState::U1 => "U1",
            MisState::U2 => "U2",
            MisState::W => "W",
            MisState::L => "L",
            MisState::DPrime => "D'",
            MisState::UPrime => "U'",
        }
    }

    /// Position in the spec built by [`build`]; states and letters share it.
    pub fn id(self) -> StateId {
        StateId(self as u16)
    }

    pub fn letter(self) -> LetterId {
        LetterId(self as u16)
    }

    pub fn from_id(s: StateId) -> Option<MisState> {
        MisState::ALL.get(s.0 as usize).copied()
    }

    pub fn is_u(self) -> bool {
        matches!(self, MisState::U0 | MisState::U1 | MisState::U2)
    }

    pub fn class(self) -> StateClass {
        state_class(self)
    }
}

impl fmt::Display for MisState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateClass {
    ProportionalActive,
    GreedyActive,
    OutputYes,
    OutputNo,
}

pub fn state_class(q: MisState) -> StateClass {
    use MisState::*;
    match q {
        S | D1 | D2 | U0 | U1 | U2 => StateClass::ProportionalActive,
        DPrime | UPrime => StateClass::GreedyActive,
        W => StateClass::OutputYes,
        L => StateClass::OutputNo,
    }
}

/// Class of a raw state id of the built spec.
pub fn class_of(s: StateId) -> Option<StateClass> {
    MisState::from_id(s).map(state_class)
}

struct Rules(Vec<Rule>);

impl Rules {
    fn add(&mut self, from: MisState, guard: &[(MisState, bool)], to: &[MisState]) {
        let conditions = guard
            .iter()
            .map(|&(l, present)| Condition { letter: l.letter(), min: u32::from(present), max: u32::from(present) })
            .collect();
        let outcomes = to
            .iter()
            .map(|&q| Outcome {
                next: q.id(),
                emit: if q == from { Emission::Silent } else { Emission::Letter(q.letter()) },
            })
            .collect();
        self.0.push(Rule { from: from.id(), guard: Guard { conditions }, outcomes });
    }
}

/// The MIS protocol as a [`ProtocolSpec`].
pub fn build() -> ProtocolSpec {
    use MisState::*;
    let yes = |q| (q, true);
    let no = |q| (q, false);
    let mut r = Rules(Vec::new());

    r.add(S, &[], &[D1]);

    r.add(D1, &[yes(S)], &[DPrime]);
    r.add(D1, &[yes(W)], &[L]);
    r.add(D1, &[yes(D2)], &[D1]);
    r.add(D1, &[], &[U0]);

    // U_j is delayed by its predecessors: D1 and U2 for U0, U_{j-1} otherwise.
    for (u, delays, next) in [(U0, &[D1, U2][..], U1), (U1, &[U0][..], U2), (U2, &[U1][..], U0)] {
        r.add(u, &[yes(S)], &[DPrime]);
        r.add(u, &[yes(W)], &[L]);
        for &d in delays {
            r.add(u, &[yes(d)], &[u]);
        }
        r.add(u, &[no(U0), no(U1), no(U2), no(UPrime)], &[W]);
        r.add(u, &[], &[next, D2]);
    }

    r.add(D2, &[yes(S)], &[DPrime]);
    for u in [U0, U1, U2] {
        r.add(D2, &[yes(u)], &[D2]);
    }
    r.add(D2, &[yes(W)], &[L]);
    r.add(D2, &[], &[D1]);

    r.add(DPrime, &[yes(W)], &[L]);
    for a in [D1, D2, U0, U1, U2] {
        r.add(DPrime, &[yes(a)], &[DPrime]);
    }
    r.add(DPrime, &[yes(UPrime)], &[DPrime]);
    r.add(DPrime, &[], &[UPrime]);

    r.add(UPrime, &[yes(S)], &[DPrime]);
    r.add(UPrime, &[yes(W)], &[L]);
    r.add(UPrime, &[no(UPrime), no(U0), no(U1), no(U2), no(D1), no(D2)], &[W]);
    r.add(UPrime, &[], &[UPrime, DPrime]);

    r.add(W, &[yes(S)], &[DPrime]);
    r.add(W, &[yes(W)], &[DPrime]);
    r.add(W, &[], &[W]);

    r.add(L, &[no(W)], &[DPrime]);
    // An inserted edge leaves S in the other endpoint's port until this
    // node transmits; pass through D' so it does.
    r.add(L, &[yes(S)], &[DPrime]);
    r.add(L, &[], &[L]);

    let names: Vec<String> = MisState::ALL.iter().map(|q| q.name().to_string()).collect();
    ProtocolSpec {
        name: "mis".into(),
        states: names.clone(),
        initial: S.id(),
        yes: W.id(),
        no: L.id(),
        alphabet: names,
        initial_letter: S.letter(),
        bound: 1,
        rules: r.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{select_transition, validate_protocol, CountVector};

    fn counts(letters: &[MisState]) -> CountVector {
        let mut c = CountVector::zeros(10);
        for l in letters {
            c.set(l.letter(), 1);
        }
        c
    }

    fn next(spec: &ProtocolSpec, q: MisState, seen: &[MisState], coin: usize) -> (MisState, Emission) {
        let (s, e) = select_transition(spec, q.id(), &counts(seen), |_| coin).unwrap();
        (MisState::from_id(s).unwrap(), e)
    }

    #[test]
    fn validates() {
        let spec = build();
        let r = validate_protocol(&spec);
        assert!(r.passed(), "{r}");
        assert_eq!((spec.states.len(), spec.alphabet.len(), spec.bound), (10, 10, 1));
        assert_eq!(spec.letter_name(spec.initial_letter), "S");
    }

    #[test]
    fn only_two_coins() {
        let spec = build();
        let coins: Vec<(&str, usize)> = spec
            .rules
            .iter()
            .filter(|r| r.outcomes.len() > 1)
            .map(|r| (spec.state_name(r.from), r.outcomes.len()))
            .collect();
        assert_eq!(coins, vec![("U0", 2), ("U1", 2), ("U2", 2), ("U'", 2)]);
        for q in [MisState::W, MisState::L] {
            assert!(spec.rules_from(q.id()).all(|(_, r)| r.outcomes.len() == 1));
        }
    }

    #[test]
    fn table_examples() {
        use MisState::*;
        let spec = build();
        assert_eq!(next(&spec, U0, &[], 0), (W, Emission::Letter(W.letter())));
        assert_eq!(next(&spec, U0, &[U1], 0), (U1, Emission::Letter(U1.letter())));
        assert_eq!(next(&spec, U0, &[U1], 1), (D2, Emission::Letter(D2.letter())));
        assert_eq!(next(&spec, L, &[], 0), (DPrime, Emission::Letter(DPrime.letter())));
        assert_eq!(next(&spec, W, &[W], 0), (DPrime, Emission::Letter(DPrime.letter())));
        assert_eq!(next(&spec, W, &[L], 0), (W, Emission::Silent));
        assert_eq!(next(&spec, L, &[W, L], 0), (L, Emission::Silent));
        assert_eq!(next(&spec, L, &[W, S], 0).0, DPrime);
        // delays
        assert_eq!(next(&spec, U0, &[D1, U1], 0), (U0, Emission::Silent));
        assert_eq!(next(&spec, U1, &[U0], 0), (U1, Emission::Silent));
        assert_eq!(next(&spec, D1, &[D2], 0), (D1, Emission::Silent));
        assert_eq!(next(&spec, D2, &[U2], 0), (D2, Emission::Silent));
        assert_eq!(next(&spec, D2, &[L], 0).0, D1);
        // exclusion beats delay
        assert_eq!(next(&spec, U1, &[U0, S], 0).0, DPrime);
        // greedy
        assert_eq!(next(&spec, DPrime, &[S], 0).0, UPrime);
        assert_eq!(next(&spec, DPrime, &[DPrime, L], 0).0, UPrime);
        assert_eq!(next(&spec, DPrime, &[U0], 0), (DPrime, Emission::Silent));
        assert_eq!(next(&spec, UPrime, &[L], 0).0, W);
        assert_eq!(next(&spec, UPrime, &[UPrime], 0), (UPrime, Emission::Silent));
        assert_eq!(next(&spec, UPrime, &[UPrime], 1).0, DPrime);
    }

    #[test]
    fn classes() {
        assert_eq!(state_class(MisState::U1), StateClass::ProportionalActive);
        assert_eq!(state_class(MisState::DPrime), StateClass::GreedyActive);
        assert_eq!(state_class(MisState::W), StateClass::OutputYes);
        assert_eq!(state_class(MisState::L), StateClass::OutputNo);
        assert_eq!(class_of(StateId(42)), None);
    }

    #[test]
    fn emissions_follow_state_changes() {
        let spec = build();
        for rule in &spec.rules {
            for o in &rule.outcomes {
                let want = if o.next == rule.from { Emission::Silent } else { Emission::Letter(LetterId(o.next.0)) };
                assert_eq!(o.emit, want);
            }
        }
    }
}
