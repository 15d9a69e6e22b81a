//! Stone Age protocol description: states, alphabet, bounding parameter and
//! a guarded, randomized transition relation.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Index into [`ProtocolSpec::states`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateId(pub u16);

/// Index into [`ProtocolSpec::alphabet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LetterId(pub u16);

/// What a transition transmits. `Silent` is the empty symbol ε: the
/// receivers' ports keep their previous letter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Emission {
    Silent,
    Letter(LetterId),
}

impl Emission {
    pub fn letter(self) -> Option<LetterId> {
        match self {
            Emission::Silent => None,
            Emission::Letter(l) => Some(l),
        }
    }
}

/// Threshold test `min <= counts[letter] <= max` on the bounded count vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Condition {
    pub letter: LetterId,
    pub min: u32,
    pub max: u32,
}

/// Conjunction of conditions; the empty guard always matches.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Guard {
    pub conditions: Vec<Condition>,
}

impl Guard {
    pub fn always() -> Self {
        Guard::default()
    }

    pub fn matches(&self, counts: &CountVector) -> bool {
        self.conditions.iter().all(|c| {
            let x = counts.get(c.letter);
            c.min <= x && x <= c.max
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Outcome {
    pub next: StateId,
    pub emit: Emission,
}

/// One guarded rule. Outcomes are equiprobable.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rule {
    pub from: StateId,
    pub guard: Guard,
    pub outcomes: Vec<Outcome>,
}

/// Bounded count vector: entry σ is `min(#σ in ports, b)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CountVector(pub Vec<u32>);

impl CountVector {
    pub fn zeros(letters: usize) -> Self {
        CountVector(vec![0; letters])
    }

    pub fn get(&self, letter: LetterId) -> u32 {
        self.0.get(letter.0 as usize).copied().unwrap_or(0)
    }

    pub fn set(&mut self, letter: LetterId, value: u32) {
        self.0[letter.0 as usize] = value;
    }

    /// Mixed-radix code with radix `b + 1`, letter 0 least significant.
    pub fn encode(&self, bound: u32) -> usize {
        let radix = bound as usize + 1;
        self.0.iter().rev().fold(0, |acc, &c| acc * radix + (c.min(bound) as usize))
    }

    pub fn decode(mut code: usize, letters: usize, bound: u32) -> Self {
        let radix = bound as usize + 1;
        let mut v = Vec::with_capacity(letters);
        for _ in 0..letters {
            v.push((code % radix) as u32);
            code /= radix;
        }
        CountVector(v)
    }
}

/// A complete protocol Π = ⟨Q, q₀, q_yes, q_no, Σ, σ₀, b, δ⟩. Rules are
/// priority-ordered per source state; the first matching guard wins.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProtocolSpec {
    pub name: String,
    pub states: Vec<String>,
    pub initial: StateId,
    pub yes: StateId,
    pub no: StateId,
    pub alphabet: Vec<String>,
    pub initial_letter: LetterId,
    pub bound: u32,
    pub rules: Vec<Rule>,
}

impl ProtocolSpec {
    pub fn state_name(&self, s: StateId) -> &str {
        self.states.get(s.0 as usize).map_or("?", String::as_str)
    }

    pub fn letter_name(&self, l: LetterId) -> &str {
        self.alphabet.get(l.0 as usize).map_or("?", String::as_str)
    }

    pub fn state_id(&self, name: &str) -> Option<StateId> {
        self.states.iter().position(|s| s == name).map(|i| StateId(i as u16))
    }

    pub fn letter_id(&self, name: &str) -> Option<LetterId> {
        self.alphabet.iter().position(|s| s == name).map(|i| LetterId(i as u16))
    }

    pub fn is_output(&self, s: StateId) -> bool {
        s == self.yes || s == self.no
    }

    pub fn rules_from(&self, s: StateId) -> impl Iterator<Item = (usize, &Rule)> + '_ {
        self.rules.iter().enumerate().filter(move |(_, r)| r.from == s)
    }

    /// Index of the first rule of `state` whose guard matches `counts`.
    pub fn matching_rule(&self, state: StateId, counts: &CountVector) -> Option<usize> {
        self.rules_from(state).find(|(_, r)| r.guard.matches(counts)).map(|(i, _)| i)
    }
}

/// Restriction a [`Violation`] refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ViolationKind {
    Totality,
    Overlap,
    OutputUniqueness,
    OutputSilentSelfLoop,
    OutputDeterminism,
    OutputTarget,
    InitialLetter,
    Bound,
    EmptyOutcomes,
    BadReference,
    GuardRange,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ViolationKind::Totality => "totality",
            ViolationKind::Overlap => "overlap",
            ViolationKind::OutputUniqueness => "output uniqueness",
            ViolationKind::OutputSilentSelfLoop => "output silent self-loop",
            ViolationKind::OutputDeterminism => "output determinism",
            ViolationKind::OutputTarget => "output target",
            ViolationKind::InitialLetter => "initial letter",
            ViolationKind::Bound => "bound",
            ViolationKind::EmptyOutcomes => "empty outcomes",
            ViolationKind::BadReference => "bad reference",
            ViolationKind::GuardRange => "guard range",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub rule: Option<usize>,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.rule {
            Some(i) => write!(f, "{} (rule {i}): {}", self.kind, self.detail),
            None => write!(f, "{}: {}", self.kind, self.detail),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, kind: ViolationKind) -> bool {
        self.violations.iter().any(|v| v.kind == kind)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.passed() {
            return f.write_str("pass");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Largest number of count vectors the validator enumerates per state.
pub const MAX_ENUMERATED_VECTORS: usize = 1 << 22;

pub(crate) fn vector_space(spec: &ProtocolSpec) -> Option<usize> {
    let radix = spec.bound as usize + 1;
    let mut total: usize = 1;
    for _ in 0..spec.alphabet.len() {
        total = total.checked_mul(radix)?;
        if total > MAX_ENUMERATED_VECTORS {
            return None;
        }
    }
    Some(total)
}

/// Checks totality (by enumerating `{0..b}^|Σ|`), dead rules, and the four
/// output-state restrictions. Violations are collected, never thrown.
pub fn validate_protocol(spec: &ProtocolSpec) -> ValidationReport {
    validate_with_table(spec).0
}

/// Validation plus the first-match table `table[state · V + code] = rule`.
pub(crate) fn validate_with_table(spec: &ProtocolSpec) -> (ValidationReport, Option<Vec<u32>>) {
    let mut out = Vec::new();
    let mut push = |kind, rule, detail: String| out.push(Violation { kind, rule, detail });
    let nstates = spec.states.len();
    let nletters = spec.alphabet.len();
    let state_ok = |s: StateId| (s.0 as usize) < nstates;
    let letter_ok = |l: LetterId| (l.0 as usize) < nletters;

    if spec.bound < 1 {
        push(ViolationKind::Bound, None, format!("bounding parameter must be >= 1, got {}", spec.bound));
    }
    if !letter_ok(spec.initial_letter) {
        push(ViolationKind::InitialLetter, None, "initial letter is not in the alphabet".into());
    }
    for (what, s) in [("initial", spec.initial), ("yes", spec.yes), ("no", spec.no)] {
        if !state_ok(s) {
            push(ViolationKind::BadReference, None, format!("{what} state {} out of range", s.0));
        }
    }
    if spec.yes == spec.no {
        push(
            ViolationKind::OutputUniqueness,
            None,
            format!("yes and no share state {}", spec.state_name(spec.yes)),
        );
    }
    let mut structurally_ok = true;
    for (i, rule) in spec.rules.iter().enumerate() {
        if !state_ok(rule.from) {
            push(ViolationKind::BadReference, Some(i), format!("source state {} out of range", rule.from.0));
            structurally_ok = false;
        }
        for c in &rule.guard.conditions {
            if !letter_ok(c.letter) {
                push(ViolationKind::BadReference, Some(i), format!("guard letter {} out of range", c.letter.0));
                structurally_ok = false;
            } else if c.min > c.max {
                push(
                    ViolationKind::GuardRange,
                    Some(i),
                    format!("{}: min {} > max {}", spec.letter_name(c.letter), c.min, c.max),
                );
            }
        }
        if rule.outcomes.is_empty() {
            push(ViolationKind::EmptyOutcomes, Some(i), "outcome set is empty".into());
        }
        for o in &rule.outcomes {
            if !state_ok(o.next) {
                push(ViolationKind::BadReference, Some(i), format!("target state {} out of range", o.next.0));
                structurally_ok = false;
            }
            if let Emission::Letter(l) = o.emit {
                if !letter_ok(l) {
                    push(ViolationKind::BadReference, Some(i), format!("emitted letter {} out of range", l.0));
                    structurally_ok = false;
                }
            }
        }
        if spec.is_output(rule.from) {
            let from = spec.state_name(rule.from).to_string();
            if rule.outcomes.len() > 1 {
                push(
                    ViolationKind::OutputDeterminism,
                    Some(i),
                    format!("output state {from} has {} outcomes", rule.outcomes.len()),
                );
            }
            for o in &rule.outcomes {
                if o.next == rule.from && o.emit != Emission::Silent {
                    push(
                        ViolationKind::OutputSilentSelfLoop,
                        Some(i),
                        format!("self-transition of output state {from} transmits a letter"),
                    );
                }
                if o.next != rule.from && spec.is_output(o.next) {
                    push(
                        ViolationKind::OutputTarget,
                        Some(i),
                        format!("output state {from} moves to output state {}", spec.state_name(o.next)),
                    );
                }
            }
        }
    }

    let mut table = None;
    if structurally_ok && spec.bound >= 1 {
        match vector_space(spec) {
            None => push(
                ViolationKind::Totality,
                None,
                format!("count-vector space exceeds {MAX_ENUMERATED_VECTORS} entries; cannot check totality"),
            ),
            Some(space) => {
                let mut t = vec![u32::MAX; nstates * space];
                let mut used = vec![false; spec.rules.len()];
                for s in 0..nstates {
                    let state = StateId(s as u16);
                    let rules: Vec<(usize, &Rule)> = spec.rules_from(state).collect();
                    let mut missing = None;
                    for code in 0..space {
                        let counts = CountVector::decode(code, nletters, spec.bound);
                        match rules.iter().find(|(_, r)| r.guard.matches(&counts)) {
                            Some(&(i, _)) => {
                                used[i] = true;
                                t[s * space + code] = i as u32;
                            }
                            None => {
                                missing.get_or_insert(counts);
                            }
                        }
                    }
                    if let Some(counts) = missing {
                        push(
                            ViolationKind::Totality,
                            None,
                            format!("state {} has no matching guard for counts {:?}", spec.state_name(state), counts.0),
                        );
                    }
                }
                for (i, u) in used.iter().enumerate() {
                    if !u {
                        push(ViolationKind::Overlap, Some(i), "rule is shadowed by earlier guards and never fires".into());
                    }
                }
                table = Some(t);
            }
        }
    }
    let report = ValidationReport { violations: out };
    let table = if report.passed() { table } else { None };
    (report, table)
}

/// Reference transition selection by linear scan over the rule list.
/// `draw(k)` must return an index in `0..k`; it is only consulted for
/// outcome sets with more than one element.
pub fn select_transition(
    spec: &ProtocolSpec,
    state: StateId,
    counts: &CountVector,
    draw: impl FnOnce(usize) -> usize,
) -> Option<(StateId, Emission)> {
    let rule = &spec.rules[spec.matching_rule(state, counts)?];
    let idx = if rule.outcomes.len() > 1 { draw(rule.outcomes.len()) } else { 0 };
    let o = rule.outcomes.get(idx)?;
    Some((o.next, o.emit))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// X (initial) settles into A (yes) or B (no); alphabet {a, b}.
    fn toy() -> ProtocolSpec {
        let x = StateId(0);
        let a = StateId(1);
        let b = StateId(2);
        let stay = |s| Rule { from: s, guard: Guard::always(), outcomes: vec![Outcome { next: s, emit: Emission::Silent }] };
        ProtocolSpec {
            name: "toy".into(),
            states: vec!["X".into(), "A".into(), "B".into()],
            initial: x,
            yes: a,
            no: b,
            alphabet: vec!["a".into(), "b".into()],
            initial_letter: LetterId(1),
            bound: 1,
            rules: vec![
                Rule {
                    from: x,
                    guard: Guard { conditions: vec![Condition { letter: LetterId(0), min: 1, max: 1 }] },
                    outcomes: vec![Outcome { next: b, emit: Emission::Letter(LetterId(1)) }],
                },
                Rule {
                    from: x,
                    guard: Guard::always(),
                    outcomes: vec![Outcome { next: a, emit: Emission::Letter(LetterId(0)) }],
                },
                stay(a),
                stay(b),
            ],
        }
    }

    #[test]
    fn toy_passes() {
        let r = validate_protocol(&toy());
        assert!(r.passed(), "{r}");
    }

    #[test]
    fn count_vector_codec() {
        for code in 0..27 {
            let v = CountVector::decode(code, 3, 2);
            assert_eq!(v.encode(2), code);
        }
        assert_eq!(CountVector(vec![5, 0, 1]).encode(1), 1 + 4);
    }

    #[test]
    fn two_outcomes_from_yes_state() {
        let mut p = toy();
        p.rules[2].outcomes.push(Outcome { next: StateId(0), emit: Emission::Letter(LetterId(0)) });
        let r = validate_protocol(&p);
        assert!(r.has(ViolationKind::OutputDeterminism), "{r}");
        assert_eq!(r.violations[0].rule, Some(2));
        assert!(r.to_string().contains("output determinism"));
    }

    #[test]
    fn missing_guard_for_zero_vector() {
        let mut p = toy();
        p.rules.remove(1);
        let r = validate_protocol(&p);
        assert!(r.has(ViolationKind::Totality), "{r}");
    }

    #[test]
    fn output_restrictions() {
        let mut p = toy();
        p.rules[2].outcomes[0].emit = Emission::Letter(LetterId(0));
        assert!(validate_protocol(&p).has(ViolationKind::OutputSilentSelfLoop));

        let mut p = toy();
        p.rules[2].outcomes[0].next = StateId(2);
        assert!(validate_protocol(&p).has(ViolationKind::OutputTarget));

        let mut p = toy();
        p.no = p.yes;
        assert!(validate_protocol(&p).has(ViolationKind::OutputUniqueness));
    }

    #[test]
    fn structural_errors() {
        let mut p = toy();
        p.bound = 0;
        assert!(validate_protocol(&p).has(ViolationKind::Bound));

        let mut p = toy();
        p.initial_letter = LetterId(7);
        assert!(validate_protocol(&p).has(ViolationKind::InitialLetter));

        let mut p = toy();
        p.rules[3].outcomes.clear();
        assert!(validate_protocol(&p).has(ViolationKind::EmptyOutcomes));
    }

    #[test]
    fn shadowed_rule_is_overlap() {
        let mut p = toy();
        let dead = p.rules[0].clone();
        p.rules.insert(2, dead);
        let r = validate_protocol(&p);
        assert!(r.has(ViolationKind::Overlap), "{r}");
        assert_eq!(r.violations[0].rule, Some(2));
    }

    #[test]
    fn select_skips_draw_for_singletons() {
        let p = toy();
        let counts = CountVector(vec![1, 0]);
        let got = select_transition(&p, StateId(0), &counts, |_| panic!("no coin for singleton"));
        assert_eq!(got, Some((StateId(2), Emission::Letter(LetterId(1)))));
    }
}
