use serde::{Deserialize, Serialize};

use super::IoError;
use crate::engine::{Condition, Emission, Guard, LetterId, Outcome, ProtocolSpec, Rule, StateId};

pub const PROTOCOL_FORMAT: &str = "stoneage-protocol/1";

/// Protocol file contents. States and letters are referred to by name;
/// a `null` emission is ε.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolFile {
    pub format: String,
    pub name: String,
    pub states: Vec<String>,
    pub initial: String,
    pub yes: String,
    pub no: String,
    pub alphabet: Vec<String>,
    pub initial_letter: String,
    pub bound: u32,
    pub rules: Vec<RuleFile>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleFile {
    pub from: String,
    /// `(letter, min, max)` conditions.
    pub guard: Vec<(String, u32, u32)>,
    /// `(to, emit)` pairs.
    pub outcomes: Vec<(String, Option<String>)>,
}

impl ProtocolFile {
    pub fn from_spec(spec: &ProtocolSpec) -> Self {
        let st = |s: StateId| spec.state_name(s).to_string();
        let lt = |l: LetterId| spec.letter_name(l).to_string();
        ProtocolFile {
            format: PROTOCOL_FORMAT.into(),
            name: spec.name.clone(),
            states: spec.states.clone(),
            initial: st(spec.initial),
            yes: st(spec.yes),
            no: st(spec.no),
            alphabet: spec.alphabet.clone(),
            initial_letter: lt(spec.initial_letter),
            bound: spec.bound,
            rules: spec
                .rules
                .iter()
                .map(|r| RuleFile {
                    from: st(r.from),
                    guard: r.guard.conditions.iter().map(|c| (lt(c.letter), c.min, c.max)).collect(),
                    outcomes: r.outcomes.iter().map(|o| (st(o.next), o.emit.letter().map(lt))).collect(),
                })
                .collect(),
        }
    }

    pub fn to_spec(&self) -> Result<ProtocolSpec, IoError> {
        if self.format != PROTOCOL_FORMAT {
            return Err(IoError::Format(format!("unsupported protocol format '{}'", self.format)));
        }
        let lookup = |names: &[String], what: &str, name: &str| {
            names
                .iter()
                .position(|s| s == name)
                .map(|i| i as u16)
                .ok_or_else(|| IoError::Format(format!("unknown {what} '{name}'")))
        };
        let st = |name: &str| lookup(&self.states, "state", name).map(StateId);
        let lt = |name: &str| lookup(&self.alphabet, "letter", name).map(LetterId);
        let mut rules = Vec::with_capacity(self.rules.len());
        for r in &self.rules {
            let conditions = r
                .guard
                .iter()
                .map(|(l, min, max)| Ok(Condition { letter: lt(l)?, min: *min, max: *max }))
                .collect::<Result<_, IoError>>()?;
            let outcomes = r
                .outcomes
                .iter()
                .map(|(to, emit)| {
                    let emit = match emit {
                        None => Emission::Silent,
                        Some(l) => Emission::Letter(lt(l)?),
                    };
                    Ok(Outcome { next: st(to)?, emit })
                })
                .collect::<Result<_, IoError>>()?;
            rules.push(Rule { from: st(&r.from)?, guard: Guard { conditions }, outcomes });
        }
        Ok(ProtocolSpec {
            name: self.name.clone(),
            states: self.states.clone(),
            initial: st(&self.initial)?,
            yes: st(&self.yes)?,
            no: st(&self.no)?,
            alphabet: self.alphabet.clone(),
            initial_letter: lt(&self.initial_letter)?,
            bound: self.bound,
            rules,
        })
    }
}

pub fn export_protocol(spec: &ProtocolSpec) -> String {
    let mut s = serde_json::to_string_pretty(&ProtocolFile::from_spec(spec)).expect("protocol serializes");
    s.push('\n');
    s
}

/// Parses a protocol file. Validation is left to [`crate::engine::Machine::new`].
pub fn import_protocol(text: &str) -> Result<ProtocolSpec, IoError> {
    let file: ProtocolFile = serde_json::from_str(text)?;
    file.to_spec()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mis;

    #[test]
    fn mis_round_trip() {
        let spec = mis::build();
        let text = export_protocol(&spec);
        assert_eq!(import_protocol(&text).unwrap(), spec);
        assert_eq!(export_protocol(&import_protocol(&text).unwrap()), text);
    }

    #[test]
    fn silent_emission_is_null() {
        let file = ProtocolFile::from_spec(&mis::build());
        let stays = file.rules.iter().filter(|r| r.from == "W").flat_map(|r| &r.outcomes);
        assert!(stays.clone().any(|(to, emit)| to == "W" && emit.is_none()));
        assert!(stays.filter(|(to, _)| to != "W").all(|(to, emit)| emit.as_ref() == Some(to)));
    }

    #[test]
    fn unknown_names_are_rejected() {
        let mut file = ProtocolFile::from_spec(&mis::build());
        file.rules[0].guard.push(("Z".into(), 0, 1));
        let err = file.to_spec().unwrap_err();
        assert_eq!(err.to_string(), "unknown letter 'Z'");
        let mut file = ProtocolFile::from_spec(&mis::build());
        file.format = "other/2".into();
        assert!(file.to_spec().is_err());
        assert!(import_protocol("{\"format\":").is_err());
    }
}
