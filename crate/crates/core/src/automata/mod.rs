//! Explicit ω-automata over the alphabet `2^AP`.
//!
//! Letters are bitsets over the automaton's atomic propositions: bit `i` is
//! set iff `ap[i]` holds, so the alphabet is exactly `0..2^|AP|`.

mod determinize;
mod lasso;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use determinize::{determinize_kcba, determinize_kcba_with_budget, Dkcba};
pub use lasso::{lasso_accepted_cba, lasso_accepted_kcba};

/// Bitset over the atomic propositions.
pub type Letter = u32;
/// Dense automaton state id.
pub type AutState = u32;

pub const MAX_PROPOSITIONS: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AutomatonError {
    #[error("unknown automaton state {0}")]
    UnknownState(AutState),
    #[error("letter {letter} outside alphabet of size {size}")]
    UnknownLetter { letter: Letter, size: usize },
    #[error("{count} atomic propositions exceed the supported maximum of {max}")]
    TooManyPropositions { count: usize, max: usize },
    #[error("lasso cycle must be nonempty")]
    EmptyCycle,
    #[error("automaton construction exceeded the state budget of {budget}")]
    CapacityExceeded { budget: usize },
    #[error("automaton must have at least one state")]
    NoStates,
    #[error("visit bound {0} is too large")]
    BoundTooLarge(u32),
    #[error("malformed automaton document: {0}")]
    Malformed(String),
}

/// `(X, Σ, δ, x^I, Acc)` with `Σ = 2^AP`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OmegaAutomaton {
    ap: Vec<String>,
    // delta[x][letter] = sorted successor list
    delta: Vec<Vec<Vec<AutState>>>,
    initial: AutState,
    accepting: Vec<bool>,
}

impl OmegaAutomaton {
    pub fn new(ap: Vec<String>, num_states: usize, initial: AutState) -> Result<Self, AutomatonError> {
        if ap.len() > MAX_PROPOSITIONS {
            return Err(AutomatonError::TooManyPropositions { count: ap.len(), max: MAX_PROPOSITIONS });
        }
        if num_states == 0 {
            return Err(AutomatonError::NoStates);
        }
        if initial as usize >= num_states {
            return Err(AutomatonError::UnknownState(initial));
        }
        let letters = 1usize << ap.len();
        Ok(OmegaAutomaton {
            ap,
            delta: vec![vec![Vec::new(); letters]; num_states],
            initial,
            accepting: vec![false; num_states],
        })
    }

    pub fn ap(&self) -> &[String] {
        &self.ap
    }

    pub fn num_states(&self) -> usize {
        self.delta.len()
    }

    pub fn num_letters(&self) -> usize {
        1 << self.ap.len()
    }

    pub fn initial(&self) -> AutState {
        self.initial
    }

    pub fn is_accepting(&self, x: AutState) -> bool {
        self.accepting[x as usize]
    }

    pub fn accepting_states(&self) -> Vec<AutState> {
        (0..self.num_states() as AutState).filter(|&x| self.is_accepting(x)).collect()
    }

    pub fn successors(&self, x: AutState, letter: Letter) -> &[AutState] {
        &self.delta[x as usize][letter as usize]
    }

    pub fn check_state(&self, x: AutState) -> Result<(), AutomatonError> {
        if (x as usize) < self.num_states() {
            Ok(())
        } else {
            Err(AutomatonError::UnknownState(x))
        }
    }

    pub fn check_letter(&self, letter: Letter) -> Result<(), AutomatonError> {
        if (letter as usize) < self.num_letters() {
            Ok(())
        } else {
            Err(AutomatonError::UnknownLetter { letter, size: self.num_letters() })
        }
    }

    pub fn add_transition(&mut self, from: AutState, letter: Letter, to: AutState) -> Result<(), AutomatonError> {
        self.check_state(from)?;
        self.check_state(to)?;
        self.check_letter(letter)?;
        let succ = &mut self.delta[from as usize][letter as usize];
        if let Err(pos) = succ.binary_search(&to) {
            succ.insert(pos, to);
        }
        Ok(())
    }

    pub fn set_accepting(&mut self, x: AutState, accepting: bool) -> Result<(), AutomatonError> {
        self.check_state(x)?;
        self.accepting[x as usize] = accepting;
        Ok(())
    }

    /// All transitions as `(from, letter, to)` in lexicographic order.
    pub fn transitions(&self) -> impl Iterator<Item = (AutState, Letter, AutState)> + '_ {
        self.delta.iter().enumerate().flat_map(|(x, row)| {
            row.iter().enumerate().flat_map(move |(l, succ)| {
                succ.iter().map(move |&y| (x as AutState, l as Letter, y))
            })
        })
    }

    pub fn num_transitions(&self) -> usize {
        self.delta.iter().flatten().map(Vec::len).sum()
    }

    pub fn is_deterministic(&self) -> bool {
        self.delta.iter().flatten().all(|s| s.len() <= 1)
    }

    pub fn is_complete(&self) -> bool {
        self.delta.iter().flatten().all(|s| !s.is_empty())
    }

    /// Letter of the alphabet corresponding to a set of atom names. Atoms not
    /// in `AP` are ignored.
    pub fn letter_of<'a>(&self, atoms: impl IntoIterator<Item = &'a str>) -> Letter {
        letter_of(&self.ap, atoms)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&AutomatonDoc::from(self)).expect("automaton serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, AutomatonError> {
        let doc: AutomatonDoc =
            serde_json::from_str(text).map_err(|e| AutomatonError::Malformed(e.to_string()))?;
        doc.try_into()
    }
}

/// Bitset letter for the given atoms over `ap`; unknown atoms are ignored.
pub fn letter_of<'a>(ap: &[String], atoms: impl IntoIterator<Item = &'a str>) -> Letter {
    let mut letter = 0;
    for atom in atoms {
        if let Some(i) = ap.iter().position(|p| p == atom) {
            letter |= 1 << i;
        }
    }
    letter
}

/// Atom names set in `letter`, in `ap` order.
pub fn letter_atoms(ap: &[String], letter: Letter) -> Vec<String> {
    ap.iter()
        .enumerate()
        .filter(|(i, _)| letter >> i & 1 == 1)
        .map(|(_, p)| p.clone())
        .collect()
}

/// No transition leaves `subset`.
pub fn is_sink_set(a: &OmegaAutomaton, subset: &[AutState]) -> bool {
    let inside: BTreeSet<AutState> = subset.iter().copied().collect();
    a.transitions()
        .all(|(x, _, y)| !inside.contains(&x) || inside.contains(&y))
}

#[derive(Debug, Serialize, Deserialize)]
struct AutomatonDoc {
    states: usize,
    alphabet: Vec<Vec<String>>,
    transitions: Vec<(AutState, Letter, AutState)>,
    initial: AutState,
    accepting: Vec<AutState>,
}

impl From<&OmegaAutomaton> for AutomatonDoc {
    fn from(a: &OmegaAutomaton) -> Self {
        AutomatonDoc {
            states: a.num_states(),
            alphabet: (0..a.num_letters() as Letter).map(|l| letter_atoms(&a.ap, l)).collect(),
            transitions: a.transitions().collect(),
            initial: a.initial,
            accepting: a.accepting_states(),
        }
    }
}

impl TryFrom<AutomatonDoc> for OmegaAutomaton {
    type Error = AutomatonError;

    fn try_from(doc: AutomatonDoc) -> Result<Self, AutomatonError> {
        let letters = doc.alphabet.len();
        if !letters.is_power_of_two() {
            return Err(AutomatonError::Malformed(format!(
                "alphabet size {letters} is not a power of two"
            )));
        }
        let n_ap = letters.trailing_zeros() as usize;
        let mut ap = Vec::with_capacity(n_ap);
        for i in 0..n_ap {
            match doc.alphabet[1 << i].as_slice() {
                [name] => ap.push(name.clone()),
                other => {
                    return Err(AutomatonError::Malformed(format!(
                        "letter {} should be a single proposition, found {other:?}",
                        1 << i
                    )))
                }
            }
        }
        for (l, atoms) in doc.alphabet.iter().enumerate() {
            if letter_of(&ap, atoms.iter().map(String::as_str)) != l as Letter || atoms.len() != (l as u32).count_ones() as usize {
                return Err(AutomatonError::Malformed(format!("letter {l} does not match its bitset")));
            }
        }
        let mut a = OmegaAutomaton::new(ap, doc.states, doc.initial)?;
        for (x, l, y) in doc.transitions {
            a.add_transition(x, l, y)?;
        }
        for x in doc.accepting {
            a.set_accepting(x, true)?;
        }
        Ok(a)
    }
}


#[cfg(test)]
mod tests {
    use super::fixtures::b1;
    use super::*;

    #[test]
    fn derived_flags() {
        let a = b1();
        assert!(a.is_deterministic());
        assert!(a.is_complete());
        let mut b = a.clone();
        b.add_transition(0, 1, 0).unwrap();
        assert!(!b.is_deterministic());
        let c = OmegaAutomaton::new(vec!["p".into()], 1, 0).unwrap();
        assert!(!c.is_complete());
        assert!(c.is_deterministic());
    }

    #[test]
    fn sink_sets() {
        let a = b1();
        assert!(!is_sink_set(&a, &[1]));
        assert!(is_sink_set(&a, &[0, 1]));
        assert!(is_sink_set(&a, &[]));
    }

    #[test]
    fn construction_errors() {
        assert_eq!(OmegaAutomaton::new(vec![], 0, 0), Err(AutomatonError::NoStates));
        assert_eq!(OmegaAutomaton::new(vec![], 2, 2), Err(AutomatonError::UnknownState(2)));
        let mut a = b1();
        assert_eq!(a.add_transition(0, 2, 0), Err(AutomatonError::UnknownLetter { letter: 2, size: 2 }));
        assert_eq!(a.add_transition(0, 0, 5), Err(AutomatonError::UnknownState(5)));
        let many: Vec<String> = (0..17).map(|i| format!("p{i}")).collect();
        assert!(matches!(OmegaAutomaton::new(many, 1, 0), Err(AutomatonError::TooManyPropositions { .. })));
    }

    #[test]
    fn json_golden_and_round_trip() {
        let a = b1();
        let json = a.to_json();
        let compact: String = json.chars().filter(|c| !c.is_whitespace()).collect();
        assert_eq!(
            compact,
            r#"{"states":2,"alphabet":[[],["p"]],"transitions":[[0,0,0],[0,1,1],[1,0,0],[1,1,1]],"initial":0,"accepting":[1]}"#
        );
        assert_eq!(OmegaAutomaton::from_json(&json).unwrap(), a);
        assert!(OmegaAutomaton::from_json(r#"{"states":1,"alphabet":[[],[]],"transitions":[],"initial":0,"accepting":[]}"#).is_err());
    }

    #[test]
    fn letters_from_atoms() {
        let ap: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        assert_eq!(letter_of(&ap, ["c", "a", "zz"]), 0b101);
        assert_eq!(letter_atoms(&ap, 0b110), vec!["b", "c"]);
    }
}
