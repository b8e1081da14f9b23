//! Linear temporal logic: syntax tree, parser, negation normal form, a direct
//! lasso-word evaluator and the tableau translation into a universal
//! co-Büchi automaton.

mod nnf;
mod parser;
mod semantics;
mod tableau;

use std::collections::BTreeSet;
use std::fmt;

pub use nnf::to_nnf;
pub use parser::{parse_ltl, ParseError};
pub use semantics::holds_on_lasso;
pub use tableau::{ltl_to_cba, ltl_to_cba_over, TableauOptions, DEFAULT_STATE_BUDGET};

/// LTL formula abstract syntax tree.
///
/// `Release` never comes out of the parser; it is introduced by [`to_nnf`]
/// as the dual of `Until`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LtlFormula {
    True,
    False,
    Atom(String),
    Not(Box<LtlFormula>),
    And(Box<LtlFormula>, Box<LtlFormula>),
    Or(Box<LtlFormula>, Box<LtlFormula>),
    Implies(Box<LtlFormula>, Box<LtlFormula>),
    Next(Box<LtlFormula>),
    Until(Box<LtlFormula>, Box<LtlFormula>),
    Release(Box<LtlFormula>, Box<LtlFormula>),
    Eventually(Box<LtlFormula>),
    Globally(Box<LtlFormula>),
}

impl LtlFormula {
    pub fn atom(name: impl Into<String>) -> Self {
        LtlFormula::Atom(name.into())
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(f: LtlFormula) -> Self {
        LtlFormula::Not(Box::new(f))
    }

    pub fn and(l: LtlFormula, r: LtlFormula) -> Self {
        LtlFormula::And(Box::new(l), Box::new(r))
    }

    pub fn or(l: LtlFormula, r: LtlFormula) -> Self {
        LtlFormula::Or(Box::new(l), Box::new(r))
    }

    pub fn implies(l: LtlFormula, r: LtlFormula) -> Self {
        LtlFormula::Implies(Box::new(l), Box::new(r))
    }

    pub fn next(f: LtlFormula) -> Self {
        LtlFormula::Next(Box::new(f))
    }

    pub fn until(l: LtlFormula, r: LtlFormula) -> Self {
        LtlFormula::Until(Box::new(l), Box::new(r))
    }

    pub fn release(l: LtlFormula, r: LtlFormula) -> Self {
        LtlFormula::Release(Box::new(l), Box::new(r))
    }

    pub fn eventually(f: LtlFormula) -> Self {
        LtlFormula::Eventually(Box::new(f))
    }

    pub fn globally(f: LtlFormula) -> Self {
        LtlFormula::Globally(Box::new(f))
    }

    /// Sorted, deduplicated atom names occurring in the formula.
    pub fn atoms(&self) -> Vec<String> {
        let mut out = BTreeSet::new();
        self.collect_atoms(&mut out);
        out.into_iter().collect()
    }

    fn collect_atoms(&self, out: &mut BTreeSet<String>) {
        use LtlFormula::*;
        match self {
            True | False => {}
            Atom(name) => {
                out.insert(name.clone());
            }
            Not(f) | Next(f) | Eventually(f) | Globally(f) => f.collect_atoms(out),
            And(l, r) | Or(l, r) | Implies(l, r) | Until(l, r) | Release(l, r) => {
                l.collect_atoms(out);
                r.collect_atoms(out);
            }
        }
    }

    pub fn depth(&self) -> usize {
        use LtlFormula::*;
        match self {
            True | False | Atom(_) => 0,
            Not(f) | Next(f) | Eventually(f) | Globally(f) => 1 + f.depth(),
            And(l, r) | Or(l, r) | Implies(l, r) | Until(l, r) | Release(l, r) => {
                1 + l.depth().max(r.depth())
            }
        }
    }

    /// True when negations sit only on atoms and no `Implies`, `Eventually`
    /// or `Globally` node remains.
    pub fn is_nnf(&self) -> bool {
        use LtlFormula::*;
        match self {
            True | False | Atom(_) => true,
            Not(f) => matches!(**f, Atom(_)),
            Implies(..) | Eventually(_) | Globally(_) => false,
            Next(f) => f.is_nnf(),
            And(l, r) | Or(l, r) | Until(l, r) | Release(l, r) => l.is_nnf() && r.is_nnf(),
        }
    }

    fn is_leaf_or_unary(&self) -> bool {
        use LtlFormula::*;
        matches!(
            self,
            True | False | Atom(_) | Not(_) | Next(_) | Eventually(_) | Globally(_)
        )
    }
}

/// Canonical printer: binary operators are always parenthesised so that
/// `parse_ltl(&f.to_string()) == f` for every parser-producible formula.
/// `Release` has no concrete syntax and is printed through its dual.
impl fmt::Display for LtlFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use LtlFormula::*;
        fn unary(f: &mut fmt::Formatter<'_>, op: &str, arg: &LtlFormula) -> fmt::Result {
            if arg.is_leaf_or_unary() {
                write!(f, "{op}{arg}")
            } else {
                write!(f, "{op}({arg})")
            }
        }
        match self {
            True => write!(f, "true"),
            False => write!(f, "false"),
            Atom(name) => write!(f, "{name}"),
            Not(x) => unary(f, "!", x),
            Next(x) => unary(f, "X ", x),
            Eventually(x) => unary(f, "F ", x),
            Globally(x) => unary(f, "G ", x),
            And(l, r) => write!(f, "({l} & {r})"),
            Or(l, r) => write!(f, "({l} | {r})"),
            Implies(l, r) => write!(f, "({l} -> {r})"),
            Until(l, r) => write!(f, "({l} U {r})"),
            Release(l, r) => write!(f, "!(!({l}) U !({r}))"),
        }
    }
}
