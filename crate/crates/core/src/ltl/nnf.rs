use super::LtlFormula;

/// Negation normal form. `F x` becomes `true U x`, `G x` becomes
/// `false R x` and implications are expanded.
pub fn to_nnf(phi: &LtlFormula) -> LtlFormula {
    nnf(phi, false)
}

fn nnf(phi: &LtlFormula, negated: bool) -> LtlFormula {
    use LtlFormula::*;
    match (phi, negated) {
        (True, false) | (False, true) => True,
        (True, true) | (False, false) => False,
        (Atom(_), false) => phi.clone(),
        (Atom(_), true) => LtlFormula::not(phi.clone()),
        (Not(x), _) => nnf(x, !negated),
        (And(l, r), false) => LtlFormula::and(nnf(l, false), nnf(r, false)),
        (And(l, r), true) => LtlFormula::or(nnf(l, true), nnf(r, true)),
        (Or(l, r), false) => LtlFormula::or(nnf(l, false), nnf(r, false)),
        (Or(l, r), true) => LtlFormula::and(nnf(l, true), nnf(r, true)),
        (Implies(l, r), false) => LtlFormula::or(nnf(l, true), nnf(r, false)),
        (Implies(l, r), true) => LtlFormula::and(nnf(l, false), nnf(r, true)),
        (Next(x), _) => LtlFormula::next(nnf(x, negated)),
        (Until(l, r), false) => LtlFormula::until(nnf(l, false), nnf(r, false)),
        (Until(l, r), true) => LtlFormula::release(nnf(l, true), nnf(r, true)),
        (Release(l, r), false) => LtlFormula::release(nnf(l, false), nnf(r, false)),
        (Release(l, r), true) => LtlFormula::until(nnf(l, true), nnf(r, true)),
        (Eventually(x), false) => LtlFormula::until(True, nnf(x, false)),
        (Eventually(x), true) => LtlFormula::release(False, nnf(x, true)),
        (Globally(x), false) => LtlFormula::release(False, nnf(x, false)),
        (Globally(x), true) => LtlFormula::until(True, nnf(x, true)),
    }
}
