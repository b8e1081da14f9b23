use super::LtlFormula;
use crate::automata::Letter;

/// Evaluate `phi` on the ultimately periodic word `stem · cycle^ω`.
///
/// Letters are bitsets over `ap` (bit `i` set iff `ap[i]` holds). Atoms not in
/// `ap` are false everywhere. Every suffix of a lasso word is determined by a
/// position in `0..stem.len() + cycle.len()`, so each subformula is evaluated
/// as a set of positions; `U` is a least and `R` a greatest fixpoint.
///
/// This evaluator works directly on the satisfaction relation and is used as
/// the reference against which automaton translations are checked.
///
/// # Panics
/// If `cycle` is empty.
pub fn holds_on_lasso(phi: &LtlFormula, ap: &[String], stem: &[Letter], cycle: &[Letter]) -> bool {
    assert!(!cycle.is_empty(), "lasso cycle must be nonempty");
    let word: Vec<Letter> = stem.iter().chain(cycle.iter()).copied().collect();
    let ctx = Lasso { ap, word: &word, loop_start: stem.len() };
    ctx.eval(phi)[0]
}

struct Lasso<'a> {
    ap: &'a [String],
    word: &'a [Letter],
    loop_start: usize,
}

impl Lasso<'_> {
    fn next(&self, i: usize) -> usize {
        if i + 1 < self.word.len() {
            i + 1
        } else {
            self.loop_start
        }
    }

    fn until(&self, l: &[bool], r: &[bool]) -> Vec<bool> {
        let mut sat = r.to_vec();
        loop {
            let mut changed = false;
            for i in 0..sat.len() {
                if !sat[i] && l[i] && sat[self.next(i)] {
                    sat[i] = true;
                    changed = true;
                }
            }
            if !changed {
                return sat;
            }
        }
    }

    fn release(&self, l: &[bool], r: &[bool]) -> Vec<bool> {
        let mut sat = r.to_vec();
        loop {
            let mut changed = false;
            for i in 0..sat.len() {
                if sat[i] && !l[i] && !sat[self.next(i)] {
                    sat[i] = false;
                    changed = true;
                }
            }
            if !changed {
                return sat;
            }
        }
    }

    fn eval(&self, phi: &LtlFormula) -> Vec<bool> {
        use LtlFormula::*;
        let n = self.word.len();
        match phi {
            True => vec![true; n],
            False => vec![false; n],
            Atom(name) => match self.ap.iter().position(|p| p == name) {
                Some(bit) => self.word.iter().map(|&w| w >> bit & 1 == 1).collect(),
                None => vec![false; n],
            },
            Not(x) => self.eval(x).into_iter().map(|b| !b).collect(),
            And(l, r) => zip(self.eval(l), self.eval(r), |a, b| a && b),
            Or(l, r) => zip(self.eval(l), self.eval(r), |a, b| a || b),
            Implies(l, r) => zip(self.eval(l), self.eval(r), |a, b| !a || b),
            Next(x) => {
                let inner = self.eval(x);
                (0..n).map(|i| inner[self.next(i)]).collect()
            }
            Until(l, r) => self.until(&self.eval(l), &self.eval(r)),
            Release(l, r) => self.release(&self.eval(l), &self.eval(r)),
            Eventually(x) => self.until(&vec![true; n], &self.eval(x)),
            Globally(x) => self.release(&vec![false; n], &self.eval(x)),
        }
    }
}

fn zip(a: Vec<bool>, b: Vec<bool>, f: impl Fn(bool, bool) -> bool) -> Vec<bool> {
    a.into_iter().zip(b).map(|(x, y)| f(x, y)).collect()
}
