//! Acceptance of lasso words `stem · cycle^ω`.
//!
//! Both checks explore the finite run graph whose nodes are pairs
//! (automaton state, word position), where positions past the end of the
//! cycle wrap back to the start of the cycle. They work on the
//! nondeterministic automaton directly and never go through the
//! determinization, so they can serve as its reference.

use std::collections::VecDeque;

use crate::graph::on_cycle;

use super::{AutState, AutomatonError, Letter, OmegaAutomaton};

struct RunGraph<'a> {
    a: &'a OmegaAutomaton,
    word: Vec<Letter>,
    loop_start: usize,
}

impl<'a> RunGraph<'a> {
    fn new(a: &'a OmegaAutomaton, stem: &[Letter], cycle: &[Letter]) -> Result<Self, AutomatonError> {
        if cycle.is_empty() {
            return Err(AutomatonError::EmptyCycle);
        }
        for &l in stem.iter().chain(cycle) {
            a.check_letter(l)?;
        }
        Ok(RunGraph {
            a,
            word: stem.iter().chain(cycle).copied().collect(),
            loop_start: stem.len(),
        })
    }

    fn len(&self) -> usize {
        self.word.len()
    }

    fn next_pos(&self, i: usize) -> usize {
        if i + 1 < self.word.len() {
            i + 1
        } else {
            self.loop_start
        }
    }

    fn node(&self, x: AutState, i: usize) -> usize {
        x as usize * self.len() + i
    }

    fn successors(&self, x: AutState, i: usize) -> impl Iterator<Item = (AutState, usize)> + '_ {
        let j = self.next_pos(i);
        self.a.successors(x, self.word[i]).iter().map(move |&y| (y, j))
    }

    fn reachable_from(&self, start: (AutState, usize)) -> Vec<bool> {
        let mut seen = vec![false; self.a.num_states() * self.len()];
        let mut queue = VecDeque::from([start]);
        seen[self.node(start.0, start.1)] = true;
        while let Some((x, i)) = queue.pop_front() {
            for (y, j) in self.successors(x, i) {
                let n = self.node(y, j);
                if !seen[n] {
                    seen[n] = true;
                    queue.push_back((y, j));
                }
            }
        }
        seen
    }
}

/// Universal co-Büchi acceptance: every run visits accepting states only
/// finitely often.
///
/// Some run visits an accepting state infinitely often iff an accepting node
/// of the run graph is reachable and lies on a cycle.
pub fn lasso_accepted_cba(a: &OmegaAutomaton, stem: &[Letter], cycle: &[Letter]) -> Result<bool, AutomatonError> {
    let g = RunGraph::new(a, stem, cycle)?;
    let reach = g.reachable_from((a.initial(), 0));
    let n = a.num_states() * g.len();
    let mut adj = vec![Vec::new(); n];
    for x in 0..a.num_states() as AutState {
        for i in 0..g.len() {
            if reach[g.node(x, i)] {
                adj[g.node(x, i)] = g.successors(x, i).map(|(y, j)| g.node(y, j)).collect();
            }
        }
    }
    let cyclic = on_cycle(&adj);
    let infinitely_often = a
        .accepting_states()
        .into_iter()
        .any(|x| (0..g.len()).any(|i| reach[g.node(x, i)] && cyclic[g.node(x, i)]));
    Ok(!infinitely_often)
}

/// K-co-Büchi acceptance: every run makes at most `k` visits to accepting
/// states in total.
///
/// Runs are followed one by one with a visit counter saturating at `k + 1`;
/// the word is rejected iff a counter value of `k + 1` is reachable. A run
/// that gets stuck on a missing transition keeps the visits it made, which
/// matches reading a missing transition as a move to a non-accepting trap.
pub fn lasso_accepted_kcba(a: &OmegaAutomaton, k: u32, stem: &[Letter], cycle: &[Letter]) -> Result<bool, AutomatonError> {
    let g = RunGraph::new(a, stem, cycle)?;
    let cap = k as usize + 1;
    let levels = cap + 1;
    let idx = |x: AutState, i: usize, c: usize| g.node(x, i) * levels + c;
    let mut seen = vec![false; a.num_states() * g.len() * levels];
    let c0 = usize::from(a.is_accepting(a.initial())).min(cap);
    if c0 == cap {
        return Ok(false);
    }
    let mut queue = VecDeque::from([(a.initial(), 0usize, c0)]);
    seen[idx(a.initial(), 0, c0)] = true;
    while let Some((x, i, c)) = queue.pop_front() {
        for (y, j) in g.successors(x, i) {
            let d = (c + usize::from(a.is_accepting(y))).min(cap);
            if d == cap {
                return Ok(false);
            }
            let n = idx(y, j, d);
            if !seen[n] {
                seen[n] = true;
                queue.push_back((y, j, d));
            }
        }
    }
    Ok(true)
}
