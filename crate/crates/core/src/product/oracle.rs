//! Exact model-based answers on a known product, used as test oracles.

use nalgebra::{DMatrix, DVector};

use super::{ProdState, ProductSmdp};
use crate::smdp::ActionId;

pub const REACH_TOLERANCE: f64 = 1e-12;
const DENSE_SOLVE_LIMIT: usize = 3000;

/// `W` and `W_p` as membership tables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WinningRegion {
    states: Vec<bool>,
    pairs: Vec<Vec<bool>>,
    num_states: usize,
    num_pairs: usize,
}

impl WinningRegion {
    pub fn new(states: Vec<bool>, pairs: Vec<Vec<bool>>) -> Self {
        let num_states = states.iter().filter(|&&x| x).count();
        let num_pairs = pairs.iter().flatten().filter(|&&x| x).count();
        WinningRegion { states, pairs, num_states, num_pairs }
    }

    /// Set one pair and refresh the membership of its state.
    pub fn set_pair(&mut self, p: ProdState, a: ActionId, allowed: bool) {
        if self.pairs[p][a] != allowed {
            self.pairs[p][a] = allowed;
            if allowed {
                self.num_pairs += 1;
            } else {
                self.num_pairs -= 1;
            }
        }
        let inside = self.pairs[p].iter().any(|&x| x);
        if self.states[p] != inside {
            self.states[p] = inside;
            if inside {
                self.num_states += 1;
            } else {
                self.num_states -= 1;
            }
        }
    }

    pub fn contains(&self, p: ProdState) -> bool {
        self.states[p]
    }

    pub fn allows(&self, p: ProdState, a: ActionId) -> bool {
        self.pairs[p][a]
    }

    pub fn membership(&self) -> &[bool] {
        &self.states
    }

    pub fn pair_membership(&self) -> &[Vec<bool>] {
        &self.pairs
    }

    pub fn allowed_actions(&self, p: ProdState) -> impl Iterator<Item = ActionId> + '_ {
        self.pairs[p].iter().enumerate().filter(|(_, &x)| x).map(|(a, _)| a)
    }

    pub fn state_ids(&self) -> Vec<ProdState> {
        (0..self.states.len()).filter(|&p| self.states[p]).collect()
    }

    pub fn pair_ids(&self) -> Vec<(ProdState, ActionId)> {
        let mut out = Vec::new();
        for (p, row) in self.pairs.iter().enumerate() {
            for (a, &x) in row.iter().enumerate() {
                if x {
                    out.push((p, a));
                }
            }
        }
        out
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_pairs(&self) -> usize {
        self.num_pairs
    }
}

/// Greatest fixpoint of "has an action whose whole support stays inside",
/// starting from `S⊗ \ Acc⊗`.
pub fn exact_winning_region(p: &ProductSmdp) -> WinningRegion {
    let n = p.num_states();
    let mut w: Vec<bool> = (0..n).map(|s| !p.is_accepting(s)).collect();
    let safe = |w: &[bool], s: ProdState, a: ActionId| {
        p.is_enabled(s, a) && p.successor_states(s, a).iter().all(|&t| w[t])
    };
    loop {
        let mut changed = false;
        for s in 0..n {
            if w[s] && !(0..p.num_actions()).any(|a| safe(&w, s, a)) {
                w[s] = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let pairs = (0..n)
        .map(|s| (0..p.num_actions()).map(|a| w[s] && safe(&w, s, a)).collect())
        .collect();
    WinningRegion::new(w, pairs)
}

/// States from which `target` cannot be reached under any policy.
pub fn prob0_max(p: &ProductSmdp, target: &[bool]) -> Vec<bool> {
    let reach = backward_reach(p, target, |_, _| true);
    reach.iter().map(|&r| !r).collect()
}

fn backward_reach(p: &ProductSmdp, target: &[bool], allowed: impl Fn(ProdState, ActionId) -> bool) -> Vec<bool> {
    let n = p.num_states();
    let mut pred = vec![Vec::new(); n];
    for s in 0..n {
        for a in p.enabled_actions(s) {
            if allowed(s, a) {
                for &t in p.successor_states(s, a) {
                    pred[t].push(s);
                }
            }
        }
    }
    let mut seen = target.to_vec();
    let mut stack: Vec<ProdState> = (0..n).filter(|&s| target[s]).collect();
    while let Some(t) = stack.pop() {
        for &s in &pred[t] {
            if !seen[s] {
                seen[s] = true;
                stack.push(s);
            }
        }
    }
    seen
}

/// States from which some policy reaches `target` with probability one.
fn prob1_max(p: &ProductSmdp, target: &[bool]) -> Vec<bool> {
    let n = p.num_states();
    let mut u = vec![true; n];
    loop {
        let mut r = target.to_vec();
        loop {
            let mut grew = false;
            for s in 0..n {
                if r[s] || !u[s] {
                    continue;
                }
                let ok = p.enabled_actions(s).any(|a| {
                    let succ = p.successor_states(s, a);
                    succ.iter().all(|&t| u[t]) && succ.iter().any(|&t| r[t])
                });
                if ok {
                    r[s] = true;
                    grew = true;
                }
            }
            if !grew {
                break;
            }
        }
        if r == u {
            return u;
        }
        u = r;
    }
}

/// `max_π Pr_π(reach target)` for every product state, by value iteration
/// after fixing the states with value 0 and 1 exactly.
pub fn exact_max_reach_probability(p: &ProductSmdp, target: &[bool]) -> Vec<f64> {
    let zero = prob0_max(p, target);
    let one = prob1_max(p, target);
    let n = p.num_states();
    let mut v: Vec<f64> = (0..n).map(|s| if one[s] { 1.0 } else { 0.0 }).collect();
    let open: Vec<ProdState> = (0..n).filter(|&s| !zero[s] && !one[s]).collect();
    loop {
        let mut residual: f64 = 0.0;
        for &s in &open {
            let best = p
                .enabled_actions(s)
                .map(|a| p.transitions(s, a).map(|(t, pr)| pr * v[t]).sum::<f64>())
                .fold(0.0, f64::max);
            residual = residual.max((best - v[s]).abs());
            v[s] = best;
        }
        if residual < REACH_TOLERANCE {
            return v;
        }
    }
}

/// `Pr_π(reach target)` under a positional policy, by a linear solve.
/// `policy[s]` is only read outside `target`.
pub fn policy_reach_probability(p: &ProductSmdp, policy: &[ActionId], target: &[bool]) -> Vec<f64> {
    let n = p.num_states();
    let reach = backward_reach(p, target, |s, a| !target[s] && policy[s] == a);
    let open: Vec<ProdState> = (0..n).filter(|&s| reach[s] && !target[s]).collect();
    let mut col = vec![usize::MAX; n];
    for (i, &s) in open.iter().enumerate() {
        col[s] = i;
    }
    let mut v: Vec<f64> = (0..n).map(|s| if target[s] { 1.0 } else { 0.0 }).collect();
    if open.is_empty() {
        return v;
    }
    // x = P_open x + b, b = one-step mass into target
    if open.len() <= DENSE_SOLVE_LIMIT {
        let m = open.len();
        let mut a = DMatrix::<f64>::identity(m, m);
        let mut b = DVector::<f64>::zeros(m);
        for (i, &s) in open.iter().enumerate() {
            for (t, pr) in p.transitions(s, policy[s]) {
                if target[t] {
                    b[i] += pr;
                } else if col[t] != usize::MAX {
                    a[(i, col[t])] -= pr;
                }
            }
        }
        let x = a.lu().solve(&b).expect("reach system is nonsingular once prob-0 states are removed");
        for (i, &s) in open.iter().enumerate() {
            v[s] = x[i].clamp(0.0, 1.0);
        }
    } else {
        loop {
            let mut residual: f64 = 0.0;
            for &s in &open {
                let x: f64 = p.transitions(s, policy[s]).map(|(t, pr)| pr * v[t]).sum();
                residual = residual.max((x - v[s]).abs());
                v[s] = x;
            }
            if residual < REACH_TOLERANCE {
                break;
            }
        }
    }
    v
}
