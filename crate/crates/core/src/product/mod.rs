//! Product of an SMDP with a dKcBA.
//!
//! A product state `(s, q)` pairs an SMDP state with the automaton state
//! reached after reading the labels of every state visited so far,
//! including `s` itself. Moving to `s'` therefore steps the automaton on
//! `L(s')`, and the initial state is `(s^I, Δ(q^I, L(s^I)))`.

mod oracle;

use std::collections::{HashMap, VecDeque};
use std::sync::Arc;

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::automata::{AutState, Dkcba, Letter};
use crate::smdp::{pick, ActionId, Smdp, StateId, Transition};

pub use oracle::{
    exact_max_reach_probability, exact_winning_region, policy_reach_probability, prob0_max, WinningRegion,
    REACH_TOLERANCE,
};

pub type ProdState = usize;

pub const DEFAULT_PRODUCT_BUDGET: usize = 10_000_000;

// largest |S|·|Q| for which `lookup` uses a flat table instead of the hash map
const DENSE_INDEX_LIMIT: usize = 1 << 24;
const ABSENT: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProductError {
    #[error("automaton proposition {0:?} is not an SMDP proposition")]
    AlphabetMismatch(String),
    #[error("product exceeded the state budget of {0}")]
    CapacityExceeded(usize),
}

/// `(S⊗, A⊗, T⊗, D⊗, s⊗I, Acc⊗)` restricted to states reachable from the
/// initial state.
///
/// `rows[p][a]` is aligned with `smdp.successors(s, a)`: entry `i` is the
/// product successor entered via the `i`-th SMDP successor, so dwell laws
/// and probabilities are read from the SMDP row.
#[derive(Debug, Clone)]
pub struct ProductSmdp {
    smdp: Arc<Smdp>,
    automaton: Arc<Dkcba>,
    // automaton letter of each SMDP state
    letters: Vec<Letter>,
    states: Vec<(StateId, AutState)>,
    index: HashMap<(StateId, AutState), ProdState>,
    dense: Option<Vec<u32>>,
    rows: Vec<Vec<Vec<ProdState>>>,
    accepting: Vec<bool>,
    initial: ProdState,
}

impl ProductSmdp {
    pub fn build(smdp: Arc<Smdp>, automaton: Arc<Dkcba>) -> Result<Self, ProductError> {
        Self::build_with_budget(smdp, automaton, DEFAULT_PRODUCT_BUDGET)
    }

    pub fn build_with_budget(smdp: Arc<Smdp>, automaton: Arc<Dkcba>, budget: usize) -> Result<Self, ProductError> {
        let letters = translate_labels(&smdp, &automaton)?;
        let mut p = ProductSmdp {
            smdp: smdp.clone(),
            automaton: automaton.clone(),
            letters: letters.clone(),
            states: Vec::new(),
            index: HashMap::new(),
            dense: None,
            rows: Vec::new(),
            accepting: Vec::new(),
            initial: 0,
        };
        let s0 = smdp.initial();
        let start = (s0, automaton.step(automaton.initial(), letters[s0]));
        p.intern(start);
        let mut queue = VecDeque::from([0usize]);
        while let Some(id) = queue.pop_front() {
            let (s, q) = p.states[id];
            let mut row = vec![Vec::new(); smdp.num_actions()];
            for (a, succ) in row.iter_mut().enumerate() {
                for t in smdp.successors(s, a) {
                    let key = (t.target, automaton.step(q, letters[t.target]));
                    let next = match p.index.get(&key) {
                        Some(&n) => n,
                        None => {
                            if p.states.len() >= budget {
                                return Err(ProductError::CapacityExceeded(budget));
                            }
                            let n = p.intern(key);
                            queue.push_back(n);
                            n
                        }
                    };
                    succ.push(next);
                }
            }
            p.rows[id] = row;
        }
        let cells = smdp.num_states() * automaton.num_states();
        if cells <= DENSE_INDEX_LIMIT && p.states.len() < ABSENT as usize {
            let mut dense = vec![ABSENT; cells];
            for (id, &(s, q)) in p.states.iter().enumerate() {
                dense[s * automaton.num_states() + q as usize] = id as u32;
            }
            p.dense = Some(dense);
        }
        Ok(p)
    }

    fn intern(&mut self, key: (StateId, AutState)) -> ProdState {
        let id = self.states.len();
        self.states.push(key);
        self.index.insert(key, id);
        self.rows.push(Vec::new());
        self.accepting.push(self.automaton.is_accepting(key.1));
        id
    }

    pub fn smdp(&self) -> &Arc<Smdp> {
        &self.smdp
    }

    pub fn automaton(&self) -> &Arc<Dkcba> {
        &self.automaton
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn num_actions(&self) -> usize {
        self.smdp.num_actions()
    }

    pub fn initial(&self) -> ProdState {
        self.initial
    }

    pub fn components(&self, p: ProdState) -> (StateId, AutState) {
        self.states[p]
    }

    pub fn smdp_state(&self, p: ProdState) -> StateId {
        self.states[p].0
    }

    pub fn lookup(&self, s: StateId, q: AutState) -> Option<ProdState> {
        match &self.dense {
            Some(d) => {
                let id = d[s * self.automaton.num_states() + q as usize];
                (id != ABSENT).then_some(id as ProdState)
            }
            None => self.index.get(&(s, q)).copied(),
        }
    }

    /// Membership in `Acc⊗ = S × Acc_d`.
    pub fn is_accepting(&self, p: ProdState) -> bool {
        self.accepting[p]
    }

    pub fn accepting(&self) -> &[bool] {
        &self.accepting
    }

    pub fn is_enabled(&self, p: ProdState, a: ActionId) -> bool {
        !self.rows[p][a].is_empty()
    }

    /// `A⊗(p) = A(s)`.
    pub fn enabled_actions(&self, p: ProdState) -> impl Iterator<Item = ActionId> + '_ {
        (0..self.num_actions()).filter(move |&a| self.is_enabled(p, a))
    }

    /// Product successors of `(p, a)`, aligned with [`Self::smdp_row`].
    pub fn successor_states(&self, p: ProdState, a: ActionId) -> &[ProdState] {
        &self.rows[p][a]
    }

    pub fn smdp_row(&self, p: ProdState, a: ActionId) -> &[Transition] {
        self.smdp.successors(self.states[p].0, a)
    }

    /// `(p', T⊗(p'|p,a))` pairs. Distinct SMDP successors always give
    /// distinct product successors, so no entry repeats.
    pub fn transitions(&self, p: ProdState, a: ActionId) -> impl Iterator<Item = (ProdState, f64)> + '_ {
        self.rows[p][a].iter().zip(self.smdp_row(p, a)).map(|(&n, t)| (n, t.prob))
    }

    /// Product state entered from `p` when the SMDP moves to `s'`.
    pub fn successor_of(&self, p: ProdState, a: ActionId, target: StateId) -> Option<ProdState> {
        self.smdp_row(p, a).iter().position(|t| t.target == target).map(|i| self.rows[p][a][i])
    }

    /// Product state entered from `p` when the SMDP moves to `s'`, whether or
    /// not `T(s'|s,a) > 0`. `None` if that state was never materialized.
    pub fn lift(&self, p: ProdState, target: StateId) -> Option<ProdState> {
        let q = self.states[p].1;
        self.lookup(target, self.automaton.step(q, self.letters[target]))
    }

    /// One simulator step: `(p', τ)` with `τ` drawn from the SMDP dwell law.
    pub fn sample_step<R: Rng + ?Sized>(&self, p: ProdState, a: ActionId, rng: &mut R) -> (ProdState, StateId, f64) {
        let row = self.smdp_row(p, a);
        assert!(!row.is_empty(), "action {a} is not enabled in product state {p}");
        let i = pick(row, rng);
        (self.rows[p][a][i], row[i].target, row[i].dwell.sample(rng))
    }

    pub fn describe(&self, p: ProdState) -> String {
        let (s, q) = self.states[p];
        format!("{}/q{}", self.smdp.state_name(s), q)
    }

    pub fn to_json(&self, region: Option<&WinningRegion>) -> serde_json::Value {
        #[derive(Serialize)]
        struct StateDoc<'a> {
            id: ProdState,
            state: &'a str,
            automaton: AutState,
            accepting: bool,
        }
        let states: Vec<StateDoc> = (0..self.num_states())
            .map(|p| StateDoc {
                id: p,
                state: self.smdp.state_name(self.states[p].0),
                automaton: self.states[p].1,
                accepting: self.accepting[p],
            })
            .collect();
        let mut doc = serde_json::json!({
            "states": states,
            "initial": self.initial,
            "actions": self.smdp.action_names(),
        });
        if let Some(w) = region {
            doc["W"] = serde_json::json!(w.state_ids());
            doc["W_p"] = serde_json::json!(w.pair_ids());
        }
        doc
    }
}

/// Automaton letter of every SMDP state.
fn translate_labels(smdp: &Smdp, automaton: &Dkcba) -> Result<Vec<Letter>, ProductError> {
    let mut bit = Vec::new();
    for name in automaton.ap() {
        match smdp.ap().iter().position(|x| x == name) {
            Some(j) => bit.push(j),
            None => return Err(ProductError::AlphabetMismatch(name.clone())),
        }
    }
    Ok((0..smdp.num_states())
        .map(|s| {
            let label = smdp.label(s);
            bit.iter().enumerate().filter(|(_, &j)| label >> j & 1 == 1).fold(0, |acc, (i, _)| acc | 1 << i)
        })
        .collect())
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;
    use crate::automata::determinize_kcba;
    use crate::ltl::{ltl_to_cba, parse_ltl};
    use crate::smdp::fixtures::m1;

    pub fn dka(formula: &str, k: u32) -> Arc<Dkcba> {
        let b = ltl_to_cba(&parse_ltl(formula).unwrap()).unwrap();
        Arc::new(determinize_kcba(&b, k).unwrap())
    }

    /// M1 × det(B_{G !c}, 0).
    pub fn m1_product() -> ProductSmdp {
        ProductSmdp::build(Arc::new(m1()), dka("G !c", 0)).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;
    use crate::rng::stream;
    use crate::smdp::{build_gridworld, fixtures::m1, GridConfig};

    #[test]
    fn m1_product_shape() {
        let p = m1_product();
        // (s0, safe) and (s1, sink)
        assert_eq!(p.num_states(), 2);
        assert!(!p.is_accepting(p.initial()));
        let bad = p.successor_states(p.initial(), 1)[0];
        assert!(p.is_accepting(bad));
        assert_eq!(p.smdp_state(bad), 1);
        assert_eq!(p.successor_states(p.initial(), 0), [p.initial()]);
        assert_eq!(p.successor_states(bad, 0), [bad]);
        assert!(p.accepting().iter().any(|&x| x));
    }

    #[test]
    fn trivial_automaton_gives_isomorphic_product() {
        let p = ProductSmdp::build(Arc::new(m1()), dka("true", 0)).unwrap();
        assert_eq!(p.num_states(), 2);
        assert!(p.accepting().iter().all(|&x| !x));
    }

    #[test]
    fn alphabet_mismatch() {
        let err = ProductSmdp::build(Arc::new(m1()), dka("G !d", 0)).unwrap_err();
        assert_eq!(err, ProductError::AlphabetMismatch("d".into()));
    }

    #[test]
    fn initial_state_reads_its_own_label() {
        // starting in a c-labeled state violates G !c immediately
        let mut b = crate::smdp::SmdpBuilder::new(vec!["s0".into()], vec!["a".into()], vec!["c".into()]);
        b.transition(0, 0, 0, 1.0, crate::smdp::DwellDistribution::exponential(1.0)).unwrap();
        b.label(0, ["c"]).unwrap();
        let p = ProductSmdp::build(Arc::new(b.build().unwrap()), dka("G !c", 0)).unwrap();
        assert!(p.is_accepting(p.initial()));
    }

    #[test]
    fn grid_product_rows_are_stochastic() {
        let m = Arc::new(build_gridworld(&GridConfig::desk()).unwrap());
        let p = ProductSmdp::build(m, dka("G F a & G F b & G !c", 5)).unwrap();
        assert!(p.num_states() <= 1000, "{} states", p.num_states());
        for s in 0..p.num_states() {
            for a in p.enabled_actions(s) {
                let sum: f64 = p.transitions(s, a).map(|(_, pr)| pr).sum();
                assert!((sum - 1.0).abs() < 1e-9);
            }
        }
        let mut rng = stream(3, &[]);
        let (n, s, tau) = p.sample_step(p.initial(), 0, &mut rng);
        assert_eq!(p.smdp_state(n), s);
        assert!(tau >= 0.0);
        assert_eq!(p.lift(p.initial(), s), Some(n));
    }

    #[test]
    fn json_export_lists_states() {
        let p = m1_product();
        let w = exact_winning_region(&p);
        let doc = p.to_json(Some(&w));
        assert_eq!(doc["states"].as_array().unwrap().len(), 2);
        assert_eq!(doc["W"], serde_json::json!([0]));
        assert_eq!(doc["W_p"], serde_json::json!([[0, 0]]));
    }
}
