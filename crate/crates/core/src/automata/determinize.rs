use std::collections::{HashMap, VecDeque};

use super::{AutState, AutomatonError, Letter, OmegaAutomaton};

pub const DEFAULT_DETERMINIZE_BUDGET: usize = 1_000_000;

/// Deterministic complete automaton obtained from a K-co-Büchi automaton by
/// subset construction with per-state visit counters.
///
/// Every state other than the sink is a counting function `X -> {-1, ..., K}`
/// (`-1` meaning "no run is here"). All functions with some counter above `K`
/// are collapsed into the single accepting sink, which is the only
/// accepting state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dkcba {
    ap: Vec<String>,
    k: u32,
    functions: Vec<Option<Vec<i16>>>,
    delta: Vec<Vec<AutState>>,
    initial: AutState,
    sink: AutState,
}

impl Dkcba {
    pub fn ap(&self) -> &[String] {
        &self.ap
    }

    pub fn bound(&self) -> u32 {
        self.k
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

    /// The singleton accepting sink `Acc_d`.
    pub fn sink(&self) -> AutState {
        self.sink
    }

    pub fn is_accepting(&self, q: AutState) -> bool {
        q == self.sink
    }

    pub fn step(&self, q: AutState, letter: Letter) -> AutState {
        self.delta[q as usize][letter as usize]
    }

    /// Counting function of a non-sink state; `None` for the sink.
    pub fn counting_function(&self, q: AutState) -> Option<&[i16]> {
        self.functions[q as usize].as_deref()
    }

    /// States reachable from the initial state.
    pub fn reachable(&self) -> Vec<bool> {
        let mut seen = vec![false; self.num_states()];
        let mut queue = VecDeque::from([self.initial]);
        seen[self.initial as usize] = true;
        while let Some(q) = queue.pop_front() {
            for &r in &self.delta[q as usize] {
                if !seen[r as usize] {
                    seen[r as usize] = true;
                    queue.push_back(r);
                }
            }
        }
        seen
    }

    /// The same automaton as an explicit [`OmegaAutomaton`] with
    /// `Acc = {sink}`.
    pub fn to_automaton(&self) -> OmegaAutomaton {
        let mut a = OmegaAutomaton::new(self.ap.clone(), self.num_states(), self.initial)
            .expect("dkcba has a valid shape");
        for (q, row) in self.delta.iter().enumerate() {
            for (l, &r) in row.iter().enumerate() {
                a.add_transition(q as AutState, l as Letter, r).expect("in range");
            }
        }
        a.set_accepting(self.sink, true).expect("in range");
        a
    }
}

/// Determinize `(B, k)` with the default state budget.
pub fn determinize_kcba(b: &OmegaAutomaton, k: u32) -> Result<Dkcba, AutomatonError> {
    determinize_kcba_with_budget(b, k, DEFAULT_DETERMINIZE_BUDGET)
}

/// Counting-function subset construction.
///
/// `F^I(x^I) = [x^I ∈ Acc]`, `F^I(x) = -1` elsewhere, and
/// `Δ(F,σ)(x') = max { min(k+1, F(x) + [x' ∈ Acc]) | (x,σ,x') ∈ δ, F(x) ≠ -1 }`
/// with `max ∅ = -1`. Only reachable functions are built, ids follow BFS
/// discovery order. Functions that exceed `k` anywhere become the sink; so do
/// functions with a live run in an accepting state that loops to itself on
/// every letter, since that run exceeds any bound on every continuation.
pub fn determinize_kcba_with_budget(b: &OmegaAutomaton, k: u32, budget: usize) -> Result<Dkcba, AutomatonError> {
    if k > i16::MAX as u32 - 2 {
        return Err(AutomatonError::BoundTooLarge(k));
    }
    let n = b.num_states();
    let letters = b.num_letters();
    let cap = k as i16 + 1;
    let doomed: Vec<bool> = (0..n as AutState)
        .map(|x| b.is_accepting(x) && (0..letters as Letter).all(|l| b.successors(x, l).contains(&x)))
        .collect();
    let is_sink = |f: &[i16]| f.iter().zip(&doomed).any(|(&c, &d)| c >= cap || (d && c >= 0));

    let mut functions: Vec<Option<Vec<i16>>> = Vec::new();
    let mut delta: Vec<Vec<AutState>> = Vec::new();
    let mut index: HashMap<Vec<i16>, AutState> = HashMap::new();
    let mut sink: Option<AutState> = None;
    let mut queue = VecDeque::new();

    let mut intern = |f: Vec<i16>,
                      functions: &mut Vec<Option<Vec<i16>>>,
                      delta: &mut Vec<Vec<AutState>>,
                      queue: &mut VecDeque<AutState>|
     -> Result<AutState, AutomatonError> {
        if is_sink(&f) {
            if let Some(s) = sink {
                return Ok(s);
            }
        } else if let Some(&q) = index.get(&f) {
            return Ok(q);
        }
        if functions.len() >= budget {
            return Err(AutomatonError::CapacityExceeded { budget });
        }
        let q = functions.len() as AutState;
        if is_sink(&f) {
            sink = Some(q);
            functions.push(None);
            delta.push(vec![q; letters]);
        } else {
            index.insert(f.clone(), q);
            functions.push(Some(f));
            delta.push(Vec::new());
            queue.push_back(q);
        }
        Ok(q)
    };

    let mut f0 = vec![-1i16; n];
    f0[b.initial() as usize] = i16::from(b.is_accepting(b.initial()));
    let initial = intern(f0, &mut functions, &mut delta, &mut queue)?;

    while let Some(q) = queue.pop_front() {
        let f = functions[q as usize].clone().expect("queued states are not the sink");
        let mut row = Vec::with_capacity(letters);
        for l in 0..letters as Letter {
            let mut g = vec![-1i16; n];
            for (x, &c) in f.iter().enumerate() {
                if c < 0 {
                    continue;
                }
                for &y in b.successors(x as AutState, l) {
                    let v = (c + i16::from(b.is_accepting(y))).min(cap);
                    let slot = &mut g[y as usize];
                    *slot = (*slot).max(v);
                }
            }
            row.push(intern(g, &mut functions, &mut delta, &mut queue)?);
        }
        delta[q as usize] = row;
    }

    let sink = match sink {
        Some(s) => s,
        None => {
            if functions.len() >= budget {
                return Err(AutomatonError::CapacityExceeded { budget });
            }
            let s = functions.len() as AutState;
            functions.push(None);
            delta.push(vec![s; letters]);
            s
        }
    };

    Ok(Dkcba { ap: b.ap().to_vec(), k, functions, delta, initial, sink })
}
