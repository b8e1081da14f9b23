//! Tableau translation of LTL into a universal co-Büchi automaton.
//!
//! The negated formula is put in negation normal form and expanded into a
//! transition-based generalized Büchi automaton whose states are sets of
//! pending obligations (one acceptance set per `U` subformula). After
//! degeneralization with a level counter, the resulting Büchi automaton
//! accepts exactly the words violating the formula. Read with universal
//! co-Büchi acceptance, the same structure accepts exactly the words that
//! satisfy it.

use std::collections::{BTreeSet, HashMap, VecDeque};

use super::{to_nnf, LtlFormula};
use crate::graph::tarjan_scc;
use crate::automata::{AutState, AutomatonError, Letter, OmegaAutomaton, MAX_PROPOSITIONS};

pub const DEFAULT_STATE_BUDGET: usize = 1_000_000;

#[derive(Debug, Clone)]
pub struct TableauOptions {
    /// Upper bound on tableau states and on automaton states.
    pub state_budget: usize,
    /// Drop states that cannot contribute infinitely many accepting visits
    /// and un-mark accepting states that lie on no cycle. Neither change
    /// affects the co-Büchi language.
    pub trim: bool,
}

impl Default for TableauOptions {
    fn default() -> Self {
        TableauOptions { state_budget: DEFAULT_STATE_BUDGET, trim: true }
    }
}

/// Universal co-Büchi automaton over `2^atoms(phi)` accepting exactly the
/// words that satisfy `phi`.
pub fn ltl_to_cba(phi: &LtlFormula) -> Result<OmegaAutomaton, AutomatonError> {
    ltl_to_cba_over(phi, &phi.atoms(), &TableauOptions::default())
}

/// As [`ltl_to_cba`] but over a caller-chosen proposition list, which must
/// contain every atom of `phi`; extra propositions are unconstrained.
pub fn ltl_to_cba_over(phi: &LtlFormula, ap: &[String], opts: &TableauOptions) -> Result<OmegaAutomaton, AutomatonError> {
    if ap.len() > MAX_PROPOSITIONS {
        return Err(AutomatonError::TooManyPropositions { count: ap.len(), max: MAX_PROPOSITIONS });
    }
    for atom in phi.atoms() {
        if !ap.contains(&atom) {
            return Err(AutomatonError::Malformed(format!("atom `{atom}` missing from the proposition list")));
        }
    }
    let negated = to_nnf(&LtlFormula::not(phi.clone()));
    let closure = Closure::build(&negated, ap);
    let gba = closure.generalized(opts.state_budget)?;
    let nba = degeneralize(&gba, closure.untils.len(), opts.state_budget)?;
    let nba = if opts.trim { trim(&nba) } else { nba };
    nba.into_automaton(ap.to_vec())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Node {
    True,
    False,
    Lit { bit: u32, positive: bool },
    And(usize, usize),
    Or(usize, usize),
    Next(usize),
    Until(usize, usize),
    Release(usize, usize),
}

struct Closure {
    nodes: Vec<Node>,
    root: usize,
    /// Node id of every `U` subformula, in order of interning.
    untils: Vec<usize>,
}

/// One way of meeting the current obligations for a single step.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct Cover {
    pos: Letter,
    neg: Letter,
    next: BTreeSet<usize>,
    /// Indices (into `Closure::untils`) of `U` formulas postponed this step.
    postponed: BTreeSet<usize>,
}

struct Gba {
    /// `edges[q]`: (cover literals pos/neg, target, postponed untils)
    edges: Vec<Vec<(Letter, Letter, usize, BTreeSet<usize>)>>,
}

impl Closure {
    fn build(f: &LtlFormula, ap: &[String]) -> Self {
        let mut c = Closure { nodes: Vec::new(), root: 0, untils: Vec::new() };
        let mut ids = HashMap::new();
        c.root = c.intern(f, ap, &mut ids);
        c
    }

    fn intern(&mut self, f: &LtlFormula, ap: &[String], ids: &mut HashMap<Node, usize>) -> usize {
        use LtlFormula as L;
        let node = match f {
            L::True => Node::True,
            L::False => Node::False,
            L::Atom(name) => Node::Lit { bit: bit_of(ap, name), positive: true },
            L::Not(x) => match &**x {
                L::Atom(name) => Node::Lit { bit: bit_of(ap, name), positive: false },
                _ => unreachable!("input is in negation normal form"),
            },
            L::And(l, r) => Node::And(self.intern(l, ap, ids), self.intern(r, ap, ids)),
            L::Or(l, r) => Node::Or(self.intern(l, ap, ids), self.intern(r, ap, ids)),
            L::Next(x) => Node::Next(self.intern(x, ap, ids)),
            L::Until(l, r) => Node::Until(self.intern(l, ap, ids), self.intern(r, ap, ids)),
            L::Release(l, r) => Node::Release(self.intern(l, ap, ids), self.intern(r, ap, ids)),
            L::Implies(..) | L::Eventually(_) | L::Globally(_) => {
                unreachable!("input is in negation normal form")
            }
        };
        if let Some(&id) = ids.get(&node) {
            return id;
        }
        let id = self.nodes.len();
        self.nodes.push(node);
        ids.insert(node, id);
        if matches!(node, Node::Until(..)) {
            self.untils.push(id);
        }
        id
    }

    fn until_index(&self, id: usize) -> usize {
        self.untils.iter().position(|&u| u == id).expect("interned until")
    }

    /// All covers of the obligation set `todo`.
    fn expand(&self, todo: Vec<usize>, done: BTreeSet<usize>, cover: Cover, out: &mut BTreeSet<Cover>) {
        let mut todo = todo;
        let mut done = done;
        let mut cover = cover;
        while let Some(f) = todo.pop() {
            if !done.insert(f) {
                continue;
            }
            match self.nodes[f] {
                Node::True => {}
                Node::False => return,
                Node::Lit { bit, positive } => {
                    let mask = 1 << bit;
                    if positive {
                        if cover.neg & mask != 0 {
                            return;
                        }
                        cover.pos |= mask;
                    } else {
                        if cover.pos & mask != 0 {
                            return;
                        }
                        cover.neg |= mask;
                    }
                }
                Node::And(l, r) => {
                    todo.push(l);
                    todo.push(r);
                }
                Node::Or(l, r) => {
                    let mut left = todo.clone();
                    left.push(l);
                    self.expand(left, done.clone(), cover.clone(), out);
                    todo.push(r);
                }
                Node::Next(x) => {
                    cover.next.insert(x);
                }
                Node::Until(l, r) => {
                    let mut now = todo.clone();
                    now.push(r);
                    self.expand(now, done.clone(), cover.clone(), out);
                    todo.push(l);
                    cover.next.insert(f);
                    cover.postponed.insert(self.until_index(f));
                }
                Node::Release(l, r) => {
                    let mut both = todo.clone();
                    both.push(l);
                    both.push(r);
                    self.expand(both, done.clone(), cover.clone(), out);
                    todo.push(r);
                    cover.next.insert(f);
                }
            }
        }
        out.insert(cover);
    }

    fn generalized(&self, budget: usize) -> Result<Gba, AutomatonError> {
        let mut states: Vec<BTreeSet<usize>> = Vec::new();
        let mut index: HashMap<BTreeSet<usize>, usize> = HashMap::new();
        let mut edges = Vec::new();
        let init: BTreeSet<usize> = [self.root].into();
        index.insert(init.clone(), 0);
        states.push(init);
        let mut queue = VecDeque::from([0usize]);
        while let Some(q) = queue.pop_front() {
            let mut covers = BTreeSet::new();
            let empty = Cover { pos: 0, neg: 0, next: BTreeSet::new(), postponed: BTreeSet::new() };
            self.expand(states[q].iter().copied().collect(), BTreeSet::new(), empty, &mut covers);
            let mut out = Vec::with_capacity(covers.len());
            for c in covers {
                let target = match index.get(&c.next) {
                    Some(&t) => t,
                    None => {
                        if states.len() >= budget {
                            return Err(AutomatonError::CapacityExceeded { budget });
                        }
                        let t = states.len();
                        index.insert(c.next.clone(), t);
                        states.push(c.next.clone());
                        queue.push_back(t);
                        t
                    }
                };
                out.push((c.pos, c.neg, target, c.postponed));
            }
            if edges.len() <= q {
                edges.resize(q + 1, Vec::new());
            }
            edges[q] = out;
        }
        edges.resize(states.len(), Vec::new());
        Ok(Gba { edges })
    }
}

fn bit_of(ap: &[String], name: &str) -> u32 {
    ap.iter().position(|p| p == name).expect("atom checked against ap") as u32
}

/// Explicit Büchi automaton under construction: `succ[q]` lists
/// `(pos, neg, target)` literal-guarded edges.
struct Nba {
    succ: Vec<Vec<(Letter, Letter, usize)>>,
    accepting: Vec<bool>,
}

impl Nba {
    fn into_automaton(self, ap: Vec<String>) -> Result<OmegaAutomaton, AutomatonError> {
        let letters = 1 << ap.len();
        let mut a = OmegaAutomaton::new(ap, self.succ.len(), 0)?;
        for (q, edges) in self.succ.iter().enumerate() {
            for &(pos, neg, t) in edges {
                for l in 0..letters as Letter {
                    if l & pos == pos && l & neg == 0 {
                        a.add_transition(q as AutState, l, t as AutState)?;
                    }
                }
            }
        }
        for (q, &acc) in self.accepting.iter().enumerate() {
            a.set_accepting(q as AutState, acc)?;
        }
        Ok(a)
    }
}

/// Levels `0..m` track which acceptance set is awaited next; level `m`
/// marks that all of them were seen and is the accepting level.
fn degeneralize(gba: &Gba, m: usize, budget: usize) -> Result<Nba, AutomatonError> {
    let mut index: HashMap<(usize, usize), usize> = HashMap::new();
    let mut keys = vec![(0usize, 0usize)];
    index.insert((0, 0), 0);
    let mut succ: Vec<Vec<(Letter, Letter, usize)>> = Vec::new();
    let mut queue = VecDeque::from([0usize]);
    while let Some(id) = queue.pop_front() {
        let (q, level) = keys[id];
        let base = if level == m { 0 } else { level };
        let mut out = Vec::new();
        for (pos, neg, t, postponed) in &gba.edges[q] {
            let mut j = base;
            while j < m && !postponed.contains(&j) {
                j += 1;
            }
            let key = (*t, j);
            let tid = match index.get(&key) {
                Some(&x) => x,
                None => {
                    if keys.len() >= budget {
                        return Err(AutomatonError::CapacityExceeded { budget });
                    }
                    let x = keys.len();
                    index.insert(key, x);
                    keys.push(key);
                    queue.push_back(x);
                    x
                }
            };
            out.push((*pos, *neg, tid));
        }
        out.sort_unstable();
        out.dedup();
        if succ.len() <= id {
            succ.resize(id + 1, Vec::new());
        }
        succ[id] = out;
    }
    succ.resize(keys.len(), Vec::new());
    let accepting = keys.iter().map(|&(_, level)| level == m).collect();
    Ok(Nba { succ, accepting })
}

/// Keep only states from which an accepting state lying on a cycle is
/// reachable (the initial state is always kept), and clear the accepting
/// flag of accepting states that lie on no cycle.
fn trim(nba: &Nba) -> Nba {
    let n = nba.succ.len();
    let adj: Vec<Vec<usize>> = nba
        .succ
        .iter()
        .map(|e| {
            let mut v: Vec<usize> = e.iter().map(|&(_, _, t)| t).collect();
            v.sort_unstable();
            v.dedup();
            v
        })
        .collect();
    let comp = tarjan_scc(&adj);
    let mut comp_size = vec![0usize; n];
    for &c in &comp {
        comp_size[c] += 1;
    }
    let on_cycle = |q: usize| comp_size[comp[q]] > 1 || adj[q].contains(&q);
    let accepting: Vec<bool> = (0..n).map(|q| nba.accepting[q] && on_cycle(q)).collect();

    // backward reachability from recurrent accepting states
    let mut rev = vec![Vec::new(); n];
    for (q, succ) in adj.iter().enumerate() {
        for &t in succ {
            rev[t].push(q);
        }
    }
    let mut useful = accepting.clone();
    let mut stack: Vec<usize> = (0..n).filter(|&q| accepting[q]).collect();
    while let Some(q) = stack.pop() {
        for &p in &rev[q] {
            if !useful[p] {
                useful[p] = true;
                stack.push(p);
            }
        }
    }
    useful[0] = true;
    let mut remap = vec![usize::MAX; n];
    let mut next = 0;
    for q in 0..n {
        if useful[q] {
            remap[q] = next;
            next += 1;
        }
    }
    let succ = (0..n)
        .filter(|&q| useful[q])
        .map(|q| {
            nba.succ[q]
                .iter()
                .filter(|&&(_, _, t)| useful[t])
                .map(|&(p, ng, t)| (p, ng, remap[t]))
                .collect()
        })
        .collect();
    let accepting = (0..n).filter(|&q| useful[q]).map(|q| accepting[q]).collect();
    Nba { succ, accepting }
}
