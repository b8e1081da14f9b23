//! Conjugate posteriors for transition probabilities (Dirichlet–categorical)
//! and exponential dwell rates (Gamma–exponential).

mod risk;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};
use thiserror::Error;

use crate::smdp::{ActionId, StateId};

pub use risk::{risk_of, DwellLaw, Lomax, RiskFunctional};

pub const DEFAULT_RAW_CAPACITY: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BayesError {
    #[error("pair ({0}, {1}) has no posterior")]
    UntrackedPair(StateId, ActionId),
    #[error("triple ({0}, {1}, {2}) has no posterior")]
    UntrackedTriple(StateId, ActionId, StateId),
    #[error("{moment} of the predictive dwell law does not exist for shape {shape}")]
    MomentUndefined { moment: &'static str, shape: f64 },
    #[error("invalid risk functional: {0}")]
    InvalidFunctional(String),
    #[error("invalid observation: {0}")]
    InvalidObservation(String),
}

/// One observed transition `(s, a, s', τ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub state: usize,
    pub action: ActionId,
    pub next: usize,
    pub tau: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
struct SuccessorStats {
    count: u64,
    total_tau: f64,
}

/// `O`, indexed by `(s, a)`.
///
/// Sufficient statistics (successor counts and summed dwell times) are kept
/// for every tuple. Raw tuples are kept as well up to a capacity, beyond
/// which only the statistics grow.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationStore {
    raw: Vec<Observation>,
    capacity: usize,
    stats: BTreeMap<(usize, ActionId), BTreeMap<usize, SuccessorStats>>,
    total: u64,
    // pairs removed by `remove_pair` whose raw tuples are not compacted away yet
    dropped: BTreeSet<(usize, ActionId)>,
    raw_per_pair: BTreeMap<(usize, ActionId), usize>,
    stale: usize,
}

impl Default for ObservationStore {
    fn default() -> Self {
        Self::with_capacity(DEFAULT_RAW_CAPACITY)
    }
}

impl ObservationStore {
    pub fn with_capacity(capacity: usize) -> Self {
        ObservationStore {
            raw: Vec::new(),
            capacity,
            stats: BTreeMap::new(),
            total: 0,
            dropped: BTreeSet::new(),
            raw_per_pair: BTreeMap::new(),
            stale: 0,
        }
    }

    pub fn push(&mut self, o: Observation) -> Result<(), BayesError> {
        if !(o.tau.is_finite() && o.tau >= 0.0) {
            return Err(BayesError::InvalidObservation(format!("dwell time {}", o.tau)));
        }
        if self.dropped.contains(&(o.state, o.action)) {
            self.compact();
        }
        if self.raw.len() - self.stale < self.capacity {
            self.raw.push(o);
            *self.raw_per_pair.entry((o.state, o.action)).or_default() += 1;
        }
        let e = self.stats.entry((o.state, o.action)).or_default().entry(o.next).or_default();
        e.count += 1;
        e.total_tau += o.tau;
        self.total += 1;
        Ok(())
    }

    /// `|O|`.
    pub fn len(&self) -> u64 {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    /// Retained raw tuples, oldest first.
    pub fn raw(&self) -> impl Iterator<Item = &Observation> + '_ {
        self.raw.iter().filter(|o| !self.dropped.contains(&(o.state, o.action)))
    }

    fn compact(&mut self) {
        let dropped = std::mem::take(&mut self.dropped);
        self.raw.retain(|o| !dropped.contains(&(o.state, o.action)));
        self.stale = 0;
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, ActionId)> + '_ {
        self.stats.keys().copied()
    }

    /// Number of tuples recorded for `(s, a)`.
    pub fn pair_count(&self, s: usize, a: ActionId) -> u64 {
        self.stats.get(&(s, a)).map_or(0, |m| m.values().map(|x| x.count).sum())
    }

    /// Distinct observed successors of `(s, a)`.
    pub fn successors(&self, s: usize, a: ActionId) -> impl Iterator<Item = usize> + '_ {
        self.stats.get(&(s, a)).into_iter().flat_map(|m| m.keys().copied())
    }

    /// `(s', count, Σ τ)` for every observed successor of `(s, a)`.
    pub fn pair_stats(&self, s: usize, a: ActionId) -> Vec<(usize, u64, f64)> {
        self.stats
            .get(&(s, a))
            .map_or_else(Vec::new, |m| m.iter().map(|(&t, st)| (t, st.count, st.total_tau)).collect())
    }

    /// Drop every tuple of `(s, a)`.
    pub fn remove_pair(&mut self, s: usize, a: ActionId) {
        if let Some(m) = self.stats.remove(&(s, a)) {
            self.total -= m.values().map(|x| x.count).sum::<u64>();
        }
        if let Some(n) = self.raw_per_pair.remove(&(s, a)) {
            self.dropped.insert((s, a));
            self.stale += n;
            if 2 * self.stale > self.raw.len() {
                self.compact();
            }
        }
    }

    /// Drop every tuple whose pair fails `keep`.
    pub fn retain_pairs(&mut self, mut keep: impl FnMut(usize, ActionId) -> bool) {
        self.compact();
        self.raw.retain(|o| keep(o.state, o.action));
        self.raw_per_pair.retain(|&(s, a), _| keep(s, a));
        let before: u64 = self.total;
        self.stats.retain(|&(s, a), _| keep(s, a));
        self.total = self.stats.values().flat_map(|m| m.values()).map(|x| x.count).sum();
        debug_assert!(self.total <= before);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Priors {
    /// Symmetric Dirichlet concentration per candidate successor.
    pub dirichlet: f64,
    pub gamma_shape: f64,
    pub gamma_rate: f64,
}

impl Default for Priors {
    fn default() -> Self {
        Priors { dirichlet: 1.0, gamma_shape: 2.0, gamma_rate: 1.0 }
    }
}

/// `h_T(θ | ζ)` for one pair: concentrations over the candidate successors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirichletPosterior {
    pub support: Vec<StateId>,
    pub concentration: Vec<f64>,
}

impl DirichletPosterior {
    pub fn symmetric(support: Vec<StateId>, prior: f64) -> Self {
        let concentration = vec![prior; support.len()];
        DirichletPosterior { support, concentration }
    }

    pub fn observe(&mut self, next: StateId, prior: f64) {
        match self.support.binary_search(&next) {
            Ok(i) => self.concentration[i] += 1.0,
            Err(i) => {
                self.support.insert(i, next);
                self.concentration.insert(i, prior + 1.0);
            }
        }
    }

    /// Dirichlet mean, aligned with `support`.
    pub fn mean(&self) -> Vec<f64> {
        let total: f64 = self.concentration.iter().sum();
        self.concentration.iter().map(|c| c / total).collect()
    }

    /// Differential entropy of the density on the simplex. A single candidate
    /// carries no uncertainty and gets 0.
    pub fn entropy(&self) -> f64 {
        let k = self.concentration.len();
        if k <= 1 {
            return 0.0;
        }
        let a0: f64 = self.concentration.iter().sum();
        let ln_b = self.concentration.iter().map(|&a| ln_gamma(a)).sum::<f64>() - ln_gamma(a0);
        ln_b + (a0 - k as f64) * digamma(a0) - self.concentration.iter().map(|&a| (a - 1.0) * digamma(a)).sum::<f64>()
    }
}

/// `h_D(θ | ζ)` for one triple: `Gamma(shape, rate)` over the exponential
/// rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaPosterior {
    pub shape: f64,
    pub rate: f64,
}

impl GammaPosterior {
    pub fn observe(&mut self, tau: f64) {
        self.shape += 1.0;
        self.rate += tau;
    }

    pub fn predictive(&self) -> Lomax {
        Lomax { shape: self.shape, scale: self.rate }
    }

    pub fn mean_rate(&self) -> f64 {
        self.shape / self.rate
    }

    pub fn entropy(&self) -> f64 {
        let k = self.shape;
        k - self.rate.ln() + ln_gamma(k) + (1.0 - k) * digamma(k)
    }
}

/// Posteriors over the SMDP's `T` and `D`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PosteriorStore {
    pub priors: Priors,
    transitions: BTreeMap<(StateId, ActionId), DirichletPosterior>,
    dwell: BTreeMap<(StateId, ActionId, StateId), GammaPosterior>,
}

impl PosteriorStore {
    pub fn new(priors: Priors) -> Self {
        PosteriorStore { priors, transitions: BTreeMap::new(), dwell: BTreeMap::new() }
    }

    /// Start tracking `(s, a)` with the given candidate successors.
    pub fn declare(&mut self, s: StateId, a: ActionId, support: impl IntoIterator<Item = StateId>) {
        let prior = self.priors.dirichlet;
        let post = self
            .transitions
            .entry((s, a))
            .or_insert_with(|| DirichletPosterior::symmetric(Vec::new(), prior));
        for t in support {
            if let Err(i) = post.support.binary_search(&t) {
                post.support.insert(i, t);
                post.concentration.insert(i, prior);
            }
        }
    }

    /// Sequential conjugate update with one observation.
    pub fn observe(&mut self, s: StateId, a: ActionId, next: StateId, tau: f64) {
        let prior = self.priors;
        self.transitions
            .entry((s, a))
            .or_insert_with(|| DirichletPosterior::symmetric(Vec::new(), prior.dirichlet))
            .observe(next, prior.dirichlet);
        self.dwell
            .entry((s, a, next))
            .or_insert(GammaPosterior { shape: prior.gamma_shape, rate: prior.gamma_rate })
            .observe(tau);
    }

    /// Conjugate update with `count` transitions to `next` whose dwell times
    /// sum to `total_tau`.
    pub fn observe_batch(&mut self, s: StateId, a: ActionId, next: StateId, count: u64, total_tau: f64) {
        if count == 0 {
            return;
        }
        let prior = self.priors;
        let post = self
            .transitions
            .entry((s, a))
            .or_insert_with(|| DirichletPosterior::symmetric(Vec::new(), prior.dirichlet));
        post.observe(next, prior.dirichlet);
        let i = post.support.binary_search(&next).expect("just observed");
        post.concentration[i] += count as f64 - 1.0;
        let g = self
            .dwell
            .entry((s, a, next))
            .or_insert(GammaPosterior { shape: prior.gamma_shape, rate: prior.gamma_rate });
        g.shape += count as f64;
        g.rate += total_tau;
    }

    pub fn is_tracked(&self, s: StateId, a: ActionId) -> bool {
        self.transitions.contains_key(&(s, a))
    }

    pub fn tracked_pairs(&self) -> impl Iterator<Item = (StateId, ActionId)> + '_ {
        self.transitions.keys().copied()
    }

    pub fn transition_posterior(&self, s: StateId, a: ActionId) -> Result<&DirichletPosterior, BayesError> {
        self.transitions.get(&(s, a)).ok_or(BayesError::UntrackedPair(s, a))
    }

    pub fn dwell_posterior(&self, s: StateId, a: ActionId, next: StateId) -> Result<GammaPosterior, BayesError> {
        if !self.is_tracked(s, a) {
            return Err(BayesError::UntrackedTriple(s, a, next));
        }
        match self.dwell.get(&(s, a, next)) {
            Some(g) => Ok(*g),
            // declared but never observed: the prior
            None if self.transitions[&(s, a)].support.contains(&next) => {
                Ok(GammaPosterior { shape: self.priors.gamma_shape, rate: self.priors.gamma_rate })
            }
            None => Err(BayesError::UntrackedTriple(s, a, next)),
        }
    }

    /// `T̃(·|s,a)` as `(s', probability)` pairs in increasing `s'`.
    pub fn predictive_transition(&self, s: StateId, a: ActionId) -> Result<Vec<(StateId, f64)>, BayesError> {
        let post = self.transition_posterior(s, a)?;
        Ok(post.support.iter().copied().zip(post.mean()).collect())
    }

    /// `D̃(·|s,a,s')`.
    pub fn predictive_dwell(&self, s: StateId, a: ActionId, next: StateId) -> Result<Lomax, BayesError> {
        Ok(self.dwell_posterior(s, a, next)?.predictive())
    }

    pub fn transition_entropy(&self, s: StateId, a: ActionId) -> Result<f64, BayesError> {
        Ok(self.transition_posterior(s, a)?.entropy())
    }

    pub fn dwell_entropy(&self, s: StateId, a: ActionId, next: StateId) -> Result<f64, BayesError> {
        Ok(self.dwell_posterior(s, a, next)?.entropy())
    }

    /// `H[h_T] + (1/n) Σ_{s'} H[h_D]` over the candidate successors, with `n`
    /// the number of observed distinct successors (at least 1). An untracked
    /// pair scores as a single successor under the priors.
    pub fn exploration_score(&self, s: StateId, a: ActionId) -> f64 {
        let Ok(post) = self.transition_posterior(s, a) else {
            return GammaPosterior { shape: self.priors.gamma_shape, rate: self.priors.gamma_rate }.entropy();
        };
        let observed = post.support.iter().filter(|&&t| self.dwell.contains_key(&(s, a, t))).count().max(1);
        let dwell: f64 = post
            .support
            .iter()
            .map(|&t| self.dwell_entropy(s, a, t).expect("support entries are tracked"))
            .sum();
        post.entropy() + dwell / observed as f64
    }

    pub fn to_json(&self) -> serde_json::Value {
        let pairs: Vec<_> = self
            .transitions
            .iter()
            .map(|(&(s, a), d)| serde_json::json!({"state": s, "action": a, "support": d.support, "concentration": d.concentration}))
            .collect();
        let triples: Vec<_> = self
            .dwell
            .iter()
            .map(|(&(s, a, t), g)| serde_json::json!({"state": s, "action": a, "next": t, "shape": g.shape, "rate": g.rate}))
            .collect();
        serde_json::json!({"priors": self.priors, "transitions": pairs, "dwell": triples})
    }

    pub fn from_json(doc: &serde_json::Value) -> Result<Self, BayesError> {
        #[derive(Deserialize)]
        struct PairDoc {
            state: StateId,
            action: ActionId,
            support: Vec<StateId>,
            concentration: Vec<f64>,
        }
        #[derive(Deserialize)]
        struct TripleDoc {
            state: StateId,
            action: ActionId,
            next: StateId,
            shape: f64,
            rate: f64,
        }
        #[derive(Deserialize)]
        struct Doc {
            priors: Priors,
            transitions: Vec<PairDoc>,
            dwell: Vec<TripleDoc>,
        }
        let doc: Doc = serde_json::from_value(doc.clone()).map_err(|e| BayesError::InvalidObservation(e.to_string()))?;
        let mut out = PosteriorStore::new(doc.priors);
        for p in doc.transitions {
            out.transitions.insert(
                (p.state, p.action),
                DirichletPosterior { support: p.support, concentration: p.concentration },
            );
        }
        for t in doc.dwell {
            out.dwell.insert((t.state, t.action, t.next), GammaPosterior { shape: t.shape, rate: t.rate });
        }
        Ok(out)
    }
}

/// Conjugate update from the statistics of every pair accepted by `keep`.
///
/// Store keys may live in a larger space than the posterior's (product
/// states, say); `project` maps them to SMDP states and counts from pairs
/// with the same projection are pooled. `declared` adds candidate
/// successors that keep prior mass without observations.
pub fn update_posteriors(
    store: &ObservationStore,
    priors: Priors,
    mut keep: impl FnMut(usize, ActionId) -> bool,
    project: impl Fn(usize) -> StateId,
    declared: impl Fn(StateId, ActionId) -> Vec<StateId>,
) -> PosteriorStore {
    let mut out = PosteriorStore::new(priors);
    for (&(s, a), succ) in &store.stats {
        if !keep(s, a) {
            continue;
        }
        let (ps, pa) = (project(s), a);
        if !out.is_tracked(ps, pa) {
            out.declare(ps, pa, declared(ps, pa));
        }
        for (&t, st) in succ {
            out.observe_batch(ps, pa, project(t), st.count, st.total_tau);
        }
    }
    out
}
