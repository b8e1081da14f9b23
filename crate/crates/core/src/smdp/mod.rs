//! Finite semi-Markov decision processes with labeled states.

mod config;
mod grid;

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::automata::{letter_atoms, letter_of, Letter, MAX_PROPOSITIONS};

pub use config::{ScenarioConfig, SmdpTables, TransitionEntry};
pub use grid::{build_gridworld, Cell, DwellMap, GridAction, GridConfig};

pub type StateId = usize;
pub type ActionId = usize;

pub const ROW_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SmdpError {
    #[error("unknown state {0}")]
    UnknownState(StateId),
    #[error("unknown action {0}")]
    UnknownAction(ActionId),
    #[error("action {action} is not enabled in state {state}")]
    ActionNotEnabled { state: StateId, action: ActionId },
    #[error("transition row ({state}, {action}) sums to {sum}")]
    NotStochastic { state: StateId, action: ActionId, sum: f64 },
    #[error("state {0} has no enabled action")]
    DeadEnd(StateId),
    #[error("invalid dwell distribution on ({state}, {action}, {target}): {reason}")]
    InvalidDwell { state: StateId, action: ActionId, target: StateId, reason: String },
    #[error("invalid probability {0}")]
    InvalidProbability(f64),
    #[error("configuration error: {0}")]
    Config(String),
}

/// Dwell-time law of one transition `(s, a, s')`. Times are in abstract
/// seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DwellDistribution {
    Exponential { rate: f64 },
    Empirical { samples: Vec<f64> },
}

impl DwellDistribution {
    pub fn exponential(rate: f64) -> Self {
        DwellDistribution::Exponential { rate }
    }

    fn validate(&self) -> Result<(), String> {
        match self {
            DwellDistribution::Exponential { rate } if !(rate.is_finite() && *rate > 0.0) => {
                Err(format!("rate {rate} must be positive and finite"))
            }
            DwellDistribution::Empirical { samples } if samples.is_empty() => {
                Err("empirical sample list is empty".into())
            }
            DwellDistribution::Empirical { samples } if samples.iter().any(|t| !(t.is_finite() && *t >= 0.0)) => {
                Err("empirical samples must be finite and nonnegative".into())
            }
            _ => Ok(()),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            DwellDistribution::Exponential { rate } => Exp::new(*rate).expect("validated rate").sample(rng),
            DwellDistribution::Empirical { samples } => samples[rng.gen_range(0..samples.len())],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub target: StateId,
    pub prob: f64,
    pub dwell: DwellDistribution,
}

/// `(S, A, T, D, s^I, AP, L)`.
///
/// `T` and `D` are stored sparsely: `rows[s][a]` lists the successors with
/// positive probability together with their dwell laws. An empty row means
/// the action is not enabled in `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct Smdp {
    state_names: Vec<String>,
    action_names: Vec<String>,
    ap: Vec<String>,
    labels: Vec<Letter>,
    rows: Vec<Vec<Vec<Transition>>>,
    initial: StateId,
}

impl Smdp {
    pub fn num_states(&self) -> usize {
        self.state_names.len()
    }

    pub fn num_actions(&self) -> usize {
        self.action_names.len()
    }

    pub fn state_name(&self, s: StateId) -> &str {
        &self.state_names[s]
    }

    pub fn action_name(&self, a: ActionId) -> &str {
        &self.action_names[a]
    }

    pub fn action_names(&self) -> &[String] {
        &self.action_names
    }

    pub fn state_id(&self, name: &str) -> Option<StateId> {
        self.state_names.iter().position(|n| n == name)
    }

    pub fn ap(&self) -> &[String] {
        &self.ap
    }

    pub fn initial(&self) -> StateId {
        self.initial
    }

    /// `L(s)` as a bitset over `ap()`.
    pub fn label(&self, s: StateId) -> Letter {
        self.labels[s]
    }

    pub fn label_atoms(&self, s: StateId) -> Vec<String> {
        letter_atoms(&self.ap, self.labels[s])
    }

    pub fn check_state(&self, s: StateId) -> Result<(), SmdpError> {
        if s < self.num_states() {
            Ok(())
        } else {
            Err(SmdpError::UnknownState(s))
        }
    }

    /// `A(s)`, in increasing action id.
    pub fn enabled_actions(&self, s: StateId) -> Result<Vec<ActionId>, SmdpError> {
        self.check_state(s)?;
        Ok((0..self.num_actions()).filter(|&a| !self.rows[s][a].is_empty()).collect())
    }

    pub fn is_enabled(&self, s: StateId, a: ActionId) -> bool {
        s < self.num_states() && a < self.num_actions() && !self.rows[s][a].is_empty()
    }

    /// Successors of `(s, a)` with positive probability. Empty if `a` is not
    /// enabled.
    pub fn successors(&self, s: StateId, a: ActionId) -> &[Transition] {
        &self.rows[s][a]
    }

    pub fn prob(&self, s: StateId, a: ActionId, target: StateId) -> f64 {
        self.rows[s][a].iter().filter(|t| t.target == target).map(|t| t.prob).sum()
    }

    /// Draw `s' ~ T(·|s,a)` and then `τ ~ D(·|s,a,s')`.
    pub fn sample_step<R: Rng + ?Sized>(&self, s: StateId, a: ActionId, rng: &mut R) -> Result<(StateId, f64), SmdpError> {
        self.check_state(s)?;
        if !self.is_enabled(s, a) {
            return Err(SmdpError::ActionNotEnabled { state: s, action: a });
        }
        let t = &self.rows[s][a][pick(&self.rows[s][a], rng)];
        Ok((t.target, t.dwell.sample(rng)))
    }

    /// Run `horizon` steps from `s^I`; `policy` picks the action in each
    /// visited state.
    pub fn simulate<R, P>(&self, horizon: usize, rng: &mut R, mut policy: P) -> Result<Path, SmdpError>
    where
        R: Rng + ?Sized,
        P: FnMut(StateId, &mut R) -> ActionId,
    {
        let mut path = Path::new(self.initial);
        let mut s = self.initial;
        for _ in 0..horizon {
            let a = policy(s, rng);
            let (next, tau) = self.sample_step(s, a, rng)?;
            path.push(a, tau, next);
            s = next;
        }
        Ok(path)
    }

    /// Row-stochasticity, no dead ends, and valid dwell laws.
    pub fn validate(&self) -> Result<(), SmdpError> {
        for s in 0..self.num_states() {
            let mut any = false;
            for a in 0..self.num_actions() {
                let row = &self.rows[s][a];
                if row.is_empty() {
                    continue;
                }
                any = true;
                let sum: f64 = row.iter().map(|t| t.prob).sum();
                if (sum - 1.0).abs() > ROW_TOLERANCE {
                    return Err(SmdpError::NotStochastic { state: s, action: a, sum });
                }
                for t in row {
                    t.dwell.validate().map_err(|reason| SmdpError::InvalidDwell {
                        state: s,
                        action: a,
                        target: t.target,
                        reason,
                    })?;
                }
            }
            if !any {
                return Err(SmdpError::DeadEnd(s));
            }
        }
        Ok(())
    }
}

/// Index of one entry of a probability row, sampled by inversion.
pub(crate) fn pick<R: Rng + ?Sized>(row: &[Transition], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, t) in row.iter().enumerate() {
        acc += t.prob;
        if u < acc {
            return i;
        }
    }
    row.len() - 1
}

/// Incremental construction of an [`Smdp`]; [`SmdpBuilder::build`] validates.
#[derive(Debug, Clone)]
pub struct SmdpBuilder {
    m: Smdp,
}

impl SmdpBuilder {
    pub fn new(state_names: Vec<String>, action_names: Vec<String>, ap: Vec<String>) -> Self {
        let n = state_names.len();
        let k = action_names.len();
        SmdpBuilder {
            m: Smdp {
                state_names,
                action_names,
                ap,
                labels: vec![0; n],
                rows: vec![vec![Vec::new(); k]; n],
                initial: 0,
            },
        }
    }

    pub fn initial(&mut self, s: StateId) -> Result<&mut Self, SmdpError> {
        self.m.check_state(s)?;
        self.m.initial = s;
        Ok(self)
    }

    pub fn label<'a>(&mut self, s: StateId, atoms: impl IntoIterator<Item = &'a str>) -> Result<&mut Self, SmdpError> {
        self.m.check_state(s)?;
        let atoms: Vec<&str> = atoms.into_iter().collect();
        if let Some(bad) = atoms.iter().find(|p| !self.m.ap.iter().any(|q| q == *p)) {
            return Err(SmdpError::Config(format!("label {bad:?} is not an atomic proposition")));
        }
        self.m.labels[s] = letter_of(&self.m.ap, atoms);
        Ok(self)
    }

    /// Add probability mass `prob` for `s -a-> target`; repeated calls for the
    /// same triple accumulate and the last dwell law wins.
    pub fn transition(
        &mut self,
        s: StateId,
        a: ActionId,
        target: StateId,
        prob: f64,
        dwell: DwellDistribution,
    ) -> Result<&mut Self, SmdpError> {
        self.m.check_state(s)?;
        self.m.check_state(target)?;
        if a >= self.m.num_actions() {
            return Err(SmdpError::UnknownAction(a));
        }
        if !(prob.is_finite() && (0.0..=1.0 + ROW_TOLERANCE).contains(&prob)) {
            return Err(SmdpError::InvalidProbability(prob));
        }
        if prob == 0.0 {
            return Ok(self);
        }
        let row = &mut self.m.rows[s][a];
        match row.iter_mut().find(|t| t.target == target) {
            Some(t) => {
                t.prob += prob;
                t.dwell = dwell;
            }
            None => {
                row.push(Transition { target, prob, dwell });
                row.sort_by_key(|t| t.target);
            }
        }
        Ok(self)
    }

    pub fn build(&self) -> Result<Smdp, SmdpError> {
        if self.m.ap.len() > MAX_PROPOSITIONS {
            return Err(SmdpError::Config(format!("at most {MAX_PROPOSITIONS} atomic propositions")));
        }
        if self.m.state_names.is_empty() {
            return Err(SmdpError::Config("no states".into()));
        }
        self.m.validate()?;
        Ok(self.m.clone())
    }
}

/// `s_0 a_0 τ_0 s_1 a_1 τ_1 … s_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub states: Vec<StateId>,
    pub actions: Vec<ActionId>,
    pub dwell: Vec<f64>,
}

impl Path {
    pub fn new(start: StateId) -> Self {
        Path { states: vec![start], actions: Vec::new(), dwell: Vec::new() }
    }

    pub fn push(&mut self, a: ActionId, tau: f64, next: StateId) {
        self.actions.push(a);
        self.dwell.push(tau);
        self.states.push(next);
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn last(&self) -> StateId {
        *self.states.last().expect("path has a start state")
    }

    /// `L(ρ)`, one label per visited state.
    pub fn labels(&self, m: &Smdp) -> Vec<Vec<String>> {
        self.states.iter().map(|&s| m.label_atoms(s)).collect()
    }

    pub fn total_time(&self) -> f64 {
        self.dwell.iter().sum()
    }
}
