//! Q-learning of the transient policy outside the learned winning region.
//!
//! Entering `W^∞` ends an episode with value 0. Entering `Acc⊗` ends it with
//! the value of staying there forever, `Σ_t γ_acc^t (1−γ_acc) r_n = r_n`.

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::product::{ProdState, ProductSmdp};
use crate::rng::stream;
use crate::smdp::ActionId;

const PHASE_LABEL: u64 = 2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReachError {
    #[error("invalid reward/discount specification: {0}")]
    Spec(String),
    #[error("invalid schedule: {0}")]
    Schedule(String),
}

/// `R`, `Γ`, `γ`, `γ_acc` and `r_n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardSpec {
    pub gamma: f64,
    pub gamma_acc: f64,
    pub r_n: f64,
}

impl Default for RewardSpec {
    fn default() -> Self {
        RewardSpec { gamma: 0.9999, gamma_acc: 0.9, r_n: -1.0 }
    }
}

impl RewardSpec {
    pub fn validate(&self) -> Result<(), ReachError> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(ReachError::Spec(format!("gamma {} outside (0, 1)", self.gamma)));
        }
        if !(self.gamma_acc > 0.0 && self.gamma_acc < 1.0) {
            return Err(ReachError::Spec(format!("gamma_acc {} outside (0, 1)", self.gamma_acc)));
        }
        if !(self.r_n < 0.0 && self.r_n.is_finite()) {
            return Err(ReachError::Spec(format!("r_n {} must be negative", self.r_n)));
        }
        Ok(())
    }

    /// `R(s) = (1−γ_acc) r_n` on `Acc⊗`, 0 elsewhere.
    pub fn reward(&self, prod: &ProductSmdp, p: ProdState) -> f64 {
        if prod.is_accepting(p) {
            (1.0 - self.gamma_acc) * self.r_n
        } else {
            0.0
        }
    }

    /// `Γ(s) = γ_acc` on `Acc⊗`, `γ` elsewhere.
    pub fn discount(&self, prod: &ProductSmdp, p: ProdState) -> f64 {
        if prod.is_accepting(p) {
            self.gamma_acc
        } else {
            self.gamma
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransientConfig {
    pub episodes: usize,
    pub step_cap: usize,
    /// Probability of a uniformly random action at each step.
    pub epsilon: f64,
    /// `c` in the learning rate `α_i = c / (c + i)` of the `i`-th update of a pair.
    pub rate_c: f64,
}

impl Default for TransientConfig {
    fn default() -> Self {
        TransientConfig { episodes: 5000, step_cap: 4000, epsilon: 0.3, rate_c: 10.0 }
    }
}

impl TransientConfig {
    pub fn validate(&self) -> Result<(), ReachError> {
        if !(self.rate_c > 0.0 && self.rate_c.is_finite()) {
            return Err(ReachError::Schedule(format!("rate constant {} must be positive", self.rate_c)));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(ReachError::Schedule(format!("epsilon {} outside [0, 1]", self.epsilon)));
        }
        if self.step_cap == 0 {
            return Err(ReachError::Schedule("step_cap must be at least 1".into()));
        }
        Ok(())
    }
}

/// `Q̃*_γ` on `S⊗ \ W^∞`, with per-pair visit counts.
#[derive(Debug, Clone, PartialEq)]
pub struct TransientQ {
    num_actions: usize,
    values: Vec<f64>,
    visits: Vec<u64>,
    enabled: Vec<bool>,
    transient: Vec<bool>,
    /// Sup-norm change of `Q` over the last tenth of the episodes.
    pub tail_change: f64,
    pub updates: u64,
    pub truncated_episodes: usize,
}

impl TransientQ {
    fn new(prod: &ProductSmdp, w_inf: &[bool], spec: &RewardSpec) -> Self {
        let m = prod.num_actions();
        let n = prod.num_states();
        let mut values = vec![0.0; n * m];
        let mut enabled = vec![false; n * m];
        for p in 0..n {
            for a in 0..m {
                enabled[p * m + a] = prod.is_enabled(p, a);
                if prod.is_accepting(p) {
                    values[p * m + a] = spec.r_n;
                }
            }
        }
        TransientQ {
            num_actions: m,
            values,
            visits: vec![0; n * m],
            enabled,
            transient: w_inf.iter().map(|&x| !x).collect(),
            tail_change: 0.0,
            updates: 0,
            truncated_episodes: 0,
        }
    }

    pub fn is_transient(&self, p: ProdState) -> bool {
        self.transient[p]
    }

    pub fn get(&self, p: ProdState, a: ActionId) -> f64 {
        self.values[p * self.num_actions + a]
    }

    pub fn visits(&self, p: ProdState, a: ActionId) -> u64 {
        self.visits[p * self.num_actions + a]
    }

    pub fn enabled(&self, p: ProdState) -> impl Iterator<Item = ActionId> + '_ {
        (0..self.num_actions).filter(move |&a| self.enabled[p * self.num_actions + a])
    }

    pub fn max(&self, p: ProdState) -> f64 {
        self.enabled(p).map(|a| self.get(p, a)).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Enabled action with the largest value, lowest id on ties.
    pub fn greedy(&self, p: ProdState) -> ActionId {
        let mut best = None;
        for a in self.enabled(p) {
            match best {
                Some((_, v)) if self.get(p, a) <= v => {}
                _ => best = Some((a, self.get(p, a))),
            }
        }
        best.expect("every product state has an enabled action").0
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// One-step target for `(s, a) → s'`.
fn target(q: &TransientQ, prod: &ProductSmdp, spec: &RewardSpec, next: ProdState) -> f64 {
    if !q.transient[next] {
        0.0
    } else if prod.is_accepting(next) {
        spec.r_n
    } else {
        spec.reward(prod, next) + spec.discount(prod, next) * q.max(next)
    }
}

/// Tabular Q-learning with `R`, `Γ` and the rate `α_i = c/(c+i)`.
///
/// Episodes start round-robin over the transient non-accepting states, follow
/// an ε-greedy policy, and stop on entering `W^∞` or `Acc⊗`, or after
/// `step_cap` steps.
pub fn qlearn_transient(
    prod: &ProductSmdp,
    w_inf: &[bool],
    spec: &RewardSpec,
    cfg: &TransientConfig,
    seed: u64,
) -> Result<TransientQ, ReachError> {
    spec.validate()?;
    cfg.validate()?;
    let mut q = TransientQ::new(prod, w_inf, spec);
    let starts: Vec<ProdState> = (0..prod.num_states()).filter(|&p| q.transient[p] && !prod.is_accepting(p)).collect();
    if starts.is_empty() {
        return Ok(q);
    }
    let mut rng = stream(seed, &[PHASE_LABEL]);
    let m = q.num_actions;
    let tail_from = cfg.episodes - cfg.episodes / 10;
    let mut snapshot = None;
    for episode in 0..cfg.episodes {
        if episode == tail_from {
            snapshot = Some(q.values.clone());
        }
        let mut p = starts[episode % starts.len()];
        let mut steps = 0;
        loop {
            if steps == cfg.step_cap {
                q.truncated_episodes += 1;
                break;
            }
            let a = if rng.gen::<f64>() < cfg.epsilon {
                let enabled: Vec<ActionId> = q.enabled(p).collect();
                enabled[rng.gen_range(0..enabled.len())]
            } else {
                q.greedy(p)
            };
            let (next, _, _) = prod.sample_step(p, a, &mut rng);
            let i = p * m + a;
            let rate = cfg.rate_c / (cfg.rate_c + q.visits[i] as f64);
            let t = target(&q, prod, spec, next);
            q.values[i] = ((1.0 - rate) * q.values[i] + rate * t).clamp(spec.r_n, 0.0);
            q.visits[i] += 1;
            q.updates += 1;
            steps += 1;
            if !q.transient[next] || prod.is_accepting(next) {
                break;
            }
            p = next;
        }
    }
    if let Some(old) = snapshot {
        q.tail_change = old.iter().zip(&q.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    }
    Ok(q)
}

/// `π̃_tr(s) ∈ argmax_a Q(s,a)` on transient states, lowest id on ties.
pub fn extract_pi_tr(q: &TransientQ) -> Vec<Option<ActionId>> {
    (0..q.transient.len()).map(|p| q.transient[p].then(|| q.greedy(p))).collect()
}
